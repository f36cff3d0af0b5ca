"""Monte Carlo logical error rates, Wilson intervals and threshold crossings.

Trials are cut into fixed chunks of ``CHUNK`` samples; chunk ``j`` reads
stream ``EVAL_STREAM + j``. The chunking does not depend on the number of
workers, so failure totals are identical for any worker count.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .channel import ErrorStream, NoiseParams, label_errors
from .color_code import ColorCode
from .homology import SyndromeMismatch, final_correction, homology_class

CHUNK = 10_000
EVAL_STREAM = 2_000_000
Z95 = 1.959963984540054

CSV_COLUMNS = ["code", "decoder", "p_err", "trials", "failures", "rate", "ci_lo", "ci_hi", "seed"]


class NoCrossing(ValueError):
    pass


def wilson_interval(failures: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials <= 0:
        raise ValueError("trials must be positive")
    phat = failures / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if failures == 0 else max(0.0, centre - half)
    hi = 1.0 if failures == trials else min(1.0, centre + half)
    return lo, hi


@dataclass
class EvalRow:
    code: str
    decoder: str
    p_err: float
    trials: int
    failures: int
    rate: float
    ci_lo: float
    ci_hi: float
    seed: int

    @property
    def interval(self) -> tuple[float, float]:
        return (self.ci_lo, self.ci_hi)

    def overlaps(self, other: "EvalRow") -> bool:
        return self.ci_lo <= other.ci_hi and other.ci_lo <= self.ci_hi


def decoder_name(decoder) -> str:
    return getattr(decoder, "decoder_id", type(decoder).__name__)


def _for_rate(decoder, p_err):
    """Decoders exposing a ``p_err`` parameter get a copy tuned to ``p_err``."""
    get_params = getattr(decoder, "get_params", None)
    if get_params is not None and "p_err" in get_params(deep=False):
        from sklearn.base import clone

        return clone(decoder).set_params(p_err=p_err)
    return decoder


def count_failures(code: ColorCode, decoder, e: np.ndarray) -> int:
    """Decode a batch of errors and count logical failures.

    Raises:
        SyndromeMismatch: if any correction disagrees with the error's syndrome.
    """
    s, _, _ = label_errors(code, e)
    classes = np.asarray(decoder.predict_homology(s), dtype=np.int64)
    corr = final_correction(code, s, classes)
    residual = e ^ corr
    if code.syndrome(residual).any():
        raise SyndromeMismatch("decoder produced a correction with the wrong syndrome")
    return int((homology_class(code, residual, check=False) != 0).sum())


def _run_chunk(args):
    code, decoder, p_err, seed, j, count = args
    e = ErrorStream(code.n, NoiseParams(p_err, seed, EVAL_STREAM + j)).take(0, count)
    return count_failures(code, decoder, e)


def evaluate(code: ColorCode, decoder, p_err: float, trials: int, seed: int = 0, workers: int = 1) -> EvalRow:
    """Logical error rate of ``decoder`` under bit-flip noise at ``p_err``.

    ``decoder`` needs a ``predict_homology(syndromes)`` method returning the
    predicted residual class per row.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    decoder = _for_rate(decoder, p_err)
    tasks = [
        (code, decoder, p_err, seed, j, min(CHUNK, trials - j * CHUNK))
        for j in range(math.ceil(trials / CHUNK))
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            failures = sum(pool.map(_run_chunk, tasks))
    else:
        failures = sum(map(_run_chunk, tasks))
    lo, hi = wilson_interval(failures, trials)
    return EvalRow(
        code=str(code.params),
        decoder=decoder_name(decoder),
        p_err=float(p_err),
        trials=trials,
        failures=failures,
        rate=failures / trials,
        ci_lo=lo,
        ci_hi=hi,
        seed=seed,
    )


def sweep(code: ColorCode, decoder, p_list, trials: int, seed: int = 0, workers: int = 1) -> list[EvalRow]:
    return [evaluate(code, decoder, p, trials, seed, workers) for p in p_list]


def write_csv(target, rows, header_lines=()) -> None:
    """Write rows to a path or an open text file."""
    if hasattr(target, "write"):
        _write_rows(target, rows, header_lines)
        return
    with open(target, "w", newline="") as fh:
        _write_rows(fh, rows, header_lines)


def _write_rows(fh, rows, header_lines) -> None:
    for line in header_lines:
        fh.write(f"# {line}\n")
    w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        d = asdict(row)
        for key in ("rate", "ci_lo", "ci_hi"):
            d[key] = f"{d[key]:.6g}"
        w.writerow(d)


def read_csv(path) -> list[EvalRow]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    out = []
    for d in csv.DictReader(lines):
        out.append(
            EvalRow(
                code=d["code"],
                decoder=d["decoder"],
                p_err=float(d["p_err"]),
                trials=int(d["trials"]),
                failures=int(d["failures"]),
                rate=float(d["rate"]),
                ci_lo=float(d["ci_lo"]),
                ci_hi=float(d["ci_hi"]),
                seed=int(d["seed"]),
            )
        )
    return out


@dataclass
class ThresholdEstimate:
    mean: float
    spread: float
    crossings: list[float]


def _crossing(p, log_a, log_b) -> float:
    diff = np.asarray(log_b) - np.asarray(log_a)
    if np.allclose(diff, 0.0):
        raise NoCrossing("curves coincide")
    for i in range(len(p) - 1):
        d0, d1 = diff[i], diff[i + 1]
        if d0 == 0.0 and d1 != 0.0:
            return float(p[i])
        if d0 * d1 < 0:
            return float(p[i] + (p[i + 1] - p[i]) * d0 / (d0 - d1))
    if diff[-1] == 0.0 and diff[-2] != 0.0:
        return float(p[-1])
    raise NoCrossing("curves do not cross on the scanned grid")


def threshold_estimate(curves) -> ThresholdEstimate:
    """Crossing point of logical-error curves for codes of increasing size.

    ``curves`` is a sequence ordered by code size, each a sequence of
    ``(p_err, logical_error)`` pairs on a shared ``p`` grid (``EvalRow``
    lists are accepted too). Adjacent pairs are compared by linearly
    interpolating the difference of ``log(logical_error)`` in ``p``.
    """
    parsed = []
    for c in curves:
        pts = [(r.p_err, r.rate) if isinstance(r, EvalRow) else (float(r[0]), float(r[1])) for r in c]
        pts.sort()
        parsed.append(pts)
    if len(parsed) < 2:
        raise ValueError("need curves for at least two code sizes")
    grid = [p for p, _ in parsed[0]]
    for pts in parsed[1:]:
        if [p for p, _ in pts] != grid:
            raise ValueError("curves must share a common p grid")
    crossings = []
    for a, b in zip(parsed, parsed[1:]):
        la = np.log([max(r, 1e-300) for _, r in a])
        lb = np.log([max(r, 1e-300) for _, r in b])
        crossings.append(_crossing(np.asarray(grid), la, lb))
    return ThresholdEstimate(
        mean=float(np.mean(crossings)),
        spread=float(np.std(crossings)),
        crossings=crossings,
    )


def gnuplot_script(rows, output="logical_error.png", title="Logical error vs physical error rate") -> str:
    """Self-contained gnuplot script: one semilog-y series per (code, decoder)."""
    series: dict[tuple[str, str], list[EvalRow]] = {}
    for r in rows:
        series.setdefault((r.code, r.decoder), []).append(r)
    lines = [
        f"# generated by colordecode {__version__}",
        "set terminal pngcairo size 800,600",
        f"set output '{output}'",
        f"set title '{title}'",
        "set logscale y",
        "set xlabel 'p_{err}'",
        "set ylabel 'Logical error'",
        "set key bottom right",
        "set grid",
    ]
    plots = []
    for i, ((code, dec), pts) in enumerate(series.items()):
        lines.append(f"$s{i} << EOD")
        for r in sorted(pts, key=lambda r: r.p_err):
            lines.append(f"{r.p_err:g} {r.rate:.6g} {r.ci_lo:.6g} {r.ci_hi:.6g}")
        lines.append("EOD")
        plots.append(f"$s{i} using 1:2:3:4 with yerrorlines title '{dec} ({code})'")
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"
