"""Command-line entry point: ``colordecode <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, gf2
from .channel import NoiseParams, label_errors, sample_errors, write_samples_csv
from .color_code import InvalidParams, LatticeParams, build_code
from .estimators import HInverseDecoder, MaximumLikelihoodDecoder, TwoStepDecoder
from .evaluation import evaluate, gnuplot_script, sweep, write_csv
from .homology import MLDOracle, TooLarge
from .neural import CorruptCheckpoint, ShapeMismatch
from .training import PlanError, TrainPlan, train_progressive, write_history_csv

FIG_GRID = (0.05, 0.06, 0.07, 0.08, 0.09, 0.10, 0.11, 0.12)


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def provenance(args, config: dict) -> list[str]:
    return [f"colordecode {__version__} seed={args.seed} config_hash={config_hash(config)}"]


def _run_config(args) -> dict:
    skip = {"func", "out", "workers", "verbose", "gnuplot"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _load_decoder(args, code):
    if args.decoder == "hinv":
        return HInverseDecoder(code.params.as_tuple())
    if args.decoder == "mld":
        return MaximumLikelihoodDecoder(code.params.as_tuple())
    if not args.checkpoint:
        raise ValueError("--decoder nn needs --checkpoint")
    dec = TwoStepDecoder.from_bytes(Path(args.checkpoint).read_bytes())
    if tuple(dec.code) != code.params.as_tuple():
        raise ShapeMismatch(f"checkpoint was trained on code {dec.code}, not {code.params.as_tuple()}")
    return dec


def cmd_code_info(args) -> int:
    code = build_code(args.code)
    info = code.summary()
    info["artifact_version"] = __version__
    print(json.dumps(info, indent=2))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, m in (("H", code.H), ("H_f", code.H_f), ("H_f_pinv", code.H_f_pinv),
                        ("logical_basis", code.logical_basis), ("homology_functionals", code.homology_functionals)):
            (out / f"{name}.txt").write_text(gf2.format_matrix(m))
        (out / "code_info.json").write_text(json.dumps(info, indent=2) + "\n")
    return 0


def cmd_gen_data(args) -> int:
    code = build_code(args.code)
    noise = NoiseParams(args.p, args.seed, args.stream)
    out = Path(args.out)
    write_samples_csv(out, code, noise, args.count, provenance(args, _run_config(args)))
    print(f"wrote {args.count} samples to {out}")
    return 0


def cmd_train(args) -> int:
    plan = TrainPlan.from_json(Path(args.plan).read_text())
    overrides = {}
    if args.approach is not None:
        overrides["approach"] = args.approach
    if args.seed_given:
        overrides["seed"] = args.seed
    if overrides:
        plan = TrainPlan.from_dict({**plan.to_dict(), **overrides})
    args.seed = plan.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resume = Path(args.resume).read_bytes() if args.resume else None
    result = train_progressive(plan, out_dir=out, resume=resume)
    header = provenance(args, plan.to_dict())
    write_history_csv(out / "history.csv", result.history, header)
    final = TwoStepDecoder.from_result(result)
    (out / "final.hnet").write_bytes(final.to_bytes({"artifact_version": __version__}))
    print(f"{'p_err':>6} {'samples':>10} {'loss':>8} {'val_acc':>8}")
    for r in result.rates:
        print(f"{r.p_err:6.3f} {r.samples:10d} {r.final_loss:8.4f} {r.val_accuracy:8.4f}")
    return 0


def cmd_eval(args) -> int:
    code = build_code(args.code)
    decoder = _load_decoder(args, code)
    rows = [evaluate(code, decoder, p, args.trials, args.seed, args.workers) for p in args.p]
    _emit_rows(args, rows)
    return 0


def cmd_sweep(args) -> int:
    code = build_code(args.code)
    decoder = _load_decoder(args, code)
    rows = sweep(code, decoder, args.p, args.trials, args.seed, args.workers)
    _emit_rows(args, rows)
    if args.gnuplot:
        Path(args.gnuplot).write_text(gnuplot_script(rows))
    return 0


def _emit_rows(args, rows) -> None:
    header = provenance(args, _run_config(args))
    write_csv(args.out or sys.stdout, rows, header)


def cmd_crosscheck_mld(args) -> int:
    code = build_code(args.code)
    p = args.p[0]
    oracle = MLDOracle(code, p)
    e = sample_errors(code, NoiseParams(p, args.seed, args.stream), 0, args.trials)
    s, _, labels = label_errors(code, e)
    weights = 1 << np.arange(code.num_faces, dtype=object)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        for line in provenance(args, _run_config(args)):
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["syndrome_id", "true_class", "oracle_class"] + [f"post{c}" for c in range(16)])
        for row, lab in zip(s, labels):
            best, probs = oracle.posterior(row)
            sid = int(sum(int(b) * wt for b, wt in zip(row, weights)))
            w.writerow([sid, int(lab), best] + [f"{x:.12g}" for x in probs])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="colordecode", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, p_default=None):
        p.add_argument("--code", type=LatticeParams.parse, default=LatticeParams(3, 3, 0), help="l_rows,l_cols,shift")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None)
        if p_default is not None:
            p.add_argument("--p", type=_floats, default=list(p_default), help="comma-separated error rates")

    p = sub.add_parser("code-info", help="print code parameters as JSON; --out DIR dumps matrices")
    common(p)
    p.set_defaults(func=cmd_code_info)

    p = sub.add_parser("gen-data", help="dump labeled samples as CSV")
    common(p, p_default=[0.05])
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--stream", type=int, default=0)
    p.set_defaults(func=lambda a: cmd_gen_data(_single_p(a)))

    p = sub.add_parser("train", help="progressive training from a JSON plan")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--approach", type=int, choices=(1, 2), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    for name, func, grid in (("eval", cmd_eval, [0.05]), ("sweep", cmd_sweep, FIG_GRID)):
        p = sub.add_parser(name, help="logical error rate(s) as CSV")
        common(p, p_default=grid)
        p.add_argument("--decoder", choices=("hinv", "nn", "mld"), default="hinv")
        p.add_argument("--checkpoint", default=None)
        p.add_argument("--trials", type=int, default=10**5)
        p.add_argument("--workers", type=int, default=1)
        if name == "sweep":
            p.add_argument("--gnuplot", default=None, help="also write a gnuplot script here")
        p.set_defaults(func=func)

    p = sub.add_parser("crosscheck-mld", help="per-sample oracle posteriors as CSV")
    common(p, p_default=[0.05])
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--stream", type=int, default=0)
    p.set_defaults(func=cmd_crosscheck_mld)
    return parser


def _single_p(args):
    args.p = args.p[0]
    return args


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "train":
        args.seed_given = args.seed is not None
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (InvalidParams, PlanError, CorruptCheckpoint, ShapeMismatch, TooLarge, ValueError, OSError) as exc:
        print(f"colordecode {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
