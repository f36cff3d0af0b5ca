"""Progressive training over an increasing ladder of bit-flip rates.

One network is initialised once and trained on a fixed sample budget at
each rate in turn. Rate ``k`` draws training data from stream ``k`` and
validation data from stream ``VALIDATION_STREAM + k`` of the same seed.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import queue
import threading
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .channel import RNG_ALGORITHM, NoiseParams, batch_iterator, input_width
from .color_code import LatticeParams, build_code
from .neural import (
    AdamState,
    MlpConfig,
    MlpModel,
    adam_step,
    init_model,
    load_checkpoint,
    loss_and_grad,
    parameter_hash,
    predict_class,
    save_checkpoint,
)

log = logging.getLogger(__name__)

THEORETICAL_THRESHOLD = 0.1097
# 0.1097 rounded up to the 0.01 grid of the training ladder
MAX_TRAINING_RATE = 0.11
VALIDATION_STREAM = 1_000_000
STANDARD_LADDER = (0.05, 0.06, 0.07, 0.08, 0.09, 0.10, 0.11)
APPROACH_MODES = {1: "syndrome_only", 2: "concat_estimate"}


class PlanError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, message, last_checkpoint=None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


@dataclass
class TrainPlan:
    code: tuple[int, int, int] = (3, 3, 0)
    approach: int = 1
    error_rates: tuple[float, ...] = STANDARD_LADDER
    samples_per_rate: int = 10**6
    batch_size: int = 500
    learning_rate: float = 1e-3
    hidden_layers: int = 1
    hidden_factor: float = 2.0
    seed: int = 0
    validation_samples: int = 10**5
    output_batchnorm: bool = True
    bn_after_activation: bool = False
    allow_above_threshold: bool = False
    checkpoint_every_rate: bool = True

    def __post_init__(self):
        self.code = LatticeParams.parse(self.code).as_tuple()
        self.error_rates = tuple(float(p) for p in self.error_rates)
        self.validate()

    def validate(self) -> None:
        if self.approach not in APPROACH_MODES:
            raise PlanError(f"approach must be 1 or 2, got {self.approach!r}")
        rates = self.error_rates
        if not rates:
            raise PlanError("error_rates is empty")
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise PlanError(f"error_rates must be strictly increasing: {rates}")
        if any(not 0.0 <= p <= 1.0 for p in rates):
            raise PlanError("error rates must lie in [0, 1]")
        if not self.allow_above_threshold and max(rates) > MAX_TRAINING_RATE:
            raise PlanError(
                f"training above the threshold ({max(rates)} > {MAX_TRAINING_RATE}) is refused; "
                "set allow_above_threshold to override"
            )
        if self.batch_size < 2:
            raise PlanError("batch_size must be at least 2")
        if self.samples_per_rate < 2 or self.samples_per_rate % self.batch_size == 1:
            raise PlanError("samples_per_rate would leave a final batch of a single sample")
        if self.hidden_layers < 0 or self.hidden_factor <= 0:
            raise PlanError("invalid network shape")
        if self.validation_samples < 0:
            raise PlanError("validation_samples must be >= 0")

    @property
    def mode(self) -> str:
        return APPROACH_MODES[self.approach]

    @property
    def total_samples(self) -> int:
        return self.samples_per_rate * len(self.error_rates)

    def mlp_config(self) -> MlpConfig:
        code = build_code(self.code)
        return MlpConfig(
            input_dim=input_width(code, self.mode),
            hidden_layers=self.hidden_layers,
            # width scales with the syndrome length in both approaches
            hidden_width=max(1, int(round(self.hidden_factor * code.num_faces))),
            output_batchnorm=self.output_batchnorm,
            bn_after_activation=self.bn_after_activation,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["code"] = list(self.code)
        d["error_rates"] = list(self.error_rates)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainPlan":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise PlanError(f"unknown plan field(s): {', '.join(sorted(unknown))}")
        for required in ("code", "error_rates", "samples_per_rate"):
            if required not in data:
                raise PlanError(f"plan is missing required field {required!r}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "TrainPlan":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise PlanError(f"plan is not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}") from None
        if not isinstance(data, dict):
            raise PlanError("plan must be a JSON object")
        return cls.from_dict(data)


def reference_plan(distance: int, approach: int = 1, code=None) -> TrainPlan:
    """Hyperparameters reported for code distance ``distance`` (6, 8, 9 or 12).

    The lattice behind each distance is not known, so ``code`` defaults to
    the size ladder entry closest in spirit: 6 -> (6,6,0), 8 -> (8,6,1),
    9 -> (9,9,0), 12 -> (12,12,0).
    """
    table = {
        1: {6: (2, 2, 500, 2 * 10**7), 8: (3, 5, 750, 4 * 10**7), 9: (4, 5, 750, 4 * 10**7), 12: (7, 10, 2500, 10**8)},
        2: {6: (1, 1, 500, 2 * 10**7), 8: (2, 3, 750, 4 * 10**7), 9: (3, 4, 750, 4 * 10**7), 12: (6, 10, 2500, 10**8)},
    }
    default_codes = {6: (6, 6, 0), 8: (8, 6, 1), 9: (9, 9, 0), 12: (12, 12, 0)}
    h, f, b, t = table[approach][distance]
    return TrainPlan(
        code=code or default_codes[distance],
        approach=approach,
        error_rates=STANDARD_LADDER,
        samples_per_rate=t,
        batch_size=b,
        learning_rate=0.001,
        hidden_layers=h,
        hidden_factor=f,
    )


@dataclass
class RateRecord:
    p_err: float
    samples: int
    steps: int
    final_loss: float
    val_accuracy: float
    start_hash: str
    end_hash: str
    checkpoint: str | None = None


@dataclass
class TrainResult:
    model: MlpModel
    adam: AdamState
    plan: TrainPlan
    history: list[dict] = field(default_factory=list)
    rates: list[RateRecord] = field(default_factory=list)

    @property
    def samples_consumed(self) -> int:
        return sum(r.samples for r in self.rates)


def saturation_monitor(losses, window: int = 20, rel_tol: float = 1e-3) -> bool:
    """True once the mean loss over the last ``window`` steps stopped improving.

    Compares the last window with the one before it; fewer than two full
    windows of history never count as saturated.
    """
    if window < 2:
        raise ValueError("window must be >= 2")
    losses = np.asarray(losses, dtype=np.float64)
    if losses.size < 2 * window:
        return False
    prev = losses[-2 * window : -window].mean()
    last = losses[-window:].mean()
    if prev == 0:
        return True
    return (prev - last) / abs(prev) < rel_tol


def _prefetch(it, depth: int = 4):
    """Run ``it`` in a producer thread feeding a bounded queue."""
    q: queue.Queue = queue.Queue(maxsize=depth)
    stop = threading.Event()

    def producer():
        try:
            for item in it:
                while not stop.is_set():
                    try:
                        q.put(item, timeout=0.1)
                        break
                    except queue.Full:
                        continue
                if stop.is_set():
                    return
        except BaseException as exc:  # surfaced in the consumer
            q.put(exc)

    t = threading.Thread(target=producer, daemon=True)
    t.start()
    try:
        while True:
            item = q.get()
            if isinstance(item, BaseException):
                raise item
            yield item
    finally:
        stop.set()


def _batches(code, plan: TrainPlan, rate_index: int, p: float, prefetch: bool):
    """Exactly ``samples_per_rate`` samples split into ``batch_size`` chunks."""
    noise = NoiseParams(p_err=p, seed=plan.seed, stream_id=rate_index)
    it = batch_iterator(code, noise, plan.batch_size, plan.mode)
    if prefetch:
        it = _prefetch(it)
    remaining = plan.samples_per_rate
    for X, y in it:
        if remaining <= 0:
            break
        take = min(remaining, len(y))
        yield X[:take], y[:take]
        remaining -= take
        if remaining <= 0:
            break


def validation_accuracy(model: MlpModel, code, plan: TrainPlan, rate_index: int, p: float) -> float:
    if plan.validation_samples == 0:
        return float("nan")
    noise = NoiseParams(p_err=p, seed=plan.seed, stream_id=VALIDATION_STREAM + rate_index)
    it = batch_iterator(code, noise, min(plan.validation_samples, 10**4), plan.mode)
    correct = seen = 0
    while seen < plan.validation_samples:
        X, y = next(it)
        take = min(len(y), plan.validation_samples - seen)
        correct += int((predict_class(model, X[:take]) == y[:take]).sum())
        seen += take
    return correct / seen


def _checkpoint_metadata(plan: TrainPlan, rates_done: list[RateRecord]) -> dict:
    return {
        "artifact_version": __version__,
        "plan": plan.to_dict(),
        "code": list(plan.code),
        "mode": plan.mode,
        "rng_algorithm": RNG_ALGORITHM,
        "rates_completed": len(rates_done),
        "samples_consumed": sum(r.samples for r in rates_done),
        "rates": [asdict(r) for r in rates_done],
    }


def write_atomic(path: Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _train_rate(model, adam, code, plan, k, p, history, prefetch, last_ckpt):
    start_hash = parameter_hash(model)
    model.train()
    losses = []
    samples = 0
    for X, y in _batches(code, plan, k, p, prefetch):
        loss, grads = loss_and_grad(model, X, y)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at p_err={p}, step {adam.t + 1}", last_ckpt)
        adam_step(model, adam, grads)
        samples += len(y)
        losses.append(loss)
        history.append({"step": adam.t, "p_err": p, "loss": loss, "val_accuracy": ""})
    acc = validation_accuracy(model, code, plan, k, p)
    if history:
        history[-1]["val_accuracy"] = acc
    if saturation_monitor(losses, window=max(2, min(200, len(losses) // 4))):
        log.info("loss saturated at p_err=%.3f", p)
    return RateRecord(
        p_err=p,
        samples=samples,
        steps=len(losses),
        final_loss=float(np.mean(losses[-20:])) if losses else float("nan"),
        val_accuracy=acc,
        start_hash=start_hash,
        end_hash=parameter_hash(model),
    )


def train_progressive(plan: TrainPlan, out_dir=None, resume: bytes | None = None, prefetch: bool = True) -> TrainResult:
    """Train one network across ``plan.error_rates`` without reinitialising it.

    With ``out_dir`` a checkpoint is written after every rate. ``resume``
    takes checkpoint bytes from an earlier run of the same plan and
    continues with the first rate it had not finished.
    """
    code = build_code(plan.code)
    config = plan.mlp_config()
    if resume is not None:
        model, adam, meta = load_checkpoint(resume)
        if model.config != config:
            raise PlanError("checkpoint network does not match the plan")
        if meta.get("plan", {}).get("error_rates") != list(plan.error_rates):
            raise PlanError("checkpoint was produced by a plan with a different ladder")
        done = [RateRecord(**r) for r in meta["rates"]]
        adam = adam or AdamState(lr=plan.learning_rate)
    else:
        model = init_model(config, plan.seed)
        adam = AdamState(lr=plan.learning_rate)
        done = []
    result = TrainResult(model=model, adam=adam, plan=plan, rates=list(done))
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    last_ckpt = done[-1].checkpoint if done else None
    for k, p in enumerate(plan.error_rates):
        if k < len(done):
            continue
        rec = _train_rate(model, adam, code, plan, k, p, result.history, prefetch, last_ckpt)
        log.info("p_err=%.3f steps=%d loss=%.4f val_acc=%.4f", p, rec.steps, rec.final_loss, rec.val_accuracy)
        result.rates.append(rec)
        if out is not None and plan.checkpoint_every_rate:
            path = out / f"rate_{k:02d}_p{p:.3f}.hnet"
            rec.checkpoint = str(path)
            write_atomic(path, save_checkpoint(model, adam, _checkpoint_metadata(plan, result.rates)))
            last_ckpt = str(path)
    model.eval()
    return result


def train_fresh_per_rate(plan: TrainPlan, out_dir=None, prefetch: bool = True, rates=None) -> list[TrainResult]:
    """A separately initialised network for each rate, trained only at that rate.

    ``rates`` optionally restricts training to a subset of the ladder; each
    rate keeps the data stream it has in the progressive run.
    """
    code = build_code(plan.code)
    config = plan.mlp_config()
    results = []
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for k, p in enumerate(plan.error_rates):
        if rates is not None and not any(abs(p - r) < 1e-12 for r in rates):
            continue
        model = init_model(config, plan.seed)
        adam = AdamState(lr=plan.learning_rate)
        res = TrainResult(model=model, adam=adam, plan=plan)
        rec = _train_rate(model, adam, code, plan, k, p, res.history, prefetch, None)
        res.rates.append(rec)
        if out is not None:
            path = out / f"fresh_{k:02d}_p{p:.3f}.hnet"
            rec.checkpoint = str(path)
            write_atomic(path, save_checkpoint(model, adam, _checkpoint_metadata(plan, res.rates)))
        model.eval()
        results.append(res)
    return results


def write_history_csv(path, history: list[dict], header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.DictWriter(fh, fieldnames=["step", "p_err", "loss", "val_accuracy"])
        w.writeheader()
        for row in history:
            w.writerow(row)
