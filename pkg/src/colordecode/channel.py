"""Bit-flip noise sampling and labeled batch streams.

Random bits come from numpy's Philox4x64 counter-based generator keyed by
``(seed, stream_id)``. Samples are grouped into blocks of ``BLOCK`` rows;
block ``b`` is drawn with Philox counter word 1 set to ``b``. Any sample
index can therefore be regenerated directly, without replaying the stream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import gf2
from .color_code import ColorCode, LengthMismatch
from .hinv import decode_step_one
from .homology import homology_class

BLOCK = 1024
RNG_ALGORITHM = f"numpy-philox4x64-10:key=(seed,stream):counter1=block:block={BLOCK}:u<p"
MODES = ("syndrome_only", "concat_estimate")
MAX_DUMP_ROWS = 10**6

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class NoiseParams:
    p_err: float
    seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_err <= 1.0:
            raise ValueError(f"p_err={self.p_err} outside [0, 1]")


@dataclass(frozen=True)
class LabeledSample:
    e: np.ndarray
    s: np.ndarray
    e_hat: np.ndarray
    label: int


def _uniform_block(seed: int, stream_id: int, block: int, n: int) -> np.ndarray:
    key = np.array([seed & _MASK64, stream_id & _MASK64], dtype=np.uint64)
    bitgen = np.random.Philox(key=key, counter=[0, block, 0, 0])
    return np.random.Generator(bitgen).random((BLOCK, n))


class ErrorStream:
    """Random-access view of the error sequence for one ``(seed, stream_id)``.

    Keeps the most recently used block so consecutive reads are cheap. Not
    safe for two consumers at once.
    """

    def __init__(self, n: int, noise: NoiseParams):
        self.n = n
        self.noise = noise
        self._block_id = -1
        self._block = None

    def _get_block(self, b: int) -> np.ndarray:
        if b != self._block_id:
            u = _uniform_block(self.noise.seed, self.noise.stream_id, b, self.n)
            self._block = (u < self.noise.p_err).astype(np.uint8)
            self._block_id = b
        return self._block

    def take(self, start: int, count: int) -> np.ndarray:
        out = np.empty((count, self.n), dtype=np.uint8)
        i = 0
        while i < count:
            b, off = divmod(start + i, BLOCK)
            m = min(BLOCK - off, count - i)
            out[i : i + m] = self._get_block(b)[off : off + m]
            i += m
        return out


def sample_error(code: ColorCode, noise: NoiseParams, index: int) -> np.ndarray:
    """Error number ``index`` of the stream; each qubit flips with ``p_err``."""
    return ErrorStream(code.n, noise).take(index, 1)[0]


def sample_errors(code: ColorCode, noise: NoiseParams, start: int, count: int) -> np.ndarray:
    return ErrorStream(code.n, noise).take(start, count)


def label_errors(code: ColorCode, e):
    """Vectorised labeling: returns ``(s, e_hat, labels)`` for a batch of errors."""
    e = gf2.as_bits(e)
    s = code.syndrome(e)
    e_hat = decode_step_one(code, s)
    labels = homology_class(code, e ^ e_hat, check=False)
    return s, e_hat, np.asarray(labels, dtype=np.int64)


def make_sample(code: ColorCode, e) -> LabeledSample:
    e = gf2.as_bits(e)
    if e.shape != (code.n,):
        raise LengthMismatch(f"error length {e.shape} != n={code.n}")
    s, e_hat, label = label_errors(code, e)
    return LabeledSample(e=e, s=s, e_hat=e_hat, label=int(label))


def encode_inputs(s, e_hat=None, mode: str = "syndrome_only") -> np.ndarray:
    """Network inputs as 0.0/1.0 float32: ``s`` alone, or ``e_hat`` then ``s``."""
    if mode == "syndrome_only":
        parts = [s]
    elif mode == "concat_estimate":
        if e_hat is None:
            raise ValueError("concat_estimate mode needs e_hat")
        parts = [e_hat, s]
    else:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    return np.concatenate([np.atleast_2d(p) for p in parts], axis=1).astype(np.float32)


def input_width(code: ColorCode, mode: str) -> int:
    return code.num_faces + (code.n if mode == "concat_estimate" else 0)


def batch_iterator(
    code: ColorCode,
    noise: NoiseParams,
    batch_size: int,
    mode: str = "syndrome_only",
    start: int = 0,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Endless stream of ``(inputs, labels)`` batches starting at sample ``start``."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    stream = ErrorStream(code.n, noise)
    i = start
    while True:
        e = stream.take(i, batch_size)
        s, e_hat, labels = label_errors(code, e)
        yield encode_inputs(s, e_hat, mode), labels
        i += batch_size


def write_samples_csv(path, code: ColorCode, noise: NoiseParams, count: int, header_lines=()):
    """Dump ``count`` samples as CSV rows of error bits, syndrome bits and label."""
    if count > MAX_DUMP_ROWS:
        raise ValueError(f"refusing to dump more than {MAX_DUMP_ROWS} rows")
    stream = ErrorStream(code.n, noise)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow([f"e{i}" for i in range(code.n)] + [f"s{i}" for i in range(code.num_faces)] + ["label"])
        for start in range(0, count, BLOCK):
            e = stream.take(start, min(BLOCK, count - start))
            s, _, labels = label_errors(code, e)
            for row_e, row_s, lab in zip(e, s, labels):
                w.writerow([*row_e.tolist(), *row_s.tolist(), int(lab)])
