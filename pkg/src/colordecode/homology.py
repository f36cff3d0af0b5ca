"""Homology labels, final corrections, and a brute-force maximum-likelihood oracle.

Homology classes are integers in ``[0, 16)``: bit ``i`` of the index is the
parity of the residual against homology functional ``i``. Class 0 is the
trivial class.
"""

from __future__ import annotations

import math

import numpy as np

from . import gf2
from .color_code import ColorCode, LengthMismatch
from .hinv import decode_step_one

NUM_CLASSES = 16


class NotInKernel(ValueError):
    """A residual with nonzero syndrome was given where none is allowed."""


class SyndromeMismatch(ValueError):
    pass


class TooLarge(ValueError):
    """Stabilizer group too large to enumerate."""


def class_bits(c: int) -> tuple[int, int, int, int]:
    return tuple((int(c) >> i) & 1 for i in range(4))


def class_index(bits) -> int:
    return int(sum(int(b) << i for i, b in enumerate(bits)))


def _weights(k: int) -> np.ndarray:
    return (1 << np.arange(k)).astype(np.int64)


def homology_class(code: ColorCode, r, check: bool = True):
    """Class index of a syndrome-free residual (int, or int array for a batch)."""
    r = gf2.as_bits(r)
    if r.shape[-1] != code.n:
        raise LengthMismatch(f"residual length {r.shape[-1]} != n={code.n}")
    if check and code.syndrome(r).any():
        raise NotInKernel("residual has a nonzero syndrome")
    bits = gf2.matmul(r, code.homology_functionals.T).astype(np.int64)
    idx = bits @ _weights(code.k)
    return int(idx) if np.ndim(idx) == 0 else idx


def class_representative(code: ColorCode, c) -> np.ndarray:
    """XOR of the logical basis vectors selected by the bits of ``c``."""
    c = np.asarray(c, dtype=np.int64)
    sel = ((c[..., None] >> np.arange(code.k)) & 1).astype(np.uint8)
    return gf2.matmul(sel, code.logical_basis)


def final_correction(code: ColorCode, s, c) -> np.ndarray:
    """Step-one estimate combined with the logical representative of class ``c``."""
    s = gf2.as_bits(s)
    if s.shape[-1] != code.num_faces:
        raise LengthMismatch(f"syndrome length {s.shape[-1]} != F={code.num_faces}")
    return class_representative(code, c) ^ decode_step_one(code, s)


def is_success(code: ColorCode, e, correction):
    """True where ``e ^ correction`` lies in the stabilizer row space."""
    e = gf2.as_bits(e)
    correction = gf2.as_bits(correction)
    residual = e ^ correction
    if code.syndrome(residual).any():
        raise SyndromeMismatch("correction and error have different syndromes")
    return homology_class(code, residual, check=False) == 0


def stabilizer_group(code: ColorCode, max_log2: int = 16) -> np.ndarray:
    """All ``2**rank`` elements of the X-stabilizer group, one per row."""
    gens = code.H_f
    if gens.shape[0] > max_log2:
        raise TooLarge(f"stabilizer group has 2**{gens.shape[0]} elements (limit 2**{max_log2})")
    group = np.zeros((1, code.n), dtype=np.uint8)
    for g in gens:
        group = np.vstack([group, group ^ g])
    return group


def _log_sum(logs: np.ndarray) -> float:
    top = float(np.max(logs))
    if top == -math.inf:
        return -math.inf
    return top + math.log(math.fsum(np.exp(logs - top)))


class MLDOracle:
    """Exact coset-probability decoder for codes with a small stabilizer group.

    Posteriors are cached per reduced syndrome, so Monte Carlo loops on the
    18-qubit code touch each of its 128 syndromes at most once.
    """

    def __init__(self, code: ColorCode, p_err: float, max_log2: int = 16):
        if not 0.0 <= p_err <= 1.0:
            raise ValueError(f"p_err={p_err} outside [0, 1]")
        self.code = code
        self.p_err = float(p_err)
        self.group = stabilizer_group(code, max_log2)
        self.reps = class_representative(code, np.arange(NUM_CLASSES))
        n = code.n
        w = np.arange(n + 1)
        with np.errstate(divide="ignore", invalid="ignore"):
            lp, lq = np.log(self.p_err), np.log1p(-self.p_err)
            self._logw = np.where(w > 0, w * lp, 0.0) + np.where(n - w > 0, (n - w) * lq, 0.0)
        self._cache: dict[bytes, tuple[int, np.ndarray]] = {}

    def posterior(self, s) -> tuple[int, np.ndarray]:
        s_f = self.code.reduce_syndrome(s)
        key = np.packbits(s_f).tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        e_hat = gf2.matmul(s_f, self.code.H_f_pinv.T)
        logs = np.empty(NUM_CLASSES)
        for c in range(NUM_CLASSES):
            weights = (self.group ^ (e_hat ^ self.reps[c])).sum(axis=1, dtype=np.int64)
            logs[c] = _log_sum(self._logw[weights])
        total = _log_sum(logs)
        if total == -math.inf:
            probs = np.full(NUM_CLASSES, 1.0 / NUM_CLASSES)
        else:
            probs = np.exp(logs - total)
            probs /= math.fsum(probs)
        best = int(np.argmax(probs))  # argmax returns the lowest index on ties
        self._cache[key] = (best, probs)
        return best, probs

    def predict_homology(self, syndromes) -> np.ndarray:
        syndromes = np.atleast_2d(gf2.as_bits(syndromes))
        return np.array([self.posterior(s)[0] for s in syndromes], dtype=np.int64)


def mld_oracle(code: ColorCode, s, p_err: float, max_log2: int = 16):
    """Most likely residual class for syndrome ``s`` and the 16 class posteriors.

    The class probability sums ``p^w (1-p)^(n-w)`` over every element of the
    coset ``e_hat + representative(class) + stabilizer group``.

    Raises:
        TooLarge: when the stabilizer group exceeds ``2**max_log2`` elements.
    """
    return MLDOracle(code, p_err, max_log2).posterior(s)
