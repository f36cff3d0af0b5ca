"""Dense linear algebra over GF(2).

Matrices and vectors are numpy ``uint8`` arrays holding 0/1 entries. Row
operations are XORs of whole rows, so elimination costs one vectorised
numpy call per pivot.
"""

from __future__ import annotations

import numpy as np


class NoSolution(ValueError):
    """The right-hand side is not in the column space."""


class NotFullRank(ValueError):
    """A full-row-rank matrix was required."""


class NoDualExists(ValueError):
    """The pairing between primal vectors and the search space is degenerate."""


def as_bits(a) -> np.ndarray:
    """Coerce to a ``uint8`` array of 0/1 entries (reduces mod 2)."""
    arr = np.asarray(a)
    if arr.dtype == np.bool_:
        return arr.astype(np.uint8)
    return (arr.astype(np.int64) & 1).astype(np.uint8)


def matmul(a, b) -> np.ndarray:
    """Matrix (or matrix-vector) product reduced mod 2."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    return ((a @ b) & 1).astype(np.uint8)


def row_reduce(m):
    """Reduced row-echelon form over GF(2).

    Pivots are taken column by column from the left; within a column the
    lowest-indexed available row wins.

    Returns:
        (reduced, pivot_cols, transform) with ``transform @ m == reduced``
        mod 2. ``transform`` is square and invertible.
    """
    m = as_bits(m)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    rows, cols = m.shape
    aug = np.concatenate([m, np.eye(rows, dtype=np.uint8)], axis=1)
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hits = np.flatnonzero(aug[r:, c])
        if hits.size == 0:
            continue
        p = r + hits[0]
        if p != r:
            aug[[r, p]] = aug[[p, r]]
        others = np.flatnonzero(aug[:, c])
        others = others[others != r]
        if others.size:
            aug[others] ^= aug[r]
        pivots.append(c)
        r += 1
    return aug[:, :cols].copy(), pivots, aug[:, cols:].copy()


def rank(m) -> int:
    return len(row_reduce(m)[1])


def solve(m, b) -> np.ndarray:
    """Solve ``m @ x = b`` with every free variable set to zero.

    Raises:
        NoSolution: if ``b`` is outside the column space of ``m``.
    """
    m = as_bits(m)
    b = as_bits(b)
    if b.shape != (m.shape[0],):
        raise ValueError(f"rhs length {b.shape} does not match {m.shape[0]} rows")
    reduced, pivots, transform = row_reduce(m)
    tb = matmul(transform, b)
    if tb[len(pivots):].any():
        raise NoSolution("system is inconsistent")
    x = np.zeros(m.shape[1], dtype=np.uint8)
    x[pivots] = tb[: len(pivots)]
    return x


def right_pseudo_inverse(m) -> np.ndarray:
    """Return ``P`` (cols x rows) with ``m @ P == I``.

    Column ``j`` of ``P`` is :func:`solve` applied to the ``j``-th unit
    vector, so the result is fully determined by ``m``.
    """
    m = as_bits(m)
    rows, cols = m.shape
    reduced, pivots, transform = row_reduce(m)
    if len(pivots) < rows:
        raise NotFullRank(f"rank {len(pivots)} < {rows} rows")
    # Solving all unit vectors at once: the pivot rows of P are the
    # columns of ``transform`` (all rows of transform are pivot rows here).
    p = np.zeros((cols, rows), dtype=np.uint8)
    p[pivots] = transform
    return p


def kernel_basis(m) -> np.ndarray:
    """Basis of ``{x : m @ x = 0}``, one vector per row.

    One vector per free column ``f``: ``x_f = 1``, other free variables 0.
    """
    m = as_bits(m)
    cols = m.shape[1]
    reduced, pivots, _ = row_reduce(m)
    pivot_set = set(pivots)
    free = [c for c in range(cols) if c not in pivot_set]
    basis = np.zeros((len(free), cols), dtype=np.uint8)
    for i, f in enumerate(free):
        basis[i, f] = 1
        basis[i, pivots] = reduced[: len(pivots), f]
    return basis


def dual_pairing_basis(primal, space) -> np.ndarray:
    """Vectors ``lam_j`` in the span of ``space`` with ``<primal_i, lam_j> = delta_ij``.

    Raises:
        NoDualExists: if the pairing matrix ``primal @ space.T`` does not
            have full row rank.
    """
    primal = np.atleast_2d(as_bits(primal))
    space = np.atleast_2d(as_bits(space))
    pairing = matmul(primal, space.T)
    try:
        coeffs = right_pseudo_inverse(pairing)
    except NotFullRank as exc:
        raise NoDualExists(str(exc)) from None
    return matmul(coeffs.T, space)


def in_row_space(m, v) -> bool:
    """True when ``v`` is a GF(2) combination of the rows of ``m``."""
    try:
        solve(as_bits(m).T, v)
    except NoSolution:
        return False
    return True


def format_matrix(m) -> str:
    """Text dump: header ``"rows cols"`` then one ``0``/``1`` string per row."""
    m = as_bits(m)
    lines = [f"{m.shape[0]} {m.shape[1]}"]
    lines += ["".join("1" if x else "0" for x in row) for row in m]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    lines = [ln.strip() for ln in text.strip().splitlines()]
    rows, cols = (int(x) for x in lines[0].split())
    body = lines[1:]
    if len(body) != rows or any(len(ln) != cols for ln in body):
        raise ValueError("matrix body does not match the declared shape")
    out = np.array([[ch == "1" for ch in ln] for ln in body], dtype=np.uint8)
    return out.reshape(rows, cols)
