"""Hexagonal (6.6.6) color code on a torus.

Qubits sit on the triangles of a periodic triangular lattice; each lattice
vertex ``t(r, c)`` is the centre of a hexagonal face touching six
triangles. Faces get color ``(c - r) mod 3``. Rows wrap with a column
shift: row ``l_rows`` is identified with row 0 shifted by ``shift``.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import gf2


class InvalidParams(ValueError):
    pass


class RankError(RuntimeError):
    pass


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class LatticeParams:
    l_rows: int
    l_cols: int
    shift: int = 0

    def validate(self) -> None:
        if self.l_rows < 3 or self.l_cols < 3:
            raise InvalidParams(f"lattice {self} is smaller than 3x3")
        if self.l_cols % 3:
            raise InvalidParams(f"l_cols={self.l_cols} is not a multiple of 3")
        if (self.l_rows + self.shift) % 3:
            raise InvalidParams(
                f"(l_rows + shift) = {self.l_rows + self.shift} is not a multiple of 3; "
                "faces cannot be 3-colored on this torus"
            )

    @classmethod
    def parse(cls, value) -> "LatticeParams":
        """Accept a ``LatticeParams``, a tuple, or a string like ``"6,6,0"``."""
        if isinstance(value, LatticeParams):
            return value
        if isinstance(value, str):
            value = [int(x) for x in value.replace(" ", "").split(",") if x]
        value = tuple(int(x) for x in value)
        if len(value) == 2:
            value = value + (0,)
        if len(value) != 3:
            raise InvalidParams(f"expected (l_rows, l_cols, shift), got {value!r}")
        return cls(*value)

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.l_rows, self.l_cols, self.shift)

    def __str__(self) -> str:
        return f"{self.l_rows},{self.l_cols},{self.shift}"


@dataclass(frozen=True, eq=False)
class Face:
    index: int
    color: int
    qubits: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class ColorCode:
    """Immutable code data: stabilizers, pseudo-inverse and logical operators.

    Build with :func:`build_code`. Arrays are marked read-only.
    """

    params: LatticeParams
    n: int
    faces: tuple[Face, ...]
    H: np.ndarray
    removed_faces: tuple[int, int]
    H_f: np.ndarray
    H_f_pinv: np.ndarray
    logical_basis: np.ndarray
    homology_functionals: np.ndarray
    kept_faces: np.ndarray = field(repr=False)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @property
    def k(self) -> int:
        return self.logical_basis.shape[0]

    def syndrome(self, e) -> np.ndarray:
        """``H e^T`` for one error (1-D) or a batch of errors (rows)."""
        e = gf2.as_bits(e)
        if e.shape[-1] != self.n:
            raise LengthMismatch(f"error length {e.shape[-1]} != n={self.n}")
        return gf2.matmul(e, self.H.T)

    def reduce_syndrome(self, s) -> np.ndarray:
        """Drop the coordinates of the two removed faces (``s -> s_f``)."""
        s = gf2.as_bits(s)
        if s.shape[-1] != self.num_faces:
            raise LengthMismatch(f"syndrome length {s.shape[-1]} != F={self.num_faces}")
        return s[..., self.kept_faces]

    def reduced_syndrome(self, e) -> np.ndarray:
        return self.reduce_syndrome(self.syndrome(e))

    def summary(self) -> dict:
        return {
            "params": list(self.params.as_tuple()),
            "n": self.n,
            "F": self.num_faces,
            "rank": int(self.H_f.shape[0]),
            "k": self.k,
            "removed_faces": list(self.removed_faces),
            "faces_per_color": [sum(f.color == c for f in self.faces) for c in range(3)],
            "logical_weights": [int(w) for w in self.logical_basis.sum(axis=1)],
            "functional_weights": [int(w) for w in self.homology_functionals.sum(axis=1)],
        }


def lattice_faces(params: LatticeParams) -> list[Face]:
    """Face list for the lattice; qubit ``2*(r*l_cols + c)`` is the up
    triangle of cell ``(r, c)`` and ``+1`` the down triangle."""
    params.validate()
    R, C, shift = params.l_rows, params.l_cols, params.shift

    def vertex(r, c):
        if r == R:
            r, c = 0, c + shift
        return r * C + c % C

    incidence: list[list[int]] = [[] for _ in range(R * C)]
    for r in range(R):
        for c in range(C):
            up = 2 * (r * C + c)
            for v in (vertex(r, c), vertex(r, c + 1), vertex(r + 1, c)):
                incidence[v].append(up)
            for v in (vertex(r, c + 1), vertex(r + 1, c + 1), vertex(r + 1, c)):
                incidence[v].append(up + 1)
    return [
        Face(index=r * C + c, color=(c - r) % 3, qubits=tuple(sorted(incidence[r * C + c])))
        for r in range(R)
        for c in range(C)
    ]


def parity_check_matrix(faces, n: int) -> np.ndarray:
    H = np.zeros((len(faces), n), dtype=np.uint8)
    for f in faces:
        H[f.index, list(f.qubits)] ^= 1
    return H


def drop_dependent_stabilizers(H, faces):
    """Remove the first face of color 0 and the first face of color 1.

    Returns:
        (H_f, removed) where ``removed`` holds the two face ids.

    Raises:
        RankError: if the remaining rows are not linearly independent.
    """
    first = {}
    for f in faces:
        first.setdefault(f.color, f.index)
    removed = (first[0], first[1])
    keep = [i for i in range(H.shape[0]) if i not in removed]
    H_f = gf2.as_bits(H)[keep]
    r = gf2.rank(H_f)
    if r < H_f.shape[0]:
        raise RankError(f"H_f has rank {r} < {H_f.shape[0]} rows after dropping faces {removed}")
    return H_f, removed


def logical_operators(H):
    """Logical basis (kernel of H modulo its row space) and dual functionals.

    Kernel vectors are scanned in order and kept whenever they enlarge the
    span of ``rows(H) + kept``; the functionals are the dual basis taken
    from the kernel itself, so they commute with every stabilizer.
    """
    H = gf2.as_bits(H)
    kernel = gf2.kernel_basis(H)
    stab_rank = gf2.rank(H)
    expected = kernel.shape[0] - stab_rank
    chosen: list[np.ndarray] = []
    current = stab_rank
    for v in kernel:
        trial = np.vstack([H, *chosen, v]) if chosen else np.vstack([H, v])
        r = gf2.rank(trial)
        if r > current:
            chosen.append(v)
            current = r
        if len(chosen) == expected:
            break
    if len(chosen) != expected:
        raise RankError(f"found {len(chosen)} logical operators, expected {expected}")
    basis = np.array(chosen, dtype=np.uint8)
    functionals = gf2.dual_pairing_basis(basis, kernel)
    return basis, functionals


@functools.lru_cache(maxsize=16)
def _build(params: LatticeParams) -> ColorCode:
    faces = lattice_faces(params)
    n = 2 * params.l_rows * params.l_cols
    H = parity_check_matrix(faces, n)
    if gf2.rank(H) != len(faces) - 2:
        raise RankError(f"rank(H) = {gf2.rank(H)}, expected {len(faces) - 2}")
    H_f, removed = drop_dependent_stabilizers(H, faces)
    pinv = gf2.right_pseudo_inverse(H_f)
    basis, functionals = logical_operators(H)
    if basis.shape[0] != 4:
        raise RankError(f"code encodes {basis.shape[0]} qubits, expected 4")
    kept = np.array([i for i in range(len(faces)) if i not in removed], dtype=np.intp)
    for a in (H, H_f, pinv, basis, functionals, kept):
        a.setflags(write=False)
    return ColorCode(
        params=params,
        n=n,
        faces=tuple(faces),
        H=H,
        removed_faces=removed,
        H_f=H_f,
        H_f_pinv=pinv,
        logical_basis=basis,
        homology_functionals=functionals,
        kept_faces=kept,
    )


def build_code(params) -> ColorCode:
    """Build (or fetch from cache) the color code for ``params``.

    ``params`` may be a :class:`LatticeParams`, a tuple ``(l_rows, l_cols,
    shift)`` or a string ``"l_rows,l_cols,shift"``.
    """
    params = LatticeParams.parse(params)
    params.validate()
    return _build(params)


def brute_force_distance(code: ColorCode, max_n: int = 24) -> int:
    """Minimum weight of a syndrome-free vector with nontrivial homology.

    Exhaustive over weights, so limited to ``n <= max_n``.
    """
    if code.n > max_n:
        raise ValueError(f"brute-force distance limited to n <= {max_n}, got {code.n}")
    H = code.H.astype(np.int64)
    lam = code.homology_functionals.astype(np.int64)
    for w in range(1, code.n + 1):
        for support in itertools.combinations(range(code.n), w):
            cols = list(support)
            if (H[:, cols].sum(axis=1) & 1).any():
                continue
            if (lam[:, cols].sum(axis=1) & 1).any():
                return w
    raise RankError("no nontrivial logical operator found")
