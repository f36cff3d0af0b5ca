import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from colordecode import gf2
from colordecode.color_code import build_code


def brute_rank(m):
    """Independent rank: count distinct vectors in the row span by enumeration."""
    m = np.asarray(m, dtype=np.uint8)
    span = {bytes(m.shape[1])}
    for row in m:
        span |= {bytes(np.frombuffer(v, dtype=np.uint8) ^ row) for v in span}
    return int(np.log2(len(span)))


bit_matrices = st.integers(1, 7).flatmap(
    lambda r: st.integers(1, 9).flatmap(lambda c: arrays(np.uint8, (r, c), elements=st.integers(0, 1)))
)


def test_rank_trivial_cases():
    assert gf2.rank(np.eye(3, dtype=np.uint8)) == 3
    assert gf2.rank(np.zeros((4, 7), dtype=np.uint8)) == 0


def test_rank_of_18_qubit_code_matches_enumeration():
    H = build_code((3, 3, 0)).H
    assert gf2.rank(H) == 7
    assert brute_rank(H) == 7


def test_row_reduce_examples():
    I3 = np.eye(3, dtype=np.uint8)
    reduced, pivots, transform = gf2.row_reduce(I3)
    assert (reduced == I3).all() and pivots == [0, 1, 2] and (transform == I3).all()
    reduced, pivots, _ = gf2.row_reduce([[1, 1], [1, 1]])
    assert reduced.tolist() == [[1, 1], [0, 0]]
    assert pivots == [0]


def test_row_reduce_random_5x8_transform():
    m = np.random.default_rng(3).integers(0, 2, (5, 8)).astype(np.uint8)
    reduced, pivots, transform = gf2.row_reduce(m)
    assert (gf2.matmul(transform, m) == reduced).all()


@settings(max_examples=200, deadline=None)
@given(bit_matrices)
def test_row_reduce_properties(m):
    reduced, pivots, transform = gf2.row_reduce(m)
    assert (gf2.matmul(transform, m) == reduced).all()
    assert pivots == sorted(set(pivots))
    assert len(pivots) == brute_rank(m)
    again = gf2.row_reduce(reduced)[0]
    assert (again == reduced).all()
    assert gf2.rank(transform) == transform.shape[0]


@settings(max_examples=200, deadline=None)
@given(bit_matrices)
def test_rank_nullity(m):
    K = gf2.kernel_basis(m)
    assert gf2.rank(m) + K.shape[0] == m.shape[1]
    if K.size:
        assert not gf2.matmul(m, K.T).any()
        assert gf2.rank(K) == K.shape[0]


@settings(max_examples=200, deadline=None)
@given(bit_matrices, st.data())
def test_solve_in_column_space(m, data):
    x0 = np.array(data.draw(st.lists(st.integers(0, 1), min_size=m.shape[1], max_size=m.shape[1])), dtype=np.uint8)
    b = gf2.matmul(m, x0)
    x = gf2.solve(m, b)
    assert (gf2.matmul(m, x) == b).all()
    assert (gf2.solve(m, b) == x).all()


def test_solve_examples():
    b = np.array([1, 0, 1], dtype=np.uint8)
    assert (gf2.solve(np.eye(3, dtype=np.uint8), b) == b).all()
    assert gf2.solve([[1, 1]], [1]).tolist() == [1, 0]
    with pytest.raises(gf2.NoSolution):
        gf2.solve([[1, 0], [1, 0]], [1, 0])


@settings(max_examples=100, deadline=None)
@given(bit_matrices)
def test_right_pseudo_inverse_property(m):
    if gf2.rank(m) < m.shape[0]:
        with pytest.raises(gf2.NotFullRank):
            gf2.right_pseudo_inverse(m)
        return
    P = gf2.right_pseudo_inverse(m)
    assert P.shape == (m.shape[1], m.shape[0])
    assert (gf2.matmul(m, P) == np.eye(m.shape[0], dtype=np.uint8)).all()
    for j in range(m.shape[0]):
        unit = np.zeros(m.shape[0], dtype=np.uint8)
        unit[j] = 1
        assert (P[:, j] == gf2.solve(m, unit)).all()


def test_right_pseudo_inverse_examples():
    I4 = np.eye(4, dtype=np.uint8)
    assert (gf2.right_pseudo_inverse(I4) == I4).all()
    code = build_code((3, 3, 0))
    P = gf2.right_pseudo_inverse(code.H_f)
    assert P.shape == (18, 7)
    assert (gf2.matmul(code.H_f, P) == np.eye(7, dtype=np.uint8)).all()
    with pytest.raises(gf2.NotFullRank):
        gf2.right_pseudo_inverse([[1, 0, 1], [1, 0, 1]])


def test_kernel_examples():
    assert gf2.kernel_basis(np.eye(5, dtype=np.uint8)).shape[0] == 0
    assert gf2.kernel_basis(np.zeros((1, 3), dtype=np.uint8)).shape[0] == 3
    H = build_code((3, 3, 0)).H
    K = gf2.kernel_basis(H)
    assert K.shape == (11, 18)
    assert not gf2.matmul(H, K.T).any()


def test_dual_pairing_basis():
    I2 = np.eye(2, dtype=np.uint8)
    assert (gf2.dual_pairing_basis(I2, I2) == I2).all()
    code = build_code((3, 3, 0))
    lam = gf2.dual_pairing_basis(code.logical_basis, gf2.kernel_basis(code.H))
    assert (gf2.matmul(code.logical_basis, lam.T) == np.eye(4, dtype=np.uint8)).all()
    with pytest.raises(gf2.NoDualExists):
        gf2.dual_pairing_basis(np.zeros((1, 3), dtype=np.uint8), np.eye(3, dtype=np.uint8)[:2])


def test_operations_are_pure():
    m = np.random.default_rng(0).integers(0, 2, (6, 10)).astype(np.uint8)
    before = m.copy()
    a = gf2.row_reduce(m)
    b = gf2.row_reduce(m)
    assert (m == before).all()
    assert all((x == y).all() for x, y in zip((a[0], a[2]), (b[0], b[2])))


def test_matrix_text_roundtrip():
    m = np.random.default_rng(1).integers(0, 2, (4, 9)).astype(np.uint8)
    text = gf2.format_matrix(m)
    assert text.splitlines()[0] == "4 9"
    assert (gf2.parse_matrix(text) == m).all()
    with pytest.raises(ValueError):
        gf2.parse_matrix("2 3\n010\n")
