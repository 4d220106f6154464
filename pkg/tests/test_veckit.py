import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from delay_adp.veckit import diag, kron, vec, vec_inv, vecd, vecp, vecs, vecs_inv, vecu, vecv


def test_vec_examples():
    assert vec([[1, 2], [3, 4]]).tolist() == [1, 3, 2, 4]
    assert vec(np.eye(2)).tolist() == [1, 0, 0, 1]
    assert vec([[5]]).tolist() == [5]


def test_vec_rejects_non_square():
    with pytest.raises(ValueError):
        vec(np.ones((2, 3)))


def test_vec_inv_round_trip():
    A = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(vec_inv(A.reshape(-1, order="F"), (2, 3)), A)


def test_vecs_examples():
    assert vecs([[1, 2], [2, 3]]).tolist() == [1, 4, 3]
    assert vecs(np.eye(2)).tolist() == [1, 0, 1]
    assert vecs_inv([1, 4, 3]).tolist() == [[1, 2], [2, 3]]


def test_vecs_errors():
    with pytest.raises(ValueError):
        vecs([[1, 2], [0, 3]])
    with pytest.raises(ValueError):
        vecs_inv([1, 2])


def test_vecu_and_diag_examples():
    P = [[1, 2], [2, 3]]
    assert vecu(P).tolist() == [4]
    assert diag(P).tolist() == [1, 3]
    assert vecu(np.eye(3)).tolist() == [0, 0, 0]
    assert diag(np.zeros((2, 2))).tolist() == [0, 0]
    with pytest.raises(ValueError):
        vecu([[1, 1], [0, 1]])


def test_vector_products():
    assert vecd([1, 2], [3, 4]).tolist() == [3, 8]
    assert vecv([1, 2]).tolist() == [1, 2, 4]
    assert vecp([1, 2, 3], [4, 5, 6]).tolist() == [5, 6, 12]
    with pytest.raises(ValueError):
        vecd([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        vecp([1, 2], [1])


def test_kron_examples():
    assert kron([2], np.eye(2)).tolist() == [[2, 0], [0, 2]]
    assert kron(np.eye(2), [3]).tolist() == [[3, 0], [0, 3]]
    assert kron([[1, 2]], [[0, 1]]).tolist() == [[0, 1, 0, 2]]


def test_quadratic_form_identity_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = rng.integers(1, 7)
        S = rng.standard_normal((n, n))
        P = S + S.T
        x = rng.standard_normal(n)
        lhs = x @ P @ x
        assert abs(vecv(x) @ vecs(P) - lhs) <= 1e-12 * max(1.0, abs(lhs))


def test_kron_vec_identity():
    # vec(A X B) = (B' kron A) vec(X)
    rng = np.random.default_rng(1)
    for _ in range(20):
        A, X, B = (rng.standard_normal((3, 3)) for _ in range(3))
        assert np.allclose(kron(B.T, A) @ vec(X), vec(A @ X @ B), atol=1e-12)


sym = st.integers(1, 6).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(-1e3, 1e3, allow_nan=False)))


@settings(max_examples=60, deadline=None)
@given(sym)
def test_vecs_round_trip(S):
    P = S + S.T
    assert np.allclose(vecs_inv(vecs(P)), P, rtol=0, atol=1e-12 * max(1.0, np.abs(P).max()))


@settings(max_examples=60, deadline=None)
@given(sym)
def test_vecs_splits_into_diag_and_vecu(S):
    P = S + S.T
    n = P.shape[0]
    r, c = np.triu_indices(n)
    w = vecs(P)
    assert np.array_equal(w[r == c], diag(P))
    assert np.array_equal(w[r != c], vecu(P))
