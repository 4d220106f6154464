import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delay_adp.basis import (block_sizes, pack, polynomial_basis, project, project_kernel,
                             project_law, reconstruct_kernel, reconstruct_law, unpack,
                             weight_labels, weights_from_dict, weights_to_dict)
from delay_adp.simulation import FeedbackLaw, theta_grid
from delay_adp.value import ValueKernel


def test_family_sizes():
    assert polynomial_basis(3, 1.3).sizes == (4, 10, 16)
    b0 = polynomial_basis(0, 1.0)
    assert b0.sizes == (1, 1, 1)
    assert np.allclose(b0.phi([-0.3, 0.0]), 1) and np.allclose(b0.psi(-0.2, -0.7), 1)
    with pytest.raises(ValueError):
        polynomial_basis(-1, 1.0)


def test_psi_listed_family_for_degree_three():
    b = polynomial_basis(3, 1.0)
    xi, th = -0.3, -0.8
    listed = [1, xi + th, xi**2 + th**2, xi * th, xi**3 + th**3, xi**2 * th + xi * th**2,
              xi**3 * th + xi * th**3, xi**2 * th**2, xi**3 * th**2 + xi**2 * th**3, xi**3 * th**3]
    assert np.allclose(np.sort(b.psi(xi, th)), np.sort(listed))


def test_psi_symmetry_and_independence():
    b = polynomial_basis(3, 1.3)
    rng = np.random.default_rng(0)
    xi, th = rng.uniform(-1.3, 0, (2, 100))
    assert np.max(np.abs(b.psi(xi, th) - b.psi(th, xi))) < 1e-12
    assert np.allclose(b.psi(-1, -2), b.psi(-2, -1))
    g = np.linspace(-1.3, 0, 41)
    XI, TH = np.meshgrid(g, g, indexing="ij")
    for F in (b.phi(g), b.psi(XI, TH).reshape(-1, 10), b.lam(XI, TH).reshape(-1, 16)):
        assert np.linalg.cond(F.T @ F) < 1e12


def test_block_sizes_examples():
    assert sum(block_sizes(1, 1, 1)) == 5
    assert block_sizes(2, 1, 4) == (3, 16, 8, 4, 2, 8)
    assert sum(block_sizes(2, 1, 4)) == 41
    assert len(weight_labels(2, 1, (4, 10, 16))) == sum(block_sizes(2, 1, (4, 10, 16)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_pack_unpack_round_trip(n, m, N, seed):
    rng = np.random.default_rng(seed)
    n1, n2 = n * (n + 1) // 2, n * (n - 1) // 2
    blocks = (rng.standard_normal(n1), rng.standard_normal((n * n, N)), rng.standard_normal((n, N)),
              rng.standard_normal((n2, N)), rng.standard_normal(n * m), rng.standard_normal((n * m, N)))
    ups = pack(*blocks)
    for a, b in zip(blocks, unpack(ups, n, m, N)):
        assert np.array_equal(np.reshape(a, b.shape), b)


def test_unpack_rejects_wrong_length():
    with pytest.raises(ValueError):
        unpack(np.zeros(40), 2, 1, 4)
    with pytest.raises(ValueError):
        pack(np.zeros(2), np.zeros((4, 1)), np.zeros((2, 1)), np.zeros((1, 1)), np.zeros(2), np.zeros((2, 1)))


def test_zero_weights_reconstruct_zero():
    b = polynomial_basis(2, 1.0)
    ups = np.zeros(sum(block_sizes(2, 1, b.sizes)))
    V = reconstruct_kernel(ups, b, 2, 1, 10)
    law = reconstruct_law(ups, b, 2, 1, 10)
    assert not np.any(V.P0) and not np.any(V.P1) and not np.any(V.P2)
    assert not np.any(law.K0) and not np.any(law.K1)


def test_constant_basis_gives_constant_p1():
    b = polynomial_basis(0, 1.0)
    ups = pack([0.0], [[2.5]], [[0.0]], np.zeros((0, 1)), [0.0], [[0.0]])
    V = reconstruct_kernel(ups, b, 1, 1, 8)
    assert np.all(V.P1 == 2.5)


def polynomial_kernel(tau, G, rng):
    """A symmetric kernel whose entries are degree-3 polynomials."""
    th = theta_grid(tau, G)
    n = 2
    S = rng.standard_normal((n, n))
    c1 = rng.standard_normal((4, n, n))
    P1 = np.einsum("ga,aij->gij", th[:, None] ** np.arange(4), c1)
    c2 = rng.standard_normal((4, 4, n, n))
    c2 = 0.5 * (c2 + c2.transpose(1, 0, 3, 2))
    mono = th[:, None] ** np.arange(4)
    P2 = np.einsum("ja,kb,abpq->jkpq", mono, mono, c2)
    return ValueKernel(S + S.T, P1, P2, tau)


def test_projection_is_exact_on_polynomials():
    rng = np.random.default_rng(3)
    b = polynomial_basis(3, 1.3)
    V = polynomial_kernel(1.3, 30, rng)
    K1 = np.einsum("ga,aij->gij", theta_grid(1.3, 30)[:, None] ** np.arange(4), rng.standard_normal((4, 1, 2)))
    law = FeedbackLaw(rng.standard_normal((1, 2)), K1, 1.3)
    ups = project(V, law, b)
    V2 = reconstruct_kernel(ups, b, 2, 1, 30)
    law2 = reconstruct_law(ups, b, 2, 1, 30)
    for a, c in ((V.P0, V2.P0), (V.P1, V2.P1), (V.P2, V2.P2), (law.K0, law2.K0), (law.K1, law2.K1)):
        assert np.max(np.abs(a - c)) < 1e-10 * max(1.0, np.max(np.abs(a)))
    V2.check_symmetry()


def test_projection_error_is_bounded_by_fit_residual():
    th = theta_grid(1.0, 50)
    b = polynomial_basis(2, 1.0)
    K1 = np.exp(2 * th)[:, None, None] * np.ones((1, 1, 1))
    law = FeedbackLaw([[1.0]], K1, 1.0)
    U0, U1 = project_law(law, b)
    fit = b.phi(th) @ U1.T
    resid = np.max(np.abs(fit[:, 0] - K1[:, 0, 0]))
    rec = reconstruct_law(pack([0.0], np.zeros((1, 3)), np.zeros((1, 6)), np.zeros((0, 9)), U0, U1), b, 1, 1, 50)
    assert np.max(np.abs(rec.K1 - K1)) <= resid + 1e-12


def test_project_kernel_block_shapes():
    V = polynomial_kernel(1.0, 10, np.random.default_rng(0))
    W0, W1, W2, W3 = project_kernel(V, polynomial_basis(3, 1.0))
    assert W0.shape == (3,) and W1.shape == (4, 4) and W2.shape == (2, 10) and W3.shape == (1, 16)


def test_weight_json_round_trip():
    b = polynomial_basis(3, 1.3)
    ups = np.arange(sum(block_sizes(2, 1, b.sizes)), dtype=float)
    back, n, m, b2 = weights_from_dict(weights_to_dict(ups, 2, 1, b))
    assert np.array_equal(back, ups) and (n, m) == (2, 1) and b2.sizes == b.sizes
