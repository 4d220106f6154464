"""Polynomial basis families and the packed weight vector.

Each basis function is stored by its monomial coefficients so that integrals
against history segments reduce to the moments int th^a x_t(th) dth. For
the two-variable families, ``coef[p, a, b]`` multiplies xi^a th^b.

Weight vector layout (blocks in order, vec = column stacking):

    W0 (n(n+1)/2) | vec W1 (n^2 x N_phi) | vec W2 (n x N_psi)
    | vec W3 (n(n-1)/2 x N_lambda) | U0 = vec K0 (n m) | vec U1 (n m x N_phi)
"""

from dataclasses import dataclass

import numpy as np

from .simulation import FeedbackLaw, theta_grid
from .value import ValueKernel
from .veckit import tri_size, upper_pairs, vecs, vecs_inv


@dataclass(frozen=True, eq=False)
class BasisSet:
    degree: int
    tau: float
    phi_coef: np.ndarray     # (N_phi, d+1)
    psi_coef: np.ndarray     # (N_psi, d+1, d+1), symmetric in the last two axes
    lambda_coef: np.ndarray  # (N_lambda, d+1, d+1)

    @property
    def sizes(self):
        return (self.phi_coef.shape[0], self.psi_coef.shape[0], self.lambda_coef.shape[0])

    def phi(self, th):
        th = np.asarray(th, dtype=float)
        mono = th[..., None] ** np.arange(self.degree + 1)
        return mono @ self.phi_coef.T

    def _two_var(self, coef, xi, th):
        xi, th = np.broadcast_arrays(np.asarray(xi, float), np.asarray(th, float))
        powers = np.arange(self.degree + 1)
        mx = xi[..., None] ** powers
        mt = th[..., None] ** powers
        return np.einsum("...a,pab,...b->...p", mx, coef, mt)

    def psi(self, xi, th):
        return self._two_var(self.psi_coef, xi, th)

    def lam(self, xi, th):
        return self._two_var(self.lambda_coef, xi, th)


def polynomial_basis(degree, tau):
    """Monomial families of the given degree.

    Phi = [1, th, ..., th^d]; Psi = {xi^a th^b + xi^b th^a : a <= b}, ordered
    by total degree then a (diagonal terms xi^a th^a appear once);
    Lambda = [1, th, ..., th^d] (x) [1, xi, ..., xi^d].
    """
    if degree < 0:
        raise ValueError("degree must be non-negative")
    d1 = degree + 1
    phi = np.eye(d1)
    pairs = sorted(((a, b) for a in range(d1) for b in range(a, d1)), key=lambda p: (p[0] + p[1], p[0]))
    psi = np.zeros((len(pairs), d1, d1))
    for p, (a, b) in enumerate(pairs):
        psi[p, a, b] = 1.0
        psi[p, b, a] = 1.0
    lam = np.zeros((d1 * d1, d1, d1))
    for i in range(d1):        # power of th
        for j in range(d1):    # power of xi
            lam[i * d1 + j, j, i] = 1.0
    return BasisSet(degree, float(tau), phi, psi, lam)


def _sizes(N):
    if np.ndim(N) == 0:
        return int(N), int(N), int(N)
    return tuple(int(v) for v in N)


def block_sizes(n, m, N):
    """Lengths of the six weight blocks for basis sizes N (int or triple)."""
    Nphi, Npsi, Nlam = _sizes(N)
    return (tri_size(n), n * n * Nphi, n * Npsi, tri_size(n, strict=True) * Nlam,
            n * m, n * m * Nphi)


def block_bounds(n, m, N):
    """Start offsets of each block plus the total length."""
    return np.concatenate([[0], np.cumsum(block_sizes(n, m, N))])


def pack(W0, W1, W2, W3, U0, U1):
    W0, U0 = np.ravel(W0), np.ravel(U0)
    W1, W2, W3, U1 = (np.atleast_2d(np.asarray(w, dtype=float)) for w in (W1, W2, W3, U1))
    n = int(round((np.sqrt(8 * W0.size + 1) - 1) / 2))
    if tri_size(n) != W0.size:
        raise ValueError("W0 length is not a triangular number")
    n2 = tri_size(n, strict=True)
    if W1.shape[0] != n * n or W2.shape[0] != n or U0.size % n or U1.shape[0] != U0.size:
        raise ValueError("weight block shapes are inconsistent")
    if W3.size and W3.shape[0] != n2:
        raise ValueError("W3 must have n(n-1)/2 rows")
    if U1.shape[1] != W1.shape[1]:
        raise ValueError("W1 and U1 must share the Phi basis size")
    parts = [W0, W1.ravel(order="F"), W2.ravel(order="F"), W3.ravel(order="F"),
             U0, U1.ravel(order="F")]
    return np.concatenate(parts).astype(float)


def unpack(upsilon, n, m, N):
    upsilon = np.asarray(upsilon, dtype=float)
    bounds = block_bounds(n, m, N)
    if upsilon.size != bounds[-1]:
        raise ValueError(f"weight vector has length {upsilon.size}, expected {bounds[-1]}")
    Nphi, Npsi, Nlam = _sizes(N)
    n2 = tri_size(n, strict=True)
    blk = [upsilon[bounds[i]:bounds[i + 1]] for i in range(6)]
    return (blk[0].copy(),
            blk[1].reshape((n * n, Nphi), order="F"),
            blk[2].reshape((n, Npsi), order="F"),
            blk[3].reshape((n2, Nlam), order="F"),
            blk[4].copy(),
            blk[5].reshape((n * m, Nphi), order="F"))


def weight_labels(n, m, N):
    """Human-readable label for every entry of the weight vector."""
    Nphi, Npsi, Nlam = _sizes(N)
    r, c = upper_pairs(n)
    labels = [f"W0[p{a+1}{b+1}]" for a, b in zip(r, c)]
    labels += [f"W1[{i}|phi{p}]" for p in range(Nphi) for i in range(n * n)]
    labels += [f"W2[{i}|psi{p}]" for p in range(Npsi) for i in range(n)]
    labels += [f"W3[{i}|lam{p}]" for p in range(Nlam) for i in range(tri_size(n, True))]
    labels += [f"U0[{i}]" for i in range(n * m)]
    labels += [f"U1[{i}|phi{p}]" for p in range(Nphi) for i in range(n * m)]
    return labels


def reconstruct_kernel(upsilon, basis, n, m, G):
    W0, W1, W2, W3, _, _ = unpack(upsilon, n, m, basis.sizes)
    th = theta_grid(basis.tau, G)
    P0 = vecs_inv(W0)
    P1 = np.stack([v.reshape(n, n, order="F") for v in basis.phi(th) @ W1.T])
    XI, TH = np.meshgrid(th, th, indexing="ij")
    P2 = np.zeros((G + 1, G + 1, n, n))
    idx = np.arange(n)
    P2[:, :, idx, idx] = basis.psi(XI, TH) @ W2.T
    ru, cu = upper_pairs(n, strict=True)
    if ru.size:
        upper = 0.5 * (basis.lam(XI, TH) @ W3.T)            # (G+1, G+1, n2)
        P2[:, :, ru, cu] = upper
        P2[:, :, cu, ru] = upper.transpose(1, 0, 2)
    return ValueKernel(P0, P1, P2, basis.tau)


def reconstruct_law(upsilon, basis, n, m, G):
    _, _, _, _, U0, U1 = unpack(upsilon, n, m, basis.sizes)
    th = theta_grid(basis.tau, G)
    K0 = U0.reshape(m, n, order="F")
    K1 = np.stack([v.reshape(m, n, order="F") for v in basis.phi(th) @ U1.T])
    return FeedbackLaw(K0, K1, basis.tau)


def _fit(design, targets):
    coef, *_ = np.linalg.lstsq(design, targets, rcond=None)
    return coef.T


def project_law(law, basis):
    """Least-squares fit of (K0, K1) onto Phi over the law's grid.
    Returns (U0, U1)."""
    m, n = law.m, law.n
    th = law.theta
    U0 = law.K0.reshape(-1, order="F")
    targets = law.K1.transpose(0, 2, 1).reshape(law.G + 1, m * n)  # vec per node
    return U0, _fit(basis.phi(th), targets)


def project_kernel(V, basis):
    """Least-squares fit of a value kernel onto the basis on the kernel grid.
    Returns (W0, W1, W2, W3)."""
    n, G = V.n, V.G
    th = V.theta
    W0 = vecs(0.5 * (V.P0 + V.P0.T))
    W1 = _fit(basis.phi(th), V.P1.transpose(0, 2, 1).reshape(G + 1, n * n))
    XI, TH = np.meshgrid(th, th, indexing="ij")
    idx = np.arange(n)
    diag = V.P2[:, :, idx, idx].reshape(-1, n)
    W2 = _fit(basis.psi(XI, TH).reshape(-1, basis.sizes[1]), diag)
    ru, cu = upper_pairs(n, strict=True)
    if ru.size:
        upper = 2.0 * V.P2[:, :, ru, cu].reshape(-1, ru.size)
        W3 = _fit(basis.lam(XI, TH).reshape(-1, basis.sizes[2]), upper)
    else:
        W3 = np.zeros((0, basis.sizes[2]))
    return W0, W1, W2, W3


def project(V, law_next, basis):
    """Weight vector of a kernel and the improved law it induces."""
    W0, W1, W2, W3 = project_kernel(V, basis)
    U0, U1 = project_law(law_next, basis)
    return pack(W0, W1, W2, W3, U0, U1)


def weights_to_dict(upsilon, n, m, basis):
    """Flat weight vector plus the metadata needed to unpack it."""
    return {"n": n, "m": m, "N": list(basis.sizes), "degree": basis.degree, "tau": basis.tau,
            "upsilon": np.asarray(upsilon, float).tolist()}


def weights_from_dict(d):
    """Returns (upsilon, n, m, basis) from ``weights_to_dict`` output."""
    basis = polynomial_basis(d["degree"], d["tau"])
    if list(basis.sizes) != list(d["N"]):
        raise ValueError("basis sizes do not match the stored weight layout")
    upsilon = np.array(d["upsilon"], dtype=float)
    unpack(upsilon, d["n"], d["m"], basis.sizes)
    return upsilon, d["n"], d["m"], basis
