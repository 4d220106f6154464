"""Model-based policy iteration for linear time-delay plants.

Policy evaluation solves, for the current gains (K0, K1), the linear system

    Ai'P0 + P0 Ai + Qi + P1(0) + P1(0)' = 0
    dP1/dth = Ai'P1 - P0 B K1 + K0'R K1 + P2(0, th)
    (d/dxi + d/dth) P2 = K1(xi)'R K1(th) - K1(xi)'B'P1(th) - P1(xi)'B K1(th)
    P1(-tau) = P0 Ad,   P2(-tau, th) = Ad'P1(th)

with Ai = A - B K0 and Qi = Q + K0'R K0. The transport right-hand side is
the symmetrized form (f(xi, th) + f(th, xi)') / 2 of
K1(xi)'R K1(th) - 2 K1(xi)'B'P1(th); both give the same value functional
and only the symmetrized one keeps P2(xi, th)' = P2(th, xi).

Discretization on the uniform grid th_k = -tau + k h, h = tau / G:

* the P1 ODE uses the box (trapezoid) scheme between neighbouring nodes;
* the transport PDE is differenced along its characteristic (1, 1) between
  (j-1, k-1) and (j, k), with the right-hand side averaged over both ends;
* P2 unknowns are kept only for xi <= th (j <= k) and the lower region is
  read through the symmetry relation.

Together with the boundary conditions this gives a square sparse system,
solved directly in one shot.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import NumericalError
from .simulation import FeedbackLaw, SegmentState, decay_rate, simulate
from .value import ValueKernel
from .veckit import tri_size, upper_pairs

log = logging.getLogger(__name__)

SOLVE_RTOL = 1e-6


class _Layout:
    """Column and row bookkeeping for the collocation unknowns."""

    def __init__(self, n, G):
        self.n, self.G = n, G
        nn = n * n
        self.n1 = tri_size(n)
        self.npairs = (G + 1) * (G + 2) // 2
        self.off1 = self.n1
        self.off2 = self.n1 + (G + 1) * nn
        self.ncols = self.off2 + self.npairs * nn
        sym = np.empty((n, n), dtype=int)
        r, c = upper_pairs(n)
        sym[r, c] = np.arange(self.n1)
        sym[c, r] = np.arange(self.n1)
        self.sym = sym
        self.local = np.arange(nn).reshape(n, n)
        # row offsets of the equation groups
        self.row_p0 = 0
        self.row_p1bc = self.n1
        self.row_p1 = self.row_p1bc + nn
        self.row_p2bc = self.row_p1 + G * nn
        self.row_p2 = self.row_p2bc + (G + 1) * nn
        self.nrows = self.row_p2 + (self.npairs - (G + 1)) * nn

    def pair_index(self, j, k):
        N1 = self.G + 1
        return j * N1 - j * (j - 1) // 2 + (k - j)

    def p0(self, nb=1):
        return np.broadcast_to(self.sym, (nb, self.n, self.n))

    def p1(self, k, transpose=False):
        k = np.atleast_1d(k)
        loc = self.local.T if transpose else self.local
        return self.off1 + k[:, None, None] * self.n ** 2 + loc[None]

    def p2(self, j, k):
        """Columns of P2(xi_j, th_k) entries, reading j > k through symmetry."""
        j, k = np.broadcast_arrays(np.atleast_1d(j), np.atleast_1d(k))
        swap = j > k
        lo, hi = np.where(swap, k, j), np.where(swap, j, k)
        base = self.off2 + self.pair_index(lo, hi) * self.n ** 2
        loc = np.where(swap[:, None, None], self.local.T[None], self.local[None])
        return base[:, None, None] + loc

    def rows(self, start, nb):
        return start + np.arange(nb)[:, None, None] * self.n ** 2 + self.local[None]

    def upper_pairs(self):
        j, k = np.triu_indices(self.G + 1)
        return j, k


class _Assembler:
    def __init__(self, nrows, ncols):
        self.shape = (nrows, ncols)
        self.rows, self.cols, self.vals = [], [], []
        self.rhs = np.zeros(nrows)

    def add(self, rows, cols, coef=1.0, left=None, right=None):
        """Add coef * left @ X @ right, X being the unknown block at ``cols``.

        rows, cols: (nb, n, n) index tables; left/right: (nb, n, n) or (n, n).
        """
        nb, n, _ = rows.shape
        if left is not None:
            left = np.broadcast_to(left, (nb, n, n))
            R = np.broadcast_to(rows[:, :, :, None], (nb, n, n, n))
            C = np.broadcast_to(cols.transpose(0, 2, 1)[:, None, :, :], (nb, n, n, n))
            V = np.broadcast_to(coef * left[:, :, None, :], (nb, n, n, n))
        elif right is not None:
            right = np.broadcast_to(right, (nb, n, n))
            R = np.broadcast_to(rows[:, :, :, None], (nb, n, n, n))
            C = np.broadcast_to(cols[:, :, None, :], (nb, n, n, n))
            V = np.broadcast_to(coef * right.transpose(0, 2, 1)[:, None, :, :], (nb, n, n, n))
        else:
            R, C = rows, cols
            V = np.broadcast_to(np.asarray(coef, dtype=float).reshape(-1, 1, 1)
                                if np.ndim(coef) else coef, rows.shape)
        self.rows.append(np.ravel(R))
        self.cols.append(np.ravel(C))
        self.vals.append(np.ravel(V).astype(float))

    def add_rhs(self, rows, values):
        np.add.at(self.rhs, np.ravel(rows), np.ravel(np.broadcast_to(values, rows.shape)))

    def matrix(self):
        return sp.csc_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=self.shape)


def _check_inputs(sys, Q, R):
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if Q.shape != (sys.n, sys.n) or R.shape != (sys.m, sys.m):
        raise ValueError("Q or R has the wrong shape")
    if np.linalg.eigvalsh(0.5 * (R + R.T)).min() <= 0:
        raise ValueError("R must be positive definite")
    return Q, R


def assemble_evaluation(sys, Q, R, law, G):
    """Build the sparse collocation system for evaluating ``law``.

    Returns (matrix, rhs, layout).
    """
    Q, R = _check_inputs(sys, Q, R)
    n = sys.n
    A, Ad, B = sys.A, sys.Ad, sys.B
    law = law.resample(G)
    K0, K1 = law.K0, law.K1
    h = sys.tau / G
    lay = _Layout(n, G)
    asm = _Assembler(lay.nrows, lay.ncols)
    Ai = A - B @ K0
    Qi = Q + K0.T @ R @ K0
    BK1 = np.einsum("ij,kjl->kil", B, K1)              # B K1(th_k)
    K1tBt = BK1.transpose(0, 2, 1)                      # K1(th_k)' B'
    K0tRK1 = np.einsum("ji,jk,gkl->gil", K0, R, K1)     # K0' R K1(th_k)

    # algebraic equation for P0; (a, b) and (b, a) rows coincide -> symmetrized
    rows = (lay.row_p0 + lay.sym)[None]
    asm.add(rows, lay.p0(), left=Ai.T)
    asm.add(rows, lay.p0(), right=Ai)
    asm.add(rows, lay.p1(G))
    asm.add(rows, lay.p1(G, transpose=True))
    asm.add_rhs(rows, -Qi)

    # P1(-tau) = P0 Ad
    rows = lay.rows(lay.row_p1bc, 1)
    asm.add(rows, lay.p1(0))
    asm.add(rows, lay.p0(), coef=-1.0, right=Ad)

    # P1 ODE, box scheme on [th_{k-1}, th_k]
    k = np.arange(1, G + 1)
    rows = lay.rows(lay.row_p1, G)
    asm.add(rows, lay.p1(k), coef=1.0 / h)
    asm.add(rows, lay.p1(k - 1), coef=-1.0 / h)
    for kk in (k, k - 1):
        asm.add(rows, lay.p1(kk), coef=-0.5, left=Ai.T)
        asm.add(rows, lay.p0(G), coef=0.5, right=BK1[kk])
        asm.add(rows, lay.p2(np.full_like(kk, G), kk), coef=-0.5)
    asm.add_rhs(rows, 0.5 * (K0tRK1[k] + K0tRK1[k - 1]))

    # P2(-tau, th) = Ad' P1(th)
    k = np.arange(G + 1)
    rows = lay.rows(lay.row_p2bc, G + 1)
    asm.add(rows, lay.p2(np.zeros_like(k), k))
    asm.add(rows, lay.p1(k), coef=-1.0, left=Ad.T)

    # transport along (1, 1) for pairs j <= k with j >= 1
    jj, kk = lay.upper_pairs()
    keep = jj >= 1
    jj, kk = jj[keep], kk[keep]
    nb = jj.size
    rows = lay.rows(lay.row_p2, nb)
    asm.add(rows, lay.p2(jj, kk), coef=1.0 / h)
    asm.add(rows, lay.p2(jj - 1, kk - 1), coef=-1.0 / h)
    rhs = np.zeros((nb, n, n))
    for a, b in ((jj, kk), (jj - 1, kk - 1)):
        asm.add(rows, lay.p1(b), coef=0.5, left=K1tBt[a])
        asm.add(rows, lay.p1(a, transpose=True), coef=0.5, right=BK1[b])
        rhs += 0.5 * np.einsum("gji,jk,gkl->gil", K1[a], R, K1[b])
    asm.add_rhs(rows, rhs)
    return asm.matrix(), asm.rhs, lay


def _unpack(x, lay, tau):
    n, G = lay.n, lay.G
    P0 = x[lay.sym]
    P1 = x[lay.off1:lay.off2].reshape(G + 1, n, n)
    stored = x[lay.off2:].reshape(lay.npairs, n, n)
    j, k = lay.upper_pairs()
    P2 = np.empty((G + 1, G + 1, n, n))
    P2[j, k] = stored
    P2[k, j] = stored.transpose(0, 2, 1)
    return ValueKernel(P0, P1, P2, tau)


def policy_evaluation(sys, Q, R, law, G=100):
    """Value kernel of ``law`` on a G-interval grid.

    Returns (kernel, relative residual of the linear solve).
    """
    M, b, lay = assemble_evaluation(sys, Q, R, law, G)
    x = spsolve(M, b)
    if not np.all(np.isfinite(x)):
        raise NumericalError("policy evaluation produced a non-finite kernel; "
                             "the law is probably not admissible")
    bnorm = np.linalg.norm(b)
    res = np.linalg.norm(M @ x - b) / (bnorm if bnorm > 0 else 1.0)
    if res > SOLVE_RTOL:
        raise NumericalError(f"collocation solve residual {res:.2e} exceeds {SOLVE_RTOL:.0e}")
    return _unpack(x, lay, sys.tau), float(res)


def policy_improvement(V, B, R):
    """K0 = R^-1 B'P0, K1(th) = R^-1 B'P1(th) on the kernel grid."""
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if np.linalg.cond(R) > 1e14:
        raise ValueError("R is singular")
    RinvBt = np.linalg.solve(R, B.T)
    K0 = RinvBt @ V.P0
    K1 = np.einsum("ij,gjk->gik", RinvBt, V.P1)
    return FeedbackLaw(K0, K1, V.tau)


def riccati_residuals(sys, Q, R, V):
    """Normalized residual of each equation group of the Riccati PDE system,
    discretized exactly as in policy evaluation, with K = R^-1 B'P."""
    Q, R = _check_inputs(sys, Q, R)
    A, Ad, B = sys.A, sys.Ad, sys.B
    G, h = V.G, V.tau / V.G
    P0, P1, P2 = V.P0, V.P1, V.P2
    S = B @ np.linalg.solve(R, B.T)

    # floor for groups whose terms all vanish (e.g. P1 = P2 = 0 without delay)
    floor = 1e-12 * max(np.max(np.abs(P0)), np.max(np.abs(Q)), 1e-300) / min(V.tau, 1.0) ** 2

    def ratio(res, *terms):
        top = np.max(np.abs(res))
        if top == 0:
            return 0.0
        scale = max(np.max(np.abs(t)) for t in terms)
        return float(top / max(scale, floor))

    out = {}
    t1, t2 = A.T @ P0 + P0 @ A, P0 @ S @ P0
    t3 = P1[G] + P1[G].T
    out["algebraic"] = ratio(t1 - t2 + t3 + Q, t1, t2, t3, Q)

    dP1 = (P1[1:] - P1[:-1]) / h
    f = np.einsum("ij,gjk->gik", (A.T - P0 @ S), P1) + P2[G]
    favg = 0.5 * (f[1:] + f[:-1])
    out["p1_ode"] = ratio(dP1 - favg, dP1, favg)

    dP2 = (P2[1:, 1:] - P2[:-1, :-1]) / h
    quad = np.einsum("jba,bc,kcd->jkad", P1, S, P1)
    qavg = 0.5 * (quad[1:, 1:] + quad[:-1, :-1])
    out["transport"] = ratio(dP2 + qavg, dP2, qavg)

    out["p1_boundary"] = ratio(P1[0] - P0 @ Ad, P1[0], P0 @ Ad)
    AdP1 = np.einsum("ji,gjk->gik", Ad, P1)
    out["p2_boundary"] = ratio(P2[0] - AdP1, P2[0], AdP1)
    return out


def riccati_residual(sys, Q, R, V):
    return max(riccati_residuals(sys, Q, R, V).values())


@dataclass
class PIStep:
    """One policy-iteration step: ``kernel`` evaluates ``law``; ``improved``
    is the greedy update computed from it."""
    kernel: ValueKernel
    law: FeedbackLaw
    improved: FeedbackLaw
    solve_residual: float
    riccati_residual: float
    gain_change: float

    def to_dict(self, include_kernel=True):
        d = {"law": self.law.to_dict(), "improved": self.improved.to_dict(),
             "solve_residual": self.solve_residual, "riccati_residual": self.riccati_residual,
             "gain_change": self.gain_change}
        if include_kernel:
            d["kernel"] = self.kernel.to_dict()
        return d


def write_steps_json(steps, path, include_kernel=True):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([s.to_dict(include_kernel) for s in steps], fh, indent=2)


def check_admissible(sys, law, horizon_delays=30, steps_per_delay=100):
    """Simulate the closed loop from a fixed smooth history and require a
    decaying exponential envelope. Returns the fitted decay rate."""
    th_scale = 2 * np.pi / sys.tau
    x0 = SegmentState.from_function(
        lambda th: np.cos(th_scale * th + np.arange(sys.n)), sys.tau, steps_per_delay)
    dt = sys.tau / steps_per_delay
    traj = simulate(sys, law, None, x0, horizon_delays * sys.tau, dt)
    lam = decay_rate(traj)
    if not lam > 0:
        raise NumericalError(f"initial law is not admissible: fitted envelope rate {lam:.3g} <= 0")
    return lam


def gain_change(a, b):
    return float(max(np.max(np.abs(a.K0 - b.K0)), np.max(np.abs(a.K1 - b.K1))))


def run_model_pi(sys, Q, R, law_1, G=100, tol_delta=1e-8, max_iter=30, check_initial=True):
    """Alternate policy evaluation and improvement from an admissible law.

    Stops when the sup-norm change of (K0, K1) drops below ``tol_delta`` or
    after ``max_iter`` evaluations. Aborts if the Riccati residual grows for
    three consecutive iterations.
    """
    Q, R = _check_inputs(sys, Q, R)
    if check_initial:
        check_admissible(sys, law_1)
    law = law_1.resample(G)
    steps = []
    growth = 0
    for it in range(max_iter):
        V, res = policy_evaluation(sys, Q, R, law, G)
        improved = policy_improvement(V, sys.B, R)
        ric = riccati_residual(sys, Q, R, V)
        delta = gain_change(improved, law)
        steps.append(PIStep(V, law, improved, res, ric, delta))
        log.info("model PI iter %d: gain change %.3e, Riccati residual %.3e", it + 1, delta, ric)
        if len(steps) > 1 and ric > max(steps[-2].riccati_residual, 1e-10):
            growth += 1
            if growth >= 3:
                raise NumericalError(
                    f"policy iteration diverging: Riccati residual grew 3 times in a row "
                    f"(now {ric:.3e} at iteration {it + 1})")
        else:
            growth = 0
        law = improved
        if delta < tol_delta:
            break
    return steps
