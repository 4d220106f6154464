"""Data-driven policy iteration from a single exploratory trajectory.

Along any trajectory driven by an input u, the value V_i of the law u_i obeys

    V_i(x_{t_k+1}) - V_i(x_{t_k}) - 2 int (u - u_i)' R u_{i+1} dt
        = -int x'Qx + u_i' R u_i dt

which is linear in the basis weights of (P0, P1, P2) and of the improved law
u_{i+1}. Stacking one such row per time segment gives M Y = Upsilon, solved by
least squares. The trajectory is recorded once and reused every iteration.

Basis integrals over the history window are reduced to the monomial moments

    mom[c, i](t) = int th^c x_i(t + th) dth

computed for every sample at once with an FFT correlation. Double integrals
over (xi, th) factor into products of two moments, which is exact for the
trapezoid (or Simpson) product rule.
"""

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .basis import reconstruct_law, unpack, weight_labels
from .errors import ExcitationError, NumericalError
from .quadrature import weights
from .simulation import FeedbackLaw, Trajectory, law_along, theta_grid, window_correlate
from .veckit import upper_pairs

DEFAULT_ALPHA = 1e-8
DEFAULT_DELTA = 1e-3
DEFAULT_SEGMENT_STEPS = 10
DEFAULT_RCOND = 1e-12


# -- single-segment building blocks -------------------------------------------

def _segment_moments(xt, degree, rule="trapezoid"):
    """mom[c, i] = int th^c x_t(th)_i dth on the segment's own grid."""
    th = xt.theta
    w = weights(xt.G + 1, xt.tau / xt.G, rule)
    mono = th[:, None] ** np.arange(degree + 1)
    return (w[:, None] * mono).T @ xt.samples


def _phi_moments(mom, basis):
    return np.einsum("ac,...ci->...ai", basis.phi_coef, mom)


def _gamma_phi(mom, x, basis):
    mphi = _phi_moments(mom, basis)                          # (..., Nphi, n)
    out = mphi[..., :, :, None] * x[..., None, None, :]      # (..., Nphi, n, n)
    return out.reshape(out.shape[:-3] + (-1,))


def _gamma_psi(mom, basis):
    out = np.einsum("pab,...ai,...bi->...pi", basis.psi_coef, mom, mom)
    return out.reshape(out.shape[:-2] + (-1,))


def _gamma_lambda(mom, basis):
    n = mom.shape[-1]
    ru, cu = upper_pairs(n, strict=True)
    out = np.einsum("pab,...aq,...bq->...pq", basis.lambda_coef, mom[..., ru], mom[..., cu])
    return out.reshape(out.shape[:-2] + (-1,))


def gamma_phi_xx(xt, basis, rule="trapezoid"):
    """int Phi(th) (x) x_t(th) (x) x(t) dth; entry a n^2 + i n + j."""
    return _gamma_phi(_segment_moments(xt, basis.degree, rule), xt.current, basis)


def gamma_psi_xx(xt, basis, rule="trapezoid"):
    """Double integral of Psi(xi, th) (x) vecd(x_t(xi), x_t(th)); entry p n + i."""
    return _gamma_psi(_segment_moments(xt, basis.degree, rule), basis)


def gamma_lambda_xx(xt, basis, rule="trapezoid"):
    """Double integral of Lambda(xi, th) (x) vecp(x_t(xi), x_t(th)); entry p n2 + q."""
    return _gamma_lambda(_segment_moments(xt, basis.degree, rule), basis)


def _time_integral(f, dt, rule="trapezoid"):
    return weights(f.shape[0], dt, rule) @ f


def _xv(x, v, R):
    out = x[..., :, None] * (v @ R.T)[..., None, :]
    return out.reshape(out.shape[:-2] + (-1,))


def g_xv(x, v, R, dt, rule="trapezoid"):
    """int kron(x, R v) dt over one segment given samples x (K, n), v (K, m)."""
    R = np.atleast_2d(np.asarray(R, float))
    return _time_integral(_xv(np.atleast_2d(x), np.atleast_2d(v), R), dt, rule)


def g_phi_xv(segments, v, basis, R, dt, rule="trapezoid"):
    """int int Phi(th) (x) x_t(th) (x) R v(t) dth dt over one segment.

    ``segments`` is a sequence of SegmentState (one per time sample) and
    ``v`` the matching (K, m) exploration residual samples.
    """
    R = np.atleast_2d(np.asarray(R, float))
    mom = np.stack([_segment_moments(s, basis.degree, rule) for s in segments])
    mphi = _phi_moments(mom, basis)
    Rv = np.atleast_2d(v) @ R.T
    f = (mphi[:, :, :, None] * Rv[:, None, None, :]).reshape(len(segments), -1)
    return _time_integral(f, dt, rule)


# -- segments and regression --------------------------------------------------

@dataclass(frozen=True, eq=False)
class SegmentBoundaries:
    """Sample indices t_1 < ... < t_{L+1} into a trajectory's arrays."""
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        if idx.ndim != 1 or idx.size < 2:
            raise ValueError("need at least two boundaries")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("boundaries must be strictly increasing")
        object.__setattr__(self, "indices", idx)

    @property
    def L(self):
        return self.indices.size - 1

    @classmethod
    def uniform(cls, traj, num_segments=None, segment_steps=DEFAULT_SEGMENT_STEPS, start_time=None):
        """Contiguous segments of ``segment_steps`` samples from ``start_time``
        (default t0). ``num_segments`` defaults to as many as fit."""
        start = traj.r if start_time is None else traj.index_of(start_time)
        avail = (traj.x.shape[0] - 1 - start) // segment_steps
        L = avail if num_segments is None else int(num_segments)
        if L < 1 or L > avail:
            raise ValueError(f"{L} segments of {segment_steps} steps do not fit the trajectory "
                             f"({avail} available)")
        return cls(start + segment_steps * np.arange(L + 1))

    def times(self, traj):
        return traj.times[self.indices]

    def check(self, traj):
        if self.indices[0] < traj.r or self.indices[-1] >= traj.x.shape[0]:
            raise ValueError("segment boundaries fall outside the recorded trajectory")


@dataclass(eq=False)
class RegressionData:
    """Stacked regression rows with their provenance (episode, segment)."""
    M: np.ndarray
    Y: np.ndarray
    episodes: np.ndarray
    segments: np.ndarray
    n: int
    m: int
    sizes: tuple

    @property
    def L(self):
        return self.M.shape[0]

    def to_csv(self, path):
        labels = weight_labels(self.n, self.m, self.sizes)
        header = ",".join(["episode", "segment"] + labels + ["Y"])
        data = np.column_stack([self.episodes, self.segments, self.M, self.Y])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def history_moments(traj, degree, rule="trapezoid"):
    """Monomial moments of every segment state in the trajectory.

    Returns mom of shape (T - r, degree+1, n) with mom[s - r] belonging to
    the segment that ends at sample s, integrated on the native dt grid.
    """
    r = traj.r
    th = theta_grid(traj.tau, r)
    w = weights(r + 1, traj.dt, rule)
    W = (w[:, None] * th[:, None] ** np.arange(degree + 1))[:, :, None]   # (r+1, d+1, 1)
    W = np.broadcast_to(W, (r + 1, degree + 1, traj.n))
    return window_correlate(traj.x, W)


class _Episode:
    """Policy-independent pieces of the rows contributed by one trajectory."""

    def __init__(self, traj, boundaries, basis, Q, R, rule):
        boundaries.check(traj)
        if abs(basis.tau - traj.tau) > 1e-12 * max(1.0, traj.tau):
            raise ValueError("basis and trajectory use different delays")
        self.traj, self.basis, self.rule = traj, basis, rule
        self.Q, self.R = Q, R
        self.n, self.m = traj.n, traj.m
        self.b = boundaries.indices
        r = traj.r
        self.span = np.arange(self.b[0], self.b[-1] + 1)
        mom = history_moments(traj, basis.degree, rule)
        self.mphi = _phi_moments(mom[self.span - r], basis)          # (K, Nphi, n)
        self.x = traj.x[self.span]
        self.u = traj.u[self.span]
        if np.isnan(self.u).any():
            raise ValueError("learning window contains samples without recorded input")

        ru, cu = upper_pairs(self.n)
        xb = traj.x[self.b]
        momb = mom[self.b - r]
        state = np.hstack([xb[:, ru] * xb[:, cu], 2.0 * _gamma_phi(momb, xb, basis),
                           _gamma_psi(momb, basis), _gamma_lambda(momb, basis)])
        self.M_state = np.diff(state, axis=0)
        self.xQx = np.einsum("ti,ij,tj->t", self.x, Q, self.x)

    def segment_integrals(self, f):
        """Per-segment time integrals of per-sample values f (K, ...)."""
        out = np.empty((self.b.size - 1,) + f.shape[1:])
        dt = self.traj.dt
        for k in range(self.b.size - 1):
            s0, s1 = self.b[k] - self.b[0], self.b[k + 1] - self.b[0]
            out[k] = _time_integral(f[s0:s1 + 1], dt, self.rule)
        return out

    def policy_input(self, law=None, upsilon=None):
        """u_i along the window, from a FeedbackLaw or from basis weights."""
        if upsilon is not None:
            _, _, _, _, U0, U1 = unpack(upsilon, self.n, self.m, self.basis.sizes)
            K0 = U0.reshape(self.m, self.n, order="F")
            Ks = U1.reshape(self.m, self.n, -1, order="F")            # [j, i, a]
            return -self.x @ K0.T - np.einsum("jia,kai->kj", Ks, self.mphi)
        return law_along(law, self.traj, self.span)

    def build(self, u_hat):
        Rv = (self.u - u_hat) @ self.R.T
        K = self.x.shape[0]
        gxv = (self.x[:, :, None] * Rv[:, None, :]).reshape(K, -1)
        gphi = (self.mphi[:, :, :, None] * Rv[:, None, None, :]).reshape(K, -1)
        g = self.segment_integrals(np.hstack([gxv, gphi]))
        cost = self.xQx + np.einsum("ti,ij,tj->t", u_hat, self.R, u_hat)
        return np.hstack([self.M_state, -2.0 * g]), -self.segment_integrals(cost)


def _episodes(data, boundaries):
    trajs = [data] if isinstance(data, Trajectory) else list(data)
    if not trajs:
        raise ValueError("no trajectories given")
    if boundaries is None:
        bds = [SegmentBoundaries.uniform(t) for t in trajs]
    elif isinstance(boundaries, SegmentBoundaries):
        bds = [boundaries]
    else:
        bds = list(boundaries)
    if len(bds) != len(trajs):
        raise ValueError("need one SegmentBoundaries per trajectory")
    return trajs, bds


class _Regression:
    """Rows from one or more trajectories; only the input-dependent columns
    and Y are rebuilt per policy."""

    def __init__(self, data, boundaries, basis, Q, R, rule="trapezoid"):
        trajs, bds = _episodes(data, boundaries)
        Q = np.atleast_2d(np.asarray(Q, float))
        R = np.atleast_2d(np.asarray(R, float))
        self.episodes = [_Episode(t, b, basis, Q, R, rule) for t, b in zip(trajs, bds)]
        self.n, self.m = self.episodes[0].n, self.episodes[0].m
        if any((e.n, e.m) != (self.n, self.m) for e in self.episodes):
            raise ValueError("trajectories have different state or input sizes")
        self.sizes = basis.sizes
        self.ep_ids = np.concatenate([np.full(e.b.size - 1, i) for i, e in enumerate(self.episodes)])
        self.seg_ids = np.concatenate([np.arange(e.b.size - 1) for e in self.episodes])

    def policy_inputs(self, law=None, upsilon=None):
        return [e.policy_input(law, upsilon) for e in self.episodes]

    def build(self, u_hats):
        parts = [e.build(u) for e, u in zip(self.episodes, u_hats)]
        M = np.vstack([p[0] for p in parts])
        Y = np.concatenate([p[1] for p in parts])
        return RegressionData(M, Y, self.ep_ids, self.seg_ids, self.n, self.m, self.sizes)


def assemble(data, boundaries, law_i, basis, Q, R, rule="trapezoid"):
    """Regression rows for evaluating ``law_i`` (a FeedbackLaw).

    ``data`` is a Trajectory or a sequence of them (independent episodes);
    ``boundaries`` matches it, or None for uniform segments from t0.
    """
    reg = _Regression(data, boundaries, basis, Q, R, rule)
    return reg.build(reg.policy_inputs(law=law_i))


# -- excitation and least squares ---------------------------------------------

class Excitation(tuple):
    __slots__ = ()

    def __new__(cls, passed, min_eig):
        return super().__new__(cls, (bool(passed), float(min_eig)))

    passed = property(lambda self: self[0])
    min_eig = property(lambda self: self[1])


def excitation_check(M, L=None, alpha=DEFAULT_ALPHA):
    """Smallest eigenvalue of (1/L) M'M and whether it clears ``alpha``."""
    M = np.atleast_2d(np.asarray(M, float))
    L = M.shape[0] if L is None else L
    if M.shape[0] < M.shape[1]:
        return Excitation(False, 0.0)
    s = np.linalg.svd(M, compute_uv=False)
    lam = float(s[-1] ** 2 / L)
    return Excitation(lam >= alpha, lam)


@dataclass(frozen=True)
class WeightSolution:
    upsilon: np.ndarray
    residual: float
    rank: int
    cond: float


def solve_weights(M, Y, rcond=DEFAULT_RCOND, require_full_rank=True):
    """Least-squares weights with column equilibration.

    Columns are scaled to unit norm before a rank-revealing SVD solve, so the
    effective rank is judged on the equilibrated matrix. Returns the weights,
    the relative residual ||M w - Y|| / ||Y||, the effective rank and the
    condition number of the equilibrated matrix.
    """
    M = np.atleast_2d(np.asarray(M, float))
    Y = np.asarray(Y, float)
    scale = np.linalg.norm(M, axis=0)
    scale[scale == 0] = 1.0
    Ms = M / scale
    sol, _, rank, sv = scipy.linalg.lstsq(Ms, Y, cond=rcond, lapack_driver="gelsd")
    w = sol / scale
    ny = np.linalg.norm(Y)
    res = np.linalg.norm(M @ w - Y)
    res = float(res / ny) if ny > 0 else float(res)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if require_full_rank and rank < M.shape[1]:
        raise NumericalError(f"regression matrix is rank deficient: effective rank {rank} "
                             f"of {M.shape[1]} columns")
    return WeightSolution(w, res, int(rank), cond)


def regression_residual(data, upsilon):
    """||M upsilon - Y|| / ||Y|| for a given weight vector."""
    return float(np.linalg.norm(data.M @ upsilon - data.Y) / np.linalg.norm(data.Y))


# -- the iteration ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DataPIIterate:
    upsilon: np.ndarray
    law: FeedbackLaw
    residual: float
    min_eig: float
    rank: int
    change: float

    def to_dict(self):
        return {"upsilon": self.upsilon.tolist(), "residual": self.residual,
                "min_eig": self.min_eig, "rank": self.rank,
                "change": self.change if np.isfinite(self.change) else None,
                "K0": self.law.K0.tolist(), "K1": self.law.K1.tolist()}


@dataclass(eq=False)
class DataPIResult:
    law_1: FeedbackLaw
    iterates: list = field(default_factory=list)
    converged: bool = False

    @property
    def final_law(self):
        return self.iterates[-1].law if self.iterates else self.law_1

    @property
    def laws(self):
        return [self.law_1] + [it.law for it in self.iterates]

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"converged": self.converged,
                       "iterations": [it.to_dict() for it in self.iterates]}, fh, indent=2)


def run_data_pi(data, boundaries, law_1, basis, Q, R, delta=DEFAULT_DELTA, max_iter=20,
                alpha=DEFAULT_ALPHA, G=100, rule="trapezoid", rcond=DEFAULT_RCOND):
    """Off-policy data-driven PI on recorded trajectories.

    ``data`` is one Trajectory or a sequence of independent episodes, all
    reused at every iteration. Each iteration rebuilds the input-dependent
    columns of M and Y for the current law, checks excitation, solves for
    the weights and reconstructs the next law on a ``G``-interval grid.
    Stops when the Euclidean change of the weight vector drops below
    ``delta``; ``converged`` is False if ``max_iter`` is reached first.
    """
    reg = _Regression(data, boundaries, basis, Q, R, rule)
    result = DataPIResult(law_1)
    u_hats = reg.policy_inputs(law=law_1)
    prev = None
    for _ in range(max_iter):
        rows = reg.build(u_hats)
        exc = excitation_check(rows.M, rows.L, alpha)
        if not exc.passed:
            raise ExcitationError(exc.min_eig, alpha, rows.L, rows.M.shape[1])
        sol = solve_weights(rows.M, rows.Y, rcond=rcond)
        if not np.all(np.isfinite(sol.upsilon)):
            raise NumericalError("non-finite weights from the regression")
        change = np.inf if prev is None else float(np.linalg.norm(sol.upsilon - prev))
        law = reconstruct_law(sol.upsilon, basis, reg.n, reg.m, G)
        result.iterates.append(DataPIIterate(sol.upsilon, law, sol.residual, exc.min_eig,
                                             sol.rank, change))
        if change < delta:
            result.converged = True
            break
        prev = sol.upsilon
        u_hats = reg.policy_inputs(upsilon=sol.upsilon)
    return result
