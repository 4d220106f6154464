"""Quadratic value functionals of history segments.

A kernel (P0, P1, P2) defines

    V(x_t) = x'P0 x + 2 x' int P1(th) x_t(th) dth
             + int int x_t(xi)' P2(xi, th) x_t(th) dxi dth

with x = x_t(0). P1 and P2 are stored on the uniform theta grid; P2 on the
full (G+1) x (G+1) grid with P2[j, k] = P2[k, j]'.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .quadrature import cumulative_trapezoid, weights
from .simulation import (decay_rate, law_along,
                         segment_windows, simulate, theta_grid)

SYM_RTOL = 1e-9


@dataclass(frozen=True, eq=False)
class ValueKernel:
    P0: np.ndarray
    P1: np.ndarray
    P2: np.ndarray
    tau: float

    def __post_init__(self):
        P0 = np.atleast_2d(np.asarray(self.P0, dtype=float))
        P1 = np.asarray(self.P1, dtype=float)
        P2 = np.asarray(self.P2, dtype=float)
        n = P0.shape[0]
        G1 = P1.shape[0]
        if P0.shape != (n, n) or P1.shape != (G1, n, n) or P2.shape != (G1, G1, n, n):
            raise ValueError("inconsistent kernel shapes")
        object.__setattr__(self, "P0", P0)
        object.__setattr__(self, "P1", P1)
        object.__setattr__(self, "P2", P2)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def n(self):
        return self.P0.shape[0]

    @property
    def G(self):
        return self.P1.shape[0] - 1

    @property
    def theta(self):
        return theta_grid(self.tau, self.G)

    def symmetry_error(self):
        """Relative asymmetry of P0 and of P2 under (xi, th) swap + transpose."""
        s0 = np.max(np.abs(self.P0 - self.P0.T)) / max(np.max(np.abs(self.P0)), 1e-300)
        P2T = self.P2.transpose(1, 0, 3, 2)
        s2 = np.max(np.abs(self.P2 - P2T)) / max(np.max(np.abs(self.P2)), 1e-300)
        return max(s0, s2)

    def check_symmetry(self, rtol=SYM_RTOL):
        err = self.symmetry_error()
        if err > rtol:
            raise ValueError(f"kernel violates symmetry (relative error {err:.2e})")

    def to_dict(self):
        return {"n": self.n, "G": self.G, "tau": self.tau, "P0": self.P0.tolist(),
                "P1": self.P1.tolist(), "P2": self.P2.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["P0"], dtype=float), np.array(d["P1"], dtype=float),
                   np.array(d["P2"], dtype=float), d["tau"])

    @classmethod
    def zeros(cls, n, G, tau):
        return cls(np.zeros((n, n)), np.zeros((G + 1, n, n)), np.zeros((G + 1, G + 1, n, n)), tau)


def _quad_form(V, segs, rule):
    """V evaluated on a batch of segments (S, G+1, n) on the kernel grid."""
    w = weights(V.G + 1, V.tau / V.G, rule)
    x = segs[:, -1, :]
    v0 = np.einsum("si,ij,sj->s", x, V.P0, x)
    y1 = np.einsum("k,kij,skj->si", w, V.P1, segs)
    y2 = np.einsum("k,jkab,skb->sja", w, V.P2, segs, optimize=True)
    v2 = np.einsum("j,sja,sja->s", w, segs, y2)
    return v0 + 2.0 * np.einsum("si,si->s", x, y1) + v2


def eval_value(V, x0, rule="trapezoid"):
    if x0.n != V.n:
        raise ValueError(f"segment has {x0.n} states, kernel expects {V.n}")
    segs = x0.resample(V.G).samples[None]
    return float(_quad_form(V, segs, rule)[0])


def value_along(V, traj, indices=None, rule="trapezoid"):
    """V(x_t) at each trajectory sample in ``indices`` (default: t >= t0)."""
    segs = segment_windows(traj, V.G, indices)
    out = np.empty(segs.shape[0])
    for start in range(0, segs.shape[0], 2048):
        out[start:start + 2048] = _quad_form(V, segs[start:start + 2048], rule)
    return out


def stage_cost(traj, Q, R):
    """Running cost x'Qx + u'Ru at every sample with t >= t0."""
    x = traj.x[traj.r:]
    u = traj.u[traj.r:]
    return np.einsum("ti,ij,tj->t", x, Q, x) + np.einsum("ti,ij,tj->t", u, R, u)


class CostEstimate(NamedTuple):
    cost: float
    tail: float
    decay_rate: float


def eval_cost(sys, law, x0, Q, R, horizon=20.0, dt=1e-3):
    """Finite-horizon estimate of the infinite-horizon quadratic cost.

    ``tail`` extrapolates the integrand at the horizon with the fitted
    exponential decay rate; callers compare it against ``cost`` to check that
    the horizon is long enough. Raises BlowUpError for inadmissible laws.
    """
    traj = simulate(sys, law, None, x0, horizon, dt)
    ell = stage_cost(traj, np.asarray(Q, float), np.atleast_2d(np.asarray(R, float)))
    cost = float(cumulative_trapezoid(ell, dt)[-1])
    if not np.any(traj.x):
        return CostEstimate(0.0, 0.0, np.inf)
    lam = decay_rate(traj)
    tail = float(ell[-1] / (2.0 * lam)) if lam > 0 else np.inf
    return CostEstimate(cost, tail, lam)


def check_vdot_identity(sys, V, law_i, law_next, traj, Q, R):
    """Normalized mismatch between dV/dt along ``traj`` and the policy identity

        dV_i/dt = -x'Qx - u_i'R u_i + 2 u_{i+1}'R u_i - 2 u'R u_{i+1}

    where u is the input actually applied in ``traj``. The time derivative is
    a central difference; returns max |lhs - rhs| / max |rhs|.
    """
    Q = np.asarray(Q, float)
    R = np.atleast_2d(np.asarray(R, float))
    r = traj.r
    idx = np.arange(r + 1, traj.x.shape[0] - 1)
    vals = value_along(V, traj, np.arange(r, traj.x.shape[0]))
    lhs = (vals[2:] - vals[:-2]) / (2.0 * traj.dt)
    x = traj.x[idx]
    u = traj.u[idx]
    ui = law_along(law_i, traj, idx)
    un = law_along(law_next, traj, idx)
    rhs = (-np.einsum("ti,ij,tj->t", x, Q, x) - np.einsum("ti,ij,tj->t", ui, R, ui)
           + 2 * np.einsum("ti,ij,tj->t", un, R, ui) - 2 * np.einsum("ti,ij,tj->t", u, R, un))
    scale = np.max(np.abs(rhs))
    if scale == 0:
        return float(np.max(np.abs(lhs)))
    return float(np.max(np.abs(lhs - rhs)) / scale)
