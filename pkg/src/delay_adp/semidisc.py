"""Semi-discretization of the delay plant and discrete LQR baselines.

With step h = tau/r the plant is approximated by the delay-free system

    x_d(k+1) = Abar x_d(k) + Bbar u(k),   x_d(k) = [x(k); x(k-1); ...; x(k-r)]

where x(k+1) = E x(k) + F Ad x(k-r) + F B u(k), E = exp(A h) and
F = int_0^h exp(A s) ds, i.e. zero-order hold on the input and on the
oldest stored sample.
"""

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError
from .quadrature import trapezoid_weights
from .simulation import SampledLaw, _int_ratio, resample_nodes


@dataclass(frozen=True, eq=False)
class AugmentedSystem:
    Abar: np.ndarray
    Bbar: np.ndarray
    dt_d: float
    r: int
    n: int

    @property
    def m(self):
        return self.Bbar.shape[1]

    @property
    def n_a(self):
        return self.Abar.shape[0]


def zoh_pair(A, h):
    """(exp(A h), int_0^h exp(A s) ds) from one augmented exponential."""
    n = A.shape[0]
    big = np.zeros((2 * n, 2 * n))
    big[:n, :n] = A
    big[:n, n:] = np.eye(n)
    ex = scipy.linalg.expm(big * h)
    return ex[:n, :n], ex[:n, n:]


def semidiscretize(sys, dt_d):
    r = _int_ratio(sys.tau, dt_d, "tau/dt_d")
    n, m = sys.n, sys.m
    E, F = zoh_pair(sys.A, dt_d)
    na = n * (r + 1)
    Abar = np.zeros((na, na))
    Abar[:n, :n] = E
    Abar[:n, r * n:] += F @ sys.Ad
    Abar[n:, :-n] = np.eye(r * n)
    Bbar = np.zeros((na, m))
    Bbar[:n] = F @ sys.B
    return AugmentedSystem(Abar, Bbar, float(dt_d), r, n)


def lift_cost(aug, Q, R):
    """Per-step costs: Q dt_d on the current block, R dt_d on the input."""
    Qbar = np.zeros((aug.n_a, aug.n_a))
    Qbar[:aug.n, :aug.n] = np.asarray(Q, float) * aug.dt_d
    return Qbar, np.atleast_2d(np.asarray(R, float)) * aug.dt_d


def dlqr(aug, Qbar, R, tol=1e-10, max_iter=100_000):
    """Stationary discrete LQR gain by Riccati recursion.

    Returns (K, P, iterations) with u(k) = -K x_d(k).
    """
    A, B = aug.Abar, aug.Bbar
    R = np.atleast_2d(np.asarray(R, float))
    P = np.array(Qbar, dtype=float)
    for it in range(1, max_iter + 1):
        BtP = B.T @ P
        K = np.linalg.solve(R + BtP @ B, BtP @ A)
        P_new = Qbar + A.T @ P @ A - A.T @ P @ B @ K
        P_new = 0.5 * (P_new + P_new.T)
        scale = max(np.linalg.norm(P_new), 1e-300)
        if not (np.all(np.isfinite(P_new)) and np.isfinite(scale)):
            raise NumericalError("discrete Riccati recursion diverged")
        if np.linalg.norm(P_new - P) / scale < tol:
            BtP = B.T @ P_new
            K = np.linalg.solve(R + BtP @ B, BtP @ A)
            return K, P_new, it
        P = P_new
    raise NumericalError(f"discrete Riccati recursion did not converge in {max_iter} iterations; "
                         "the discretization may not be stabilizable")


def discretize_law(law, aug):
    """Gain Kd on the augmented state approximating a continuous FeedbackLaw.

    Block 0 carries K0 and block j the trapezoid weight times K1(-j dt_d).
    """
    if law.n != aug.n or abs(law.tau - aug.r * aug.dt_d) > 1e-9 * max(1.0, law.tau):
        raise ValueError("law does not match the augmented system")
    K1 = resample_nodes(law.K1, aug.r)                      # theta = -tau ... 0
    w = trapezoid_weights(aug.r + 1, aug.dt_d)
    blocks = (w[:, None, None] * K1)[::-1]                   # block j <-> theta = -j dt_d
    blocks[0] = blocks[0] + law.K0
    return np.concatenate(list(blocks), axis=1)


def closed_loop(aug, Kd):
    return aug.Abar - aug.Bbar @ np.atleast_2d(Kd)


def spectral_radius_closed_loop(aug, Kd):
    return float(np.max(np.abs(np.linalg.eigvals(closed_loop(aug, Kd)))))


def policy_value_oracle(aug, Kd, Qbar, R, tol=1e-12, max_doublings=60):
    """Discrete value matrix of a fixed gain: P = Acl' P Acl + Qbar + Kd' R Kd.

    Solved by the doubling form of the fixed-point iteration, which sums
    2^k terms of the series after k steps.
    """
    Acl = closed_loop(aug, Kd)
    rho = float(np.max(np.abs(np.linalg.eigvals(Acl))))
    if rho >= 1.0:
        raise NumericalError(f"closed-loop spectral radius {rho:.6f} >= 1; the policy is not stabilizing")
    Kd = np.atleast_2d(Kd)
    P = Qbar + Kd.T @ np.atleast_2d(R) @ Kd
    Ak = Acl
    for _ in range(max_doublings):
        inc = Ak.T @ P @ Ak
        P = P + inc
        Ak = Ak @ Ak
        if np.linalg.norm(inc) <= tol * np.linalg.norm(P):
            return 0.5 * (P + P.T)
    raise NumericalError("discrete Lyapunov doubling did not converge")


def sampled_history(x0, aug):
    """Augmented state [x(0); x(-h); ...; x(-r h)] from a history segment."""
    seg = x0.resample(aug.r).samples
    return seg[::-1].ravel()


def dlqr_controller(sys, Q, R, dt_d):
    """Model-based DLQR on the semi-discretization, as a held law for the
    continuous plant. Returns (SampledLaw, iterations)."""
    aug = semidiscretize(sys, dt_d)
    Qbar, Rd = lift_cost(aug, Q, R)
    K, _, its = dlqr(aug, Qbar, Rd)
    return SampledLaw(K, dt_d, sys.n), its


def write_comparison_csv(path, rows):
    """rows: iterable of dicts with policy, cost, spectral_radius, iterations."""
    fields = ["policy", "cost", "spectral_radius", "iterations"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in rows:
            w.writerow({k: row.get(k, "") for k in fields})
