"""Linear time-delay plants and their simulation.

The plant is

    x'(t) = A x(t) + Ad x(t - tau) + B u(t)

integrated by the method of steps with fixed-step RK4. The delayed state
and the distributed feedback integral at RK sub-steps are read from the
stored samples by cubic interpolation at the half steps, so the step ``dt``
must divide ``tau`` exactly.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import BlowUpError
from .quadrature import trapezoid_weights

BLOWUP_LIMIT = 1e12


def _int_ratio(tau, dt, what="tau/dt"):
    r = tau / dt
    ri = int(round(r))
    if ri < 1 or abs(r - ri) > 1e-9 * max(1.0, r):
        raise ValueError(f"{what} = {r!r} is not a positive integer")
    return ri


@dataclass(frozen=True, eq=False)
class DelaySystem:
    A: np.ndarray
    Ad: np.ndarray
    B: np.ndarray
    tau: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        Ad = np.atleast_2d(np.asarray(self.Ad, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        n = A.shape[0]
        if A.shape != (n, n) or Ad.shape != (n, n) or B.shape[0] != n:
            raise ValueError(f"inconsistent shapes A{A.shape} Ad{Ad.shape} B{B.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(Ad)) and np.all(np.isfinite(B))):
            raise ValueError("system matrices must be finite")
        if not self.tau > 0:
            raise ValueError("delay tau must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Ad", Ad)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]


def theta_grid(tau, G):
    return np.linspace(-tau, 0.0, G + 1)


def resample_nodes(values, G_new):
    """Linearly interpolate node values on a uniform grid of G intervals
    onto a uniform grid of ``G_new`` intervals over the same span."""
    values = np.asarray(values, dtype=float)
    G_old = values.shape[0] - 1
    if G_old == G_new:
        return values.copy()
    s_old = np.linspace(0.0, 1.0, G_old + 1)
    s_new = np.linspace(0.0, 1.0, G_new + 1)
    flat = values.reshape(G_old + 1, -1)
    out = np.empty((G_new + 1, flat.shape[1]))
    for c in range(flat.shape[1]):
        out[:, c] = np.interp(s_new, s_old, flat[:, c])
    return out.reshape((G_new + 1,) + values.shape[1:])


@dataclass(frozen=True, eq=False)
class SegmentState:
    """A history segment x_t(theta), theta in [-tau, 0], on G+1 uniform nodes.

    ``samples[-1]`` is the current state x(t).
    """
    tau: float
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s.reshape(-1, 1)
        if s.shape[0] < 2:
            raise ValueError("a segment needs at least two nodes")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def G(self):
        return self.samples.shape[0] - 1

    @property
    def n(self):
        return self.samples.shape[1]

    @property
    def theta(self):
        return theta_grid(self.tau, self.G)

    @property
    def current(self):
        return self.samples[-1]

    def resample(self, G):
        if G == self.G:
            return self
        return SegmentState(self.tau, resample_nodes(self.samples, G))

    @classmethod
    def constant(cls, value, tau, G):
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(tau, np.tile(value, (G + 1, 1)))

    @classmethod
    def from_function(cls, fn, tau, G):
        th = theta_grid(tau, G)
        return cls(tau, np.array([np.atleast_1d(fn(t)) for t in th], dtype=float))


@dataclass(frozen=True, eq=False)
class FeedbackLaw:
    """u(x_t) = -K0 x(t) - int_{-tau}^0 K1(theta) x_t(theta) dtheta.

    ``K1`` holds the m x n gain at each of the G+1 nodes of ``theta_grid``.
    """
    K0: np.ndarray
    K1: np.ndarray
    tau: float

    def __post_init__(self):
        K0 = np.atleast_2d(np.asarray(self.K0, dtype=float))
        K1 = np.asarray(self.K1, dtype=float)
        if K1.ndim != 3 or K1.shape[1:] != K0.shape or K1.shape[0] < 2:
            raise ValueError(f"K1 must have shape (G+1, {K0.shape[0]}, {K0.shape[1]})")
        object.__setattr__(self, "K0", K0)
        object.__setattr__(self, "K1", K1)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def G(self):
        return self.K1.shape[0] - 1

    @property
    def m(self):
        return self.K0.shape[0]

    @property
    def n(self):
        return self.K0.shape[1]

    @property
    def theta(self):
        return theta_grid(self.tau, self.G)

    def resample(self, G):
        if G == self.G:
            return self
        return FeedbackLaw(self.K0, resample_nodes(self.K1, G), self.tau)

    @classmethod
    def static(cls, K0, tau, G=1):
        K0 = np.atleast_2d(np.asarray(K0, dtype=float))
        return cls(K0, np.zeros((G + 1,) + K0.shape), tau)

    def __call__(self, xt):
        return eval_feedback(self, xt)

    def to_dict(self):
        return {"n": self.n, "m": self.m, "G": self.G, "tau": self.tau,
                "K0": self.K0.tolist(), "K1": self.K1.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["K0"], dtype=float), np.array(d["K1"], dtype=float), d["tau"])


def eval_feedback(law, xt):
    """Evaluate the distributed-delay law on a segment (trapezoid in theta)."""
    if xt.n != law.n:
        raise ValueError(f"segment has {xt.n} states, law expects {law.n}")
    if abs(xt.tau - law.tau) > 1e-12 * law.tau:
        raise ValueError("segment and law have different delays")
    xs = xt.resample(law.G).samples
    w = trapezoid_weights(law.G + 1, law.tau / law.G)
    integral = np.einsum("j,jmn,jn->m", w, law.K1, xs)
    return -law.K0 @ xs[-1] - integral


@dataclass(frozen=True, eq=False)
class SampledLaw:
    """Zero-order-hold law on sampled history: u = -Kd [x(k); x(k-1); ...; x(k-r)].

    Updated every ``period`` seconds and held in between.
    """
    Kd: np.ndarray
    period: float
    n: int

    def __post_init__(self):
        Kd = np.atleast_2d(np.asarray(self.Kd, dtype=float))
        if Kd.shape[1] % self.n:
            raise ValueError("Kd column count must be a multiple of n")
        object.__setattr__(self, "Kd", Kd)

    @property
    def m(self):
        return self.Kd.shape[0]

    @property
    def delay_steps(self):
        return self.Kd.shape[1] // self.n - 1


@dataclass(frozen=True, eq=False)
class ExplorationSignal:
    """Sum of ``num_terms`` sinusoids with random frequencies per input channel:
    e_j(t) = amplitude * sum_i sin(w_ji t)."""
    amplitude: float
    num_terms: int
    freq_range: tuple = (-10.0, 10.0)
    rng_seed: int = 0
    m: int = 1
    frequencies: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.rng_seed)
        lo, hi = self.freq_range
        object.__setattr__(self, "frequencies", rng.uniform(lo, hi, size=(self.m, self.num_terms)))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.num_terms == 0:
            return np.zeros(t.shape + (self.m,))
        phase = t[..., None, None] * self.frequencies
        return self.amplitude * np.sin(phase).sum(axis=-1)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled states and inputs, including the initial history.

    Row ``r = tau/dt`` holds x(t0); rows before it are the pre-history on
    [t0 - tau, t0), whose inputs are NaN.
    """
    dt: float
    t0: float
    tau: float
    x: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        r = _int_ratio(self.tau, self.dt)
        if self.x.shape[0] < r + 1 or self.u.shape[0] != self.x.shape[0]:
            raise ValueError("trajectory too short or x/u length mismatch")

    @property
    def r(self):
        return _int_ratio(self.tau, self.dt)

    @property
    def n(self):
        return self.x.shape[1]

    @property
    def m(self):
        return self.u.shape[1]

    @property
    def times(self):
        return self.t0 + (np.arange(self.x.shape[0]) - self.r) * self.dt

    def index_of(self, t):
        k = (t - self.t0) / self.dt + self.r
        ki = int(round(k))
        if abs(k - ki) > 1e-6 or ki < self.r or ki >= self.x.shape[0]:
            raise ValueError(f"time {t} is not a grid point inside the trajectory")
        return ki

    def segment(self, index):
        """The history segment ending at sample ``index`` (index >= r)."""
        if index < self.r:
            raise ValueError("segment would start before the stored history")
        return SegmentState(self.tau, self.x[index - self.r:index + 1])

    def with_states(self, x):
        return Trajectory(self.dt, self.t0, self.tau, np.asarray(x, dtype=float), self.u)

    def to_csv(self, path):
        n, m = self.n, self.m
        header = ",".join(["t"] + [f"x{i+1}" for i in range(n)] + [f"u{j+1}" for j in range(m)])
        data = np.column_stack([self.times, self.x, self.u])
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path):
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        n = sum(1 for h in header if h.startswith("x"))
        m = sum(1 for h in header if h.startswith("u"))
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        t, x, u = data[:, 0], data[:, 1:1 + n], data[:, 1 + n:1 + n + m]
        r = int(np.argmax(~np.isnan(u).any(axis=1)))
        dt = (t[-1] - t[0]) / (len(t) - 1)
        return cls(dt, float(t[r]), r * dt, x, u)


def random_history(amplitude, num_sines, offset_range, rng_seed, n, tau, G,
                   freq_range=(-10.0, 10.0)):
    """[x0(theta)]_i = amplitude * sum_j sin(w_ij theta) + chi_i with w, chi uniform."""
    rng = np.random.default_rng(rng_seed)
    w = rng.uniform(freq_range[0], freq_range[1], size=(n, num_sines))
    chi = rng.uniform(offset_range[0], offset_range[1], size=n)
    th = theta_grid(tau, G)
    samples = amplitude * np.sin(th[:, None, None] * w[None]).sum(axis=-1) + chi
    return SegmentState(tau, samples)


def add_measurement_noise(traj, sigma, rng_seed=0):
    """Add i.i.d. N(0, sigma^2) noise to every state sample; inputs untouched."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return traj.with_states(traj.x.copy())
    rng = np.random.default_rng(rng_seed)
    return traj.with_states(traj.x + sigma * rng.standard_normal(traj.x.shape))


_CENTER = np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0
_FORWARD = np.array([5.0, 15.0, -5.0, 1.0]) / 16.0    # nodes j..j+3
_BACKWARD = np.array([1.0, -5.0, 15.0, 5.0]) / 16.0   # nodes j-2..j+1


def _piece_midpoints(X, a, b, lo, hi):
    """Cubic midpoints between samples j and j+1 for j = a..b-1, using only
    nodes lo..hi so that no stencil straddles a derivative jump."""
    if hi - lo < 3:
        return 0.5 * (X[a:b] + X[a + 1:b + 1])
    H = np.empty((b - a, X.shape[1]))
    c0, c1 = max(a, lo + 1), min(b - 1, hi - 2)
    if c0 <= c1:
        H[c0 - a:c1 - a + 1] = (9.0 * (X[c0:c1 + 1] + X[c0 + 1:c1 + 2])
                                - X[c0 - 1:c1] - X[c0 + 2:c1 + 3]) / 16.0
    if a == lo:
        H[0] = _FORWARD @ X[lo:lo + 4]
    if b == hi:
        H[-1] = _BACKWARD @ X[hi - 3:hi + 1]
    return H


def _midpoints(X, a, b, r, last):
    """Midpoints for j = a..b-1 from X[:last+1]. The history X[:r+1] and the
    integrated part X[r:] are interpolated separately because the solution
    is generally not differentiable at t0 (sample r)."""
    parts = []
    if a < r:
        parts.append(_piece_midpoints(X, a, min(b, r), 0, r))
    if b > r:
        parts.append(_piece_midpoints(X, max(a, r), b, r, last))
    return parts[0] if len(parts) == 1 else np.concatenate(parts)


def simulate(sys, controller=None, exploration=None, x0=None, horizon=10.0, dt=1e-3):
    """Integrate the plant from history ``x0`` over [0, horizon].

    ``controller`` is a FeedbackLaw, a SampledLaw, or None (open loop). The
    applied input is controller(x_t) + exploration(t) at every RK stage.
    """
    n, m = sys.n, sys.m
    r = _int_ratio(sys.tau, dt)
    steps = int(round(horizon / dt))
    if x0 is None:
        raise ValueError("an initial history x0 is required")
    if x0.n != n:
        raise ValueError(f"history has {x0.n} states, plant has {n}")
    X = np.empty((r + 1 + steps, n))
    X[:r + 1] = x0.resample(r).samples
    U = np.full((r + 1 + steps, m), np.nan)

    A, Ad, B = sys.A, sys.Ad, sys.B
    t_half = 0.5 * dt * np.arange(2 * steps + 1)
    if exploration is not None:
        if exploration.m != m:
            raise ValueError("exploration channel count differs from plant inputs")
        E = exploration(t_half)
    else:
        E = np.zeros((2 * steps + 1, m))

    law = controller if isinstance(controller, FeedbackLaw) else None
    sampled = controller if isinstance(controller, SampledLaw) else None
    if controller is not None and law is None and sampled is None:
        raise TypeError("controller must be a FeedbackLaw or SampledLaw")
    if law is not None:
        if (law.m, law.n) != (m, n):
            raise ValueError("controller gains do not match the plant")
        Kw = resample_nodes(law.K1, r) * trapezoid_weights(r + 1, dt)[:, None, None]
        K_all = Kw.transpose(1, 0, 2).reshape(m, -1)       # all r+1 nodes
        K_head = Kw[:r].transpose(1, 0, 2).reshape(m, -1)  # nodes 0..r-1
        K_last = Kw[r]
        K0 = law.K0
    if sampled is not None:
        hold = _int_ratio(sampled.period, dt, "period/dt")
        rd = sampled.delay_steps
        if rd * hold > r + steps:
            raise ValueError("sampled law reaches past the stored history")
        u_hold = np.zeros(m)

    def rhs(xs, xd, u):
        return A @ xs + Ad @ xd + B @ u

    for k in range(steps):
        s = r + k
        xs = X[s]
        if law is not None:
            i0 = K_all @ X[s - r:s + 1].ravel()
            i_next = K_head @ X[s - r + 1:s + 1].ravel()
            i_mid = K_head @ _midpoints(X, s - r, s, r, s).ravel()
            fb = lambda xstage, c: (-K0 @ xstage - (i_mid if c == 1 else i_next)
                                    - K_last @ xstage)
            u1 = -K0 @ xs - i0
        elif sampled is not None:
            if k % hold == 0:
                idx = s - hold * np.arange(rd + 1)
                u_hold = -sampled.Kd @ X[idx].ravel()
            fb = lambda xstage, c: u_hold
            u1 = u_hold
        else:
            fb = lambda xstage, c: 0.0
            u1 = np.zeros(m)
        u1 = u1 + E[2 * k]
        U[s] = u1
        xd0 = X[s - r]
        xd_mid = _midpoints(X, s - r, s - r + 1, r, s)[0]
        xd1 = X[s - r + 1]
        k1 = rhs(xs, xd0, u1)
        x2 = xs + 0.5 * dt * k1
        k2 = rhs(x2, xd_mid, fb(x2, 1) + E[2 * k + 1])
        x3 = xs + 0.5 * dt * k2
        k3 = rhs(x3, xd_mid, fb(x3, 1) + E[2 * k + 1])
        x4 = xs + dt * k3
        k4 = rhs(x4, xd1, fb(x4, 2) + E[2 * k + 2])
        xn = xs + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.abs(xn) < BLOWUP_LIMIT):
            raise BlowUpError(
                f"state magnitude exceeded {BLOWUP_LIMIT:.0e} at t = {(k + 1) * dt:.4g} s "
                f"(max |x| = {np.max(np.abs(xn)):.3e}); the controller is likely not admissible"
            )
        X[s + 1] = xn

    s = r + steps
    if law is not None:
        u_last = -law.K0 @ X[s] - K_all @ X[s - r:s + 1].ravel()
    elif sampled is not None:
        if steps % hold == 0:
            u_hold = -sampled.Kd @ X[s - hold * np.arange(rd + 1)].ravel()
        u_last = u_hold
    else:
        u_last = np.zeros(m)
    U[s] = u_last + E[2 * steps]
    return Trajectory(dt, 0.0, sys.tau, X, U)


def decay_rate(traj, window=None):
    """Exponential decay rate fitted to the running state envelope.

    Returns lambda from a least-squares fit log max|x| ~ c - lambda t over
    consecutive windows (default length tau) after t0; positive means decay.
    """
    window = traj.tau if window is None else window
    w = max(1, int(round(window / traj.dt)))
    xs = np.linalg.norm(traj.x[traj.r:], axis=1)
    nwin = len(xs) // w
    if nwin < 3:
        raise ValueError("trajectory too short for an envelope fit")
    env = xs[:nwin * w].reshape(nwin, w).max(axis=1)
    t = (np.arange(nwin) + 0.5) * w * traj.dt
    env = np.maximum(env, 1e-300)
    slope = np.polyfit(t, np.log(env), 1)[0]
    return -slope


def segment_windows(traj, G, indices=None):
    """History segments x_t on G+1 uniform nodes for the sample ``indices``.

    Returns an array of shape (len(indices), G+1, n). Nodes that fall
    between stored samples are linearly interpolated.
    """
    r = traj.r
    idx = np.arange(r, traj.x.shape[0]) if indices is None else np.asarray(indices)
    if np.any(idx < r):
        raise ValueError("segment would start before the stored history")
    if r % G == 0:
        stride = r // G
        pos = idx[:, None] - r + stride * np.arange(G + 1)[None, :]
        return traj.x[pos]
    offs = np.linspace(-r, 0.0, G + 1)
    pos = idx[:, None] + offs[None, :]
    lo = np.clip(np.floor(pos).astype(int), 0, traj.x.shape[0] - 1)
    hi = np.clip(lo + 1, 0, traj.x.shape[0] - 1)
    frac = (pos - lo)[..., None]
    return (1 - frac) * traj.x[lo] + frac * traj.x[hi]


def window_correlate(x, W):
    """Sliding weighted sums over the history window.

    For every window start t (0 <= t <= T-1-r) returns
    ``out[t, ...] = sum_j W[j, ..., b] * x[t + j, b]`` keeping the trailing
    state axis b, where W has r+1 rows. Implemented as an FFT correlation.
    """
    W = np.asarray(W, dtype=float)
    extra = W.ndim - 2
    xs = x.reshape((x.shape[0],) + (1,) * extra + (x.shape[1],))
    return fftconvolve(xs, W[::-1], mode="valid", axes=0)


def law_along(law, traj, indices=None):
    """Evaluate a FeedbackLaw on every trajectory segment at full sample
    resolution (gains resampled onto the trajectory grid)."""
    r = traj.r
    idx = np.arange(r, traj.x.shape[0]) if indices is None else np.asarray(indices)
    Kw = resample_nodes(law.K1, r) * trapezoid_weights(r + 1, traj.dt)[:, None, None]
    integral = window_correlate(traj.x, Kw).sum(axis=-1)  # (T-r, m)
    return -traj.x[idx] @ law.K0.T - integral[idx - r]
