"""Experiment configuration and the two benchmark plants.

A config is a single JSON document. ``{"benchmark": "metal-cutting"}`` expands
to the full benchmark; any other key overrides the expanded value.
"""

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .simulation import DelaySystem, ExplorationSignal, FeedbackLaw, _int_ratio, random_history

BENCHMARKS = ("metal-cutting", "cav")


@dataclass
class ExplorationSpec:
    """e(t) = amplitude * sum of num_terms sinusoids, frequencies uniform in freq_range."""
    amplitude: float = 1.0
    num_terms: int = 50
    freq_range: tuple = (-10.0, 10.0)

    def __post_init__(self):
        self.freq_range = tuple(self.freq_range)


@dataclass
class HistorySpec:
    """x0_i(th) = amplitude * sum of num_sines sinusoids + offset, offsets uniform in offset_range."""
    amplitude: float = 1.0
    num_sines: int = 10
    offset_range: tuple = (-1.0, 1.0)
    freq_range: tuple = (-10.0, 10.0)

    def __post_init__(self):
        self.offset_range = tuple(self.offset_range)
        self.freq_range = tuple(self.freq_range)


@dataclass
class ExperimentConfig:
    name: str
    A: list
    Ad: list
    B: list
    tau: float
    Q: list
    R: list
    K0: list
    K1: list = None                  # (G+1, m, n) nodes or None for K1 = 0
    degree: int = 3
    G: int = 100
    dt: float = 1e-3
    episodes: int = 1                # independent restarts stacked into one regression
    horizon: float = 3.0             # recorded time after t0 per episode
    segment_steps: int = 10
    num_segments: int = None         # per episode; None uses the whole record
    delta: float = 1e-3
    alpha: float = 1e-8
    max_iter: int = 20
    quadrature: str = "trapezoid"
    exploration: ExplorationSpec = field(default_factory=ExplorationSpec)
    history: HistorySpec = field(default_factory=HistorySpec)
    noise_sigma: float = 0.0
    noise_levels: list = field(default_factory=lambda: [0.0, float(np.sqrt(0.2))])
    seed: int = 0
    eval_horizon: float = 30.0
    dt_d: float = 0.1
    model_pi_tol: float = 1e-8
    out_dir: str = "out"

    def __post_init__(self):
        self.validate()

    # -- derived objects ---------------------------------------------------

    @property
    def system(self):
        return DelaySystem(np.array(self.A, float), np.array(self.Ad, float),
                           np.array(self.B, float), self.tau)

    @property
    def Qm(self):
        return np.atleast_2d(np.array(self.Q, float))

    @property
    def Rm(self):
        return np.atleast_2d(np.array(self.R, float))

    def initial_law(self):
        K0 = np.atleast_2d(np.array(self.K0, float))
        if self.K1 is None:
            return FeedbackLaw.static(K0, self.tau, self.G)
        return FeedbackLaw(K0, np.array(self.K1, float), self.tau)

    def episode_seeds(self, episode, seed=None):
        """Independent (history, exploration, noise) seed sequences of one episode."""
        s = self.seed if seed is None else int(seed)
        return [np.random.SeedSequence([s, episode, k]) for k in range(3)]

    def initial_history(self, episode=0, seed=None):
        h = self.history
        r = _int_ratio(self.tau, self.dt)
        n = len(self.A)
        return random_history(h.amplitude, h.num_sines, h.offset_range,
                              self.episode_seeds(episode, seed)[0], n, self.tau, r, h.freq_range)

    def exploration_signal(self, episode=0, seed=None):
        e = self.exploration
        return ExplorationSignal(e.amplitude, e.num_terms, tuple(e.freq_range),
                                 self.episode_seeds(episode, seed)[1], len(self.B[0]))

    # -- validation and serialization -------------------------------------

    def validate(self):
        def fail(name, msg):
            raise ConfigError(f"config field '{name}': {msg}")

        try:
            A = np.array(self.A, float)
            Ad = np.array(self.Ad, float)
            B = np.array(self.B, float)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config plant matrices are not numeric: {exc}") from None
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            fail("A", "must be a square matrix")
        n = A.shape[0]
        if Ad.shape != (n, n):
            fail("Ad", f"must be {n}x{n}")
        if B.ndim != 2 or B.shape[0] != n:
            fail("B", f"must have {n} rows")
        m = B.shape[1]
        if not self.tau > 0:
            fail("tau", "must be positive")
        if np.shape(self.Q) != (n, n):
            fail("Q", f"must be {n}x{n}")
        if np.atleast_2d(np.array(self.R, float)).shape != (m, m):
            fail("R", f"must be {m}x{m}")
        if np.atleast_2d(np.array(self.K0, float)).shape != (m, n):
            fail("K0", f"must be {m}x{n}")
        if self.K1 is not None and np.shape(self.K1)[1:] != (m, n):
            fail("K1", f"must have shape (G+1, {m}, {n})")
        for name in ("degree", "G", "episodes", "segment_steps", "max_iter"):
            value = getattr(self, name)
            if int(value) != value or value < (0 if name == "degree" else 1):
                fail(name, "must be a positive integer")
        for name in ("dt", "horizon", "delta", "alpha", "eval_horizon", "dt_d"):
            if not getattr(self, name) > 0:
                fail(name, "must be positive")
        if self.noise_sigma < 0:
            fail("noise_sigma", "must be non-negative")
        if self.quadrature not in ("trapezoid", "simpson"):
            fail("quadrature", "must be 'trapezoid' or 'simpson'")
        for name, step in (("dt", self.dt), ("dt_d", self.dt_d)):
            try:
                _int_ratio(self.tau, step, f"tau/{name}")
            except ValueError as exc:
                fail(name, str(exc))
        if self.horizon < self.segment_steps * self.dt:
            fail("horizon", "shorter than one segment")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        bench = d.pop("benchmark", None)
        base = {}
        if bench is not None:
            if bench not in BENCHMARKS:
                raise ConfigError(f"config field 'benchmark': unknown benchmark {bench!r}; "
                                  f"choose one of {', '.join(BENCHMARKS)}")
            base = benchmark(bench).to_dict()
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        base.update(d)
        missing = names - set(base)
        required = {f.name for f in dataclasses.fields(cls)
                    if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING}
        if missing & required:
            raise ConfigError(f"missing config field(s): {', '.join(sorted(missing & required))}")
        for key, sub in (("exploration", ExplorationSpec), ("history", HistorySpec)):
            if isinstance(base.get(key), dict):
                try:
                    base[key] = sub(**base[key])
                except TypeError as exc:
                    raise ConfigError(f"config field '{key}': {exc}") from None
        return cls(**base)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def benchmark_metal_cutting():
    """Regenerative chatter: m=2, c=0.2, k=10, F_t=1, tau=1.3."""
    mass, c, k, Ft = 2.0, 0.2, 10.0, 1.0
    return ExperimentConfig(
        name="metal-cutting",
        A=[[0.0, 1.0], [-(k + Ft / mass), -c / mass]],
        Ad=[[0.0, 0.0], [Ft / mass, 0.0]],
        B=[[0.0], [1.0 / mass]],
        tau=1.3,
        Q=[[100.0, 0.0], [0.0, 100.0]],
        R=[[1.0]],
        K0=[[1.7417, 3.9239]],
        episodes=120,
        horizon=1.3,
        segment_steps=650,
        exploration=ExplorationSpec(20.0, 50, (-10.0, 10.0)),
        history=HistorySpec(10.0, 50, (-10.0, 10.0), (-10.0, 10.0)),
        eval_horizon=25.0,
    )


def benchmark_cav():
    """Two human-driven vehicles followed by one automated vehicle."""
    alpha2, beta2, c_star = 0.1, 0.2, 1.5708
    return ExperimentConfig(
        name="cav",
        A=[[0.0, -1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, -1.0], [0.0, 0.0, 0.0, 0.0]],
        Ad=[[0.0, 0.0, 0.0, 0.0], [alpha2 * c_star, -(alpha2 + beta2), 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]],
        B=[[0.0], [0.0], [0.0], [1.0]],
        tau=1.2,
        Q=np.diag([1.0, 1.0, 10.0, 10.0]).tolist(),
        R=[[1.0]],
        K0=[[-0.0897, -0.2772, -0.3, 0.5196]],
        episodes=30,
        horizon=1.5,
        exploration=ExplorationSpec(1.0, 200, (-100.0, 100.0)),
        history=HistorySpec(30.0, 10, (-30.0, 30.0), (-10.0, 10.0)),
        eval_horizon=40.0,
    )


def benchmark(name):
    if name == "metal-cutting":
        return benchmark_metal_cutting()
    if name == "cav":
        return benchmark_cav()
    raise ConfigError(f"unknown benchmark {name!r}")
