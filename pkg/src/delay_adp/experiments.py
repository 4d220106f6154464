"""Experiment orchestration shared by the CLI, the demos and the acceptance tests."""

import numpy as np

from .adp import SegmentBoundaries, run_data_pi
from .basis import polynomial_basis
from .model_pi import run_model_pi
from .semidisc import (dlqr, discretize_law, lift_cost, semidiscretize,
                       spectral_radius_closed_loop)
from .simulation import SampledLaw, add_measurement_noise, simulate
from .value import eval_cost


def collect_episodes(cfg, seed=None, noise_sigma=None):
    """Record ``cfg.episodes`` independent runs of u = u_1 + e.

    Each episode starts from its own random history and uses its own
    exploration frequencies. With ``noise_sigma`` > 0 every recorded state
    sample (history included) is replaced by a noisy measurement.
    """
    sigma = cfg.noise_sigma if noise_sigma is None else noise_sigma
    sys, law = cfg.system, cfg.initial_law()
    trajs = []
    for e in range(cfg.episodes):
        traj = simulate(sys, law, cfg.exploration_signal(e, seed), cfg.initial_history(e, seed),
                        cfg.horizon, cfg.dt)
        if sigma > 0:
            traj = add_measurement_noise(traj, sigma, cfg.episode_seeds(e, seed)[2])
        trajs.append(traj)
    return trajs


def segment_boundaries(cfg, trajs):
    return [SegmentBoundaries.uniform(t, cfg.num_segments, cfg.segment_steps) for t in trajs]


def data_pi(cfg, seed=None, noise_sigma=None, trajs=None):
    """Data-driven PI on freshly collected (or given) episodes."""
    if trajs is None:
        trajs = collect_episodes(cfg, seed, noise_sigma)
    basis = polynomial_basis(cfg.degree, cfg.tau)
    return run_data_pi(trajs, segment_boundaries(cfg, trajs), cfg.initial_law(), basis,
                       cfg.Qm, cfg.Rm, delta=cfg.delta, max_iter=cfg.max_iter, alpha=cfg.alpha,
                       G=cfg.G, rule=cfg.quadrature)


def model_pi(cfg, G=None):
    return run_model_pi(cfg.system, cfg.Qm, cfg.Rm, cfg.initial_law(), G=G or cfg.G,
                        tol_delta=cfg.model_pi_tol, max_iter=max(cfg.max_iter, 30))


def policy_cost(cfg, law, seed=None):
    """Continuous-plant cost from the first episode's (noise-free) history."""
    return eval_cost(cfg.system, law, cfg.initial_history(0, seed), cfg.Qm, cfg.Rm,
                     cfg.eval_horizon, cfg.dt)


def dlqr_policy(cfg, dt_d=None):
    """Semi-discretization DLQR gain, held over each dt_d step on the plant.

    Returns (SampledLaw, closed-loop spectral radius, Riccati iterations).
    """
    dt_d = cfg.dt_d if dt_d is None else dt_d
    aug = semidiscretize(cfg.system, dt_d)
    Qbar, Rd = lift_cost(aug, cfg.Qm, cfg.Rm)
    K, _, its = dlqr(aug, Qbar, Rd)
    return SampledLaw(K, dt_d, aug.n), spectral_radius_closed_loop(aug, K), its


def spectral_radius(cfg, law, dt_d=None):
    aug = semidiscretize(cfg.system, cfg.dt_d if dt_d is None else dt_d)
    return spectral_radius_closed_loop(aug, discretize_law(law, aug))


def compare(cfg, seed=None, result=None):
    """Table rows: initial law, learned law and DLQR law on the continuous plant."""
    if result is None:
        result = data_pi(cfg, seed)
    learned = result.final_law
    ctrl, rho_d, its = dlqr_policy(cfg)
    return [
        {"policy": "initial", "cost": policy_cost(cfg, cfg.initial_law(), seed).cost,
         "spectral_radius": spectral_radius(cfg, cfg.initial_law()), "iterations": 0},
        {"policy": "data-pi", "cost": policy_cost(cfg, learned, seed).cost,
         "spectral_radius": spectral_radius(cfg, learned), "iterations": len(result.iterates)},
        {"policy": "dlqr", "cost": policy_cost(cfg, ctrl, seed).cost,
         "spectral_radius": rho_d, "iterations": its},
    ]


def noise_study(cfg, sigmas=None, seed=None):
    """Final data-driven PI cost for each measurement-noise standard deviation."""
    sigmas = cfg.noise_levels if sigmas is None else sigmas
    rows = []
    for sigma in sigmas:
        res = data_pi(cfg, seed, noise_sigma=float(sigma))
        rows.append({"sigma": float(sigma), "variance": float(sigma) ** 2,
                     "iterations": len(res.iterates), "converged": res.converged,
                     "cost": policy_cost(cfg, res.final_law, seed).cost})
    return rows


def gain_errors(law, reference):
    """(|K0 - K0*| / |K0*|, sup|K1 - K1*| / sup|K1*|) on the reference grid."""
    law = law.resample(reference.G)
    e0 = np.linalg.norm(law.K0 - reference.K0) / np.linalg.norm(reference.K0)
    e1 = np.max(np.abs(law.K1 - reference.K1)) / np.max(np.abs(reference.K1))
    return float(e0), float(e1)
