"""One test per acceptance criterion, at the stated tolerance and runtime.

Runtimes include the shared fixtures each criterion depends on.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg

from delay_adp import experiments as ex
from delay_adp.adp import assemble, regression_residual
from delay_adp.basis import polynomial_basis, project
from delay_adp.config import ExperimentConfig
from delay_adp.model_pi import run_model_pi
from delay_adp.simulation import DelaySystem, FeedbackLaw
from delay_adp.value import eval_value

SEEDS = range(5)
NOISE_SIGMA = float(np.sqrt(0.2))


def clock():
    return time.perf_counter()


@pytest.fixture(scope="module")
def metal_clean(metal_cfg):
    """Noise-free data PI on metal cutting for each seed, with the costs used by criteria 6-8."""
    t = clock()
    runs = {}
    for seed in SEEDS:
        res = ex.data_pi(metal_cfg, seed)
        runs[seed] = {"result": res,
                      "initial": ex.policy_cost(metal_cfg, metal_cfg.initial_law(), seed).cost,
                      "learned": ex.policy_cost(metal_cfg, res.final_law, seed).cost}
    return runs, clock() - t


def test_criterion_1_kleinman_reduction(report):
    t = clock()
    rng = np.random.default_rng(11)
    A = rng.standard_normal((3, 3))
    A -= (np.max(np.linalg.eigvals(A).real) + 0.5) * np.eye(3)
    B = rng.standard_normal((3, 2))
    sys_ = DelaySystem(A, np.zeros((3, 3)), B, 0.8)
    Q, R = np.eye(3), np.diag([1.0, 0.5])
    K = np.zeros((2, 3))
    steps = run_model_pi(sys_, Q, R, FeedbackLaw.static(K, sys_.tau, 100), G=100, max_iter=8)
    gain_dev, kernel_sup = 0.0, 0.0
    for st in steps:
        Acl = A - B @ K
        P = scipy.linalg.solve_continuous_lyapunov(Acl.T, -(Q + K.T @ R @ K))
        K = np.linalg.solve(R, B.T @ P)
        gain_dev = max(gain_dev, np.max(np.abs(st.improved.K0 - K)), np.max(np.abs(st.improved.K1)))
        kernel_sup = max(kernel_sup, np.max(np.abs(st.kernel.P1)), np.max(np.abs(st.kernel.P2)))
    secs = clock() - t
    ok = gain_dev < 1e-6 and kernel_sup < 1e-8 and secs < 10
    report(1, ok, f"gain deviation {gain_dev:.2e} (<1e-6), P1/P2 sup {kernel_sup:.2e} (<1e-8), "
                  f"{len(steps)} iterates", secs)
    assert ok


def test_criterion_2_riccati_fixed_point(metal_cfg, metal_pi, report):
    t = clock()
    res = metal_pi.value[-1].riccati_residual
    P0_100 = metal_pi.value[-1].kernel.P0
    P0_200 = ex.model_pi(metal_cfg, G=200)[-1].kernel.P0
    change = np.max(np.abs(P0_200 - P0_100) / np.abs(P0_100))
    secs = metal_pi.seconds + clock() - t
    ok = res < 1e-4 and change < 0.01 and secs < 60
    report(2, ok, f"Riccati residual {res:.2e} (<1e-4), P0 change G 100->200 {change:.2e} (<1e-2)", secs)
    assert ok


def test_criterion_3_monotone_and_stable(metal_cfg, cav_cfg, metal_pi, cav_pi, report):
    t = clock()
    worst_rise, worst_rho = -np.inf, 0.0
    for cfg, pi in ((metal_cfg, metal_pi), (cav_cfg, cav_pi)):
        steps = pi.value
        for seed in SEEDS:
            x0 = cfg.initial_history(0, seed)
            vals = np.array([eval_value(s.kernel, x0) for s in steps])
            worst_rise = max(worst_rise, np.max(np.diff(vals) / np.abs(vals[:-1])))
        for law in [s.law for s in steps] + [steps[-1].improved]:
            worst_rho = max(worst_rho, ex.spectral_radius(cfg, law, dt_d=0.01))
    secs = metal_pi.seconds + cav_pi.seconds + clock() - t
    ok = worst_rise <= 1e-6 and worst_rho < 1 and secs < 120
    report(3, ok, f"largest relative value rise {worst_rise:.2e} (<=1e-6), "
                  f"largest spectral radius {worst_rho:.4f} (<1)", secs)
    assert ok


def test_criterion_4_regression_identity(metal_cfg, metal_pi, report):
    t = clock()
    cfg = ExperimentConfig.from_dict(dict(metal_cfg.to_dict(), episodes=1, horizon=10.0,
                                             segment_steps=10))
    assert cfg.exploration.num_terms == 50
    traj = ex.collect_episodes(cfg)[0]
    basis = polynomial_basis(3, cfg.tau)
    step = metal_pi.value[0]
    rows = assemble(traj, None, step.law, basis, cfg.Qm, cfg.Rm)
    resid = regression_residual(rows, project(step.kernel, step.improved, basis))
    secs = metal_pi.seconds + clock() - t
    ok = resid < 5e-2 and secs < 60
    report(4, ok, f"relative residual {resid:.2e} (<5e-2) on {rows.L} segments", secs)
    assert ok


def test_criterion_5_cav_gains(cav_cfg, cav_pi, report):
    t = clock()
    ref = cav_pi.value[-1].improved
    errs = [ex.gain_errors(ex.data_pi(cav_cfg, seed).final_law, ref) for seed in SEEDS]
    e0, e1 = max(e[0] for e in errs), max(e[1] for e in errs)
    secs = cav_pi.seconds + clock() - t
    ok = e0 <= 0.02 and e1 <= 0.05 and secs < 180
    report(5, ok, f"worst of 5 seeds: K0 error {e0:.2e} (<=0.02), K1 error {e1:.2e} (<=0.05)", secs)
    assert ok


def test_criterion_6_cost_reduction(metal_clean, report):
    runs, secs = metal_clean
    red = [1 - r["learned"] / r["initial"] for r in runs.values()]
    ok = min(red) >= 0.25 and secs < 120
    report(6, ok, "reductions " + ", ".join(f"{x:.1%}" for x in red) + " (>=25%)", secs)
    assert ok


def test_criterion_7_beats_dlqr(metal_cfg, metal_clean, report):
    t = clock()
    runs, base = metal_clean
    ctrl, _, _ = ex.dlqr_policy(metal_cfg, 0.1)
    ratios = [r["learned"] / ex.policy_cost(metal_cfg, ctrl, seed).cost for seed, r in runs.items()]
    secs = base + clock() - t
    ok = max(ratios) <= 1 and secs < 120
    report(7, ok, "learned/DLQR cost " + ", ".join(f"{x:.3f}" for x in ratios) + " (<=1)", secs)
    assert ok


def test_criterion_8_noise_robustness(metal_cfg, metal_clean, report):
    t = clock()
    runs, base = metal_clean
    gaps, converged = [], True
    for seed in SEEDS:
        res = ex.data_pi(metal_cfg, seed, noise_sigma=NOISE_SIGMA)
        converged &= res.converged
        noisy = ex.policy_cost(metal_cfg, res.final_law, seed).cost
        gaps.append(abs(noisy / runs[seed]["learned"] - 1))
    secs = clock() - t
    ok = converged and max(gaps) <= 0.15 and secs < 120
    report(8, ok, f"converged {converged}, cost gaps " + ", ".join(f"{g:.1%}" for g in gaps)
           + f" (<=15%); noise-free runs shared with criterion 6 took {base:.0f} s", secs)
    assert ok


PROPERTY_TESTS = [
    "test_veckit.py::test_quadratic_form_identity_random_pairs",
    "test_veckit.py::test_vecs_round_trip",
    "test_basis.py::test_pack_unpack_round_trip",
    "test_simulation.py::test_integrator_order_on_delayed_problem",
    "test_value.py::test_vdot_identity_on_policy",
    "test_value.py::test_vdot_identity_off_policy",
    "test_adp.py::test_planted_weights_recovered",
]


def test_criterion_9_property_suites(report):
    t = clock()
    here = Path(__file__).parent
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *[str(here / p) for p in PROPERTY_TESTS]],
                          capture_output=True, text=True, cwd=here.parent)
    secs = clock() - t
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0 and secs < 60
    report(9, ok, f"{len(PROPERTY_TESTS)} property tests: {summary}", secs)
    assert ok, proc.stdout[-2000:]
