import numpy as np
import pytest
from scipy.optimize import brentq

from delay_adp.errors import BlowUpError
from delay_adp.simulation import (DelaySystem, ExplorationSignal, FeedbackLaw, SampledLaw,
                                  SegmentState, Trajectory, add_measurement_noise, decay_rate,
                                  eval_feedback, law_along, random_history, segment_windows,
                                  simulate, window_correlate)


def scalar(a, ad, b=0.0, tau=1.0):
    return DelaySystem([[a]], [[ad]], [[b]], tau)


def test_zero_dynamics_hold_the_state():
    sys = DelaySystem(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 1)), 0.5)
    x0 = random_history(1.0, 5, (-1, 1), 3, 2, 0.5, 50)
    traj = simulate(sys, None, None, x0, 2.0, 0.01)
    assert np.allclose(traj.x[traj.r:], x0.current, atol=0)


def test_pure_delay_first_step_is_linear():
    traj = simulate(scalar(0.0, -1.0), None, None, SegmentState.constant([1.0], 1.0, 10), 1.0, 1e-3)
    t = traj.times[traj.r:]
    assert np.max(np.abs(traj.x[traj.r:, 0] - (1.0 - t))) < 1e-8


def test_exponential_decay_without_delay():
    traj = simulate(scalar(-1.0, 0.0), None, None, SegmentState.constant([2.0], 1.0, 10), 3.0, 1e-3)
    t = traj.times[traj.r:]
    exact = 2.0 * np.exp(-t)
    assert np.max(np.abs(traj.x[traj.r:, 0] - exact) / exact) < 1e-9


def _delayed_exponential_error(dt):
    # x' = -0.5 x + 0.3 x(t-1) has the solution exp(lam t) for the matching history
    lam = brentq(lambda s: s + 0.5 - 0.3 * np.exp(-s), -5, 5)
    x0 = SegmentState.from_function(lambda th: np.exp(lam * th), 1.0, int(round(1 / dt)))
    traj = simulate(scalar(-0.5, 0.3), None, None, x0, 3.0, dt)
    return abs(traj.x[-1, 0] - np.exp(3.0 * lam))


def test_integrator_order_on_delayed_problem():
    errs = [_delayed_exponential_error(dt) for dt in (0.04, 0.02, 0.01)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 3.5), orders


def test_feedback_examples():
    xt = SegmentState.constant([3.0], 1.0, 100)
    law = FeedbackLaw.static([[2.0]], 1.0, 100)
    assert np.allclose(eval_feedback(law, xt), [-6.0])
    k = 0.7
    law = FeedbackLaw(np.zeros((1, 1)), np.full((101, 1, 1), k), 1.0)
    assert np.allclose(eval_feedback(law, xt), [-k * 3.0])
    th = np.linspace(-1, 0, 101)
    law = FeedbackLaw(np.zeros((1, 1)), (th * k)[:, None, None], 1.0)
    assert abs(eval_feedback(law, xt)[0] - 0.5 * k * 3.0) < 1e-6


def test_feedback_shape_mismatch():
    law = FeedbackLaw.static([[1.0, 2.0]], 1.0, 10)
    with pytest.raises(ValueError):
        eval_feedback(law, SegmentState.constant([1.0], 1.0, 10))


def test_random_history_examples():
    zero = random_history(0.0, 5, (0.0, 0.0), 1, 2, 1.0, 20)
    assert not np.any(zero.samples)
    const = random_history(4.0, 0, (1.5, 1.5), 1, 2, 1.0, 20)
    assert np.all(const.samples == 1.5)
    a = random_history(1.0, 5, (-1, 1), 7, 2, 1.0, 20)
    b = random_history(1.0, 5, (-1, 1), 7, 2, 1.0, 20)
    assert np.array_equal(a.samples, b.samples)


def test_measurement_noise():
    sys = scalar(-1.0, 0.0)
    traj = simulate(sys, None, None, SegmentState.constant([1.0], 1.0, 10), 100.0, 1e-3)
    assert np.array_equal(add_measurement_noise(traj, 0.0).x, traj.x)
    a = add_measurement_noise(traj, 0.3, 5)
    b = add_measurement_noise(traj, 0.3, 5)
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.u, traj.u, equal_nan=True)
    var = np.var(a.x - traj.x)
    assert abs(var / 0.09 - 1) < 0.05
    with pytest.raises(ValueError):
        add_measurement_noise(traj, -1.0)


def test_errors():
    sys = scalar(-1.0, 0.0)
    x0 = SegmentState.constant([1.0], 1.0, 10)
    with pytest.raises(ValueError):
        simulate(sys, None, None, x0, 1.0, 0.003)
    with pytest.raises(BlowUpError):
        simulate(scalar(30.0, 0.0), None, None, x0, 2.0, 1e-3)


def test_stabilizing_law_gives_decaying_envelope():
    sys = scalar(0.5, 0.2, 1.0)
    law = FeedbackLaw.static([[2.0]], 1.0, 10)
    traj = simulate(sys, law, None, SegmentState.constant([1.0], 1.0, 10), 20.0, 1e-2)
    assert decay_rate(traj) > 0


def test_determinism_and_exploration():
    sys = scalar(-1.0, 0.3, 1.0)
    x0 = random_history(1.0, 5, (-1, 1), 2, 1, 1.0, 100)
    e = ExplorationSignal(2.0, 10, (-5, 5), 4)
    law = FeedbackLaw.static([[0.5]], 1.0, 10)
    a = simulate(sys, law, e, x0, 2.0, 1e-2)
    b = simulate(sys, law, e, x0, 2.0, 1e-2)
    assert np.array_equal(a.x, b.x)
    assert np.all(np.abs(e(np.linspace(0, 10, 1000))) <= 2.0 * 10)


def test_recorded_input_matches_law():
    sys = DelaySystem([[0.0, 1.0], [-1.0, -0.2]], [[0, 0], [0.3, 0]], [[0.0], [1.0]], 0.5)
    th = np.linspace(-0.5, 0, 51)
    K1 = np.stack([[[np.sin(t), t]] for t in th])
    law = FeedbackLaw([[1.0, 2.0]], K1, 0.5)
    traj = simulate(sys, law, None, random_history(1.0, 3, (-1, 1), 0, 2, 0.5, 50), 1.0, 1e-2)
    direct = np.array([eval_feedback(law, traj.segment(s)) for s in range(traj.r, traj.x.shape[0])])
    assert np.allclose(law_along(law, traj), direct, atol=1e-10)
    assert np.allclose(traj.u[traj.r:], direct, atol=1e-10)


def test_sampled_law_holds_between_updates():
    sys = scalar(0.0, 0.0, 1.0)
    law = SampledLaw([[1.0, 0.0, 0.0]], 0.5, 1)
    traj = simulate(sys, law, None, SegmentState.constant([1.0], 1.0, 10), 2.0, 0.1)
    u = traj.u[traj.r:, 0]
    assert np.all(u[:5] == u[0]) and u[5] != u[0]


def test_window_tools():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((30, 2))
    W = rng.standard_normal((5, 3, 2))
    out = window_correlate(x, W)
    ref = np.array([np.einsum("jcb,jb->cb", W, x[t:t + 5]) for t in range(26)])
    assert np.allclose(out, ref)
    traj = Trajectory(0.1, 0.0, 0.4, x, np.zeros((30, 1)))
    segs = segment_windows(traj, 4)
    assert np.array_equal(segs[0], x[:5]) and segs.shape == (26, 5, 2)


def test_trajectory_csv_round_trip(tmp_path):
    sys = scalar(-1.0, 0.3, 1.0)
    traj = simulate(sys, FeedbackLaw.static([[0.5]], 1.0, 10), ExplorationSignal(1, 3, (-2, 2), 1),
                    random_history(1.0, 3, (-1, 1), 1, 1, 1.0, 10), 0.5, 0.1)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    assert path.read_text().splitlines()[0] == "t,x1,u1"
    back = Trajectory.from_csv(path)
    assert np.array_equal(back.x, traj.x) and np.array_equal(back.u, traj.u, equal_nan=True)
    assert back.r == traj.r
