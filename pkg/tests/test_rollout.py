import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpseq.core import AdjustmentSet, DynamicsParams
from mpseq.dynamics import refine_grid, substeps
from mpseq.rollout import OutsideTrainingWarning, check_adjustment, default_adjustment, regenerate, sweep

P = DynamicsParams()


def _zero(mp, g=(10.0, 0.0), T=5.0, **kw):
    return AdjustmentSet(b=(0.0, 0.0), g=g, T=T, s_x=np.zeros(mp.J), s_y=np.zeros(mp.J), **kw)


def test_output_grid_and_start_anchoring(lane_mp):
    adj = default_adjustment(lane_mp, b=(4.0, -7.0))
    tr = regenerate(lane_mp, adj)
    assert len(tr) == P.steps + 1
    assert tr.dt == pytest.approx(adj.T / P.steps)
    np.testing.assert_array_equal(tr.points[0], adj.b)
    np.testing.assert_array_equal(tr.velocities[0], 0.0)


def test_zero_coefficients_follow_forcing_free_ramp(lane_mp):
    # forcing-free reach: tracking error of a critically damped follower of a
    # goal ramping at speed V is e(t) = 2V/w - (2V/w + V t) exp(-w t), w = alpha_m/2
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OutsideTrainingWarning)
        tr = regenerate(lane_mp, _zero(lane_mp))
    V, w = 2.0, P.alpha_m / 2
    t = tr.t
    e = 2 * V / w - (2 * V / w + V * t) * np.exp(-w * t)
    np.testing.assert_array_equal(tr.points[:, 1], 0.0)
    np.testing.assert_allclose(V * t - tr.points[:, 0], e, atol=0.05)
    assert np.all(np.diff(tr.points[:, 0]) >= 0)
    # the ramp lag 2V/w is what remains at the end of the window
    assert np.linalg.norm(tr.end - [10.0, 0.0]) == pytest.approx(2 * V / w, rel=1e-3)


def test_determinism(lane_mp):
    adj = default_adjustment(lane_mp)
    a, b = regenerate(lane_mp, adj), regenerate(lane_mp, adj)
    assert a.points.tobytes() == b.points.tobytes()
    assert a.velocities.tobytes() == b.velocities.tobytes()


def test_time_scaling_dilates_the_path(turn_mp):
    adj = default_adjustment(turn_mp)
    a = regenerate(turn_mp, adj)
    b = regenerate(turn_mp, adj.replace(tau=2.0))
    assert b.duration == pytest.approx(2 * a.duration)
    # sample n of the slow rollout sits where sample n of the fast one did
    assert np.max(np.abs(a.points - b.points)) <= 0.02 * a.path_length()
    # only the end-of-window phase drop (sample_dt / 2 in seconds) breaks exactness
    np.testing.assert_allclose(b.points, a.points, atol=1e-4)
    np.testing.assert_allclose(b.velocities, a.velocities / 2, atol=1e-4)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6), kind=st.sampled_from(["lane", "turn"]))
def test_goal_convergence_inside_training_cloud(seed, kind, lane_mp, turn_mp):
    # convex mixtures of the training adjustments
    mp = lane_mp if kind == "lane" else turn_mp
    w = np.random.default_rng(seed).dirichlet(np.ones(mp.Q))
    adj = AdjustmentSet(
        b=(0.0, 0.0),
        g=w @ mp.demo_goals,
        T=float(w @ mp.demo_durations),
        s_x=w @ mp.demo_s_x,
        s_y=w @ mp.demo_s_y,
    )
    tr = regenerate(mp, adj)
    assert np.linalg.norm(tr.end - adj.g) <= max(0.01 * np.linalg.norm(adj.g), 0.01)


def test_far_coefficients_warn(lane_mp):
    s = lane_mp.demo_s_x.mean(axis=0) + 100 * lane_mp.demo_s_x.std(axis=0)
    adj = default_adjustment(lane_mp).replace(s_x=s)
    with pytest.warns(OutsideTrainingWarning):
        check_adjustment(lane_mp, adj)


def test_coefficient_count_must_match(lane_mp):
    adj = AdjustmentSet(b=(0, 0), g=(1, 0), T=1.0, s_x=[1.0], s_y=[1.0])
    with pytest.raises(ValueError):
        regenerate(lane_mp, adj)
    with pytest.raises(ValueError):
        regenerate(lane_mp, default_adjustment(lane_mp), n_steps=0)


def test_goal_sweep_lands_each_goal(lane_mp):
    base = default_adjustment(lane_mp)
    goals = [base.g + [0.0, dy] for dy in (-0.5, 0.0, 0.5)]
    out = sweep(lane_mp, base, "goal", goals)
    assert len(out) == 3
    for tr, g in zip(out, goals):
        assert abs(tr.end[1] - g[1]) <= 0.05 * abs(g[1])


def _arc_profile(tr):
    s = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(tr.points, axis=0), axis=1))]
    return s / s[-1]


def test_duration_sweep_keeps_geometry(lane_mp):
    base = default_adjustment(lane_mp)
    a, b = sweep(lane_mp, base, "duration", [base.T, 2 * base.T])
    assert b.duration == pytest.approx(2 * a.duration)
    assert np.max(np.abs(_arc_profile(a) - _arc_profile(b))) <= 0.02
    assert np.linalg.norm(b.end - a.end) <= 0.03 * a.path_length()


def test_s_sweep_changes_only_that_coefficient(turn_mp):
    base = default_adjustment(turn_mp)
    values = [base.s_y[0] * 0.9, base.s_y[0] * 1.1]
    lo, hi = sweep(turn_mp, base, "s", values, axis="y", index=0)
    assert not np.allclose(lo.points, hi.points)
    np.testing.assert_array_equal(lo.points[0], hi.points[0])


def test_sweep_errors(lane_mp):
    base = default_adjustment(lane_mp)
    with pytest.raises(ValueError):
        sweep(lane_mp, base, "goal", [])
    with pytest.raises(ValueError):
        sweep(lane_mp, base, "colour", [1])
    with pytest.raises(ValueError):
        sweep(lane_mp, base, "s", [1.0], axis="z")


def test_long_durations_are_substepped(lane_mp):
    assert substeps(P, 0.045) == 1
    assert substeps(P, 0.09) == 3
    np.testing.assert_allclose(refine_grid(np.array([0.0, 1.0, 3.0]), 2), [0, 0.5, 1, 2, 3])
    tr = regenerate(lane_mp, default_adjustment(lane_mp).replace(T=20.0))
    assert len(tr) == P.steps + 1
    assert np.all(np.isfinite(tr.points))
    assert np.max(np.abs(tr.points)) < 10 * np.linalg.norm(lane_mp.mean_goal())


def test_default_adjustment_uses_training_means(lane_mp):
    adj = default_adjustment(lane_mp)
    np.testing.assert_allclose(adj.s_x, lane_mp.demo_s_x.mean(axis=0))
    np.testing.assert_allclose(adj.g, lane_mp.demo_goals.mean(axis=0))
    assert adj.T == pytest.approx(lane_mp.mean_duration)
    assert math.isclose(adj.tau, 1.0)
