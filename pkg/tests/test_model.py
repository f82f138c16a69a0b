from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from commotions.model import kernels as K
from commotions.model.core import (
    DEFAULT_BOUNDS,
    ActionSet,
    AgentSimState,
    BehaviorIntent,
    BeliefState,
    ControlScheme,
    InteractionMode,
    ModelParams,
    SimConfig,
    Trajectory,
    accumulate_and_select,
    evaluate_value,
    generate_trajectory,
    perceive,
    theory_of_mind_weights,
)
from commotions.scenario import ProjectedState

from oracles import fidelity_errors, random_plans

FIRST = BehaviorIntent.PASS_FIRST
SECOND = BehaviorIntent.PASS_SECOND


class TestConfigTypes:
    def test_action_set_rules(self):
        assert ActionSet((-1.0, 0.0, 1.0)).zero_index == 1
        for bad in [(-1.0, 1.0), (-2.0, -1.0, 1.0, 2.0), (-1.0, 0.0, 2.0), (1.0, 0.0, -1.0)]:
            with pytest.raises(ValueError):
                ActionSet(bad)

    def test_default_action_sets(self):
        assert SimConfig().actions.actions == (-4.0, -2.0, 0.0, 2.0, 4.0)
        assert SimConfig(scheme="JC").actions.actions == (-10.0, -5.0, 0.0, 5.0, 10.0)

    def test_params_must_sit_inside_bounds(self):
        with pytest.raises(ValueError):
            ModelParams(beta=50.0)
        with pytest.raises(ValueError):
            ModelParams(bounds=dict(DEFAULT_BOUNDS, lam=(0.5, 0.5)))

    def test_params_round_trip(self):
        p = ModelParams(sigma_obs=1.25, beta=3.0)
        assert ModelParams.from_dict(p.to_dict()) == p
        assert ModelParams.from_array(p.as_array()) == p

    def test_belief_must_be_psd(self):
        with pytest.raises(ValueError):
            BeliefState((0.0, 0.0), ((1.0, 2.0), (2.0, 1.0)))

    def test_sim_config_round_trip(self):
        cfg = SimConfig(mode="IM", scheme="JC", dt=0.05)
        assert SimConfig.from_dict(cfg.to_dict()) == cfg


class TestPerceive:
    def test_noiseless_posterior_is_truth(self):
        rng = np.random.default_rng(0)
        b = BeliefState((10.0, 2.0), ((0.0, 0.0), (0.0, 0.0)))
        post = perceive(ProjectedState(9.8, 2.0), b, 0.0, 0.1, rng)
        assert post.mean[0] == pytest.approx(9.8, abs=1e-12)

    def test_variance_contracts_on_stationary_agent(self):
        rng = np.random.default_rng(1)
        b = BeliefState((5.0, 0.0), ((1.0, 0.0), (0.0, 1.0)))
        variances = []
        for _ in range(30):
            b = perceive(ProjectedState(5.0, 0.0), b, 1.0, 0.1, rng, process_noise=0.0)
            variances.append(b.cov[0][0])
        assert np.all(np.diff(variances) < 0)

    def test_covariance_stays_psd(self):
        rng = np.random.default_rng(2)
        b = BeliefState((50.0, 10.0), ((0.25, 0.0), (0.0, 1.0)))
        for k in range(200):
            b = perceive(ProjectedState(50.0 - k, 10.0), b, 0.5, 0.1, rng)
            c = np.array(b.cov)
            assert np.allclose(c, c.T)
            assert np.linalg.eigvalsh(c).min() >= -1e-12

    def test_filter_beats_raw_observations(self):
        # Monte-Carlo: 1000 runs of 50 steps of constant-velocity motion
        rng = np.random.default_rng(3)
        sigma, dt = 1.0, 0.1
        err_filter, err_raw = [], []
        for _ in range(1000):
            d, v = 60.0, 8.0
            b = BeliefState((d, v), ((sigma ** 2, 0.0), (0.0, 1.0)))
            for _ in range(50):
                d -= v * dt
                b = perceive(ProjectedState(d, v), b, sigma, dt, rng)
            err_filter.append(b.mean[0] - d)
            err_raw.append(sigma * rng.standard_normal())
        assert np.sqrt(np.mean(np.square(err_filter))) < np.sqrt(np.mean(np.square(err_raw)))

    def test_rejects_non_finite(self):
        b = BeliefState((0.0, 0.0), ((1.0, 0.0), (0.0, 1.0)))
        with pytest.raises(ValueError):
            perceive(ProjectedState(float("nan"), 0.0), b, 1.0, 0.1, np.random.default_rng(0))
        with pytest.raises(ValueError):
            perceive(ProjectedState(1.0, 0.0), b, 1.0, 0.0, np.random.default_rng(0))


class TestGenerateTrajectory:
    def test_constant_velocity(self):
        tr = generate_trajectory(AgentSimState(10.0, 2.0), 0.0, FIRST, None, 10.0, SimConfig())
        for t in np.linspace(0, 10, 41):
            assert tr.state(t)[0] == pytest.approx(10.0 - 2.0 * t, abs=1e-12)
        assert tr.feasible

    def test_constant_acceleration(self):
        cfg = SimConfig(actions=(-1.0, 0.0, 1.0), action_duration=10.0)
        tr = generate_trajectory(AgentSimState(10.0, 0.0), 1.0, FIRST, None, 10.0, cfg)
        assert tr.state(2.0)[0] == pytest.approx(8.0, abs=1e-12)

    def test_control_outside_action_set(self):
        with pytest.raises(ValueError):
            generate_trajectory(AgentSimState(10.0, 0.0), 1.0, FIRST, None, 10.0, SimConfig())

    def test_pass_second_stops_at_boundary(self):
        tr = generate_trajectory(AgentSimState(20.0, 10.0), 0.0, SECOND, None, 10.0, SimConfig(),
                                 other_occupancy=(2.0, 4.0))
        assert tr.feasible
        d, v, _ = tr.state(4.4)
        assert d == pytest.approx(0.0, abs=1e-12) and v == pytest.approx(0.0, abs=1e-12)
        # standing on the boundary is not entering; entry comes after the other leaves plus the margin
        t_in, t_out, _, _ = tr.summary(5.0)
        assert t_in == pytest.approx(4.5, abs=1e-4)
        assert tr.state(4.6)[0] < 0.0

    def test_yielding_stop_is_not_a_collision(self):
        me = generate_trajectory(AgentSimState(20.0, 10.0), 0.0, SECOND, None, 10.0, SimConfig(),
                                 other_occupancy=(2.0, 4.0), length=5.0)
        other = Trajectory(np.array([[0.0, 20.0, 10.0, 0.0, 0.0]]), True, 10.0)  # inside during [2, 2.5]
        val = evaluate_value(me, other, ModelParams(), has_priority=False, length_self=5.0, length_other=5.0)
        assert val > -1.0e3

    def test_pass_second_infeasible_when_too_close(self):
        tr = generate_trajectory(AgentSimState(15.0, 20.0), 0.0, SECOND, None, 10.0, SimConfig(),
                                 other_occupancy=(0.5, 3.0))
        assert not tr.feasible

    def test_pass_first_clears_before_other_arrives(self):
        tr = generate_trajectory(AgentSimState(20.0, 5.0), 0.0, FIRST, None, 10.0, SimConfig(),
                                 other_occupancy=(5.0, 7.0), length=5.0)
        assert tr.feasible
        assert tr.crossing_time(-5.0) == pytest.approx(4.5, abs=1e-9)

    def test_pass_first_infeasible_beyond_max_acceleration(self):
        tr = generate_trajectory(AgentSimState(60.0, 1.0), 0.0, FIRST, None, 10.0, SimConfig(),
                                 other_occupancy=(2.0, 4.0), length=5.0)
        assert not tr.feasible

    def test_jerk_scheme_saturates_acceleration(self):
        cfg = SimConfig(scheme="JC", action_duration=2.0)
        tr = generate_trajectory(AgentSimState(100.0, 10.0, 0.0), 10.0, FIRST, None, 10.0, cfg)
        assert tr.state(1.0)[2] == pytest.approx(4.0)

    def test_speed_never_negative(self):
        tr = generate_trajectory(AgentSimState(30.0, 2.0), -4.0, FIRST, None, 10.0, SimConfig())
        speeds = [tr.state(t)[1] for t in np.linspace(0, 10, 101)]
        assert min(speeds) >= 0.0
        assert tr.state(10.0)[0] == pytest.approx(30.0 - 0.5, abs=1e-12)

    def test_analytic_matches_rk4_oracle(self):
        assert fidelity_errors(random_plans(300, seed=21)).max() < 1e-6

    def test_euler_oracle_converges_at_first_order(self):
        plans = random_plans(60, seed=22)
        coarse = fidelity_errors(plans, h=1e-3, rk4=False)
        fine = fidelity_errors(plans, h=5e-4, rk4=False)
        moving = coarse > 1e-8
        ratio = coarse[moving] / fine[moving]
        assert np.all((ratio > 1.9) & (ratio < 2.1))
        assert coarse.max() < 0.05


def _traj(d, v, u=0.0, b=FIRST, occ=(np.inf, np.inf), cfg=None, horizon=10.0):
    return generate_trajectory(AgentSimState(d, v), u, b, None, horizon, cfg or SimConfig(), other_occupancy=occ)


class TestEvaluateValue:
    def test_all_terms_vanish(self):
        params = ModelParams(w_time=0.0)
        val = evaluate_value(_traj(10.0, 2.0), _traj(500.0, 1.0), params, has_priority=True,
                             length_self=5.0, length_other=5.0)
        assert val == 0.0

    def test_overlap_costs_the_collision_penalty(self):
        val = evaluate_value(_traj(10.0, 5.0), _traj(10.0, 5.0), ModelParams(), has_priority=True,
                             length_self=5.0, length_other=5.0)
        assert val <= -1.0e4

    def test_control_term_is_linear_in_effort(self):
        params = ModelParams(w_time=0.0, w_rule=0.0)
        other = _traj(500.0, 1.0)
        short = _traj(100.0, 10.0, u=2.0, cfg=SimConfig(action_duration=1.0))
        long = _traj(100.0, 10.0, u=2.0, cfg=SimConfig(action_duration=2.0))
        assert long.control_effort() == pytest.approx(2.0 * short.control_effort())
        v_short = evaluate_value(short, other, params, has_priority=True, length_self=5, length_other=5)
        v_long = evaluate_value(long, other, params, has_priority=True, length_self=5, length_other=5)
        assert v_long == pytest.approx(2.0 * v_short)

    def test_rule_violation_only_without_priority(self):
        me, other = _traj(10.0, 10.0), _traj(50.0, 10.0)
        p = ModelParams(w_rule=3.0)
        with_prio = evaluate_value(me, other, p, has_priority=True, length_self=5, length_other=5)
        without = evaluate_value(me, other, p, has_priority=False, length_self=5, length_other=5)
        assert with_prio - without == pytest.approx(3.0)

    def test_infeasible_plan_is_penalised(self):
        bad = _traj(15.0, 20.0, b=SECOND, occ=(0.5, 3.0))
        val = evaluate_value(bad, _traj(500.0, 1.0), ModelParams(), has_priority=True,
                             length_self=5, length_other=5)
        assert val <= -1.0e4

    def test_horizons_must_match(self):
        with pytest.raises(ValueError):
            evaluate_value(_traj(10, 1), _traj(10, 1, horizon=5.0), ModelParams(), has_priority=True,
                           length_self=5, length_other=5)


class TestTheoryOfMind:
    def test_equal_values(self):
        assert theory_of_mind_weights([[-2.0, -1.0], [-1.0, -3.0]], 1.0) == pytest.approx([0.5, 0.5])

    def test_large_beta_picks_argmax(self):
        w = theory_of_mind_weights([-1.0, -1.5], 200.0)
        assert w[0] == pytest.approx(1.0, abs=1e-12)

    def test_hand_evaluated_softmax(self):
        w = theory_of_mind_weights([-1.0, -3.0], 1.0)
        expected = np.exp([-1.0, -3.0]) / np.exp([-1.0, -3.0]).sum()
        assert w == pytest.approx(expected, abs=1e-12)
        assert w == pytest.approx([0.8808, 0.1192], abs=1e-4)

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=2),
           st.floats(0.01, 10.0), st.floats(-1e3, 1e3))
    @settings(max_examples=200, deadline=None)
    def test_distribution_and_shift_invariance(self, vals, beta, shift):
        w = theory_of_mind_weights(vals, beta)
        assert abs(w.sum() - 1.0) <= 1e-12 and np.all(w >= 0)
        shifted = theory_of_mind_weights(np.asarray(vals) + shift, beta)
        if abs(vals[0] - vals[1]) > 1e-9:
            assert np.argmax(shifted) == np.argmax(w)

    def test_rejects_non_positive_beta(self):
        with pytest.raises(ValueError):
            theory_of_mind_weights([0.0, 1.0], 0.0)


class TestAccumulate:
    def test_switches_after_one_step_without_noise_or_leak(self):
        params = ModelParams(lam=0.01, sigma_acc=0.0, threshold=0.1)
        st_ = AgentSimState(10.0, 1.0, current=2)
        _, new = accumulate_and_select(st_, [0.0, 0.0, 0.0, 5.0, 0.0], params, 0.1, np.random.default_rng(0))
        assert new == 3

    def test_huge_threshold_never_switches(self):
        bounds = dict(DEFAULT_BOUNDS, threshold=(0.0, 1e9))
        params = ModelParams(threshold=1e8, sigma_acc=5.0, bounds=bounds)
        st_ = AgentSimState(10.0, 1.0, current=2)
        rng = np.random.default_rng(4)
        for _ in range(500):
            _, new = accumulate_and_select(st_, rng.normal(0, 100, 5), params, 0.1, rng)
            assert new == 2

    @given(st.floats(0.01, 0.99), st.floats(0.01, 3.0),
           st.lists(st.floats(-50, 50), min_size=5, max_size=5), st.integers(0, 4))
    @settings(max_examples=200, deadline=None)
    def test_intermittency_with_constant_values(self, lam, threshold, values, start):
        params = ModelParams(lam=lam, sigma_acc=0.0, threshold=threshold)
        state = AgentSimState(0.0, 0.0, current=start)
        rng = np.random.default_rng(0)
        history = [start]
        for _ in range(100):
            _, cur = accumulate_and_select(state, values, params, 0.1, rng)
            history.append(cur)
        assert np.count_nonzero(np.diff(history)) <= 1

    def test_accumulator_length_must_match(self):
        state = AgentSimState(0.0, 0.0, accumulators=np.zeros(3))
        with pytest.raises(ValueError):
            accumulate_and_select(state, np.zeros(5), ModelParams(), 0.1, np.random.default_rng(0))


class TestKernelPieces:
    def test_cross_time_matches_bisection_on_cubic(self):
        from oracles import bisection_root

        seg = np.zeros((K.MAX_SEGMENTS, 5))
        n = K._push(seg, 0, 0.0, 12.0, 1.0, 0.5, 0.3)
        t = K.cross_time(seg, n, 0.0, 10.0)
        f = lambda x: 12.0 - x - 0.25 * x * x - 0.05 * x ** 3  # noqa: E731
        assert t == pytest.approx(bisection_root(f, 0.0, 10.0), abs=1e-9)

    def test_summary_of_agent_already_through(self):
        seg = np.zeros((K.MAX_SEGMENTS, 5))
        n = K._push(seg, 0, 0.0, -6.0, 3.0, 0.0, 0.0)
        t_in, t_out, t_clear, _ = K.summarize(seg, n, 5.0, 10.0, 1.0)
        assert t_in < 0 and t_out < 0 and t_clear == 0.0

    def test_clearance_beyond_horizon_is_extrapolated(self):
        tr = Trajectory(np.array([[0.0, 30.0, 1.0, 0.0, 0.0]]), True, 10.0)
        _, t_out, t_clear, _ = tr.summary(5.0)
        assert math.isinf(t_out)
        assert t_clear == pytest.approx(10.0 + 25.0 / 1.0)

    def test_modes_are_enums(self):
        assert InteractionMode("IM") is InteractionMode.INTERACTIVE
        assert ControlScheme("JC") is ControlScheme.JERK
