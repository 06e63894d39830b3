"""Plant stepping, disturbance streams, closed-loop simulation, verdicts."""
import math

import numpy as np
import pytest

from tubenav.control import CHANNEL_MAPS, ControllerGains
from tubenav.dynamics import (custom_affine, omni_robot, single_integrator,
                              step_dynamics)
from tubenav.errors import FunnelViolationError
from tubenav.geometry import HyperRect
from tubenav.simulation import (DisturbanceSpec, Trajectory, evaluate_ras,
                                min_pairwise_distance, simulate_agent)
from tubenav.tubes import ObstacleSet, build_reachability_tube


def rect(*bounds):
    return HyperRect.from_bounds(bounds)


ZERO_D = DisturbanceSpec(d_max=0.0)


class TestStepDynamics:
    def test_velocity_integration_is_exact(self):
        model = single_integrator(3)
        x = step_dynamics(model, np.zeros(3), np.array([1.0, 0.0, 0.0]),
                          np.zeros(3), 0.1)
        np.testing.assert_allclose(x, [0.1, 0.0, 0.0], atol=1e-15)

    def test_planar_robot_zero_heading_moves_straight(self):
        model = omni_robot()
        x = step_dynamics(model, np.zeros(3), np.array([1.0, 0.0, 0.0]),
                          np.zeros(3), 0.01)
        np.testing.assert_allclose(x, [0.01, 0.0, 0.0], atol=1e-15)

    def test_planar_robot_quarter_heading_moves_sideways(self):
        model = omni_robot()
        x0 = np.array([0.0, 0.0, math.pi / 2])
        x = step_dynamics(model, x0, np.array([1.0, 0.0, 0.0]), np.zeros(3), 0.01)
        np.testing.assert_allclose(x - x0, [0.0, 0.01, 0.0], atol=1e-12)

    def test_disturbance_added_to_rate(self):
        model = single_integrator(2)
        x = step_dynamics(model, np.zeros(2), np.zeros(2),
                          np.array([0.5, -0.5]), 0.2)
        np.testing.assert_allclose(x, [0.1, -0.1], atol=1e-15)

    def test_bad_dt_rejected(self):
        with pytest.raises(ValueError):
            step_dynamics(single_integrator(1), np.zeros(1), np.zeros(1),
                          np.zeros(1), 0.0)

    def test_fourth_order_convergence_on_smooth_plant(self):
        # nonlinear drift with a known smooth flow; no input, no disturbance
        model = custom_affine(1, 1, drift=lambda x: np.cos(x),
                              input_map=lambda x: np.zeros((1, 1)))

        def integrate(n_steps):
            x = np.array([0.1])
            dt = 2.0 / n_steps
            for _ in range(n_steps):
                x = step_dynamics(model, x, np.zeros(1), np.zeros(1), dt)
            return x[0]

        reference = integrate(4096)
        err_coarse = abs(integrate(32) - reference)
        err_fine = abs(integrate(64) - reference)
        order = math.log2(err_coarse / err_fine)
        assert order >= 3.5


class TestDisturbanceSpec:
    def test_every_sample_within_bounds(self):
        for process in ("uniform", "truncated_normal", "constant_bias"):
            spec = DisturbanceSpec(d_max=0.3, seed=7, process=process)
            d = spec.realize(agent_id=2, n_steps=500, n=3)
            assert d.shape == (500, 3)
            assert np.all(np.abs(d) <= 0.3)

    def test_per_dimension_bounds(self):
        spec = DisturbanceSpec(d_max=(0.1, 0.5))
        d = spec.realize(agent_id=1, n_steps=200, n=2)
        assert np.all(np.abs(d[:, 0]) <= 0.1)
        assert np.all(np.abs(d[:, 1]) <= 0.5)
        assert np.max(np.abs(d[:, 1])) > 0.1

    def test_stream_depends_on_seed_and_agent(self):
        a = DisturbanceSpec(d_max=1.0, seed=3).realize(1, 100, 2)
        b = DisturbanceSpec(d_max=1.0, seed=3).realize(1, 100, 2)
        c = DisturbanceSpec(d_max=1.0, seed=3).realize(2, 100, 2)
        e = DisturbanceSpec(d_max=1.0, seed=4).realize(1, 100, 2)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)
        assert not np.array_equal(a, e)

    def test_constant_bias_is_constant(self):
        d = DisturbanceSpec(d_max=0.2, process="constant_bias").realize(1, 50, 2)
        assert np.all(d == d[0])

    def test_unknown_process_rejected(self):
        with pytest.raises(ValueError):
            DisturbanceSpec(d_max=0.1, process="pink_noise").realize(1, 10, 1)


class TestSimulateAgent:
    ARENA = rect((0, 12))

    def transit_tube(self):
        return build_reachability_tube(rect((0, 1)), rect((9, 10)), 10.0,
                                       self.ARENA)

    def test_equilibrium_at_center_of_constant_tube(self):
        tube = build_reachability_tube(rect((2, 3)), rect((2, 3)), 5.0,
                                       self.ARENA)
        traj = simulate_agent(single_integrator(1), tube,
                              ControllerGains((2.0,)), ZERO_D, [2.5], 0.01)
        np.testing.assert_allclose(traj.states, 2.5, atol=1e-12)
        np.testing.assert_allclose(traj.inputs, 0.0, atol=1e-12)
        assert np.all(traj.contained)

    def test_transit_stays_contained_under_disturbance(self):
        tube = self.transit_tube()
        for seed in range(5):
            traj = simulate_agent(single_integrator(1), tube,
                                  ControllerGains((5.0,)),
                                  DisturbanceSpec(d_max=0.1, seed=seed),
                                  [0.5], 0.001)
            assert np.all(traj.contained)
            assert not traj.violation_events()

    def test_initial_state_outside_tube_rejected(self):
        tube = self.transit_tube()
        with pytest.raises(FunnelViolationError):
            simulate_agent(single_integrator(1), tube, ControllerGains((5.0,)),
                           ZERO_D, [1.5], 0.01)

    def test_weak_gain_logs_violations_without_halting(self):
        tube = self.transit_tube()
        traj = simulate_agent(single_integrator(1), tube,
                              ControllerGains((1e-6,)),
                              DisturbanceSpec(d_max=1.0, seed=0), [0.5], 0.01)
        assert not np.all(traj.contained)
        assert traj.violation_events()
        assert traj.n_samples == 1001

    def test_identical_runs_are_bit_identical(self):
        tube = self.transit_tube()
        runs = [simulate_agent(single_integrator(1), tube,
                               ControllerGains((5.0,)),
                               DisturbanceSpec(d_max=0.1, seed=42), [0.5], 0.001)
                for _ in range(2)]
        np.testing.assert_array_equal(runs[0].states, runs[1].states)
        np.testing.assert_array_equal(runs[0].inputs, runs[1].inputs)

    def test_compiled_and_python_paths_agree(self):
        # passing the callable bypasses the compiled kernel
        tube = self.transit_tube()
        spec = DisturbanceSpec(d_max=0.05, seed=1)
        fast = simulate_agent(single_integrator(1), tube,
                              ControllerGains((5.0,)), spec, [0.5], 0.001,
                              channel_map="identity")
        slow = simulate_agent(single_integrator(1), tube,
                              ControllerGains((5.0,)), spec, [0.5], 0.001,
                              channel_map=CHANNEL_MAPS["identity"])
        np.testing.assert_allclose(slow.states, fast.states, atol=1e-9, rtol=0)
        np.testing.assert_array_equal(slow.contained, fast.contained)

    def test_stay_window_extends_horizon_with_final_bounds(self):
        tube = self.transit_tube()
        traj = simulate_agent(single_integrator(1), tube,
                              ControllerGains((5.0,)), ZERO_D, [0.5], 0.01,
                              stay_window=0.5)
        assert traj.t[-1] == pytest.approx(10.5)
        final = tube.cross_section(10.0)
        assert traj.lower[-1, 0] == pytest.approx(final.dims[0].lo)
        assert traj.upper[-1, 0] == pytest.approx(final.dims[0].hi)


def make_trajectory(t, xs):
    xs = np.asarray(xs, dtype=float)
    return Trajectory(agent_id=1, t=np.asarray(t, dtype=float), states=xs,
                      inputs=np.zeros_like(xs), lower=np.zeros_like(xs),
                      upper=np.ones_like(xs) * 100.0,
                      contained=np.ones(len(t), dtype=bool))


class TestEvaluateRas:
    T_BOX = rect((8, 10))

    def test_pinned_in_target_reaches_at_time_zero(self):
        traj = make_trajectory(np.linspace(0, 11, 23), np.full((23, 1), 9.0))
        verdict = evaluate_ras(traj, rect((8, 10)), self.T_BOX, ObstacleSet(1),
                               t_p=10.0, stay_window=1.0)
        assert verdict.reach and verdict.reach_time == 0.0
        assert verdict.avoid and verdict.stay
        assert verdict.satisfied

    def test_obstacle_sample_fails_avoid_with_witness(self):
        t = np.linspace(0, 11, 23)
        xs = np.linspace(0, 9, 23).reshape(-1, 1)
        traj = make_trajectory(t, xs)
        verdict = evaluate_ras(traj, rect((0, 1)), self.T_BOX,
                               ObstacleSet(1, (rect((4, 5)),)),
                               t_p=10.0, stay_window=1.0)
        assert not verdict.avoid
        assert verdict.avoid_violation_time is not None
        assert not verdict.satisfied

    def test_leaving_target_after_deadline_fails_stay(self):
        t = np.linspace(0, 11, 23)
        xs = np.full((23, 1), 9.0)
        xs[-1, 0] = 0.0  # wanders off during the trailing window
        verdict = evaluate_ras(make_trajectory(t, xs), rect((8, 10)),
                               self.T_BOX, ObstacleSet(1), 10.0, 1.0)
        assert verdict.reach and not verdict.stay

    def test_short_trajectory_rejected(self):
        traj = make_trajectory(np.linspace(0, 5, 11), np.full((11, 1), 9.0))
        with pytest.raises(ValueError):
            evaluate_ras(traj, rect((8, 10)), self.T_BOX, ObstacleSet(1),
                         10.0, 1.0)


class TestMinPairwiseDistance:
    def test_single_trajectory_is_unbounded(self):
        traj = make_trajectory([0, 1], [[0.0], [1.0]])
        assert min_pairwise_distance([traj], [(0,)]) == math.inf

    def test_closest_approach_found(self):
        a = make_trajectory([0, 1, 2], [[0.0], [1.0], [2.0]])
        b = make_trajectory([0, 1, 2], [[3.0], [1.5], [3.0]])
        assert min_pairwise_distance([a, b], [(0,), (0,)]) == pytest.approx(0.5)
