"""Acceptance suite: end-to-end guarantees with explicit pass/fail reporting.

Each criterion prints exactly one ``ACCEPTANCE n (name): PASS`` or ``FAIL``
line so the outcome is scannable from the test log.
"""
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from tubenav.control import control_input
from tubenav.dynamics import custom_affine, step_dynamics
from tubenav.negotiation import Topology, negotiate, verify_disjointness
from tubenav.pipeline import (build_agent_tubes, feasible_random_scenarios,
                              plan, replan_contexts, run)
from tubenav.scenario import bundled_scenario
from tubenav.simulation import simulate_fleet
from tubenav.tubes import time_grid, verify_tube


@contextmanager
def acceptance(number, name):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {number} ({name}): FAIL")
        raise
    print(f"\nACCEPTANCE {number} ({name}): PASS")


# ---------------------------------------------------------------------------
# shared, expensive artifacts

@pytest.fixture(scope="module")
def random_batch():
    """First 50 randomized scenarios (2-6 agents, 0-4 obstacles) that plan
    cleanly, with their plan results."""
    return feasible_random_scenarios(50)


@pytest.fixture(scope="module")
def robots_plan():
    scenario = bundled_scenario("case_study_robots")
    return scenario, plan(scenario)


@pytest.fixture(scope="module")
def drones_plan():
    scenario = bundled_scenario("case_study_drones")
    return scenario, plan(scenario)


def scenario_masks(scenario):
    return {a.id: a.workspace_mask for a in scenario.agents}


def verify_all_tubes(scenario, tubes):
    for agent in scenario.agents:
        report = verify_tube(tubes[agent.id], scenario.state_start(agent),
                             scenario.state_target(agent),
                             scenario.state_arena(agent),
                             scenario.state_obstacles(agent),
                             agent.t_p / 1e4)
        assert report.ok, (scenario.name, agent.id, report)


# ---------------------------------------------------------------------------
# criteria

def test_criterion_1_controller_oracle():
    with acceptance(1, "controller oracle and shape"):
        start = time.perf_counter()
        # independent evaluation of the three formulas, assembled by hand:
        # e = 0.5, transformed error ln 3, gain 4 / ((1 - e^2)(up - lo))
        e = (1.5 - 1.0) / 1.0
        expected = -1.0 * (4.0 / ((1.0 - e * e) * 2.0)) * math.log(
            (1.0 + e) / (1.0 - e))
        assert abs(control_input(1.5, 0.0, 2.0, kappa=1.0) - expected) <= 1e-9
        assert expected == pytest.approx(-2.929635, abs=1e-5)

        lo, up, center = 0.0, 2.0, 1.0
        offsets = np.linspace(1e-6, 0.999, 1000)
        left = np.array([control_input(center - a, lo, up, 1.0)
                         for a in offsets])
        right = np.array([control_input(center + a, lo, up, 1.0)
                          for a in offsets])
        assert np.all(np.abs(left + right) <= 1e-9 * np.maximum(1.0, np.abs(left)))

        xs = np.linspace(0.001, 1.999, 1000)
        us = np.array([control_input(float(x), lo, up, 1.0) for x in xs])
        assert np.all(np.diff(us) < 0)
        elapsed = time.perf_counter() - start
        assert elapsed < 1.0, f"took {elapsed:.2f}s"


def test_criterion_2_tube_validity(random_batch):
    with acceptance(2, "tube validity on case studies and 50 random scenarios"):
        start = time.perf_counter()
        for name in ("case_study_robots", "case_study_drones"):
            scenario = bundled_scenario(name)
            verify_all_tubes(scenario, build_agent_tubes(scenario))
        for scenario, planned in random_batch:
            verify_all_tubes(scenario, planned.tubes_pre)
        elapsed = time.perf_counter() - start
        assert elapsed < 30.0, f"took {elapsed:.2f}s"


def test_criterion_3_post_negotiation_disjointness(random_batch, robots_plan,
                                                   drones_plan):
    with acceptance(3, "negotiated tubes pairwise disjoint"):
        start = time.perf_counter()
        cases = [robots_plan, drones_plan] + [
            (sc, pl) for sc, pl in random_batch]
        for scenario, planned in cases:
            masks = scenario_masks(scenario)
            report = verify_disjointness(planned.tubes_post, masks,
                                         scenario.dt_check())
            assert report.ok, (scenario.name, report)
        # renegotiating already-disjoint tubes must be an exact no-op
        for scenario, planned in cases[:7]:
            topology = Topology(agents=tuple(a.id for a in scenario.agents),
                                token_order=scenario.negotiation.token_order)
            again, log = negotiate(planned.tubes_post, topology,
                                   replan_contexts(scenario),
                                   scenario.dt_check(),
                                   delta=scenario.negotiation.delta,
                                   blend=scenario.negotiation.blend)
            assert log.updates() == []
            assert all(again[i] is planned.tubes_post[i] for i in again)
        elapsed = time.perf_counter() - start
        assert elapsed < 60.0, f"took {elapsed:.2f}s"


def test_criterion_4_four_agent_negotiation_structure():
    with acceptance(4, "four-agent crossing negotiation structure"):
        scenario = bundled_scenario("crossing_four")
        planned = plan(scenario)
        log = planned.log

        # agents 1, 2, 4 replan; agent 3 keeps its original tube
        assert log.updated_agents() == {1, 2, 4}
        assert planned.tubes_post[3] is planned.tubes_pre[3]

        updates = log.updates()
        by_hub = {r.hub: r for r in updates}
        # agent 4's conflict is with agent 1 and is examined only after
        # agent 1 already holds its updated tube
        assert by_hub[4].conflict_with == (1,)
        assert updates.index(by_hub[1]) < updates.index(by_hub[4])

        # each updated tube has the three-branch shape: untouched lead-in,
        # constant hold over the conflict window, replanned tail
        dt_check = scenario.dt_check()
        delta = scenario.negotiation.delta or 2 * dt_check
        blend = scenario.negotiation.blend or 4 * dt_check
        for hub in (1, 2, 4):
            pre = planned.tubes_pre[hub]
            post = planned.tubes_post[hub]
            assert len(post.freezes) >= 1
            fr = post.freezes[0]
            for t in np.linspace(0.0, fr.t_lo - delta - blend, 25):
                assert post.cross_section(float(t)) == pre.cross_section(float(t))
            for t in np.linspace(fr.t_lo + blend, fr.t_hi - blend, 25):
                assert post.cross_section(float(t)) == fr.frozen
            agent = scenario.agent(hub)
            assert scenario.state_target(agent).contains(
                post.cross_section(agent.t_p))


def test_criterion_5_closed_loop_containment(robots_plan, drones_plan):
    with acceptance(5, "closed-loop containment over 100 seeds per case study"):
        suite_start = time.perf_counter()
        for scenario, planned in (robots_plan, drones_plan):
            start = time.perf_counter()
            fleet = simulate_fleet(scenario, planned.tubes_post,
                                   seeds=list(range(100)))
            elapsed = time.perf_counter() - start
            assert all(c == 0 for c in fleet.violation_counts.values()), \
                (scenario.name, fleet.violation_counts)
            assert fleet.all_satisfied, scenario.name
            assert all(d > 0.0 for d in fleet.min_distance.values()), \
                scenario.name
            assert elapsed / 100 < 10.0, \
                f"{scenario.name}: {elapsed / 100:.2f}s per run"
        assert time.perf_counter() - suite_start < 1800.0


def test_criterion_6_integration_order():
    with acceptance(6, "integrator convergence order >= 3.5"):
        # the point-mass plant is integrated exactly under held inputs, so
        # the order is measured on a smooth nonlinear drift instead
        model = custom_affine(1, 1, drift=lambda x: np.cos(x),
                              input_map=lambda x: np.zeros((1, 1)))

        def integrate(n_steps):
            x = np.array([0.2])
            dt = 2.0 / n_steps
            for _ in range(n_steps):
                x = step_dynamics(model, x, np.zeros(1), np.zeros(1), dt)
            return x[0]

        reference = integrate(8192)
        errors = [abs(integrate(n) - reference) for n in (16, 32, 64, 128)]
        orders = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
        assert min(orders) >= 3.5, orders


def test_criterion_7_deterministic_exports(tmp_path):
    with acceptance(7, "byte-identical repeat runs"):
        scenario = bundled_scenario("crossing_four")
        outputs = []
        for label in ("a", "b"):
            out = tmp_path / label
            result = run(scenario, out_dir=out, seeds=[0], dt=0.01)
            assert result.exit_code == 0
            outputs.append({
                p.name: p.read_bytes()
                for p in sorted((out / "trajectories").glob("agent_*.txt"))})
        assert outputs[0].keys() == outputs[1].keys()
        assert len(outputs[0]) == 4
        for name in outputs[0]:
            assert outputs[0][name] == outputs[1][name], name
