"""Pipeline orchestration: build tubes, negotiate, simulate, verify, export.

Every stage persists its artifacts so later stages (and re-verification)
can run without recomputation. File writes are atomic
(write-temp-then-rename). The default output directory can be overridden
with the TUBENAV_OUT_DIR environment variable.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ArtifactError, InfeasibilityError
from .negotiation import (NegotiationLog, ReplanContext, Topology, negotiate,
                          verify_disjointness)
from .scenario import Scenario, load_scenario, random_scenario, save_scenario
from .simulation import FleetResult, simulate_fleet
from .tubes import (Tube, build_reachability_tube, circumvent_obstacles,
                    load_tubes, save_tubes, time_grid, verify_tube)

ENV_OUT_DIR = "TUBENAV_OUT_DIR"

SCENARIO_FILE = "scenario.yaml"
TUBES_PRE_FILE = "tubes_pre.json"
TUBES_POST_FILE = "tubes_post.json"
NEGOTIATION_LOG_FILE = "negotiation_log.jsonl"
VERDICTS_FILE = "verdicts.json"
SUMMARY_FILE = "summary.json"
TRAJECTORY_DIR = "trajectories"
EXPORT_DIR = "export"


def default_out_dir() -> Path:
    return Path(os.environ.get(ENV_OUT_DIR, "tubenav_out"))


def _write_text_atomic(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_json_atomic(path: Path, payload):
    _write_text_atomic(path, json.dumps(payload, indent=2, sort_keys=True))


@dataclass
class RunArtifacts:
    """Handles to the files a pipeline run produced."""

    out_dir: Path

    @property
    def scenario_path(self) -> Path:
        return self.out_dir / SCENARIO_FILE

    @property
    def tubes_pre_path(self) -> Path:
        return self.out_dir / TUBES_PRE_FILE

    @property
    def tubes_post_path(self) -> Path:
        return self.out_dir / TUBES_POST_FILE

    @property
    def negotiation_log_path(self) -> Path:
        return self.out_dir / NEGOTIATION_LOG_FILE

    @property
    def verdicts_path(self) -> Path:
        return self.out_dir / VERDICTS_FILE

    @property
    def summary_path(self) -> Path:
        return self.out_dir / SUMMARY_FILE

    def trajectory_path(self, agent_id: int) -> Path:
        return self.out_dir / TRAJECTORY_DIR / f"agent_{agent_id}.txt"

    def load_scenario(self) -> Scenario:
        if not self.scenario_path.exists():
            raise ArtifactError(f"missing {self.scenario_path}; run plan first")
        return load_scenario(self.scenario_path)

    def load_tubes(self, which: str = "post") -> dict[int, Tube]:
        path = self.tubes_post_path if which == "post" else self.tubes_pre_path
        if not path.exists():
            raise ArtifactError(f"missing {path}; run plan first")
        return load_tubes(path)

    def load_negotiation_log(self) -> NegotiationLog:
        if not self.negotiation_log_path.exists():
            raise ArtifactError(f"missing {self.negotiation_log_path}")
        return NegotiationLog.from_jsonl(self.negotiation_log_path.read_text())


# ---------------------------------------------------------------------------
# planning

def build_agent_tubes(scenario: Scenario) -> dict[int, Tube]:
    """Reachability tubes plus obstacle circumvention for every agent."""
    dt_check = scenario.dt_check()
    tubes = {}
    for agent in scenario.agents:
        arena = scenario.state_arena(agent)
        tube = build_reachability_tube(
            scenario.state_start(agent), scenario.state_target(agent),
            agent.t_p, arena, agent_id=agent.id)
        try:
            tube = circumvent_obstacles(tube, scenario.state_obstacles(agent),
                                        dt_check=dt_check, arena=arena)
        except InfeasibilityError as exc:
            raise InfeasibilityError(f"agent {agent.id}: {exc}") from exc
        tubes[agent.id] = tube
    return tubes


def replan_contexts(scenario: Scenario) -> dict[int, ReplanContext]:
    return {
        agent.id: ReplanContext(
            target=scenario.state_target(agent),
            arena=scenario.state_arena(agent),
            obstacles=scenario.state_obstacles(agent),
            workspace_mask=agent.workspace_mask)
        for agent in scenario.agents
    }


@dataclass
class PlanResult:
    tubes_pre: dict[int, Tube]
    tubes_post: dict[int, Tube]
    log: NegotiationLog
    artifacts: Optional[RunArtifacts] = None


def plan(scenario: Scenario, out_dir: Optional[Union[str, Path]] = None) -> PlanResult:
    """Build, circumvent, and negotiate all tubes; persist the artifacts."""
    dt_check = scenario.dt_check()
    tubes_pre = build_agent_tubes(scenario)
    topology = Topology(agents=tuple(a.id for a in scenario.agents),
                        token_order=scenario.negotiation.token_order)
    contexts = replan_contexts(scenario)
    tubes_post, log = negotiate(
        tubes_pre, topology, contexts, dt_check,
        delta=scenario.negotiation.delta, blend=scenario.negotiation.blend,
        max_iter=scenario.negotiation.max_iter or 10 * len(scenario.agents))

    artifacts = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        artifacts = RunArtifacts(out_dir)
        save_scenario(scenario, artifacts.scenario_path)
        save_tubes(tubes_pre, artifacts.tubes_pre_path)
        save_tubes(tubes_post, artifacts.tubes_post_path)
        _write_text_atomic(artifacts.negotiation_log_path, log.to_jsonl())
    return PlanResult(tubes_pre=tubes_pre, tubes_post=tubes_post, log=log,
                      artifacts=artifacts)


# ---------------------------------------------------------------------------
# verification of persisted plans

def verify_artifacts(artifacts: RunArtifacts) -> dict:
    """Reload persisted tubes and re-run tube validity plus pairwise
    disjointness checks; returns a JSON-ready report."""
    scenario = artifacts.load_scenario()
    tubes = artifacts.load_tubes("post")
    dt_check = scenario.dt_check()
    report = {"tubes": {}, "disjoint": None, "ok": True}
    for agent in scenario.agents:
        tube = tubes[agent.id]
        validity = verify_tube(tube, scenario.state_start(agent),
                               scenario.state_target(agent),
                               scenario.state_arena(agent),
                               scenario.state_obstacles(agent), dt_check)
        report["tubes"][str(agent.id)] = {
            "in_arena": validity.in_arena.ok,
            "starts_in_initial": validity.starts_in_initial.ok,
            "ends_in_target": validity.ends_in_target.ok,
            "avoids_obstacles": validity.avoids_obstacles.ok,
            "ok": validity.ok,
        }
        report["ok"] = report["ok"] and validity.ok
    masks = {a.id: a.workspace_mask for a in scenario.agents}
    disjoint = verify_disjointness(tubes, masks, dt_check)
    report["disjoint"] = {"ok": disjoint.ok, "pair": disjoint.pair,
                          "witness_time": disjoint.witness_time}
    report["ok"] = report["ok"] and disjoint.ok
    return report


# ---------------------------------------------------------------------------
# simulation stage

@dataclass
class RunResult:
    fleet: FleetResult
    exit_code: int
    artifacts: Optional[RunArtifacts] = None


def run(scenario: Scenario, out_dir: Optional[Union[str, Path]] = None,
        seeds: Optional[Sequence[int]] = None,
        dt: Optional[float] = None,
        plan_result: Optional[PlanResult] = None) -> RunResult:
    """Full pipeline: plan (or reuse), simulate over seeds, persist verdicts.

    Exit code 0 iff every agent's verdict is satisfied for every seed.
    """
    if plan_result is None:
        plan_result = plan(scenario, out_dir=out_dir)
    if seeds is None:
        seeds = [scenario.simulation.seed]
    fleet = simulate_fleet(scenario, plan_result.tubes_post, dt=dt, seeds=seeds)
    exit_code = 0 if fleet.all_satisfied else 1

    artifacts = plan_result.artifacts
    if out_dir is not None and artifacts is None:
        artifacts = RunArtifacts(Path(out_dir))
    if artifacts is not None:
        traj_dir = artifacts.out_dir / TRAJECTORY_DIR
        traj_dir.mkdir(parents=True, exist_ok=True)
        for agent_id, traj in fleet.trajectories.items():
            traj.export_text(artifacts.trajectory_path(agent_id))
        verdict_payload = {
            str(seed): {
                str(agent_id): {
                    "reach": v.reach, "reach_time": v.reach_time,
                    "avoid": v.avoid,
                    "avoid_violation_time": v.avoid_violation_time,
                    "stay": v.stay, "collision_free": v.collision_free,
                    "min_pairwise_distance": v.min_pairwise_distance,
                    "satisfied": v.satisfied,
                }
                for agent_id, v in per_seed.items()
            }
            for seed, per_seed in fleet.verdicts.items()
        }
        _write_json_atomic(artifacts.verdicts_path, verdict_payload)
        _write_json_atomic(artifacts.summary_path, {
            "scenario": scenario.name,
            "seeds": [int(s) for s in seeds],
            "all_satisfied": fleet.all_satisfied,
            "min_pairwise_distance": fleet.min_distance,
            "funnel_violation_events": fleet.violation_counts,
            "exit_code": exit_code,
        })
    return RunResult(fleet=fleet, exit_code=exit_code, artifacts=artifacts)


# ---------------------------------------------------------------------------
# export for plotting

def export_plot_data(artifacts: RunArtifacts, samples: int = 1000) -> list[Path]:
    """Sampled tube boundaries, trajectories, and conflict-window markers as
    delimited text, one boundary table per agent and dimension."""
    if samples < 2:
        raise ValueError("need at least 2 samples")
    scenario = artifacts.load_scenario()
    tubes = artifacts.load_tubes("post")
    out = artifacts.out_dir / EXPORT_DIR
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for agent in scenario.agents:
        tube = tubes[agent.id]
        ts = np.linspace(0.0, tube.t_p, samples)
        lo, up = tube.sample_bounds(ts)
        for k in range(tube.n):
            path = out / f"agent_{agent.id}_dim{k + 1}.txt"
            table = np.column_stack([ts, lo[k], up[k]])
            tmp = f"{path}.tmp"
            np.savetxt(tmp, table, fmt="%.17g", delimiter="\t",
                       header="t\tlower\tupper", comments="")
            os.replace(tmp, path)
            written.append(path)
    log = artifacts.load_negotiation_log()
    markers = [
        {"iter": r.iteration, "hub": r.hub,
         "conflict_with": list(r.conflict_with),
         "t_collision_start": r.t_lo, "t_collision_end": r.t_hi}
        for r in log.updates()
    ]
    marker_path = out / "collision_markers.json"
    _write_json_atomic(marker_path, markers)
    written.append(marker_path)
    return written


# ---------------------------------------------------------------------------
# randomized-scenario helper used by the verification suites

def feasible_random_scenarios(count: int, base_seed: int = 0,
                              **kwargs) -> list[tuple[Scenario, PlanResult]]:
    """First ``count`` random scenarios (by ascending seed) that plan cleanly."""
    results = []
    seed = base_seed
    attempts = 0
    while len(results) < count and attempts < 50 * count:
        attempts += 1
        try:
            scenario = random_scenario(seed, **kwargs)
            planned = plan(scenario)
        except InfeasibilityError:
            seed += 1
            continue
        except Exception:
            seed += 1
            continue
        results.append((scenario, planned))
        seed += 1
    if len(results) < count:
        raise RuntimeError(f"only {len(results)} of {count} random scenarios "
                           f"planned cleanly after {attempts} attempts")
    return results
