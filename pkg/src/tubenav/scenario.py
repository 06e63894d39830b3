"""Scenario definition, file format, validation, and random generation.

A scenario describes the workspace arena, the agents (initial/target boxes,
prescribed times, gains, dynamics, disturbance bounds), static obstacles,
and the negotiation/simulation parameters. Geometry in scenario files lives
in workspace coordinates; lifting to each agent's state space (e.g. adding
the heading dimension of a planar robot) happens here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import yaml

from .dynamics import (KIND_OMNI_ROBOT, KIND_SINGLE_INTEGRATOR, DynamicsModel,
                       omni_robot, single_integrator)
from .errors import ScenarioValidationError
from .geometry import HyperRect, Interval
from .tubes import ObstacleSet

HEADING_LIMITS = (-math.pi, math.pi)
SCHEMA_VERSION = 1
DYNAMICS_KINDS = (KIND_SINGLE_INTEGRATOR, KIND_OMNI_ROBOT)


@dataclass(frozen=True)
class NegotiationParams:
    dt_check: Optional[float] = None  # default: max t_p / 1e4
    delta: Optional[float] = None     # default: 2 * dt_check
    blend: Optional[float] = None     # default: 4 * dt_check
    max_iter: Optional[int] = None    # default: 10 * number of agents
    token_order: Optional[tuple[int, ...]] = None


@dataclass(frozen=True)
class SimulationParams:
    dt: Optional[float] = None        # default: max t_p / 2e5
    seed: int = 0
    stay_window: Optional[float] = None  # default: 5% of t_p
    disturbance: str = "uniform"
    min_separation: float = 0.0


@dataclass(frozen=True)
class AgentSpec:
    """One agent: geometry in workspace coordinates, gains in state space."""

    id: int
    dynamics: str
    start: HyperRect
    target: HyperRect
    t_p: float
    gains: tuple[float, ...]
    d_max: Union[float, tuple[float, ...]] = 0.0
    channel_map: str = "identity"
    x0: Optional[tuple[float, ...]] = None  # workspace coords
    obstacles: tuple[HyperRect, ...] = ()   # per-agent extras

    @property
    def workspace_n(self) -> int:
        return self.start.n

    @property
    def state_n(self) -> int:
        if self.dynamics == KIND_OMNI_ROBOT:
            return 3
        return self.workspace_n

    @property
    def workspace_mask(self) -> tuple[int, ...]:
        if self.dynamics == KIND_OMNI_ROBOT:
            return (0, 1)
        return tuple(range(self.workspace_n))


@dataclass(frozen=True)
class Scenario:
    name: str
    arena: HyperRect  # workspace
    agents: tuple[AgentSpec, ...]
    obstacles: tuple[HyperRect, ...] = ()  # global, workspace coords
    negotiation: NegotiationParams = NegotiationParams()
    simulation: SimulationParams = SimulationParams()

    def agent(self, agent_id: int) -> AgentSpec:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise KeyError(f"no agent with id {agent_id}")

    @property
    def max_t_p(self) -> float:
        return max(a.t_p for a in self.agents)

    def dt_check(self) -> float:
        return self.negotiation.dt_check or self.max_t_p / 1e4

    def sim_dt(self) -> float:
        return self.simulation.dt or self.max_t_p / 2e5

    def stay_window(self) -> float:
        sw = self.simulation.stay_window
        return sw if sw is not None else 0.05 * self.max_t_p

    # -- lifting workspace geometry to an agent's state space ----------------

    def lift_rect(self, agent: AgentSpec, rect: HyperRect) -> HyperRect:
        """Extend a workspace box with the agent's non-workspace dimensions.

        For the omni robot the heading dimension is unconstrained, so lifted
        boxes span the full heading range.
        """
        if agent.dynamics == KIND_OMNI_ROBOT:
            return HyperRect(rect.dims + (Interval(*HEADING_LIMITS),))
        return rect

    def state_arena(self, agent: AgentSpec) -> HyperRect:
        return self.lift_rect(agent, self.arena)

    def state_start(self, agent: AgentSpec) -> HyperRect:
        return self.lift_rect(agent, agent.start)

    def state_target(self, agent: AgentSpec) -> HyperRect:
        return self.lift_rect(agent, agent.target)

    def state_obstacles(self, agent: AgentSpec) -> ObstacleSet:
        rects = tuple(self.lift_rect(agent, o)
                      for o in self.obstacles + agent.obstacles)
        return ObstacleSet(agent_id=agent.id, obstacles=rects)

    def initial_state(self, agent: AgentSpec) -> np.ndarray:
        ws = (np.asarray(agent.x0, dtype=float) if agent.x0 is not None
              else agent.start.center)
        if agent.dynamics == KIND_OMNI_ROBOT:
            return np.append(ws, 0.0)
        return ws

    def dynamics_model(self, agent: AgentSpec) -> DynamicsModel:
        if agent.dynamics == KIND_OMNI_ROBOT:
            return omni_robot()
        return single_integrator(agent.workspace_n)


# ---------------------------------------------------------------------------
# validation

def validate_scenario(scenario: Scenario) -> Scenario:
    """Check structural constraints and set disjointness; raises
    ScenarioValidationError naming the offending sets."""
    if not scenario.agents:
        raise ScenarioValidationError("scenario has no agents")
    ids = [a.id for a in scenario.agents]
    if len(set(ids)) != len(ids):
        raise ScenarioValidationError(f"duplicate agent ids: {ids}")
    ws_n = scenario.arena.n

    for a in scenario.agents:
        label = f"agent {a.id}"
        if a.dynamics not in DYNAMICS_KINDS:
            raise ScenarioValidationError(f"{label}: unknown dynamics {a.dynamics!r}")
        if a.dynamics == KIND_OMNI_ROBOT and ws_n != 2:
            raise ScenarioValidationError(
                f"{label}: omni_robot needs a 2-D workspace, arena has {ws_n}")
        if a.start.n != ws_n or a.target.n != ws_n:
            raise ScenarioValidationError(
                f"{label}: start/target dims do not match the {ws_n}-D arena")
        if a.t_p <= 0:
            raise ScenarioValidationError(f"{label}: t_p must be positive")
        if len(a.gains) != a.state_n:
            raise ScenarioValidationError(
                f"{label}: needs {a.state_n} gains, got {len(a.gains)}")
        if any(k <= 0 for k in a.gains):
            raise ScenarioValidationError(f"{label}: gains must be positive")
        if not scenario.arena.contains(a.start):
            raise ScenarioValidationError(f"{label}: S_{a.id} outside the arena")
        if not scenario.arena.contains(a.target):
            raise ScenarioValidationError(f"{label}: T_{a.id} outside the arena")
        for j, obs in enumerate(scenario.obstacles + a.obstacles, start=1):
            if obs.n != ws_n:
                raise ScenarioValidationError(
                    f"obstacle {j} has {obs.n} dims, arena has {ws_n}")
            if a.start.intersects(obs):
                raise ScenarioValidationError(
                    f"{label}: initial set S_{a.id} intersects obstacle O_{j}")
            if a.target.intersects(obs):
                raise ScenarioValidationError(
                    f"{label}: target set T_{a.id} intersects obstacle O_{j}")
        if a.x0 is not None:
            if len(a.x0) != ws_n:
                raise ScenarioValidationError(
                    f"{label}: x0 must have {ws_n} workspace coords")
            if not a.start.contains_point(a.x0):
                raise ScenarioValidationError(f"{label}: x0 not inside S_{a.id}")

    for idx, a in enumerate(scenario.agents):
        for b in scenario.agents[idx + 1:]:
            if a.start.intersects(b.start):
                raise ScenarioValidationError(
                    f"initial sets overlap: S_{a.id} intersects S_{b.id}")
            if a.target.intersects(b.target):
                raise ScenarioValidationError(
                    f"target sets overlap: T_{a.id} intersects T_{b.id}")

    order = scenario.negotiation.token_order
    if order is not None and sorted(order) != sorted(ids):
        raise ScenarioValidationError(
            f"token order {order} must be a permutation of agent ids {sorted(ids)}")
    return scenario


# ---------------------------------------------------------------------------
# file I/O

def _rect(bounds) -> HyperRect:
    return HyperRect.from_bounds(bounds)


def scenario_from_dict(data: dict) -> Scenario:
    version = data.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioValidationError(f"unsupported scenario version {version}")
    try:
        agents = []
        for entry in data["agents"]:
            gains = entry["gains"]
            agents.append(AgentSpec(
                id=int(entry["id"]),
                dynamics=entry.get("dynamics", KIND_SINGLE_INTEGRATOR),
                start=_rect(entry["start"]),
                target=_rect(entry["target"]),
                t_p=float(entry["t_p"]),
                gains=tuple(float(g) for g in gains),
                d_max=(tuple(entry["d_max"]) if isinstance(entry.get("d_max"), list)
                       else float(entry.get("d_max", 0.0))),
                channel_map=entry.get("channel_map", "identity"),
                x0=tuple(entry["x0"]) if entry.get("x0") is not None else None,
                obstacles=tuple(_rect(o) for o in entry.get("obstacles", [])),
            ))
        neg = data.get("negotiation", {}) or {}
        sim = data.get("simulation", {}) or {}
        scenario = Scenario(
            name=data.get("name", "unnamed"),
            arena=_rect(data["arena"]),
            agents=tuple(agents),
            obstacles=tuple(_rect(o) for o in data.get("obstacles", [])),
            negotiation=NegotiationParams(
                dt_check=neg.get("dt_check"),
                delta=neg.get("delta"),
                blend=neg.get("blend"),
                max_iter=neg.get("max_iter"),
                token_order=(tuple(neg["token_order"])
                             if neg.get("token_order") is not None else None),
            ),
            simulation=SimulationParams(
                dt=sim.get("dt"),
                seed=int(sim.get("seed", 0)),
                stay_window=sim.get("stay_window"),
                disturbance=sim.get("disturbance", "uniform"),
                min_separation=float(sim.get("min_separation", 0.0)),
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioValidationError(f"malformed scenario: {exc}") from exc
    return validate_scenario(scenario)


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "version": SCHEMA_VERSION,
        "name": scenario.name,
        "arena": scenario.arena.bounds(),
        "agents": [
            {
                "id": a.id, "dynamics": a.dynamics,
                "start": a.start.bounds(), "target": a.target.bounds(),
                "t_p": a.t_p, "gains": list(a.gains),
                "d_max": list(a.d_max) if isinstance(a.d_max, tuple) else a.d_max,
                "channel_map": a.channel_map,
                "x0": list(a.x0) if a.x0 is not None else None,
                "obstacles": [o.bounds() for o in a.obstacles],
            }
            for a in scenario.agents
        ],
        "obstacles": [o.bounds() for o in scenario.obstacles],
        "negotiation": {
            "dt_check": scenario.negotiation.dt_check,
            "delta": scenario.negotiation.delta,
            "blend": scenario.negotiation.blend,
            "max_iter": scenario.negotiation.max_iter,
            "token_order": (list(scenario.negotiation.token_order)
                            if scenario.negotiation.token_order else None),
        },
        "simulation": {
            "dt": scenario.simulation.dt,
            "seed": scenario.simulation.seed,
            "stay_window": scenario.simulation.stay_window,
            "disturbance": scenario.simulation.disturbance,
            "min_separation": scenario.simulation.min_separation,
        },
    }


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioValidationError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ScenarioValidationError(f"{path} does not contain a mapping")
    return scenario_from_dict(data)


def save_scenario(scenario: Scenario, path: Union[str, Path]):
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False))


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario file shipped with the package."""
    path = Path(__file__).parent / "scenarios" / f"{name}.yaml"
    if not path.exists():
        available = sorted(p.stem for p in path.parent.glob("*.yaml"))
        raise FileNotFoundError(f"no bundled scenario {name!r}; available: {available}")
    return path


def bundled_scenario(name: str) -> Scenario:
    return load_scenario(bundled_scenario_path(name))


# ---------------------------------------------------------------------------
# randomized scenarios (used for property-style batch verification)

def _sample_box(rng: np.random.Generator, arena: HyperRect, width: float,
                wall_margin: float) -> HyperRect:
    bounds = []
    for dim in arena.dims:
        lo = rng.uniform(dim.lo + wall_margin, dim.hi - wall_margin - width)
        bounds.append((lo, lo + width))
    return HyperRect.from_bounds(bounds)


def _clear_of(box: HyperRect, others: Sequence[HyperRect], margin: float) -> bool:
    grown = HyperRect.from_bounds([(d.lo - margin, d.hi + margin) for d in box.dims])
    return not any(grown.intersects(o) for o in others)


def random_scenario(seed: int, n_agents: Optional[int] = None,
                    n_obstacles: Optional[int] = None,
                    workspace_n: int = 2) -> Scenario:
    """A randomized single-integrator scenario: 2-6 agents, 0-4 obstacles.

    Construction is deterministic in the seed. Sets are placed with margins
    that make circumvention generally feasible, but corridor existence is
    not guaranteed; callers that need feasibility should retry with the
    next seed on InfeasibilityError.
    """
    rng = np.random.default_rng(seed)
    if n_agents is None:
        n_agents = int(rng.integers(2, 7))
    if n_obstacles is None:
        n_obstacles = int(rng.integers(0, 5))
    arena = HyperRect.from_bounds([(0.0, 10.0)] * workspace_n)
    t_p = 100.0

    boxes: list[HyperRect] = []
    starts, targets = [], []
    for _ in range(n_agents):
        for _attempt in range(400):
            box = _sample_box(rng, arena, width=float(rng.uniform(0.6, 1.0)),
                              wall_margin=0.3)
            if _clear_of(box, boxes, margin=0.4):
                starts.append(box)
                boxes.append(box)
                break
        else:
            raise ScenarioValidationError(
                f"seed {seed}: could not place {n_agents} start boxes")
    for _ in range(n_agents):
        for _attempt in range(400):
            box = _sample_box(rng, arena, width=float(rng.uniform(0.6, 1.0)),
                              wall_margin=0.3)
            if _clear_of(box, boxes, margin=0.4):
                targets.append(box)
                boxes.append(box)
                break
        else:
            raise ScenarioValidationError(
                f"seed {seed}: could not place {n_agents} target boxes")
    obstacles = []
    for _ in range(n_obstacles):
        for _attempt in range(400):
            box = _sample_box(rng, arena, width=float(rng.uniform(0.5, 1.2)),
                              wall_margin=2.0)
            if _clear_of(box, boxes, margin=1.2):
                obstacles.append(box)
                boxes.append(box)
                break
        else:
            break  # fewer obstacles is fine

    agents = tuple(
        AgentSpec(id=i + 1, dynamics=KIND_SINGLE_INTEGRATOR,
                  start=starts[i], target=targets[i], t_p=t_p,
                  gains=(2.0,) * workspace_n, d_max=0.02)
        for i in range(n_agents))
    scenario = Scenario(name=f"random-{seed}", arena=arena, agents=agents,
                        obstacles=tuple(obstacles))
    return validate_scenario(scenario)
