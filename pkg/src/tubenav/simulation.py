"""Closed-loop simulation of agents under funnel control and disturbance.

The simulator integrates the true dynamics (hidden from the controller)
with RK4 and zero-order-hold inputs, records every sample, and evaluates
reach/avoid/stay verdicts plus physical inter-agent separation.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .control import CHANNEL_MAPS, E_CLAMP, ControllerGains
from .dynamics import (KIND_OMNI_ROBOT, KIND_SINGLE_INTEGRATOR, DynamicsModel,
                       step_dynamics)
from .errors import FunnelViolationError, NumericalBlowupError
from .geometry import HyperRect
from .tubes import ObstacleSet, Tube

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap


# ---------------------------------------------------------------------------
# disturbance

@dataclass(frozen=True)
class DisturbanceSpec:
    """Bounded disturbance realization: every sample is within [-d_max, d_max]."""

    d_max: Union[float, tuple[float, ...]]
    seed: int = 0
    process: str = "uniform"  # uniform | truncated_normal | constant_bias

    def bounds(self, n: int) -> np.ndarray:
        if np.isscalar(self.d_max):
            return np.full(n, float(self.d_max))
        out = np.asarray(self.d_max, dtype=float)
        if out.size != n:
            raise ValueError(f"d_max has {out.size} entries, state has {n} dims")
        return out

    def realize(self, agent_id: int, n_steps: int, n: int) -> np.ndarray:
        """Per-step samples, shape (n_steps, n); stream derived from
        (seed, agent_id) so results are schedule-independent."""
        d = self.bounds(n)
        rng = np.random.default_rng([int(self.seed), int(agent_id)])
        if self.process == "uniform":
            return rng.uniform(-1.0, 1.0, size=(n_steps, n)) * d
        if self.process == "truncated_normal":
            raw = rng.normal(0.0, 1.0 / 3.0, size=(n_steps, n)) * d
            return np.clip(raw, -d, d)
        if self.process == "constant_bias":
            bias = rng.uniform(-1.0, 1.0, size=n) * d
            return np.tile(bias, (n_steps, 1))
        raise ValueError(f"unknown disturbance process: {self.process!r}")


# ---------------------------------------------------------------------------
# trajectories and verdicts

@dataclass(frozen=True)
class Event:
    kind: str
    time: float
    agent_id: int
    info: dict = field(default_factory=dict)


@dataclass
class Trajectory:
    """Uniformly sampled closed-loop record for one agent."""

    agent_id: int
    t: np.ndarray
    states: np.ndarray  # (samples, n)
    inputs: np.ndarray  # (samples, m)
    lower: np.ndarray   # tube bound per dim, (samples, n)
    upper: np.ndarray
    contained: np.ndarray  # bool per sample
    events: list[Event] = field(default_factory=list)

    @property
    def n_samples(self) -> int:
        return self.t.size

    def violation_events(self) -> list[Event]:
        return [e for e in self.events if e.kind == "funnel_violation"]

    def export_text(self, path: Union[str, os.PathLike]):
        """Delimited table: t, states, inputs, per-dim bounds, contained flag."""
        n = self.states.shape[1]
        m = self.inputs.shape[1]
        header = (["t"] + [f"x{k + 1}" for k in range(n)]
                  + [f"u{k + 1}" for k in range(m)]
                  + [f"gL{k + 1}" for k in range(n)] + [f"gU{k + 1}" for k in range(n)]
                  + ["contained"])
        table = np.column_stack([self.t, self.states, self.inputs,
                                 self.lower, self.upper,
                                 self.contained.astype(float)])
        tmp = f"{path}.tmp"
        np.savetxt(tmp, table, fmt="%.17g", delimiter="\t",
                   header="\t".join(header), comments="")
        os.replace(tmp, path)


@dataclass
class RasVerdict:
    """Reach/avoid/stay verdict plus the fleet-level collision check."""

    agent_id: int
    reach: bool
    reach_time: Optional[float]
    avoid: bool
    avoid_violation_time: Optional[float]
    stay: bool
    collision_free: Optional[bool] = None
    min_pairwise_distance: Optional[float] = None

    @property
    def satisfied(self) -> bool:
        return (self.reach and self.avoid and self.stay
                and self.collision_free is not False)


# ---------------------------------------------------------------------------
# fast closed-loop kernels

@njit(cache=True)
def _funnel_step_controls(x, lo, up, kappa, clamp):
    n = x.shape[0]
    u = np.empty(n)
    ok = True
    for k in range(n):
        center = 0.5 * (up[k] + lo[k])
        radius = 0.5 * (up[k] - lo[k])
        e = (x[k] - center) / radius
        if e <= -1.0 or e >= 1.0:
            ok = False
        if e > clamp:
            e = clamp
        elif e < -clamp:
            e = -clamp
        eps = math.log((1.0 + e) / (1.0 - e))
        xi = 4.0 / ((1.0 - e * e) * (up[k] - lo[k]))
        u[k] = -kappa[k] * xi * eps
    return u, ok


@njit(cache=True)
def _rhs(kind, x, u, d):
    n = x.shape[0]
    out = np.empty(n)
    if kind == 1:  # omni robot: rotate body velocities by heading
        c = math.cos(x[2])
        s = math.sin(x[2])
        out[0] = c * u[0] - s * u[1] + d[0]
        out[1] = s * u[0] + c * u[1] + d[1]
        out[2] = u[2] + d[2]
    else:  # single integrator
        for k in range(n):
            out[k] = u[k] + d[k]
    return out


@njit(cache=True)
def _closed_loop_kernel(kind, chan, x0, lo, up, kappa, dist, dt, clamp):
    n_steps = dist.shape[0]
    n = x0.shape[0]
    states = np.empty((n_steps + 1, n))
    inputs = np.empty((n_steps + 1, n))
    contained = np.empty(n_steps + 1, np.bool_)
    x = x0.copy()
    for step in range(n_steps + 1):
        u_world, ok = _funnel_step_controls(x, lo[step], up[step], kappa, clamp)
        contained[step] = ok
        if chan == 1:  # inverse heading rotation on the planar channels
            c = math.cos(x[2])
            s = math.sin(x[2])
            u = np.empty(n)
            u[0] = c * u_world[0] + s * u_world[1]
            u[1] = -s * u_world[0] + c * u_world[1]
            u[2] = u_world[2]
        else:
            u = u_world
        states[step] = x
        inputs[step] = u
        if step == n_steps:
            break
        d = dist[step]
        k1 = _rhs(kind, x, u, d)
        k2 = _rhs(kind, x + 0.5 * dt * k1, u, d)
        k3 = _rhs(kind, x + 0.5 * dt * k2, u, d)
        k4 = _rhs(kind, x + dt * k3, u, d)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return states, inputs, contained


def _closed_loop_python(model: DynamicsModel, channel_map: Callable,
                        x0: np.ndarray, lo: np.ndarray, up: np.ndarray,
                        kappa: np.ndarray, dist: np.ndarray, dt: float):
    """Reference implementation used for custom dynamics (and as a fallback)."""
    n_steps = dist.shape[0]
    n = x0.size
    states = np.empty((n_steps + 1, n))
    inputs = np.empty((n_steps + 1, model.m))
    contained = np.empty(n_steps + 1, dtype=bool)
    x = x0.astype(float).copy()
    for step in range(n_steps + 1):
        e = (x - 0.5 * (up[step] + lo[step])) / (0.5 * (up[step] - lo[step]))
        contained[step] = bool(np.all(np.abs(e) < 1.0))
        e = np.clip(e, -E_CLAMP, E_CLAMP)
        eps = np.log((1.0 + e) / (1.0 - e))
        xi = 4.0 / ((1.0 - e * e) * (up[step] - lo[step]))
        u = channel_map(x, -kappa * xi * eps)
        states[step] = x
        inputs[step] = u
        if step == n_steps:
            break
        x = step_dynamics(model, x, u, dist[step], dt)
    return states, inputs, contained


_KERNEL_KINDS = {KIND_SINGLE_INTEGRATOR: 0, KIND_OMNI_ROBOT: 1}
_KERNEL_CHANNELS = {"identity": 0, "inverse_rotation": 1}


# ---------------------------------------------------------------------------
# per-agent simulation

def _violation_events(agent_id: int, t: np.ndarray,
                      contained: np.ndarray) -> list[Event]:
    events = []
    in_run = False
    start = 0.0
    for i, ok in enumerate(contained):
        if not ok and not in_run:
            in_run, start = True, t[i]
        elif ok and in_run:
            events.append(Event("funnel_violation", start, agent_id,
                                {"until": float(t[i - 1])}))
            in_run = False
    if in_run:
        events.append(Event("funnel_violation", start, agent_id,
                            {"until": float(t[-1])}))
    return events


def simulate_agent(model: DynamicsModel, tube: Tube, gains: ControllerGains,
                   disturbance: DisturbanceSpec, x0: Sequence[float], dt: float,
                   stay_window: float = 0.0,
                   channel_map: Union[str, Callable] = "identity") -> Trajectory:
    """Integrate the closed loop over [0, t_p + stay_window].

    Beyond t_p the tube is held at its final cross-section. Funnel
    violations are logged as events; integration continues regardless.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x0 = np.asarray(x0, dtype=float)
    start_rect = tube.cross_section(0.0)
    for k in range(tube.n):
        if not start_rect.dims[k].lo < x0[k] < start_rect.dims[k].hi:
            raise FunnelViolationError(
                f"agent {tube.agent_id}: initial state dim {k} = {x0[k]} not strictly "
                f"inside the initial cross-section "
                f"[{start_rect.dims[k].lo}, {start_rect.dims[k].hi}]",
                dim=k, time=0.0)

    horizon = tube.t_p + stay_window
    n_steps = max(int(round(horizon / dt)), 1)
    t = np.arange(n_steps + 1) * dt
    lo, up = tube.sample_bounds(np.minimum(t, tube.t_p))
    lo, up = np.ascontiguousarray(lo.T), np.ascontiguousarray(up.T)
    kappa = np.asarray(gains.kappa, dtype=float)
    dist = disturbance.realize(tube.agent_id, n_steps, model.n)

    fast_ok = (_HAVE_NUMBA and model.kind in _KERNEL_KINDS
               and isinstance(channel_map, str) and channel_map in _KERNEL_CHANNELS)
    if fast_ok:
        states, inputs, contained = _closed_loop_kernel(
            _KERNEL_KINDS[model.kind], _KERNEL_CHANNELS[channel_map],
            x0, lo, up, kappa, dist, dt, E_CLAMP)
    else:
        cm = CHANNEL_MAPS[channel_map] if isinstance(channel_map, str) else channel_map
        states, inputs, contained = _closed_loop_python(
            model, cm, x0, lo, up, kappa, dist, dt)
    if not np.all(np.isfinite(states)):
        raise NumericalBlowupError(
            f"agent {tube.agent_id}: non-finite state during simulation")

    events = _violation_events(tube.agent_id, t, contained)
    return Trajectory(agent_id=tube.agent_id, t=t, states=states, inputs=inputs,
                      lower=lo, upper=up, contained=contained, events=events)


# ---------------------------------------------------------------------------
# verdicts

def evaluate_ras(trajectory: Trajectory, S: HyperRect, T: HyperRect,
                 obstacles: ObstacleSet, t_p: float,
                 stay_window: float) -> RasVerdict:
    """Reach/avoid/stay verdict from a recorded trajectory."""
    t = trajectory.t
    if t[-1] < t_p + stay_window - 1e-9:
        raise ValueError(
            f"trajectory ends at {t[-1]}, needs to cover t_p + stay_window = "
            f"{t_p + stay_window}")
    x = trajectory.states
    mission = t <= t_p + 1e-12
    trailing = t >= t_p - 1e-12

    in_target = np.all((x >= T.lows) & (x <= T.highs), axis=1)
    reach_hits = np.flatnonzero(in_target & mission)
    reach = reach_hits.size > 0
    reach_time = float(t[reach_hits[0]]) if reach else None

    avoid = True
    violation_time = None
    for obstacle in obstacles.obstacles:
        inside = np.all((x >= obstacle.lows) & (x <= obstacle.highs), axis=1)
        hits = np.flatnonzero(inside & mission)
        if hits.size:
            avoid = False
            hit_time = float(t[hits[0]])
            if violation_time is None or hit_time < violation_time:
                violation_time = hit_time

    stay = bool(np.all(in_target[trailing])) if np.any(trailing) else False
    return RasVerdict(agent_id=trajectory.agent_id, reach=reach,
                      reach_time=reach_time, avoid=avoid,
                      avoid_violation_time=violation_time, stay=stay)


def min_pairwise_distance(trajectories: Sequence[Trajectory],
                          masks: Sequence[Sequence[int]]) -> float:
    """Minimum over time of the smallest workspace distance between agents."""
    if len(trajectories) < 2:
        return math.inf
    best = math.inf
    n_common = min(tr.n_samples for tr in trajectories)
    positions = [tr.states[:n_common][:, list(m)]
                 for tr, m in zip(trajectories, masks)]
    for a in range(len(positions)):
        for b in range(a + 1, len(positions)):
            d = np.linalg.norm(positions[a] - positions[b], axis=1)
            best = min(best, float(np.min(d)))
    return best


@dataclass
class FleetResult:
    """Outcome of simulating every agent over one or more disturbance seeds."""

    trajectories: dict[int, Trajectory]  # first seed only
    verdicts: dict[int, dict[int, RasVerdict]]  # seed -> agent -> verdict
    min_distance: dict[int, float]  # seed -> min pairwise workspace distance
    violation_counts: dict[int, int]  # seed -> funnel-violation event count

    @property
    def all_satisfied(self) -> bool:
        return all(v.satisfied for per_seed in self.verdicts.values()
                   for v in per_seed.values())


def simulate_fleet(scenario, tubes: dict[int, Tube],
                   dt: Optional[float] = None,
                   seeds: Optional[Sequence[int]] = None) -> FleetResult:
    """Simulate every agent independently over the given disturbance seeds.

    Agents are decoupled after negotiation, so loops run one agent at a
    time; only the first seed's trajectories are retained (later seeds keep
    verdicts and separation statistics only).
    """
    if seeds is None:
        seeds = [scenario.simulation.seed]
    if dt is None:
        dt = scenario.sim_dt()
    stay_window = scenario.stay_window()

    first_trajectories: dict[int, Trajectory] = {}
    verdicts: dict[int, dict[int, RasVerdict]] = {}
    min_dist: dict[int, float] = {}
    violations: dict[int, int] = {}
    masks = [a.workspace_mask for a in scenario.agents]

    for seed_idx, seed in enumerate(seeds):
        trajectories = []
        per_seed: dict[int, RasVerdict] = {}
        n_events = 0
        for agent in scenario.agents:
            tube = tubes[agent.id]
            spec = DisturbanceSpec(d_max=agent.d_max, seed=int(seed),
                                   process=scenario.simulation.disturbance)
            traj = simulate_agent(
                scenario.dynamics_model(agent), tube,
                ControllerGains(tuple(agent.gains)), spec,
                scenario.initial_state(agent), dt, stay_window=stay_window,
                channel_map=agent.channel_map)
            verdict = evaluate_ras(traj, scenario.state_start(agent),
                                   scenario.state_target(agent),
                                   scenario.state_obstacles(agent),
                                   agent.t_p, stay_window)
            if verdict.reach_time is not None:
                traj.events.append(Event("reach", verdict.reach_time, agent.id))
            n_events += len(traj.violation_events())
            trajectories.append(traj)
            per_seed[agent.id] = verdict
        dist = min_pairwise_distance(trajectories, masks)
        collision_free = dist > scenario.simulation.min_separation
        for verdict in per_seed.values():
            verdict.collision_free = collision_free
            verdict.min_pairwise_distance = dist
        verdicts[int(seed)] = per_seed
        min_dist[int(seed)] = dist
        violations[int(seed)] = n_events
        if seed_idx == 0:
            first_trajectories = {tr.agent_id: tr for tr in trajectories}

    return FleetResult(trajectories=first_trajectories, verdicts=verdicts,
                       min_distance=min_dist, violation_counts=violations)
