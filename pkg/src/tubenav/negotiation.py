"""Token-passing negotiation that makes agent tubes pairwise disjoint.

Conflicts between tubes are resolved by temporal parameterization: the
conflicting agent's tube is held at a pre-conflict cross-section for the
whole conflict window, then a fresh tube is planned from that box to the
target over the remaining time. The hub role rotates through the agents in
token order until a full pass makes no update.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .curves import Blend, Constant
from .errors import (CannotReplanError, InfeasibilityError, NonTerminationError)
from .geometry import HyperRect
from .tubes import (BISECT_TOL, BoundaryProfile, FreezeRecord, ObstacleSet,
                    Segment, Tube, build_reachability_tube,
                    circumvent_obstacles, time_grid)


@dataclass(frozen=True)
class Topology:
    """Communication graph plus the token order used for negotiation."""

    agents: tuple[int, ...]
    edges: Optional[frozenset[tuple[int, int]]] = None  # None = fully connected
    token_order: Optional[tuple[int, ...]] = None  # None = ascending ids

    def __post_init__(self):
        order = self.token_order
        if order is not None and sorted(order) != sorted(self.agents):
            raise ValueError("token order must visit each agent exactly once")

    @property
    def order(self) -> tuple[int, ...]:
        return self.token_order if self.token_order is not None else tuple(sorted(self.agents))

    def neighbors(self, i: int) -> tuple[int, ...]:
        if self.edges is None:
            return tuple(j for j in self.agents if j != i)
        out = set()
        for a, b in self.edges:
            if a == i:
                out.add(b)
            elif b == i:
                out.add(a)
        return tuple(sorted(out))


@dataclass(frozen=True)
class CollisionInterval:
    """Earliest/latest conflict times of one agent against its neighbors."""

    agent_id: int
    t_lo: float
    t_hi: float
    neighbors: frozenset[int]


@dataclass(frozen=True)
class ReplanContext:
    """Per-agent data needed to rebuild a tube tail during negotiation."""

    target: HyperRect
    arena: HyperRect
    obstacles: ObstacleSet
    workspace_mask: tuple[int, ...]
    clearance: Optional[float] = None


@dataclass(frozen=True)
class NegotiationRecord:
    iteration: int
    hub: int
    examined: tuple[int, ...]
    conflict_with: tuple[int, ...]
    t_lo: Optional[float]
    t_hi: Optional[float]
    action: str  # "updated" or "none"

    def to_json(self) -> str:
        return json.dumps({
            "iter": self.iteration, "hub": self.hub,
            "examined": list(self.examined),
            "conflict_pair": list(self.conflict_with),
            "t_lo": self.t_lo, "t_hi": self.t_hi, "action": self.action,
        })


@dataclass
class NegotiationLog:
    records: list[NegotiationRecord] = field(default_factory=list)

    def append(self, record: NegotiationRecord):
        self.records.append(record)

    @property
    def iterations(self) -> int:
        return max((r.iteration for r in self.records), default=0)

    def updates(self) -> list[NegotiationRecord]:
        return [r for r in self.records if r.action == "updated"]

    def updated_agents(self) -> set[int]:
        return {r.hub for r in self.updates()}

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str) -> "NegotiationLog":
        log = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            d = json.loads(line)
            log.append(NegotiationRecord(
                d["iter"], d["hub"], tuple(d["examined"]),
                tuple(d["conflict_pair"]), d["t_lo"], d["t_hi"], d["action"]))
        return log


# ---------------------------------------------------------------------------
# conflict detection

def _projected_overlap(tube_i: Tube, tube_j: Tube,
                       mask_i: Sequence[int], mask_j: Sequence[int],
                       t: float) -> bool:
    ri = tube_i.cross_section(t).project(mask_i)
    rj = tube_j.cross_section(t).project(mask_j)
    return ri.intersects(rj)


def _pair_conflict_window(tube_i: Tube, tube_j: Tube,
                          mask_i: Sequence[int], mask_j: Sequence[int],
                          dt_check: float) -> Optional[tuple[float, float]]:
    """Earliest and latest overlap times of two projected tubes, or None."""
    horizon = min(tube_i.t_p, tube_j.t_p)
    ts = time_grid(horizon, dt_check)
    lo_i, up_i = tube_i.sample_bounds(ts)
    lo_j, up_j = tube_j.sample_bounds(ts)
    mi, mj = list(mask_i), list(mask_j)
    overlap = np.all((up_i[mi] >= lo_j[mj]) & (lo_i[mi] <= up_j[mj]), axis=0)
    if not np.any(overlap):
        return None
    first = int(np.argmax(overlap))
    last = len(overlap) - 1 - int(np.argmax(overlap[::-1]))

    def pred(t):
        return _projected_overlap(tube_i, tube_j, mask_i, mask_j, t)

    t_lo = ts[first]
    if first > 0:
        t_lo = _bisect(pred, ts[first - 1], ts[first])
    t_hi = ts[last]
    if last < len(ts) - 1:
        t_hi = _bisect(pred, ts[last + 1], ts[last])
    return t_lo, t_hi


def _bisect(pred, t_false: float, t_true: float) -> float:
    while abs(t_true - t_false) > BISECT_TOL:
        mid = 0.5 * (t_false + t_true)
        if pred(mid):
            t_true = mid
        else:
            t_false = mid
    return t_true


def detect_collision_interval(i: int, tubes: Mapping[int, Tube],
                              masks: Mapping[int, Sequence[int]],
                              dt_check: float,
                              neighbors: Optional[Sequence[int]] = None
                              ) -> Optional[CollisionInterval]:
    """Aggregate conflict window of agent ``i`` against every neighbor tube."""
    if neighbors is None:
        neighbors = [j for j in tubes if j != i]
    t_lo = math.inf
    t_hi = -math.inf
    conflicting = set()
    for j in neighbors:
        window = _pair_conflict_window(tubes[i], tubes[j], masks[i], masks[j], dt_check)
        if window is None:
            continue
        conflicting.add(j)
        t_lo = min(t_lo, window[0])
        t_hi = max(t_hi, window[1])
    if not conflicting:
        return None
    return CollisionInterval(agent_id=i, t_lo=t_lo, t_hi=t_hi,
                             neighbors=frozenset(conflicting))


# ---------------------------------------------------------------------------
# tube parameterization (freeze and replan)

def parameterize_tube(tube: Tube, interval: Optional[CollisionInterval],
                      delta: float, target: HyperRect, arena: HyperRect,
                      obstacles: ObstacleSet, blend: float = 0.0,
                      clearance: Optional[float] = None,
                      dt_check: Optional[float] = None) -> Tube:
    """Three-branch parameterization of a conflicting tube.

    Keeps the tube unchanged before the conflict, holds the cross-section
    taken ``delta`` seconds before the conflict for its whole duration, and
    replans an obstacle-circumvented tail from that box to the target over
    the remaining time. Optional C1 blending smooths both joints.
    """
    if interval is None:
        return tube
    if delta <= 0:
        raise ValueError("delta must be positive")
    t_lo, t_hi = interval.t_lo, interval.t_hi
    if t_lo - delta < 0:
        raise InfeasibilityError(
            f"agent {tube.agent_id}: conflict starts at t={t_lo:.6f}, no room to "
            f"freeze {delta} s earlier")
    if t_hi >= tube.t_p:
        raise CannotReplanError(
            f"agent {tube.agent_id}: conflict lasts until t={t_hi:.6f} >= t_p={tube.t_p}, "
            "no time remains to replan")

    frozen = tube.cross_section(t_lo - delta)
    # repeated curve composition can drift bounds by an ulp past the arena
    frozen = HyperRect(tuple(
        type(d)(max(d.lo, a.lo), min(d.hi, a.hi))
        for d, a in zip(frozen.dims, arena.dims)))
    tail = build_reachability_tube(frozen, target, tube.t_p - t_hi, arena,
                                   agent_id=tube.agent_id)
    tail = circumvent_obstacles(tail, obstacles, clearance=clearance,
                                dt_check=dt_check, arena=arena)

    # blend half-widths, clipped so the segment breakpoints stay ordered
    b_left = min(blend, 2.0 * t_lo, t_hi - t_lo) / 2.0
    b_right = min(blend, t_hi - t_lo, 2.0 * (tube.t_p - t_hi)) / 2.0

    profiles = []
    for k in range(tube.n):
        orig_lo, orig_up = tube.profiles[k].as_curves()
        tail_prof = tail.profiles[k].shifted(t_hi)
        tail_lo, tail_up = tail_prof.as_curves()
        const_lo = Constant(frozen.dims[k].lo)
        const_up = Constant(frozen.dims[k].hi)
        segments = []
        if b_left > 0:
            segments.append(Segment(0.0, t_lo - b_left, orig_lo, orig_up))
            segments.append(Segment(t_lo - b_left, t_lo + b_left,
                                    Blend(t_lo - b_left, t_lo + b_left, orig_lo, const_lo),
                                    Blend(t_lo - b_left, t_lo + b_left, orig_up, const_up)))
        else:
            segments.append(Segment(0.0, t_lo, orig_lo, orig_up))
        mid_start = t_lo + b_left
        mid_end = t_hi - b_right
        segments.append(Segment(mid_start, mid_end, const_lo, const_up))
        if b_right > 0:
            segments.append(Segment(mid_end, t_hi + b_right,
                                    Blend(mid_end, t_hi + b_right, const_lo, tail_lo),
                                    Blend(mid_end, t_hi + b_right, const_up, tail_up)))
            segments.append(Segment(t_hi + b_right, tube.t_p, tail_lo, tail_up))
        else:
            segments.append(Segment(t_hi, tube.t_p, tail_lo, tail_up))
        # drop zero-length segments created by clipped blend windows
        segments = [s for s in segments if s.t1 - s.t0 > 1e-12]
        profiles.append(BoundaryProfile(tuple(segments)))

    record = FreezeRecord(t_lo=t_lo, t_hi=t_hi, delta=delta, frozen=frozen)
    return replace(tube, profiles=tuple(profiles), freezes=tube.freezes + (record,))


def _freeze_start(hub: int, tubes: Mapping[int, Tube],
                  masks: Mapping[int, Sequence[int]],
                  neighbors: Sequence[int], interval: CollisionInterval,
                  delta: float, dt_check: float) -> float:
    """Freeze onset for which the held cross-section stays conflict-free.

    Holding the box taken just before the conflict resolves it when the hub
    is the agent entering the shared region. When instead a neighbor sweeps
    into space the hub already occupies, that box sits in the sweep path and
    every replan recreates the conflict slightly later. In that case the
    freeze must start earlier, at a time whose cross-section is disjoint
    from every neighbor tube throughout the conflict window. Returns the
    (possibly reduced) freeze onset; the detected window itself is kept.
    """
    ts = time_grid(interval.t_hi, dt_check)
    hub_mask = list(masks[hub])
    bounds = {}
    for j in neighbors:
        lo_j, up_j = tubes[j].sample_bounds(ts)
        mj = list(masks[j])
        bounds[j] = (lo_j[mj], up_j[mj])

    def clear(t_lo: float) -> bool:
        box = tubes[hub].cross_section(t_lo - delta).project(hub_mask)
        blo = box.lows[:, None]
        bhi = box.highs[:, None]
        sel = ts >= t_lo - delta
        for lo_j, up_j in bounds.values():
            if np.any(np.all((up_j[:, sel] >= blo) & (lo_j[:, sel] <= bhi), axis=0)):
                return False
        return True

    if clear(interval.t_lo):
        return interval.t_lo
    step = max(delta, 8.0 * dt_check)
    t_lo = interval.t_lo - step
    while t_lo - delta > 0.0:
        if clear(t_lo):
            # a little extra slack so the grid check is not knife-edge
            margin = t_lo - 2.0 * step
            if margin - delta > 0.0 and clear(margin):
                return margin
            return t_lo
        t_lo -= step
    raise InfeasibilityError(
        f"agent {hub}: no conflict-free cross-section exists before the "
        f"conflict at t={interval.t_lo:.6f}")


# ---------------------------------------------------------------------------
# the negotiation loop

def negotiate(tubes: Mapping[int, Tube], topology: Topology,
              contexts: Mapping[int, ReplanContext], dt_check: float,
              delta: Optional[float] = None, blend: Optional[float] = None,
              max_iter: Optional[int] = None
              ) -> tuple[dict[int, Tube], NegotiationLog]:
    """Iterate hub-by-hub conflict resolution until a clean full pass.

    Within a pass, later hubs see the updates already made by earlier hubs
    (tubes communicated to the hub are always the latest). Raises
    NonTerminationError carrying the log if max_iter passes all made updates.
    """
    if delta is None:
        delta = 2.0 * dt_check
    if blend is None:
        blend = 4.0 * dt_check
    if max_iter is None:
        max_iter = 10 * len(topology.agents)
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")

    masks = {i: contexts[i].workspace_mask for i in contexts}
    current = dict(tubes)
    log = NegotiationLog()
    for iteration in range(1, max_iter + 1):
        updated = False
        for hub in topology.order:
            neighbors = topology.neighbors(hub)
            interval = detect_collision_interval(hub, current, masks, dt_check,
                                                 neighbors=neighbors)
            if interval is None:
                log.append(NegotiationRecord(iteration, hub, neighbors, (), None,
                                             None, "none"))
                continue
            ctx = contexts[hub]
            try:
                onset = _freeze_start(hub, current, masks, neighbors, interval,
                                      delta, dt_check)
                freeze = interval if onset == interval.t_lo else replace(
                    interval, t_lo=onset)
                current[hub] = parameterize_tube(
                    current[hub], freeze, delta, ctx.target, ctx.arena,
                    ctx.obstacles, blend=blend, clearance=ctx.clearance,
                    dt_check=dt_check)
            except (InfeasibilityError, CannotReplanError) as exc:
                raise type(exc)(f"agent {hub}: {exc}") from exc
            updated = True
            log.append(NegotiationRecord(
                iteration, hub, neighbors, tuple(sorted(interval.neighbors)),
                interval.t_lo, interval.t_hi, "updated"))
        if not updated:
            return current, log
    raise NonTerminationError(
        f"negotiation did not terminate within {max_iter} passes", log=log)


# ---------------------------------------------------------------------------
# fleet-level disjointness verification

@dataclass(frozen=True)
class DisjointnessReport:
    ok: bool
    pair: Optional[tuple[int, int]] = None
    witness_time: Optional[float] = None


def verify_disjointness(tubes: Mapping[int, Tube],
                        masks: Mapping[int, Sequence[int]],
                        dt_check: float) -> DisjointnessReport:
    """Grid-check every tube pair for projected cross-section overlap."""
    ids = sorted(tubes)
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            i, j = ids[a], ids[b]
            window = _pair_conflict_window(tubes[i], tubes[j], masks[i], masks[j],
                                           dt_check)
            if window is not None:
                return DisjointnessReport(False, (i, j), window[0])
    return DisjointnessReport(True)
