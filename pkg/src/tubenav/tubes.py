"""Spatiotemporal tube construction, obstacle circumvention, and verification.

A tube assigns each state dimension a pair of C1 boundary curves of time
over [0, t_p]; its cross-section at any instant is an axis-aligned box. A
valid tube starts inside the initial set, ends inside the target set, stays
inside the arena, and never touches a static obstacle.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .curves import (Blend, Constant, Curve, Piecewise, Smoothstep, Sum, Bump,
                     curve_from_dict)
from .errors import (DegenerateTubeError, DimensionMismatchError, HorizonError,
                     InfeasibilityError)
from .geometry import HyperRect, Interval

BISECT_TOL = 1e-6  # seconds; refinement tolerance for witness times
DEFAULT_CLEARANCE_FRACTION = 0.02  # of the arena span of the detour dimension


@dataclass(frozen=True)
class Segment:
    """One time slice of a boundary profile with its lower/upper curves."""

    t0: float
    t1: float
    lower: Curve
    upper: Curve


@dataclass(frozen=True)
class BoundaryProfile:
    """Ordered segments covering [0, t_p] for a single state dimension."""

    segments: tuple[Segment, ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("boundary profile needs at least one segment")
        for a, b in zip(self.segments, self.segments[1:]):
            if not math.isclose(a.t1, b.t0, rel_tol=0.0, abs_tol=1e-12):
                raise ValueError(f"segment gap between t={a.t1} and t={b.t0}")

    @property
    def t_start(self) -> float:
        return self.segments[0].t0

    @property
    def t_end(self) -> float:
        return self.segments[-1].t1

    def _segment_at(self, t: float) -> Segment:
        for seg in self.segments:
            if t <= seg.t1:
                return seg
        return self.segments[-1]

    def lower(self, t: float) -> float:
        return float(self._segment_at(t).lower.value(t))

    def upper(self, t: float) -> float:
        return float(self._segment_at(t).upper.value(t))

    def lower_derivative(self, t: float) -> float:
        return float(self._segment_at(t).lower.derivative(t))

    def upper_derivative(self, t: float) -> float:
        return float(self._segment_at(t).upper.derivative(t))

    def sample(self, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized (lower, upper) over an array of times."""
        ts = np.asarray(ts, dtype=float)
        lo = np.empty_like(ts)
        up = np.empty_like(ts)
        edges = np.array([seg.t1 for seg in self.segments[:-1]])
        idx = np.searchsorted(edges, ts, side="left")
        for i, seg in enumerate(self.segments):
            mask = idx == i
            if np.any(mask):
                lo[mask] = np.asarray(seg.lower.value(ts[mask]))
                up[mask] = np.asarray(seg.upper.value(ts[mask]))
        return lo, up

    def as_curves(self) -> tuple[Curve, Curve]:
        """The whole profile as a single (lower, upper) curve pair."""
        if len(self.segments) == 1:
            return self.segments[0].lower, self.segments[0].upper
        breaks = tuple([self.segments[0].t0] + [seg.t1 for seg in self.segments])
        return (Piecewise(breaks, tuple(seg.lower for seg in self.segments)),
                Piecewise(breaks, tuple(seg.upper for seg in self.segments)))

    def shifted(self, dt: float) -> "BoundaryProfile":
        return BoundaryProfile(tuple(
            Segment(seg.t0 + dt, seg.t1 + dt, seg.lower.shifted(dt), seg.upper.shifted(dt))
            for seg in self.segments))

    def with_offset(self, bump: Curve) -> "BoundaryProfile":
        """Shift both boundaries by a time-varying offset curve."""
        return BoundaryProfile(tuple(
            Segment(seg.t0, seg.t1, Sum((seg.lower, bump)), Sum((seg.upper, bump)))
            for seg in self.segments))


@dataclass(frozen=True)
class FreezeRecord:
    """Bookkeeping for one negotiation freeze applied to a tube."""

    t_lo: float
    t_hi: float
    delta: float
    frozen: HyperRect


@dataclass(frozen=True)
class Tube:
    """Per-dimension boundary profiles over a common horizon [0, t_p]."""

    agent_id: int
    t_p: float
    profiles: tuple[BoundaryProfile, ...]
    freezes: tuple[FreezeRecord, ...] = ()

    @property
    def n(self) -> int:
        return len(self.profiles)

    def _check_time(self, t: float):
        if t < -1e-12 or t > self.t_p + 1e-12:
            raise HorizonError(f"t={t} outside tube horizon [0, {self.t_p}]")

    def cross_section(self, t: float) -> HyperRect:
        """The box [gamma_L(t), gamma_U(t)] per dimension."""
        self._check_time(t)
        t = min(max(t, 0.0), self.t_p)
        dims = []
        for k, prof in enumerate(self.profiles):
            lo, up = prof.lower(t), prof.upper(t)
            if not lo < up:
                raise DegenerateTubeError(
                    f"agent {self.agent_id}: boundaries crossed in dim {k} at t={t}")
            dims.append(Interval(lo, up))
        return HyperRect(tuple(dims))

    def sample_bounds(self, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(lower, upper) arrays of shape (n, len(ts))."""
        ts = np.asarray(ts, dtype=float)
        lo = np.empty((self.n, ts.size))
        up = np.empty((self.n, ts.size))
        for k, prof in enumerate(self.profiles):
            lo[k], up[k] = prof.sample(ts)
        return lo, up


def tube_cross_section(tube: Tube, t: float) -> HyperRect:
    return tube.cross_section(t)


@dataclass(frozen=True)
class ObstacleSet:
    """Static axis-aligned obstacles for one agent, in state-space coordinates."""

    agent_id: int
    obstacles: tuple[HyperRect, ...] = ()

    @property
    def count(self) -> int:
        return len(self.obstacles)


# ---------------------------------------------------------------------------
# construction

def build_reachability_tube(S: HyperRect, T: HyperRect, t_p: float,
                            arena: HyperRect, width_policy: str = "interpolate",
                            agent_id: int = 0) -> Tube:
    """Per dimension, smoothstep both boundaries from the initial box to the
    target box over [0, t_p]; widths interpolate between the two end widths."""
    if t_p <= 0:
        raise ValueError(f"prescribed time must be positive, got {t_p}")
    if S.n != T.n or S.n != arena.n:
        raise DimensionMismatchError(
            f"start/target/arena dims differ: {S.n}/{T.n}/{arena.n}")
    if width_policy != "interpolate":
        raise ValueError(f"unknown width policy: {width_policy!r}")
    if not arena.contains(S):
        raise InfeasibilityError("initial set lies outside the arena")
    if not arena.contains(T):
        raise InfeasibilityError("target set lies outside the arena")
    profiles = []
    for s_dim, t_dim in zip(S.dims, T.dims):
        if s_dim == t_dim:
            lower: Curve = Constant(s_dim.lo)
            upper: Curve = Constant(s_dim.hi)
        else:
            lower = Smoothstep(0.0, t_p, s_dim.lo, t_dim.lo)
            upper = Smoothstep(0.0, t_p, s_dim.hi, t_dim.hi)
        profiles.append(BoundaryProfile((Segment(0.0, t_p, lower, upper),)))
    return Tube(agent_id=agent_id, t_p=t_p, profiles=tuple(profiles))


# ---------------------------------------------------------------------------
# grid scanning helpers

def time_grid(t_end: float, dt: float) -> np.ndarray:
    """Uniform grid over [0, t_end] including both endpoints."""
    count = max(int(math.floor(t_end / dt)), 1)
    ts = np.arange(count + 1) * dt
    if ts[-1] < t_end - 1e-12:
        ts = np.append(ts, t_end)
    else:
        ts[-1] = t_end
    return ts


def _bisect_transition(pred: Callable[[float], bool], t_false: float,
                       t_true: float, tol: float = BISECT_TOL) -> float:
    """Earliest point of a false->true transition bracketed by the arguments.

    Works in either time direction: t_false need not precede t_true.
    """
    while abs(t_true - t_false) > tol:
        mid = 0.5 * (t_false + t_true)
        if pred(mid):
            t_true = mid
        else:
            t_false = mid
    return t_true


def _contiguous_windows(ts: np.ndarray, flags: np.ndarray) -> list[tuple[int, int]]:
    """Index ranges [a, b] (inclusive) of contiguous True runs."""
    windows = []
    in_run = False
    start = 0
    for i, f in enumerate(flags):
        if f and not in_run:
            in_run, start = True, i
        elif not f and in_run:
            windows.append((start, i - 1))
            in_run = False
    if in_run:
        windows.append((start, len(flags) - 1))
    return windows


# ---------------------------------------------------------------------------
# verification

@dataclass(frozen=True)
class CheckResult:
    ok: bool
    witness_time: Optional[float] = None
    detail: str = ""


@dataclass(frozen=True)
class ValidityReport:
    """Outcome of the four tube-validity checks."""

    in_arena: CheckResult
    starts_in_initial: CheckResult
    ends_in_target: CheckResult
    avoids_obstacles: CheckResult

    @property
    def ok(self) -> bool:
        return (self.in_arena.ok and self.starts_in_initial.ok
                and self.ends_in_target.ok and self.avoids_obstacles.ok)


def _obstacle_overlap_flags(lo: np.ndarray, up: np.ndarray, obstacle: HyperRect) -> np.ndarray:
    olo, ohi = obstacle.lows[:, None], obstacle.highs[:, None]
    return np.all((up >= olo) & (lo <= ohi), axis=0)


def verify_tube(tube: Tube, S: HyperRect, T: HyperRect, arena: HyperRect,
                obstacles: ObstacleSet, dt_check: float) -> ValidityReport:
    """Check the four tube properties on a dt_check grid, refining witness
    times by bisection around the first violation."""
    if dt_check <= 0:
        raise ValueError("dt_check must be positive")
    ts = time_grid(tube.t_p, dt_check)
    lo, up = tube.sample_bounds(ts)
    slack = 1e-12

    # arena containment
    alo, ahi = arena.lows[:, None], arena.highs[:, None]
    inside = np.all((lo >= alo - slack) & (up <= ahi + slack), axis=0)
    if np.all(inside):
        arena_res = CheckResult(True)
    else:
        i = int(np.argmin(inside))
        witness = ts[i]
        if i > 0:
            witness = _bisect_transition(
                lambda t: not arena.contains(tube.cross_section(t)), ts[i - 1], ts[i])
        arena_res = CheckResult(False, witness, "tube leaves arena")

    start_res = (CheckResult(True) if S.contains(tube.cross_section(0.0))
                 else CheckResult(False, 0.0, "cross-section(0) not inside initial set"))
    end_res = (CheckResult(True) if T.contains(tube.cross_section(tube.t_p))
               else CheckResult(False, tube.t_p, "cross-section(t_p) not inside target set"))

    obstacle_res = CheckResult(True)
    for j, obstacle in enumerate(obstacles.obstacles):
        hit = _obstacle_overlap_flags(lo, up, obstacle)
        if np.any(hit):
            i = int(np.argmax(hit))
            witness = ts[i]
            if i > 0:
                witness = _bisect_transition(
                    lambda t: tube.cross_section(t).intersects(obstacle), ts[i - 1], ts[i])
            obstacle_res = CheckResult(False, witness, f"tube intersects obstacle {j}")
            break
    return ValidityReport(arena_res, start_res, end_res, obstacle_res)


# ---------------------------------------------------------------------------
# obstacle circumvention

def default_clearance(arena: HyperRect, dim: int) -> float:
    return DEFAULT_CLEARANCE_FRACTION * arena.dims[dim].width


def _detour_candidates(tube: Tube, obstacle: HyperRect, arena: HyperRect,
                       ts: np.ndarray, lo: np.ndarray, up: np.ndarray,
                       block_lo: int, block_hi: int,
                       clearance: Optional[float]) -> list[tuple[float, int, str, int, int]]:
    """Rank (deviation, dim, side, window indices) options that clear one
    blocking window of one obstacle."""
    n = tube.n
    options = []
    for k in range(n):
        others = [d for d in range(n) if d != k]
        if others:
            overlap_others = np.all(
                [(up[d] >= obstacle.dims[d].lo) & (lo[d] <= obstacle.dims[d].hi)
                 for d in others], axis=0)
        else:
            overlap_others = np.ones(ts.size, dtype=bool)
        # expand the blocking window to the containing run of other-dim overlap:
        # outside that run any position in dim k is safe, so ramps can live there.
        a, b = block_lo, block_hi
        while a > 0 and overlap_others[a - 1]:
            a -= 1
        while b < ts.size - 1 and overlap_others[b + 1]:
            b += 1
        margin = clearance if clearance is not None else default_clearance(arena, k)
        sl = slice(a, b + 1)
        # detour below the obstacle
        amp = float(np.max(up[k, sl])) - (obstacle.dims[k].lo - margin)
        if amp > 0 and float(np.min(lo[k, sl])) - amp >= arena.dims[k].lo:
            options.append((amp, k, "below", a, b))
        # detour above the obstacle
        amp = (obstacle.dims[k].hi + margin) - float(np.min(lo[k, sl]))
        if amp > 0 and float(np.max(up[k, sl])) + amp <= arena.dims[k].hi:
            options.append((amp, k, "above", a, b))
    options.sort(key=lambda o: (o[0], o[1]))
    return options


def circumvent_obstacles(tube: Tube, obstacles: ObstacleSet,
                         clearance: Optional[float] = None,
                         dt_check: Optional[float] = None,
                         arena: Optional[HyperRect] = None) -> Tube:
    """Bend the tube around every static obstacle it currently crosses.

    For each blocking window one detour dimension is chosen (minimum boundary
    shift that fits the free space on one side) and both boundaries of that
    dimension are shifted by a smoothstep bump over the window padded by 10%.
    Re-scans until clean; raises InfeasibilityError when no side fits.
    """
    if dt_check is None:
        dt_check = tube.t_p / 1e4
    if dt_check <= 0:
        raise ValueError("dt_check must be positive")
    if arena is None:
        # tightest box the tube already respects; used only for free-space checks
        ts0 = time_grid(tube.t_p, dt_check)
        lo0, up0 = tube.sample_bounds(ts0)
        arena = HyperRect.from_bounds(
            [(float(np.min(lo0[k])), float(np.max(up0[k]))) for k in range(tube.n)])
    if clearance is not None and clearance < 0:
        raise ValueError("clearance must be nonnegative")

    max_passes = 8 * max(obstacles.count, 1) + 8
    current = tube
    for _ in range(max_passes):
        ts = time_grid(current.t_p, dt_check)
        lo, up = current.sample_bounds(ts)
        hit_obstacle = None
        window = None
        for obstacle in obstacles.obstacles:
            if obstacle.n != current.n:
                raise DimensionMismatchError(
                    f"obstacle has {obstacle.n} dims, tube has {current.n}")
            flags = _obstacle_overlap_flags(lo, up, obstacle)
            windows = _contiguous_windows(ts, flags)
            if windows:
                hit_obstacle, window = obstacle, windows[0]
                break
        if hit_obstacle is None:
            return current

        block_lo, block_hi = window
        options = _detour_candidates(current, hit_obstacle, arena, ts, lo, up,
                                     block_lo, block_hi, clearance)
        pad = max(0.1 * (ts[block_hi] - ts[block_lo]), 2.0 * dt_check)

        # Score each candidate by how many grid samples would still overlap
        # any obstacle after the bump; a locally smaller deviation can shove
        # the tube into a neighboring obstacle's shadow, so raw amplitude is
        # only the tie-breaker.
        best = None
        for amp, k, side, a, b in options:
            hold0, hold1 = ts[a] - pad, ts[b] + pad
            t0, t3 = hold0 - pad, hold1 + pad
            if t0 <= 0.0 or t3 >= current.t_p:
                continue
            signed = -amp if side == "below" else amp
            bump = Bump(t0, hold0, hold1, t3, signed)
            profiles = list(current.profiles)
            profiles[k] = profiles[k].with_offset(bump)
            candidate = replace(current, profiles=tuple(profiles))
            c_lo, c_up = candidate.sample_bounds(ts)
            blocked = sum(int(np.count_nonzero(_obstacle_overlap_flags(c_lo, c_up, o)))
                          for o in obstacles.obstacles)
            score = (blocked, amp, k)
            if best is None or score < best[0]:
                best = (score, candidate)
        if best is None:
            raise InfeasibilityError(
                f"agent {current.agent_id}: obstacle {hit_obstacle.bounds()} blocks every "
                f"detour dimension during [{ts[block_lo]:.4f}, {ts[block_hi]:.4f}] s")
        current = best[1]
    raise InfeasibilityError(
        f"agent {tube.agent_id}: circumvention did not converge after {max_passes} passes")


# ---------------------------------------------------------------------------
# serialization

def tube_to_dict(tube: Tube) -> dict:
    return {
        "agent_id": tube.agent_id,
        "t_p": tube.t_p,
        "profiles": [
            [{"t0": seg.t0, "t1": seg.t1,
              "lower": seg.lower.to_dict(), "upper": seg.upper.to_dict()}
             for seg in prof.segments]
            for prof in tube.profiles
        ],
        "freezes": [
            {"t_lo": fr.t_lo, "t_hi": fr.t_hi, "delta": fr.delta,
             "frozen": fr.frozen.bounds()}
            for fr in tube.freezes
        ],
    }


def tube_from_dict(d: dict) -> Tube:
    profiles = tuple(
        BoundaryProfile(tuple(
            Segment(seg["t0"], seg["t1"],
                    curve_from_dict(seg["lower"]), curve_from_dict(seg["upper"]))
            for seg in prof))
        for prof in d["profiles"])
    freezes = tuple(
        FreezeRecord(fr["t_lo"], fr["t_hi"], fr["delta"],
                     HyperRect.from_bounds(fr["frozen"]))
        for fr in d.get("freezes", []))
    return Tube(agent_id=d["agent_id"], t_p=d["t_p"], profiles=profiles, freezes=freezes)


def save_tubes(tubes: dict[int, Tube], path: str | os.PathLike):
    payload = {"tubes": [tube_to_dict(tubes[i]) for i in sorted(tubes)]}
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh)
    os.replace(tmp, path)


def load_tubes(path: str | os.PathLike) -> dict[int, Tube]:
    with open(path) as fh:
        payload = json.load(fh)
    tubes = [tube_from_dict(d) for d in payload["tubes"]]
    return {tube.agent_id: tube for tube in tubes}
