"""C1 scalar curve primitives used for tube boundaries.

Every curve is defined on the whole real line (pieces clamp or vanish
outside their active window), evaluates on scalars or numpy arrays, has an
analytic derivative, and serializes to a plain dict for exact round-trips.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

ArrayLike = Union[float, np.ndarray]


def smoothstep(u: ArrayLike) -> ArrayLike:
    """Cubic smoothstep 3u^2 - 2u^3, clamped to [0, 1]; zero slope at both ends."""
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def smoothstep_deriv(u: ArrayLike) -> ArrayLike:
    u = np.asarray(u, dtype=float)
    inside = (u > 0.0) & (u < 1.0)
    uu = np.clip(u, 0.0, 1.0)
    return np.where(inside, 6.0 * uu * (1.0 - uu), 0.0)


class Curve:
    """Base class; subclasses are frozen dataclasses."""

    def value(self, t: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def derivative(self, t: ArrayLike) -> ArrayLike:
        raise NotImplementedError

    def shifted(self, dt: float) -> "Curve":
        """The same curve with its time axis translated by +dt."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __call__(self, t: ArrayLike) -> ArrayLike:
        return self.value(t)


def _scalar_or_array(t, out):
    if np.isscalar(t) or (isinstance(t, np.ndarray) and t.ndim == 0):
        return float(out)
    return np.asarray(out, dtype=float)


@dataclass(frozen=True)
class Constant(Curve):
    c: float

    def value(self, t):
        return _scalar_or_array(t, np.full_like(np.asarray(t, dtype=float), self.c))

    def derivative(self, t):
        return _scalar_or_array(t, np.zeros_like(np.asarray(t, dtype=float)))

    def shifted(self, dt):
        return self

    def to_dict(self):
        return {"kind": "constant", "c": self.c}


@dataclass(frozen=True)
class Affine(Curve):
    """y0 + slope * (t - t0). Not clamped; used for synthetic test tubes."""

    t0: float
    y0: float
    slope: float

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return _scalar_or_array(t, self.y0 + self.slope * (t - self.t0))

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        return _scalar_or_array(t, np.full_like(t, self.slope))

    def shifted(self, dt):
        return Affine(self.t0 + dt, self.y0, self.slope)

    def to_dict(self):
        return {"kind": "affine", "t0": self.t0, "y0": self.y0, "slope": self.slope}


@dataclass(frozen=True)
class Smoothstep(Curve):
    """Cubic-smoothstep transition from y0 at t0 to y1 at t1, clamped outside."""

    t0: float
    t1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError(f"smoothstep needs t1 > t0, got [{self.t0}, {self.t1}]")

    def value(self, t):
        u = (np.asarray(t, dtype=float) - self.t0) / (self.t1 - self.t0)
        s = smoothstep(u)
        # convex blend instead of y0 + (y1-y0)*s so the endpoints are exact
        return _scalar_or_array(t, self.y0 * (1.0 - s) + self.y1 * s)

    def derivative(self, t):
        span = self.t1 - self.t0
        u = (np.asarray(t, dtype=float) - self.t0) / span
        return _scalar_or_array(t, (self.y1 - self.y0) * smoothstep_deriv(u) / span)

    def shifted(self, dt):
        return Smoothstep(self.t0 + dt, self.t1 + dt, self.y0, self.y1)

    def to_dict(self):
        return {"kind": "smoothstep", "t0": self.t0, "t1": self.t1, "y0": self.y0, "y1": self.y1}


@dataclass(frozen=True)
class Bump(Curve):
    """Zero outside [t0, t3]; smoothstep rise to ``amplitude`` on [t0, t1],
    flat on [t1, t2], smoothstep fall back to zero on [t2, t3]."""

    t0: float
    t1: float
    t2: float
    t3: float
    amplitude: float

    def __post_init__(self):
        if not (self.t0 < self.t1 <= self.t2 < self.t3):
            raise ValueError(f"bump breakpoints must satisfy t0 < t1 <= t2 < t3: "
                             f"({self.t0}, {self.t1}, {self.t2}, {self.t3})")

    def value(self, t):
        ta = np.asarray(t, dtype=float)
        rise = smoothstep((ta - self.t0) / (self.t1 - self.t0))
        fall = smoothstep((ta - self.t2) / (self.t3 - self.t2))
        return _scalar_or_array(t, self.amplitude * (rise - fall))

    def derivative(self, t):
        ta = np.asarray(t, dtype=float)
        rise = smoothstep_deriv((ta - self.t0) / (self.t1 - self.t0)) / (self.t1 - self.t0)
        fall = smoothstep_deriv((ta - self.t2) / (self.t3 - self.t2)) / (self.t3 - self.t2)
        return _scalar_or_array(t, self.amplitude * (rise - fall))

    def shifted(self, dt):
        return Bump(self.t0 + dt, self.t1 + dt, self.t2 + dt, self.t3 + dt, self.amplitude)

    def to_dict(self):
        return {"kind": "bump", "t0": self.t0, "t1": self.t1, "t2": self.t2,
                "t3": self.t3, "amplitude": self.amplitude}


@dataclass(frozen=True)
class Sum(Curve):
    terms: tuple[Curve, ...]

    def value(self, t):
        out = np.zeros_like(np.asarray(t, dtype=float))
        for term in self.terms:
            out = out + np.asarray(term.value(t))
        return _scalar_or_array(t, out)

    def derivative(self, t):
        out = np.zeros_like(np.asarray(t, dtype=float))
        for term in self.terms:
            out = out + np.asarray(term.derivative(t))
        return _scalar_or_array(t, out)

    def shifted(self, dt):
        return Sum(tuple(term.shifted(dt) for term in self.terms))

    def to_dict(self):
        return {"kind": "sum", "terms": [term.to_dict() for term in self.terms]}


@dataclass(frozen=True)
class Blend(Curve):
    """C1 crossfade from ``left`` to ``right`` over [t0, t1].

    Value is (1 - s)*left + s*right with s the cubic smoothstep, so value and
    slope match ``left`` at t0 and ``right`` at t1.
    """

    t0: float
    t1: float
    left: Curve
    right: Curve

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError(f"blend needs t1 > t0, got [{self.t0}, {self.t1}]")

    def value(self, t):
        u = (np.asarray(t, dtype=float) - self.t0) / (self.t1 - self.t0)
        s = smoothstep(u)
        out = (1.0 - s) * np.asarray(self.left.value(t)) + s * np.asarray(self.right.value(t))
        return _scalar_or_array(t, out)

    def derivative(self, t):
        span = self.t1 - self.t0
        u = (np.asarray(t, dtype=float) - self.t0) / span
        s = smoothstep(u)
        ds = smoothstep_deriv(u) / span
        lv = np.asarray(self.left.value(t))
        rv = np.asarray(self.right.value(t))
        ld = np.asarray(self.left.derivative(t))
        rd = np.asarray(self.right.derivative(t))
        return _scalar_or_array(t, (1.0 - s) * ld + s * rd + ds * (rv - lv))

    def shifted(self, dt):
        return Blend(self.t0 + dt, self.t1 + dt, self.left.shifted(dt), self.right.shifted(dt))

    def to_dict(self):
        return {"kind": "blend", "t0": self.t0, "t1": self.t1,
                "left": self.left.to_dict(), "right": self.right.to_dict()}


@dataclass(frozen=True)
class Piecewise(Curve):
    """Concatenation of curves: parts[i] is active on [breaks[i], breaks[i+1]).

    Queries before the first break use the first part, at or after the last
    break the last part. len(breaks) == len(parts) + 1.
    """

    breaks: tuple[float, ...]
    parts: tuple[Curve, ...]

    def __post_init__(self):
        if len(self.breaks) != len(self.parts) + 1:
            raise ValueError("need len(breaks) == len(parts) + 1")
        if any(b <= a for a, b in zip(self.breaks, self.breaks[1:])):
            raise ValueError(f"breaks must be strictly increasing: {self.breaks}")

    def _part_index(self, t):
        idx = np.searchsorted(np.asarray(self.breaks[1:-1]), t, side="right")
        return idx

    def _apply(self, t, fn_name):
        ta = np.atleast_1d(np.asarray(t, dtype=float))
        idx = self._part_index(ta)
        out = np.empty_like(ta)
        for i, part in enumerate(self.parts):
            mask = idx == i
            if np.any(mask):
                out[mask] = np.asarray(getattr(part, fn_name)(ta[mask]))
        if np.isscalar(t) or (isinstance(t, np.ndarray) and t.ndim == 0):
            return float(out[0])
        return out

    def value(self, t):
        return self._apply(t, "value")

    def derivative(self, t):
        return self._apply(t, "derivative")

    def shifted(self, dt):
        return Piecewise(tuple(b + dt for b in self.breaks),
                         tuple(p.shifted(dt) for p in self.parts))

    def to_dict(self):
        return {"kind": "piecewise", "breaks": list(self.breaks),
                "parts": [p.to_dict() for p in self.parts]}


def curve_from_dict(d: dict) -> Curve:
    kind = d["kind"]
    if kind == "constant":
        return Constant(d["c"])
    if kind == "affine":
        return Affine(d["t0"], d["y0"], d["slope"])
    if kind == "smoothstep":
        return Smoothstep(d["t0"], d["t1"], d["y0"], d["y1"])
    if kind == "bump":
        return Bump(d["t0"], d["t1"], d["t2"], d["t3"], d["amplitude"])
    if kind == "sum":
        return Sum(tuple(curve_from_dict(x) for x in d["terms"]))
    if kind == "blend":
        return Blend(d["t0"], d["t1"], curve_from_dict(d["left"]), curve_from_dict(d["right"]))
    if kind == "piecewise":
        return Piecewise(tuple(d["breaks"]), tuple(curve_from_dict(x) for x in d["parts"]))
    raise ValueError(f"unknown curve kind: {kind!r}")
