"""Closed intervals and axis-aligned hyper-rectangles.

All sets here use closed-interval semantics: touching boundaries count as
intersecting. That is deliberately conservative for safety checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatchError


@dataclass(frozen=True)
class Interval:
    """A closed, bounded interval [lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError(f"interval bounds must be finite, got [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise ValueError(f"interval lower bound exceeds upper: [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def overlaps(self, other: "Interval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def contains(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def contains_point(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def shifted(self, offset: float) -> "Interval":
        return Interval(self.lo + offset, self.hi + offset)


@dataclass(frozen=True)
class HyperRect:
    """An axis-aligned box: a product of closed intervals, one per dimension."""

    dims: tuple[Interval, ...]

    def __post_init__(self):
        if len(self.dims) < 1:
            raise ValueError("a hyper-rectangle needs at least one dimension")
        object.__setattr__(self, "dims", tuple(self.dims))

    @classmethod
    def from_bounds(cls, bounds: Iterable[Sequence[float]]) -> "HyperRect":
        """Build from an iterable of (lo, hi) pairs."""
        return cls(tuple(Interval(float(lo), float(hi)) for lo, hi in bounds))

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def lows(self) -> np.ndarray:
        return np.array([d.lo for d in self.dims])

    @property
    def highs(self) -> np.ndarray:
        return np.array([d.hi for d in self.dims])

    @property
    def center(self) -> np.ndarray:
        return np.array([d.center for d in self.dims])

    def bounds(self) -> list[tuple[float, float]]:
        return [(d.lo, d.hi) for d in self.dims]

    def _check_same_n(self, other: "HyperRect"):
        if self.n != other.n:
            raise DimensionMismatchError(
                f"dimension mismatch: {self.n} vs {other.n}"
            )

    def intersects(self, other: "HyperRect") -> bool:
        """True iff the boxes overlap in every dimension (boundary contact counts)."""
        self._check_same_n(other)
        return all(a.overlaps(b) for a, b in zip(self.dims, other.dims))

    def contains(self, inner: "HyperRect") -> bool:
        """True iff ``inner`` is a subset of this box in every dimension."""
        self._check_same_n(inner)
        return all(a.contains(b) for a, b in zip(self.dims, inner.dims))

    def contains_point(self, x: Sequence[float]) -> bool:
        if len(x) != self.n:
            raise DimensionMismatchError(f"point has {len(x)} coords, box has {self.n}")
        return all(d.contains_point(v) for d, v in zip(self.dims, x))

    def project(self, mask: Sequence[int]) -> "HyperRect":
        """Sub-rectangle on the dimensions listed in ``mask`` (strictly increasing)."""
        mask = tuple(mask)
        if len(mask) == 0:
            raise ValueError("projection mask must not be empty")
        if any(b <= a for a, b in zip(mask, mask[1:])):
            raise ValueError(f"projection mask must be strictly increasing: {mask}")
        if mask[0] < 0 or mask[-1] >= self.n:
            raise IndexError(f"projection index out of range for {self.n} dims: {mask}")
        return HyperRect(tuple(self.dims[k] for k in mask))


def intersects(a: HyperRect, b: HyperRect) -> bool:
    return a.intersects(b)


def contains(outer: HyperRect, inner: HyperRect) -> bool:
    return outer.contains(inner)


def project(r: HyperRect, mask: Sequence[int]) -> HyperRect:
    return r.project(mask)
