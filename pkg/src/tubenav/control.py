"""Closed-form funnel controller confining each state dimension to its tube.

The law needs only the current state and the tube boundaries at the current
time; it never reads the plant's drift, input map, or disturbance. That
independence is structural: this module must not import the dynamics or
simulation modules.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateTubeError, FunnelViolationError
from .tubes import Tube

E_CLAMP = 1.0 - 1e-9  # numerical guard before the logarithm blows up


@dataclass(frozen=True)
class ControllerGains:
    """Per-dimension positive gains."""

    kappa: tuple[float, ...]

    def __post_init__(self):
        if any(k <= 0 for k in self.kappa):
            raise ValueError(f"all gains must be positive: {self.kappa}")


def normalized_error(x: float, gamma_L: float, gamma_U: float) -> float:
    """Position inside the funnel, 0 at center, +/-1 on the boundaries."""
    if gamma_L >= gamma_U:
        raise DegenerateTubeError(
            f"degenerate tube: gamma_L={gamma_L} >= gamma_U={gamma_U}")
    center = 0.5 * (gamma_U + gamma_L)
    radius = 0.5 * (gamma_U - gamma_L)
    return (x - center) / radius


def transformed_error(e: float) -> float:
    """Logarithmic barrier transform ln((1+e)/(1-e)); requires |e| < 1."""
    return math.log((1.0 + e) / (1.0 - e))


def gain_term(e: float, gamma_L: float, gamma_U: float) -> float:
    """The positive factor 4 (1 - e^2)^-1 / (gamma_U - gamma_L)."""
    return 4.0 / ((1.0 - e * e) * (gamma_U - gamma_L))


def control_input(x: float, gamma_L: float, gamma_U: float, kappa: float) -> float:
    """Scalar funnel control -kappa * xi * eps for one dimension.

    Raises FunnelViolationError when x is on or outside a boundary; the
    clamped evaluation used for diagnostics lives in the simulator.
    """
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    e = normalized_error(x, gamma_L, gamma_U)
    if not -1.0 < e < 1.0:
        raise FunnelViolationError(
            f"state {x} outside funnel [{gamma_L}, {gamma_U}]")
    e = min(max(e, -E_CLAMP), E_CLAMP)
    return -kappa * gain_term(e, gamma_L, gamma_U) * transformed_error(e)


def identity_channel_map(state: Sequence[float], u: np.ndarray) -> np.ndarray:
    """Per-dimension control applied directly as the physical input."""
    return np.asarray(u, dtype=float)


def inverse_rotation_channel_map(state: Sequence[float], u: np.ndarray) -> np.ndarray:
    """Map world-frame planar control to body-frame velocities.

    For a planar vehicle whose first two inputs pass through a heading
    rotation, premultiplying by the transpose of that rotation makes the
    closed-loop position dynamics decoupled per dimension. The third channel
    (heading rate) passes through unchanged.
    """
    heading = float(state[2])
    c, s = math.cos(heading), math.sin(heading)
    return np.array([c * u[0] + s * u[1], -s * u[0] + c * u[1], u[2]])


CHANNEL_MAPS: dict[str, Callable] = {
    "identity": identity_channel_map,
    "inverse_rotation": inverse_rotation_channel_map,
}


def control_vector(state: Sequence[float], tube: Tube, t: float,
                   gains: ControllerGains,
                   channel_map: Optional[Callable] = None) -> np.ndarray:
    """Funnel control for every dimension at time t, then the channel map.

    Raises FunnelViolationError naming the first dimension whose state sits
    on or outside its boundary.
    """
    state = np.asarray(state, dtype=float)
    if state.size != tube.n:
        raise ValueError(f"state has {state.size} dims, tube has {tube.n}")
    if len(gains.kappa) != tube.n:
        raise ValueError(f"gains have {len(gains.kappa)} entries, tube has {tube.n} dims")
    rect = tube.cross_section(t)
    u = np.empty(tube.n)
    for k in range(tube.n):
        lo, up = rect.dims[k].lo, rect.dims[k].hi
        if not lo < state[k] < up:
            raise FunnelViolationError(
                f"dim {k} at t={t}: state {state[k]} outside funnel [{lo}, {up}]",
                dim=k, time=t)
        u[k] = control_input(state[k], lo, up, gains.kappa[k])
    if channel_map is None:
        return u
    return np.asarray(channel_map(state, u), dtype=float)
