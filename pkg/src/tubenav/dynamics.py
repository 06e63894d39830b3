"""Ground-truth plant models and the RK4 stepper.

These dynamics exist only inside the simulator; the controller never sees
them. Custom control-affine models can be supplied through callables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NumericalBlowupError

KIND_SINGLE_INTEGRATOR = "single_integrator"
KIND_OMNI_ROBOT = "omni_robot"
KIND_CUSTOM = "custom"


@dataclass(frozen=True)
class DynamicsModel:
    """Control-affine plant xdot = f(x) + g(x) u + d."""

    kind: str
    n: int
    m: int
    drift: Optional[Callable[[np.ndarray], np.ndarray]] = None
    input_map: Optional[Callable[[np.ndarray], np.ndarray]] = None


def single_integrator(n: int = 3) -> DynamicsModel:
    """Kinematic point: velocity input per dimension."""
    return DynamicsModel(kind=KIND_SINGLE_INTEGRATOR, n=n, m=n)


def omni_robot() -> DynamicsModel:
    """Planar omni-directional robot: body velocities rotated by heading."""
    return DynamicsModel(kind=KIND_OMNI_ROBOT, n=3, m=3)


def custom_affine(n: int, m: int, drift: Callable, input_map: Callable) -> DynamicsModel:
    return DynamicsModel(kind=KIND_CUSTOM, n=n, m=m, drift=drift, input_map=input_map)


def heading_rotation(heading: float) -> np.ndarray:
    """Rotation of body velocities into the world frame, heading passthrough."""
    c, s = math.cos(heading), math.sin(heading)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def eval_rhs(model: DynamicsModel, x: np.ndarray, u: np.ndarray,
             d: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    d = np.asarray(d, dtype=float)
    if model.kind == KIND_SINGLE_INTEGRATOR:
        return u + d
    if model.kind == KIND_OMNI_ROBOT:
        return heading_rotation(x[2]) @ u + d
    if model.kind == KIND_CUSTOM:
        return model.drift(x) + model.input_map(x) @ u + d
    raise ValueError(f"unknown dynamics kind: {model.kind!r}")


def step_dynamics(model: DynamicsModel, x: np.ndarray, u: np.ndarray,
                  d: np.ndarray, dt: float) -> np.ndarray:
    """One RK4 step with the input and disturbance held constant."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    if x.size != model.n:
        raise ValueError(f"state has {x.size} dims, model expects {model.n}")
    k1 = eval_rhs(model, x, u, d)
    k2 = eval_rhs(model, x + 0.5 * dt * k1, u, d)
    k3 = eval_rhs(model, x + 0.5 * dt * k2, u, d)
    k4 = eval_rhs(model, x + dt * k3, u, d)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NumericalBlowupError(f"non-finite state after step from {x}")
    return out
