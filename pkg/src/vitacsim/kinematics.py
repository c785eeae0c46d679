"""Action pipeline: clipping, frame rotation, offsets, substeps, velocities.

Agent actions arrive in millimeters and degrees; conversion to SI happens
exactly once, at the entrance of each environment's step.  Everything below
the conversion line is meters, radians, seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TRACK_ARITY = {"peg": 3, "lock": 3, "fusion": 4}

# Fixed per-substep velocity caps of the lock and fusion pipelines (m/s, rad/s).
LOCK_V_MAX = 2e-3
FUSION_V_MAX = 5e-3
FUSION_OMEGA_MAX = 0.2


@dataclass
class ActionCommand:
    """Track-tagged action increments in mm / deg.

    peg: (dx_mm, dy_mm, dtheta_deg); lock: (dx_mm, dy_mm, dz_mm);
    fusion: (dx_mm, dy_mm, dtheta_deg, dz_mm).
    """

    track: str
    values: np.ndarray

    def __post_init__(self):
        if self.track not in TRACK_ARITY:
            raise ValueError(f"unknown track {self.track!r}")
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if len(self.values) != TRACK_ARITY[self.track]:
            raise ValueError(
                f"{self.track} actions have {TRACK_ARITY[self.track]} components, got {len(self.values)}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("action components must be finite")


@dataclass
class OffsetState:
    """Accumulated global-frame offsets since episode start (SI units)."""

    x_offset: float = 0.0
    y_offset: float = 0.0
    z_offset: float = 0.0
    theta_offset: float = 0.0

    @property
    def theta_current(self) -> float:
        return self.theta_offset

    def as_array(self) -> np.ndarray:
        return np.array([self.x_offset, self.y_offset, self.z_offset, self.theta_offset])


@dataclass
class MotionLimits:
    max_action: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0, 1.0]))
    v_max: float = 2e-3
    omega_max: float = 0.2
    x_max: float = 0.012
    y_max: float = 0.012
    theta_max: float = math.radians(15.0)
    dt: float = 0.1

    def __post_init__(self):
        self.max_action = np.asarray(self.max_action, dtype=np.float64)
        for name in ("v_max", "omega_max", "x_max", "y_max", "theta_max", "dt"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def clip_action(action: ActionCommand, limits: MotionLimits) -> ActionCommand:
    """Clamp each component to the closed interval [-max, +max]."""
    clipped = np.clip(action.values, -limits.max_action, limits.max_action)
    return ActionCommand(action.track, clipped)


def local_to_global(dx: float, dy: float, theta_current: float):
    """Rotate a local xy increment into the global frame."""
    c = math.cos(theta_current)
    s = math.sin(theta_current)
    return c * dx - s * dy, s * dx + c * dy


def global_to_local(dx: float, dy: float, theta_current: float):
    """Inverse rotation, used by policies emitting local-frame actions."""
    return local_to_global(dx, dy, -theta_current)


def update_offsets(state: OffsetState, dx: float, dy: float,
                   dtheta: float = 0.0, dz: float = 0.0) -> OffsetState:
    """Accumulate global-frame increments (SI) into a new offset state."""
    return OffsetState(
        state.x_offset + dx,
        state.y_offset + dy,
        state.z_offset + dz,
        state.theta_offset + dtheta,
    )


def substep_count_peg(dxg: float, dyg: float, dtheta: float, limits: MotionLimits) -> int:
    lin = math.ceil(max(abs(dxg), abs(dyg)) / (limits.v_max * limits.dt))
    ang = math.ceil(abs(dtheta) / (limits.omega_max * limits.dt))
    return max(1, lin, ang)


def substep_count_lock(dx: float, dy: float, dz: float, dt: float) -> int:
    return max(1, math.ceil(max(abs(dx), abs(dy), abs(dz)) / (LOCK_V_MAX * dt)))


def substep_count_fusion(dxg: float, dyg: float, dz: float, dtheta: float, dt: float) -> int:
    lin = math.ceil(max(abs(dxg), abs(dyg), abs(dz)) / (FUSION_V_MAX * dt))
    ang = math.ceil(abs(dtheta) / (FUSION_OMEGA_MAX * dt))
    return max(1, lin, ang)


def substep_velocities(delta: np.ndarray, dtheta: float, n_sub: int, dt: float):
    """Per-substep linear velocity vector and angular rate.

    ``n_sub`` substeps of duration ``dt`` at these velocities reproduce the
    totals exactly.
    """
    delta = np.asarray(delta, dtype=np.float64)
    return delta / (n_sub * dt), dtheta / (n_sub * dt)


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit axis."""
    axis = np.asarray(axis, dtype=np.float64)
    k = np.array(
        [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
    )
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k)


def boundary_vertex_motion(x, v, omega: float, axis, pivot, dt: float):
    """Advance points by one substep of rigid end-effector motion.

    x' = v dt + R(axis, omega dt)(x - pivot) + pivot; also returns the
    per-vertex velocity (x' - x)/dt.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    v = np.asarray(v, dtype=np.float64)
    pivot = np.asarray(pivot, dtype=np.float64)
    r = rotation_about_axis(axis, omega * dt)
    x_new = v * dt + (x - pivot) @ r.T + pivot
    vel = (x_new - x) / dt
    return x_new, vel


def check_offset_limits(state: OffsetState, limits: MotionLimits):
    """None when inside the closed bounds, else the name of the first axis out."""
    if abs(state.x_offset) > limits.x_max:
        return "x"
    if abs(state.y_offset) > limits.y_max:
        return "y"
    if abs(state.theta_offset) > limits.theta_max:
        return "theta"
    return None
