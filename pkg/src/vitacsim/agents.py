"""Scripted policies: privileged proportional oracle, tactile heuristic, random.

The oracle consumes the ground-truth offsets of the diagnostics channel (the
privileged stream used by critics), the tactile heuristic only sees the
marker flow, and the random policy samples the clipped action box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kinematics import ActionCommand, TRACK_ARITY, global_to_local


@dataclass
class OraclePolicyConfig:
    task: str = "peg"
    gain: float = 1.0
    caps: np.ndarray = None  # per-component, mm / deg; defaults to env caps

    def __post_init__(self):
        if self.gain <= 0:
            raise ValueError("gain must be positive")
        if self.caps is not None:
            self.caps = np.asarray(self.caps, dtype=np.float64)


def oracle_policy(gt_offset, theta_current: float, config: OraclePolicyConfig) -> ActionCommand:
    """Clamped proportional correction of the ground-truth offset.

    ``gt_offset`` is the diagnostics vector of the task (mm/deg); for tasks
    with rotation the xy correction is rotated into the object-local frame
    before emission.
    """
    gt = np.asarray(gt_offset, dtype=np.float64)
    task = config.task
    if task == "peg":
        wx, wy = -config.gain * gt[0], -config.gain * gt[1]
        ax, ay = global_to_local(wx, wy, theta_current)
        raw = np.array([ax, ay, -config.gain * gt[2]])
    elif task == "lock":
        raw = -config.gain * gt[:3]
    elif task == "fusion":
        wx, wy = -config.gain * gt[0], -config.gain * gt[1]
        ax, ay = global_to_local(wx, wy, theta_current)
        raw = np.array([ax, ay, -config.gain * gt[3], -config.gain * gt[2]])
    else:
        raise ValueError(f"unknown task {task!r}")
    caps = config.caps if config.caps is not None else np.ones(len(raw))
    return ActionCommand(task, np.clip(raw, -caps, caps))


def tactile_heuristic_policy(observation, task: str, shear_gain: float = 2.0,
                             twist_gain: float = 20.0, caps=None) -> ActionCommand:
    """Marker-flow heuristic: oppose the mean shear, untwist on L/R asymmetry.

    The mean pixel displacement over both sensors estimates lateral slip of
    the gripped object; the difference of the two sensors' x-flows estimates
    twist.  Signs were fixed against a calibration episode with a seeded
    lateral offset.  Returns zero action when every marker is invalid.
    """
    fl, fr = observation.marker_flow_left, observation.marker_flow_right
    vl = fl.displacement[fl.valid]
    vr = fr.displacement[fr.valid]
    if len(vl) == 0 and len(vr) == 0:
        return ActionCommand(task, np.zeros(TRACK_ARITY[task]))
    ml = vl.mean(axis=0) if len(vl) else np.zeros(2)
    mr = vr.mean(axis=0) if len(vr) else np.zeros(2)
    # left camera: +u is world +x; right camera is mirrored in x
    shear_x = (ml[0] - mr[0]) / 2.0
    shear_v = (ml[1] + mr[1]) / 2.0
    twist = (ml[0] + mr[0]) / 2.0
    if task == "peg":
        raw = np.array([-shear_gain * shear_x, shear_gain * shear_v, -twist_gain * twist])
    elif task == "lock":
        raw = np.array([-shear_gain * shear_x, 0.0, shear_gain * shear_v])
    else:
        raw = np.array([-shear_gain * shear_x, shear_gain * shear_v, -twist_gain * twist, 0.0])
    caps = np.ones(len(raw)) if caps is None else np.asarray(caps, dtype=np.float64)
    return ActionCommand(task, np.clip(raw, -caps, caps))


def random_policy(rng, task: str, caps) -> ActionCommand:
    """Uniform draw over the clipped action box."""
    caps = np.asarray(caps, dtype=np.float64)
    return ActionCommand(task, rng.uniform(-caps, caps))


class Policy:
    """Uniform stepping interface over the three builtin policies."""

    def __init__(self, kind: str, task: str, caps, seed: int = 0, gain: float = 1.0):
        if kind not in ("oracle", "tactile", "random"):
            raise ValueError(f"unknown policy {kind!r}")
        self.kind = kind
        self.task = task
        self.caps = np.asarray(caps, dtype=np.float64)
        self.rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA5]))
        self.oracle_config = OraclePolicyConfig(task=task, gain=gain, caps=self.caps)

    def __call__(self, observation, diagnostics) -> np.ndarray:
        if self.kind == "oracle":
            gt = diagnostics.get("gt_offset")
            if gt is None:
                raise ValueError("oracle policy needs privileged diagnostics")
            # the action pipeline rotates local xy by the accumulated theta
            # offset, which relative_motion reports in degrees
            theta = math.radians(observation.relative_motion[3])
            return oracle_policy(gt, theta, self.oracle_config).values
        if self.kind == "tactile":
            return tactile_heuristic_policy(observation, self.task, caps=self.caps).values
        return random_policy(self.rng, self.task, self.caps).values
