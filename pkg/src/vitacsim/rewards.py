"""Per-track reward compositions.

All three tracks share the shape

    R_t = e_{t-1} - e_t - P + R_final + R_fail

and differ in how the scalar error e_t is formed and in the failure penalty.
Peg and fusion errors mix millimeters and degrees; the lock error is formed
from meter-valued offsets scaled by 500 so a 1 mm error contributes 0.5.
"""

from __future__ import annotations

import math

import numpy as np

SUCCESS_REWARD = 10.0


def error_peg(e_x_mm: float, e_y_mm: float, e_theta_deg: float) -> float:
    return math.sqrt(e_x_mm**2 + e_y_mm**2 + e_theta_deg**2)


def error_lock(e_x_m: float, e_y_m: float, e_z_m: float) -> float:
    return 500.0 * (abs(e_x_m) + abs(e_y_m) + abs(e_z_m))


def error_fusion(e_x_mm: float, e_y_mm: float, e_z_mm: float, e_theta_deg: float) -> float:
    return math.sqrt(e_x_mm**2 + e_y_mm**2 + e_z_mm**2 + e_theta_deg**2)


def reward_peg(e_prev: float, e_t: float, status: str, t: int, t_max: int,
               step_penalty: float) -> float:
    r = e_prev - e_t - step_penalty
    if status == "success":
        r += SUCCESS_REWARD
    elif status == "error_too_large":
        r += -2.0 * (t_max - t) * step_penalty
    return r


def reward_lock(e_prev: float, e_t: float, status: str, t: int, t_max: int,
                step_penalty: float, surface_diffs_m, clip_mm: float = 5.0) -> float:
    r = e_prev - e_t - step_penalty
    if status == "success":
        r += SUCCESS_REWARD
    elif status in ("error_too_large", "too_many_steps"):
        penalty = sum(min(d * 1000.0, clip_mm) for d in surface_diffs_m)
        r += -10.0 * (t_max - t) * step_penalty - penalty
    return r


def reward_fusion(e_prev: float, e_t: float, status: str, t: int, t_max: int,
                  step_penalty: float) -> float:
    r = e_prev - e_t - step_penalty
    if status == "success":
        r += SUCCESS_REWARD
    elif status == "error_too_large":
        r += -2.0 * (t_max - t) * step_penalty
    return r
