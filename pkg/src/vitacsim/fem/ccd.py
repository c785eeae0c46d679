"""Conservative additive continuous collision detection.

Pairs advance along the candidate displacement in steps bounded by their
current separation divided by an upper bound on the closing speed, so the
reported time of impact never overshoots.  Iteration stops once the
separation drops below a small fraction of its starting value, which brackets
the true TOI to relative accuracy ``_GAP_FRACTION``.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .distances import _ee_single, _pt_single

_GAP_FRACTION = 1e-4
_MAX_ITERS = 256


@njit(cache=True, fastmath=False)
def _pt_dist(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    w0, w1, w2 = _pt_single(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz)
    qx = w0 * ax + w1 * bx + w2 * cx
    qy = w0 * ay + w1 * by + w2 * cy
    qz = w0 * az + w1 * bz + w2 * cz
    dx, dy, dz = px - qx, py - qy, pz - qz
    return np.sqrt(dx * dx + dy * dy + dz * dz)


@njit(cache=True, fastmath=False)
def _ee_dist(a0x, a0y, a0z, a1x, a1y, a1z, b0x, b0y, b0z, b1x, b1y, b1z):
    s, t = _ee_single(a0x, a0y, a0z, a1x, a1y, a1z, b0x, b0y, b0z, b1x, b1y, b1z)
    pax = a0x + s * (a1x - a0x)
    pay = a0y + s * (a1y - a0y)
    paz = a0z + s * (a1z - a0z)
    pbx = b0x + t * (b1x - b0x)
    pby = b0y + t * (b1y - b0y)
    pbz = b0z + t * (b1z - b0z)
    dx, dy, dz = pax - pbx, pay - pby, paz - pbz
    return np.sqrt(dx * dx + dy * dy + dz * dz)


@njit(cache=True, fastmath=False)
def _norm3(x, y, z):
    return np.sqrt(x * x + y * y + z * z)


@njit(cache=True, fastmath=False)
def _pt_toi_kernel(p, t0, t1, t2, dp, dt0, dt1, dt2, out):
    n = p.shape[0]
    for i in range(n):
        mx = (dp[i, 0] + (dt0[i, 0] + dt1[i, 0] + dt2[i, 0]) / 3.0) / 2.0
        my = (dp[i, 1] + (dt0[i, 1] + dt1[i, 1] + dt2[i, 1]) / 3.0) / 2.0
        mz = (dp[i, 2] + (dt0[i, 2] + dt1[i, 2] + dt2[i, 2]) / 3.0) / 2.0
        sp = _norm3(dp[i, 0] - mx, dp[i, 1] - my, dp[i, 2] - mz)
        s0 = _norm3(dt0[i, 0] - mx, dt0[i, 1] - my, dt0[i, 2] - mz)
        s1 = _norm3(dt1[i, 0] - mx, dt1[i, 1] - my, dt1[i, 2] - mz)
        s2 = _norm3(dt2[i, 0] - mx, dt2[i, 1] - my, dt2[i, 2] - mz)
        st = max(s0, max(s1, s2))
        speed = sp + st
        out[i] = 2.0
        if speed <= 0.0:
            continue
        d0 = _pt_dist(
            p[i, 0], p[i, 1], p[i, 2],
            t0[i, 0], t0[i, 1], t0[i, 2],
            t1[i, 0], t1[i, 1], t1[i, 2],
            t2[i, 0], t2[i, 1], t2[i, 2],
        )
        if d0 <= 0.0:
            out[i] = 0.0
            continue
        gap = max(_GAP_FRACTION * d0, 1e-16)
        t = 0.0
        d = d0
        for _ in range(_MAX_ITERS):
            step = 0.9 * d / speed
            t_new = t + step
            if t_new > 1.0:
                break
            t = t_new
            d = _pt_dist(
                p[i, 0] + t * dp[i, 0], p[i, 1] + t * dp[i, 1], p[i, 2] + t * dp[i, 2],
                t0[i, 0] + t * dt0[i, 0], t0[i, 1] + t * dt0[i, 1], t0[i, 2] + t * dt0[i, 2],
                t1[i, 0] + t * dt1[i, 0], t1[i, 1] + t * dt1[i, 1], t1[i, 2] + t * dt1[i, 2],
                t2[i, 0] + t * dt2[i, 0], t2[i, 1] + t * dt2[i, 1], t2[i, 2] + t * dt2[i, 2],
            )
            if d <= gap:
                out[i] = t
                break


@njit(cache=True, fastmath=False)
def _ee_toi_kernel(a0, a1, b0, b1, da0, da1, db0, db1, out):
    n = a0.shape[0]
    for i in range(n):
        mx = (da0[i, 0] + da1[i, 0] + db0[i, 0] + db1[i, 0]) / 4.0
        my = (da0[i, 1] + da1[i, 1] + db0[i, 1] + db1[i, 1]) / 4.0
        mz = (da0[i, 2] + da1[i, 2] + db0[i, 2] + db1[i, 2]) / 4.0
        sa = max(
            _norm3(da0[i, 0] - mx, da0[i, 1] - my, da0[i, 2] - mz),
            _norm3(da1[i, 0] - mx, da1[i, 1] - my, da1[i, 2] - mz),
        )
        sb = max(
            _norm3(db0[i, 0] - mx, db0[i, 1] - my, db0[i, 2] - mz),
            _norm3(db1[i, 0] - mx, db1[i, 1] - my, db1[i, 2] - mz),
        )
        speed = sa + sb
        out[i] = 2.0
        if speed <= 0.0:
            continue
        d0 = _ee_dist(
            a0[i, 0], a0[i, 1], a0[i, 2], a1[i, 0], a1[i, 1], a1[i, 2],
            b0[i, 0], b0[i, 1], b0[i, 2], b1[i, 0], b1[i, 1], b1[i, 2],
        )
        if d0 <= 0.0:
            out[i] = 0.0
            continue
        gap = max(_GAP_FRACTION * d0, 1e-16)
        t = 0.0
        d = d0
        for _ in range(_MAX_ITERS):
            step = 0.9 * d / speed
            t_new = t + step
            if t_new > 1.0:
                break
            t = t_new
            d = _ee_dist(
                a0[i, 0] + t * da0[i, 0], a0[i, 1] + t * da0[i, 1], a0[i, 2] + t * da0[i, 2],
                a1[i, 0] + t * da1[i, 0], a1[i, 1] + t * da1[i, 1], a1[i, 2] + t * da1[i, 2],
                b0[i, 0] + t * db0[i, 0], b0[i, 1] + t * db0[i, 1], b0[i, 2] + t * db0[i, 2],
                b1[i, 0] + t * db1[i, 0], b1[i, 1] + t * db1[i, 1], b1[i, 2] + t * db1[i, 2],
            )
            if d <= gap:
                out[i] = t
                break


def _prep(*arrays):
    return [np.ascontiguousarray(np.atleast_2d(a), dtype=np.float64) for a in arrays]


def point_triangle_toi(p, t0, t1, t2, dp, dt0, dt1, dt2):
    """Earliest time in [0, 1] at which each point-triangle pair touches.

    Entries are 2.0 for pairs that stay separated over the whole step.
    Inputs are (n, 3) arrays of positions and displacements.
    """
    p, t0, t1, t2, dp, dt0, dt1, dt2 = _prep(p, t0, t1, t2, dp, dt0, dt1, dt2)
    out = np.empty(len(p))
    _pt_toi_kernel(p, t0, t1, t2, dp, dt0, dt1, dt2, out)
    return out


def edge_edge_toi(a0, a1, b0, b1, da0, da1, db0, db1):
    """Earliest touching time for edge-edge pairs, same contract as above."""
    a0, a1, b0, b1, da0, da1, db0, db1 = _prep(a0, a1, b0, b1, da0, da1, db0, db1)
    out = np.empty(len(a0))
    _ee_toi_kernel(a0, a1, b0, b1, da0, da1, db0, db1, out)
    return out
