"""Vectorized closest-point queries between contact primitives.

Each query returns the unsigned distance together with the convex weights of
the closest points, which also serve as the exact distance gradient via the
envelope theorem (the weights are held fixed under differentiation).  The
kernels are JIT-compiled per-pair scalar loops (Ericson's algorithms).
"""

from __future__ import annotations

import numpy as np
from numba import njit

_EPS = 1e-14


@njit(cache=True, fastmath=False)
def _pt_single(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Closest-point weights of one point-triangle pair (Ericson)."""
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return 1.0, 0.0, 0.0
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return 0.0, 1.0, 0.0
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        denom = d1 - d3
        v = d1 / denom if abs(denom) > _EPS else 0.0
        return 1.0 - v, v, 0.0
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return 0.0, 0.0, 1.0
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        denom = d2 - d6
        w = d2 / denom if abs(denom) > _EPS else 0.0
        return 1.0 - w, 0.0, w
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        denom = (d4 - d3) + (d5 - d6)
        w = (d4 - d3) / denom if abs(denom) > _EPS else 0.0
        return 0.0, 1.0 - w, w
    denom = va + vb + vc
    if abs(denom) < _EPS:
        return 1.0, 0.0, 0.0
    v = vb / denom
    w = vc / denom
    return 1.0 - v - w, v, w


@njit(cache=True, fastmath=False)
def _pt_kernel(p, a, b, c, dist, wout):
    for i in range(p.shape[0]):
        w0, w1, w2 = _pt_single(
            p[i, 0], p[i, 1], p[i, 2],
            a[i, 0], a[i, 1], a[i, 2],
            b[i, 0], b[i, 1], b[i, 2],
            c[i, 0], c[i, 1], c[i, 2],
        )
        qx = w0 * a[i, 0] + w1 * b[i, 0] + w2 * c[i, 0]
        qy = w0 * a[i, 1] + w1 * b[i, 1] + w2 * c[i, 1]
        qz = w0 * a[i, 2] + w1 * b[i, 2] + w2 * c[i, 2]
        dx, dy, dz = p[i, 0] - qx, p[i, 1] - qy, p[i, 2] - qz
        dist[i] = np.sqrt(dx * dx + dy * dy + dz * dz)
        wout[i, 0] = w0
        wout[i, 1] = w1
        wout[i, 2] = w2


def point_triangle_closest(p, a, b, c):
    """Distance and barycentric weights of the closest triangle point.

    All arguments are (n, 3) arrays.  Returns ``(dist, w)`` with ``w`` of
    shape (n, 3), nonnegative, summing to one.
    """
    p, a, b, c = (np.ascontiguousarray(np.atleast_2d(x), dtype=np.float64) for x in (p, a, b, c))
    n = len(p)
    dist = np.empty(n)
    w = np.empty((n, 3))
    _pt_kernel(p, a, b, c, dist, w)
    return dist, w


@njit(cache=True, fastmath=False)
def _ee_single(a0x, a0y, a0z, a1x, a1y, a1z, b0x, b0y, b0z, b1x, b1y, b1z):
    """Closest-point parameters (s, t) of one segment-segment pair (Ericson)."""
    d1x, d1y, d1z = a1x - a0x, a1y - a0y, a1z - a0z
    d2x, d2y, d2z = b1x - b0x, b1y - b0y, b1z - b0z
    rx, ry, rz = a0x - b0x, a0y - b0y, a0z - b0z
    aa = d1x * d1x + d1y * d1y + d1z * d1z
    ee = d2x * d2x + d2y * d2y + d2z * d2z
    ff = d2x * rx + d2y * ry + d2z * rz
    if aa <= _EPS and ee <= _EPS:
        return 0.0, 0.0
    if aa <= _EPS:
        t = ff / ee
        return 0.0, min(max(t, 0.0), 1.0)
    cc = d1x * rx + d1y * ry + d1z * rz
    if ee <= _EPS:
        s = -cc / aa
        return min(max(s, 0.0), 1.0), 0.0
    bb = d1x * d2x + d1y * d2y + d1z * d2z
    denom = aa * ee - bb * bb
    s = 0.0
    if denom > _EPS:
        s = min(max((bb * ff - cc * ee) / denom, 0.0), 1.0)
    t = (bb * s + ff) / ee
    if t < 0.0:
        t = 0.0
        s = min(max(-cc / aa, 0.0), 1.0)
    elif t > 1.0:
        t = 1.0
        s = min(max((bb - cc) / aa, 0.0), 1.0)
    return s, t


@njit(cache=True, fastmath=False)
def _ee_kernel(a0, a1, b0, b1, dist, ss, tt):
    for i in range(a0.shape[0]):
        s, t = _ee_single(
            a0[i, 0], a0[i, 1], a0[i, 2],
            a1[i, 0], a1[i, 1], a1[i, 2],
            b0[i, 0], b0[i, 1], b0[i, 2],
            b1[i, 0], b1[i, 1], b1[i, 2],
        )
        pax = a0[i, 0] + s * (a1[i, 0] - a0[i, 0])
        pay = a0[i, 1] + s * (a1[i, 1] - a0[i, 1])
        paz = a0[i, 2] + s * (a1[i, 2] - a0[i, 2])
        pbx = b0[i, 0] + t * (b1[i, 0] - b0[i, 0])
        pby = b0[i, 1] + t * (b1[i, 1] - b0[i, 1])
        pbz = b0[i, 2] + t * (b1[i, 2] - b0[i, 2])
        dx, dy, dz = pax - pbx, pay - pby, paz - pbz
        dist[i] = np.sqrt(dx * dx + dy * dy + dz * dz)
        ss[i] = s
        tt[i] = t


def segment_segment_closest(a0, a1, b0, b1):
    """Distance and parametric coordinates (s, t) of the closest points.

    Closest points are ``a0 + s (a1 - a0)`` and ``b0 + t (b1 - b0)`` with s
    and t clamped to [0, 1].  Degenerate (zero-length) segments are handled.
    """
    a0, a1, b0, b1 = (
        np.ascontiguousarray(np.atleast_2d(x), dtype=np.float64) for x in (a0, a1, b0, b1)
    )
    n = len(a0)
    dist = np.empty(n)
    s = np.empty(n)
    t = np.empty(n)
    _ee_kernel(a0, a1, b0, b1, dist, s, t)
    return dist, s, t
