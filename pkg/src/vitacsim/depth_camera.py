"""Ground-truth depth rendering, instance masks, and point-cloud conversion.

Triangles are rasterized with a z-buffer using perspective-correct depth, so
every written pixel carries the depth of the nearest surface along the ray
through that pixel's (integer) coordinate, exactly as a per-pixel ray cast
would produce.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

INVALID_DEPTH = 0.0


@dataclass
class CameraModel:
    """World-frame pinhole camera; ``rotation``/``translation`` map world->camera."""

    fx: float = 260.0
    fy: float = 260.0
    cx: float = 160.0
    cy: float = 120.0
    width: int = 320
    height: int = 240
    near: float = 0.01
    far: float = 2.0
    rotation: np.ndarray = None
    translation: np.ndarray = None

    def __post_init__(self):
        if self.near <= 0 or self.far <= self.near:
            raise ValueError("require 0 < near < far")
        if self.rotation is None:
            self.rotation = np.eye(3)
        if self.translation is None:
            self.translation = np.zeros(3)
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)

    def to_camera(self, points):
        return np.atleast_2d(points) @ self.rotation.T + self.translation

    @staticmethod
    def look_at(eye, target, up=(0.0, 0.0, 1.0), **kwargs):
        """Camera at ``eye`` with +z (view) axis toward ``target``."""
        eye = np.asarray(eye, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - eye
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(up, dtype=np.float64))
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        rot = np.stack([right, down, fwd])
        return CameraModel(rotation=rot, translation=-rot @ eye, **kwargs)


@dataclass
class DepthImage:
    depth: np.ndarray  # (H, W) meters, INVALID_DEPTH where no hit
    instance_ids: np.ndarray  # (H, W) int, -1 where no hit

    @property
    def valid(self) -> np.ndarray:
        return self.depth != INVALID_DEPTH


@dataclass
class PointCloud:
    points: np.ndarray  # (M, 3) camera frame
    labels: np.ndarray  # (M,) instance ids
    pixels: np.ndarray  # (M, 2) source pixel (u, v)


def render_depth(meshes, camera: CameraModel) -> DepthImage:
    """Rasterize ``(vertices, triangles, tri_instance_ids)`` tuples to depth + ids."""
    h, w = camera.height, camera.width
    zbuf = np.full((h, w), np.inf)
    ids = np.full((h, w), -1, dtype=np.int64)
    for verts, tris, tri_ids in meshes:
        pc = camera.to_camera(verts)
        _raster_mesh(pc, np.asarray(tris), np.asarray(tri_ids), camera, zbuf, ids)
    depth = np.where(np.isfinite(zbuf) & (zbuf >= camera.near) & (zbuf <= camera.far),
                     zbuf, INVALID_DEPTH)
    ids = np.where(depth != INVALID_DEPTH, ids, -1)
    return DepthImage(depth, ids)


def _raster_mesh(pc, tris, tri_ids, camera, zbuf, ids):
    h, w = zbuf.shape
    for tri, inst in zip(tris, tri_ids):
        a, b, c = pc[tri[0]], pc[tri[1]], pc[tri[2]]
        if a[2] <= 0 or b[2] <= 0 or c[2] <= 0:
            continue  # clipping of partially-behind triangles not needed desk-scale
        inv_z = np.array([1.0 / a[2], 1.0 / b[2], 1.0 / c[2]])
        px = np.array(
            [
                [camera.cx + camera.fx * a[0] / a[2], camera.cy + camera.fy * a[1] / a[2]],
                [camera.cx + camera.fx * b[0] / b[2], camera.cy + camera.fy * b[1] / b[2]],
                [camera.cx + camera.fx * c[0] / c[2], camera.cy + camera.fy * c[1] / c[2]],
            ]
        )
        u0 = max(0, int(np.ceil(px[:, 0].min())))
        u1 = min(w - 1, int(np.floor(px[:, 0].max())))
        v0 = max(0, int(np.ceil(px[:, 1].min())))
        v1 = min(h - 1, int(np.floor(px[:, 1].max())))
        if u0 > u1 or v0 > v1:
            continue
        us, vs = np.meshgrid(np.arange(u0, u1 + 1), np.arange(v0, v1 + 1))
        p = np.stack([us.ravel(), vs.ravel()], axis=1).astype(np.float64)
        d = _barycentric_2d(p, px[0], px[1], px[2])
        inside = np.all(d >= -1e-12, axis=1)
        if not np.any(inside):
            continue
        p_in = p[inside].astype(np.int64)
        # perspective-correct: 1/z interpolates linearly in screen space
        z = 1.0 / (d[inside] @ inv_z)
        flat = p_in[:, 1] * w + p_in[:, 0]
        current = zbuf.ravel()[flat]
        better = z < current
        np.minimum.at(zbuf.ravel(), flat, z)
        # ids follow the depth winner; recompute exactly for the written pixels
        winner = zbuf.ravel()[flat] == z
        ids.ravel()[flat[winner & better]] = inst


def _barycentric_2d(p, a, b, c):
    v0 = b - a
    v1 = c - a
    v2 = p - a
    den = v0[0] * v1[1] - v1[0] * v0[1]
    if abs(den) < 1e-30:
        return np.full((len(p), 3), -1.0)
    v = (v2[:, 0] * v1[1] - v1[0] * v2[:, 1]) / den
    w = (v0[0] * v2[:, 1] - v2[:, 0] * v0[1]) / den
    u = 1.0 - v - w
    return np.stack([u, v, w], axis=1)


def depth_to_pointcloud(image: DepthImage, camera: CameraModel, mask=None) -> PointCloud:
    """Back-project valid (optionally masked) pixels into the camera frame."""
    valid = image.valid if mask is None else (image.valid & mask)
    vs, us = np.nonzero(valid)
    z = image.depth[vs, us]
    x = (us - camera.cx) * z / camera.fx
    y = (vs - camera.cy) * z / camera.fy
    points = np.stack([x, y, z], axis=1)
    labels = image.instance_ids[vs, us]
    pixels = np.stack([us, vs], axis=1)
    return PointCloud(points, labels, pixels)


def segment_instances(instance_ids: np.ndarray, target_ids) -> np.ndarray:
    """Boolean mask of pixels whose instance id is in ``target_ids``.

    Ids absent from the image trigger a warning; an empty target set or all
    unknown ids yield an all-false mask.
    """
    target_ids = list(target_ids)
    mask = np.zeros(instance_ids.shape, dtype=bool)
    present = set(np.unique(instance_ids).tolist())
    for tid in target_ids:
        if tid not in present:
            warnings.warn(f"instance id {tid} not present in the render", stacklevel=2)
            continue
        mask |= instance_ids == tid
    return mask


def render_rgb_tags(image: DepthImage, palette=None) -> np.ndarray:
    """Flat-shaded tag image: one fixed color per instance id, black elsewhere."""
    default = np.array(
        [[200, 200, 200], [80, 140, 220], [220, 90, 60], [90, 200, 120],
         [210, 180, 70], [160, 90, 200], [90, 200, 200]],
        dtype=np.uint8,
    )
    palette = default if palette is None else np.asarray(palette, dtype=np.uint8)
    rgb = np.zeros(image.depth.shape + (3,), dtype=np.uint8)
    hit = image.instance_ids >= 0
    rgb[hit] = palette[image.instance_ids[hit] % len(palette)]
    return rgb
