"""Marker-flow tactile sensing: interpolation, projection, noise, statistics.

Markers live on the sensing face and follow the deformed mesh through their
barycentric binding.  A pinhole camera fixed behind the shell face projects
them to pixels; observations are fixed-size paired arrays of initial and
current pixel positions with a validity mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import MarkerBinding


@dataclass
class SensorCamera:
    """Pinhole camera in the gel frame.

    The default pose puts the optical center ``optical_center_offset`` behind
    the gel-frame origin on the +z (shell) side, looking down the -z axis
    with image x along gel +x.
    """

    fx: float = 265.0
    fy: float = 265.0
    cx: float = 160.0
    cy: float = 120.0
    width: int = 320
    height: int = 240
    optical_center_offset: float = 0.020
    rotation: np.ndarray = None  # gel->camera rotation
    translation: np.ndarray = None  # gel->camera translation

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if self.rotation is None:
            # camera x = gel x, camera y = -gel y, camera z (view) = -gel z
            self.rotation = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
        if self.translation is None:
            # optical center at gel (0, 0, +offset)
            self.translation = -self.rotation @ np.array([0.0, 0.0, self.optical_center_offset])

    def to_camera(self, points_gel: np.ndarray) -> np.ndarray:
        return points_gel @ self.rotation.T + self.translation


def marker_world_positions(binding: MarkerBinding, marker_surface_tris, positions) -> np.ndarray:
    """Interpolate each marker from its facet's current vertex positions."""
    tri = marker_surface_tris[binding.facets]
    return np.einsum("ij,ijk->ik", binding.weights, positions[tri])


def project_to_camera(points_gel: np.ndarray, camera: SensorCamera):
    """Pinhole projection; returns (n, 2) pixels and a validity mask.

    Points behind the camera (Z <= 0) or outside the image bounds are
    flagged invalid; their pixel values are still returned for diagnostics.
    """
    pc = camera.to_camera(np.atleast_2d(points_gel))
    z = pc[:, 2]
    safe_z = np.where(z > 0, z, 1.0)
    u = camera.cx + camera.fx * pc[:, 0] / safe_z
    v = camera.cy + camera.fy * pc[:, 1] / safe_z
    px = np.stack([u, v], axis=1)
    valid = (z > 0) & (u >= 0) & (u < camera.width) & (v >= 0) & (v < camera.height)
    return px, valid


def back_project(pixels: np.ndarray, depths: np.ndarray, camera: SensorCamera) -> np.ndarray:
    """Inverse of :func:`project_to_camera` for known camera-frame depths."""
    pixels = np.atleast_2d(pixels)
    x = (pixels[:, 0] - camera.cx) * depths / camera.fx
    y = (pixels[:, 1] - camera.cy) * depths / camera.fy
    pc = np.stack([x, y, depths], axis=1)
    return (pc - camera.translation) @ camera.rotation


@dataclass
class NoiseConfig:
    pixel_sigma: float = 0.5
    dropout_prob: float = 0.05
    stream_id: int = 0

    def __post_init__(self):
        if self.pixel_sigma < 0:
            raise ValueError("pixel_sigma must be nonnegative")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must lie in [0, 1]")


@dataclass
class MarkerFlow:
    """Paired initial/current marker pixels with validity, fixed row count."""

    initial: np.ndarray
    current: np.ndarray
    valid: np.ndarray

    @property
    def displacement(self) -> np.ndarray:
        return self.current - self.initial

    def as_array(self) -> np.ndarray:
        """(2, N, 2) stacked float32 view used by observation payloads."""
        return np.stack([self.initial, self.current]).astype(np.float32)


def marker_flow_observation(initial_px, current_px, noise: NoiseConfig, rng,
                            size: int = 128, base_valid=None) -> MarkerFlow:
    """Noisy fixed-size marker flow.

    Gaussian pixel noise is added to the current positions; dropped markers
    keep their initial coordinates and are flagged invalid.  When the marker
    count differs from ``size`` the set is padded cyclically or subsampled
    with a seed-reproducible draw.
    """
    initial_px = np.asarray(initial_px, dtype=np.float64)
    current_px = np.asarray(current_px, dtype=np.float64)
    n = len(initial_px)
    valid = np.ones(n, dtype=bool) if base_valid is None else np.array(base_valid, dtype=bool)

    current = current_px.copy()
    if noise.pixel_sigma > 0:
        current += noise.pixel_sigma * rng.standard_normal(current.shape)
    if noise.dropout_prob > 0:
        dropped = rng.random(n) < noise.dropout_prob
        current[dropped] = initial_px[dropped]
        valid &= ~dropped

    if n == size:
        sel = np.arange(n)
    elif n > size:
        sel = np.sort(rng.choice(n, size=size, replace=False))
    else:
        sel = np.arange(size) % n
    return MarkerFlow(initial_px[sel].copy(), current[sel], valid[sel].copy())


def surface_diff(current_points, initial_points) -> float:
    """Mean Euclidean drift of surface points from their reference (meters)."""
    c = np.atleast_2d(current_points)
    i = np.atleast_2d(initial_points)
    return float(np.mean(np.linalg.norm(c - i, axis=1)))


class ContactState(Enum):
    NO_CONTACT = "no_contact"
    CONTACT = "contact"
    EXCESSIVE_FORCE = "excessive_force"


def detect_contact(flow: MarkerFlow, mean_thresh: float, max_thresh: float):
    """Classify a flow by its valid-marker displacement magnitudes.

    Returns ``(state, all_invalid)``; with no valid markers the state is
    NO_CONTACT and the diagnostic flag is set.
    """
    disp = np.linalg.norm(flow.displacement[flow.valid], axis=1)
    if disp.size == 0:
        return ContactState.NO_CONTACT, True
    if float(np.max(disp)) > max_thresh:
        return ContactState.EXCESSIVE_FORCE, False
    if float(np.mean(disp)) < mean_thresh:
        return ContactState.NO_CONTACT, False
    return ContactState.CONTACT, False
