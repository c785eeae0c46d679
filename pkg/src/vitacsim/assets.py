"""Procedural task assets: prism pegs with matching holes, keys and locks.

Pegs are convex prisms; their holes are the same cross-section grown by the
configured clearance, cut through a rectangular block.  Keys are a bar with
four downward teeth; locks are box compounds whose pockets mirror the teeth.
Every asset carries a point-in-solid predicate so penetration checks in tests
do not depend on the contact code under test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PEG_SHAPES = ("square", "hexagon", "rectangle")
KEY_TEETH_MM = (
    (2.0, 3.0, 1.0, 2.0),
    (1.0, 2.0, 3.0, 2.0),
    (3.0, 1.0, 2.0, 1.0),
    (2.0, 2.0, 3.0, 1.0),
)
KEY_TOOTH_X_MM = (-13.5, -4.5, 4.5, 13.5)


@dataclass
class AssetMesh:
    """Triangulated closed surface plus a solid-membership oracle."""

    vertices: np.ndarray
    triangles: np.ndarray
    tri_instance_ids: np.ndarray = None
    contains: callable = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        if self.tri_instance_ids is None:
            self.tri_instance_ids = np.zeros(len(self.triangles), dtype=np.int64)


# -- cross sections ---------------------------------------------------------


def peg_polygon(shape_id: int, clearance: float = 0.0) -> np.ndarray:
    """CCW cross-section of a peg (or its hole when ``clearance`` > 0)."""
    if shape_id == 0:  # square, 8 mm across flats
        a = 0.004 + clearance
        return np.array([[-a, -a], [a, -a], [a, a], [-a, a]])
    if shape_id == 1:  # hexagon, 8 mm across flats; flats face +-y for gripping
        apothem = 0.004 + clearance
        r = apothem / math.cos(math.pi / 6)
        ang = np.arange(6) * math.pi / 3
        return np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)
    if shape_id == 2:  # rectangle 12 x 8 mm
        ax, ay = 0.006 + clearance, 0.004 + clearance
        return np.array([[-ax, -ay], [ax, -ay], [ax, ay], [-ax, ay]])
    raise ValueError(f"unknown peg shape id {shape_id}")


def polygon_contains(poly: np.ndarray, xy: np.ndarray, tol=0.0) -> np.ndarray:
    """Inside test for a convex CCW polygon (edge-inclusive within tol)."""
    xy = np.atleast_2d(xy)
    inside = np.ones(len(xy), dtype=bool)
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        edge = b - a
        normal = np.array([-edge[1], edge[0]])  # inward for CCW
        inside &= (xy - a) @ normal >= -tol * np.linalg.norm(normal)
    return inside


# -- primitive meshes -------------------------------------------------------


def fan_triangulate(loop_ids):
    ids = list(loop_ids)
    return [[ids[0], ids[i], ids[i + 1]] for i in range(1, len(ids) - 1)]


def make_prism(polygon: np.ndarray, z0: float, z1: float, instance_id: int = 0) -> AssetMesh:
    """Closed prism extruded along z from a convex CCW polygon."""
    n = len(polygon)
    bottom = np.concatenate([polygon, np.full((n, 1), z0)], axis=1)
    top = np.concatenate([polygon, np.full((n, 1), z1)], axis=1)
    verts = np.concatenate([bottom, top])
    tris = []
    tris += [t[::-1] for t in fan_triangulate(range(n))]  # bottom faces down
    tris += fan_triangulate(range(n, 2 * n))  # top faces up
    for i in range(n):
        j = (i + 1) % n
        tris.append([i, j, n + j])
        tris.append([i, n + j, n + i])
    poly = polygon.copy()

    def contains(points):
        points = np.atleast_2d(points)
        in_z = (points[:, 2] > z0) & (points[:, 2] < z1)
        return in_z & polygon_contains(poly, points[:, :2])

    return AssetMesh(verts, np.asarray(tris), np.full(len(tris), instance_id), contains)


def make_box(lo, hi, instance_id: int = 0) -> AssetMesh:
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    poly = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    mesh = make_prism(poly, z0, z1, instance_id)

    def contains(points):
        points = np.atleast_2d(points)
        return np.all((points > lo) & (points < hi), axis=1)

    mesh.contains = contains
    return mesh


def merge_meshes(meshes) -> AssetMesh:
    """Concatenate surfaces; solid membership is the union of the parts."""
    offsets = np.cumsum([0] + [len(m.vertices) for m in meshes[:-1]])
    verts = np.concatenate([m.vertices for m in meshes])
    tris = np.concatenate([m.triangles + off for m, off in zip(meshes, offsets)])
    ids = np.concatenate([m.tri_instance_ids for m in meshes])
    parts = [m.contains for m in meshes]

    def contains(points):
        points = np.atleast_2d(points)
        out = np.zeros(len(points), dtype=bool)
        for c in parts:
            if c is not None:
                out |= c(points)
        return out

    return AssetMesh(verts, tris, ids, contains)


def _ring_triangulate(outer: np.ndarray, inner: np.ndarray):
    """Triangulate the region between two convex CCW loops around the origin.

    Both loops must be star-shaped about the origin with the inner loop
    strictly inside the outer one; triangles are emitted CCW.
    """
    ao = np.arctan2(outer[:, 1], outer[:, 0])
    ai = np.arctan2(inner[:, 1], inner[:, 0])
    io = int(np.argmin(ao))
    ii = int(np.argmin(ai))
    no, ni = len(outer), len(inner)
    tris = []
    co, ci = 0, 0

    # unrolled angles, strictly increasing over one turn
    oa = [ao[(io + k) % no] for k in range(no)]
    ia = [ai[(ii + k) % ni] for k in range(ni)]
    for arr in (oa, ia):
        for k in range(1, len(arr)):
            while arr[k] <= arr[k - 1]:
                arr[k] += 2 * math.pi
    oa.append(oa[0] + 2 * math.pi)
    ia.append(ia[0] + 2 * math.pi)

    while co < no or ci < ni:
        o_idx = (io + co) % no
        i_idx = (ii + ci) % ni
        advance_outer = co < no and (ci >= ni or oa[co + 1] <= ia[ci + 1])
        if advance_outer:
            o_next = (io + co + 1) % no
            tris.append([o_idx, o_next, len(outer) + i_idx])
            co += 1
        else:
            i_next = (ii + ci + 1) % ni
            tris.append([o_idx, len(outer) + i_next, len(outer) + i_idx])
            ci += 1
    return tris


def make_hole_block(hole_polygon: np.ndarray, half_x: float, half_y: float,
                    depth: float, block_id: int = 1, wall_id: int = 3) -> AssetMesh:
    """Rectangular block with a through-hole prism cut out, top face at z = 0."""
    outer = np.array([[half_x, half_y], [-half_x, half_y], [-half_x, -half_y], [half_x, -half_y]])
    inner = hole_polygon
    no, ni = len(outer), len(inner)
    top = np.concatenate(
        [np.concatenate([outer, np.zeros((no, 1))], axis=1),
         np.concatenate([inner, np.zeros((ni, 1))], axis=1)]
    )
    bot = top.copy()
    bot[:, 2] = -depth
    verts = np.concatenate([top, bot])
    ring = np.asarray(_ring_triangulate(outer, inner))
    tris = list(ring)  # top, CCW seen from +z
    tris += [t[::-1] + no + ni for t in ring]  # bottom, flipped
    ids = [block_id] * (2 * len(ring))
    # hole walls (inward-facing normals): connect inner loops
    for i in range(ni):
        j = (i + 1) % ni
        a, b = no + i, no + j
        tris.append([a, b, b + no + ni])
        tris.append([a, b + no + ni, a + no + ni])
        ids += [wall_id, wall_id]
    # outer walls
    for i in range(no):
        j = (i + 1) % no
        tris.append([j, i, i + no + ni])
        tris.append([j, i + no + ni, j + no + ni])
        ids += [block_id, block_id]
    poly = inner.copy()

    def contains(points):
        points = np.atleast_2d(points)
        in_block = (
            (np.abs(points[:, 0]) < half_x)
            & (np.abs(points[:, 1]) < half_y)
            & (points[:, 2] > -depth)
            & (points[:, 2] < 0.0)
        )
        return in_block & ~polygon_contains(poly, points[:, :2], tol=1e-12)

    return AssetMesh(verts, np.asarray(tris), np.asarray(ids), contains)


# -- task assets ------------------------------------------------------------


def generate_peg(shape_id: int, length: float = 0.030, instance_id: int = 2) -> AssetMesh:
    """Prism peg standing on z in [0, length] in its body frame."""
    mesh = make_prism(peg_polygon(shape_id), 0.0, length, instance_id)
    mesh.metadata = {"shape_id": shape_id, "length": length}
    return mesh


def generate_hole_block(shape_id: int, clearance: float = 0.0003, depth: float = 0.015,
                        half_x: float = 0.020, half_y: float = 0.020,
                        block_id: int = 1, wall_id: int = 3) -> AssetMesh:
    mesh = make_hole_block(peg_polygon(shape_id, clearance), half_x, half_y, depth,
                           block_id, wall_id)
    mesh.metadata = {"shape_id": shape_id, "clearance": clearance, "depth": depth}
    return mesh


def generate_key(key_id: int, instance_id: int = 2) -> AssetMesh:
    """Bar with four teeth hanging below; bar bottom at z = 0 in body frame."""
    if not 0 <= key_id < len(KEY_TEETH_MM):
        raise ValueError(f"unknown key id {key_id}")
    heights = [h * 1e-3 for h in KEY_TEETH_MM[key_id]]
    bar = make_box([-0.018, -0.002, 0.0], [0.018, 0.002, 0.005], instance_id)
    parts = [bar]
    for x_mm, h in zip(KEY_TOOTH_X_MM, heights):
        x = x_mm * 1e-3
        parts.append(make_box([x - 0.0025, -0.002, -h], [x + 0.0025, 0.002, 0.0], instance_id))
    mesh = merge_meshes(parts)
    mesh.metadata = {
        "key_id": key_id,
        "teeth_heights": heights,
        "teeth_x": [x * 1e-3 for x in KEY_TOOTH_X_MM],
        # tooth tip reference points in body frame
        "tooth_tips": np.array([[x * 1e-3, 0.0, -h] for x, h in zip(KEY_TOOTH_X_MM, heights)]),
    }
    return mesh


def generate_lock_block(key_id: int, clearance: float = 0.0003,
                        half_x: float = 0.025, half_y: float = 0.010,
                        instance_id: int = 1, pocket_slack: float = 0.001) -> AssetMesh:
    """Box compound with one pocket per tooth; top face at z = 0."""
    if not 0 <= key_id < len(KEY_TEETH_MM):
        raise ValueError(f"unknown key id {key_id}")
    heights = [h * 1e-3 for h in KEY_TEETH_MM[key_id]]
    depth = max(heights) + pocket_slack + 0.003
    wy = 0.002 + clearance  # pocket half-width in y
    wx = 0.0025 + clearance  # pocket half-length in x
    xs = [x * 1e-3 for x in KEY_TOOTH_X_MM]

    parts = [
        make_box([-half_x, wy, -depth], [half_x, half_y, 0.0], instance_id),
        make_box([-half_x, -half_y, -depth], [half_x, -wy, 0.0], instance_id),
    ]
    # segments between/outside the pockets along x, within the pocket lane
    lane_segments = []
    lo = -half_x
    for x in xs:
        lane_segments.append((lo, x - wx))
        lo = x + wx
    lane_segments.append((lo, half_x))
    for a, b in lane_segments:
        if b - a > 1e-9:
            parts.append(make_box([a, -wy, -depth], [b, wy, 0.0], instance_id))
    # pocket floors
    for x, h in zip(xs, heights):
        parts.append(make_box([x - wx, -wy, -depth], [x + wx, wy, -(h + pocket_slack)], instance_id))
    mesh = merge_meshes(parts)
    mesh.metadata = {
        "key_id": key_id,
        "pocket_depths": [h + pocket_slack for h in heights],
        "pocket_x": xs,
        "depth": depth,
    }
    return mesh


def generate_assets(task: str, shape_id: int, clearance: float = 0.0003) -> dict:
    """Meshes and ground-truth metadata for one task scene.

    peg/fusion: ``object`` (the peg) plus hole blocks; lock: ``object`` (the
    key) plus its lock block.  Positions are body-frame; environments place
    the pieces via rigid poses.
    """
    if task == "peg":
        if not 0 <= shape_id < len(PEG_SHAPES):
            raise ValueError(f"unknown peg shape id {shape_id}")
        return {
            "object": generate_peg(shape_id),
            "fixtures": [generate_hole_block(shape_id, clearance)],
            "fixture_poses": [np.zeros(3)],
        }
    if task == "lock":
        return {
            "object": generate_key(shape_id),
            "fixtures": [generate_lock_block(shape_id, clearance)],
            "fixture_poses": [np.zeros(3)],
        }
    if task == "fusion":
        if not 0 <= shape_id < len(PEG_SHAPES):
            raise ValueError(f"unknown peg shape id {shape_id}")
        other = (shape_id + 1) % len(PEG_SHAPES)
        matching = generate_hole_block(shape_id, clearance, half_x=0.015, half_y=0.018, wall_id=3)
        decoy = generate_hole_block(other, clearance, half_x=0.015, half_y=0.018, wall_id=4)
        return {
            "object": generate_peg(shape_id),
            "fixtures": [matching, decoy],
            "fixture_poses": [np.array([-0.015, 0.0, 0.0]), np.array([0.015, 0.0, 0.0])],
            "matching_hole_center": np.array([-0.015, 0.0]),
        }
    raise ValueError(f"unknown task {task!r}")
