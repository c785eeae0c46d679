"""Tetrahedral gel meshes, surface extraction, and marker-to-facet binding.

The sensing pad of the simulated sensor is a tetrahedralized box (or a
user-supplied volumetric mesh).  The face glued to the sensor shell is the
constrained (Dirichlet) set; the opposite face carries the marker dots.
Everything here is in SI meters, in the gel's local frame: x along the long
base edge, y along the short one, z through the thickness with the sensing
face at z = -thickness/2 and the shell face at z = +thickness/2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvertedTetError,
    MarkerOutOfBoundsError,
    MeshFormatError,
    NonManifoldBoundaryError,
)

# Corner-index patterns of the six-tet (Kuhn) decomposition of a hex cell.
# All share the main diagonal, so face diagonals match between neighbours.
_CUBE_TETS = np.array(
    [
        [0, 1, 3, 7],
        [0, 3, 2, 7],
        [0, 2, 6, 7],
        [0, 6, 4, 7],
        [0, 4, 5, 7],
        [0, 5, 1, 7],
    ],
    dtype=np.int64,
)

# Faces of tet (v0,v1,v2,v3), wound so normals point away from the interior
# when the tet has positive signed volume.
_TET_FACES = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]], dtype=np.int64)


def tet_volumes(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Signed volumes of each tetrahedron."""
    v = vertices[tets]
    d1 = v[:, 1] - v[:, 0]
    d2 = v[:, 2] - v[:, 0]
    d3 = v[:, 3] - v[:, 0]
    return np.einsum("ij,ij->i", np.cross(d1, d2), d3) / 6.0


@dataclass
class TetMesh:
    """Tetrahedral volume mesh with its oriented boundary and special vertex sets.

    Attributes
    ----------
    vertices : (n, 3) float array of rest positions, meters.
    tets : (m, 4) int array, positively oriented.
    surface_tris : (k, 3) int array, outward-oriented boundary triangles.
    constrained_set : sorted int array of shell-attached vertex indices.
    marker_surface_tris : subset of surface_tris eligible for marker binding.
    """

    vertices: np.ndarray
    tets: np.ndarray
    surface_tris: np.ndarray = field(default=None)
    constrained_set: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    marker_surface_tris: np.ndarray = field(default=None)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.tets = np.asarray(self.tets, dtype=np.int64)
        if self.surface_tris is None:
            self.surface_tris = extract_surface(self.vertices, self.tets)
        self.surface_tris = np.asarray(self.surface_tris, dtype=np.int64)
        self.constrained_set = np.unique(np.asarray(self.constrained_set, dtype=np.int64))
        if self.marker_surface_tris is None:
            self.marker_surface_tris = np.empty((0, 3), dtype=np.int64)
        self.marker_surface_tris = np.asarray(self.marker_surface_tris, dtype=np.int64)
        self._surface_edges = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def surface_edges(self) -> np.ndarray:
        """Unique undirected edges of the boundary triangulation."""
        if self._surface_edges is None:
            t = self.surface_tris
            e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
            e = np.sort(e, axis=1)
            self._surface_edges = np.unique(e, axis=0)
        return self._surface_edges

    def validate(self):
        """Check the structural invariants; raises on violation."""
        vols = tet_volumes(self.vertices, self.tets)
        if np.any(vols <= 0):
            bad = int(np.argmin(vols))
            raise InvertedTetError(f"tet {bad} has signed volume {vols[bad]:.3e}")
        recomputed = extract_surface(self.vertices, self.tets)
        if _face_key_set(recomputed) != _face_key_set(self.surface_tris):
            raise NonManifoldBoundaryError("surface_tris is not the boundary of the tet complex")
        marker_verts = np.unique(self.marker_surface_tris)
        if np.intersect1d(marker_verts, self.constrained_set).size:
            raise NonManifoldBoundaryError("constrained set overlaps the marker surface")


def _face_key_set(tris: np.ndarray):
    return {tuple(sorted(t)) for t in np.asarray(tris).tolist()}


def extract_surface(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Outward-oriented boundary triangles of the tet complex.

    Every interior face is shared by exactly two tets; boundary faces appear
    once.  Raises if a face is shared by three or more tets.
    """
    tets = np.asarray(tets, dtype=np.int64)
    faces = tets[:, _TET_FACES.reshape(-1)].reshape(-1, 3)
    keys = np.sort(faces, axis=1)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    if np.any(counts > 2):
        raise NonManifoldBoundaryError("a face is shared by more than two tets")
    boundary = faces[counts[inverse] == 1]
    return boundary


@dataclass
class GelSpec:
    """Box-gel generation parameters (stock sensor pad by default)."""

    base_x: float = 0.02525
    base_y: float = 0.02075
    thickness: float = 0.004
    subdivisions: tuple = (8, 6, 2)

    def validate(self):
        if min(self.base_x, self.base_y, self.thickness) <= 0:
            raise ValueError("gel dimensions must be positive")
        if min(self.subdivisions) < 1:
            raise ValueError("subdivisions must be >= 1 in each axis")


def generate_gel_mesh(spec: GelSpec) -> TetMesh:
    """Uniformly subdivided box gel.

    The shell-attachment face (z = +thickness/2) becomes the constrained
    set; the sensing face (z = -thickness/2) becomes the marker surface.
    """
    spec.validate()
    nx, ny, nz = spec.subdivisions
    xs = np.linspace(-spec.base_x / 2, spec.base_x / 2, nx + 1)
    ys = np.linspace(-spec.base_y / 2, spec.base_y / 2, ny + 1)
    zs = np.linspace(-spec.thickness / 2, spec.thickness / 2, nz + 1)
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    vertices = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    cells = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                corners = np.array(
                    [
                        vid(i, j, k),
                        vid(i + 1, j, k),
                        vid(i, j + 1, k),
                        vid(i + 1, j + 1, k),
                        vid(i, j, k + 1),
                        vid(i + 1, j, k + 1),
                        vid(i, j + 1, k + 1),
                        vid(i + 1, j + 1, k + 1),
                    ]
                )
                cells.append(corners[_CUBE_TETS])
    tets = np.concatenate(cells)

    vols = tet_volumes(vertices, tets)
    flip = vols < 0
    tets[flip] = tets[flip][:, [1, 0, 2, 3]]

    surface = extract_surface(vertices, tets)
    zb = spec.thickness / 2
    constrained = np.flatnonzero(np.abs(vertices[:, 2] - zb) < 1e-12)
    on_sensing = np.abs(vertices[:, 2] + zb) < 1e-12
    marker_tris = surface[np.all(on_sensing[surface], axis=1)]
    mesh = TetMesh(vertices, tets, surface, constrained, marker_tris)
    mesh.validate()
    return mesh


@dataclass
class BoxSelector:
    """Axis-aligned box predicate used to pick constrained vertices."""

    lo: np.ndarray
    hi: np.ndarray

    def __call__(self, points: np.ndarray) -> np.ndarray:
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        return np.all((points >= lo) & (points <= hi), axis=1)


def save_tet_mesh(mesh: TetMesh, path):
    """Write the line-oriented ``tetmesh v1`` format (meters, 0-based indices)."""
    with open(path, "w") as f:
        f.write("tetmesh v1 unit=m\n")
        for v in mesh.vertices:
            f.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for t in mesh.tets:
            f.write(f"t {t[0]} {t[1]} {t[2]} {t[3]}\n")
        for c in mesh.constrained_set:
            f.write(f"c {c}\n")


def load_tet_mesh(path, constrained_selector=None) -> TetMesh:
    """Read a ``tetmesh v1`` file and validate it.

    ``constrained_selector``, when given, overrides any ``c`` lines in the
    file; it is called with the vertex array and must return a boolean mask.
    """
    vertices, tets, constrained = [], [], []
    with open(path) as f:
        header = f.readline().strip()
        if not header.startswith("tetmesh v1"):
            raise MeshFormatError(f"unrecognized header: {header!r}")
        for ln, line in enumerate(f, start=2):
            parts = line.split()
            if not parts or parts[0] == "#":
                continue
            try:
                if parts[0] == "v":
                    vertices.append([float(p) for p in parts[1:4]])
                elif parts[0] == "t":
                    tets.append([int(p) for p in parts[1:5]])
                elif parts[0] == "c":
                    constrained.append(int(parts[1]))
                else:
                    raise ValueError(f"unknown record {parts[0]!r}")
            except (ValueError, IndexError) as exc:
                raise MeshFormatError(f"line {ln}: {exc}") from exc
    if not vertices or not tets:
        raise MeshFormatError("file contains no vertices or no tets")
    vertices = np.asarray(vertices, dtype=np.float64)
    tets = np.asarray(tets, dtype=np.int64)
    if tets.min() < 0 or tets.max() >= len(vertices):
        raise MeshFormatError("tet index out of range")

    vols = tet_volumes(vertices, tets)
    if np.any(vols <= 0):
        bad = int(np.argmin(vols))
        raise InvertedTetError(f"tet {bad} has signed volume {vols[bad]:.3e}")

    surface = extract_surface(vertices, tets)
    if constrained_selector is not None:
        constrained = np.flatnonzero(constrained_selector(vertices))
    constrained = np.unique(np.asarray(constrained, dtype=np.int64))
    on_marker = np.ones(len(vertices), dtype=bool)
    on_marker[constrained] = False
    marker_tris = surface[np.all(on_marker[surface], axis=1)]
    mesh = TetMesh(vertices, tets, surface, constrained, marker_tris)
    mesh.validate()
    return mesh


@dataclass
class MarkerGridSpec:
    """Regular marker grid on the sensing face: ``cols`` columns along x."""

    rows: int = 7
    cols: int = 9
    spacing: float = 0.0025
    center: tuple = (0.0, 0.0)

    def points(self, z: float) -> np.ndarray:
        cx, cy = self.center
        xs = (np.arange(self.cols) - (self.cols - 1) / 2) * self.spacing + cx
        ys = (np.arange(self.rows) - (self.rows - 1) / 2) * self.spacing + cy
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        pts = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, z)], axis=1)
        return pts


@dataclass
class MarkerBinding:
    """Per-marker facet index plus barycentric weights.

    ``facets`` indexes into ``mesh.marker_surface_tris``; rest positions are
    reproduced as the weighted sum of the facet's vertices.
    """

    facets: np.ndarray
    weights: np.ndarray
    rest_points: np.ndarray

    @property
    def n_markers(self) -> int:
        return len(self.facets)


def _closest_point_barycentric(p, a, b, c):
    """Barycentric coordinates of the closest point to ``p`` on triangle abc."""
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.dot(ab, ap)
    d2 = np.dot(ac, ap)
    if d1 <= 0 and d2 <= 0:
        return np.array([1.0, 0.0, 0.0])
    bp = p - b
    d3 = np.dot(ab, bp)
    d4 = np.dot(ac, bp)
    if d3 >= 0 and d4 <= d3:
        return np.array([0.0, 1.0, 0.0])
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        return np.array([1.0 - v, v, 0.0])
    cp = p - c
    d5 = np.dot(ab, cp)
    d6 = np.dot(ac, cp)
    if d6 >= 0 and d5 <= d6:
        return np.array([0.0, 0.0, 1.0])
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        return np.array([1.0 - w, 0.0, w])
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return np.array([0.0, 1.0 - w, w])
    denom = va + vb + vc
    v = vb / denom
    w = vc / denom
    return np.array([1.0 - v - w, v, w])


def bind_markers(mesh: TetMesh, grid: MarkerGridSpec, max_distance: float = 1e-6) -> MarkerBinding:
    """Bind each grid point to the facet containing its closest-point projection.

    Raises :class:`MarkerOutOfBoundsError` (naming the marker) when a point
    projects farther than ``max_distance`` from every marker-surface facet.
    """
    if mesh.marker_surface_tris.size == 0:
        raise MarkerOutOfBoundsError(0, "mesh has no marker surface")
    # grid points live on the sensing face, the lowest-z marker surface
    z = mesh.vertices[np.unique(mesh.marker_surface_tris), 2].min()
    pts = grid.points(z)
    tri_verts = mesh.vertices[mesh.marker_surface_tris]

    facets = np.empty(len(pts), dtype=np.int64)
    weights = np.empty((len(pts), 3), dtype=np.float64)
    for i, p in enumerate(pts):
        best = (np.inf, -1, None)
        for f, (a, b, c) in enumerate(tri_verts):
            w = _closest_point_barycentric(p, a, b, c)
            q = w[0] * a + w[1] * b + w[2] * c
            d = np.linalg.norm(p - q)
            if d < best[0]:
                best = (d, f, w)
        dist, f, w = best
        if dist > max_distance:
            raise MarkerOutOfBoundsError(i, f"marker {i} is {dist:.2e} m from the marker surface")
        w = np.clip(w, 0.0, None)
        weights[i] = w / w.sum()
        facets[i] = f
    rest = np.einsum("ij,ijk->ik", weights, mesh.vertices[mesh.marker_surface_tris[facets]])
    return MarkerBinding(facets, weights, rest)
