"""Quasi-static incremental-potential solves with barrier contact.

Each substep prescribes new positions for the shell-attached gel vertices and
then drives every remaining degree of freedom (free gel vertices plus the
translations of free rigid bodies) to a stationary point of

    elastic + barrier + proximity(damping) + tether

using projected Newton with a backtracking line search whose step length is
capped by continuous collision detection, so accepted iterates are always
separation-positive and inversion-free.

Contact candidates are enumerated with a vectorized AABB-overlap broadphase
over cross-body point-triangle and edge-edge pairs.  All pairs live in one
concatenated vertex array with per-state index caches, so each Newton
iteration evaluates every distance in two batched calls.  The enumeration
order is deterministic, which keeps whole episodes bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import NonConvergenceError
from ..geometry import TetMesh, tet_volumes
from .barrier import barrier_grad, barrier_hess, barrier_value
from .ccd import edge_edge_toi, point_triangle_toi
from .distances import point_triangle_closest, segment_segment_closest
from .elasticity import ElasticModel, MaterialParams

_TRUST_RADIUS = 1e-3  # meters, inf-norm cap on one Newton proposal


@dataclass
class SolverConfig:
    barrier_stiffness: float = 1e4
    barrier_distance: float = 1e-4
    newton_tol: float = 1e-6
    max_newton_iters: int = 80
    ccd_safety: float = 0.9
    dt: float = 0.1

    def __post_init__(self):
        if self.barrier_distance <= 0:
            raise ValueError("barrier_distance must be positive")
        if not 0.0 < self.ccd_safety < 1.0:
            raise ValueError("ccd_safety must lie in (0, 1)")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


class RigidBody:
    """Triangulated rigid collision body with an optional free translation.

    ``free=True`` exposes the body's translation as three solver unknowns
    (rotation stays kinematic); otherwise the pose is fixed during a solve.
    """

    def __init__(self, name, vertices, triangles, free=False, instance_id=0,
                 tri_instance_ids=None, contains=None):
        self.name = name
        self.rest_vertices = np.asarray(vertices, dtype=np.float64)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.free = bool(free)
        self.instance_id = instance_id
        self.tri_instance_ids = (
            np.full(len(self.triangles), instance_id, dtype=np.int64)
            if tri_instance_ids is None
            else np.asarray(tri_instance_ids, dtype=np.int64)
        )
        self.contains = contains  # optional point-in-volume oracle for tests
        self.rotation = np.eye(3)
        self.translation = np.zeros(3)
        e = np.concatenate(
            [self.triangles[:, [0, 1]], self.triangles[:, [1, 2]], self.triangles[:, [2, 0]]]
        )
        self.edges = np.unique(np.sort(e, axis=1), axis=0)

    def set_pose(self, rotation=None, translation=None):
        if rotation is not None:
            self.rotation = np.asarray(rotation, dtype=np.float64)
        if translation is not None:
            self.translation = np.asarray(translation, dtype=np.float64)

    def world_vertices(self, translation=None):
        t = self.translation if translation is None else translation
        return self.rest_vertices @ self.rotation.T + t

    def contains_world(self, points):
        """Body-frame solid membership evaluated at world points."""
        points = np.atleast_2d(points)
        if self.contains is None:
            return np.zeros(len(points), dtype=bool)
        return self.contains((points - self.translation) @ self.rotation)


@dataclass
class DeformableBody:
    mesh: TetMesh
    material: MaterialParams
    positions: np.ndarray = None

    def __post_init__(self):
        if self.positions is None:
            self.positions = self.mesh.vertices.copy()
        self.positions = np.array(self.positions, dtype=np.float64)
        self.model = ElasticModel(self.mesh, self.material)
        self.surface_vertices = np.unique(self.mesh.surface_tris)


@dataclass
class Tether:
    """Zero-rest-length spring between a free rigid's translation and a target."""

    rigid_index: int
    target: np.ndarray
    stiffness: float = 500.0


@dataclass
class SolveDiagnostics:
    iterations: int = 0
    residual: float = np.inf
    min_distance: float = np.inf
    kappa: float = 0.0
    energy_trace: list = field(default_factory=list)
    converged: bool = False


class SimState:
    """Deformable gels, rigid bodies, tethers, and the solver DOF layout."""

    def __init__(self, deformables=None, rigids=None, tethers=None, kappa=None):
        self.deformables = list(deformables or [])
        self.rigids = list(rigids or [])
        self.tethers = list(tethers or [])
        self.kappa = kappa
        self.last_solve = None
        self._geom = None

        self._dof_offsets = []
        off = 0
        for d in self.deformables:
            self._dof_offsets.append(off)
            off += 3 * d.mesh.n_vertices
        self._rigid_dof = {}
        for i, r in enumerate(self.rigids):
            if r.free:
                self._rigid_dof[i] = off
                off += 3
        self.n_dofs = off

    # -- DOF vector helpers -------------------------------------------------

    def get_vector(self):
        vec = np.empty(self.n_dofs)
        for d, off in zip(self.deformables, self._dof_offsets):
            vec[off : off + 3 * d.mesh.n_vertices] = d.positions.reshape(-1)
        for i, off in self._rigid_dof.items():
            vec[off : off + 3] = self.rigids[i].translation
        return vec

    def set_vector(self, vec):
        for d, off in zip(self.deformables, self._dof_offsets):
            d.positions = vec[off : off + 3 * d.mesh.n_vertices].reshape(-1, 3).copy()
        for i, off in self._rigid_dof.items():
            self.rigids[i].set_pose(translation=vec[off : off + 3].copy())

    def deformable_positions(self, vec, i):
        off = self._dof_offsets[i]
        n = self.deformables[i].mesh.n_vertices
        return vec[off : off + 3 * n].reshape(-1, 3)

    def rigid_translation(self, vec, i):
        if i in self._rigid_dof:
            off = self._rigid_dof[i]
            return vec[off : off + 3]
        return self.rigids[i].translation

    def free_dof_mask(self):
        mask = np.ones(self.n_dofs, dtype=bool)
        for d, off in zip(self.deformables, self._dof_offsets):
            idx = off + (3 * d.mesh.constrained_set[:, None] + np.arange(3)).reshape(-1)
            mask[idx] = False
        return mask

    # -- invariants ----------------------------------------------------------

    def all_tet_volumes(self, vec=None):
        vec = self.get_vector() if vec is None else vec
        vols = [
            tet_volumes(self.deformable_positions(vec, i), d.mesh.tets)
            for i, d in enumerate(self.deformables)
        ]
        return np.concatenate(vols) if vols else np.empty(0)

    def min_pair_distance(self, radius=1e-3):
        """Minimum separation over candidate pairs; lower-bounded by the query radius."""
        vec = self.get_vector()
        w = _world_verts(self, vec)
        pairs = _collect_pairs(self, w, radius)
        dmin = radius
        pt, ee = _eval_pairs(w, pairs)
        if len(pt["dist"]):
            dmin = min(dmin, float(np.min(pt["dist"])))
        if len(ee["dist"]):
            dmin = min(dmin, float(np.min(ee["dist"])))
        return dmin

    def min_static_gap(self, radius):
        """Minimum separation between any moving body and any fixed body.

        Lower-bounded by ``radius``: when no candidate pair exists within the
        query radius the gap is at least that large.
        """
        vec = self.get_vector()
        g = _geom(self)
        w = _world_verts(self, vec)
        pairs = _collect_pairs(self, w, radius)
        gap = radius
        for ev in _eval_pairs(w, pairs):
            if not len(ev["dist"]):
                continue
            touches_static = np.any(g.vert_static[ev["ends"]], axis=1)
            if np.any(touches_static):
                gap = min(gap, float(np.min(ev["dist"][touches_static])))
        return gap


# -- concatenated contact geometry ------------------------------------------


class _GeomCache:
    """Index structures over the concatenated vertex array; fixed per state."""

    def __init__(self, state: SimState):
        nd = len(state.deformables)
        offsets = []
        dof_cols = []
        static = []
        off = 0
        for i, d in enumerate(state.deformables):
            n = d.mesh.n_vertices
            offsets.append(off)
            dof_cols.append(state._dof_offsets[i] + 3 * np.arange(n, dtype=np.int64))
            static.append(np.zeros(n, dtype=bool))
            off += n
        for i, r in enumerate(state.rigids):
            n = len(r.rest_vertices)
            offsets.append(off)
            if r.free:
                dof_cols.append(np.full(n, state._rigid_dof[i], dtype=np.int64))
                static.append(np.zeros(n, dtype=bool))
            else:
                dof_cols.append(np.full(n, -1, dtype=np.int64))
                static.append(np.ones(n, dtype=bool))
            off += n
        self.n_verts = off
        self.offsets = offsets
        self.vert_dof = np.concatenate(dof_cols) if dof_cols else np.empty(0, dtype=np.int64)
        self.vert_static = np.concatenate(static) if static else np.empty(0, dtype=bool)

        self.points, self.tris, self.edges = [], [], []
        kinds = []
        for i, d in enumerate(state.deformables):
            o = offsets[i]
            self.points.append(d.surface_vertices + o)
            self.tris.append(d.mesh.surface_tris + o)
            self.edges.append(d.mesh.surface_edges + o)
            kinds.append("deformable")
        for j, r in enumerate(state.rigids):
            o = offsets[nd + j]
            self.points.append(np.arange(len(r.rest_vertices), dtype=np.int64) + o)
            self.tris.append(r.triangles + o)
            self.edges.append(r.edges + o)
            kinds.append("rigid-free" if r.free else "rigid-static")
        self.kinds = kinds

        combos = []
        nb = nd + len(state.rigids)
        for a in range(nd):
            for b in range(nd, nb):
                combos.append((a, b))
        for a in range(nd, nb):
            for b in range(a + 1, nb):
                if kinds[a] == "rigid-free" or kinds[b] == "rigid-free":
                    combos.append((a, b))
        self.combos = combos


def _geom(state: SimState) -> _GeomCache:
    if state._geom is None:
        state._geom = _GeomCache(state)
    return state._geom


def _world_verts(state: SimState, vec):
    g = _geom(state)
    nd = len(state.deformables)
    w = np.empty((g.n_verts, 3))
    for i, d in enumerate(state.deformables):
        o = g.offsets[i]
        w[o : o + d.mesh.n_vertices] = state.deformable_positions(vec, i)
    for j, r in enumerate(state.rigids):
        o = g.offsets[nd + j]
        w[o : o + len(r.rest_vertices)] = r.rest_vertices @ r.rotation.T + state.rigid_translation(vec, j)
    return w


from numba import njit


@njit(cache=True, fastmath=False)
def _aabb_kernel(lo_a, hi_a, lo_b, hi_b, margin):
    na, nb = lo_a.shape[0], lo_b.shape[0]
    count = 0
    for i in range(na):
        for j in range(nb):
            if (
                lo_a[i, 0] <= hi_b[j, 0] + margin and hi_a[i, 0] >= lo_b[j, 0] - margin
                and lo_a[i, 1] <= hi_b[j, 1] + margin and hi_a[i, 1] >= lo_b[j, 1] - margin
                and lo_a[i, 2] <= hi_b[j, 2] + margin and hi_a[i, 2] >= lo_b[j, 2] - margin
            ):
                count += 1
    ai = np.empty(count, dtype=np.int64)
    bi = np.empty(count, dtype=np.int64)
    k = 0
    for i in range(na):
        for j in range(nb):
            if (
                lo_a[i, 0] <= hi_b[j, 0] + margin and hi_a[i, 0] >= lo_b[j, 0] - margin
                and lo_a[i, 1] <= hi_b[j, 1] + margin and hi_a[i, 1] >= lo_b[j, 1] - margin
                and lo_a[i, 2] <= hi_b[j, 2] + margin and hi_a[i, 2] >= lo_b[j, 2] - margin
            ):
                ai[k] = i
                bi[k] = j
                k += 1
    return ai, bi


def _aabb_pairs(lo_a, hi_a, lo_b, hi_b, margin):
    """Index pairs whose inflated boxes overlap, in deterministic order."""
    if len(lo_a) == 0 or len(lo_b) == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    return _aabb_kernel(
        np.ascontiguousarray(lo_a), np.ascontiguousarray(hi_a),
        np.ascontiguousarray(lo_b), np.ascontiguousarray(hi_b), margin,
    )


_EMPTY_I = np.empty(0, dtype=np.int64)


def _collect_pairs(state: SimState, w, radius):
    """Candidate pairs within ``radius`` as concatenated global index arrays."""
    g = _geom(state)
    pt_p, pt_t = [], []
    ee_a, ee_b = [], []
    for a, b in g.combos:
        for src, dst in ((a, b), (b, a)):
            pids = g.points[src]
            tris = g.tris[dst]
            tv = w[tris]
            qi, ti = _aabb_pairs(w[pids], w[pids], tv.min(axis=1), tv.max(axis=1), radius)
            if len(qi):
                pt_p.append(pids[qi])
                pt_t.append(tris[ti])
        ea, eb = g.edges[a], g.edges[b]
        pa, pb = w[ea], w[eb]
        ai, bi = _aabb_pairs(pa.min(axis=1), pa.max(axis=1), pb.min(axis=1), pb.max(axis=1), radius)
        if len(ai):
            ee_a.append(ea[ai])
            ee_b.append(eb[bi])
    return {
        "pt_p": np.concatenate(pt_p) if pt_p else _EMPTY_I,
        "pt_tri": np.concatenate(pt_t) if pt_t else _EMPTY_I.reshape(0, 3),
        "ee_a": np.concatenate(ee_a) if ee_a else _EMPTY_I.reshape(0, 2),
        "ee_b": np.concatenate(ee_b) if ee_b else _EMPTY_I.reshape(0, 2),
    }


def _eval_pairs(w, pairs):
    """Distances, normals, endpoint weights, and endpoint ids for all pairs."""
    p_ids, tri = pairs["pt_p"], pairs["pt_tri"]
    if len(p_ids):
        p = w[p_ids]
        t0, t1, t2 = w[tri[:, 0]], w[tri[:, 1]], w[tri[:, 2]]
        dist, wt = point_triangle_closest(p, t0, t1, t2)
        closest = wt[:, :1] * t0 + wt[:, 1:2] * t1 + wt[:, 2:3] * t2
        delta = p - closest
        safe = np.where(dist > 0, dist, 1.0)
        pt = {
            "dist": dist,
            "normal": delta / safe[:, None],
            "coeff": np.concatenate([np.ones((len(p), 1)), -wt], axis=1),
            "ends": np.column_stack([p_ids, tri]),
            "points": np.stack([p, t0, t1, t2], axis=1),
        }
    else:
        pt = {"dist": np.empty(0), "ends": _EMPTY_I.reshape(0, 4)}
    ea, eb = pairs["ee_a"], pairs["ee_b"]
    if len(ea):
        a0, a1, b0, b1 = w[ea[:, 0]], w[ea[:, 1]], w[eb[:, 0]], w[eb[:, 1]]
        dist, s, t = segment_segment_closest(a0, a1, b0, b1)
        pa = a0 + s[:, None] * (a1 - a0)
        pb = b0 + t[:, None] * (b1 - b0)
        delta = pa - pb
        safe = np.where(dist > 0, dist, 1.0)
        ee = {
            "dist": dist,
            "normal": delta / safe[:, None],
            "coeff": np.stack([1.0 - s, s, -(1.0 - t), -t], axis=1),
            "ends": np.concatenate([ea, eb], axis=1),
            "points": np.stack([a0, a1, b0, b1], axis=1),
        }
    else:
        ee = {"dist": np.empty(0), "ends": _EMPTY_I.reshape(0, 4)}
    return pt, ee


# -- energy assembly -------------------------------------------------------


def _barrier_terms(evaluated, vert_dof, d_hat, kappa, n_dofs, want_derivatives=True):
    """Energy (always) and grad/Hessian triplets (optionally) of the barrier."""
    energy = 0.0
    grad = np.zeros(n_dofs) if want_derivatives else None
    rows, cols, vals = [], [], []
    for ev in evaluated:
        d = ev["dist"]
        if not len(d):
            continue
        energy += float(np.sum(barrier_value(d, d_hat, kappa)))
        if not want_derivatives:
            continue
        db = barrier_grad(d, d_hat, kappa)
        active = db != 0.0
        if not np.any(active):
            continue
        d_a = d[active]
        n_a = ev["normal"][active]
        c_a = ev["coeff"][active]
        dofs = vert_dof[ev["ends"][active]]
        gvec = c_a[:, :, None] * n_a[:, None, :]  # (m, 4, 3): d(dist)/d(endpoint)
        contrib = db[active, None, None] * gvec
        for k in range(4):
            dk = dofs[:, k]
            ok = dk >= 0
            if np.any(ok):
                idx = (dk[ok, None] + np.arange(3)).reshape(-1)
                np.add.at(grad, idx, contrib[ok, k].reshape(-1))
        m_act = len(d_a)
        ddb = barrier_hess(d_a, d_hat, kappa)
        flat = gvec.reshape(m_act, 12)
        h = ddb[:, None, None] * flat[:, :, None] * flat[:, None, :]
        # curvature of the distance itself (tangential stiffness), then
        # per-pair PSD projection of the 12x12 block
        tang = np.eye(3)[None] - n_a[:, :, None] * n_a[:, None, :]
        cc = c_a[:, :, None] * c_a[:, None, :]
        block = cc[:, :, :, None, None] * tang[:, None, None, :, :]  # (m,4,4,3,3)
        h += (db[active] / d_a)[:, None, None] * block.transpose(0, 1, 3, 2, 4).reshape(m_act, 12, 12)
        ww, v = np.linalg.eigh(h)
        ww = np.clip(ww, 0.0, None)
        h = np.matmul(v * ww[:, None, :], np.transpose(v, (0, 2, 1)))
        dof12 = (dofs[:, :, None] + np.arange(3)).reshape(m_act, 12)
        valid = np.repeat(dofs >= 0, 3, axis=1)
        r = np.repeat(dof12[:, :, None], 12, axis=2)
        c = np.repeat(dof12[:, None, :], 12, axis=1)
        m = valid[:, :, None] & valid[:, None, :]
        rows.append(r[m])
        cols.append(c[m])
        vals.append(h[m])
    if not want_derivatives:
        return energy
    return energy, grad, rows, cols, vals


def barrier_energy(state: SimState, d_hat=None, stiffness=None, vec=None):
    """Total barrier energy, gradient, and PSD Hessian over the state's DOFs."""
    d_hat = 1e-4 if d_hat is None else d_hat
    kappa = (state.kappa if state.kappa is not None else 1e4) if stiffness is None else stiffness
    vec = state.get_vector() if vec is None else vec
    w = _world_verts(state, vec)
    pairs = _collect_pairs(state, w, d_hat)
    evaluated = _eval_pairs(w, pairs)
    energy, grad, rows, cols, vals = _barrier_terms(
        evaluated, _geom(state).vert_dof, d_hat, kappa, state.n_dofs
    )
    if rows:
        hess = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(state.n_dofs, state.n_dofs),
        ).tocsr()
    else:
        hess = sp.csr_matrix((state.n_dofs, state.n_dofs))
    return energy, grad, hess


def _trial_energy(state, vec, refs, d_hat, kappa, dt, pairs):
    """Objective at ``vec`` using a fixed candidate superset; +inf if inverted."""
    e = 0.0
    for i, d in enumerate(state.deformables):
        pos = state.deformable_positions(vec, i)
        ei = d.model.energy(pos, allow_inversion=True)
        if not np.isfinite(ei):
            return np.inf
        e += ei
        if d.material.damping > 0:
            c = d.material.damping * d.model.vertex_mass / dt**2
            e += 0.5 * float(np.sum(c[:, None] * (pos - refs[i]) ** 2))
    for tether in state.tethers:
        t = state.rigid_translation(vec, tether.rigid_index)
        e += 0.5 * tether.stiffness * float(np.sum((t - tether.target) ** 2))
    w = _world_verts(state, vec)
    pt, ee = _eval_pairs(w, pairs)
    e += float(np.sum(barrier_value(pt["dist"], d_hat, kappa)))
    e += float(np.sum(barrier_value(ee["dist"], d_hat, kappa)))
    return e


def _elastic_pattern(state, i, fmap):
    """Cached reduced sparsity pattern of one body's element blocks."""
    cache = getattr(state, "_elastic_patterns", None)
    if cache is None:
        cache = state._elastic_patterns = {}
    if i not in cache:
        off = state._dof_offsets[i]
        model = state.deformables[i].model
        r = fmap[model.rows + off]
        c = fmap[model.cols + off]
        keep = (r >= 0) & (c >= 0)
        cache[i] = (keep, r[keep], c[keep])
    return cache[i]


def _assemble(state, vec, refs, d_hat, kappa, dt, elastic_cache=None, fmap=None, n_free=None,
              pairs=None):
    """Energy, full gradient, reduced Hessian, and min contact distance.

    ``elastic_cache`` (dict) reuses the PSD-projected element Hessians across
    Newton iterations of one solve; the gradient is always exact, so the line
    search still guarantees descent on the true objective.  The Hessian is
    assembled directly in the free-DOF system defined by ``fmap``.  ``pairs``
    may supply a candidate superset (anything farther than the barrier
    support contributes nothing).
    """
    n = state.n_dofs
    if fmap is None:
        fmap = np.arange(n, dtype=np.int64)
        n_free = n
    grad = np.zeros(n)
    energy = 0.0
    rows, cols, vals = [], [], []
    for i, d in enumerate(state.deformables):
        off = state._dof_offsets[i]
        pos = state.deformable_positions(vec, i)
        energy += d.model.energy(pos)
        g = d.model.gradient(pos)
        grad[off : off + g.size] += g.reshape(-1)
        if elastic_cache is not None and i in elastic_cache:
            h12 = elastic_cache[i]
        else:
            h12 = d.model.element_hessians(pos)
            if elastic_cache is not None:
                elastic_cache[i] = h12
        keep, r_red, c_red = _elastic_pattern(state, i, fmap)
        rows.append(r_red)
        cols.append(c_red)
        vals.append(h12.reshape(-1)[keep])
        if d.material.damping > 0:
            c = d.material.damping * d.model.vertex_mass / dt**2
            delta = pos - refs[i]
            energy += 0.5 * float(np.sum(c[:, None] * delta**2))
            grad[off : off + g.size] += (c[:, None] * delta).reshape(-1)
            didx = fmap[off + np.arange(3 * d.mesh.n_vertices)]
            ok = didx >= 0
            rows.append(didx[ok])
            cols.append(didx[ok])
            vals.append(np.repeat(c, 3)[ok])
    for tether in state.tethers:
        ri = tether.rigid_index
        if ri not in state._rigid_dof:
            continue
        off = state._rigid_dof[ri]
        t = vec[off : off + 3]
        delta = t - tether.target
        energy += 0.5 * tether.stiffness * float(np.sum(delta**2))
        grad[off : off + 3] += tether.stiffness * delta
        idx = fmap[off + np.arange(3)]
        ok = idx >= 0
        rows.append(idx[ok])
        cols.append(idx[ok])
        vals.append(np.full(int(ok.sum()), tether.stiffness))

    w = _world_verts(state, vec)
    if pairs is None:
        pairs = _collect_pairs(state, w, d_hat)
    evaluated = _eval_pairs(w, pairs)
    be, bg, brows, bcols, bvals = _barrier_terms(
        evaluated, _geom(state).vert_dof, d_hat, kappa, n
    )
    energy += be
    grad += bg
    for r, c, v in zip(brows, bcols, bvals):
        rr = fmap[r]
        cc = fmap[c]
        ok = (rr >= 0) & (cc >= 0)
        rows.append(rr[ok])
        cols.append(cc[ok])
        vals.append(v[ok])

    hess = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_free, n_free),
    ).tocsc()
    min_dist = np.inf
    for ev in evaluated:
        if len(ev["dist"]):
            min_dist = min(min_dist, float(np.min(ev["dist"])))
    return energy, grad, hess, min_dist


# -- CCD over a candidate direction ----------------------------------------


def _endpoint_displacements(ends, vert_dof, direction):
    dofs = vert_dof[ends]
    disp = np.zeros(ends.shape + (3,))
    ok = dofs >= 0
    if np.any(ok):
        disp[ok] = direction[(dofs[ok, None] + np.arange(3))]
    return disp


def ccd_max_step(state: SimState, direction, ccd_safety=0.9, d_hat=1e-4, vec=None,
                 pairs_out=None):
    """Largest safe fraction of ``direction``: min(1, safety * earliest TOI)."""
    vec = state.get_vector() if vec is None else vec
    direction = np.asarray(direction, dtype=np.float64)
    w = _world_verts(state, vec)
    max_disp = _max_endpoint_displacement(state, direction)
    radius = d_hat + 2.0 * max_disp
    pairs = _collect_pairs(state, w, radius)
    if pairs_out is not None:
        pairs_out.update(pairs)
    if not np.any(direction):
        return 1.0
    g = _geom(state)
    toi = 2.0
    pt, ee = _eval_pairs(w, pairs)
    if len(pt["dist"]):
        pts = pt["points"]
        disp = _endpoint_displacements(pt["ends"], g.vert_dof, direction)
        if np.any(disp):
            t = point_triangle_toi(
                pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3],
                disp[:, 0], disp[:, 1], disp[:, 2], disp[:, 3],
            )
            if len(t):
                toi = min(toi, float(np.min(t)))
    if len(ee["dist"]):
        pts = ee["points"]
        disp = _endpoint_displacements(ee["ends"], g.vert_dof, direction)
        if np.any(disp):
            t = edge_edge_toi(
                pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3],
                disp[:, 0], disp[:, 1], disp[:, 2], disp[:, 3],
            )
            if len(t):
                toi = min(toi, float(np.min(t)))
    if toi > 1.0:
        return 1.0
    return min(1.0, ccd_safety * toi)


def _max_endpoint_displacement(state, direction):
    m = 0.0
    for i, d in enumerate(state.deformables):
        off = state._dof_offsets[i]
        seg = direction[off : off + 3 * d.mesh.n_vertices].reshape(-1, 3)
        if len(seg):
            m = max(m, float(np.max(np.linalg.norm(seg, axis=1))))
    for i, off in state._rigid_dof.items():
        m = max(m, float(np.linalg.norm(direction[off : off + 3])))
    return m


# -- the solve -------------------------------------------------------------


def solve_quasi_static(state: SimState, dirichlet_targets, config: SolverConfig,
                       material: MaterialParams = None, initial_motion=None,
                       rigid_motion=False, assume_transported=False) -> SimState:
    """Move constrained vertices to their targets and equilibrate the rest.

    ``dirichlet_targets`` is a list with one (n_constrained, 3) array per
    deformable body.  ``initial_motion`` (full-DOF displacement) is an
    optional warm-start guess, typically the commanded rigid motion applied
    to every unknown; it is CCD-capped like any other step, so it only
    accelerates convergence.

    ``rigid_motion=True`` asserts that ``initial_motion`` is one common rigid
    transform of every unknown, target, and tether anchor.  A converged state
    transported that way is itself converged as long as no active contact
    pair involves a fixed body, in which case the solve returns without any
    Newton iterations.  ``assume_transported=True`` makes the same claim for
    the state as handed in (the caller already applied the transform).

    Raises :class:`NonConvergenceError` when the Newton budget is exhausted;
    on success ``state.last_solve`` holds diagnostics.
    """
    if state.kappa is None:
        state.kappa = config.barrier_stiffness
    d_hat = config.barrier_distance
    diag = SolveDiagnostics(kappa=state.kappa)
    vec = state.get_vector()
    refs = [state.deformable_positions(vec, i).copy() for i in range(len(state.deformables))]

    if assume_transported and _transported_equilibrium(state, vec, dirichlet_targets, d_hat, diag):
        diag.converged = True
        diag.kappa = state.kappa
        state.last_solve = diag
        return state

    if initial_motion is not None and np.any(initial_motion):
        alpha = ccd_max_step(state, initial_motion, config.ccd_safety, d_hat, vec=vec)
        alpha = _cap_by_inversion(state, vec, initial_motion, alpha)
        vec = vec + alpha * initial_motion
        if alpha >= 1.0 and rigid_motion and _transported_equilibrium(
            state, vec, dirichlet_targets, d_hat, diag
        ):
            state.set_vector(vec)
            diag.converged = True
            diag.kappa = state.kappa
            state.last_solve = diag
            return state

    # Walk the boundary vertices to their targets (usually one full pass).
    gap = 0.0
    equilibrated = False
    for _ in range(8):
        bdir = np.zeros_like(vec)
        gap = 0.0
        for i, d in enumerate(state.deformables):
            off = state._dof_offsets[i]
            cs = d.mesh.constrained_set
            cur = vec[off : off + 3 * d.mesh.n_vertices].reshape(-1, 3)[cs]
            delta = np.asarray(dirichlet_targets[i], dtype=np.float64) - cur
            if delta.size:
                gap = max(gap, float(np.max(np.abs(delta))))
            idx = (off + 3 * cs[:, None] + np.arange(3)).reshape(-1)
            bdir[idx] = delta.reshape(-1)
        if gap < 1e-15:
            break
        alpha = ccd_max_step(state, bdir, config.ccd_safety, d_hat, vec=vec)
        alpha = _cap_by_inversion(state, vec, bdir, alpha)
        vec = vec + alpha * bdir
        vec = _newton(state, vec, refs, config, diag)
        equilibrated = True
        if alpha >= 1.0:
            break
    else:
        raise NonConvergenceError(gap, diag.iterations, "boundary walk stalled")

    if not equilibrated:
        vec = _newton(state, vec, refs, config, diag)
    state.set_vector(vec)
    diag.kappa = state.kappa
    state.last_solve = diag
    return state


def _transported_equilibrium(state, vec, dirichlet_targets, d_hat, diag):
    """True when a rigidly transported converged state is still converged.

    Requires: the previous solve converged, no proximity damping, all
    boundary targets already reached, and no contact pair within the barrier
    support that involves a fixed body (relative geometry among co-moved
    bodies is preserved exactly, so their pair forces transform covariantly).
    """
    if state.last_solve is None or not state.last_solve.converged:
        return False
    if any(d.material.damping > 0 for d in state.deformables):
        return False
    for i, d in enumerate(state.deformables):
        cur = state.deformable_positions(vec, i)[d.mesh.constrained_set]
        delta = np.asarray(dirichlet_targets[i], dtype=np.float64) - cur
        if delta.size and float(np.max(np.abs(delta))) > 1e-15:
            return False
    g = _geom(state)
    w = _world_verts(state, vec)
    pairs = _collect_pairs(state, w, d_hat)
    min_dist = d_hat
    for ev in _eval_pairs(w, pairs):
        if not len(ev["dist"]):
            continue
        within = ev["dist"] < d_hat
        if np.any(within & np.any(g.vert_static[ev["ends"]], axis=1)):
            return False
        min_dist = min(min_dist, float(np.min(ev["dist"])))
    diag.min_distance = min_dist
    diag.residual = state.last_solve.residual
    return True


def _cap_by_inversion(state, vec, direction, alpha):
    for _ in range(60):
        trial = vec + alpha * direction
        vols = state.all_tet_volumes(trial)
        if not len(vols) or np.min(vols) > 0:
            return alpha
        alpha *= 0.5
    return alpha


def _reduction(state):
    """Cached map from global DOF columns to free-system columns (-1 fixed)."""
    if getattr(state, "_free_map", None) is None:
        free = state.free_dof_mask()
        fmap = np.full(state.n_dofs, -1, dtype=np.int64)
        fmap[free] = np.arange(int(np.sum(free)))
        state._free_map = (free, fmap, int(np.sum(free)))
    return state._free_map


def _newton(state, vec, refs, config, diag):
    d_hat = config.barrier_distance
    free, fmap, n_free = _reduction(state)
    if n_free == 0:
        return vec
    elastic_cache = {}
    prev_min = 0.0  # no doubling before a decrease is observed
    pair_superset = None  # previous CCD candidates bound the next assembly set
    budget = config.max_newton_iters - diag.iterations  # per-solve budget
    for _ in range(max(budget, 1)):
        energy, grad, hess, min_dist = _assemble(
            state, vec, refs, d_hat, state.kappa, config.dt, elastic_cache, fmap, n_free,
            pairs=pair_superset,
        )
        # strengthen the barrier (once per step) when a too-tight contact is
        # still collapsing despite the current stiffness
        if min_dist < d_hat / 10.0 and min_dist < prev_min and state.kappa < 1e8:
            state.kappa *= 2.0
            energy, grad, hess, _ = _assemble(
                state, vec, refs, d_hat, state.kappa, config.dt, elastic_cache, fmap, n_free,
                pairs=pair_superset,
            )
        prev_min = min_dist
        diag.min_distance = min(diag.min_distance, min_dist)

        h_ff = hess
        g_f = grad[free]
        reg = 1e-9 * max(1.0, h_ff.diagonal().max() if h_ff.nnz else 1.0)
        h_ff = h_ff + sp.identity(n_free, format="csc") * reg
        dx_f = spla.spsolve(h_ff, -g_f)
        residual = float(np.max(np.abs(dx_f))) if len(dx_f) else 0.0
        diag.iterations += 1
        diag.residual = residual
        if residual < config.newton_tol:
            diag.converged = True
            return vec

        # trust region: long proposals (e.g. a tether pulling through a wall)
        # are truncated; stationarity is still judged on the raw direction
        if residual > _TRUST_RADIUS:
            dx_f = dx_f * (_TRUST_RADIUS / residual)

        direction = np.zeros_like(vec)
        direction[free] = dx_f
        ccd_pairs = {}
        # a step shorter than half the smallest gap cannot close any pair
        # (inf-norm residual bounds endpoint motion by sqrt(3) * residual)
        step_len = min(residual, _TRUST_RADIUS)
        if 2.0 * np.sqrt(3.0) * step_len < min(min_dist, d_hat):
            alpha = 1.0
            w = _world_verts(state, vec)
            ccd_pairs = _collect_pairs(state, w, d_hat + 2.0 * step_len)
        else:
            alpha = ccd_max_step(state, direction, config.ccd_safety, d_hat, vec=vec,
                                 pairs_out=ccd_pairs)
        accepted = False
        for _ in range(60):
            trial = vec + alpha * direction
            e_trial = _trial_energy(state, trial, refs, d_hat, state.kappa, config.dt, ccd_pairs)
            if e_trial <= energy + 1e-12 * max(1.0, abs(energy)):
                vols = state.all_tet_volumes(trial)
                if not len(vols) or np.min(vols) > 0:
                    diag.energy_trace.append((energy, e_trial, state.kappa))
                    vec = trial
                    accepted = True
                    pair_superset = ccd_pairs  # valid candidates for the next assembly
                    break
            alpha *= 0.5
        if not accepted:
            # at a numerical stationary point: descent could not reduce energy
            diag.converged = residual < 10 * config.newton_tol
            if diag.converged:
                return vec
            raise NonConvergenceError(residual, diag.iterations, "line search failed")
    raise NonConvergenceError(diag.residual, diag.iterations)
