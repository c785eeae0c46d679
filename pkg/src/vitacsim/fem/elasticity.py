"""Stable Neo-Hookean elasticity on tetrahedral meshes.

Energy density per element:

    psi(F) = mu/2 (tr(F^T F) - 3) - mu (J - 1) + lam/2 (J - 1)^2

with J = det F and the Lame pair reparameterized (lam = lam0 + mu0) so the
small-strain limit matches (E, nu).  The variant stays finite through
inversion, is zero exactly at rest, and is translation/rotation invariant;
evaluation on an inverted element is still reported as an error because the
solver is required to keep J > 0 via its line search.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import SingularConfigurationError


@dataclass
class MaterialParams:
    youngs_modulus: float = 1.45e5
    poisson_ratio: float = 0.45
    density: float = 1000.0
    damping: float = 0.0

    def __post_init__(self):
        if self.youngs_modulus <= 0:
            raise ValueError("youngs_modulus must be positive")
        if not 0.0 <= self.poisson_ratio < 0.5:
            raise ValueError("poisson_ratio must lie in [0, 0.5)")
        if not 0.0 <= self.damping <= 1.0:
            raise ValueError("damping must lie in [0, 1]")

    @property
    def mu(self) -> float:
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))

    @property
    def lam(self) -> float:
        nu = self.poisson_ratio
        lam0 = self.youngs_modulus * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        return lam0 + self.mu


def _hat(v):
    """Batched cross-product matrices, shape (..., 3, 3)."""
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    zero = np.zeros_like(x)
    return np.stack(
        [
            np.stack([zero, -z, y], axis=-1),
            np.stack([z, zero, -x], axis=-1),
            np.stack([-y, x, zero], axis=-1),
        ],
        axis=-2,
    )


class ElasticModel:
    """Precomputed per-element quantities for one tet mesh.

    Holds the rest-shape inverses, volumes, lumped vertex masses, and the
    constant (9 x 12) maps from local vertex displacements to vec(F), so
    energy/gradient/Hessian evaluations are single batched einsums.
    """

    def __init__(self, mesh, material: MaterialParams):
        self.mesh = mesh
        self.material = material
        verts = mesh.vertices
        tets = mesh.tets
        d = verts[tets[:, 1:]] - verts[tets[:, :1]]
        dm = np.transpose(d, (0, 2, 1))  # columns are edge vectors
        self.rest_volume = np.linalg.det(dm) / 6.0
        if np.any(self.rest_volume <= 0):
            raise SingularConfigurationError("rest mesh contains inverted tets")
        self.dm_inv = np.linalg.inv(dm)

        n = len(tets)
        # K[e] maps the stacked 12 local coordinates to vec(F), row-major F.
        k = np.zeros((n, 9, 12))
        dmi = self.dm_inv
        for j in range(3):  # local vertex j+1
            for b in range(3):  # F column
                for a in range(3):  # F row
                    k[:, 3 * a + b, 3 * (j + 1) + a] = dmi[:, j, b]
                    k[:, 3 * a + b, a] -= dmi[:, j, b]
        self.f_map = k
        self.f_map_t = np.ascontiguousarray(np.transpose(k, (0, 2, 1)))

        self.vertex_mass = np.zeros(len(verts))
        share = np.repeat(material.density * self.rest_volume / 4.0, 4)
        np.add.at(self.vertex_mass, tets.reshape(-1), share)

        # Global assembly indices for the per-element 12x12 blocks.
        dof = (3 * tets[:, :, None] + np.arange(3)[None, None, :]).reshape(n, 12)
        self.rows = np.repeat(dof, 12, axis=1).reshape(-1)
        self.cols = np.tile(dof, (1, 12)).reshape(-1)

    def deformation_gradients(self, positions: np.ndarray) -> np.ndarray:
        tets = self.mesh.tets
        d = positions[tets[:, 1:]] - positions[tets[:, :1]]
        ds = np.transpose(d, (0, 2, 1))
        return ds @ self.dm_inv

    def energy(self, positions: np.ndarray, allow_inversion: bool = False) -> float:
        """Total elastic energy; +inf for inverted states when allowed."""
        f = self.deformation_gradients(positions)
        j = np.linalg.det(f)
        if np.any(j <= 0):
            if allow_inversion:
                return np.inf
            raise SingularConfigurationError("inverted element in elastic energy evaluation")
        mu, lam = self.material.mu, self.material.lam
        ic = (f * f).sum(axis=(1, 2))
        psi = 0.5 * mu * (ic - 3.0) - mu * (j - 1.0) + 0.5 * lam * (j - 1.0) ** 2
        return float(np.dot(self.rest_volume, psi))

    def gradient(self, positions: np.ndarray) -> np.ndarray:
        """Energy gradient, shape (n_vertices, 3)."""
        f = self.deformation_gradients(positions)
        j = np.linalg.det(f)
        if np.any(j <= 0):
            raise SingularConfigurationError("inverted element in elastic gradient evaluation")
        mu, lam = self.material.mu, self.material.lam
        cof = _cofactor(f)
        p = mu * f + (lam * (j - 1.0) - mu)[:, None, None] * cof
        p *= self.rest_volume[:, None, None]
        local = np.matmul(p.reshape(-1, 1, 9), self.f_map)[:, 0, :]
        grad = np.zeros_like(positions)
        np.add.at(grad.reshape(-1), (3 * self.mesh.tets[:, :, None] + np.arange(3)).reshape(-1), local.reshape(-1))
        return grad

    def element_hessians(self, positions: np.ndarray, project: bool = True) -> np.ndarray:
        """Per-element 12x12 second derivatives, PSD-projected when requested.

        Projection runs a batched eigendecomposition only on elements whose
        Gershgorin bound cannot certify semidefiniteness.
        """
        f = self.deformation_gradients(positions)
        j = np.linalg.det(f)
        if np.any(j <= 0):
            raise SingularConfigurationError("inverted element in elastic hessian evaluation")
        mu, lam = self.material.mu, self.material.lam
        cof = _cofactor(f)
        g = cof.reshape(-1, 9)

        n = len(f)
        h9 = np.zeros((n, 9, 9))
        h9[:, np.arange(9), np.arange(9)] = mu
        h9 += lam * g[:, :, None] * g[:, None, :]
        # d2J/dF2: antisymmetric cross-structure between column pairs.
        scale = lam * (j - 1.0) - mu
        f0, f1, f2 = f[:, :, 0], f[:, :, 1], f[:, :, 2]
        h0, h1, h2 = _hat(f0), _hat(f1), _hat(f2)
        jh = np.zeros((n, 3, 3, 3, 3))  # [e, col_a, col_b, row_a, row_b]
        jh[:, 0, 1] = -h2
        jh[:, 1, 0] = h2
        jh[:, 0, 2] = h1
        jh[:, 2, 0] = -h1
        jh[:, 1, 2] = -h0
        jh[:, 2, 1] = h0
        # reorder into vec(F) row-major layout: index = 3*row + col
        jh = np.transpose(jh, (0, 3, 1, 4, 2)).reshape(n, 9, 9)
        h9 += scale[:, None, None] * jh

        h12 = np.matmul(np.matmul(self.f_map_t, h9), self.f_map)
        h12 *= self.rest_volume[:, None, None]
        if project:
            diag = h12[:, np.arange(12), np.arange(12)]
            radius = np.sum(np.abs(h12), axis=2) - np.abs(diag)
            tol = 1e-12 * np.maximum(1.0, np.abs(diag).max(axis=1))
            suspect = np.flatnonzero(np.min(diag - radius, axis=1) < -tol)
            if len(suspect):
                w, v = np.linalg.eigh(h12[suspect])
                w = np.clip(w, 0.0, None)
                h12[suspect] = np.einsum("eij,ej,ekj->eik", v, w, v)
        return h12

    def hessian(self, positions: np.ndarray, project: bool = True) -> sp.csr_matrix:
        """Assembled second derivative, optionally PSD-projected per element."""
        h12 = self.element_hessians(positions, project)
        mat = sp.coo_matrix(
            (h12.reshape(-1), (self.rows, self.cols)),
            shape=(positions.size, positions.size),
        )
        return mat.tocsr()


def _cofactor(f):
    c0 = np.cross(f[:, :, 1], f[:, :, 2], axis=1)
    c1 = np.cross(f[:, :, 2], f[:, :, 0], axis=1)
    c2 = np.cross(f[:, :, 0], f[:, :, 1], axis=1)
    return np.stack([c0, c1, c2], axis=2)


def elastic_energy(mesh, positions, material: MaterialParams):
    """Energy, gradient and PSD-projected Hessian in one call."""
    model = ElasticModel(mesh, material)
    return (
        model.energy(positions),
        model.gradient(positions),
        model.hessian(positions),
    )
