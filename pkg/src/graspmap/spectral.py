"""Discrete Laplace–Beltrami operator and its reduced eigenbasis.

Stiffness uses cotangent weights; the lumped mass matrix follows the
mixed Voronoi scheme (obtuse triangles assign area/2 to the obtuse
corner and area/4 to the others). The generalized eigenproblem
L phi = lambda A phi is solved shift-inverted for the smallest k pairs.
"""

import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.sparse import csr_matrix, diags
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigsh

from ._util import atomic_write
from .errors import MeshValidationError, NumericalError

COT_CLAMP = 1e4  # bounds conditioning on sliver triangles (min angle ~1e-4 rad)
DENSE_FALLBACK_N = 1500
SHIFT_SIGMA = -1e-8


@dataclass
class LaplaceOperator:
    """Sparse stiffness L (cotangent weights) and diagonal lumped mass A."""

    stiffness: csr_matrix
    mass_diag: np.ndarray
    clamped_triangles: int = 0

    @property
    def n(self):
        return self.stiffness.shape[0]

    @property
    def mass(self):
        return diags(self.mass_diag)

    def check(self, total_area=None):
        """Raise if the operator invariants are violated."""
        l = self.stiffness
        asym = abs(l - l.T).max()
        if asym > 1e-9 * max(abs(l).max(), 1e-300):
            raise NumericalError(f"stiffness not symmetric (deviation {asym})")
        row_sums = np.asarray(l.sum(axis=1)).ravel()
        row_scale = np.maximum(np.abs(l).max(axis=1).toarray().ravel(), 1e-300)
        if (np.abs(row_sums) > 1e-9 * row_scale).any():
            raise NumericalError("stiffness rows do not sum to zero")
        if (self.mass_diag <= 0).any():
            raise NumericalError("mass matrix has non-positive entries")
        if total_area is not None:
            tr = self.mass_diag.sum()
            if abs(tr - total_area) > 1e-9 * total_area:
                raise NumericalError(
                    f"mass trace {tr} != surface area {total_area}"
                )


def cotan_laplacian(mesh):
    """Cotangent-weight stiffness and mixed-Voronoi lumped mass for a mesh.

    Off-diagonal L_ij = -(cot a_ij + cot b_ij)/2 over the faces sharing
    edge ij; diagonals make rows sum to zero. Cotangents are clamped to
    +/-1e4 on near-degenerate corners (a warning is recorded).
    """
    v, f = mesh.vertices, mesh.faces
    if len(f) == 0:
        raise MeshValidationError("mesh has no faces")
    n = len(v)

    e0 = v[f[:, 2]] - v[f[:, 1]]  # edge opposite corner 0
    e1 = v[f[:, 0]] - v[f[:, 2]]
    e2 = v[f[:, 1]] - v[f[:, 0]]
    sq = np.stack(
        [np.sum(e0 * e0, axis=1), np.sum(e1 * e1, axis=1), np.sum(e2 * e2, axis=1)], axis=1
    )
    double_area = np.linalg.norm(np.cross(e2, -e1), axis=1)
    area = 0.5 * double_area
    # cot of corner k = (sq_j + sq_l - sq_k) / (4 * area), j,l the other corners
    cots = np.empty_like(sq)
    for k in range(3):
        j, l = (k + 1) % 3, (k + 2) % 3
        cots[:, k] = (sq[:, j] + sq[:, l] - sq[:, k]) / (4.0 * area)
    clamped = int((np.abs(cots) > COT_CLAMP).sum())
    if clamped:
        warnings.warn(
            f"{clamped} near-degenerate corners; cotangents clamped to {COT_CLAMP}",
            RuntimeWarning,
            stacklevel=2,
        )
        cots = np.clip(cots, -COT_CLAMP, COT_CLAMP)

    rows, cols, vals = [], [], []
    for k in range(3):
        i, j = f[:, (k + 1) % 3], f[:, (k + 2) % 3]
        w = 0.5 * cots[:, k]
        rows.extend([i, j])
        cols.extend([j, i])
        vals.extend([-w, -w])
        rows.extend([i, j])
        cols.extend([i, j])
        vals.extend([w, w])
    stiffness = csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    stiffness.sum_duplicates()

    mass = _mixed_voronoi_mass(v, f, sq, cots, area, n)
    return LaplaceOperator(stiffness=stiffness, mass_diag=mass, clamped_triangles=clamped)


def _mixed_voronoi_mass(v, f, sq, cots, area, n):
    obtuse_corner = np.argmax(sq, axis=1)  # largest opposite edge = largest angle
    is_obtuse = np.array(
        [cots[i, obtuse_corner[i]] < 0.0 for i in range(len(f))]
    )
    contrib = np.empty((len(f), 3))
    # Voronoi area at corner k uses the two adjacent edges and their opposite cotangents.
    for k in range(3):
        j, l = (k + 1) % 3, (k + 2) % 3
        contrib[:, k] = (sq[:, j] * cots[:, j] + sq[:, l] * cots[:, l]) / 8.0
    for fi in np.flatnonzero(is_obtuse):
        oc = obtuse_corner[fi]
        contrib[fi] = area[fi] / 4.0
        contrib[fi, oc] = area[fi] / 2.0
    mass = np.zeros(n)
    for k in range(3):
        np.add.at(mass, f[:, k], contrib[:, k])
    return mass


@dataclass
class SpectralBasis:
    """First k generalized eigenpairs of the LBO, A-orthonormal.

    Eigenvalues ascend; eigenvector signs are fixed so the first entry
    above noise level is positive, which keeps downstream functional-map
    coefficients reproducible.
    """

    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    mass_diag: np.ndarray
    mesh: object = None

    @property
    def k(self):
        return len(self.eigenvalues)

    @property
    def n(self):
        return self.eigenfunctions.shape[0]

    def project(self, values):
        """Coefficients of per-vertex function(s): Phi^T A f."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] != self.n:
            raise ValueError(f"expected leading dimension {self.n}, got {values.shape[0]}")
        weighted = values * self.mass_diag[:, None] if values.ndim == 2 else values * self.mass_diag
        return self.eigenfunctions.T @ weighted

    def reconstruct(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape[0] != self.k:
            raise ValueError(f"expected leading dimension {self.k}, got {coeffs.shape[0]}")
        return self.eigenfunctions @ coeffs

    def nonzero_mask(self, rel=1e-10):
        lam_max = max(self.eigenvalues.max(), 1e-300)
        return self.eigenvalues > rel * lam_max


def _fix_signs(phi):
    out = phi.copy()
    for j in range(phi.shape[1]):
        col = out[:, j]
        scale = np.abs(col).max()
        if scale == 0.0:
            continue
        idx = np.flatnonzero(np.abs(col) > 1e-12 * scale)
        if idx.size and col[idx[0]] < 0:
            out[:, j] = -col
    return out


def eigenbasis(op, k):
    """Smallest-k generalized eigenpairs of L phi = lambda A phi.

    Shift-invert ARPACK for large problems (deterministic start vector),
    dense generalized solve for n <= 1500. Raises NumericalError with the
    residual on non-convergence.
    """
    n = op.n
    if not 1 <= k < n:
        raise ValueError(f"k must be in [1, {n}), got {k}")
    if n <= DENSE_FALLBACK_N:
        dense_l = op.stiffness.toarray()
        dense_l = 0.5 * (dense_l + dense_l.T)
        vals, vecs = eigh(dense_l, np.diag(op.mass_diag))
        vals, vecs = vals[:k], vecs[:, :k]
    else:
        v0 = np.random.default_rng(0).standard_normal(n)
        try:
            vals, vecs = eigsh(
                op.stiffness, k=k, M=op.mass, sigma=SHIFT_SIGMA, which="LM", v0=v0
            )
        except ArpackNoConvergence as exc:
            got = len(exc.eigenvalues)
            raise NumericalError(
                f"eigensolver converged only {got}/{k} pairs"
            ) from exc
        except ArpackError as exc:
            raise NumericalError(f"eigensolver failed: {exc}") from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]

    # enforce exact A-orthonormality scaling (solver returns it up to roundoff)
    norms = np.sqrt(np.einsum("ij,i,ij->j", vecs, op.mass_diag, vecs))
    vecs = vecs / norms
    vecs = _fix_signs(vecs)

    residual = op.stiffness @ vecs - (op.mass_diag[:, None] * vecs) * vals[None, :]
    scale = max(np.abs(vals).max(), 1.0)
    rel = np.linalg.norm(residual) / (scale * np.linalg.norm(vecs))
    if rel > 1e-6:
        raise NumericalError(f"eigenpair residual {rel:.3g} exceeds 1e-6")
    return SpectralBasis(eigenvalues=vals, eigenfunctions=vecs, mass_diag=op.mass_diag.copy())


def compute_basis(mesh, k):
    """Laplacian + eigenbasis in one step, with the mesh attached."""
    op = cotan_laplacian(mesh)
    basis = eigenbasis(op, k)
    basis.mesh = mesh
    return basis


def basis_cache_path(cache_dir, mesh, k):
    return os.path.join(os.fspath(cache_dir), f"basis_{mesh.content_hash()[:16]}_k{k}.npz")


def save_basis(path, basis):
    with atomic_write(path, "wb") as out:
        np.savez(
            out,
            eigenvalues=basis.eigenvalues,
            eigenfunctions=basis.eigenfunctions,
            mass_diag=basis.mass_diag,
        )


def load_basis(path, mesh=None):
    with np.load(path) as data:
        basis = SpectralBasis(
            eigenvalues=data["eigenvalues"],
            eigenfunctions=data["eigenfunctions"],
            mass_diag=data["mass_diag"],
        )
    basis.mesh = mesh
    return basis


def cached_basis(cache_dir, mesh, k):
    """Load the cached basis for (mesh content, k), computing it on a miss."""
    path = basis_cache_path(cache_dir, mesh, k)
    if os.path.exists(path):
        return load_basis(path, mesh)
    basis = compute_basis(mesh, k)
    save_basis(path, basis)
    return basis
