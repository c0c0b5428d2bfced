"""Rigid-ICP and nonrigid-CPD registration baselines.

Both consume bare point sets (decimated mesh vertices in the pipeline)
and produce target-to-source point maps through the same adapter as the
spectral method, so the grasp-transfer tail is identical for every
correspondence method.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from ._util import atomic_write
from .errors import NumericalError
from .fmap import PointMap

KABSCH_ORTHO_TOL = 1e-9


@dataclass
class RigidTransform:
    """Proper rigid motion x -> R x + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        dev = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if dev > KABSCH_ORTHO_TOL:
            raise ValueError(f"rotation not orthogonal (deviation {dev:.3g})")
        if np.linalg.det(self.rotation) < 0:
            raise ValueError("rotation has negative determinant (reflection)")

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, mat):
        mat = np.asarray(mat, dtype=np.float64).reshape(4, 4)
        return cls(mat[:3, :3], mat[:3, 3])

    def matrix(self):
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.translation
        return out

    def apply(self, points):
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def compose(self, other):
        """self after other: (self @ other)(x) = self(other(x))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other):
        return self.compose(other)

    def inverse(self):
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def rotation_angle(self):
        c = (np.trace(self.rotation) - 1.0) / 2.0
        return float(np.arccos(np.clip(c, -1.0, 1.0)))


def kabsch(source, target, weights=None):
    """Least-squares rigid motion R p + t ~ q (SVD, reflection-corrected)."""
    p = np.asarray(source, dtype=np.float64)
    q = np.asarray(target, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 2 or p.shape[1] != 3:
        raise ValueError("point sets must both be (n, 3)")
    if len(p) < 3:
        raise NumericalError("need at least 3 correspondences")
    if weights is None:
        weights = np.ones(len(p))
    w = weights / weights.sum()
    cp = w @ p
    cq = w @ q
    h = (p - cp).T @ ((q - cq) * w[:, None])
    u, sing, vt = np.linalg.svd(h)
    if sing[1] <= 1e-12 * max(sing[0], 1e-300):
        raise NumericalError("degenerate (collinear) point configuration")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    corr = np.diag([1.0, 1.0, d])
    rot = vt.T @ corr @ u.T
    return RigidTransform(rot, cq - rot @ cp)


@dataclass
class IcpResult:
    transform: RigidTransform
    pointmap: PointMap
    errors: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False

    def __iter__(self):  # unpacks as (transform, pointmap)
        return iter((self.transform, self.pointmap))

    def report(self):
        return {
            "method": "icp",
            "iterations": self.iterations,
            "converged": self.converged,
            "final_error": self.errors[-1] if self.errors else None,
        }


def icp_rigid(source, target, max_iters=50, trim_fraction=0.1, tol=1e-12):
    """Trimmed point-to-point ICP: alternate NN matching and Kabsch.

    The trimmed mean-squared error is non-increasing per iteration
    (asserted). Returns the transform and the final per-target-point
    nearest transformed-source assignment.
    """
    src = np.asarray(source, dtype=np.float64)
    tgt = np.asarray(target, dtype=np.float64)
    if len(src) < 3 or len(tgt) < 3:
        raise NumericalError("need at least 3 points in each set")
    if not 0.0 <= trim_fraction < 1.0:
        raise ValueError("trim_fraction must be in [0, 1)")
    for pts in (src, tgt):
        if np.linalg.matrix_rank(pts - pts.mean(axis=0), tol=1e-12) < 2:
            raise NumericalError("degenerate (collinear) point configuration")

    tree = cKDTree(tgt)
    transform = RigidTransform.identity()
    keep = max(3, int(np.ceil((1.0 - trim_fraction) * len(src))))
    errors = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        moved = transform.apply(src)
        dists, idx = tree.query(moved)
        kept = np.argsort(dists, kind="stable")[:keep]
        err = float(np.mean(dists[kept] ** 2))
        if errors and err > errors[-1] + 1e-9 * max(1.0, errors[0]):
            raise NumericalError(f"ICP error increased: {errors[-1]} -> {err}")
        improved = not errors or errors[-1] - err > tol * max(1.0, errors[0])
        errors.append(err)
        transform = kabsch(src[kept], tgt[idx[kept]])
        if not improved:
            converged = True
            break
    moved = transform.apply(src)
    src_tree = cKDTree(moved)
    _, assignment = src_tree.query(tgt)
    pointmap = PointMap(assignment=assignment, n_source=len(src))
    return IcpResult(
        transform=transform,
        pointmap=pointmap,
        errors=errors,
        iterations=iterations,
        converged=converged,
    )


@dataclass
class CpdConfig:
    """Gaussian-mixture coherent-drift parameters (normalized units)."""

    beta: float = 2.0
    lam: float = 3.0
    w_outlier: float = 0.1
    max_iters: int = 150
    tolerance: float = 1e-7

    def validate(self):
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if not 0.0 <= self.w_outlier < 1.0:
            raise ValueError("w_outlier must be in [0, 1)")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        return self


@dataclass
class CpdResult:
    displaced: np.ndarray
    pointmap: PointMap
    nll_history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    sigma2: float = 0.0

    def __iter__(self):  # unpacks as (displaced, pointmap)
        return iter((self.displaced, self.pointmap))

    def report(self):
        return {
            "method": "cpd",
            "iterations": self.iterations,
            "converged": self.converged,
            "final_nll": self.nll_history[-1] if self.nll_history else None,
        }


def _cpd_probabilities(moved, tgt, sigma2, w_outlier):
    """Responsibilities P (M x N) and per-target densities c_n."""
    m, d = moved.shape
    n = tgt.shape[0]
    gauss = np.exp(-cdist(moved, tgt, "sqeuclidean") / (2.0 * sigma2))
    norm = (2.0 * np.pi * sigma2) ** (d / 2.0)
    outlier = w_outlier / n
    c = (1.0 - w_outlier) / (m * norm) * gauss.sum(axis=0) + outlier
    c = np.maximum(c, 1e-300)
    p = (1.0 - w_outlier) / (m * norm) * gauss / c[None, :]
    return p, c


def cpd_nonrigid(source, target, cfg=None):
    """Coherent point drift: EM on a GMM with a smooth displacement field.

    The displacement is v = G W with G the Gaussian kernel Gram matrix of
    the source points; the penalized negative log-likelihood is
    non-increasing per EM step (asserted with 1e-9 slack). Both sets are
    centered and scaled to unit RMS independently; the transform is
    undone on output. The point map takes each target point to its
    posterior-maximum source point.
    """
    cfg = (cfg or CpdConfig()).validate()
    src = np.asarray(source, dtype=np.float64)
    tgt = np.asarray(target, dtype=np.float64)
    if not (np.isfinite(src).all() and np.isfinite(tgt).all()):
        raise ValueError("point sets must be finite")
    m, n = len(src), len(tgt)
    d = 3

    src_mean, tgt_mean = src.mean(axis=0), tgt.mean(axis=0)
    src_scale = max(np.sqrt(np.mean(np.sum((src - src_mean) ** 2, axis=1))), 1e-12)
    tgt_scale = max(np.sqrt(np.mean(np.sum((tgt - tgt_mean) ** 2, axis=1))), 1e-12)
    y0 = (src - src_mean) / src_scale
    x = (tgt - tgt_mean) / tgt_scale

    gram = np.exp(-cdist(y0, y0, "sqeuclidean") / (2.0 * cfg.beta**2))
    w_mat = np.zeros((m, d))
    moved = y0.copy()
    sigma2 = float(np.sum((x[None, :, :] - y0[:, None, :]) ** 2) / (d * m * n))

    best = None
    history = []
    converged = False
    iterations = 0
    p = None
    for iterations in range(1, cfg.max_iters + 1):
        p, c = _cpd_probabilities(moved, x, sigma2, cfg.w_outlier)
        penalty = 0.5 * cfg.lam * float(np.sum(w_mat * (gram @ w_mat)))
        nll = -float(np.sum(np.log(c))) + penalty
        if history and nll > history[-1] + 1e-9 * max(1.0, abs(history[0])):
            raise NumericalError(f"CPD objective increased: {history[-1]} -> {nll}")
        history.append(nll)
        if best is None or nll <= best[0]:
            best = (nll, w_mat.copy(), sigma2, p)
        if len(history) > 1 and history[-2] - history[-1] < cfg.tolerance * max(
            1.0, abs(history[0])
        ):
            converged = True
            break

        p1 = p.sum(axis=1)
        pt1 = p.sum(axis=0)
        n_p = float(p1.sum())
        px = p @ x
        lhs = (p1[:, None] * gram) + cfg.lam * sigma2 * np.eye(m)
        rhs = px - p1[:, None] * y0
        try:
            w_mat = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"CPD M-step solve failed: {exc}") from exc
        moved = y0 + gram @ w_mat
        trace_x = float(pt1 @ np.sum(x**2, axis=1))
        trace_mid = float(np.sum(px * moved))
        trace_t = float(p1 @ np.sum(moved**2, axis=1))
        sigma2 = (trace_x - 2.0 * trace_mid + trace_t) / (n_p * d)
        if sigma2 < 1e-12:
            sigma2 = 1e-12
            converged = True
            p, _ = _cpd_probabilities(moved, x, sigma2, cfg.w_outlier)
            break

    if not converged:
        warnings.warn(
            f"CPD did not converge in {cfg.max_iters} iterations; returning best iterate",
            RuntimeWarning,
            stacklevel=2,
        )
        _, w_mat, sigma2, p = best
        moved = y0 + gram @ w_mat

    displaced = moved * tgt_scale + tgt_mean
    assignment = np.argmax(p, axis=0)  # ties resolve to the lowest source id
    pointmap = PointMap(assignment=assignment, n_source=m)
    return CpdResult(
        displaced=displaced,
        pointmap=pointmap,
        nll_history=history,
        iterations=iterations,
        converged=converged,
        sigma2=float(sigma2),
    )


def pointmap_from_registration(assignment, source_mesh, target_mesh):
    """Adapt a registration assignment to the shared Y-to-X convention."""
    assignment = np.asarray(assignment, dtype=np.int64)
    if len(assignment) != target_mesh.n_vertices:
        raise ValueError(
            f"assignment covers {len(assignment)} points, target has {target_mesh.n_vertices}"
        )
    return PointMap(assignment=assignment, n_source=source_mesh.n_vertices)


def save_registration_report(path, result):
    with atomic_write(path) as out:
        json.dump(result.report(), out, indent=2, sort_keys=True)
