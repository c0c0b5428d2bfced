"""Functional map estimation, point-map recovery and refinement.

The map between reduced function spaces is a small k_Y x k_X matrix C.
Fitting minimizes a convex quadratic (descriptor preservation, Laplacian
commutativity, descriptor-operator commutativity, optional orientation
term); the normal equations are solved exactly per row when only the
decoupled terms are active, and by preconditioned conjugate gradients
when commutator terms couple the rows.
"""

import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix

from ._util import atomic_write
from .errors import NumericalError
from .mesh.geodesic import GeodesicCache

RIDGE = 1e-9
STATIONARITY_TOL = 1e-8  # relative first-order stationarity of the quadratic
MONOTONE_SLACK = 1e-12


@dataclass
class FmapConfig:
    """Energy weights and refinement controls for map estimation.

    ``opcomm_step`` subsamples descriptor columns when building the
    commutativity operators (every step-th column); the descriptor
    preservation term always uses all columns.
    """

    w_desc: float = 1.0
    w_lap: float = 1e-3
    w_opcomm: float = 1.0
    w_orient: float = 0.0
    refine_iters: int = 10
    bijective: bool = False
    normalize_descriptors: bool = True
    opcomm_step: int = 5

    def validate(self):
        for name in ("w_desc", "w_lap", "w_opcomm", "w_orient"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.w_desc <= 0:
            raise ValueError("w_desc must be > 0")
        if self.refine_iters < 1:
            raise ValueError("refine_iters must be >= 1")
        if self.opcomm_step < 1:
            raise ValueError("opcomm_step must be >= 1")
        return self


@dataclass
class PointMap:
    """Vertex correspondence: assignment[y] is the source vertex for target y."""

    assignment: np.ndarray
    n_source: int
    inverse: "PointMap | None" = None

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=np.int64)
        if self.assignment.size and (
            self.assignment.min() < 0 or self.assignment.max() >= self.n_source
        ):
            raise ValueError("assignment contains out-of-range source ids")

    @property
    def n_target(self):
        return len(self.assignment)

    def is_permutation(self):
        if self.n_target != self.n_source:
            return False
        return len(np.unique(self.assignment)) == self.n_source

    def save(self, path):
        with atomic_write(path) as out:
            for target_id, source_id in enumerate(self.assignment):
                out.write(f"{target_id} {source_id}\n")

    @classmethod
    def load(cls, path, n_source=None):
        pairs = np.loadtxt(path, dtype=np.int64, ndmin=2)
        order = np.argsort(pairs[:, 0])
        assignment = pairs[order, 1]
        if n_source is None:
            n_source = int(assignment.max()) + 1
        return cls(assignment=assignment, n_source=n_source)


@dataclass
class FunctionalMap:
    """Reduced-basis map coefficients with provenance from the last solve."""

    C: np.ndarray
    basis_x: object
    basis_y: object
    energies: dict = field(default_factory=dict)
    ridge_applied: bool = False
    refine_errors: list = field(default_factory=list)

    @property
    def shape(self):
        return self.C.shape

    def save(self, path_prefix):
        np.save(path_prefix + ".npy", self.C)
        header = {
            "k_x": int(self.C.shape[1]),
            "k_y": int(self.C.shape[0]),
            "energies": {k: float(v) for k, v in self.energies.items()},
            "ridge_applied": self.ridge_applied,
        }
        with atomic_write(path_prefix + ".json") as out:
            json.dump(header, out, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path_prefix, basis_x=None, basis_y=None):
        c = np.load(path_prefix + ".npy")
        energies = {}
        ridge = False
        if os.path.exists(path_prefix + ".json"):
            with open(path_prefix + ".json") as handle:
                header = json.load(handle)
            energies = header.get("energies", {})
            ridge = header.get("ridge_applied", False)
        return cls(C=c, basis_x=basis_x, basis_y=basis_y, energies=energies, ridge_applied=ridge)


def _normalized_columns(values, mass_diag):
    norms = np.sqrt(np.einsum("nd,n,nd->d", values, mass_diag, values))
    norms = np.where(norms > 0, norms, 1.0)
    return values / norms


def _multiplication_operators(basis, values):
    """Reduced multiplication operator per descriptor column: Phi^T A diag(g) Phi."""
    phi = basis.eigenfunctions
    a = basis.mass_diag
    return [phi.T @ ((a * values[:, j])[:, None] * phi) for j in range(values.shape[1])]


def _face_gradients(mesh):
    """Per-face barycentric gradient vectors, (n_faces, 3 corners, 3)."""
    v, f = mesh.vertices, mesh.faces
    normal = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    double_area = np.linalg.norm(normal, axis=1)
    unit_n = normal / np.where(double_area > 0, double_area, 1.0)[:, None]
    grads = np.empty((len(f), 3, 3))
    for k in range(3):
        edge = v[f[:, (k + 2) % 3]] - v[f[:, (k + 1) % 3]]  # opposite edge, oriented
        grads[:, k, :] = np.cross(unit_n, edge) / double_area[:, None]
    return grads, unit_n, 0.5 * double_area


def _orientation_operators(basis, values):
    """Reduced operators of u -> <n x grad g, grad u> per descriptor column.

    Commutativity of these operators distinguishes orientation-preserving
    from orientation-reversing maps.
    """
    mesh = basis.mesh
    if mesh is None:
        raise ValueError("orientation term needs a basis with an attached mesh")
    grads, unit_n, area = _face_gradients(mesh)
    f = mesh.faces
    n = mesh.n_vertices
    phi = basis.eigenfunctions
    ops = []
    for j in range(values.shape[1]):
        g = values[:, j]
        grad_g = np.einsum("fkd,fk->fd", grads, g[f])
        rot = np.cross(unit_n, grad_g)
        rows = np.repeat(np.arange(len(f)), 3)
        cols = f.ravel()
        data = (np.einsum("fd,fkd->fk", rot, grads)).ravel()
        dmat = csr_matrix((data, (rows, cols)), shape=(len(f), n))
        scatter = csr_matrix(
            ((np.repeat(area / 3.0, 3)), (f.ravel(), np.repeat(np.arange(len(f)), 3))),
            shape=(n, len(f)),
        )
        ops.append(phi.T @ (scatter @ (dmat @ phi)))
    return ops


def fit_fmap(basis_x, basis_y, field_f, field_h, cfg=None):
    """Estimate the functional map from paired descriptor fields.

    Minimizes w_desc ||C F - H||^2 + w_lap ||C diag(lam_X) - diag(lam_Y) C||^2
    + w_opcomm sum_i ||C M^X_i - M^Y_i C||^2 (+ optional orientation term)
    over C, to relative first-order stationarity 1e-8. Rank-deficient
    systems are re-solved with a 1e-9 ridge and flagged.
    """
    cfg = (cfg or FmapConfig()).validate()
    if field_f.d != field_h.d:
        raise ValueError(f"descriptor counts differ: {field_f.d} vs {field_h.d}")
    f_vals, h_vals = field_f.values, field_h.values
    if cfg.normalize_descriptors:
        f_vals = _normalized_columns(f_vals, basis_x.mass_diag)
        h_vals = _normalized_columns(h_vals, basis_y.mass_diag)
    f_hat = basis_x.project(f_vals)
    h_hat = basis_y.project(h_vals)

    lam_x, lam_y = basis_x.eigenvalues, basis_y.eigenvalues
    gap_sq = (lam_x[None, :] - lam_y[:, None]) ** 2
    fft = f_hat @ f_hat.T
    rhs = cfg.w_desc * (h_hat @ f_hat.T)

    pairs = []
    op_f = f_vals[:, :: cfg.opcomm_step]
    op_h = h_vals[:, :: cfg.opcomm_step]
    if cfg.w_opcomm > 0:
        pairs.append(("opcomm", cfg.w_opcomm, _multiplication_operators(basis_x, op_f),
                      _multiplication_operators(basis_y, op_h)))
    if cfg.w_orient > 0:
        pairs.append(("orientation", cfg.w_orient, _orientation_operators(basis_x, op_f),
                      _orientation_operators(basis_y, op_h)))

    def operator(c, ridge=0.0):
        out = cfg.w_desc * (c @ fft) + cfg.w_lap * (gap_sq * c)
        for _, weight, ops_x, ops_y in pairs:
            for mx, my in zip(ops_x, ops_y):
                r = c @ mx - my @ c
                out += weight * (r @ mx.T - my.T @ r)
        if ridge:
            out = out + ridge * c
        return out

    c, ridge_applied = _solve_pcg(
        operator, rhs, fft, gap_sq, cfg, pairs=pairs
    )

    energies = {
        "descriptor": cfg.w_desc * float(np.sum((c @ f_hat - h_hat) ** 2)),
        "laplacian": cfg.w_lap * float(np.sum(gap_sq * c**2)),
        "opcomm": 0.0,
        "orientation": 0.0,
    }
    for name, weight, ops_x, ops_y in pairs:
        total = sum(float(np.sum((c @ mx - my @ c) ** 2)) for mx, my in zip(ops_x, ops_y))
        energies[name] = weight * total
    return FunctionalMap(
        C=c, basis_x=basis_x, basis_y=basis_y, energies=energies, ridge_applied=ridge_applied
    )


def _row_blocks(fft, gap_sq, cfg, ridge, pairs):
    k_y, k_x = gap_sq.shape
    blocks = np.broadcast_to(cfg.w_desc * fft, (k_y, k_x, k_x)).copy()
    idx = np.arange(k_x)
    blocks[:, idx, idx] += cfg.w_lap * gap_sq + ridge
    # SPD part of the commutator terms (cross terms dropped): keeps the
    # preconditioner cheap while capturing their scale
    for _, weight, ops_x, ops_y in pairs:
        base = sum(mx @ mx.T for mx in ops_x)
        diag_y = sum(np.einsum("ij,ij->j", my, my) for my in ops_y)
        blocks += weight * base[None]
        blocks[:, idx, idx] += weight * diag_y[:, None]
    return blocks


def _solve_pcg(operator, rhs, fft, gap_sq, cfg, pairs=(), max_iters=2000):
    scale = max(np.linalg.norm(rhs), 1.0)
    coupled = bool(pairs)
    for ridge_applied, ridge in ((False, 0.0), (True, RIDGE)):
        try:
            blocks = _row_blocks(fft, gap_sq, cfg, ridge, pairs)
            if not ridge_applied and not coupled:
                # decoupled system: the row blocks ARE the normal matrices,
                # so a singular block means a rank-deficient solve
                if np.linalg.cond(blocks).max() > 1e12:
                    continue
            pinv = np.linalg.inv(blocks)
        except np.linalg.LinAlgError:
            continue

        def precond(r):
            return np.einsum("ijk,ik->ij", pinv, r)

        c = np.zeros_like(rhs)
        r = rhs - operator(c, ridge)
        z = precond(r)
        p = z.copy()
        rz = float(np.sum(r * z))
        converged = False
        for _ in range(max_iters):
            if np.linalg.norm(r) <= STATIONARITY_TOL * scale:
                converged = True
                break
            ap = operator(p, ridge)
            denom = float(np.sum(p * ap))
            if denom <= 0:
                break  # operator not positive definite: retry with ridge
            alpha = rz / denom
            c += alpha * p
            r -= alpha * ap
            z = precond(r)
            rz_new = float(np.sum(r * z))
            beta = rz_new / rz
            p = z + beta * p
            rz = rz_new
        if converged:
            if ridge_applied:
                warnings.warn(
                    "functional-map normal system rank-deficient; ridge 1e-9 applied",
                    RuntimeWarning,
                    stacklevel=3,
                )
            return c, ridge_applied
    raise NumericalError("functional-map solver failed to reach stationarity")


def fmap_from_p2p(pmap, basis_x, basis_y):
    """Exact map coefficients of a vertex correspondence: Phi_Y^T A_Y Pi Phi_X."""
    pulled = basis_x.eigenfunctions[pmap.assignment]  # Pi Phi_X
    c = basis_y.project(pulled)
    return FunctionalMap(C=c, basis_x=basis_x, basis_y=basis_y)


def _nearest_source(emb_x, emb_y, second=False):
    """Index of the nearest row of emb_x per row of emb_y; lowest id on ties."""
    x_sq = np.einsum("ij,ij->i", emb_x, emb_x)
    n_y = emb_y.shape[0]
    first = np.empty(n_y, dtype=np.int64)
    runner = np.empty(n_y, dtype=np.int64) if second else None
    block = max(1, int(2e7 // max(len(emb_x), 1)))
    for start in range(0, n_y, block):
        chunk = emb_y[start : start + block]
        d = x_sq[None, :] - 2.0 * (chunk @ emb_x.T)
        idx = np.argmin(d, axis=1)
        first[start : start + len(chunk)] = idx
        if second:
            d[np.arange(len(chunk)), idx] = np.inf
            runner[start : start + len(chunk)] = np.argmin(d, axis=1)
    return (first, runner) if second else first


def p2p_from_fmap(fmap):
    """Recover the vertex map by nearest neighbors between spectral embeddings."""
    emb_x = fmap.basis_x.eigenfunctions @ fmap.C.T
    emb_y = fmap.basis_y.eigenfunctions
    assignment = _nearest_source(emb_x, emb_y)
    return PointMap(assignment=assignment, n_source=fmap.basis_x.n)


def _alignment_energy(c, basis_x, basis_y, assignment):
    diff = basis_x.eigenfunctions[assignment] @ c.T - basis_y.eigenfunctions
    return float(np.sum(basis_y.mass_diag[:, None] * diff**2))


def _procrustes_c(basis_x, basis_y, assignment):
    m = basis_y.project(basis_x.eigenfunctions[assignment])
    u, _, vt = np.linalg.svd(m)
    k_y, k_x = m.shape
    return (u @ np.eye(k_y, k_x) @ vt) if k_y != k_x else u @ vt


def icp_refine(fmap, basis_x=None, basis_y=None, iters=10):
    """Alternate point-map recovery and orthogonal re-estimation of C.

    The mass-weighted embedding alignment error is non-increasing across
    iterations (asserted); stops early at an assignment fixed point.
    """
    basis_x = basis_x or fmap.basis_x
    basis_y = basis_y or fmap.basis_y
    if iters < 1:
        raise ValueError("iters must be >= 1")
    c = fmap.C
    current = FunctionalMap(C=c, basis_x=basis_x, basis_y=basis_y)
    assignment_prev = None
    errors = []
    for _ in range(iters):
        assignment = p2p_from_fmap(current).assignment
        if assignment_prev is not None and np.array_equal(assignment, assignment_prev):
            break
        c = _procrustes_c(basis_x, basis_y, assignment)
        current = FunctionalMap(C=c, basis_x=basis_x, basis_y=basis_y)
        energy = _alignment_energy(c, basis_x, basis_y, assignment)
        if errors and energy > errors[-1] + MONOTONE_SLACK * max(1.0, errors[0]):
            raise NumericalError(
                f"refinement energy increased: {errors[-1]} -> {energy}"
            )
        errors.append(energy)
        assignment_prev = assignment
    result = FunctionalMap(
        C=c,
        basis_x=basis_x,
        basis_y=basis_y,
        energies=dict(fmap.energies),
        ridge_applied=fmap.ridge_applied,
        refine_errors=errors,
    )
    pmap = PointMap(assignment=assignment_prev, n_source=basis_x.n)
    return result, pmap


def _roundtrip_error(t_xy, t_yx, geo_x):
    """Sum over source vertices x of d_X(x, T_XY(T_YX(x))) (graph geodesic)."""
    n_x = len(t_yx)
    x = np.arange(n_x)
    landed = t_xy[t_yx]
    moved = landed != x
    if not moved.any():
        return 0.0
    return float(np.sum(geo_x.distance(landed[moved], x[moved])))


def _resolve_collisions(assignment, second_choice, roundtrip_delta, geo):
    """Reassign colliding entries to their second-nearest neighbor when that
    strictly lowers the round-trip error. Deterministic processing order."""
    assignment = assignment.copy()
    order = np.argsort(assignment, kind="stable")
    grouped = {}
    for idx in order:
        grouped.setdefault(int(assignment[idx]), []).append(int(idx))
    for hit in sorted(grouped):
        members = grouped[hit]
        if len(members) < 2:
            continue
        for entry in members[1:]:  # keep the lowest-id claimant in place
            candidate = int(second_choice[entry])
            if candidate == assignment[entry]:
                continue
            if roundtrip_delta(entry, candidate, assignment, geo) < 0.0:
                assignment[entry] = candidate
    return assignment


def bijective_refine(fmap_xy, fmap_yx, basis_x=None, basis_y=None, iters=5):
    """Refine both directions, then push toward a bijection.

    Both maps are ICP-refined; the consistency passes then reassign
    many-to-one collisions to second-nearest spectral neighbors whenever
    that strictly reduces the source-side round-trip geodesic error. The
    round-trip error never increases (improving moves only). On meshes
    with vertex-count ratio above 2 the bijectivity passes are skipped.
    """
    basis_x = basis_x or fmap_xy.basis_x
    basis_y = basis_y or fmap_xy.basis_y
    fmap_xy_r, pmap_xy = icp_refine(fmap_xy, basis_x, basis_y, iters)
    fmap_yx_r, pmap_yx = icp_refine(fmap_yx, basis_y, basis_x, iters)
    t_xy = pmap_xy.assignment.copy()
    t_yx = pmap_yx.assignment.copy()

    n_x, n_y = basis_x.n, basis_y.n
    if max(n_x, n_y) > 2 * min(n_x, n_y):
        warnings.warn(
            f"vertex counts {n_x} vs {n_y} differ by more than 2x; "
            "bijectivity pass skipped",
            RuntimeWarning,
            stacklevel=2,
        )
        out_xy = PointMap(t_xy, n_source=n_x)
        out_yx = PointMap(t_yx, n_source=n_y)
        out_xy.inverse = out_yx
        out_yx.inverse = out_xy
        return out_xy, out_yx

    geo_x = GeodesicCache(basis_x.mesh)
    emb_x = basis_x.eigenfunctions @ fmap_xy_r.C.T
    _, second_xy = _nearest_source(emb_x, basis_y.eigenfunctions, second=True)
    emb_y = basis_y.eigenfunctions @ fmap_yx_r.C.T
    _, second_yx = _nearest_source(emb_y, basis_x.eigenfunctions, second=True)

    def delta_xy(y, candidate, assignment, geo):
        affected = np.flatnonzero(t_yx == y)
        if affected.size == 0:
            return 0.0
        cur = assignment[y]
        return float(
            np.sum(geo.row(candidate)[affected]) - np.sum(geo.row(cur)[affected])
        )

    def delta_yx(x, candidate, assignment, geo):
        new_land = t_xy[candidate]
        cur_land = t_xy[assignment[x]]
        return float(geo.row(new_land)[x] - geo.row(cur_land)[x])

    rt = _roundtrip_error(t_xy, t_yx, geo_x)
    history = [rt]
    for _ in range(iters):
        t_xy = _resolve_collisions(t_xy, second_xy, delta_xy, geo_x)
        t_yx = _resolve_collisions(t_yx, second_yx, delta_yx, geo_x)
        rt_new = _roundtrip_error(t_xy, t_yx, geo_x)
        if rt_new > rt + MONOTONE_SLACK * max(1.0, history[0]):
            raise NumericalError(f"round-trip error increased: {rt} -> {rt_new}")
        improved = rt_new < rt
        rt = rt_new
        history.append(rt)
        if not improved:
            break
    out_xy = PointMap(t_xy, n_source=n_x)
    out_yx = PointMap(t_yx, n_source=n_y)
    out_xy.inverse = out_yx
    out_yx.inverse = out_xy
    out_xy.roundtrip_history = history
    return out_xy, out_yx
