"""Grasp transfer: region Procrustes, feasibility, local re-planning.

The ranked-grasp loop transforms candidates by the region's rigid motion,
gates them through a geometric feasibility check (the stand-in for a
robot IK check), and re-plans the first feasible grasp toward the mapped
finger targets.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .._util import atomic_write
from ..errors import GraspUnreachableError, NumericalError
from ..mesh.proximity import carrying_vertices, closest_surface_points
from ..registration import RigidTransform, kabsch
from .model import Contact, Grasp

PENETRATION_TOL = 1e-3  # m; bodies may sink at most 1 mm into the surface
POSE_CHANGE_RHO = 0.05  # m per radian: makes rotation commensurate with translation


@dataclass
class RegionCorrespondence:
    """Row-aligned region positions on source and target (3 x n each)."""

    v_x: np.ndarray
    v_y: np.ndarray

    def __post_init__(self):
        self.v_x = np.asarray(self.v_x, dtype=np.float64)
        self.v_y = np.asarray(self.v_y, dtype=np.float64)
        if self.v_x.shape != self.v_y.shape or self.v_x.shape[0] != 3:
            raise ValueError("v_x and v_y must both be (3, n)")

    @property
    def n(self):
        return self.v_x.shape[1]

    def residuals(self, transform):
        moved = transform.apply(self.v_x.T)
        return np.linalg.norm(moved - self.v_y.T, axis=1)


@dataclass
class ReplanConfig:
    """Weights and search budget for local grasp re-planning.

    The pose-change penalty is quadratic in the perturbation magnitude
    (||dt|| + rho * dtheta)^2; psi must dominate every attainable
    in-range objective so infeasible poses are never preferred.
    """

    mu1: float = 0.2
    mu2: float = 0.8
    psi: float = 1e6
    translation_step: float = 0.01
    rotation_step: float = np.deg2rad(5.0)
    min_translation_step: float = 1e-4
    min_rotation_step: float = np.deg2rad(0.05)
    max_evaluations: int = 2000
    rho: float = POSE_CHANGE_RHO

    def validate(self):
        if self.mu1 < 0 or self.mu2 < 0:
            raise ValueError("mu1 and mu2 must be >= 0")
        if self.psi <= 0:
            raise ValueError("psi must be > 0")
        if self.max_evaluations < 1:
            raise ValueError("max_evaluations must be >= 1")
        return self


def match_on_target(pmap, source_ids, source_mesh):
    """Target vertices matched to given source vertices under a Y->X map.

    Uses the stored inverse map when present; otherwise picks, for each
    source vertex, the target vertex whose image lands nearest to it on
    the source surface (exact preimages give distance zero).
    """
    source_ids = np.asarray(source_ids, dtype=np.int64)
    if pmap.inverse is not None:
        return pmap.inverse.assignment[source_ids]
    images = source_mesh.vertices[pmap.assignment]
    tree = cKDTree(images)
    _, idx = tree.query(source_mesh.vertices[source_ids])
    return np.asarray(idx, dtype=np.int64)


def region_transform(model, pmap, target_mesh):
    """Rigid motion of the grasp region onto the target (least squares).

    Builds row-aligned position matrices from the region vertices and
    their point-map matches, then solves the Procrustes problem by SVD
    with reflection correction.
    """
    region_ids = model.region_vertices()
    matched = match_on_target(pmap, region_ids, model.surface)
    v_x = model.surface.vertices[region_ids]
    v_y = target_mesh.vertices[matched]
    if len(v_x) < 3:
        raise NumericalError("fewer than 3 region correspondences")
    transform = kabsch(v_x, v_y)  # raises on collinear configurations
    corr = RegionCorrespondence(v_x=v_x.T, v_y=v_y.T)
    return transform, corr


def transfer_grasp(grasp, transform):
    """Compose the region transform with the grasp pose.

    Opening and score carry over; contacts are dropped and re-derived on
    the target mesh by the pipeline.
    """
    return Grasp(
        pose=transform @ grasp.pose,
        opening=grasp.opening,
        score=grasp.score,
        contacts=None,
    )


@dataclass
class FeasibilityReport:
    """Outcome of the three-condition geometric gate.

    a: required opening within the gripper range; b: no finger or palm
    swept-volume penetration beyond 1 mm during the approach; c: both
    pads reach surface inside the pad footprint. Off-center grasps are
    allowed: the part re-centers compliantly while closing, and local
    re-planning pulls contacts onto their targets afterwards.
    """

    feasible: bool
    opening_ok: bool
    collision_free: bool
    contact_ok: bool
    required_opening: float = 0.0
    center_offset: float = 0.0
    messages: list = field(default_factory=list)

    def failed_conditions(self):
        out = []
        if not self.opening_ok:
            out.append("a")
        if not self.collision_free:
            out.append("b")
        if not self.contact_ok:
            out.append("c")
        return out

    def to_json(self):
        return {
            "feasible": self.feasible,
            "failed_conditions": self.failed_conditions(),
            "required_opening": self.required_opening,
            "center_offset": self.center_offset,
            "messages": list(self.messages),
        }


def feasibility_check(grasp, mesh, gripper):
    """Geometric feasibility of a grasp pose on a mesh (report, never raises)."""
    gripper.require_jaw()
    local = grasp.pose.inverse().apply(mesh.vertices)
    in_pad = (np.abs(local[:, 1]) <= gripper.pad_width / 2.0) & (
        np.abs(local[:, 2]) <= gripper.pad_length / 2.0
    )
    messages = []

    contact_ok = bool(in_pad.any())
    required = 0.0
    center_off = 0.0
    opening_ok = False
    if contact_ok:
        xs = local[in_pad, 0]
        x_hi, x_lo = float(xs.max()), float(xs.min())
        required = x_hi - x_lo
        center_off = 0.5 * (x_hi + x_lo)
        if required <= 1e-9:
            contact_ok = False
            messages.append("pads meet no opposing surfaces")
        opening_ok = gripper.opening_min <= required <= gripper.opening_max
        if not opening_ok:
            messages.append(
                f"required opening {required:.4f} outside "
                f"[{gripper.opening_min}, {gripper.opening_max}]"
            )
    else:
        messages.append("no surface inside the pad footprint")

    collision_free = True
    # approach sweep: finger bodies descend open at max width
    half_max = gripper.opening_max / 2.0
    body = (
        (np.abs(local[:, 1]) <= gripper.pad_width / 2.0)
        & (local[:, 2] >= -gripper.pad_length / 2.0)
        & (np.abs(local[:, 0]) > half_max + PENETRATION_TOL)
        & (np.abs(local[:, 0]) <= half_max + gripper.finger_thickness - PENETRATION_TOL)
    )
    if body.any():
        collision_free = False
        messages.append(f"{int(body.sum())} vertices block the finger approach sweep")
    palm_z0 = gripper.pad_length / 2.0 + gripper.palm_clearance
    palm = (
        (np.abs(local[:, 0]) <= half_max + gripper.finger_thickness)
        & (np.abs(local[:, 1]) <= gripper.pad_width / 2.0)
        & (local[:, 2] >= palm_z0 + PENETRATION_TOL)
        & (local[:, 2] <= palm_z0 + gripper.palm_depth)
    )
    if palm.any():
        collision_free = False
        messages.append(f"{int(palm.sum())} vertices penetrate the palm volume")

    return FeasibilityReport(
        feasible=opening_ok and collision_free and contact_ok,
        opening_ok=opening_ok,
        collision_free=collision_free,
        contact_ok=contact_ok,
        required_opening=required,
        center_offset=center_off,
        messages=messages,
    )


def finger_contacts(grasp, mesh, gripper):
    """Nearest surface point per finger frame, with carrying vertex ids."""
    gripper.require_jaw()
    origins = np.array(
        [
            (grasp.pose @ gripper.finger_frame(j, grasp.opening)).translation
            for j in range(gripper.n_fingers)
        ]
    )
    points, _, _ = closest_surface_points(origins, mesh)
    vids = carrying_vertices(points, mesh)
    return [Contact(points[j], vids[j]) for j in range(len(points))]


def _perturbed_pose(base_pose, u):
    """base pose composed with a local perturbation (3 translations, 3 rotations)."""
    cx, sx = np.cos(u[3]), np.sin(u[3])
    cy, sy = np.cos(u[4]), np.sin(u[4])
    cz, sz = np.cos(u[5]), np.sin(u[5])
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    local = RigidTransform(rz @ ry @ rx, u[:3])
    return base_pose @ local


def _pose_change(u, rho):
    angle = np.linalg.norm(u[3:])
    return (float(np.linalg.norm(u[:3])) + rho * float(angle)) ** 2


def replan_local(grasp, targets, mesh, gripper, cfg=None):
    """Re-plan a transferred grasp toward mapped finger targets.

    Minimizes mu1 * sum_j ||p_c_j - target_j|| + mu2 * eps + psi * [infeasible]
    over local pose perturbations by a deterministic shrinking pattern
    search; eps is the squared pose-change magnitude. The returned grasp
    is feasible with objective <= the entry objective, or the search
    raises ``GraspUnreachableError``.
    """
    cfg = (cfg or ReplanConfig()).validate()
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if len(targets) != gripper.n_fingers:
        raise ValueError(f"need {gripper.n_fingers} targets, got {len(targets)}")

    base_pose = grasp.pose

    def contact_term(contacts):
        # jaw fingers are interchangeable: take the best finger-to-target
        # pairing so a flipped grasp is not penalized artificially
        pts = np.array([c.point for c in contacts])
        direct = float(np.linalg.norm(pts - targets, axis=1).sum())
        if len(targets) == 2:
            swapped = float(np.linalg.norm(pts - targets[::-1], axis=1).sum())
            return min(direct, swapped)
        return direct

    def evaluate(u):
        pose = _perturbed_pose(base_pose, u)
        probe = Grasp(pose=pose, opening=grasp.opening, score=grasp.score)
        report = feasibility_check(probe, mesh, gripper)
        opening = report.required_opening if report.contact_ok else grasp.opening
        probe.opening = min(max(opening, gripper.opening_min), gripper.opening_max)
        contacts = finger_contacts(probe, mesh, gripper)
        obj = cfg.mu1 * contact_term(contacts) + cfg.mu2 * _pose_change(u, cfg.rho)
        if not report.feasible:
            obj += cfg.psi
        return obj, report, contacts, probe

    u = np.zeros(6)
    best_obj, best_report, best_contacts, best_grasp = evaluate(u)
    evals = 1
    steps = np.array([cfg.translation_step] * 3 + [cfg.rotation_step] * 3)
    mins = np.array([cfg.min_translation_step] * 3 + [cfg.min_rotation_step] * 3)
    while evals < cfg.max_evaluations and (steps > mins).any():
        candidate = None
        for axis in range(6):
            if steps[axis] <= mins[axis] / 2.0:
                continue
            for sign in (+1.0, -1.0):
                if evals >= cfg.max_evaluations:
                    break
                trial = u.copy()
                trial[axis] += sign * steps[axis]
                obj, report, contacts, probe = evaluate(trial)
                evals += 1
                if candidate is None or obj < candidate[0]:
                    candidate = (obj, report, contacts, probe, trial)
        if candidate is not None and candidate[0] < best_obj - 1e-15:
            best_obj, best_report, best_contacts, best_grasp, u = candidate
        else:
            steps = steps / 2.0

    if not best_report.feasible:
        raise GraspUnreachableError(
            "grasp unreachable: no feasible pose within the search budget",
            reports=[best_report.to_json()],
        )
    result = Grasp(
        pose=best_grasp.pose,
        opening=best_grasp.opening,
        score=grasp.score,
        contacts=best_contacts,
    )
    return result


@dataclass
class TransferConfig:
    gripper: object
    replan: ReplanConfig = field(default_factory=ReplanConfig)


@dataclass
class GraspResult:
    """Final transferred grasp plus provenance for the whole ranked loop."""

    grasp: Grasp
    rank: int
    transform: RigidTransform
    mapped_targets: np.ndarray
    region_accurate: bool
    contact_in_region: list
    skipped: list = field(default_factory=list)

    def to_json(self):
        return {
            "grasp": self.grasp.to_json(),
            "rank": self.rank,
            "transform": self.transform.matrix().reshape(-1).tolist(),
            "mapped_targets": np.asarray(self.mapped_targets).tolist(),
            "region_accurate": bool(self.region_accurate),
            "contact_in_region": [bool(x) for x in self.contact_in_region],
            "skipped": self.skipped,
        }

    def save(self, path):
        with atomic_write(path) as out:
            json.dump(self.to_json(), out, indent=2, sort_keys=True)


def transfer_pipeline(model, target_mesh, pmap, cfg):
    """Run the full transfer: region motion, ranked feasibility loop,
    contact mapping and local re-planning.

    Candidates that fail the feasibility gate or whose re-planning cannot
    reach a feasible pose are skipped (the loop continues down the
    ranking). Raises ``GraspUnreachableError`` with per-grasp reports when
    every candidate fails.
    """
    gripper = cfg.gripper
    transform, _ = region_transform(model, pmap, target_mesh)
    labels = model.region.labels
    region_id = model.region_id
    region_on_target = labels[pmap.assignment] == region_id

    skipped = []
    for rank, source_grasp in enumerate(model.grasps):
        candidate = transfer_grasp(source_grasp, transform)
        report = feasibility_check(candidate, target_mesh, gripper)
        if not report.feasible:
            skipped.append({"rank": rank, "report": report.to_json()})
            continue
        candidate.opening = report.required_opening
        source_ids = np.array(source_grasp.contact_vertex_ids(), dtype=np.int64)
        target_ids = match_on_target(pmap, source_ids, model.surface)
        targets = target_mesh.vertices[target_ids]
        try:
            final = replan_local(candidate, targets, target_mesh, gripper, cfg.replan)
        except GraspUnreachableError as exc:
            skipped.append({"rank": rank, "report": exc.reports})
            continue
        in_region = [bool(region_on_target[c.vertex_id]) for c in final.contacts]
        return GraspResult(
            grasp=final,
            rank=rank,
            transform=transform,
            mapped_targets=targets,
            region_accurate=all(in_region),
            contact_in_region=in_region,
            skipped=skipped,
        )
    raise GraspUnreachableError(
        f"grasp unreachable: all {len(model.grasps)} ranked grasps failed",
        reports=skipped,
    )
