"""Gripper description, grasp records and grasp-model construction.

Tool-frame conventions for the parallel jaw gripper: the origin sits
midway between the fingertip pad centers, +x is the closing axis, +y the
pad width direction and +z points from the fingertips toward the palm
(the gripper approaches the object travelling along -z). Finger pads are
rectangles at x = +/- opening/2 spanning the pad footprint in y and z.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .._util import atomic_write
from ..errors import NoGraspsInRegionError
from ..mesh.proximity import carrying_vertices, closest_surface_points
from ..registration import RigidTransform

ANTIPODAL_ANGLE_TOL = np.deg2rad(20.0)
SURFACE_CONTACT_TOL = 1e-6  # m; grasp contacts must lie on the mesh


@dataclass
class GripperSpec:
    """Parallel jaw gripper geometry (meters).

    The geometric feasibility and contact operations support exactly two
    fingers; ``n_fingers`` is kept general for imported grasp lists.
    """

    n_fingers: int = 2
    opening_min: float = 0.0
    opening_max: float = 0.08
    pad_width: float = 0.02
    pad_length: float = 0.03
    finger_thickness: float = 0.012
    palm_clearance: float = 0.01
    palm_depth: float = 0.04

    def __post_init__(self):
        if self.n_fingers < 2:
            raise ValueError("n_fingers must be >= 2")
        if not self.opening_max > self.opening_min >= 0:
            raise ValueError("need opening_max > opening_min >= 0")
        for name in ("pad_width", "pad_length", "finger_thickness", "palm_depth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    def require_jaw(self):
        if self.n_fingers != 2:
            raise NotImplementedError(
                "geometric feasibility is implemented for 2-finger jaw grippers"
            )

    def finger_frame(self, j, opening):
        """Pose of finger j's pad center in the tool frame (pad normal -> inward)."""
        self.require_jaw()
        sign = (+1.0, -1.0)[j]
        rot = np.eye(3) if sign > 0 else np.diag([-1.0, 1.0, -1.0])
        return RigidTransform(rot, np.array([sign * opening / 2.0, 0.0, 0.0]))

    def to_json(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_json(cls, data):
        return cls(**data)

    def save(self, path):
        with atomic_write(path) as out:
            json.dump(self.to_json(), out, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as handle:
            return cls.from_json(json.load(handle))


@dataclass
class Contact:
    point: np.ndarray
    vertex_id: int

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=np.float64).reshape(3)
        self.vertex_id = int(self.vertex_id)


@dataclass
class Grasp:
    """Gripper pose (tool frame in world coordinates) with contact points."""

    pose: RigidTransform
    opening: float
    score: float = 0.0
    contacts: list = None

    def contact_vertex_ids(self):
        if not self.contacts:
            return []
        return [c.vertex_id for c in self.contacts]

    def validate_on(self, mesh, gripper):
        if not gripper.opening_min <= self.opening <= gripper.opening_max:
            raise ValueError(
                f"opening {self.opening} outside gripper range "
                f"[{gripper.opening_min}, {gripper.opening_max}]"
            )
        if self.contacts:
            pts = np.array([c.point for c in self.contacts])
            _, _, dists = closest_surface_points(pts, mesh)
            if dists.max() > SURFACE_CONTACT_TOL:
                raise ValueError(
                    f"contact {dists.argmax()} is {dists.max():.3g} m off the surface"
                )
        return self

    def to_json(self):
        return {
            "pose": self.pose.matrix().reshape(-1).tolist(),
            "opening": float(self.opening),
            "score": float(self.score),
            "contact_vertex_ids": self.contact_vertex_ids(),
        }

    @classmethod
    def from_json(cls, data, mesh=None):
        pose = RigidTransform.from_matrix(np.array(data["pose"]).reshape(4, 4))
        contacts = None
        ids = data.get("contact_vertex_ids") or []
        if ids and mesh is not None:
            contacts = [Contact(mesh.vertices[i], i) for i in ids]
        return cls(
            pose=pose,
            opening=float(data["opening"]),
            score=float(data.get("score", 0.0)),
            contacts=contacts,
        )


def save_grasps(path, grasps):
    with atomic_write(path) as out:
        json.dump([g.to_json() for g in grasps], out, indent=2)


def load_grasps(path, mesh=None):
    with open(path) as handle:
        data = json.load(handle)
    return [Grasp.from_json(item, mesh=mesh) for item in data]


@dataclass
class GraspModel:
    """Ranked region-restricted grasps, the segmented region and the surface."""

    grasps: list
    region: object  # Segmentation with selected_region set
    surface: object  # source TriMesh

    @property
    def region_id(self):
        return self.region.selected_region

    def region_vertices(self):
        return self.region.region_vertices()


def build_grasp_model(mesh, segmentation, region_id, grasps):
    """Filter a ranked grasp list to those fully inside the chosen region.

    Order is preserved; grasps must already be sorted by descending score
    and carry contacts. Raises when the filtered list is empty.
    """
    region = segmentation.with_region(region_id)
    scores = [g.score for g in grasps]
    if any(b > a for a, b in zip(scores, scores[1:])):
        raise ValueError("grasp list must be sorted by descending score")
    labels = segmentation.labels
    kept = []
    for g in grasps:
        if not g.contacts:
            raise ValueError("grasps must carry contacts to be filtered by region")
        if all(labels[c.vertex_id] == region_id for c in g.contacts):
            kept.append(g)
    if not kept:
        raise NoGraspsInRegionError(
            f"no grasps in region {region_id} (of {len(grasps)} candidates)"
        )
    return GraspModel(grasps=kept, region=region, surface=mesh)


def _one_ring_normal_variance(mesh):
    """Per-vertex spherical variance of one-ring face normals (0 = flat)."""
    fn = mesh.face_normals()
    acc = np.zeros((mesh.n_vertices, 3))
    cnt = np.zeros(mesh.n_vertices)
    for k in range(3):
        np.add.at(acc, mesh.faces[:, k], fn)
        np.add.at(cnt, mesh.faces[:, k], 1.0)
    cnt = np.maximum(cnt, 1.0)
    mean_norm = np.linalg.norm(acc / cnt[:, None], axis=1)
    return 1.0 - np.clip(mean_norm, 0.0, 1.0)


def _roll_candidates(axis, n_rolls=16):
    """Evenly spaced unit directions perpendicular to the closing axis."""
    ref = np.eye(3)[int(np.argmin(np.abs(axis)))]
    u = np.cross(axis, ref)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    angles = np.linspace(0.0, 2 * np.pi, n_rolls, endpoint=False)
    return np.cos(angles)[:, None] * u[None, :] + np.sin(angles)[:, None] * v[None, :]


def _collision_count(local, gripper):
    """Vertices (grasp-frame coords) inside the palm or finger sweep volumes."""
    half_max = gripper.opening_max / 2.0
    in_pad_y = np.abs(local[:, 1]) <= gripper.pad_width / 2.0
    body = (
        in_pad_y
        & (local[:, 2] >= -gripper.pad_length / 2.0)
        & (np.abs(local[:, 0]) > half_max)
        & (np.abs(local[:, 0]) <= half_max + gripper.finger_thickness)
    )
    palm_z0 = gripper.pad_length / 2.0 + gripper.palm_clearance
    palm = (
        (np.abs(local[:, 0]) <= half_max + gripper.finger_thickness)
        & in_pad_y
        & (local[:, 2] >= palm_z0)
        & (local[:, 2] <= palm_z0 + gripper.palm_depth)
    )
    return int(body.sum() + palm.sum())


def _best_roll_frame(mesh, gripper, midpoint, axis):
    """Gripper frame about the closing axis with the clearest approach.

    Evaluates evenly spaced roll angles and keeps the one whose palm and
    finger sweep volumes contain the fewest mesh vertices (ties resolve
    to the lowest angle index).
    """
    best = None
    for z_axis in _roll_candidates(axis):
        y_axis = np.cross(z_axis, axis)
        y_axis /= np.linalg.norm(y_axis)
        z_exact = np.cross(axis, y_axis)
        rot = np.column_stack([axis, y_axis, z_exact])
        local = (mesh.vertices - midpoint) @ rot
        count = _collision_count(local, gripper)
        if best is None or count < best[0]:
            best = (count, rot)
        if count == 0:
            break
    return best[1]


def generate_antipodal_grasps(mesh, region, gripper, count=20, seed=0, max_region=800):
    """Antipodal vertex-pair grasps inside ``region``, ranked by flatness.

    Pairs must have opposing normals within 20 degrees, both aligned with
    the pair axis, and separation within the opening range. The score is
    the (negated) summed one-ring normal variance of the two contacts, so
    flat neighborhoods rank first. Deterministic given ``seed``; returns
    an empty list when no pair qualifies.
    """
    region = np.asarray(region, dtype=np.int64)
    if region.size == 0:
        raise ValueError("region is empty")
    rng = np.random.default_rng(seed)
    if len(region) > max_region:
        region = np.sort(rng.choice(region, size=max_region, replace=False))

    normals = mesh.vertex_normals()
    variance = _one_ring_normal_variance(mesh)
    pts = mesh.vertices[region]
    nrm = normals[region]
    cos_tol = np.cos(ANTIPODAL_ANGLE_TOL)

    diff = pts[None, :, :] - pts[:, None, :]
    dist = np.linalg.norm(diff, axis=2)
    iu, ju = np.triu_indices(len(region), k=1)
    d = dist[iu, ju]
    ok = (d >= max(gripper.opening_min, 1e-9)) & (d <= gripper.opening_max)
    iu, ju, d = iu[ok], ju[ok], d[ok]
    if len(iu) == 0:
        return []
    axis = (pts[ju] - pts[iu]) / d[:, None]
    n_i = nrm[iu]
    n_j = nrm[ju]
    ok = (
        (np.einsum("ij,ij->i", n_i, axis) <= -cos_tol)
        & (np.einsum("ij,ij->i", n_j, axis) >= cos_tol)
        & (np.einsum("ij,ij->i", n_i, n_j) <= -cos_tol)
    )
    iu, ju, d, axis = iu[ok], ju[ok], d[ok], axis[ok]
    if len(iu) == 0:
        return []

    vid_i, vid_j = region[iu], region[ju]
    score = -(variance[vid_i] + variance[vid_j])
    order = np.lexsort((vid_j, vid_i, -score))[:count]

    grasps = []
    for idx in order:
        p_i, p_j = mesh.vertices[vid_i[idx]], mesh.vertices[vid_j[idx]]
        mid = 0.5 * (p_i + p_j)
        x_axis = axis[idx]
        rot = _best_roll_frame(mesh, gripper, mid, x_axis)
        grasps.append(
            Grasp(
                pose=RigidTransform(rot, mid),
                opening=float(d[idx]),
                score=float(score[idx]),
                contacts=[
                    Contact(p_i, vid_i[idx]),
                    Contact(p_j, vid_j[idx]),
                ],
            )
        )
    return grasps
