"""Indexed triangle mesh container and structural validation."""

import json
from dataclasses import dataclass, field

import numpy as np

from .._util import content_hash
from ..errors import MeshValidationError

MIN_FACE_AREA = 1e-12  # m^2; faces below this count are degenerate


class TriMesh:
    """Indexed triangle surface with per-vertex positions in meters.

    Vertices and faces are stored as read-only numpy arrays. Construction
    enforces the hard invariants (index bounds, distinct indices per face,
    face area above ``MIN_FACE_AREA``); softer properties such as
    manifoldness and orientation are reported by :func:`validate`.
    """

    def __init__(self, vertices, faces, normals=None, check=True):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshValidationError(f"vertices must be (n, 3), got {self.vertices.shape}")
        if self.faces.size == 0:
            self.faces = self.faces.reshape(0, 3)
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshValidationError(f"faces must be (m, 3), got {self.faces.shape}")
        self.normals = None
        if normals is not None:
            self.normals = np.ascontiguousarray(normals, dtype=np.float64)
            if self.normals.shape != self.vertices.shape:
                raise MeshValidationError("normals must match vertices in shape")
        if check:
            self._check_invariants()
        for arr in (self.vertices, self.faces, self.normals):
            if arr is not None:
                arr.setflags(write=False)

    def _check_invariants(self):
        n = len(self.vertices)
        if self.faces.size:
            if self.faces.min() < 0 or self.faces.max() >= n:
                raise MeshValidationError("face index out of range")
        bad = degenerate_faces(self.vertices, self.faces)
        if bad:
            raise MeshValidationError(f"degenerate faces (indices): {bad}")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def edges(self):
        """Unique undirected edges as a (n_edges, 2) sorted-index array."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)

    def edge_lengths(self, edges=None):
        if edges is None:
            edges = self.edges()
        d = self.vertices[edges[:, 0]] - self.vertices[edges[:, 1]]
        return np.linalg.norm(d, axis=1)

    def face_areas(self):
        v = self.vertices
        f = self.faces
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def face_normals(self):
        v = self.vertices
        f = self.faces
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
        norm = np.linalg.norm(cross, axis=1)
        norm[norm == 0.0] = 1.0
        return cross / norm[:, None]

    def vertex_normals(self):
        """Area-weighted per-vertex normals (unit vectors).

        Computed fresh from faces; stored file normals, if any, are ignored.
        """
        fn = self.face_normals() * self.face_areas()[:, None]
        acc = np.zeros_like(self.vertices)
        for k in range(3):
            np.add.at(acc, self.faces[:, k], fn)
        norm = np.linalg.norm(acc, axis=1)
        norm[norm == 0.0] = 1.0
        return acc / norm[:, None]

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bbox_diagonal(self):
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))

    def centroid(self):
        return self.vertices.mean(axis=0)

    def total_area(self):
        return float(self.face_areas().sum())

    def content_hash(self):
        return content_hash(self.vertices, self.faces)

    def with_vertices(self, vertices, check=True):
        """New mesh sharing this connectivity with replaced positions."""
        return TriMesh(vertices, self.faces.copy(), check=check)

    def __repr__(self):
        return f"TriMesh(n_vertices={self.n_vertices}, n_faces={self.n_faces})"


def degenerate_faces(vertices, faces):
    """Indices of faces with repeated vertices or area <= MIN_FACE_AREA."""
    if len(faces) == 0:
        return []
    repeated = (
        (faces[:, 0] == faces[:, 1])
        | (faces[:, 1] == faces[:, 2])
        | (faces[:, 0] == faces[:, 2])
    )
    cross = np.cross(
        vertices[faces[:, 1]] - vertices[faces[:, 0]],
        vertices[faces[:, 2]] - vertices[faces[:, 0]],
    )
    tiny = 0.5 * np.linalg.norm(cross, axis=1) <= MIN_FACE_AREA
    return np.flatnonzero(repeated | tiny).tolist()


@dataclass
class MeshReport:
    """Structural report produced by :func:`validate` (report-only, never raises)."""

    n_vertices: int
    n_faces: int
    manifold: bool
    watertight: bool
    orientation_consistent: bool
    degenerate_faces: list = field(default_factory=list)
    boundary_loop_count: int = 0
    n_components: int = 1
    euler_characteristic: int = 0
    genus: int | None = None

    def to_json(self, indent=2):
        return json.dumps(self.__dict__, indent=indent, sort_keys=True)


def _boundary_loop_count(boundary_edges):
    """Count closed loops among boundary edges (cycles in the boundary graph)."""
    if len(boundary_edges) == 0:
        return 0
    adj = {}
    for a, b in boundary_edges:
        adj.setdefault(int(a), []).append(int(b))
        adj.setdefault(int(b), []).append(int(a))
    seen = set()
    loops = 0
    for start in adj:
        if start in seen:
            continue
        stack = [start]
        seen.add(start)
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        loops += 1
    return loops


def _component_count(n_vertices, edges):
    parent = np.arange(n_vertices)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    roots = {find(i) for i in range(n_vertices)}
    return len(roots)


def validate(mesh):
    """Structural report: manifoldness, watertightness, orientation, topology.

    Report-only; never raises. Meshes constructed with ``check=False`` may
    carry degenerate faces, which are listed rather than rejected.
    """
    f = mesh.faces
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    undirected = np.sort(directed, axis=1)
    edges, counts = np.unique(undirected, axis=0, return_counts=True)

    manifold = bool((counts <= 2).all())
    watertight = bool(len(edges) > 0 and (counts == 2).all())

    # Orientation: each interior edge must be traversed once in each direction.
    dir_unique, dir_counts = np.unique(directed, axis=0, return_counts=True)
    oriented = bool((dir_counts == 1).all()) if len(dir_unique) else True

    boundary = edges[counts == 1]
    n_comp = _component_count(mesh.n_vertices, edges) if len(edges) else mesh.n_vertices
    euler = mesh.n_vertices - len(edges) + mesh.n_faces
    genus = None
    if n_comp == 1 and manifold and oriented:
        loops = _boundary_loop_count(boundary)
        g2 = 2 - loops - euler
        if g2 >= 0 and g2 % 2 == 0:
            genus = g2 // 2
    return MeshReport(
        n_vertices=mesh.n_vertices,
        n_faces=mesh.n_faces,
        manifold=manifold,
        watertight=watertight,
        orientation_consistent=oriented,
        degenerate_faces=degenerate_faces(mesh.vertices, mesh.faces),
        boundary_loop_count=_boundary_loop_count(boundary),
        n_components=n_comp,
        euler_characteristic=int(euler),
        genus=genus,
    )
