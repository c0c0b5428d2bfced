"""Ascii mesh file I/O: OBJ, OFF and PLY readers, OBJ/PLY writers.

Binary variants are out of scope; readers raise :class:`MeshFormatError`
with the offending line number on malformed input.
"""

import os

import numpy as np

from .._util import atomic_write
from ..errors import MeshFormatError, MeshValidationError
from .trimesh import TriMesh, degenerate_faces


def load_mesh(path):
    """Load an ascii OBJ, OFF or PLY file into a :class:`TriMesh`.

    Vertex order is preserved from the file. Quads are fan-triangulated;
    degenerate faces raise :class:`MeshValidationError` listing offenders.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise MeshFormatError("file does not exist", path=path)
    ext = os.path.splitext(path)[1].lower()
    with open(path, "r", errors="replace") as handle:
        lines = handle.readlines()
    if ext == ".obj":
        verts, faces, normals = _parse_obj(lines, path)
    elif ext == ".off":
        verts, faces, normals = _parse_off(lines, path)
    elif ext == ".ply":
        verts, faces, normals = _parse_ply(lines, path)
    else:
        raise MeshFormatError(f"unsupported mesh format '{ext}'", path=path)
    verts = np.asarray(verts, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64) if faces else np.zeros((0, 3), np.int64)
    if faces.size:
        if faces.min() < 0 or faces.max() >= len(verts):
            raise MeshFormatError("face index out of range", path=path)
        bad = degenerate_faces(verts, faces)
        if bad:
            raise MeshValidationError(f"{path}: degenerate faces (indices): {bad}")
    return TriMesh(verts, faces, normals=normals)


def _triangulate(poly, line_no, path):
    if len(poly) < 3:
        raise MeshFormatError(f"face with {len(poly)} vertices", path=path, line=line_no)
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def _parse_obj(lines, path):
    verts, faces, normals = [], [], []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise MeshFormatError("vertex needs 3 coordinates", path=path, line=lineno)
            try:
                verts.append([float(x) for x in parts[1:4]])
            except ValueError:
                raise MeshFormatError("bad vertex coordinate", path=path, line=lineno)
        elif tag == "vn":
            try:
                normals.append([float(x) for x in parts[1:4]])
            except ValueError:
                raise MeshFormatError("bad normal", path=path, line=lineno)
        elif tag == "f":
            idx = []
            for token in parts[1:]:
                head = token.split("/")[0]
                try:
                    i = int(head)
                except ValueError:
                    raise MeshFormatError(f"bad face index '{token}'", path=path, line=lineno)
                if i == 0:
                    raise MeshFormatError(
                        "face index 0 (OBJ indices are 1-based)", path=path, line=lineno
                    )
                if i < 0:
                    i = len(verts) + 1 + i  # relative indexing
                idx.append(i - 1)
            faces.extend(_triangulate(idx, lineno, path))
    vn = None
    if normals and len(normals) == len(verts):
        vn = np.asarray(normals, dtype=np.float64)
    return verts, faces, vn


def _parse_off(lines, path):
    it = [(i + 1, ln.strip()) for i, ln in enumerate(lines)]
    it = [(no, ln) for no, ln in it if ln and not ln.startswith("#")]
    if not it:
        raise MeshFormatError("empty OFF file", path=path)
    no, header = it[0]
    body = it[1:]
    if header != "OFF":
        # counts may share the header line ("OFF 8 6 0")
        if header.startswith("OFF"):
            body = [(no, header[3:].strip())] + body
        else:
            raise MeshFormatError("missing OFF header", path=path, line=no)
    if not body:
        raise MeshFormatError("missing OFF counts line", path=path)
    no, counts = body[0]
    try:
        nv, nf = [int(x) for x in counts.split()[:2]]
    except (ValueError, IndexError):
        raise MeshFormatError("bad OFF counts line", path=path, line=no)
    rows = body[1:]
    if len(rows) < nv + nf:
        raise MeshFormatError(
            f"expected {nv} vertices and {nf} faces, got {len(rows)} rows", path=path, line=no
        )
    verts, faces = [], []
    for no, ln in rows[:nv]:
        try:
            verts.append([float(x) for x in ln.split()[:3]])
        except ValueError:
            raise MeshFormatError("bad OFF vertex", path=path, line=no)
    for no, ln in rows[nv : nv + nf]:
        parts = ln.split()
        try:
            cnt = int(parts[0])
            poly = [int(x) for x in parts[1 : 1 + cnt]]
        except (ValueError, IndexError):
            raise MeshFormatError("bad OFF face", path=path, line=no)
        faces.extend(_triangulate(poly, no, path))
    return verts, faces, None


def _parse_ply(lines, path):
    if not lines or lines[0].strip() != "ply":
        raise MeshFormatError("missing ply magic", path=path, line=1)
    n_vert = n_face = None
    elements = []  # (name, count) in declaration order
    vert_props = []
    in_vertex = False
    header_end = None
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if line.startswith("format"):
            if "ascii" not in line:
                raise MeshFormatError("only ascii PLY supported", path=path, line=lineno)
        elif line.startswith("element"):
            parts = line.split()
            try:
                name, count = parts[1], int(parts[2])
            except (ValueError, IndexError):
                raise MeshFormatError("bad element line", path=path, line=lineno)
            elements.append((name, count))
            in_vertex = name == "vertex"
            if name == "vertex":
                n_vert = count
            elif name == "face":
                n_face = count
        elif line.startswith("property") and in_vertex:
            vert_props.append(line.split()[-1])
        elif line == "end_header":
            header_end = lineno
            break
    if header_end is None:
        raise MeshFormatError("missing end_header", path=path)
    if n_vert is None:
        raise MeshFormatError("missing vertex element", path=path)
    try:
        ix, iy, iz = (vert_props.index(c) for c in ("x", "y", "z"))
    except ValueError:
        raise MeshFormatError("vertex element lacks x/y/z properties", path=path)

    data_lines = [
        (no, ln.strip())
        for no, ln in enumerate(lines[header_end:], start=header_end + 1)
        if ln.strip()
    ]
    verts, faces = [], []
    cursor = 0
    for name, count in elements:
        rows = data_lines[cursor : cursor + count]
        if len(rows) < count:
            raise MeshFormatError(f"truncated element '{name}'", path=path)
        cursor += count
        if name == "vertex":
            for no, ln in rows:
                parts = ln.split()
                try:
                    verts.append([float(parts[ix]), float(parts[iy]), float(parts[iz])])
                except (ValueError, IndexError):
                    raise MeshFormatError("bad vertex row", path=path, line=no)
        elif name == "face":
            for no, ln in rows:
                parts = ln.split()
                try:
                    cnt = int(parts[0])
                    poly = [int(x) for x in parts[1 : 1 + cnt]]
                except (ValueError, IndexError):
                    raise MeshFormatError("bad face row", path=path, line=no)
                faces.extend(_triangulate(poly, no, path))
    return verts, faces, None


def save_obj(path, mesh, write_normals=False):
    """Write a Wavefront OBJ file (atomic)."""
    with atomic_write(path) as out:
        out.write("# graspmap export\n")
        for v in mesh.vertices:
            out.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        if write_normals:
            for n in mesh.vertex_normals():
                out.write(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
        for f in mesh.faces:
            if write_normals:
                out.write(f"f {f[0]+1}//{f[0]+1} {f[1]+1}//{f[1]+1} {f[2]+1}//{f[2]+1}\n")
            else:
                out.write(f"f {f[0]+1} {f[1]+1} {f[2]+1}\n")


def save_ply(path, mesh, vertex_colors=None):
    """Write an ascii PLY, optionally with per-vertex uchar RGB colors."""
    has_color = vertex_colors is not None
    if has_color:
        vertex_colors = np.asarray(vertex_colors)
        if vertex_colors.shape != (mesh.n_vertices, 3):
            raise ValueError("vertex_colors must be (n_vertices, 3)")
        if vertex_colors.dtype != np.uint8:
            vertex_colors = np.clip(np.rint(vertex_colors), 0, 255).astype(np.uint8)
    with atomic_write(path) as out:
        out.write("ply\nformat ascii 1.0\n")
        out.write(f"element vertex {mesh.n_vertices}\n")
        out.write("property float x\nproperty float y\nproperty float z\n")
        if has_color:
            out.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
        out.write(f"element face {mesh.n_faces}\n")
        out.write("property list uchar int vertex_indices\n")
        out.write("end_header\n")
        for i, v in enumerate(mesh.vertices):
            row = f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g}"
            if has_color:
                c = vertex_colors[i]
                row += f" {c[0]} {c[1]} {c[2]}"
            out.write(row + "\n")
        for f in mesh.faces:
            out.write(f"3 {f[0]} {f[1]} {f[2]}\n")


def label_colors(labels, n_labels=None):
    """Distinct uchar RGB per label id, deterministic palette."""
    labels = np.asarray(labels)
    if n_labels is None:
        n_labels = int(labels.max()) + 1 if labels.size else 1
    # evenly spaced hues, fixed saturation/value
    palette = np.zeros((max(n_labels, 1), 3), dtype=np.uint8)
    for i in range(len(palette)):
        h = (i / max(len(palette), 1)) * 6.0
        c = 200
        x = int(c * (1 - abs(h % 2 - 1)))
        rgb = {0: (c, x, 0), 1: (x, c, 0), 2: (0, c, x), 3: (0, x, c), 4: (x, 0, c), 5: (c, 0, x)}[
            int(h) % 6
        ]
        palette[i] = np.array(rgb, dtype=np.uint8) + 40
    return palette[labels]


def coordinate_colors(points, reference=None):
    """Map 3D positions to RGB by normalized coordinates (correspondence visualisation).

    With ``reference`` given, normalization bounds come from the reference
    point set so matched points on two meshes get identical colors.
    """
    points = np.asarray(points, dtype=np.float64)
    ref = points if reference is None else np.asarray(reference, dtype=np.float64)
    lo = ref.min(axis=0)
    span = ref.max(axis=0) - lo
    span[span == 0.0] = 1.0
    unit = np.clip((points - lo) / span, 0.0, 1.0)
    return (unit * 255).astype(np.uint8)
