"""Synthetic watertight test meshes: icosphere, cylinders, boxes, slabs.

These generators back the ground-truth evaluation dataset; all are
deterministic and produce consistently oriented, watertight surfaces.
"""

import numpy as np

from .trimesh import TriMesh

_PHI = (1.0 + np.sqrt(5.0)) / 2.0


def icosphere(subdivisions=3, radius=1.0):
    """Subdivided icosahedron projected to a sphere.

    Vertex counts by subdivision level: 12, 42, 162, 642, 2562, ...
    """
    t = _PHI
    verts = np.array(
        [
            [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
            [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
            [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
        ],
        dtype=np.float64,
    )
    faces = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    for _ in range(subdivisions):
        verts, faces = _subdivide(verts, faces)
        verts /= np.linalg.norm(verts, axis=1)[:, None]
    return TriMesh(verts * radius, faces)


def _subdivide(verts, faces):
    verts = list(map(tuple, verts))
    cache = {}

    def midpoint(i, j):
        key = (min(i, j), max(i, j))
        if key not in cache:
            a, b = np.array(verts[i]), np.array(verts[j])
            verts.append(tuple((a + b) / 2.0))
            cache[key] = len(verts) - 1
        return cache[key]

    new_faces = []
    for a, b, c in faces:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        new_faces.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
    return np.array(verts, dtype=np.float64), np.array(new_faces, dtype=np.int64)


def profiled_tube(n_axial=32, n_circ=24, length=1.0, radius_fn=None, caps=True):
    """Capped tube along +z with radius ``radius_fn(t, theta)``.

    ``t`` runs in [0, 1] along the axis, ``theta`` in [0, 2 pi). The
    generator behind every tube-like synthetic object.
    """
    if n_axial < 2 or n_circ < 3:
        raise ValueError("tube needs n_axial >= 2 and n_circ >= 3")
    if radius_fn is None:
        radius_fn = lambda t, theta: 0.05
    ts = np.linspace(0.0, 1.0, n_axial)
    theta = np.linspace(0.0, 2 * np.pi, n_circ, endpoint=False)
    verts = []
    for t in ts:
        z = t * length
        for a in theta:
            r = radius_fn(t, a)
            verts.append([r * np.cos(a), r * np.sin(a), z])
    faces = []
    for i in range(n_axial - 1):
        for j in range(n_circ):
            a = i * n_circ + j
            b = i * n_circ + (j + 1) % n_circ
            c = (i + 1) * n_circ + j
            d = (i + 1) * n_circ + (j + 1) % n_circ
            faces.append([a, b, d])
            faces.append([a, d, c])
    if caps:
        bottom = len(verts)
        verts.append([0.0, 0.0, 0.0])
        top = len(verts)
        verts.append([0.0, 0.0, length])
        for j in range(n_circ):
            faces.append([bottom, (j + 1) % n_circ, j])
        base = (n_axial - 1) * n_circ
        for j in range(n_circ):
            faces.append([top, base + j, base + (j + 1) % n_circ])
    return TriMesh(np.array(verts), np.array(faces, dtype=np.int64))


def cylinder(n_axial=32, n_circ=24, radius=0.05, length=1.0, caps=True, radius_profile=None):
    """Capped cylinder along +z, base at z=0.

    ``radius_profile(t)`` with t in [0, 1] overrides the constant radius,
    which allows single-surface objects with a wider "plug" end.
    """
    if radius_profile is None:
        fn = lambda t, theta: radius
    else:
        fn = lambda t, theta: radius_profile(t)
    return profiled_tube(n_axial=n_axial, n_circ=n_circ, length=length, radius_fn=fn, caps=caps)


def _wrapped_bump(theta, center, width):
    delta = np.angle(np.exp(1j * (theta - center)))
    return np.exp(-0.5 * (delta / width) ** 2)


def box(size=(0.2, 0.2, 1.0), divisions=(4, 4, 20)):
    """Axis-aligned watertight box surface centered at the origin."""
    sx, sy, sz = size
    nx, ny, nz = (max(1, int(d)) for d in divisions)
    vert_index = {}
    verts = []

    def vid(x, y, z):
        key = (round(x, 12), round(y, 12), round(z, 12))
        if key not in vert_index:
            vert_index[key] = len(verts)
            verts.append([x, y, z])
        return vert_index[key]

    faces = []

    def grid_face(origin, du, dv, nu, nv):
        for i in range(nu):
            for j in range(nv):
                p00 = origin + du * (i / nu) + dv * (j / nv)
                p10 = origin + du * ((i + 1) / nu) + dv * (j / nv)
                p01 = origin + du * (i / nu) + dv * ((j + 1) / nv)
                p11 = origin + du * ((i + 1) / nu) + dv * ((j + 1) / nv)
                a, b, c, d = (vid(*p) for p in (p00, p10, p01, p11))
                faces.append([a, b, d])
                faces.append([a, d, c])

    ex = np.array([sx, 0, 0])
    ey = np.array([0, sy, 0])
    ez = np.array([0, 0, sz])
    corner = np.array([-sx / 2, -sy / 2, -sz / 2])
    grid_face(corner, ey, ex, ny, nx)                    # bottom (z-)
    grid_face(corner + ez, ex, ey, nx, ny)               # top (z+)
    grid_face(corner, ex, ez, nx, nz)                    # front (y-)
    grid_face(corner + ey, ez, ex, nz, nx)               # back (y+)
    grid_face(corner, ez, ey, nz, ny)                    # left (x-)
    grid_face(corner + ex, ey, ez, ny, nz)               # right (x+)
    return TriMesh(np.array(verts), np.array(faces, dtype=np.int64))


def slab(width=0.12, depth=0.08, thickness=0.02, divisions=(10, 8, 2)):
    """Thin plate along x-thickness; handy for jaw-gripper tests."""
    return box(size=(thickness, width, depth), divisions=(divisions[2], divisions[0], divisions[1]))


def cable_with_plug(
    n_axial=60,
    n_circ=24,
    cable_radius=0.012,
    plug_radius=0.028,
    length=0.8,
    plug_fraction=0.18,
    ridged=True,
):
    """Thin tube with a wider plug section at the far (z=length) end.

    Single connected watertight surface; the plug is a locally rigid part
    suitable as a grasp region under cable-only deformations. Two unequal
    longitudinal ridges (on by default) remove every rotational and mirror
    self-symmetry, which intrinsic descriptors cannot disambiguate.
    """
    taper = 0.035  # fraction of length used to blend radii

    def profile(t):
        t0 = 1.0 - plug_fraction
        if t <= t0 - taper:
            return cable_radius
        if t >= t0:
            return plug_radius
        s = (t - (t0 - taper)) / taper
        return cable_radius + (plug_radius - cable_radius) * s

    def radius_fn(t, theta):
        r = profile(t)
        if ridged:
            r *= 1.0 + 0.30 * _wrapped_bump(theta, 0.0, 0.45) + 0.15 * _wrapped_bump(
                theta, np.deg2rad(100.0), 0.32
            )
        return r

    return profiled_tube(
        n_axial=n_axial, n_circ=n_circ, length=length, radius_fn=radius_fn, caps=True
    )


def ridged_bar(
    n_axial=50,
    n_circ=28,
    width=0.018,
    depth=0.013,
    length=0.7,
    taper=0.35,
    knob_fraction=0.16,
):
    """Rounded-rectangular bar with a taper, one side ridge and a knob end.

    Asymmetric by construction (no rotational or mirror self-isometries);
    the knob end serves as a grasp region under twist deformations.
    """
    p = 4.0  # superellipse exponent: rounded-rectangle cross-section

    def radius_fn(t, theta):
        c, s = np.cos(theta), np.sin(theta)
        base = (np.abs(c / width) ** p + np.abs(s / depth) ** p) ** (-1.0 / p)
        scale = 1.0 + taper * t
        if t >= 1.0 - knob_fraction:
            scale *= 1.5
        elif t >= 1.0 - knob_fraction - 0.05:
            scale *= 1.0 + 0.5 * (t - (1.0 - knob_fraction - 0.05)) / 0.05
        ridge = 1.0 + 0.22 * _wrapped_bump(theta, np.deg2rad(55.0), 0.4)
        return base * scale * ridge

    return profiled_tube(
        n_axial=n_axial, n_circ=n_circ, length=length, radius_fn=radius_fn, caps=True
    )
