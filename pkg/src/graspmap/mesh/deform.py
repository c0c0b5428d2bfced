"""Connectivity-preserving synthetic deformations: bend, twist, stretch.

These stand in for manually sculpted deformed instances; because vertex
ids are untouched, the ground-truth correspondence of every generated
pair is the identity map.
"""

from dataclasses import dataclass, field

import numpy as np

KINDS = ("bend", "twist", "stretch")


@dataclass(frozen=True)
class DeformationSpec:
    """Parametric deformation applied along an axis.

    magnitude is radians for bend/twist and relative elongation for
    stretch (0 means identity for every kind). ``interval`` bounds the
    affected band in absolute axial coordinates (p . axis); None applies
    to the full extent.
    """

    kind: str
    axis: tuple = (0.0, 0.0, 1.0)
    magnitude: float = 0.0
    interval: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown deformation kind '{self.kind}' (expected one of {KINDS})")
        axis = np.asarray(self.axis, dtype=np.float64)
        norm = np.linalg.norm(axis)
        if norm < 1e-12:
            raise ValueError("deformation axis must be nonzero")
        object.__setattr__(self, "axis", tuple(axis / norm))
        if self.interval is not None:
            t0, t1 = self.interval
            if not t1 > t0:
                raise ValueError("interval must satisfy t0 < t1")


def _perpendicular(axis):
    """Deterministic unit vector perpendicular to ``axis``."""
    ref = np.eye(3)[int(np.argmin(np.abs(axis)))]
    d = np.cross(axis, ref)
    return d / np.linalg.norm(d)


def synth_deform(mesh, spec):
    """Apply a :class:`DeformationSpec`; connectivity is always preserved.

    Bend and twist move points by pointwise rotations, so thin regions
    deform near-isometrically. Zero magnitude returns the input mesh
    bit-exact.
    """
    if spec.magnitude == 0.0:
        return mesh
    axis = np.asarray(spec.axis)
    v = mesh.vertices
    t = v @ axis
    if spec.interval is None:
        t0, t1 = float(t.min()), float(t.max())
    else:
        t0, t1 = spec.interval
    span = t1 - t0
    if span <= 0:
        raise ValueError("degenerate axial interval")

    if spec.kind == "twist":
        out = _twist(mesh, v, axis, t, t0, span, spec.magnitude)
    elif spec.kind == "bend":
        out = _bend(mesh, v, axis, t, t0, span, spec.magnitude)
    else:
        out = _stretch(v, axis, t, t0, t1, spec.magnitude)
    return mesh.with_vertices(out)


def _rotation_about(axis, angles):
    """Stack of rotation matrices about ``axis`` (Rodrigues), one per angle."""
    ax = np.asarray(axis)
    K = np.array(
        [[0, -ax[2], ax[1]], [ax[2], 0, -ax[0]], [-ax[1], ax[0], 0]], dtype=np.float64
    )
    c = np.cos(angles)[:, None, None]
    s = np.sin(angles)[:, None, None]
    eye = np.eye(3)[None]
    return c * eye + s * K[None] + (1 - c) * np.outer(ax, ax)[None]


def _twist(mesh, v, axis, t, t0, span, theta):
    centroid = mesh.centroid()
    ramp = np.clip((t - t0) / span, 0.0, 1.0)
    rots = _rotation_about(axis, theta * ramp)
    line_point = centroid + (t - centroid @ axis)[:, None] * axis  # foot on twist line
    rel = v - line_point
    return line_point + np.einsum("nij,nj->ni", rots, rel)


def _bend(mesh, v, axis, t, t0, span, theta):
    d = _perpendicular(axis)
    w = np.cross(axis, d)
    radius = span / theta
    centroid = mesh.centroid()
    anchor = centroid + (t0 - centroid @ axis) * axis  # neutral-line point at band start
    rel = v - anchor
    tau = rel @ axis
    u = rel @ d
    ww = rel @ w

    phi = theta * np.clip(tau / span, 0.0, 1.0)
    sin_p, cos_p = np.sin(phi), np.cos(phi)
    arm = radius - u
    ax_new = arm * sin_p
    d_new = radius - arm * cos_p
    # points past the band continue straight along the rotated tangent
    over = tau > span
    if over.any():
        excess = tau[over] - span
        ax_new[over] += excess * np.cos(theta)
        d_new[over] += excess * np.sin(theta)
    below = tau < 0.0
    if below.any():
        ax_new[below] = tau[below]
        d_new[below] = u[below]
    return anchor + np.outer(ax_new, axis) + np.outer(d_new, d) + np.outer(ww, w)


def _stretch(v, axis, t, t0, t1, magnitude):
    scale = 1.0 + magnitude
    if scale <= 0:
        raise ValueError("stretch magnitude must exceed -1")
    tau = np.clip(t, t0, t1) - t0
    shift = tau * (scale - 1.0)
    shift[t > t1] = (t1 - t0) * (scale - 1.0)
    return v + np.outer(shift, axis)
