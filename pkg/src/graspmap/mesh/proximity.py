"""Point-to-surface proximity queries (exact, vectorized over faces)."""

import numpy as np


def closest_on_triangles(point, tri):
    """Closest point on each triangle of ``tri`` (m, 3, 3) to ``point``."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab, ac, ap = b - a, c - a, point - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = point - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = point - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)

    closest = np.empty_like(a)
    done = np.zeros(len(a), dtype=bool)

    def settle(mask, value):
        take = mask & ~done
        closest[take] = value if value.ndim == 1 else value[take]
        done[take] = True

    settle((d1 <= 0) & (d2 <= 0), a)
    settle((d3 >= 0) & (d4 <= d3), b)
    settle((d6 >= 0) & (d5 <= d6), c)

    vc = d1 * d4 - d3 * d2
    mask = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    denom = np.where(np.abs(d1 - d3) > 0, d1 - d3, 1.0)
    settle(mask, a + (d1 / denom)[:, None] * ab)

    vb = d5 * d2 - d1 * d6
    mask = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    denom = np.where(np.abs(d2 - d6) > 0, d2 - d6, 1.0)
    settle(mask, a + (d2 / denom)[:, None] * ac)

    va = d3 * d6 - d5 * d4
    mask = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    denom = d4 - d3 + d5 - d6
    denom = np.where(np.abs(denom) > 0, denom, 1.0)
    settle(mask, b + ((d4 - d3) / denom)[:, None] * (c - b))

    total = va + vb + vc
    total = np.where(np.abs(total) > 0, total, 1.0)
    u = vb / total
    w = vc / total
    inner = a + u[:, None] * ab + w[:, None] * ac
    closest[~done] = inner[~done]
    return closest


def closest_surface_points(points, mesh):
    """Nearest surface point, owning face and distance per query point."""
    tri = mesh.vertices[mesh.faces]
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    out_points = np.empty_like(points)
    out_faces = np.empty(len(points), dtype=np.int64)
    out_dists = np.empty(len(points))
    for i, p in enumerate(points):
        cand = closest_on_triangles(p, tri)
        d = np.linalg.norm(cand - p, axis=1)
        j = int(np.argmin(d))
        out_points[i] = cand[j]
        out_faces[i] = j
        out_dists[i] = d[j]
    return out_points, out_faces, out_dists


def point_to_surface(points, mesh):
    """Min distance from each point to the mesh surface."""
    return closest_surface_points(points, mesh)[2]


def carrying_vertices(surface_points, mesh):
    """Nearest mesh vertex id per surface point."""
    surface_points = np.atleast_2d(surface_points)
    ids = np.empty(len(surface_points), dtype=np.int64)
    for i, p in enumerate(surface_points):
        ids[i] = int(np.argmin(np.einsum("ij,ij->i", mesh.vertices - p, mesh.vertices - p)))
    return ids
