"""K-means segmentation of mesh vertices into candidate grasp regions."""

import json
from dataclasses import dataclass, field

import numpy as np

from .._util import atomic_write
from ..errors import NumericalError

MAX_LLOYD_ITERS = 200


@dataclass
class Segmentation:
    """Per-vertex cluster labels plus centroids; optionally a chosen region."""

    labels: np.ndarray
    centroids: np.ndarray
    selected_region: int | None = None
    objective_history: list = field(default_factory=list)

    @property
    def n_clusters(self):
        return len(self.centroids)

    def region_vertices(self, region_id=None):
        rid = self.selected_region if region_id is None else region_id
        if rid is None:
            raise ValueError("no region selected")
        if not 0 <= rid < self.n_clusters:
            raise ValueError(f"region id {rid} out of range [0, {self.n_clusters})")
        return np.flatnonzero(self.labels == rid)

    def cluster_sizes(self):
        return np.bincount(self.labels, minlength=self.n_clusters)

    def with_region(self, region_id):
        if not 0 <= region_id < self.n_clusters:
            raise ValueError(f"region id {region_id} out of range [0, {self.n_clusters})")
        return Segmentation(self.labels, self.centroids, region_id, self.objective_history)

    def save(self, path):
        with atomic_write(path) as out:
            json.dump(
                {
                    "schema": 1,
                    "labels": self.labels.tolist(),
                    "centroids": self.centroids.tolist(),
                    "selected_region": self.selected_region,
                },
                out,
                sort_keys=True,
            )

    @classmethod
    def load(cls, path):
        with open(path) as handle:
            data = json.load(handle)
        return cls(
            labels=np.asarray(data["labels"], dtype=np.int64),
            centroids=np.asarray(data["centroids"], dtype=np.float64),
            selected_region=data.get("selected_region"),
        )


def _farthest_seeding(points, n_clusters, rng):
    """First seed random, the rest greedy farthest-point (max-min distance)."""
    n = len(points)
    seeds = [int(rng.integers(n))]
    min_d2 = np.sum((points - points[seeds[0]]) ** 2, axis=1)
    for _ in range(1, n_clusters):
        nxt = int(np.argmax(min_d2))
        seeds.append(nxt)
        min_d2 = np.minimum(min_d2, np.sum((points - points[nxt]) ** 2, axis=1))
    return points[seeds].copy()


def _assign(points, centroids):
    d2 = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centroids.T
        + np.sum(centroids**2, axis=1)[None, :]
    )
    labels = np.argmin(d2, axis=1)  # ties resolve to the lowest cluster id
    obj = float(np.sum(np.take_along_axis(d2, labels[:, None], axis=1)))
    return labels, max(obj, 0.0)


def kmeans_segment(mesh, n_clusters, seed=0):
    """Lloyd k-means on vertex positions with farthest-point seeding.

    Deterministic given ``seed``. Runs to an assignment fixed point or
    MAX_LLOYD_ITERS; the within-cluster sum of squares is asserted
    non-increasing every iteration. Empty clusters are re-seeded at the
    vertex farthest from all current centroids.
    """
    points = mesh.vertices
    n = len(points)
    if not 1 <= n_clusters <= n:
        raise ValueError(f"n_clusters must be in [1, {n}], got {n_clusters}")
    rng = np.random.default_rng(seed)
    centroids = _farthest_seeding(points, n_clusters, rng)

    history = []
    labels, obj = _assign(points, centroids)
    history.append(obj)
    for _ in range(MAX_LLOYD_ITERS):
        for c in range(n_clusters):
            members = labels == c
            if members.any():
                centroids[c] = points[members].mean(axis=0)
            else:
                d2 = np.min(
                    np.sum((points[:, None, :] - centroids[None, :, :]) ** 2, axis=2), axis=1
                )
                centroids[c] = points[int(np.argmax(d2))]
        new_labels, obj = _assign(points, centroids)
        history.append(obj)
        if obj > history[-2] + 1e-9 * max(1.0, history[-2]):
            raise NumericalError(
                f"k-means objective increased: {history[-2]} -> {obj}"
            )
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    return Segmentation(labels=labels, centroids=centroids, objective_history=history)
