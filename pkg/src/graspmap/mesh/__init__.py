"""Mesh core: containers, I/O, validation, decimation, segmentation,
geodesics and synthetic deformations."""

from .decimate import decimate_quadric, sampled_surface_distance
from .deform import DeformationSpec, synth_deform
from .geodesic import GeodesicCache, geodesic_distances
from .io import coordinate_colors, label_colors, load_mesh, save_obj, save_ply
from .primitives import box, cable_with_plug, cylinder, icosphere, profiled_tube, ridged_bar, slab
from .segment import Segmentation, kmeans_segment
from .trimesh import MeshReport, TriMesh, validate

__all__ = [
    "TriMesh",
    "MeshReport",
    "validate",
    "load_mesh",
    "save_obj",
    "save_ply",
    "label_colors",
    "coordinate_colors",
    "decimate_quadric",
    "sampled_surface_distance",
    "DeformationSpec",
    "synth_deform",
    "GeodesicCache",
    "geodesic_distances",
    "Segmentation",
    "kmeans_segment",
    "icosphere",
    "cylinder",
    "box",
    "slab",
    "cable_with_plug",
    "profiled_tube",
    "ridged_bar",
]
