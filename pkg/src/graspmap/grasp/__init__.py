"""Grasp model construction, transfer, feasibility and re-planning."""

from .model import (
    Contact,
    Grasp,
    GraspModel,
    GripperSpec,
    build_grasp_model,
    generate_antipodal_grasps,
    load_grasps,
    save_grasps,
)
from .transfer import (
    FeasibilityReport,
    GraspResult,
    RegionCorrespondence,
    ReplanConfig,
    TransferConfig,
    feasibility_check,
    finger_contacts,
    match_on_target,
    region_transform,
    replan_local,
    transfer_grasp,
    transfer_pipeline,
)

__all__ = [
    "Contact",
    "Grasp",
    "GraspModel",
    "GripperSpec",
    "build_grasp_model",
    "generate_antipodal_grasps",
    "save_grasps",
    "load_grasps",
    "FeasibilityReport",
    "GraspResult",
    "RegionCorrespondence",
    "ReplanConfig",
    "TransferConfig",
    "feasibility_check",
    "finger_contacts",
    "match_on_target",
    "region_transform",
    "replan_local",
    "transfer_grasp",
    "transfer_pipeline",
]
