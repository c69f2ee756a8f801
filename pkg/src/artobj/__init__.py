"""Articulated object reconstruction toolkit.

Parts-and-joints modeling of articulated objects: OBB fitting and
quantized joint encoding, a code-style articulation DSL, dataset
generation from URDF, shape completion on occupancy grids, multi-view
mask fusion, and an evaluation harness with a pipeline CLI on top.
"""

__version__ = "0.1.0"

from .errors import ArtObjError
from .geom import (
    Obb,
    PointCloud,
    RigidTransform,
    TriMesh,
    chamfer,
    fit_obb,
    merge_meshes,
    obb_mesh,
    point_mesh_distance,
    sample_surface,
)
from .articulation import (
    ArticulatedObject,
    Joint,
    Part,
    RelativeJoint,
    dequantize_joint,
    forward_kinematics,
    posed,
    quantize_joint,
)
from .artcode import (
    ArtCodeDocument,
    PredictionDialect,
    document_from_object,
    emit_document,
    emit_joints,
    emit_prompt,
    execute,
    export_mjcf,
    parse_artcode,
)
from .shape import (
    CompletionRequest,
    GridFrame,
    OccupancyGrid,
    complete,
    load_grid,
    make_completion_request,
    marching_cubes,
    occupancy_from_mesh,
    save_grid,
)
from .fusion import CameraView, ScoredMask, backproject, fuse_labels, look_at, project
from .ingest import (
    ingest_urdf,
    load_bundle,
    make_dataset,
    pose_object,
    save_bundle,
    save_dataset_jsonl,
)
from .evalharness import evaluate_object, match_parts, report_tables

__all__ = [
    "ArtObjError",
    "ArtCodeDocument",
    "ArticulatedObject",
    "CameraView",
    "CompletionRequest",
    "GridFrame",
    "Joint",
    "Obb",
    "OccupancyGrid",
    "Part",
    "PointCloud",
    "PredictionDialect",
    "RelativeJoint",
    "RigidTransform",
    "ScoredMask",
    "TriMesh",
    "backproject",
    "chamfer",
    "complete",
    "dequantize_joint",
    "document_from_object",
    "emit_document",
    "emit_joints",
    "emit_prompt",
    "evaluate_object",
    "execute",
    "export_mjcf",
    "fit_obb",
    "forward_kinematics",
    "fuse_labels",
    "ingest_urdf",
    "load_bundle",
    "load_grid",
    "look_at",
    "make_completion_request",
    "make_dataset",
    "marching_cubes",
    "match_parts",
    "merge_meshes",
    "obb_mesh",
    "occupancy_from_mesh",
    "parse_artcode",
    "point_mesh_distance",
    "pose_object",
    "posed",
    "project",
    "quantize_joint",
    "report_tables",
    "sample_surface",
    "save_bundle",
    "save_dataset_jsonl",
    "save_grid",
    "__version__",
]
