"""Instanced, attribute-aware triangle mesh simplification."""

from .attributes import AttributeCloud, Channel, InvalidCollapse, cloud_error, merge_clouds, unified_error
from .instancing import SingularTransformError, expand_scene, expand_to_mesh, transform_normals, transform_points
from .mesh import Instance, RefMesh, Scene, ValidationIssue, validate_mesh
from .objio import OutputKind, ParseError, ParseErrorKind, parse_scene, read_scene, save_scene, write_scene
from .pairs import ThresholdOscillation, ThresholdState, adapt_threshold, find_valid_pairs
from .quadric import fundamental_quadric, quadric_error
from .simplify import Mode, SimplifyParams, SimplifyReport, StopReason, Target, simplify

__version__ = "0.1.0"

__all__ = [
    "AttributeCloud",
    "Channel",
    "Instance",
    "InvalidCollapse",
    "Mode",
    "OutputKind",
    "ParseError",
    "ParseErrorKind",
    "RefMesh",
    "Scene",
    "SimplifyParams",
    "SimplifyReport",
    "SingularTransformError",
    "StopReason",
    "Target",
    "ThresholdOscillation",
    "ThresholdState",
    "ValidationIssue",
    "adapt_threshold",
    "cloud_error",
    "expand_scene",
    "expand_to_mesh",
    "find_valid_pairs",
    "fundamental_quadric",
    "merge_clouds",
    "parse_scene",
    "quadric_error",
    "read_scene",
    "save_scene",
    "simplify",
    "transform_normals",
    "transform_points",
    "unified_error",
    "validate_mesh",
    "write_scene",
]
