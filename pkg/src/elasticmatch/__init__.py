"""Elastic surface matching, geodesic interpolation, and shape statistics
for triangular meshes of arbitrary connectivity and topology."""

__version__ = "0.1.0"

from .energy import MatchConfig
from .errors import (
    CombinatoricsError,
    ConfigError,
    DecimationError,
    ElasticMatchError,
    MeshFormatError,
    MeshValidationError,
    TextureError,
)
from .features import (
    SrcfField,
    SrnfField,
    path_energy,
    srcf,
    srcf_distance_sq,
    srnf,
    srnf_distance_sq,
    srnf_jvp,
    srnf_metric_form,
)
from .lbfgs import OptimConfig, OptimReport, minimize
from .mesh import (
    FaceGeometry,
    TriangleMesh,
    decimate,
    face_geometry,
    load_mesh,
    save_mesh,
    subdivide,
    transfer_texture,
)
from .pipeline import (
    GeodesicPath,
    Level,
    MultiResSchedule,
    default_schedule,
    discrepancy,
    distance_matrix,
    geodesic,
    invert_srnf,
    karcher_mean,
    match,
    multires_match,
)
from .varifold import KernelConfig, VarifoldAtoms, atoms, distance_sq, inner

__all__ = [
    "CombinatoricsError",
    "ConfigError",
    "DecimationError",
    "ElasticMatchError",
    "FaceGeometry",
    "GeodesicPath",
    "KernelConfig",
    "Level",
    "MatchConfig",
    "MeshFormatError",
    "MeshValidationError",
    "MultiResSchedule",
    "OptimConfig",
    "OptimReport",
    "SrcfField",
    "SrnfField",
    "TextureError",
    "TriangleMesh",
    "VarifoldAtoms",
    "atoms",
    "decimate",
    "default_schedule",
    "discrepancy",
    "distance_matrix",
    "distance_sq",
    "face_geometry",
    "geodesic",
    "inner",
    "invert_srnf",
    "karcher_mean",
    "load_mesh",
    "match",
    "minimize",
    "multires_match",
    "path_energy",
    "save_mesh",
    "srcf",
    "srcf_distance_sq",
    "srnf",
    "srnf_distance_sq",
    "srnf_jvp",
    "srnf_metric_form",
    "subdivide",
    "transfer_texture",
    "__version__",
]
