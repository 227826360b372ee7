"""Shooting-and-bouncing-ray RCS simulation directly on point clouds:
ray-tube depth maps, pluggable refinement, multi-view splat fusion,
multi-bounce tracing and physical-optics far fields.
"""

from .bounce import SplatScene, intersect_splats, trace_chain, trace_chains
from .config import FUSION_VIEWS_DEFAULT, SweepConfig
from .em import PlaneWave, pol_basis, ray_contribution, rcs_dbsm, reflect_field, total_field
from .errors import (BackendError, FileFormatError, GridMismatchError,
                     InvalidFieldError, InvalidGeometryError, PointSbrError)
from .estimators import (ClassicalRefiner, ExternalRefiner, MeshSbrSimulator,
                         PointSbrSimulator)
from .frames import MISS, CoarseDepthMap, Gfb
from .fusion import FusedRecords, Splat, edge_filter, fuse, make_splats
from .geometry import (PointCloud, ScreenFrame, TriangleMesh, make_frame,
                       normalize_to_box, sample_mesh)
from .oracle import MeshScene, render_reference_gfb
from .sweep import (build_splat_scene, incident_wave, mesh_reference_sweep,
                    point_mbc_sweep, point_po_sweep, splat_mbc_sweep)
from .tracing import (ClassicalBackend, ExternalBackend, RefinerBackend,
                      depth_to_normals, refine, refine_classical, trace_coarse)

__version__ = "0.1.0"

__all__ = [
    "BackendError", "ClassicalBackend", "ClassicalRefiner", "CoarseDepthMap",
    "ExternalBackend", "ExternalRefiner", "FileFormatError", "FusedRecords",
    "FUSION_VIEWS_DEFAULT", "Gfb", "GridMismatchError", "InvalidFieldError",
    "InvalidGeometryError", "MISS", "MeshSbrSimulator", "MeshScene",
    "PlaneWave", "PointCloud", "PointSbrError", "PointSbrSimulator",
    "RefinerBackend", "ScreenFrame", "Splat", "SplatScene", "SweepConfig",
    "TriangleMesh", "build_splat_scene", "depth_to_normals", "edge_filter",
    "fuse", "incident_wave", "intersect_splats", "make_frame", "make_splats",
    "mesh_reference_sweep", "normalize_to_box", "pol_basis", "point_mbc_sweep",
    "point_po_sweep", "ray_contribution", "rcs_dbsm", "refine",
    "refine_classical", "reflect_field", "render_reference_gfb", "sample_mesh",
    "splat_mbc_sweep", "total_field", "trace_chain", "trace_chains",
    "trace_coarse",
]
