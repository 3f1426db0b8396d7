"""Vertex-patch smoothers and geometric multigrid for high-order finite
elements on Cartesian meshes, with a cache-traffic model for comparing
patch traversal orders."""

from .dofs import LevelSpace, PatchId, PatchIndexSets, n_dofs, patch_index_sets
from .exceptions import DecompositionError, ResourceError
from .fdm import FdmDecomposition, apply_fdm, build_fdm
from .level import Level
from .mesh import MeshHierarchy, Schedule, enumerate_patches, make_schedule
from .multigrid import MultigridSolver, SolveConfig, SolveResult, prolongate, restrict
from .operator import LaplaceOperator
from .smoothers import VARIANTS, local_solve, local_update, richardson, smooth
from .traffic import AccessTrace, CacheConfig, TrafficReport, record_trace, simulate_lru

__version__ = "0.1.0"

__all__ = [
    "AccessTrace",
    "CacheConfig",
    "DecompositionError",
    "FdmDecomposition",
    "LaplaceOperator",
    "Level",
    "LevelSpace",
    "MeshHierarchy",
    "MultigridSolver",
    "PatchId",
    "PatchIndexSets",
    "ResourceError",
    "Schedule",
    "SolveConfig",
    "SolveResult",
    "TrafficReport",
    "VARIANTS",
    "apply_fdm",
    "build_fdm",
    "enumerate_patches",
    "local_solve",
    "local_update",
    "make_schedule",
    "n_dofs",
    "patch_index_sets",
    "prolongate",
    "record_trace",
    "restrict",
    "richardson",
    "simulate_lru",
    "smooth",
]
