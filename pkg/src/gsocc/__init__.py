"""Gaussian semantic-occupancy toolkit.

Pixel-aligned Gaussian initialization from multi-view depth, grid-based
sampling, bounded positional refinement, probabilistic occupancy rendering,
objectives, metrics, and a deterministic synthetic harness.
"""

from .core import (
    NO_RETURN,
    S_MIN,
    CameraModel,
    DepthMap,
    GaussianPrimitive,
    GaussianSet,
    OccupancyGrid,
    VoxelGridSpec,
    covariance_of,
    quaternion_to_matrix,
)
from .attention import AttentionWeights, TokenSet, alternating_block, scaled_dot_attention
from .initialize import AttributeProvider, ConstantAttributes, init_gaussians, unproject_pixel
from .sampling import VoxelKey, sample_representatives, splitmix64, voxel_keys, voxelize_key
from .refine import OffsetBasis, default_basis, refine_positions
from .render import (
    SemanticOccupancyField,
    expected_semantics,
    kernel_phi,
    occupancy_alpha,
    render_grid,
    render_grid_bruteforce,
)
from .losses import (
    LossReport,
    compute_loss_report,
    cross_entropy_loss,
    depth_uncertainty_loss,
    lovasz_softmax_loss,
)
from .metrics import MetricReport, evaluate, init_quality, iou_miou, ray_iou
from .synth import SceneConfig, SceneSpec, generate_scene, rasterize_gt_grid, render_depth_maps
from .pipeline import PipelineConfig, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "NO_RETURN",
    "S_MIN",
    "AttentionWeights",
    "AttributeProvider",
    "CameraModel",
    "ConstantAttributes",
    "DepthMap",
    "GaussianPrimitive",
    "GaussianSet",
    "LossReport",
    "MetricReport",
    "OccupancyGrid",
    "OffsetBasis",
    "PipelineConfig",
    "SceneConfig",
    "SceneSpec",
    "SemanticOccupancyField",
    "TokenSet",
    "VoxelGridSpec",
    "VoxelKey",
    "alternating_block",
    "covariance_of",
    "cross_entropy_loss",
    "compute_loss_report",
    "default_basis",
    "depth_uncertainty_loss",
    "evaluate",
    "expected_semantics",
    "generate_scene",
    "init_gaussians",
    "init_quality",
    "iou_miou",
    "kernel_phi",
    "lovasz_softmax_loss",
    "occupancy_alpha",
    "quaternion_to_matrix",
    "rasterize_gt_grid",
    "ray_iou",
    "refine_positions",
    "render_depth_maps",
    "render_grid",
    "render_grid_bruteforce",
    "run_pipeline",
    "sample_representatives",
    "scaled_dot_attention",
    "splitmix64",
    "unproject_pixel",
    "voxel_keys",
    "voxelize_key",
]
