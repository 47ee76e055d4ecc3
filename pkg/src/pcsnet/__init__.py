"""Learned point-cloud simplification with a differentiable sampling matrix,
double-scale offset refinement and saliency-adaptive patching."""

from ._errors import DataError, FormatError, NumericalError, PcsError, ShapeError
from .estimators import BaselineSampler, PCSNetSimplifier, SaliencyRegressor
from .geometry import (
    FittedPlane,
    KnnIndex,
    PointCloud,
    farthest_point_sampling,
    fit_plane,
    knn,
    normalize_to_unit_sphere,
    point_plane_distance,
    poisson_disk_seeds,
)
from .io import TriangleMesh, read_cloud, read_mesh, sample_mesh_surface, write_cloud, write_mesh
from .losses import LossWeights, loss_joint, loss_reconstruction, loss_repulsion, loss_saliency, loss_spread
from .metrics import MetricsReport, chamfer, evaluate, hausdorff, point_to_face, triangle_quality
from .network import PcsNet, SaliencyNet, load_checkpoint, save_checkpoint
from .pipeline import SimplifyConfig, add_gaussian_noise, baseline_select, simplify_cloud
from .saliency import raw_saliency, smooth_saliency
from .trainer import TrainConfig, temperature_at, train_pcs, train_saliency_net

__version__ = "0.1.0"
