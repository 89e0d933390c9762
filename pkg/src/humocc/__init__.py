"""Semantic occupancy ground truth, fusion geometry, losses and metrics for indoor robots."""

from .core import (FREE, UNOBSERVED, BevFeatureMap, Box3D, CameraModel, ConfusionMatrix,
                   GridSpec, OccupancyGrid, PointCloud, Scene, SemanticTaxonomy, Se3Pose,
                   taxonomy_for)
from .errors import HumoccError

__version__ = "0.1.0"

__all__ = [
    "FREE", "UNOBSERVED", "BevFeatureMap", "Box3D", "CameraModel", "ConfusionMatrix",
    "GridSpec", "OccupancyGrid", "PointCloud", "Scene", "SemanticTaxonomy", "Se3Pose",
    "taxonomy_for", "HumoccError",
]
