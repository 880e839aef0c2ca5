"""Cross-view gaze following with differentiable cone-plane geometry."""

from .geometry import (AffineTransform, Cone, PlaneFrame, apply_affine,
                       cone_matrix, intersect_map, intersect_map_backward,
                       make_cone, params_to_affine, plane_frame,
                       ray_cast_oracle, sigma_matrix)
from .learning import TrainConfig, gradcheck, shifted_grids_loss, total_loss, train
from .model import (GazeModel, GazePrediction, ModelConfig, combine_grids,
                    fuse, load_model)
from .scenes import (GenConfig, Sample, Scene, gen_scene, make_dataset,
                     project_gaze_oracle, render_views)
from .evaluate import auc, average_precision, l2, run_eval
from .io import read_dataset, write_dataset

__version__ = "0.1.0"

__all__ = [
    "AffineTransform", "Cone", "PlaneFrame", "apply_affine", "cone_matrix",
    "intersect_map", "intersect_map_backward", "make_cone", "params_to_affine",
    "plane_frame", "ray_cast_oracle", "sigma_matrix",
    "TrainConfig", "gradcheck", "shifted_grids_loss", "total_loss", "train",
    "GazeModel", "GazePrediction", "ModelConfig", "combine_grids", "fuse", "load_model",
    "GenConfig", "Sample", "Scene", "gen_scene", "make_dataset",
    "project_gaze_oracle", "render_views",
    "auc", "average_precision", "l2", "run_eval",
    "read_dataset", "write_dataset",
]
