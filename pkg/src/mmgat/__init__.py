"""Graph attention with mutual edge features for radar pose estimation."""

from .autodiff import Tape, Tensor
from .data import (Dataset, RadarFrame, RadarPoint, Skeleton, denoise_volume, fuse_frames,
                   load_frames_csv, save_frames_csv, sort_points, synth_dataset)
from .graph import GraphBatch, GraphConfig, build_batch, build_graph, edge_feature, knn_neighbors
from .metrics import MetricReport, evaluate, mae_rmse, mpjpe_pelvis_aligned, pa_mpjpe
from .model import ModelConfig, Standardizer, forward, init_params, loss_mpjpe, loss_mse
from .optim import AdamState, LrSchedule, adam_step, lr_at_epoch
from .training import TrainConfig, load_checkpoint, save_checkpoint, split_dataset, train

__version__ = "0.1.0"

__all__ = [
    "AdamState", "Dataset", "GraphBatch", "GraphConfig", "LrSchedule", "MetricReport",
    "ModelConfig", "RadarFrame", "RadarPoint", "Skeleton", "Standardizer", "Tape", "Tensor",
    "TrainConfig", "adam_step", "build_batch", "build_graph", "denoise_volume", "edge_feature",
    "evaluate", "forward", "fuse_frames", "init_params", "knn_neighbors", "load_checkpoint",
    "load_frames_csv", "loss_mpjpe", "loss_mse", "lr_at_epoch", "mae_rmse",
    "mpjpe_pelvis_aligned", "pa_mpjpe", "save_checkpoint", "save_frames_csv", "sort_points",
    "split_dataset", "synth_dataset", "train",
]
