"""Desk-scale experiments: overfitting a small set and the mutual-feature ablation."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .data import Dataset, RadarFrame, Skeleton, synth_dataset
from .model import LOSSES, ModelConfig
from .training import TrainConfig, TrainResult, train


def relative_geometry_dataset(n_frames: int = 128, n_points: int = 24, n_clusters: int = 4,
                              seed: int = 0) -> Dataset:
    """Clustered clouds whose single 'joint' encodes neighbor spacing.

    Cluster centres share one distribution across frames while the
    within-cluster spread varies, so the target (mean distance to the 1st,
    3rd and 5th nearest neighbor) is a property of point pairs rather than
    of any single point.
    """
    rng = np.random.default_rng(seed)
    frames = []
    for fid in range(n_frames):
        centres = rng.uniform(-1.0, 1.0, (n_clusters, 3))
        spread = np.exp(rng.uniform(np.log(0.03), np.log(0.3)))
        owner = np.arange(n_points) % n_clusters
        pos = centres[owner] + spread * rng.standard_normal((n_points, 3))
        d = np.linalg.norm(pos[:, None] - pos[None], axis=2)
        np.fill_diagonal(d, np.inf)
        d.sort(axis=1)
        target = d[:, [0, 2, 4]].mean(axis=0)
        pts = np.column_stack([pos, rng.normal(0, 0.5, n_points), rng.uniform(5, 40, n_points)])
        frames.append(RadarFrame(fid, pts, Skeleton(target[None], 0, 0)))
    return Dataset(tuple(frames), 1, name="relative-geometry")


@dataclass
class AblationOutcome:
    seed: int
    loss_with_edges: float
    loss_without_edges: float

    @property
    def edges_win(self) -> bool:
        return self.loss_with_edges < self.loss_without_edges


def final_train_loss(result: TrainResult, ds: Dataset) -> float:
    frames = ds.labeled_frames()
    pred = result.predict_fn()(frames)
    target = np.stack([f.keypoints.flat() for f in frames])
    return float(LOSSES[result.config.loss](ad.Tensor(pred), target).data)


def ablation(seed: int, ds: Dataset | None = None, *, steps: int = 300, batch_size: int = 16,
             model: ModelConfig | None = None, k: int = 20) -> AblationOutcome:
    """Train the K-neighbor edge-featured model and the K=0 variant identically."""
    ds = ds if ds is not None else relative_geometry_dataset(seed=100 + seed)
    model = model or ModelConfig(joint_count=ds.joint_count)
    base = TrainConfig(batch_size=batch_size, epochs=10 ** 6, max_steps=steps, seed=seed,
                       loss="mse", k_neighbors=k, model=model)
    with_edges = train(ds, base)
    no_edges_cfg = replace(base, k_neighbors=0,
                           model=replace(model, include_edge_features=False))
    without = train(ds, no_edges_cfg)
    return AblationOutcome(seed, final_train_loss(with_edges, ds), final_train_loss(without, ds))


def overfit_config(steps: int = 2000, batch_size: int = 8) -> TrainConfig:
    """Adam at 1e-3 decayed x0.995 per epoch, K=20, dropout 0.5, capped at ``steps``."""
    return TrainConfig(batch_size=batch_size, epochs=10 ** 6, max_steps=steps, base_lr=1e-3,
                       lr_factor=0.995, k_neighbors=20, loss="mpjpe", seed=0,
                       model=ModelConfig(joint_count=17, dropout_rate=0.5))


def overfit_dataset() -> Dataset:
    return synth_dataset(32, 24, 17, noise_sigma=0.02, rng_seed=7)
