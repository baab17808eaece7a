"""Backprop versus central finite differences over model parameters."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .graph import GraphConfig, build_batch
from .data import RadarFrame, Skeleton
from .model import ModelConfig, ModelParams, forward, init_params, loss_mpjpe, loss_mse

STEP = 1e-5
TOLERANCE = 1e-4
# Gradients smaller than this are compared absolutely; central differences
# cannot resolve relative error below it in float64.
GRAD_FLOOR = 1e-6

# Same depth as the default model (3 edge layers, 4 GAT layers, 5 head layers),
# narrow enough to difference every parameter in seconds.
CANONICAL_CONFIG = ModelConfig(joint_count=3, edge_widths=(8, 8, 8), gat_layers=4,
                               gat_width=8, head_widths=(16, 16, 16, 16), dropout_rate=0.5)


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = GRAD_FLOOR) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict[str, float]
    n_checked: int
    seconds: float
    worst: str = ""
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def to_text(self) -> str:
        lines = [f"{name:28s} {err:.3e}" for name, err in self.per_param.items()]
        lines.append(f"checked={self.n_checked} max_rel_error={self.max_rel_error:.3e} "
                     f"worst={self.worst} seconds={self.seconds:.1f} "
                     f"{'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def check_gradients(params: ModelParams, objective: Callable[[], ad.Tensor], *,
                    h: float = STEP, sample: int | None = None,
                    rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare tape gradients of ``objective()`` with central differences.

    ``objective`` must be a deterministic function of ``params``.  With
    ``sample``, at most that many entries per tensor are differenced.
    """
    t0 = time.perf_counter()
    for p in params.values():
        p.zero_grad()
    with ad.Tape() as tape:
        loss = objective()
    tape.backward(loss)
    analytic = {k: p.grad.copy() for k, p in params.items()}

    per_param, n = {}, 0
    rng = rng or np.random.default_rng(0)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if sample is not None and flat.size > sample:
            idx = np.sort(rng.choice(flat.size, size=sample, replace=False))
        numeric = np.empty(len(idx))
        for i, k in enumerate(idx):
            orig = flat[k]
            flat[k] = orig + h
            up = float(objective().data)
            flat[k] = orig - h
            down = float(objective().data)
            flat[k] = orig
            numeric[i] = (up - down) / (2 * h)
        per_param[name] = float(relative_error(analytic[name].reshape(-1)[idx], numeric).max())
        n += len(idx)
    worst = max(per_param, key=per_param.get)
    return GradCheckReport(per_param[worst], per_param, n, time.perf_counter() - t0, worst)


def canonical_frames(seed: int = 0, n_frames: int = 2, n_nodes: int = 6,
                     joint_count: int = 3) -> list[RadarFrame]:
    rng = np.random.default_rng(seed)
    frames = []
    for fid in range(n_frames):
        pts = np.column_stack([rng.normal(0, 0.5, (n_nodes, 3)), rng.normal(0, 1, n_nodes),
                               rng.uniform(0.5, 2.0, n_nodes)])
        joints = rng.normal(0, 0.5, (joint_count, 3))
        frames.append(RadarFrame(fid, pts, Skeleton.from_joints(joints)))
    return frames


def randomize(params: ModelParams, seed: int, scale: float = 0.3) -> ModelParams:
    """Give every bias a random value so no ReLU sits exactly at its kink."""
    rng = np.random.default_rng(seed)
    for name, p in params.items():
        if name.endswith("bias"):
            p.data[...] = rng.normal(0, scale, p.shape)
    return params


def run_canonical(seed: int = 0, cfg: ModelConfig = CANONICAL_CONFIG, k: int = 2,
                  sample: int | None = None) -> GradCheckReport:
    """The 2-frame, 6-node, K=2, J=3 check in eval mode over every parameter."""
    frames = canonical_frames(seed, joint_count=cfg.joint_count)
    batch = build_batch(frames, GraphConfig(k))
    params = randomize(init_params(cfg, seed), seed + 1)
    target = batch.targets + np.random.default_rng(seed + 2).normal(0, 0.3, batch.targets.shape)

    def objective():
        pose = forward(batch, params, cfg, training=False).pose
        return ad.add(loss_mpjpe(pose, target), loss_mse(pose, target))

    return check_gradients(params, objective, sample=sample)
