"""Pose metrics: per-axis MAE/RMSE, pelvis-aligned MPJPE and PA-MPJPE.

Inputs are in meters; :class:`MetricReport` fields are in centimeters.
"""
from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .data import Dataset, RadarFrame, Skeleton, default_hip_indices

PROTOCOLS = ("mars", "mri")


class DegenerateAlignmentWarning(UserWarning):
    """Procrustes alignment skipped because the prediction has no spread."""


def _joints(x) -> np.ndarray:
    if isinstance(x, Skeleton):
        return x.joints
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1] != 3:
        arr = arr.reshape(*arr.shape[:-1], -1, 3)
    return arr


def _pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p, t = _joints(pred), _joints(target)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    return p, t


def mae_rmse(pred, target) -> dict[str, object]:
    """Per-axis and averaged MAE/RMSE in cm over all frames and joints."""
    p, t = _pair(pred, target)
    delta = (p - t).reshape(-1, 3) * 100.0
    mae = np.abs(delta).mean(axis=0)
    rmse = np.sqrt((delta ** 2).mean(axis=0))
    return {"mae_xyz": mae, "mae_avg": float(mae.mean()),
            "rmse_xyz": rmse, "rmse_avg": float(rmse.mean())}


def mean_joint_error(pred, target) -> float:
    p, t = _pair(pred, target)
    return float(np.linalg.norm(p - t, axis=-1).mean())


def mpjpe_pelvis_aligned(pred, target, left_hip: int | None = None,
                         right_hip: int | None = None) -> float:
    """Mean joint error after moving the predicted pelvis onto the true one.

    The pelvis is the midpoint of the two hip joints.  Accepts single
    skeletons ``(J, 3)`` or batches ``(B, J, 3)``; returns meters.
    """
    if isinstance(target, Skeleton):
        left_hip = target.left_hip_index if left_hip is None else left_hip
        right_hip = target.right_hip_index if right_hip is None else right_hip
    p, t = _pair(pred, target)
    if left_hip is None or right_hip is None:
        left_hip, right_hip = default_hip_indices(p.shape[-2])
    J = p.shape[-2]
    if not (0 <= left_hip < J and 0 <= right_hip < J):
        raise ValueError(f"hip indices ({left_hip}, {right_hip}) invalid for J={J}")
    pelvis_p = 0.5 * (p[..., left_hip, :] + p[..., right_hip, :])
    pelvis_t = 0.5 * (t[..., left_hip, :] + t[..., right_hip, :])
    aligned = p + (pelvis_t - pelvis_p)[..., None, :]
    return float(np.linalg.norm(aligned - t, axis=-1).mean())


def similarity_align(pred: np.ndarray, target: np.ndarray):
    """Least-squares ``s, R, t`` with ``s * R @ pred_j + t ~ target_j``.

    Closed form via SVD of the cross-covariance; a reflection is corrected
    by flipping the weakest singular direction so ``det(R) = +1``.
    Returns None when ``pred`` has zero spread.
    """
    mu_p, mu_t = pred.mean(axis=0), target.mean(axis=0)
    P, T = pred - mu_p, target - mu_t
    var_p = (P * P).sum() / len(P)
    if var_p <= 1e-300:
        return None
    cov = T.T @ P / len(P)
    U, D, Vt = np.linalg.svd(cov)
    S = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[-1] = -1.0
    R = (U * S) @ Vt
    s = float((D * S).sum() / var_p)
    t = mu_t - s * R @ mu_p
    return s, R, t


def pa_mpjpe(pred, target) -> float:
    """Mean joint error after optimal similarity alignment (meters).

    Batches are aligned frame by frame.  A prediction whose joints all
    coincide cannot be aligned; its unaligned error is used instead and a
    :class:`DegenerateAlignmentWarning` is emitted.
    """
    p, t = _pair(pred, target)
    if p.ndim == 2:
        p, t = p[None], t[None]
    errors = []
    for pf, tf in zip(p, t):
        fit = similarity_align(pf, tf)
        if fit is None:
            warnings.warn("degenerate prediction: PA-MPJPE falls back to unaligned error",
                          DegenerateAlignmentWarning, stacklevel=2)
            aligned = pf
        else:
            s, R, tr = fit
            aligned = s * pf @ R.T + tr
        errors.append(np.linalg.norm(aligned - tf, axis=-1))
    return float(np.mean(errors))


@dataclass
class MetricReport:
    frame_count: int
    protocol: str
    mae_xyz: tuple[float, float, float] | None = None
    mae_avg: float | None = None
    rmse_xyz: tuple[float, float, float] | None = None
    rmse_avg: float | None = None
    mpjpe: float | None = None
    pa_mpjpe: float | None = None

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in asdict(self).items() if v is not None}

    def to_text(self) -> str:
        lines = []
        for key, value in self.to_dict().items():
            if isinstance(value, list):
                for axis, v in zip("xyz", value):
                    lines.append(f"{key[:-4]}_{axis}={v:.6f}")
            elif isinstance(value, float):
                lines.append(f"{key}={value:.6f}")
            else:
                lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"


def report(pred: np.ndarray, target: np.ndarray, protocol: str = "mri",
           hips: tuple[int, int] | None = None) -> MetricReport:
    """Metrics for ``(B, 3J)`` or ``(B, J, 3)`` arrays under one protocol."""
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}; choose from {PROTOCOLS}")
    p, t = _pair(pred, target)
    p = p.reshape(len(p), -1, 3)
    t = t.reshape(len(t), -1, 3)
    rep = MetricReport(frame_count=len(p), protocol=protocol)
    if protocol == "mars":
        m = mae_rmse(p, t)
        rep.mae_xyz = tuple(float(v) for v in m["mae_xyz"])
        rep.mae_avg = m["mae_avg"]
        rep.rmse_xyz = tuple(float(v) for v in m["rmse_xyz"])
        rep.rmse_avg = m["rmse_avg"]
    else:
        left, right = hips if hips is not None else default_hip_indices(p.shape[1])
        rep.mpjpe = 100.0 * mpjpe_pelvis_aligned(p, t, left, right)
        rep.pa_mpjpe = 100.0 * pa_mpjpe(p, t)
    return rep


def evaluate(predict_fn: Callable[[Sequence[RadarFrame]], np.ndarray], dataset: Dataset,
             protocol: str = "mri", batch_size: int = 64) -> MetricReport:
    """Run ``predict_fn`` over every labeled frame and score the predictions.

    ``predict_fn`` maps a list of frames to a ``(B, 3J)`` array and must be
    deterministic (eval mode).
    """
    frames = dataset.labeled_frames()
    if not frames:
        raise ValueError("evaluation needs a labeled dataset")
    preds = [np.asarray(predict_fn(frames[i:i + batch_size]))
             for i in range(0, len(frames), batch_size)]
    target = np.stack([f.keypoints.joints for f in frames])
    hips = (frames[0].keypoints.left_hip_index, frames[0].keypoints.right_hip_index)
    return report(np.concatenate(preds), target, protocol, hips)
