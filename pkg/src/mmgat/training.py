"""Training loop, dataset splitting, checkpoints and the per-epoch log."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .data import Dataset, preprocess
from .graph import FrameGraph, GraphConfig, build_graph, collate
from .metrics import MetricReport, evaluate
from .model import (LOSSES, ModelConfig, ModelParams, Standardizer, forward, init_params,
                    param_shapes, predict)
from .optim import AdamState, LrSchedule, adam_step, lr_at_epoch

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "mmgat-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file is corrupt, truncated or inconsistent with its config."""


class NonFiniteLossError(FloatingPointError):
    def __init__(self, epoch: int, step: int, frame_ids: Sequence[int]):
        super().__init__(f"non-finite loss at epoch {epoch}, step {step}; "
                         f"batch frame ids {list(frame_ids)}")
        self.epoch, self.step, self.frame_ids = epoch, step, list(frame_ids)


@dataclass
class TrainConfig:
    batch_size: int = 128
    epochs: int = 250
    base_lr: float = 1e-3
    lr_factor: float = 0.995
    k_neighbors: int = 20
    window: int = 1
    denoise_bound: float | None = None
    loss: str = "mpjpe"
    seed: int = 0
    eval_every: int = 0
    checkpoint_path: str | None = None
    log_path: str | None = None
    max_steps: int | None = None
    val_fraction: float = 0.0
    protocol: str = "mri"
    standardize: bool = True
    log_wall_time: bool = False
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig.from_dict(self.model)
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if not 0.0 < self.lr_factor <= 1.0:
            raise ValueError("lr_factor must lie in (0, 1]")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")

    @property
    def graph(self) -> GraphConfig:
        return GraphConfig(self.k_neighbors, self.model.include_edge_features)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        model_keys = {f.name for f in fields(ModelConfig)}
        unknown = set(d) - known - model_keys
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        # flat files may put model keys at top level
        model = dict(d.get("model", {}))
        model.update({k: v for k, v in d.items() if k in model_keys and k not in known})
        return cls(**{k: v for k, v in d.items() if k in known and k != "model"},
                   model=ModelConfig.from_dict(model))

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        """Read a JSON document or flat ``key = value`` lines."""
        text = Path(path).read_text(encoding="utf-8")
        if text.lstrip().startswith("{"):
            return cls.from_dict(json.loads(text))
        d = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            try:
                d[key] = json.loads(value)
            except json.JSONDecodeError:
                d[key] = value
        return cls.from_dict(d)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    steps: int
    metrics: dict | None = None
    wall_time: float | None = None

    def to_json(self) -> str:
        return json.dumps({k: v for k, v in asdict(self).items() if v is not None},
                          sort_keys=True)


@dataclass
class TrainResult:
    params: ModelParams
    log: list[EpochRecord]
    adam: AdamState
    scaler: Standardizer
    config: TrainConfig
    epoch: int
    rng: np.random.Generator

    def predict_fn(self):
        gcfg, mcfg = self.config.graph, self.config.model

        def fn(frames):
            batch = collate([build_graph(f, gcfg) for f in frames])
            return predict(batch, self.params, mcfg, self.scaler)
        return fn


# ---------------------------------------------------------------------------
# splitting


def split_dataset(ds: Dataset, mode: str = "random", test_fraction: float = 0.2,
                  seed: int = 0, groups: Sequence[int] | None = None
                  ) -> tuple[Dataset, Dataset]:
    """Random frame-level split or a holdout split by group key.

    In holdout mode whole groups (``groups`` per frame, default each frame's
    ``group``) move to the test side in seeded random order until it holds
    at least ``test_fraction`` of the frames.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    n = len(ds)
    if mode == "random":
        n_test = int(round(n * test_fraction))
        test_idx = set(rng.permutation(n)[:n_test].tolist())
    elif mode == "holdout":
        keys = np.asarray([f.group for f in ds.frames] if groups is None else groups)
        if len(keys) != n:
            raise ValueError("need one group key per frame")
        uniq = np.unique(keys)
        test_idx: set[int] = set()
        for g in rng.permutation(uniq):
            if len(test_idx) >= test_fraction * n:
                break
            test_idx.update(np.flatnonzero(keys == g).tolist())
    else:
        raise ValueError(f"unknown split mode {mode!r}")
    train = [f for i, f in enumerate(ds.frames) if i not in test_idx]
    test = [f for i, f in enumerate(ds.frames) if i in test_idx]
    return ds.with_frames(train), ds.with_frames(test)


# ---------------------------------------------------------------------------
# checkpoints


def _fmt_values(arr: np.ndarray) -> str:
    return "[" + ",".join(format(float(v), ".17g") for v in np.ravel(arr)) + "]"


def _array_entry(arr: np.ndarray) -> str:
    return '{"shape":' + json.dumps(list(np.shape(arr))) + ',"values":' + _fmt_values(arr) + "}"


def _array_map(arrays: dict[str, np.ndarray]) -> str:
    items = [f"    {json.dumps(k)}: {_array_entry(v)}" for k, v in arrays.items()]
    return "{\n" + ",\n".join(items) + "\n  }"


def save_checkpoint(path, params: ModelParams, adam: AdamState, cfg: TrainConfig,
                    scaler: Standardizer, epoch: int,
                    rng: np.random.Generator | None = None) -> Path:
    """Write a JSON checkpoint; every real number uses 17 significant digits."""
    path = Path(path)
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "epoch": epoch,
        "step": adam.step,
        "train_config": cfg.to_dict(),
        "model_config": cfg.model.to_dict(),
        "scaler": scaler.to_dict(),
        "rng_state": rng.bit_generator.state if rng is not None else None,
        "optimizer": {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
                      "epsilon": adam.epsilon, "step": adam.step},
    }
    head = json.dumps(meta, indent=2)[:-2]  # strip closing brace, keep the rest
    text = (head + ",\n"
            + '  "params": ' + _array_map({k: v.data for k, v in params.items()}) + ",\n"
            + '  "adam_m": ' + _array_map(adam.m) + ",\n"
            + '  "adam_v": ' + _array_map(adam.v) + "\n}\n")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)
    return path


@dataclass
class Checkpoint:
    params: ModelParams
    adam: AdamState
    config: TrainConfig
    scaler: Standardizer
    epoch: int
    rng_state: dict | None

    def rng(self) -> np.random.Generator:
        g = np.random.default_rng()
        if self.rng_state is not None:
            g.bit_generator.state = self.rng_state
        return g


def _read_arrays(doc: dict, key: str, shapes: dict[str, tuple[int, ...]]) -> dict:
    if key not in doc or not isinstance(doc[key], dict):
        raise CheckpointError(f"missing field {key!r}")
    section = doc[key]
    for name in section:
        if name not in shapes:
            raise CheckpointError(f"{key}.{name}: unexpected entry for this model config")
    out = {}
    for name, shape in shapes.items():
        entry = section.get(name)
        if entry is None:
            raise CheckpointError(f"{key}.{name}: missing")
        if tuple(entry.get("shape", ())) != shape:
            raise CheckpointError(
                f"{key}.{name}: shape {entry.get('shape')} does not match config {list(shape)}")
        values = entry.get("values")
        if not isinstance(values, list) or len(values) != int(np.prod(shape)):
            raise CheckpointError(f"{key}.{name}: expected {int(np.prod(shape))} values")
        arr = np.asarray(values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"{key}.{name}: non-finite values")
        out[name] = arr.reshape(shape)
    return out


def load_checkpoint(path) -> Checkpoint:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt or truncated at line {exc.lineno}, "
                              f"column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("field 'format': not an mmgat checkpoint")
    for key in ("epoch", "model_config", "train_config", "scaler", "optimizer"):
        if key not in doc:
            raise CheckpointError(f"missing field {key!r}")
    try:
        cfg = TrainConfig.from_dict({**doc["train_config"], "model": doc["model_config"]})
        scaler = Standardizer.from_dict(doc["scaler"])
    except (TypeError, ValueError, KeyError) as exc:
        raise CheckpointError(f"field 'train_config'/'scaler': {exc}") from None
    shapes = param_shapes(cfg.model)
    params = {k: ad.Tensor(v, requires_grad=True, name=k)
              for k, v in _read_arrays(doc, "params", shapes).items()}
    opt = doc["optimizer"]
    adam = AdamState(lr=opt["lr"], beta1=opt["beta1"], beta2=opt["beta2"],
                     epsilon=opt["epsilon"], step=int(opt["step"]),
                     m=_read_arrays(doc, "adam_m", shapes),
                     v=_read_arrays(doc, "adam_v", shapes))
    return Checkpoint(params, adam, cfg, scaler, int(doc["epoch"]), doc.get("rng_state"))


# ---------------------------------------------------------------------------
# training



def train(dataset: Dataset, cfg: TrainConfig, *, resume: Checkpoint | None = None,
          stop_after_epochs: int | None = None) -> TrainResult:
    """Train from scratch (or continue ``resume``) for ``cfg.epochs`` total epochs.

    One Adam step per batch; the learning rate for epoch ``e`` is
    ``base_lr * lr_factor ** e``.  Frames are reshuffled every epoch by the
    run's seeded generator, which also drives dropout, so a single-threaded
    run is bit-reproducible.  ``stop_after_epochs`` ends the run early
    (the schedule is still that of ``cfg.epochs``).
    """
    ds, removed = preprocess(dataset, sort=True, window=cfg.window, bound=cfg.denoise_bound)
    if removed:
        logger.info("denoising removed %d frame(s)", len(removed))
    frames = ds.labeled_frames()
    if not frames:
        raise ValueError("training needs labeled frames")
    val_frames: list = []
    if cfg.val_fraction > 0:
        train_ds, val_ds = split_dataset(ds.with_frames(frames), "random",
                                         cfg.val_fraction, cfg.seed)
        frames, val_frames = list(train_ds.frames), list(val_ds.frames)

    gcfg, mcfg = cfg.graph, cfg.model
    graphs: list[FrameGraph] = [build_graph(f, gcfg) for f in frames]
    targets = np.stack([f.keypoints.flat() for f in frames])
    if targets.shape[1] != mcfg.output_dim:
        raise ValueError(f"data has {targets.shape[1] // 3} joints, model expects "
                         f"{mcfg.joint_count}")
    frame_ids = [f.frame_id for f in frames]

    if resume is not None:
        params, adam, scaler = resume.params, resume.adam, resume.scaler
        start_epoch, rng = resume.epoch, resume.rng()
    else:
        params = init_params(mcfg, cfg.seed)
        adam = AdamState.for_params(params, lr=cfg.base_lr)
        scaler = (Standardizer.fit(collate(graphs, targets)) if cfg.standardize
                  else Standardizer.identity(mcfg.output_dim))
        start_epoch, rng = 0, np.random.default_rng(cfg.seed)

    sched = LrSchedule(cfg.base_lr, cfg.lr_factor)
    loss_fn = LOSSES[cfg.loss]
    result = TrainResult(params, [], adam, scaler, cfg, start_epoch, rng)
    end_epoch = cfg.epochs if stop_after_epochs is None else min(
        cfg.epochs, start_epoch + stop_after_epochs)

    for epoch in range(start_epoch, end_epoch):
        if cfg.max_steps is not None and adam.step >= cfg.max_steps:
            break
        t0 = time.perf_counter()
        adam.lr = lr_at_epoch(sched, epoch)
        order = rng.permutation(len(frames))
        losses, steps = [], 0
        for start in range(0, len(order), cfg.batch_size):
            if cfg.max_steps is not None and adam.step >= cfg.max_steps:
                break
            idx = order[start:start + cfg.batch_size]
            batch = collate([graphs[i] for i in idx], targets[idx])
            for p in params.values():
                p.zero_grad()
            with ad.Tape() as tape:
                out = forward(batch, params, mcfg, training=True, rng=rng, scaler=scaler)
                loss = loss_fn(out.pose, batch.targets)
            value = float(loss.data)
            if not np.isfinite(value):
                bad = [frame_ids[i] for i in idx]
                if cfg.checkpoint_path:
                    save_checkpoint(cfg.checkpoint_path, params, adam, cfg, scaler, epoch, rng)
                raise NonFiniteLossError(epoch, adam.step, bad)
            tape.backward(loss)
            adam_step(params, {k: p.grad for k, p in params.items()}, adam)
            losses.append(value)
            steps += 1

        result.epoch = epoch + 1
        record = EpochRecord(epoch, adam.lr, float(np.mean(losses)) if losses else float("nan"),
                             steps)
        last = epoch + 1 == end_epoch or (cfg.max_steps is not None
                                          and adam.step >= cfg.max_steps)
        if cfg.eval_every and ((epoch + 1) % cfg.eval_every == 0 or last):
            eval_ds = ds.with_frames(val_frames or frames)
            record.metrics = evaluate(result.predict_fn(), eval_ds, cfg.protocol).to_dict()
            if cfg.checkpoint_path:
                save_checkpoint(cfg.checkpoint_path, params, adam, cfg, scaler, epoch + 1, rng)
        if cfg.log_wall_time:
            record.wall_time = time.perf_counter() - t0
        result.log.append(record)
        if cfg.log_path:
            with open(cfg.log_path, "a", encoding="utf-8") as fh:
                fh.write(record.to_json() + "\n")
        logger.info("epoch %d lr %.3g loss %.6f", epoch, adam.lr, record.train_loss)

    if cfg.checkpoint_path:
        save_checkpoint(cfg.checkpoint_path, params, adam, cfg, scaler, result.epoch, rng)
    return result


def evaluate_checkpoint(ckpt: Checkpoint, dataset: Dataset, protocol: str = "mri"
                        ) -> MetricReport:
    result = TrainResult(ckpt.params, [], ckpt.adam, ckpt.scaler, ckpt.config, ckpt.epoch,
                         ckpt.rng())
    return evaluate(result.predict_fn(), dataset, protocol)
