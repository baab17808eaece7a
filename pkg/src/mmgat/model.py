"""Edge-conditioned graph attention network for radar pose regression.

Pipeline per batch::

    edge features --edge MLP--> edge repr (E x 64)
    node features --4 x GAT (edge repr feeds every layer)--> node repr (N x 128)
    node repr --mean per frame--> frame repr (B x 128)
    frame repr --5-layer MLP--> pose (B x 3J)
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import EDGE_DIM, NODE_DIM, GraphBatch

ModelParams = dict[str, Tensor]


@dataclass(frozen=True)
class ModelConfig:
    joint_count: int = 17
    edge_widths: tuple[int, ...] = (64, 64, 64)
    gat_layers: int = 4
    gat_width: int = 128
    head_widths: tuple[int, ...] = (256, 256, 256, 256)
    dropout_rate: float = 0.5
    leaky_slope: float = 0.2
    include_edge_features: bool = True

    def __post_init__(self):
        object.__setattr__(self, "edge_widths", tuple(int(w) for w in self.edge_widths))
        object.__setattr__(self, "head_widths", tuple(int(w) for w in self.head_widths))
        widths = (*self.edge_widths, self.gat_width, *self.head_widths, self.joint_count)
        if min(widths) < 1 or self.gat_layers < 1 or not self.edge_widths:
            raise ValueError("all widths and layer counts must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")

    @property
    def output_dim(self) -> int:
        return 3 * self.joint_count

    def to_dict(self) -> dict:
        d = asdict(self)
        d["edge_widths"] = list(self.edge_widths)
        d["head_widths"] = list(self.head_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every learnable tensor's name and shape, in canonical order."""
    shapes: dict[str, tuple[int, ...]] = {}
    d = EDGE_DIM
    for i, w in enumerate(cfg.edge_widths):
        shapes[f"edge.{i}.weight"] = (d, w)
        shapes[f"edge.{i}.bias"] = (w,)
        d = w
    edge_dim, d, C = d, NODE_DIM, cfg.gat_width
    for layer in range(cfg.gat_layers):
        shapes[f"gat.{layer}.theta"] = (d, C)
        shapes[f"gat.{layer}.theta_edge"] = (edge_dim, C)
        shapes[f"gat.{layer}.attention"] = (3 * C,)
        shapes[f"gat.{layer}.bias"] = (C,)
        d = C
    for i, w in enumerate((*cfg.head_widths, cfg.output_dim)):
        shapes[f"head.{i}.weight"] = (d, w)
        shapes[f"head.{i}.bias"] = (w,)
        d = w
    return shapes


def init_params(cfg: ModelConfig, rng_seed: int = 0) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(rng_seed)
    params: ModelParams = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith("bias"):
            data = np.zeros(shape)
        else:
            fan_in, fan_out = (shape[0], 1) if len(shape) == 1 else shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            data = rng.uniform(-limit, limit, size=shape)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return params


def iter_layers(params: ModelParams, prefix: str) -> Iterator[tuple[Tensor, Tensor]]:
    i = 0
    while f"{prefix}.{i}.weight" in params:
        yield params[f"{prefix}.{i}.weight"], params[f"{prefix}.{i}.bias"]
        i += 1


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return ad.add(ad.matmul(x, weight), bias)


def edge_block(edge_features, params: ModelParams) -> Tensor:
    """Edge MLP: the first layer is linear, every later layer is followed by ReLU."""
    h = ad._as_tensor(edge_features)
    for i, (w, b) in enumerate(iter_layers(params, "edge")):
        h = linear(h, w, b)
        if i > 0:
            h = ad.relu(h)
    return h


@dataclass
class GatOutput:
    nodes: Tensor
    attention: Tensor


def gat_layer(node_in: Tensor, edge_src: np.ndarray, edge_dst: np.ndarray,
              edge_repr: Tensor, params: ModelParams, layer: int, *,
              slope: float = 0.2, dropout_rate: float = 0.0, training: bool = False,
              rng: np.random.Generator | None = None) -> GatOutput:
    """One single-head attention layer over edges ``src -> dst``.

    Score of edge (k -> j) is ``leaky_relu(a . [T x_j | T x_k | Te r_jk])``;
    scores are softmax-normalised over each target's incoming edges
    (self-loop included) and weight the neighbors' transformed features.
    """
    theta = params[f"gat.{layer}.theta"]
    theta_edge = params[f"gat.{layer}.theta_edge"]
    attn = params[f"gat.{layer}.attention"]
    bias = params[f"gat.{layer}.bias"]
    C = theta.shape[1]
    n = node_in.shape[0]
    if np.setdiff1d(np.arange(n), edge_dst).size:
        raise ValueError("every node needs at least one incoming edge (self-loop)")

    h = ad.matmul(node_in, theta)
    score_dst = ad.matmul(h, ad.take(attn, slice(0, C)))
    score_src = ad.matmul(h, ad.take(attn, slice(C, 2 * C)))
    # a_e . (Te r) == r . (Te a_e): contract the edge path before touching E rows
    edge_vec = ad.matmul(theta_edge, ad.take(attn, slice(2 * C, 3 * C)))
    score_edge = ad.matmul(edge_repr, edge_vec)
    scores = ad.add(ad.add(ad.gather_rows(score_dst, edge_dst),
                           ad.gather_rows(score_src, edge_src)), score_edge)
    alpha = ad.segment_softmax(ad.leaky_relu(scores, slope), edge_dst, n)
    weights = ad.dropout(alpha, dropout_rate, training, rng)
    out = ad.add(ad.edge_aggregate(weights, h, edge_src, edge_dst, n), bias)
    return GatOutput(out, alpha)


@dataclass
class Standardizer:
    """Fixed affine maps around the network, fitted once on training data.

    Node features are centred and scaled per column; edge features are only
    scaled, so zero rows (self-loops) stay zero; poses are predicted in
    standardized units and mapped back to meters.
    """

    node_mean: np.ndarray
    node_scale: np.ndarray
    edge_scale: np.ndarray
    target_mean: np.ndarray
    target_scale: float

    @classmethod
    def identity(cls, output_dim: int) -> "Standardizer":
        return cls(np.zeros(NODE_DIM), np.ones(NODE_DIM), np.ones(EDGE_DIM),
                   np.zeros(output_dim), 1.0)

    @classmethod
    def fit(cls, batch: GraphBatch) -> "Standardizer":
        def scale(x):
            sd = x.std(axis=0) if len(x) else np.ones(x.shape[1:])
            return np.where(sd > 1e-12, sd, 1.0)

        real_edges = batch.edge_src != batch.edge_dst
        ef = batch.edge_features[real_edges]
        edge_scale = np.sqrt((ef * ef).mean(axis=0)) if len(ef) else np.ones(EDGE_DIM)
        edge_scale = np.where(edge_scale > 1e-12, edge_scale, 1.0)
        t = batch.targets
        t_mean = t.mean(axis=0)
        t_scale = float((t - t_mean).std())
        return cls(batch.node_features.mean(axis=0), scale(batch.node_features),
                   edge_scale, t_mean, t_scale if t_scale > 1e-12 else 1.0)

    def to_dict(self) -> dict:
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(*(np.asarray(d[k], dtype=np.float64) for k in
                     ("node_mean", "node_scale", "edge_scale", "target_mean")),
                   float(d["target_scale"]))


@dataclass
class ForwardResult:
    pose: Tensor
    attention: list[Tensor] = field(default_factory=list)
    frame_repr: Tensor | None = None


def forward(batch: GraphBatch, params: ModelParams, cfg: ModelConfig, *,
            training: bool = False, rng: np.random.Generator | None = None,
            edge_features: Tensor | np.ndarray | None = None,
            node_features: Tensor | np.ndarray | None = None,
            scaler: Standardizer | None = None) -> ForwardResult:
    """Run the network on a batch; returns a ``(B, 3J)`` pose tensor.

    ``edge_features`` / ``node_features`` override the batch arrays (used to
    differentiate with respect to the inputs).  With a ``scaler`` the inputs
    are standardized first and the output is returned in meters.
    """
    ef = ad._as_tensor(batch.edge_features if edge_features is None else edge_features)
    x = ad._as_tensor(batch.node_features if node_features is None else node_features)
    if scaler is not None:
        x = ad.mul(ad.sub(x, scaler.node_mean), 1.0 / scaler.node_scale)
        ef = ad.mul(ef, 1.0 / scaler.edge_scale)
    if cfg.include_edge_features:
        edge_repr = edge_block(ef, params)
    else:
        edge_repr = Tensor(np.zeros((batch.n_edges, cfg.edge_widths[-1])))

    attention = []
    for layer in range(cfg.gat_layers):
        res = gat_layer(x, batch.edge_src, batch.edge_dst, edge_repr, params, layer,
                        slope=cfg.leaky_slope, dropout_rate=cfg.dropout_rate,
                        training=training, rng=rng)
        attention.append(res.attention)
        x = res.nodes
        if layer < cfg.gat_layers - 1:
            x = ad.relu(x)

    pooled = ad.segment_mean(x, batch.frame_of_node, batch.n_frames)
    h = pooled
    layers = list(iter_layers(params, "head"))
    for i, (w, b) in enumerate(layers):
        h = linear(h, w, b)
        if i < len(layers) - 1:
            h = ad.relu(h)
    if scaler is not None:
        h = ad.add(ad.mul(h, scaler.target_scale), scaler.target_mean)
    return ForwardResult(h, attention, pooled)


def predict(batch: GraphBatch, params: ModelParams, cfg: ModelConfig,
            scaler: Standardizer | None = None) -> np.ndarray:
    """Eval-mode forward pass returning a plain ``(B, 3J)`` array."""
    return forward(batch, params, cfg, training=False, scaler=scaler).pose.data.copy()


# ---------------------------------------------------------------------------
# losses

MPJPE_EPS = 1e-12


def _check_shapes(pred: Tensor, target) -> Tensor:
    target = ad._as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    return target


def loss_mse(pred: Tensor, target) -> Tensor:
    """Mean squared coordinate error."""
    target = _check_shapes(pred, target)
    return ad.mean(ad.square(ad.sub(pred, target)))


def loss_mpjpe(pred: Tensor, target) -> Tensor:
    """Mean per-joint Euclidean error over all ``B * J`` joints."""
    target = _check_shapes(pred, target)
    if pred.shape[-1] % 3:
        raise ValueError("pose width must be a multiple of 3")
    sq = ad.square(ad.sub(pred, target))
    per_joint = ad.sum_rows(ad.reshape(sq, (-1, 3)))
    return ad.mean(ad.sqrt(ad.add(per_joint, MPJPE_EPS)))


LOSSES = {"mse": loss_mse, "mpjpe": loss_mpjpe}
