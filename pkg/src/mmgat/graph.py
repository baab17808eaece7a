"""Directed KNN frame graphs with mutual (edge) features.

Edges point from a neighbor ``k`` (``src``) to its target ``j`` (``dst``).
Every node also carries a self-loop whose edge features are zero.  Edges
are grouped by target: for node ``j`` the self-loop comes first, then its
neighbors in ascending ``(distance, index)`` order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import DataFormatError, RadarFrame

NODE_DIM = 5
EDGE_DIM = 6


@dataclass(frozen=True)
class GraphConfig:
    k_neighbors: int = 20
    include_edge_features: bool = True

    def __post_init__(self):
        if self.k_neighbors < 0:
            raise ValueError("k_neighbors must be >= 0")


@dataclass
class FrameGraph:
    node_features: np.ndarray   # (n, 5)
    edge_src: np.ndarray        # (E,)
    edge_dst: np.ndarray        # (E,)
    edge_features: np.ndarray   # (E, 6)

    @property
    def n_nodes(self) -> int:
        return len(self.node_features)

    @property
    def n_edges(self) -> int:
        return len(self.edge_src)


@dataclass
class GraphBatch:
    node_features: np.ndarray
    edge_src: np.ndarray
    edge_dst: np.ndarray
    edge_features: np.ndarray
    frame_of_node: np.ndarray
    n_frames: int
    targets: np.ndarray | None = None   # (B, 3J)
    frame_ids: tuple[int, ...] = ()

    @property
    def n_nodes(self) -> int:
        return len(self.node_features)

    @property
    def n_edges(self) -> int:
        return len(self.edge_src)


def knn_neighbors(points: np.ndarray, k: int) -> list[np.ndarray]:
    """For each point, the ``min(k, n-1)`` nearest other points.

    Exact search over all pairwise distances; equal distances resolve to
    the lower index.  Each list is ordered nearest first.
    """
    pts = np.asarray(points, dtype=np.float64)[:, :3]
    n = len(pts)
    kk = min(k, n - 1)
    if kk <= 0:
        return [np.empty(0, dtype=np.intp) for _ in range(n)]
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2]
    np.fill_diagonal(d2, np.inf)
    # stable sort: ties keep column (index) order
    order = np.argsort(d2, axis=1, kind="stable")[:, :kk]
    return list(order.astype(np.intp))


def edge_feature(src, dst) -> np.ndarray:
    """Mutual features of the edge from neighbor ``src`` into target ``dst``.

    Both arguments are ``(x, y, z, v, intensity)`` sequences.  Returns
    ``[distance, ux, uy, uz, v_src - v_dst, I_src - I_dst]`` where ``u`` is
    the unit direction from ``dst`` to ``src`` (all zero for coincident points).
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    return edge_features(np.stack([src, dst]), np.array([0]), np.array([1]))[0]


def edge_features(nodes: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Vectorised :func:`edge_feature` for the edges ``src[e] -> dst[e]``."""
    delta = nodes[src, :3] - nodes[dst, :3]
    dist = np.sqrt((delta * delta).sum(axis=1))
    safe = np.where(dist > 0, dist, 1.0)
    direction = np.where(dist[:, None] > 0, delta / safe[:, None], 0.0)
    return np.column_stack([dist, direction,
                            nodes[src, 3] - nodes[dst, 3],
                            nodes[src, 4] - nodes[dst, 4]])


def build_graph(frame: RadarFrame | np.ndarray, cfg: GraphConfig = GraphConfig()) -> FrameGraph:
    nodes = np.asarray(getattr(frame, "points", frame), dtype=np.float64).reshape(-1, NODE_DIM)
    n = len(nodes)
    if n < 1:
        raise ValueError("cannot build a graph from an empty frame")
    neighbors = knn_neighbors(nodes, cfg.k_neighbors)
    deg = 1 + (len(neighbors[0]) if n else 0)
    src = np.empty(n * deg, dtype=np.intp)
    dst = np.repeat(np.arange(n, dtype=np.intp), deg)
    src[::deg] = np.arange(n)
    for j, nb in enumerate(neighbors):
        src[j * deg + 1:(j + 1) * deg] = nb
    feats = edge_features(nodes, src, dst)
    feats[src == dst] = 0.0
    if not cfg.include_edge_features:
        feats[:] = 0.0
    return FrameGraph(nodes.copy(), src, dst, feats)


def build_batch(frames: Sequence[RadarFrame], cfg: GraphConfig = GraphConfig(),
                require_labels: bool = True) -> GraphBatch:
    """Concatenate per-frame graphs; node indices are offset frame by frame."""
    if not frames:
        raise ValueError("empty batch")
    joint_counts = {f.keypoints.joint_count for f in frames if f.labeled}
    if len(joint_counts) > 1:
        raise DataFormatError(f"mixed joint counts in batch: {sorted(joint_counts)}")
    labeled = all(f.labeled for f in frames)
    if require_labels and not labeled:
        raise DataFormatError("batch contains unlabeled frames")

    graphs = [build_graph(f, cfg) for f in frames]
    targets = np.stack([f.keypoints.flat() for f in frames]) if labeled else None
    return collate(graphs, targets, tuple(f.frame_id for f in frames))


def collate(graphs: Sequence[FrameGraph], targets: np.ndarray | None = None,
            frame_ids: Sequence[int] = ()) -> GraphBatch:
    """Join prebuilt frame graphs into one batch."""
    sizes = [g.n_nodes for g in graphs]
    offsets = np.cumsum([0] + sizes[:-1])
    return GraphBatch(
        node_features=np.concatenate([g.node_features for g in graphs]),
        edge_src=np.concatenate([g.edge_src + o for g, o in zip(graphs, offsets)]),
        edge_dst=np.concatenate([g.edge_dst + o for g, o in zip(graphs, offsets)]),
        edge_features=np.concatenate([g.edge_features for g in graphs]),
        frame_of_node=np.repeat(np.arange(len(graphs), dtype=np.intp), sizes),
        n_frames=len(graphs),
        targets=targets,
        frame_ids=tuple(frame_ids),
    )
