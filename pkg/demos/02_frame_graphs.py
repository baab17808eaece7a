"""Turn one radar frame into a directed neighbor graph with edge features.

Run:  python3 demos/02_frame_graphs.py
"""
import numpy as np

from mmgat.data import synth_dataset
from mmgat.graph import GraphConfig, build_batch, build_graph, edge_feature, knn_neighbors

np.set_printoptions(precision=3, suppress=True)

# Each edge carries six numbers describing the neighbor relative to the
# target: distance, unit direction, Doppler difference, intensity difference.
target = [0.0, 0.0, 0.0, 1.0, 10.0]
neighbor = [3.0, 4.0, 0.0, 2.0, 7.0]
print("3-4-5 edge:", edge_feature(neighbor, target))
print("coincident points:", edge_feature(target, target))

# Neighbors come back nearest first; equal distances go to the lower index.
line = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [10, 0, 0]], float)
print("2 nearest of each point on a line:", [nb.tolist() for nb in knn_neighbors(line, 2)])

frame = synth_dataset(1, 24, rng_seed=3)[0]
graph = build_graph(frame, GraphConfig(k_neighbors=5))
print(f"\n{graph.n_nodes} nodes, {graph.n_edges} edges (5 neighbors + 1 self-loop each)")
print("incoming edges of node 0 (src):", graph.edge_src[graph.edge_dst == 0])
print("their features:\n", graph.edge_features[graph.edge_dst == 0])

# With fewer points than K every node links to all the others.
small = build_graph(frame.points[:3], GraphConfig(k_neighbors=20))
print("\n3-point frame with K=20:", small.n_edges, "edges")

# Batches stack frames and remember which node came from which frame.
frames = synth_dataset(3, 4, rng_seed=1).frames
batch = build_batch(frames, GraphConfig(2))
print("frame_of_node:", batch.frame_of_node)
print("targets:", batch.targets.shape, "(frames x 3J)")
