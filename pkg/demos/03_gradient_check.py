"""Verify every backprop gradient of the network against finite differences.

Run:  python3 demos/03_gradient_check.py
Same as `mmgat gradcheck --verbose-params`.
"""
import numpy as np

from mmgat import autodiff as ad
from mmgat.gradcheck import CANONICAL_CONFIG, run_canonical

# A hand-sized example first: d/dx sum(relu(x) * w) is w where x > 0.
x = ad.Tensor(np.array([-1.0, 0.5, 2.0]), requires_grad=True)
w = np.array([3.0, 4.0, 5.0])
with ad.Tape() as tape:
    y = ad.total(ad.mul(ad.relu(x), w))
tape.backward(y)
print("relu gradient:", x.grad)

# Softmax inside each segment: equal scores share the weight evenly.
scores = ad.Tensor(np.array([1.0, 1.0, 1.0, 0.0, np.log(3.0)]))
print("segment softmax:", ad.segment_softmax(scores, np.array([0, 0, 0, 1, 1])).data)

# The full check: a model with the same depth as the published one (edge
# MLP, four attention layers, five-layer head) at reduced width, on two
# 6-point frames with K=2.  Every parameter entry is nudged by 1e-5.
print(f"\nmodel: edge {CANONICAL_CONFIG.edge_widths}, {CANONICAL_CONFIG.gat_layers} GAT layers "
      f"of width {CANONICAL_CONFIG.gat_width}, head {CANONICAL_CONFIG.head_widths}")
report = run_canonical(seed=0)
print(report.to_text())
