"""How the pose metrics respond to translation, rotation, scale and noise.

Run:  python3 demos/04_pose_metrics.py
"""
import numpy as np

from mmgat.data import synth_dataset
from mmgat.metrics import mae_rmse, mpjpe_pelvis_aligned, pa_mpjpe, report

truth = synth_dataset(1, 8, rng_seed=0)[0].keypoints.joints
rng = np.random.default_rng(0)

shifted = truth + [0.3, -0.1, 0.05]
print(f"shifted skeleton:  MPJPE={mpjpe_pelvis_aligned(shifted, truth):.2e} m  "
      f"PA-MPJPE={pa_mpjpe(shifted, truth):.2e} m")

c, s = np.cos(0.4), np.sin(0.4)
turned = 1.2 * truth @ np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]]).T
print(f"rotated + scaled:  MPJPE={mpjpe_pelvis_aligned(turned, truth):.4f} m  "
      f"PA-MPJPE={pa_mpjpe(turned, truth):.2e} m")

noisy = truth + rng.normal(0, 0.03, truth.shape)
print(f"3 cm joint noise:  MPJPE={mpjpe_pelvis_aligned(noisy, truth):.4f} m  "
      f"PA-MPJPE={pa_mpjpe(noisy, truth):.4f} m")

# Per-axis MAE/RMSE in centimeters.
m = mae_rmse(noisy, truth)
print("MAE x/y/z (cm):", np.round(m["mae_xyz"], 2), " RMSE x/y/z (cm):", np.round(m["rmse_xyz"], 2))

# A report bundles one protocol's numbers.
print("\nmars protocol:\n" + report(noisy[None], truth[None], "mars").to_text())
print("mri protocol:\n" + report(noisy[None], truth[None], "mri").to_text())
