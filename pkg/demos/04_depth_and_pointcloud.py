"""
Fusion-task vision channels
===========================

Reset the tactile-vision environment and inspect its three vision channels:
the ground-truth depth image, the flat-shaded instance tag image, and the
labeled point cloud.  Instance ids: 1 fixture blocks, 2 peg, 3 matching
hole walls, 4 decoy hole walls.
"""

import numpy as np

from vitacsim import default_task_config, make_env
from vitacsim.depth_camera import segment_instances

config = default_task_config("fusion")
env = make_env(config)
obs, diag = env.reset(seed=3)

depth = obs.depth_picture
print(f"depth image {depth.shape}, valid pixels {(depth > 0).mean():.1%}, "
      f"range [{depth[depth > 0].min():.3f}, {depth.max():.3f}] m")

cloud = obs.point_cloud
print(f"point cloud: {len(cloud.points)} points, labels {sorted(set(cloud.labels.tolist()))}")
for label, name in ((2, "peg"), (3, "matching hole"), (4, "decoy hole")):
    sel = cloud.labels == label
    if sel.any():
        c = cloud.points[sel].mean(axis=0)
        print(f"  {name:14s}: {sel.sum():5d} points, centroid (camera frame) {np.round(c, 3)}")

# ground-truth masks replace learned segmentation: label selections on the
# cloud give per-object point sets directly
peg_points = cloud.points[cloud.labels == 2]
print(f"peg mask carries {len(peg_points)} pixels worth of geometry")

# %% save the channels side by side
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))
im = axes[0].imshow(np.where(depth > 0, depth, np.nan), cmap="viridis")
axes[0].set_title("ground-truth depth (m)")
fig.colorbar(im, ax=axes[0], shrink=0.8)
axes[1].imshow(obs.rgb_picture)
axes[1].set_title("instance tag render")
sel = cloud.labels > 0
axes[2].scatter(cloud.points[sel, 0], -cloud.points[sel, 1], c=cloud.labels[sel],
                s=1, cmap="tab10")
axes[2].set_title("labeled point cloud (camera xy)")
axes[2].set_aspect("equal")
fig.tight_layout()
fig.savefig("demo_fusion_vision.png", dpi=110)
print("wrote demo_fusion_vision.png")
