"""
Gel meshes and marker binding
=============================

Build the stock sensing pad, bind the default marker grid to its sensing
face, and look at what the sensor camera sees at rest.
"""

import numpy as np

from vitacsim import GelSpec, MarkerGridSpec, SensorCamera, bind_markers, generate_gel_mesh
from vitacsim.sensor import marker_world_positions, project_to_camera

# the stock pad: 25.25 mm x 20.75 mm footprint, 4 mm thick
mesh = generate_gel_mesh(GelSpec())
print(f"gel mesh: {mesh.n_vertices} vertices, {len(mesh.tets)} tets, "
      f"{len(mesh.surface_tris)} surface triangles")
print(f"shell-attached vertices: {len(mesh.constrained_set)}")

# markers live on the opposite (sensing) face
binding = bind_markers(mesh, MarkerGridSpec())
print(f"bound {binding.n_markers} markers; weight range "
      f"[{binding.weights.min():.3f}, {binding.weights.max():.3f}]")

# each marker is a fixed barycentric combination of its facet's vertices,
# so it follows any deformation of the mesh exactly
rest = marker_world_positions(binding, mesh.marker_surface_tris, mesh.vertices)
print("reconstruction error at rest:",
      np.abs(rest - binding.rest_points).max())

# the sensor camera sits behind the shell face and looks through the pad
camera = SensorCamera()
pixels, valid = project_to_camera(rest, camera)
print(f"all markers visible: {valid.all()}; pixel bounding box "
      f"u [{pixels[:,0].min():.0f}, {pixels[:,0].max():.0f}] "
      f"v [{pixels[:,1].min():.0f}, {pixels[:,1].max():.0f}]")

# %% plot the marker layout as the camera sees it
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

fig, ax = plt.subplots(figsize=(5, 4))
ax.scatter(pixels[:, 0], pixels[:, 1], s=18, c="k")
ax.set_xlim(0, camera.width)
ax.set_ylim(camera.height, 0)
ax.set_title("marker grid at rest (camera view)")
ax.set_aspect("equal")
fig.tight_layout()
fig.savefig("demo_markers_rest.png", dpi=120)
print("wrote demo_markers_rest.png")
