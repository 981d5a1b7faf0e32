"""
Where in the room does the panorama fit?
========================================

For each floor position, take the best loss over a ring of yaws.  The basin
around the true position is what makes a coarse grid plus local descent work.
"""

import numpy as np

from omniloc.pipeline import dump_loss_surface, surface_grid
from omniloc.synth import generate_scene

scene = generate_scene(seed=3, gravity_aligned=True)
z = scene.oracle_pose.translation[2]
surface = dump_loss_surface(scene.cloud, scene.panorama, z=z, grid_res=12, gravity_known=True, n_r=36)

xs, ys = surface_grid(scene.cloud, 12)
i, j = np.unravel_index(np.argmin(surface), surface.shape)
print("surface minimum at x=%.2f y=%.2f" % (xs[i], ys[j]))
print("true position      x=%.2f y=%.2f" % tuple(scene.oracle_pose.translation[:2]))

# Coarse text plot: darker characters mean lower loss.
shades = " .:-=+*#%@"
lo, hi = surface.min(), surface.max()
for row in surface.T[::-1]:
    print("".join(shades[int((v - lo) / (hi - lo + 1e-12) * 9)] * 2 for v in row))
