# %% [markdown]
# # Geometry: rays, ray distance and the epipolar cost
#
# A rectified rig with unit baseline. Noise-free projections of one world
# point give zero ray and epipolar cost. Moving the right point along its
# epipolar line leaves the epipolar cost at zero while the ray cost picks
# up the behind-camera penalty.

# %%
import numpy as np

from stereo_ot.geometry import (
    DepthRegParams,
    StereoRig,
    closest_points,
    back_rays,
    epipolar_distance,
    fundamental_matrix,
    project,
    ray_distance,
    regularized_ray_distance,
    triangulate,
)

rig = StereoRig.rectified(1.0)
w = np.array([0.2, 0.1, 3.0])
x, _ = project(rig, w, "left")
y, _ = project(rig, w, "right")
F = fundamental_matrix(rig)
print("x =", x, " y =", y)
print("ray distance:", ray_distance(rig, x, y))
print("epipolar distance:", epipolar_distance(F, x, y))
print("triangulated:", triangulate(rig, x, y))

# %% [markdown]
# Slide y along its row. Beyond the left image coordinate the disparity is
# negative and the two rays meet behind the cameras.

# %%
for du in (-0.3, 0.0, 0.2, 0.5):
    y2 = (y[0] + du, y[1])
    sol = closest_points(*back_rays(rig, x, y2))
    print(f"du={du:+.1f}  epi={epipolar_distance(F, x, y2):.3g}  ray={ray_distance(rig, x, y2):.3g}  depth={sol.midpoint_depth:.3g}")

# %% [markdown]
# The depth-regularised cost adds a quadratic hinge outside a depth band.

# %%
params = DepthRegParams(beta=10.0, gamma_low=2.5, gamma_high=3.5)
for z in (2.0, 3.0, 4.0):
    p = np.array([0.1, 0.0, z])
    xp, yp = project(rig, p, "left")[0], project(rig, p, "right")[0]
    print(f"depth {z}: reg = {regularized_ray_distance(rig, xp, yp, params):.3f}")
