# %% [markdown]
# # Two-level matching of labelled points
#
# Object costs come from partial OT between every object pair; the object
# plan then scales each local plan into a global point plan.

# %%
from stereo_ot.geometry import DistanceSpec
from stereo_ot.hierarchy import hierarchical_match
from stereo_ot.simulation import SweepConfig, sample_scene

scene = sample_scene(SweepConfig(), 0, 0.005)
res = hierarchical_match(scene.rig, DistanceSpec.ray(), scene.left_cloud, scene.right_cloud, "hot")
print("object matching:", res.object_matching.pairs)
print("object costs:\n", res.costs.values.round(4))
print("matched points:", len(res.point_matching))

# %% [markdown]
# With one object missing on the right, the partial variant leaves one left
# object unmatched.

# %%
from stereo_ot.hierarchy import LabeledCloud

right = scene.right_cloud
keep = LabeledCloud(right.object_ids[:-1], right.points[:-1], right.point_ids[:-1])
res = hierarchical_match(scene.rig, DistanceSpec.ray(), scene.left_cloud, keep, "hot-pot")
print("object matching:", res.object_matching.pairs)
