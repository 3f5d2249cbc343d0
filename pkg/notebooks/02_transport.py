# %% [markdown]
# # Transport: greedy, exact OT and partial OT
#
# On a small cost matrix the greedy trace commits early to the cheapest
# entry, while OT minimises the total.

# %%
import numpy as np

from stereo_ot.transport import binarize, naive_match, solve_ot, solve_pot

C = np.array([[1.0, 2.0], [1.1, 10.0]])
print("greedy:", naive_match(C).pairs)
plan = solve_ot(C)
print("OT pairs:", binarize(plan).pairs, "objective", plan.objective)

# %% [markdown]
# With more points on one side, partial OT at the default mass matches every
# point of the smaller side exactly once.

# %%
rng = np.random.default_rng(0)
C = rng.random((3, 7))
pot = solve_pot(C)
print("mass", pot.total_mass, "pairs", binarize(pot, "pot").pairs)

# %% [markdown]
# A smaller prescribed mass drops the most expensive pairs.

# %%
print(binarize(solve_pot(C, mass=1 / 7), "pot").pairs)
