# Hierarchical Laplace noise with consistent post-processing
#
# Noise the race counts of every node in state/county/tract/block, then
# project back to a consistent non-negative integer tree.

# %%
import numpy as np

from swaplab.geodata import SynthParams, block_matrix, generate_synthetic
from swaplab.metrics import mean_abs_error
from swaplab.toydown import (ToyDownConfig, add_noise, build_tree, calibrate_epsilon,
                             postprocess, project_children, toydown_variance)

md = generate_synthetic(SynthParams(n_households=5000), seed=2)
tree = build_tree(md)

# %%
# The projection step on its own: a parent of 10 and two noisy children.
print(project_children([12.0, 4.0], 10.0), project_children([-2.0, 9.0], 5.0))

# %%
noisy = add_noise(tree, ToyDownConfig(epsilon_total=3.26, seed=1))
final = postprocess(noisy)
print("consistent:", final.is_consistent(), "non-negative:", final.is_nonnegative())
print("block MAE at eps 3.26:", round(mean_abs_error(block_matrix(md), final.leaves), 3))

# %%
for eps in (0.5, 1, 2, 4, 8):
    print(eps, round(toydown_variance(md, eps, runs=3), 3))

# %%
# Find the epsilon whose two-run variance matches a target.
target = toydown_variance(md, 2.0, runs=5, seed=100)
res = calibrate_epsilon(md, target, runs=5)
print(f"target {target:.3f} -> epsilon {res.epsilon:.3f} after {res.iterations} steps")
