# Does swapping make tracts look more mixed?

# %%
import numpy as np

from swaplab.geodata import SynthParams, block_matrix, generate_synthetic
from swaplab.metrics import entropy_decomposition, mean_tract_entropy
from swaplab.swap import SwapConfig, select_and_swap

md = generate_synthetic(SynthParams(n_households=10_000, segregation=0.9), seed=3)
before = mean_tract_entropy(block_matrix(md), md.geo)
print("mean tract entropy before:", round(before, 4))

# %%
for rate in (0.02, 0.10):
    out, log = select_and_swap(md, SwapConfig(rate, seed=1))
    print(rate, round(mean_tract_entropy(block_matrix(out), md.geo), 4))

# %%
# Split one 10% swap into its four steps: targets leave, partners leave,
# targets arrive, partners arrive.
_, log = select_and_swap(md, SwapConfig(0.10, seed=1))
rep = entropy_decomposition(md, log)
for label, v in zip(("before", "targets out", "partners out", "targets in", "partners in"),
                    rep.averages):
    print(f"{label:>13}: {v:.4f}")
