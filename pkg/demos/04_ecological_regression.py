# Ecological regression on protected race shares
#
# Votes come from the true population and stay fixed; only the precinct
# race shares change when a mechanism is applied.

# %%
import numpy as np

from swaplab.ecoreg import ElectionSpec, er_bias_experiment
from swaplab.geodata import SynthParams, generate_synthetic
from swaplab.swap import SwapConfig
from swaplab.toydown import ToyDownConfig

mix = (0.6, 0.34, 0.01, 0.015, 0.005, 0.015, 0.015)
md = generate_synthetic(SynthParams(n_households=20_000, segregation=0.9, race_mixture=mix), seed=11)

# %%
cmp_ = er_bias_experiment(md, SwapConfig(0.10), ToyDownConfig(0.25), ElectionSpec(seed=3),
                          replicates=10, seed=1)
for data in ("original", "swapped", "toydown"):
    for weighted in (False, True):
        s = cmp_.slopes(data, "W", 0, weighted)
        print(f"{data:>8} weighted={weighted!s:5}  median slope {np.median(s):.4f}")
