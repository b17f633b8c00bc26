# Bias and variance of downstream statistics, and swap variance by rate

# %%
from swaplab.harness import estimate_delta, parse_config, variance_sweep
from swaplab.toydown import ToyDownConfig

cfg = parse_config("""
spec_version = 1
base_seed = 9
[input.synthetic]
n_households = 5000
segregation = 0.8
[[mechanism]]
name = "swap10"
kind = "swap"
variant = "standard"
swap_rate = 0.10
""")
md = cfg.load_input()

# %%
county = md.geo.county_ids[0]
for stat in ("statewide_count:w", f"county_count:{county}:w", "tract_entropy_mean"):
    rep = estimate_delta(cfg, stat, 20, md=md)
    print(f"{stat:>28}: mean delta {rep.mean:+.4f}, variance {rep.variance:.4f}")

# %%
sweep = variance_sweep(cfg, [0.02, 0.05, 0.10, 0.20, 0.40], ToyDownConfig(3.26), md=md)
print(sweep.to_csv())
