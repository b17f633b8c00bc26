"""Hierarchical Laplace noise on race counts with consistent post-processing.

The count tree has four levels (state, county, tract, block).  Noise is
Laplace with scale ``1 / eps_level`` on every race count of every node,
where ``eps_level = level_weight * epsilon_total``.  Draws are consumed
level by level (state first), nodes in id order, races in index order.

Post-processing is top-down: the root is clamped at zero, then at every
parent the children are replaced, race by race, by the Euclidean
projection of their noisy values onto ``{x >= 0, sum(x) = parent}``.
Integers are obtained top-down as well: the root is rounded and children
are integerised by largest remainders so that they sum to their (already
integer) parent.  Internal nodes thus end up as exact sums of their leaves.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import CalibrationError, ConfigError
from .geodata import LEVELS, N_RACES, RACE_COLUMNS, GeoHierarchy, Microdata, block_matrix, rollup

REFERENCE_EPSILON = 3.26
BLOCK_TABLE_HEADER = ("block_id",) + RACE_COLUMNS


@dataclass(frozen=True)
class ToyDownConfig:
    epsilon_total: float = REFERENCE_EPSILON
    level_weights: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "level_weights", tuple(float(w) for w in self.level_weights))
        if not self.epsilon_total > 0:
            raise ConfigError("epsilon_total must be positive")
        if len(self.level_weights) != len(LEVELS) or min(self.level_weights) <= 0 \
                or abs(sum(self.level_weights) - 1.0) > 1e-9:
            raise ConfigError("level_weights must be four positive numbers summing to 1")

    def level_epsilon(self, level: int) -> float:
        return self.level_weights[level] * self.epsilon_total


@dataclass(frozen=True, eq=False)
class CountTree:
    """Per-race counts on the geography, one (n_nodes, 7) array per level.

    ``counts[0]`` is the state level, ``counts[3]`` the blocks; nodes are in
    the id order of the corresponding ``geo`` level.
    """

    geo: GeoHierarchy
    counts: tuple[np.ndarray, ...]

    def level(self, name: str) -> np.ndarray:
        return self.counts[LEVELS.index(name)]

    @property
    def leaves(self) -> np.ndarray:
        return self.counts[-1]

    def is_consistent(self, atol: float = 0.0) -> bool:
        for lvl in range(1, len(LEVELS)):
            child = self.counts[lvl]
            parent = np.zeros_like(self.counts[lvl - 1])
            np.add.at(parent, self.geo.parent_index(LEVELS[lvl]), child)
            if not np.allclose(parent, self.counts[lvl - 1], rtol=0, atol=atol):
                return False
        return True

    def is_nonnegative(self) -> bool:
        return all((c >= 0).all() for c in self.counts)


def tree_from_blocks(block_counts: np.ndarray, geo: GeoHierarchy) -> CountTree:
    return CountTree(geo, tuple(rollup(block_counts, geo, lvl) for lvl in LEVELS[:-1])
                     + (np.asarray(block_counts),))


def build_tree(md: Microdata) -> CountTree:
    return tree_from_blocks(block_matrix(md, "race"), md.geo)


def add_noise(tree: CountTree, cfg: ToyDownConfig) -> CountTree:
    rng = np.random.default_rng(np.random.SeedSequence(int(cfg.seed) & (2**64 - 1)))
    noisy = []
    for lvl, c in enumerate(tree.counts):
        scale = 1.0 / cfg.level_epsilon(lvl)
        noisy.append(c + rng.laplace(0.0, scale, size=c.shape))
    return CountTree(tree.geo, tuple(noisy))


def project_children(values: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection of ``values`` onto ``{x >= 0, sum(x) = total}``.

    Water-filling: subtract the uniform correction that meets the sum on the
    still-free entries, clamp the negatives to zero and repeat until nothing
    new is clamped.
    """
    v = np.asarray(values, dtype=float)
    x = np.zeros_like(v)
    if total <= 0 or v.size == 0:
        return x
    free = np.ones(v.shape, dtype=bool)
    while True:
        if free.sum() == 1:
            # the last free entry takes the whole total (guards against rounding to < 0)
            x[free] = total
            return x
        shift = (v[free].sum() - total) / free.sum()
        trial = v - shift
        newly = free & (trial < 0)
        if not newly.any():
            x[free] = trial[free]
            return x
        free &= ~newly


def largest_remainder(values: np.ndarray, total: int) -> np.ndarray:
    """Non-negative integers summing to ``total`` that round ``values`` by largest remainders.

    ``values`` must be non-negative with ``sum(values)`` within one unit per
    entry of ``total``.  Ties go to the lower index.
    """
    v = np.maximum(np.asarray(values, dtype=float), 0.0)
    base = np.floor(v).astype(np.int64)
    extra = int(total - base.sum())
    if extra < 0 or extra > len(v):
        raise ValueError(f"cannot round {v} to total {total}")
    if extra:
        order = np.lexsort((np.arange(len(v)), -(v - base)))
        base[order[:extra]] += 1
    return base


def postprocess(noisy: CountTree) -> CountTree:
    """Consistent, non-negative, integer tree from a noisy real-valued one."""
    geo = noisy.geo
    real = [np.maximum(noisy.counts[0], 0.0)]
    final = [np.floor(real[0] + 0.5).astype(np.int64)]
    for lvl in range(1, len(LEVELS)):
        parent_idx = geo.parent_index(LEVELS[lvl])
        child_noisy = noisy.counts[lvl]
        proj = np.zeros(child_noisy.shape, dtype=float)
        ints = np.zeros(child_noisy.shape, dtype=np.int64)
        order = np.argsort(parent_idx, kind="stable")
        bounds = np.searchsorted(parent_idx[order], np.arange(len(real[-1]) + 1))
        for p in range(len(real[-1])):
            kids = order[bounds[p]:bounds[p + 1]]
            if len(kids) == 0:
                continue
            for r in range(N_RACES):
                proj[kids, r] = project_children(child_noisy[kids, r], real[-1][p, r])
                # integer parents sit within one unit of their real value
                ints[kids, r] = largest_remainder(proj[kids, r], int(final[-1][p, r]))
        real.append(proj)
        final.append(ints)
    return CountTree(geo, tuple(final))


def run_toydown(md: Microdata, cfg: ToyDownConfig) -> np.ndarray:
    """Finalised block-level race counts, shape (n_blocks, 7)."""
    return postprocess(add_noise(build_tree(md), cfg)).leaves


def block_table_csv(geo: GeoHierarchy, block_counts: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BLOCK_TABLE_HEADER)
    for bid, row in zip(geo.block_ids, block_counts):
        w.writerow([bid, *(int(v) for v in row)])
    return buf.getvalue()


# ------------------------------------------------------------ calibration

def _paired_seeds(seed: int, runs: int) -> list[tuple[int, int]]:
    states = np.random.SeedSequence(int(seed) & (2**64 - 1)).generate_state(2 * runs, np.uint64)
    return [(int(states[2 * i]), int(states[2 * i + 1])) for i in range(runs)]


def toydown_variance(md: Microdata, epsilon: float, runs: int = 5, seed: int = 0,
                     level_weights=(0.25, 0.25, 0.25, 0.25), tree: CountTree | None = None) -> float:
    """Mean over ``runs`` paired ToyDown runs of the two-run block variance estimator.

    Seeds depend on ``seed`` and the run index only, so calls with different
    ``epsilon`` share their noise draws (common random numbers).
    """
    from .metrics import variance_estimate

    tree = build_tree(md) if tree is None else tree
    vals = []
    for sa, sb in _paired_seeds(seed, runs):
        a = postprocess(add_noise(tree, ToyDownConfig(epsilon, level_weights, sa))).leaves
        b = postprocess(add_noise(tree, ToyDownConfig(epsilon, level_weights, sb))).leaves
        vals.append(variance_estimate(a, b))
    return float(np.mean(vals))


@dataclass(frozen=True)
class CalibrationResult:
    epsilon: float
    variance: float
    iterations: int


def calibrate_epsilon(md: Microdata, target_variance: float, bracket=(0.1, 100.0),
                      tolerance: float = 0.05, seed: int = 0, runs: int = 5,
                      max_iter: int = 60, level_weights=(0.25, 0.25, 0.25, 0.25)) -> CalibrationResult:
    """Find epsilon whose ToyDown variance estimate matches ``target_variance``.

    Bisection on log(epsilon) over ``bracket``; each probe averages ``runs``
    paired runs.  Stops when the relative mismatch is below ``tolerance``.
    """
    if target_variance <= 0:
        raise ConfigError("target_variance must be positive")
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0 < lo < hi:
        raise ConfigError("bracket must satisfy 0 < eps_lo < eps_hi")
    tree = build_tree(md)

    def probe(eps):
        return toydown_variance(md, eps, runs, seed, level_weights, tree)

    v_lo, v_hi = probe(lo), probe(hi)
    if not v_lo > target_variance > v_hi:
        raise CalibrationError(
            f"bracket ({lo}, {hi}) does not straddle target {target_variance}: "
            f"V({lo}) = {v_lo:.6g}, V({hi}) = {v_hi:.6g}", v_lo, v_hi)
    for it in range(1, max_iter + 1):
        mid = math.sqrt(lo * hi)
        v = probe(mid)
        if abs(v - target_variance) / target_variance < tolerance:
            return CalibrationResult(mid, v, it)
        if v > target_variance:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(f"no convergence after {max_iter} bisection steps", v_lo, v_hi)


def with_seed(cfg: ToyDownConfig, seed: int) -> ToyDownConfig:
    return replace(cfg, seed=int(seed))
