import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swaplab.errors import CalibrationError, ConfigError
from swaplab.geodata import LEVELS, Microdata, SynthParams, aggregate_counts, block_matrix, generate_synthetic
from swaplab.toydown import (CountTree, ToyDownConfig, add_noise, block_table_csv, build_tree,
                             calibrate_epsilon, largest_remainder, postprocess, project_children,
                             run_toydown, toydown_variance)

from conftest import hh, make_geo


def qp_oracle(v, total):
    """Exact minimiser of ||x - v||^2 on {x >= 0, sum x = total} by enumerating supports."""
    v = np.asarray(v, float)
    best, best_cost = None, np.inf
    for r in range(1, len(v) + 1):
        for support in itertools.combinations(range(len(v)), r):
            s = list(support)
            x = np.zeros_like(v)
            x[s] = v[s] - (v[s].sum() - total) / len(s)
            if (x >= -1e-12).all():
                cost = ((x - v) ** 2).sum()
                if cost < best_cost:
                    best, best_cost = np.maximum(x, 0), cost
    return best


@pytest.fixture
def three_tracts():
    geo = make_geo({"01001": {"t1": [("b1", 0, 0), ("b2", 1, 0)], "t2": [("b3", 2, 0)]},
                    "01003": {"t3": [("b4", 3, 0), ("b5", 4, 0)]}})
    hs = [hh(1, "b1", (3, 1)), hh(2, "b2", (0, 2)), hh(3, "b3", (1, 0, 1)),
          hh(4, "b4", (4,)), hh(5, "b5", (0, 0, 0, 0, 0, 0, 2)), hh(6, "b5", (1, 1))]
    return Microdata.from_households(hs, geo)


# --------------------------------------------------------------------- tree

def test_single_block_tree_is_a_path():
    geo = make_geo({"01001": {"t": [("b", 0, 0)]}})
    tree = build_tree(Microdata.from_households([hh(1, "b", (2, 1))], geo))
    for c in tree.counts:
        assert c.tolist() == [[2, 1, 0, 0, 0, 0, 0]]


def test_tree_matches_brute_force(three_tracts):
    tree = build_tree(three_tracts)
    assert tree.is_consistent()
    for lvl in LEVELS:
        for r in range(7):
            agg = aggregate_counts(three_tracts, lvl, r)
            assert tree.level(lvl)[:, r].tolist() == [agg[i] for i in three_tracts.geo.ids(lvl)]
    assert tree.level("tract")[0].tolist() == (tree.leaves[0] + tree.leaves[1]).tolist()


def test_config_validation():
    with pytest.raises(ConfigError):
        ToyDownConfig(epsilon_total=0)
    with pytest.raises(ConfigError):
        ToyDownConfig(level_weights=(0.5, 0.5, 0.1, -0.1))
    with pytest.raises(ConfigError):
        ToyDownConfig(level_weights=(0.3, 0.3, 0.3, 0.3))


# -------------------------------------------------------------------- noise

def test_huge_epsilon_is_nearly_noiseless(three_tracts):
    tree = build_tree(three_tracts)
    noisy = add_noise(tree, ToyDownConfig(1e9, seed=1))
    for a, b in zip(noisy.counts, tree.counts):
        assert np.abs(a - b).max() < 1e-6


def test_noise_is_deterministic(three_tracts):
    tree = build_tree(three_tracts)
    a = add_noise(tree, ToyDownConfig(1.0, seed=5))
    b = add_noise(tree, ToyDownConfig(1.0, seed=5))
    assert all(np.array_equal(x, y) for x, y in zip(a.counts, b.counts))


def test_leaf_noise_variance():
    geo = make_geo({"01001": {"t": [("b", 0, 0)]}})
    tree = build_tree(Microdata.from_households([hh(1, "b", (5,))], geo))
    cfg = ToyDownConfig(2.0)
    draws = np.array([add_noise(tree, ToyDownConfig(2.0, seed=s)).leaves[0] - 5 * (np.arange(7) == 0)
                      for s in range(10_000)])
    eps_leaf = cfg.level_epsilon(3)
    assert draws.var() == pytest.approx(2 / eps_leaf ** 2, rel=0.05)


def test_noise_order_is_level_major():
    geo = make_geo({"01001": {"t": [("b1", 0, 0), ("b2", 1, 0)]}})
    tree = build_tree(Microdata.from_households([hh(1, "b1", (1,))], geo))
    cfg = ToyDownConfig(4.0, seed=9)
    rng = np.random.default_rng(np.random.SeedSequence(9))
    noisy = add_noise(tree, cfg)
    for lvl, c in enumerate(tree.counts):
        expected = rng.laplace(0, 1 / cfg.level_epsilon(lvl), size=c.shape)
        assert np.allclose(noisy.counts[lvl] - c, expected)


# --------------------------------------------------------------- projection

def test_water_filling_hand_examples():
    assert project_children([12, 4], 10) == pytest.approx([9, 1])
    assert project_children([-2, 9], 5) == pytest.approx([0, 5])
    assert project_children([-1, -3], 0).tolist() == [0, 0]


@settings(max_examples=300)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=5), st.floats(0, 100))
def test_projection_matches_qp_oracle(values, total):
    got = project_children(values, total)
    assert got == pytest.approx(qp_oracle(values, total), abs=1e-6)
    assert (got >= 0).all() and got.sum() == pytest.approx(total, abs=1e-9)


@given(st.lists(st.floats(0, 1000), min_size=1, max_size=8))
def test_projection_fixed_point(values):
    v = np.array(values)
    assert project_children(v, v.sum()) == pytest.approx(v, abs=1e-9)


@given(st.lists(st.floats(0, 100), min_size=1, max_size=8), st.integers(0, 8))
def test_largest_remainder_properties(values, slack):
    v = np.array(values)
    total = int(np.floor(v.sum())) + min(slack, len(v)) if v.sum() % 1 else int(v.sum())
    total = min(total, int(np.floor(v).sum()) + len(v))
    out = largest_remainder(v, total)
    assert out.sum() == total and (out >= 0).all()
    assert (np.abs(out - v) < 1 + 1e-9).all()


def test_largest_remainder_ties_to_lower_index():
    assert largest_remainder([0.5, 0.5, 0.5], 2).tolist() == [1, 1, 0]


# -------------------------------------------------------------- postprocess

def test_consistent_tree_is_fixed_point(synth_md):
    tree = build_tree(synth_md)
    real = CountTree(tree.geo, tuple(c.astype(float) for c in tree.counts))
    out = postprocess(real)
    assert all(np.array_equal(a, b) for a, b in zip(out.counts, tree.counts))


def test_zero_parent_negative_children():
    geo = make_geo({"01001": {"t": [("b1", 0, 0), ("b2", 1, 0)]}})
    tree = build_tree(Microdata.from_households([hh(1, "b1", (1,))], geo))
    counts = [np.full(c.shape, -1.0) for c in tree.counts]
    out = postprocess(CountTree(geo, tuple(counts)))
    assert all((c == 0).all() for c in out.counts)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**63), eps=st.sampled_from([0.05, 0.5, 3.26, 50.0]))
def test_postprocess_contract(synth_md, seed, eps):
    tree = postprocess(add_noise(build_tree(synth_md), ToyDownConfig(eps, seed=seed)))
    assert tree.is_consistent() and tree.is_nonnegative()
    assert all(c.dtype.kind == "i" for c in tree.counts)


def test_noiseless_limit_exact(synth_md):
    assert np.array_equal(run_toydown(synth_md, ToyDownConfig(1e9, seed=3)), block_matrix(synth_md))


def test_state_total_sd():
    # 100 equal large blocks; root noise dominates the state total
    md = generate_synthetic(SynthParams(n_households=20_000, counties=2, tracts_per_county=2,
                                        blocks_per_tract=5), 1)
    tree = build_tree(md)
    truth = tree.counts[0][0]
    cfg = ToyDownConfig(4.0)
    diffs = np.array([postprocess(add_noise(tree, ToyDownConfig(4.0, seed=s))).counts[0][0] - truth
                      for s in range(2000)], float)
    big = truth > 1000
    sd = diffs[:, big].std(axis=0)
    assert sd == pytest.approx(np.sqrt(2) / cfg.level_epsilon(0), rel=0.1)


def test_leaf_error_unbiased_for_large_counts():
    geo = make_geo({"01001": {"t1": [("b1", 0, 0), ("b2", 1, 0)], "t2": [("b3", 2, 0)]}})
    hs = [hh(i, f"b{1 + i % 3}", (3,)) for i in range(300)]
    md = Microdata.from_households(hs, geo)
    tree = build_tree(md)
    # leaf scale 1, leaf counts 300 >= 50 x scale; SE of the mean ~0.02
    err = np.mean([postprocess(add_noise(tree, ToyDownConfig(4.0, seed=s))).leaves[:, 0] - tree.leaves[:, 0]
                   for s in range(4000)], axis=0)
    assert np.abs(err).max() < 0.1


def test_block_table_csv(three_tracts):
    text = block_table_csv(three_tracts.geo, block_matrix(three_tracts))
    lines = text.splitlines()
    assert lines[0] == "block_id,w,b,aian,as,hpi,oth,two_plus"
    assert lines[1] == "b1,3,1,0,0,0,0,0"


# -------------------------------------------------------------- calibration

def test_variance_decreases_in_epsilon(synth_md):
    v = [toydown_variance(synth_md, e, runs=3, seed=1) for e in (0.5, 2, 8)]
    assert v[0] > v[1] > v[2] > 0
    assert toydown_variance(synth_md, 1e9, runs=2) < 1e-12


def test_calibration_roundtrip(synth_md):
    target = toydown_variance(synth_md, 2.0, runs=5, seed=99)
    res = calibrate_epsilon(synth_md, target, seed=5, runs=5)
    assert res.epsilon == pytest.approx(2.0, rel=0.15)
    assert abs(res.variance - target) / target < 0.05


def test_calibration_bad_bracket(synth_md):
    with pytest.raises(CalibrationError) as exc:
        calibrate_epsilon(synth_md, 1.0, bracket=(50.0, 100.0), runs=2)
    assert exc.value.v_lo < 1.0 and exc.value.v_hi < 1.0
