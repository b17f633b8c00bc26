"""Ecological regression on precinct race shares, and a synthetic election.

Precincts are unions of whole tracts.  Votes are drawn once from the
unprotected microdata and held fixed; protected datasets only change the
precinct race counts used as covariates.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateDesignError, InsufficientDataError, ValidationError
from .geodata import N_RACES, RACE_COLUMNS, GeoHierarchy, Microdata, RaceCategory, block_matrix, rollup
from .swap import SwapConfig, select_and_swap, with_seed
from .toydown import ToyDownConfig, run_toydown
from .toydown import with_seed as toydown_with_seed

ER_HEADER = ("race", "candidate", "weighted", "slope", "intercept", "support_estimate", "replicate")


@dataclass(frozen=True)
class Precinct:
    precinct_id: str
    tract_ids: tuple[str, ...]
    population: int
    race_counts: tuple[int, ...]
    votes: tuple[int, ...]

    def __post_init__(self):
        if min(self.votes, default=0) < 0:
            raise ValidationError(f"precinct {self.precinct_id}: negative votes")
        if sum(self.race_counts) != self.population:
            raise ValidationError(f"precinct {self.precinct_id}: race counts do not sum to population")


@dataclass(frozen=True)
class ERResult:
    race: RaceCategory
    candidate: int
    slope: float
    intercept: float
    weighted: bool
    residual: float = 0.0  # relative normal-equation residual of the fit

    @property
    def support_estimate(self) -> float:
        return self.intercept + self.slope


def fit_line(x: np.ndarray, y: np.ndarray, w: np.ndarray | None = None) -> tuple[float, float]:
    """(weighted) least-squares slope and intercept from the normal equations."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    w = np.ones_like(x) if w is None else np.asarray(w, float)
    w = w / w.max()  # equal weights become exactly 1
    sw = w.sum()
    xm, ym = (w * x).sum() / sw, (w * y).sum() / sw
    dx = x - xm
    sxx = (w * dx * dx).sum()
    if sxx <= 1e-15 * max(sw, 1.0):
        raise DegenerateDesignError("race share has no variance across precincts")
    slope = (w * dx * (y - ym)).sum() / sxx
    return float(slope), float(ym - slope * xm)


def normal_equation_residual(x, y, w, slope: float, intercept: float) -> float:
    """Relative residual ||X'W(y - Xb)|| / ||X'Wy|| of a fitted line."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    w = np.ones_like(x) if w is None else np.asarray(w, float)
    X = np.column_stack([np.ones_like(x), x])
    r = y - X @ np.array([intercept, slope])
    num = np.linalg.norm(X.T @ (w * r))
    den = np.linalg.norm(X.T @ (w * y))
    return float(num / den) if den > 0 else float(num)


def _design(precincts: Sequence[Precinct], race: RaceCategory, candidate: int):
    rows = [p for p in precincts if p.population > 0 and sum(p.votes) > 0]
    if len(rows) < 3:
        raise InsufficientDataError(f"need at least 3 usable precincts, have {len(rows)}")
    x = np.array([p.race_counts[race] / p.population for p in rows])
    y = np.array([p.votes[candidate] / sum(p.votes) for p in rows])
    w = np.array([p.population for p in rows], dtype=float)
    return x, y, w


def ecological_regression(precincts: Sequence[Precinct], race, candidate: int,
                          weighted: bool = False) -> ERResult:
    """Regress a candidate's vote share on the share of ``race``; weights are precinct populations."""
    race = RaceCategory.parse(race)
    x, y, w = _design(precincts, race, candidate)
    w = w if weighted else None
    slope, intercept = fit_line(x, y, w)
    return ERResult(race, int(candidate), slope, intercept, bool(weighted),
                    normal_equation_residual(x, y, w, slope, intercept))


# -------------------------------------------------------------- elections

def tract_precincts(geo: GeoHierarchy, tracts_per_precinct: int = 1) -> dict[str, str]:
    """Group consecutive tracts (id order, within county) into precincts."""
    out = {}
    counter: dict[int, int] = {}
    for i, tid in enumerate(geo.tract_ids):
        c = int(geo.tract_county[i])
        k = counter.get(c, 0)
        counter[c] = k + 1
        out[tid] = f"{geo.county_ids[c]}-P{k // tracts_per_precinct + 1:04d}"
    return out


def precinct_counts(block_counts: np.ndarray, geo: GeoHierarchy,
                    precinct_map: Mapping[str, str]) -> tuple[list[str], np.ndarray]:
    tract_counts = rollup(np.asarray(block_counts), geo, "tract")
    ids = sorted(set(precinct_map.values()))
    pidx = {p: i for i, p in enumerate(ids)}
    out = np.zeros((len(ids), N_RACES), dtype=np.int64)
    for tid, pid in precinct_map.items():
        out[pidx[pid]] += tract_counts[geo.index_of("tract", tid)]
    return ids, out


def generate_election(md: Microdata, precinct_map: Mapping[str, str] | None, true_support,
                      turnout: float, seed: int) -> list[Precinct]:
    """Votes cast by every person independently.

    Each person turns out with probability ``turnout`` and then votes for a
    candidate drawn from their race's row of ``true_support`` (7 x k).
    Precincts without population are dropped.
    """
    support = np.asarray(true_support, dtype=float)
    if support.shape[0] != N_RACES or support.ndim != 2:
        raise ValidationError("true_support must have one row per race category")
    if (support < 0).any() or not np.allclose(support.sum(axis=1), 1.0, atol=1e-9):
        raise ValidationError("true_support rows must be probability vectors")
    if not 0 < turnout <= 1:
        raise ValidationError("turnout must lie in (0, 1]")
    precinct_map = tract_precincts(md.geo) if precinct_map is None else precinct_map
    ids, counts = precinct_counts(block_matrix(md, "race"), md.geo, precinct_map)
    members: dict[str, list[str]] = {}
    for tid, pid in sorted(precinct_map.items()):
        members.setdefault(pid, []).append(tid)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1)))
    out = []
    for i, pid in enumerate(ids):
        votes = np.zeros(support.shape[1], dtype=np.int64)
        for r in range(N_RACES):
            voters = rng.binomial(counts[i, r], turnout)
            votes += rng.multinomial(voters, support[r])
        pop = int(counts[i].sum())
        if pop == 0:
            continue
        out.append(Precinct(pid, tuple(members[pid]), pop, tuple(int(v) for v in counts[i]),
                            tuple(int(v) for v in votes)))
    return out


def with_race_counts(precincts: Sequence[Precinct], block_counts: np.ndarray, geo: GeoHierarchy,
                     precinct_map: Mapping[str, str]) -> list[Precinct]:
    """Same votes, race counts re-aggregated from a (protected) block table."""
    ids, counts = precinct_counts(block_counts, geo, precinct_map)
    row = {p: i for i, p in enumerate(ids)}
    out = []
    for p in precincts:
        c = counts[row[p.precinct_id]]
        out.append(Precinct(p.precinct_id, p.tract_ids, int(c.sum()), tuple(int(v) for v in c), p.votes))
    return out


def precinct_csv(precincts: Sequence[Precinct]) -> str:
    k = max((len(p.votes) for p in precincts), default=0)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("precinct_id", "population", *RACE_COLUMNS, *(f"votes_cand{c + 1}" for c in range(k))))
    for p in precincts:
        w.writerow((p.precinct_id, p.population, *p.race_counts, *p.votes))
    return buf.getvalue()


# ------------------------------------------------------------- experiment

POLARIZED_SUPPORT = np.array([[0.9, 0.1], [0.1, 0.9]] + [[0.5, 0.5]] * (N_RACES - 2))


@dataclass(frozen=True)
class ElectionSpec:
    true_support: np.ndarray = field(default_factory=lambda: POLARIZED_SUPPORT.copy())
    turnout: float = 0.6
    tracts_per_precinct: int = 1
    races: tuple[RaceCategory, ...] = (RaceCategory.W, RaceCategory.B)
    seed: int = 0

    @property
    def n_candidates(self) -> int:
        return int(np.asarray(self.true_support).shape[1])


@dataclass
class ERComparison:
    """Slopes per (replicate, race, candidate, weighted) for each dataset."""

    rows: list[dict]

    def slopes(self, dataset: str, race, candidate: int, weighted: bool) -> np.ndarray:
        race = RaceCategory.parse(race)
        return np.array([r["slope"] for r in self.rows if r["dataset"] == dataset
                         and r["race"] == race and r["candidate"] == candidate
                         and r["weighted"] == weighted])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("dataset",) + ER_HEADER)
        for r in self.rows:
            w.writerow((r["dataset"], RACE_COLUMNS[r["race"]], f"cand{r['candidate'] + 1}",
                        int(r["weighted"]), f"{r['slope']:.6f}", f"{r['intercept']:.6f}",
                        f"{r['support_estimate']:.6f}", r["replicate"]))
        return buf.getvalue()


def _fits(precincts, spec: ElectionSpec, dataset: str, replicate: int) -> list[dict]:
    rows = []
    for race in spec.races:
        for c in range(spec.n_candidates):
            for weighted in (False, True):
                res = ecological_regression(precincts, race, c, weighted)
                rows.append({"dataset": dataset, "replicate": replicate, "race": res.race,
                             "candidate": c, "weighted": weighted, "slope": res.slope,
                             "intercept": res.intercept, "support_estimate": res.support_estimate,
                             "residual": res.residual})
    return rows


def replicate_seeds(seed: int, replicates: int) -> list[tuple[int, int]]:
    s = np.random.SeedSequence(int(seed) & (2**64 - 1)).generate_state(2 * replicates, np.uint64)
    return [(int(s[2 * i]), int(s[2 * i + 1])) for i in range(replicates)]


def er_bias_experiment(md: Microdata, swap_cfg: SwapConfig | None, toydown_cfg: ToyDownConfig | None,
                       election: ElectionSpec, replicates: int, seed: int = 0) -> ERComparison:
    """ER slopes on original, swapped and ToyDown race shares with votes held fixed.

    Replicate ``i`` runs swapping and ToyDown with seeds derived from
    ``(seed, i)``; the original fit is repeated per replicate so rows pair up.
    """
    pmap = tract_precincts(md.geo, election.tracts_per_precinct)
    precincts = generate_election(md, pmap, election.true_support, election.turnout, election.seed)
    original = _fits(precincts, election, "original", 0)
    rows = []
    for i, (s_swap, s_td) in enumerate(replicate_seeds(seed, replicates)):
        rows += [dict(r, replicate=i) for r in original]
        if swap_cfg is not None:
            swapped, _ = select_and_swap(md, with_seed(swap_cfg, s_swap))
            rows += _fits(with_race_counts(precincts, block_matrix(swapped), md.geo, pmap),
                          election, "swapped", i)
        if toydown_cfg is not None:
            blocks = run_toydown(md, toydown_with_seed(toydown_cfg, s_td))
            rows += _fits(with_race_counts(precincts, blocks, md.geo, pmap), election, "toydown", i)
    return ERComparison(rows)
