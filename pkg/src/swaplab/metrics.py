"""Error, variance, entropy and tabulation statistics for protected count tables.

Count tables are either numpy arrays of shape (n_regions, 7) in geography
id order, or mappings keyed by ``(region_id, race)``.  Functions that
compare two tables accept both and check that they line up.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import AlignmentError, AuditError
from .geodata import N_RACES, RACE_COLUMNS, RACE_LABELS, GeoHierarchy, Microdata, block_matrix, rollup
from .swap import SwapLog

# Reference values for Alabama (mean absolute block-level error); documentation only.
REFERENCE_MAE_AL = {"topdown": 1.15536, "swap_0.02": 0.21892, "swap_0.10": 0.62777,
                    "swap_0.15": 0.76887, "swap_0.20": 0.8588, "swap_0.40": 1.03619}

HOUSEHOLD_RACE_LABELS = RACE_LABELS + ("Multiple Races",)
MULTIPLE = len(RACE_LABELS)


def _fmt(x: float) -> str:
    return f"{x:.6f}"


# ---------------------------------------------------------------- errors

def error(c1: int, c2: int) -> int:
    return int(c1) - int(c2)


def relative_error(c1: float, c2: float) -> float:
    """2 / (1 + c1/c2): 1 when unchanged, toward 2 as the count grows, toward 0 as it shrinks."""
    if c2 == 0:
        return 1.0 if c1 == 0 else 0.0
    return 2.0 / (1.0 + c1 / c2)


def relative_error_array(c1: np.ndarray, c2: np.ndarray) -> np.ndarray:
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    out = np.where(c1 == 0, 1.0, 0.0)
    nz = c2 != 0
    np.divide(2.0 * c2, c2 + c1, out=out, where=nz)
    return out


@dataclass
class ErrorTable:
    region_ids: tuple[str, ...]
    count_1: np.ndarray
    count_2: np.ndarray

    @property
    def error(self) -> np.ndarray:
        return self.count_1 - self.count_2

    @property
    def relative_error(self) -> np.ndarray:
        return relative_error_array(self.count_1, self.count_2)

    def rows(self):
        err, rel = self.error, self.relative_error
        for i, rid in enumerate(self.region_ids):
            for r in range(N_RACES):
                yield rid, RACE_COLUMNS[r], int(self.count_1[i, r]), int(self.count_2[i, r]), \
                    int(err[i, r]), float(rel[i, r])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("region_id", "race", "count_1", "count_2", "error", "relative_error"))
        for rid, race, a, b, e, rel in self.rows():
            w.writerow((rid, race, a, b, e, _fmt(rel)))
        return buf.getvalue()


def error_table(counts_1: np.ndarray, counts_2: np.ndarray, region_ids: Sequence[str]) -> ErrorTable:
    a, b = np.asarray(counts_1), np.asarray(counts_2)
    if a.shape != b.shape or a.shape != (len(region_ids), N_RACES):
        raise AlignmentError(f"count tables have shapes {a.shape} and {b.shape} "
                             f"for {len(region_ids)} regions")
    return ErrorTable(tuple(region_ids), a.astype(np.int64), b.astype(np.int64))


def _aligned(a, b) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(a, Mapping) or isinstance(b, Mapping):
        if not (isinstance(a, Mapping) and isinstance(b, Mapping)):
            raise AlignmentError("cannot align a mapping with an array")
        missing = sorted(set(a) ^ set(b), key=repr)
        if missing:
            raise AlignmentError(f"count tables disagree on {len(missing)} keys: {missing[:10]}",
                                 missing)
        keys = list(a)
        return (np.array([a[k] for k in keys], dtype=float),
                np.array([b[k] for k in keys], dtype=float))
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise AlignmentError(f"count tables have shapes {a.shape} and {b.shape}")
    return a, b


def variance_estimate(counts_a, counts_b) -> float:
    """Two-run variance estimator: mean over cells of (c_a - c_b)^2 / 2.

    ``counts_a`` and ``counts_b`` are two independent outputs of the same
    mechanism on the same input.
    """
    a, b = _aligned(counts_a, counts_b)
    if a.size == 0:
        return 0.0
    d = a - b
    return float(np.sum(d * d) / (2 * d.size))


def mean_abs_error(counts_1, counts_2) -> float:
    a, b = _aligned(counts_1, counts_2)
    return float(np.mean(np.abs(a - b))) if a.size else 0.0


def as_mapping(counts: np.ndarray, region_ids: Sequence[str]) -> dict[tuple[str, str], int]:
    return {(rid, RACE_COLUMNS[r]): int(counts[i, r])
            for i, rid in enumerate(region_ids) for r in range(N_RACES)}


# --------------------------------------------------------------- entropy

def racial_entropy(counts) -> float:
    """Shannon entropy (nats) of the race distribution; 0 for an empty region."""
    c = np.asarray(counts, dtype=float)
    total = c.sum()
    if total <= 0:
        return 0.0
    p = c[c > 0] / total
    return float(-(p * np.log(p)).sum())


def entropies(region_counts: np.ndarray) -> np.ndarray:
    """Row-wise racial entropy for an (n_regions, 7) table."""
    c = np.asarray(region_counts, dtype=float)
    total = c.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(total > 0, c / np.where(total > 0, total, 1), 0.0)
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1)), 0.0)
    return -terms.sum(axis=1)


def mean_tract_entropy(block_counts: np.ndarray, geo: GeoHierarchy) -> float:
    return float(entropies(rollup(np.asarray(block_counts), geo, "tract")).mean())


@dataclass
class EntropyReport:
    tract_ids: tuple[str, ...]
    before: np.ndarray
    steps: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]

    @property
    def after(self) -> np.ndarray:
        return self.steps[3]

    @property
    def averages(self) -> tuple[float, ...]:
        """State averages: before, then after each of the four steps."""
        return (float(self.before.mean()),) + tuple(float(s.mean()) for s in self.steps)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("tract_id", "entropy_before", "step1_remove_targets", "step2_remove_partners",
                    "step3_add_targets", "step4_add_partners", "entropy_after"))
        for i, tid in enumerate(self.tract_ids):
            vals = [self.before[i], *(s[i] for s in self.steps), self.after[i]]
            w.writerow((tid, *(_fmt(v) for v in vals)))
        w.writerow(("state_average", *(_fmt(v) for v in self.averages), _fmt(self.averages[-1])))
        return buf.getvalue()


def _log_positions(md: Microdata, log: SwapLog) -> tuple[np.ndarray, np.ndarray]:
    pos = {int(h): i for i, h in enumerate(md.household_id)}
    seen: set[int] = set()
    bids = md.geo.block_ids
    t_pos, p_pos = [], []
    for rec in log.records:
        for hid in (rec.target_id, rec.partner_id):
            if hid not in pos:
                raise AuditError(f"household {hid} in log is not in the microdata")
            if hid in seen:
                raise AuditError(f"household {hid} appears in more than one swap")
            seen.add(hid)
        a, b = pos[rec.target_id], pos[rec.partner_id]
        if bids[md.block[a]] != rec.target_block_before or bids[md.block[b]] != rec.partner_block_before:
            raise AuditError(f"swap {rec.target_id}<->{rec.partner_id}: logged blocks do not match")
        t_pos.append(a)
        p_pos.append(b)
    return np.array(t_pos, dtype=np.int64), np.array(p_pos, dtype=np.int64)


def entropy_decomposition(md_before: Microdata, log: SwapLog) -> EntropyReport:
    """Tract entropies after cumulatively applying the four swap steps.

    Steps: (1) remove all targets from their tracts, (2) remove all partners,
    (3) add every target to its partner's tract, (4) add every partner to
    its target's tract.  Step 4 is the fully swapped microdata.
    """
    t, p = _log_positions(md_before, log)
    geo = md_before.geo
    tract = md_before.tract()
    counts = rollup(block_matrix(md_before, "race"), geo, "tract").astype(np.int64)
    before = entropies(counts)
    steps = []
    rc = md_before.race_counts
    for hh, where, sign in ((t, tract[t], -1), (p, tract[p], -1), (t, tract[p], 1), (p, tract[t], 1)):
        np.add.at(counts, where, sign * rc[hh])
        steps.append(entropies(counts))
    return EntropyReport(geo.tract_ids, before, tuple(steps))


# -------------------------------------------------------- rurality ratios

@dataclass
class RuccRatioTable:
    rows: list[dict]  # one per (county, race)
    missing_rucc: int

    def groups(self) -> dict[tuple[int, str], list[float]]:
        out: dict[tuple[int, str], list[float]] = {}
        for row in self.rows:
            if not row["excluded"]:
                out.setdefault((row["rucc"], row["race"]), []).append(row["ratio"])
        return out

    def summary(self) -> list[dict]:
        out = []
        for (rucc, race), vals in sorted(self.groups().items(),
                                         key=lambda kv: (kv[0][0], RACE_COLUMNS.index(kv[0][1]))):
            v = np.asarray(vals)
            out.append({"rucc": rucc, "race": race, "n": len(v), "min": float(v.min()),
                        "median": float(np.median(v)), "mean": float(v.mean()), "max": float(v.max())})
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("county_id", "rucc", "race", "count_1", "count_2", "ratio", "excluded"))
        for r in self.rows:
            w.writerow((r["county_id"], r["rucc"] or "", r["race"], r["count_1"], r["count_2"],
                        "" if r["ratio"] is None else _fmt(r["ratio"]), int(r["excluded"])))
        return buf.getvalue()


def rucc_ratio_table(counts_1: np.ndarray, counts_2: np.ndarray, geo: GeoHierarchy) -> RuccRatioTable:
    """County ratios c1/c2 per race, grouped by rural-urban code.

    Cells with c2 = 0 (infinite or 0/0) are flagged and left out of the
    groups; counties without a code are skipped and counted.
    """
    a, b = np.asarray(counts_1), np.asarray(counts_2)
    if a.shape != b.shape or a.shape != (len(geo.county_ids), N_RACES):
        raise AlignmentError("county tables must have shape (n_counties, 7)")
    rows, missing = [], 0
    for i, cid in enumerate(geo.county_ids):
        code = int(geo.county_rucc[i])
        if code == 0:
            missing += 1
            continue
        for r in range(N_RACES):
            c1, c2 = int(a[i, r]), int(b[i, r])
            rows.append({"county_id": cid, "rucc": code, "race": RACE_COLUMNS[r], "count_1": c1,
                         "count_2": c2, "ratio": c1 / c2 if c2 else None, "excluded": c2 == 0})
    return RuccRatioTable(rows, missing)


# ----------------------------------------------------------- tabulations

def household_race(race_counts: np.ndarray) -> np.ndarray:
    """Single shared race index per household, or 7 for "Multiple Races"."""
    rc = np.asarray(race_counts)
    nonzero = rc > 0
    single = nonzero.sum(axis=1) == 1
    return np.where(single, np.argmax(nonzero, axis=1), MULTIPLE)


@dataclass
class SwapTabulations:
    size_overall: dict[int, float]
    size_targets: dict[int, float]
    race_overall: dict[str, float]
    race_targets: dict[str, float]
    race_partners: dict[str, float]
    partner_matrix: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_csv(self) -> dict[str, str]:
        def table(header, rows):
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
            return buf.getvalue()

        sizes = sorted(set(self.size_overall) | set(self.size_targets))
        labels = list(HOUSEHOLD_RACE_LABELS)
        return {
            "size_distribution.csv": table(
                ("household_size", "pct_overall", "pct_targets"),
                [(s, _fmt(self.size_overall.get(s, 0.0)), _fmt(self.size_targets.get(s, 0.0)))
                 for s in sizes]),
            "target_races.csv": table(
                ("race", "pct_overall", "pct_targets", "pct_partners"),
                [(l, _fmt(self.race_overall[l]), _fmt(self.race_targets[l]),
                  _fmt(self.race_partners[l])) for l in labels]),
            "partner_matrix.csv": table(
                ("target_race", *labels),
                [(t, *(_fmt(row[l]) for l in labels)) for t, row in self.partner_matrix.items()]),
        }


def _pct(counter: Counter, keys, total: int) -> dict:
    return {k: (100.0 * counter.get(k, 0) / total if total else 0.0) for k in keys}


def swap_tabulations(md_before: Microdata, log: SwapLog) -> SwapTabulations:
    """Household-size and race make-up of targets, and the target x partner race matrix.

    Matrix rows (target race) are percentages summing to 100; races with no
    targets get no row.
    """
    t, p = _log_positions(md_before, log)
    size = md_before.size
    hrace = household_race(md_before.race_counts)
    labels = HOUSEHOLD_RACE_LABELS
    sizes = sorted(set(int(s) for s in size))
    size_all = Counter(int(s) for s in size)
    size_t = Counter(int(s) for s in size[t])
    race_all = Counter(labels[int(r)] for r in hrace)
    race_t = Counter(labels[int(r)] for r in hrace[t])
    race_p = Counter(labels[int(r)] for r in hrace[p])
    matrix: dict[str, dict[str, float]] = {}
    pairs = Counter((labels[int(a)], labels[int(b)]) for a, b in zip(hrace[t], hrace[p]))
    for tl in labels:
        n = race_t.get(tl, 0)
        if n:
            matrix[tl] = {pl: 100.0 * pairs.get((tl, pl), 0) / n for pl in labels}
    return SwapTabulations(
        size_overall=_pct(size_all, sizes, len(size)),
        size_targets=_pct(size_t, sizes, len(t)),
        race_overall=_pct(race_all, labels, len(hrace)),
        race_targets=_pct(race_t, labels, len(t)),
        race_partners=_pct(race_p, labels, len(p)),
        partner_matrix=matrix,
    )
