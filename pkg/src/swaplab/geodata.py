"""Household microdata, geography, CSV I/O and a seeded synthetic population.

Microdata is stored column-wise in numpy arrays (one row per household) so
that the swapping engine and the count aggregations stay vectorised.  The
:class:`Household` dataclass is only a convenience row view.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyPopulationError, GeographyError, ParseError, ValidationError

N_RACES = 7
LEVELS = ("state", "county", "tract", "block")

HOUSEHOLD_HEADER = (
    "household_id", "block_id", "w", "b", "aian", "as", "hpi", "oth", "two_plus",
    "hispanic", "adults",
)
GEOGRAPHY_HEADER = ("block_id", "tract_id", "county_id", "state_id", "x", "y", "rucc")


class RaceCategory(enum.IntEnum):
    """The seven mutually exclusive race categories (Hispanic is tracked separately)."""

    W = 0
    B = 1
    AIAN = 2
    AS = 3
    HPI = 4
    OTH = 5
    TWO_PLUS = 6

    @property
    def label(self) -> str:
        return RACE_LABELS[self]

    @property
    def column(self) -> str:
        return RACE_COLUMNS[self]

    @classmethod
    def parse(cls, name: "str | int | RaceCategory") -> "RaceCategory":
        """Accept an enum member, its index, or a column/label name ("w", "AI/AN", "B")."""
        if isinstance(name, RaceCategory):
            return name
        if isinstance(name, (int, np.integer)):
            return cls(int(name))
        key = str(name).strip().lower()
        for r in cls:
            if key in (r.name.lower(), RACE_COLUMNS[r], RACE_LABELS[r].lower()):
                return r
        raise ValueError(f"unknown race category {name!r}")


RACE_COLUMNS = ("w", "b", "aian", "as", "hpi", "oth", "two_plus")
RACE_LABELS = ("W", "B", "AI/AN", "AS", "H/PI", "OTH", "2+")


@dataclass(frozen=True)
class Household:
    id: int
    block_id: str
    race_counts: tuple[int, ...]
    hispanic_count: int
    adult_count: int

    @property
    def size(self) -> int:
        return sum(self.race_counts)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GeoHierarchy:
    """Block -> tract -> county -> state nesting with planar block centroids.

    Every level is stored as a sorted tuple of ids plus an integer array
    pointing each node at its parent's position in the level above.
    """

    block_ids: tuple[str, ...]
    block_tract: np.ndarray
    block_xy: np.ndarray
    tract_ids: tuple[str, ...]
    tract_county: np.ndarray
    county_ids: tuple[str, ...]
    county_state: np.ndarray
    county_rucc: np.ndarray  # 0 when absent
    state_ids: tuple[str, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("block_tract", "block_xy", "tract_county", "county_state", "county_rucc"):
            object.__setattr__(self, name, _freeze(np.asarray(getattr(self, name))))
        index = {
            "block": {b: i for i, b in enumerate(self.block_ids)},
            "tract": {t: i for i, t in enumerate(self.tract_ids)},
            "county": {c: i for i, c in enumerate(self.county_ids)},
            "state": {s: i for i, s in enumerate(self.state_ids)},
        }
        object.__setattr__(self, "_index", index)
        if not np.all(np.isfinite(self.block_xy)):
            raise GeographyError("block centroid coordinates must be finite")

    @classmethod
    def from_rows(cls, rows: Iterable[Mapping]) -> "GeoHierarchy":
        """Build from records with block_id, tract_id, county_id, state_id, x, y, rucc."""
        blocks, tract_of, county_of, state_of, rucc_of = {}, {}, {}, {}, {}
        for row in rows:
            b, t, c, s = row["block_id"], row["tract_id"], row["county_id"], row["state_id"]
            if b in blocks:
                raise GeographyError(f"duplicate block {b!r}")
            blocks[b] = (t, float(row["x"]), float(row["y"]))
            if tract_of.setdefault(t, c) != c:
                raise GeographyError(f"tract {t!r} assigned to two counties")
            if county_of.setdefault(c, s) != s:
                raise GeographyError(f"county {c!r} assigned to two states")
            rucc = row.get("rucc")
            rucc = int(rucc) if rucc not in (None, "", 0) else 0
            if rucc and not 1 <= rucc <= 9:
                raise GeographyError(f"county {c!r}: rucc {rucc} outside 1-9")
            if rucc_of.setdefault(c, rucc) != rucc:
                raise GeographyError(f"county {c!r} has inconsistent rucc codes")
            state_of[s] = True
        block_ids = tuple(sorted(blocks))
        tract_ids = tuple(sorted(tract_of))
        county_ids = tuple(sorted(county_of))
        state_ids = tuple(sorted(state_of))
        ti = {t: i for i, t in enumerate(tract_ids)}
        ci = {c: i for i, c in enumerate(county_ids)}
        si = {s: i for i, s in enumerate(state_ids)}
        return cls(
            block_ids=block_ids,
            block_tract=np.array([ti[blocks[b][0]] for b in block_ids], dtype=np.int64),
            block_xy=np.array([blocks[b][1:] for b in block_ids], dtype=float).reshape(-1, 2),
            tract_ids=tract_ids,
            tract_county=np.array([ci[tract_of[t]] for t in tract_ids], dtype=np.int64),
            county_ids=county_ids,
            county_state=np.array([si[county_of[c]] for c in county_ids], dtype=np.int64),
            county_rucc=np.array([rucc_of[c] for c in county_ids], dtype=np.int64),
            state_ids=state_ids,
        )

    def ids(self, level: str) -> tuple[str, ...]:
        return {"block": self.block_ids, "tract": self.tract_ids,
                "county": self.county_ids, "state": self.state_ids}[_check_level(level)]

    def index_of(self, level: str, region_id: str) -> int:
        try:
            return self._index[_check_level(level)][region_id]
        except KeyError:
            raise GeographyError(f"unknown {level} {region_id!r}") from None

    def block_to(self, level: str) -> np.ndarray:
        """Map every block position to its ancestor's position at ``level``."""
        level = _check_level(level)
        if level == "block":
            return np.arange(len(self.block_ids))
        idx = self.block_tract
        if level == "tract":
            return idx
        idx = self.tract_county[idx]
        if level == "county":
            return idx
        return self.county_state[idx]

    def parent_index(self, level: str) -> np.ndarray:
        """Parent positions for the nodes of ``level`` (one level up)."""
        level = _check_level(level)
        if level == "block":
            return self.block_tract
        if level == "tract":
            return self.tract_county
        if level == "county":
            return self.county_state
        raise ValueError("state nodes have no parent")

    def rucc(self, county_id: str) -> int | None:
        code = int(self.county_rucc[self.index_of("county", county_id)])
        return code or None

    def rows(self) -> list[dict]:
        out = []
        for i, b in enumerate(self.block_ids):
            t = int(self.block_tract[i])
            c = int(self.tract_county[t])
            out.append({
                "block_id": b,
                "tract_id": self.tract_ids[t],
                "county_id": self.county_ids[c],
                "state_id": self.state_ids[int(self.county_state[c])],
                "x": float(self.block_xy[i, 0]),
                "y": float(self.block_xy[i, 1]),
                "rucc": int(self.county_rucc[c]) or None,
            })
        return out


def _check_level(level: str) -> str:
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}, got {level!r}")
    return level


@dataclass(frozen=True, eq=False)
class Microdata:
    """An immutable list of households located in the blocks of one state.

    ``block`` holds positions into ``geo.block_ids``; swapping produces a new
    Microdata that differs from its input only in this array.
    """

    household_id: np.ndarray
    block: np.ndarray
    race_counts: np.ndarray
    hispanic: np.ndarray
    adults: np.ndarray
    geo: GeoHierarchy
    state_id: str

    def __post_init__(self):
        for name in ("household_id", "block", "race_counts", "hispanic", "adults"):
            object.__setattr__(self, name, _freeze(np.asarray(getattr(self, name), dtype=np.int64)))
        self.validate()

    def validate(self) -> None:
        n = len(self.household_id)
        rc = self.race_counts.reshape(n, N_RACES) if n == 0 else self.race_counts
        object.__setattr__(self, "race_counts", rc)
        if rc.shape != (n, N_RACES) or self.block.shape != (n,) or self.hispanic.shape != (n,) \
                or self.adults.shape != (n,):
            raise ValidationError("household columns have inconsistent shapes")
        if len(np.unique(self.household_id)) != n:
            raise ValidationError("household ids are not unique")
        size = rc.sum(axis=1)
        bad = (rc < 0).any(axis=1) | (self.hispanic < 0) | (self.adults < 0) | (size < 1) \
            | (self.adults > size) | (self.hispanic > size)
        if bad.any():
            hid = int(self.household_id[np.argmax(bad)])
            raise ValidationError(f"household {hid} violates count invariants", household_id=hid)
        if n and (self.block.min() < 0 or self.block.max() >= len(self.geo.block_ids)):
            raise GeographyError("household block position out of range")
        if self.state_id not in self.geo.state_ids:
            raise GeographyError(f"state {self.state_id!r} not in geography")
        s = self.geo.index_of("state", self.state_id)
        wrong = self.geo.block_to("state") != s
        if wrong.any():
            raise GeographyError(
                f"block {self.geo.block_ids[int(np.argmax(wrong))]!r} is outside state {self.state_id!r}")

    def __len__(self) -> int:
        return len(self.household_id)

    @property
    def size(self) -> np.ndarray:
        return self.race_counts.sum(axis=1)

    @property
    def households(self) -> list[Household]:
        bids = self.geo.block_ids
        return [
            Household(int(h), bids[int(b)], tuple(int(v) for v in rc), int(hi), int(a))
            for h, b, rc, hi, a in zip(self.household_id, self.block, self.race_counts,
                                       self.hispanic, self.adults)
        ]

    def tract(self) -> np.ndarray:
        return self.geo.block_tract[self.block]

    def position(self, household_id: int) -> int:
        hits = np.flatnonzero(self.household_id == household_id)
        if len(hits) == 0:
            raise KeyError(household_id)
        return int(hits[0])

    def with_blocks(self, block: np.ndarray) -> "Microdata":
        return Microdata(self.household_id, block, self.race_counts, self.hispanic,
                         self.adults, self.geo, self.state_id)

    @classmethod
    def from_households(cls, households: Sequence[Household], geo: GeoHierarchy,
                        state_id: str | None = None) -> "Microdata":
        if state_id is None:
            if len(geo.state_ids) != 1:
                raise GeographyError("state_id required for a multi-state geography")
            state_id = geo.state_ids[0]
        n = len(households)
        return cls(
            household_id=np.array([h.id for h in households], dtype=np.int64),
            block=np.array([geo.index_of("block", h.block_id) for h in households], dtype=np.int64),
            race_counts=np.array([h.race_counts for h in households], dtype=np.int64).reshape(n, N_RACES),
            hispanic=np.array([h.hispanic_count for h in households], dtype=np.int64),
            adults=np.array([h.adult_count for h in households], dtype=np.int64),
            geo=geo,
            state_id=state_id,
        )


# ---------------------------------------------------------------- CSV I/O

def _int_field(value: str, name: str, lineno: int) -> int:
    try:
        v = int(value)
    except (TypeError, ValueError):
        raise ParseError(f"field {name!r} is not an integer: {value!r}", line=lineno) from None
    if v < 0:
        raise ParseError(f"field {name!r} is negative", line=lineno)
    return v


def read_geography(path: str | Path) -> GeoHierarchy:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != GEOGRAPHY_HEADER:
            raise ParseError(f"geography header must be {','.join(GEOGRAPHY_HEADER)}", line=1)
        for row in reader:
            lineno = reader.line_num
            if None in row or any(v is None for v in row.values()):
                raise ParseError("wrong number of fields", line=lineno)
            try:
                x, y = float(row["x"]), float(row["y"])
            except ValueError:
                raise ParseError("x/y must be decimal numbers", line=lineno) from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise GeographyError(f"block {row['block_id']!r} has a non-finite centroid")
            rucc = row["rucc"].strip()
            if rucc and not rucc.isdigit():
                raise ParseError("rucc must be an integer 1-9 or empty", line=lineno)
            rows.append(dict(row, x=x, y=y, rucc=int(rucc) if rucc else None))
    return GeoHierarchy.from_rows(rows)


def load_microdata(path: str | Path, geography: str | Path | GeoHierarchy,
                   state_id: str | None = None) -> Microdata:
    """Load a household CSV against a geography (a CSV path or a GeoHierarchy).

    Row order is preserved.  Raises :class:`ParseError` (with the line
    number) on malformed rows, :class:`ValidationError` naming the household
    on invariant violations and :class:`GeographyError` for unknown blocks.
    """
    geo = geography if isinstance(geography, GeoHierarchy) else read_geography(geography)
    households = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != HOUSEHOLD_HEADER:
            raise ParseError(f"household header must be {','.join(HOUSEHOLD_HEADER)}", line=1)
        for row in reader:
            lineno = reader.line_num
            if len(row) != len(HOUSEHOLD_HEADER):
                raise ParseError(f"expected {len(HOUSEHOLD_HEADER)} fields, got {len(row)}", line=lineno)
            vals = [_int_field(v, n, lineno) for v, n in zip(row[2:], HOUSEHOLD_HEADER[2:])]
            try:
                hid = int(row[0])
            except ValueError:
                raise ParseError(f"household_id is not an integer: {row[0]!r}", line=lineno) from None
            h = Household(hid, row[1], tuple(vals[:7]), vals[7], vals[8])
            if h.size < 1 or h.adult_count > h.size or h.hispanic_count > h.size:
                raise ValidationError(f"household {hid} violates count invariants", household_id=hid)
            if h.block_id not in geo._index["block"]:
                raise GeographyError(f"household {hid}: unknown block {h.block_id!r}")
            households.append(h)
    if state_id is None and households:
        blk = geo.index_of("block", households[0].block_id)
        state_id = geo.state_ids[int(geo.block_to("state")[blk])]
    elif state_id is None:
        state_id = geo.state_ids[0] if geo.state_ids else ""
    return Microdata.from_households(households, geo, state_id)


def household_csv(md: Microdata) -> str:
    """Canonical household CSV: rows sorted by household_id, LF line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HOUSEHOLD_HEADER)
    bids = md.geo.block_ids
    for i in np.argsort(md.household_id, kind="stable"):
        w.writerow([int(md.household_id[i]), bids[int(md.block[i])],
                    *(int(v) for v in md.race_counts[i]), int(md.hispanic[i]), int(md.adults[i])])
    return buf.getvalue()


def geography_csv(geo: GeoHierarchy) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GEOGRAPHY_HEADER)
    for row in geo.rows():
        w.writerow([row["block_id"], row["tract_id"], row["county_id"], row["state_id"],
                    repr(row["x"]), repr(row["y"]), "" if row["rucc"] is None else row["rucc"]])
    return buf.getvalue()


def write_microdata(md: Microdata, households_path: str | Path,
                    geography_path: str | Path | None = None) -> None:
    Path(households_path).write_bytes(household_csv(md).encode("utf-8"))
    if geography_path is not None:
        Path(geography_path).write_bytes(geography_csv(md.geo).encode("utf-8"))


# ------------------------------------------------------------ aggregation

def block_matrix(md: Microdata, field: str = "race") -> np.ndarray:
    """Block-level totals as an array: (n_blocks, 7) for ``race`` else (n_blocks,)."""
    nb = len(md.geo.block_ids)
    if field == "race":
        out = np.zeros((nb, N_RACES), dtype=np.int64)
        np.add.at(out, md.block, md.race_counts)
        return out
    values = {"total": md.size, "hispanic": md.hispanic, "adult": md.adults}[field]
    return np.bincount(md.block, weights=values, minlength=nb).astype(np.int64)


def rollup(block_values: np.ndarray, geo: GeoHierarchy, level: str) -> np.ndarray:
    """Sum block-level rows (1-D or 2-D) up to ``level``."""
    idx = geo.block_to(level)
    n = len(geo.ids(level))
    out = np.zeros((n,) + block_values.shape[1:], dtype=block_values.dtype)
    np.add.at(out, idx, block_values)
    return out


def aggregate_counts(md: Microdata, level: str, race) -> dict[str, int]:
    """Count persons per region at ``level``.

    ``race`` is a :class:`RaceCategory` (or anything :meth:`RaceCategory.parse`
    accepts) or one of ``"total"``, ``"hispanic"``, ``"adult"``.  Regions with
    no population are present with count 0.
    """
    level = _check_level(level)
    if isinstance(race, str) and race in ("total", "hispanic", "adult"):
        col = block_matrix(md, race)
    else:
        col = block_matrix(md, "race")[:, RaceCategory.parse(race)]
    agg = rollup(col, md.geo, level)
    return {rid: int(v) for rid, v in zip(md.geo.ids(level), agg)}


# ---------------------------------------------------------------- synthesis

DEFAULT_SIZE_DISTRIBUTION = (0.2632, 0.3559, 0.1520, 0.1414, 0.0534, 0.0184,
                             0.0063, 0.0024, 0.0026, 0.0007, 0.0005, 0.0032)
DEFAULT_RACE_MIXTURE = (0.690, 0.260, 0.006, 0.012, 0.001, 0.016, 0.015)


@dataclass(frozen=True)
class SynthParams:
    """Parameters of the synthetic population generator.

    ``segregation`` is the fraction of households placed in a tract whose
    dominant race equals the householder's race; the rest are placed
    uniformly at random.  ``mixed_rate`` is the chance that a non-householder
    member draws an independent race from ``race_mixture`` instead of
    sharing the householder's race.
    """

    n_households: int = 20_000
    counties: int = 4
    tracts_per_county: int = 10
    blocks_per_tract: int = 25
    size_distribution: tuple[float, ...] = DEFAULT_SIZE_DISTRIBUTION
    race_mixture: tuple[float, ...] = DEFAULT_RACE_MIXTURE
    hispanic_rate: float = 0.04
    segregation: float = 0.5
    adult_rate: float = 0.75
    mixed_rate: float = 0.03
    state_id: str = "01"

    def __post_init__(self):
        object.__setattr__(self, "size_distribution", tuple(float(p) for p in self.size_distribution))
        object.__setattr__(self, "race_mixture", tuple(float(p) for p in self.race_mixture))
        self.validate()

    def validate(self) -> None:
        if self.n_households < 0:
            raise ValidationError("n_households must be non-negative")
        if min(self.counties, self.tracts_per_county, self.blocks_per_tract) < 1:
            raise ValidationError("grid dimensions must be positive")
        for name, vec, n in (("size_distribution", self.size_distribution, 12),
                             ("race_mixture", self.race_mixture, N_RACES)):
            if len(vec) != n:
                raise ValidationError(f"{name} must have {n} entries")
            if min(vec) < 0 or abs(sum(vec) - 1.0) > 1e-9:
                raise ValidationError(f"{name} must be a probability vector")
        for name in ("hispanic_rate", "segregation", "adult_rate", "mixed_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1]")

    @classmethod
    def from_mapping(cls, d: Mapping) -> "SynthParams":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown synthetic parameters: {sorted(extra)}")
        return cls(**d)


def _grid_geography(p: SynthParams, rng: np.random.Generator) -> GeoHierarchy:
    # counties tile a square grid; tracts and blocks subdivide each cell
    def side(n):
        return int(math.ceil(math.sqrt(n)))

    cs, ts, bs = side(p.counties), side(p.tracts_per_county), side(p.blocks_per_tract)
    block_w = 1.0
    tract_w = bs * block_w
    county_w = ts * tract_w
    rucc = rng.integers(1, 10, size=p.counties)
    rows = []
    for c in range(p.counties):
        cid = f"{p.state_id}{c + 1:03d}"
        cx, cy = (c % cs) * county_w, (c // cs) * county_w
        for t in range(p.tracts_per_county):
            tid = f"{cid}{t + 1:06d}"
            tx, ty = cx + (t % ts) * tract_w, cy + (t // ts) * tract_w
            for b in range(p.blocks_per_tract):
                rows.append({
                    "block_id": f"{tid}{b + 1:04d}", "tract_id": tid, "county_id": cid,
                    "state_id": p.state_id,
                    "x": tx + (b % bs + 0.5) * block_w, "y": ty + (b // bs + 0.5) * block_w,
                    "rucc": int(rucc[c]),
                })
    return GeoHierarchy.from_rows(rows)


def _dominant_races(n_tracts: int, mixture: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    # largest-remainder allocation of tracts to races, then a seeded shuffle
    quota = mixture * n_tracts
    alloc = np.floor(quota).astype(int)
    rem = n_tracts - alloc.sum()
    order = np.lexsort((np.arange(len(quota)), -(quota - alloc)))
    alloc[order[:rem]] += 1
    dom = np.repeat(np.arange(len(mixture)), alloc)
    rng.shuffle(dom)
    return dom


def generate_synthetic(params: SynthParams, seed: int) -> Microdata:
    """Draw a synthetic single-state population.

    Deterministic in ``(params, seed)``.  Householder races are i.i.d. from
    ``race_mixture`` so statewide proportions follow it regardless of the
    segregation level; segregation only decides where households live.
    """
    params.validate()
    if params.n_households == 0:
        raise EmptyPopulationError("cannot generate a population with zero households")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed) & (2**64 - 1)))
    geo = _grid_geography(params, rng)
    n = params.n_households
    mixture = np.asarray(params.race_mixture)
    n_tracts = len(geo.tract_ids)

    sizes = rng.choice(np.arange(1, 13), size=n, p=np.asarray(params.size_distribution))
    head_race = rng.choice(N_RACES, size=n, p=mixture)

    race_counts = np.zeros((n, N_RACES), dtype=np.int64)
    race_counts[np.arange(n), head_race] = 1
    others = sizes - 1
    n_mixed = rng.binomial(others, params.mixed_rate)
    race_counts[np.arange(n), head_race] += others - n_mixed
    owner = np.repeat(np.arange(n), n_mixed)
    mixed_races = rng.choice(N_RACES, size=len(owner), p=mixture)
    np.add.at(race_counts, (owner, mixed_races), 1)

    hispanic = rng.binomial(sizes, params.hispanic_rate)
    adults = 1 + rng.binomial(others, params.adult_rate)

    dominant = _dominant_races(n_tracts, mixture, rng)
    tract = rng.integers(0, n_tracts, size=n)
    clustered = rng.random(n) < params.segregation
    for r in range(N_RACES):
        home = np.flatnonzero(dominant == r)
        pick = np.flatnonzero(clustered & (head_race == r))
        if len(home) and len(pick):
            tract[pick] = home[rng.integers(0, len(home), size=len(pick))]
    # blocks within a tract are uniform
    tract_blocks = [np.flatnonzero(geo.block_tract == t) for t in range(n_tracts)]
    per_tract = np.array([len(b) for b in tract_blocks])
    within = (rng.random(n) * per_tract[tract]).astype(np.int64)
    first = np.array([b[0] for b in tract_blocks])
    block = first[tract] + within

    return Microdata(
        household_id=np.arange(1, n + 1, dtype=np.int64),
        block=block,
        race_counts=race_counts,
        hispanic=hispanic,
        adults=adults,
        geo=geo,
        state_id=params.state_id,
    )
