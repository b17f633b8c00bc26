"""Run configurations, the replicate pipeline, delta estimation and variance sweeps.

A run configuration is a TOML file::

    spec_version = 1
    base_seed = 2024
    replicates = 2
    output_dir = "out"
    metrics = ["errors", "mae", "entropy", "variance"]

    [input]                 # either synthetic parameters ...
    kind = "synthetic"
    [input.synthetic]
    n_households = 20000
    segregation = 0.9

    # ... or files: kind = "files", households = "...", geography = "..."

    [[mechanism]]
    name = "swap10"
    kind = "swap"
    variant = "standard"
    swap_rate = 0.10

    [[mechanism]]
    name = "toydown"
    kind = "toydown"
    epsilon = 3.26

    [election]              # optional; needed by the "er" metric and er_slope statistics
    turnout = 0.6

Every replicate of every mechanism gets the seed
``derive_seed(base_seed, mechanism_name, replicate_index)``: the first
8 bytes (big-endian) of SHA-256 over ``"{base_seed}/{name}/{index}"``.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from . import __version__
from .ecoreg import (POLARIZED_SUPPORT, ElectionSpec, ecological_regression, generate_election,
                     precinct_csv, tract_precincts, with_race_counts)
from .errors import ConfigError, RegistryError, SwaplabError
from .geodata import (N_RACES, RACE_COLUMNS, GeoHierarchy, Microdata, RaceCategory, SynthParams,
                      block_matrix, generate_synthetic, geography_csv, household_csv,
                      load_microdata, rollup)
from .metrics import (entropies, entropy_decomposition, error_table, mean_abs_error,
                      mean_tract_entropy, rucc_ratio_table, swap_tabulations, variance_estimate)
from .swap import SwapConfig, select_and_swap, swap_variant
from .toydown import REFERENCE_EPSILON, ToyDownConfig, block_table_csv, run_toydown

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

SPEC_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_IO = 0, 2, 3, 4
METRICS = ("errors", "block_errors", "mae", "entropy", "tabulations", "rucc", "variance", "er")
DEFAULT_METRICS = ("errors", "mae", "entropy", "variance")


def derive_seed(base_seed: int, name: str, index: int) -> int:
    digest = hashlib.sha256(f"{int(base_seed)}/{name}/{int(index)}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


# ----------------------------------------------------------------- config

@dataclass(frozen=True)
class Mechanism:
    name: str
    kind: str  # "swap" | "toydown"
    swap: SwapConfig | None = None
    toydown: ToyDownConfig | None = None

    def resolved(self) -> dict:
        if self.kind == "swap":
            return {"name": self.name, "kind": "swap", "swap_rate": self.swap.swap_rate,
                    "k_nearest": self.swap.k_nearest, "tier_probs": list(self.swap.tier_probs)}
        return {"name": self.name, "kind": "toydown", "epsilon": self.toydown.epsilon_total,
                "level_weights": list(self.toydown.level_weights)}

    def run(self, md: Microdata, seed: int):
        """Protected block table, plus the swap log for swapping."""
        if self.kind == "swap":
            out, log = select_and_swap(md, replace(self.swap, seed=seed))
            return block_matrix(out), log
        return run_toydown(md, replace(self.toydown, seed=seed)), None


@dataclass
class RunConfig:
    base_seed: int = 0
    replicates: int = 1
    output_dir: str = "out"
    metrics: tuple[str, ...] = DEFAULT_METRICS
    mechanisms: tuple[Mechanism, ...] = ()
    synthetic: SynthParams | None = None
    input_seed: int | None = None
    households: str | None = None
    geography: str | None = None
    election: ElectionSpec | None = None
    jobs: int = 1
    source_dir: str = "."

    def mechanism(self, name: str | None = None, kind: str | None = None) -> Mechanism:
        for m in self.mechanisms:
            if (name is None or m.name == name) and (kind is None or m.kind == kind):
                return m
        raise ConfigError(f"no mechanism matching name={name!r} kind={kind!r}")

    def resolved(self) -> dict:
        d = {
            "spec_version": SPEC_VERSION,
            "base_seed": self.base_seed,
            "replicates": self.replicates,
            "output_dir": self.output_dir,
            "metrics": list(self.metrics),
            "mechanisms": [m.resolved() for m in self.mechanisms],
        }
        if self.synthetic is not None:
            syn = asdict(self.synthetic)
            syn = {k: list(v) if isinstance(v, tuple) else v for k, v in syn.items()}
            d["input"] = {"kind": "synthetic", "seed": self.resolved_input_seed(), "synthetic": syn}
        else:
            d["input"] = {"kind": "files", "households": self.households, "geography": self.geography}
        if self.election is not None:
            e = self.election
            d["election"] = {"turnout": e.turnout, "support": np.asarray(e.true_support).tolist(),
                             "tracts_per_precinct": e.tracts_per_precinct,
                             "races": [RACE_COLUMNS[r] for r in e.races], "seed": e.seed}
        return d

    def resolved_input_seed(self) -> int:
        return self.input_seed if self.input_seed is not None else derive_seed(self.base_seed, "input", 0)

    def load_input(self) -> Microdata:
        if self.synthetic is not None:
            return generate_synthetic(self.synthetic, self.resolved_input_seed())
        base = Path(self.source_dir)
        return load_microdata(base / self.households, base / self.geography)


def _line_of(text: str, pattern: str, occurrence: int = 0) -> int | None:
    hits = [i + 1 for i, line in enumerate(text.splitlines()) if re.match(pattern, line.strip())]
    return hits[occurrence] if len(hits) > occurrence else (hits[0] if hits else None)


def _key_line(text: str, key: str, section: str | None = None, occurrence: int = 0) -> int | None:
    lines = text.splitlines()
    start = 0
    if section is not None:
        start = (_line_of(text, re.escape(section), occurrence) or 1) - 1
    for i in range(start, len(lines)):
        if re.match(rf"{re.escape(key)}\s*=", lines[i].strip()):
            return i + 1
    return _line_of(text, re.escape(section)) if section else None


def _mechanism(entry: Mapping, i: int, text: str) -> Mechanism:
    def fail(msg, key=None):
        line = _key_line(text, key, "[[mechanism]]", i) if key else _line_of(text, r"\[\[mechanism\]\]", i)
        raise ConfigError(f"mechanism #{i + 1}: {msg}", line)

    name = entry.get("name")
    if not isinstance(name, str) or not name:
        fail("missing 'name'", "name")
    kind = entry.get("kind")
    allowed = {"swap": {"name", "kind", "variant", "swap_rate", "k_nearest", "tier_probs"},
               "toydown": {"name", "kind", "epsilon", "level_weights"}}
    if kind not in allowed:
        fail(f"kind must be 'swap' or 'toydown', got {kind!r}", "kind")
    extra = set(entry) - allowed[kind]
    if extra:
        fail(f"unknown keys {sorted(extra)}", sorted(extra)[0])
    if kind == "swap" and "swap_rate" not in entry:
        fail("missing 'swap_rate'")
    try:
        if kind == "swap":
            cfg = swap_variant(entry.get("variant", "standard"), float(entry["swap_rate"]))
            if "k_nearest" in entry:
                cfg = replace(cfg, k_nearest=int(entry["k_nearest"]))
            if "tier_probs" in entry:
                cfg = replace(cfg, tier_probs=tuple(entry["tier_probs"]))
            cfg = SwapConfig(cfg.swap_rate, cfg.k_nearest, cfg.tier_probs, 0)
            return Mechanism(name, kind, swap=cfg)
        td = ToyDownConfig(float(entry.get("epsilon", REFERENCE_EPSILON)),
                           tuple(entry.get("level_weights", (0.25,) * 4)))
        return Mechanism(name, kind, toydown=td)
    except ConfigError as exc:
        key = next((k for k in ("swap_rate", "variant", "k_nearest", "tier_probs", "epsilon",
                                "level_weights") if k in entry and k in str(exc)), None)
        fail(str(exc), key)


def parse_config(text: str, source_dir: str | Path = ".") -> RunConfig:
    """Parse and validate a TOML run configuration; errors carry line numbers."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", int(m.group(1)) if m else None) from None

    known = {"spec_version", "base_seed", "replicates", "output_dir", "metrics", "input",
             "mechanism", "election", "jobs"}
    extra = set(raw) - known
    if extra:
        k = sorted(extra)[0]
        raise ConfigError(f"unknown top-level key {k!r}", _key_line(text, k) or _line_of(text, rf"\[{k}"))
    if raw.get("spec_version") != SPEC_VERSION:
        raise ConfigError(f"spec_version must be {SPEC_VERSION}", _key_line(text, "spec_version") or 1)
    cfg = RunConfig(source_dir=str(source_dir))
    for key, typ in (("base_seed", int), ("replicates", int), ("output_dir", str), ("jobs", int)):
        if key in raw:
            if not isinstance(raw[key], typ) or isinstance(raw[key], bool):
                raise ConfigError(f"{key} must be {typ.__name__}", _key_line(text, key))
            setattr(cfg, key, raw[key])
    if cfg.replicates < 1:
        raise ConfigError("replicates must be >= 1", _key_line(text, "replicates"))
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1", _key_line(text, "jobs"))
    metrics = raw.get("metrics", list(DEFAULT_METRICS))
    bad = [m for m in metrics if m not in METRICS]
    if bad:
        raise ConfigError(f"unknown metrics {bad}; choose from {list(METRICS)}", _key_line(text, "metrics"))
    cfg.metrics = tuple(metrics)

    inp = raw.get("input", {"kind": "synthetic"})
    kind = inp.get("kind", "synthetic")
    if kind == "synthetic":
        try:
            cfg.synthetic = SynthParams.from_mapping(inp.get("synthetic", {}))
        except (SwaplabError, TypeError) as exc:
            raise ConfigError(f"input.synthetic: {exc}", _line_of(text, r"\[input\.synthetic\]")) from None
        cfg.input_seed = inp.get("seed")
    elif kind == "files":
        for key in ("households", "geography"):
            if not isinstance(inp.get(key), str):
                raise ConfigError(f"input.{key} must be a file path", _line_of(text, r"\[input\]"))
        cfg.households, cfg.geography = inp["households"], inp["geography"]
    else:
        raise ConfigError(f"input.kind must be 'synthetic' or 'files', got {kind!r}",
                          _key_line(text, "kind", "[input]"))

    mechs = raw.get("mechanism", [])
    if not mechs:
        raise ConfigError("at least one [[mechanism]] is required", None)
    parsed = tuple(_mechanism(m, i, text) for i, m in enumerate(mechs))
    names = [m.name for m in parsed]
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise ConfigError(f"duplicate mechanism names {dup}",
                          _key_line(text, "name", "[[mechanism]]", names.index(dup[0]) + 1))
    cfg.mechanisms = parsed

    if "election" in raw or "er" in cfg.metrics:
        e = raw.get("election", {})
        try:
            support = np.asarray(e.get("support", POLARIZED_SUPPORT.tolist()), dtype=float)
            races = tuple(RaceCategory.parse(r) for r in e.get("races", ("w", "b")))
            cfg.election = ElectionSpec(support, float(e.get("turnout", 0.6)),
                                        int(e.get("tracts_per_precinct", 1)), races,
                                        int(e.get("seed", derive_seed(cfg.base_seed, "election", 0))))
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"election: {exc}", _line_of(text, r"\[election\]")) from None
        if support.ndim != 2 or support.shape[0] != N_RACES:
            raise ConfigError("election.support needs 7 rows", _key_line(text, "support", "[election]"))
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), path.parent)


# ------------------------------------------------------------- pipeline

def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(text.encode("utf-8"))
    os.replace(tmp, path)


def _election(md: Microdata, spec: ElectionSpec):
    pmap = tract_precincts(md.geo, spec.tracts_per_precinct)
    return pmap, generate_election(md, pmap, spec.true_support, spec.turnout, spec.seed)


def _er_rows(precincts, spec: ElectionSpec) -> list[tuple]:
    rows = []
    for race in spec.races:
        for c in range(spec.n_candidates):
            for weighted in (False, True):
                r = ecological_regression(precincts, race, c, weighted)
                rows.append((RACE_COLUMNS[race], f"cand{c + 1}", int(weighted), f"{r.slope:.6f}",
                             f"{r.intercept:.6f}", f"{r.support_estimate:.6f}"))
    return rows


def _run_cell(md: Microdata, mech: Mechanism, seed: int, rep: int, metrics: tuple[str, ...],
              election: ElectionSpec | None) -> dict:
    """One mechanism x replicate: returns report files and summary values."""
    orig = block_matrix(md)
    geo = md.geo
    protected, log = mech.run(md, seed)
    files: dict[str, str] = {}
    summary = {"replicate": rep, "seed": seed}
    prefix = f"{mech.name}/rep{rep:03d}/"
    if log is not None:
        files[prefix + "swap_log.csv"] = log.to_csv()
        summary.update(targets=log.targets_count, skipped=log.skipped_targets)
    else:
        files[prefix + "block_table.csv"] = block_table_csv(geo, protected)
    if "errors" in metrics:
        files[prefix + "errors_county.csv"] = error_table(
            rollup(orig, geo, "county"), rollup(protected, geo, "county"), geo.county_ids).to_csv()
    if "block_errors" in metrics:
        files[prefix + "errors_block.csv"] = error_table(orig, protected, geo.block_ids).to_csv()
    if "mae" in metrics:
        summary["mae_block"] = mean_abs_error(orig, protected)
    if "entropy" in metrics:
        before = entropies(rollup(orig, geo, "tract"))
        after = entropies(rollup(protected, geo, "tract"))
        summary.update(entropy_before=float(before.mean()), entropy_after=float(after.mean()))
        if log is not None:
            files[prefix + "entropy_steps.csv"] = entropy_decomposition(md, log).to_csv()
        else:
            lines = ["tract_id,entropy_before,entropy_after"]
            lines += [f"{t},{b:.6f},{a:.6f}" for t, b, a in zip(geo.tract_ids, before, after)]
            files[prefix + "tract_entropy.csv"] = "\n".join(lines) + "\n"
    if "tabulations" in metrics and log is not None:
        for name, text in swap_tabulations(md, log).to_csv().items():
            files[prefix + name] = text
    if "rucc" in metrics:
        files[prefix + "rucc_ratios.csv"] = rucc_ratio_table(
            rollup(protected, geo, "county"), rollup(orig, geo, "county"), geo).to_csv()
    if "er" in metrics and election is not None:
        pmap, precincts = _election(md, election)
        prot = with_race_counts(precincts, protected, geo, pmap)
        header = "race,candidate,weighted,slope,intercept,support_estimate,replicate"
        lines = [header] + [",".join(map(str, r + (rep,))) for r in _er_rows(prot, election)]
        files[prefix + "er.csv"] = "\n".join(lines) + "\n"
    return {"files": files, "summary": summary, "protected": protected}


def _fmt_cell(v) -> str:
    return f"{v:.6f}" if isinstance(v, float) else str(v)


@dataclass
class PipelineResult:
    exit_code: int
    files: list[str]
    errors: dict[str, str] = field(default_factory=dict)


def run_pipeline(config: RunConfig, out_dir: str | Path | None = None) -> PipelineResult:
    """Run every mechanism x replicate and write reports plus ``manifest.json``."""
    out = Path(out_dir if out_dir is not None else Path(config.source_dir) / config.output_dir)
    try:
        md = config.load_input()
    except OSError as exc:
        print(f"error: cannot read input: {exc}", file=sys.stderr)
        return PipelineResult(EXIT_IO, [])
    except SwaplabError as exc:
        print(f"error: invalid input: {exc}", file=sys.stderr)
        return PipelineResult(EXIT_CONFIG, [])
    files: dict[str, str] = {}
    errors: dict[str, str] = {}
    seeds = {m.name: [derive_seed(config.base_seed, m.name, i) for i in range(config.replicates)]
             for m in config.mechanisms}
    cells = [(m, i) for m in config.mechanisms for i in range(config.replicates)]
    args = [(md, m, seeds[m.name][i], i, config.metrics, config.election) for m, i in cells]

    results: dict[tuple[str, int], dict | Exception] = {}
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = {(m.name, i): pool.submit(_run_cell, *a) for (m, i), a in zip(cells, args)}
            for key, fut in futures.items():
                try:
                    results[key] = fut.result()
                except Exception as exc:  # recorded per mechanism
                    results[key] = exc
    else:
        for (m, i), a in zip(cells, args):
            try:
                results[(m.name, i)] = _run_cell(*a)
            except Exception as exc:
                results[(m.name, i)] = exc

    for m in config.mechanisms:
        rows, protected = [], []
        for i in range(config.replicates):
            res = results[(m.name, i)]
            if isinstance(res, Exception):
                errors[m.name] = f"replicate {i}: {type(res).__name__}: {res}"
                break
            files.update(res["files"])
            rows.append(res["summary"])
            protected.append(res["protected"])
        if m.name in errors:
            continue
        keys = list(rows[0])
        lines = [",".join(keys)] + [",".join(_fmt_cell(r[k]) for k in keys) for r in rows]
        files[f"{m.name}/summary.csv"] = "\n".join(lines) + "\n"
        if "variance" in config.metrics and len(protected) >= 2:
            vl = ["pair,replicate_a,replicate_b,variance_estimate"]
            for j in range(len(protected) // 2):
                v = variance_estimate(protected[2 * j], protected[2 * j + 1])
                vl.append(f"{j},{2 * j},{2 * j + 1},{v:.6f}")
            files[f"{m.name}/variance.csv"] = "\n".join(vl) + "\n"

    manifest = {
        "swaplab_version": __version__,
        "config": config.resolved(),
        "seed_derivation": "sha256('{base_seed}/{name}/{index}')[:8] big-endian",
        "seeds": seeds,
        "errors": errors,
        "files": {name: hashlib.sha256(text.encode("utf-8")).hexdigest()
                  for name, text in sorted(files.items())},
    }
    try:
        for name, text in sorted(files.items()):
            _write_atomic(out / name, text)
        _write_atomic(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        print(f"error: cannot write reports: {exc}", file=sys.stderr)
        return PipelineResult(EXIT_IO, sorted(files), errors)
    for name, msg in errors.items():
        print(f"error: mechanism {name!r} failed: {msg}", file=sys.stderr)
    return PipelineResult(EXIT_PARTIAL if errors else EXIT_OK, sorted(files) + ["manifest.json"], errors)


# ------------------------------------------------------------ statistics

Statistic = Callable[[np.ndarray, GeoHierarchy, object], float]


def _statewide_count(race):
    r = RaceCategory.parse(race)
    return lambda blocks, geo, aux: float(np.asarray(blocks)[:, r].sum())


def _county_count(county_id, race):
    r = RaceCategory.parse(race)

    def stat(blocks, geo, aux):
        return float(rollup(np.asarray(blocks)[:, r], geo, "county")[geo.index_of("county", county_id)])
    return stat


def _tract_entropy_mean():
    return lambda blocks, geo, aux: mean_tract_entropy(blocks, geo)


def _er_slope(race, candidate, weighted="unweighted"):
    r = RaceCategory.parse(race)
    c = int(str(candidate).removeprefix("cand")) - 1
    w = weighted in ("weighted", "1", "true")

    def stat(blocks, geo, aux):
        pmap, precincts = aux
        return ecological_regression(with_race_counts(precincts, blocks, geo, pmap), r, c, w).slope
    return stat


STATISTICS: dict[str, Callable[..., Statistic]] = {
    "statewide_count": _statewide_count,          # statewide_count:<race>
    "county_count": _county_count,                # county_count:<county_id>:<race>
    "tract_entropy_mean": _tract_entropy_mean,    # tract_entropy_mean
    "er_slope": _er_slope,                        # er_slope:<race>:<candN>[:weighted]
}


def get_statistic(name: str) -> Statistic:
    head, *params = name.split(":")
    if head not in STATISTICS:
        raise RegistryError(f"unknown statistic {name!r}; available: "
                            "statewide_count:<race>, county_count:<county_id>:<race>, "
                            "tract_entropy_mean, er_slope:<race>:<candN>[:weighted]")
    try:
        return STATISTICS[head](*params)
    except (TypeError, ValueError) as exc:
        raise RegistryError(f"bad parameters for statistic {name!r}: {exc}") from None


@dataclass
class DeltaReport:
    statistic: str
    mechanism: str
    original: float
    observed: np.ndarray  # statistic on each protected replicate
    deltas: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.deltas.mean())

    @property
    def variance(self) -> float:
        return float(self.deltas.var(ddof=1)) if len(self.deltas) > 1 else 0.0

    @property
    def quantiles(self) -> tuple[float, float, float]:
        q = np.quantile(self.deltas, [0.05, 0.5, 0.95])
        return float(q[0]), float(q[1]), float(q[2])

    def debias(self, observed: float) -> float:
        """Corrected value: observed statistic minus the mean delta."""
        return float(observed) - self.mean

    def to_csv(self) -> str:
        lines = ["replicate,statistic_protected,delta"]
        lines += [f"{i},{o:.6f},{d:.6f}" for i, (o, d) in enumerate(zip(self.observed, self.deltas))]
        q5, q50, q95 = self.quantiles
        lines += [
            "",
            "statistic,mechanism,original,mean_delta,variance_delta,min,max,q05,q50,q95,"
            "corrected_replicate0",
            f"{self.statistic},{self.mechanism},{self.original:.6f},{self.mean:.6f},"
            f"{self.variance:.6f},{self.deltas.min():.6f},{self.deltas.max():.6f},"
            f"{q5:.6f},{q50:.6f},{q95:.6f},{self.debias(self.observed[0]):.6f}",
        ]
        return "\n".join(lines) + "\n"


def estimate_delta(config: RunConfig, statistic: str, replicates: int,
                   mechanism: str | None = None, md: Microdata | None = None,
                   seed_tag: str = "delta") -> DeltaReport:
    """Distribution of s(protected, Z) - s(original, Z) over fresh mechanism runs."""
    if replicates < 2:
        raise ConfigError("delta estimation needs at least 2 replicates")
    stat = get_statistic(statistic)
    mech = config.mechanism(mechanism)
    md = config.load_input() if md is None else md
    aux = None
    if statistic.startswith("er_slope"):
        aux = _election(md, config.election or ElectionSpec(seed=derive_seed(config.base_seed, "election", 0)))
    orig = stat(block_matrix(md), md.geo, aux)
    observed = []
    for i in range(replicates):
        protected, _ = mech.run(md, derive_seed(config.base_seed, f"{seed_tag}:{mech.name}", i))
        observed.append(stat(protected, md.geo, aux))
    observed = np.array(observed, dtype=float)
    return DeltaReport(statistic, mech.name, float(orig), observed, observed - orig)


# ----------------------------------------------------------------- sweep

@dataclass
class SweepResult:
    rates: list[float]
    values: list[list[float]]  # per rate, one estimate per run
    reference: list[float]  # ToyDown estimates
    reference_epsilon: float

    def rows(self) -> list[tuple]:
        out = [("swap", r, min(v), float(np.median(v)), max(v)) for r, v in zip(self.rates, self.values)]
        if self.reference:
            out.append(("toydown", self.reference_epsilon, min(self.reference),
                        float(np.median(self.reference)), max(self.reference)))
        return out

    def to_csv(self) -> str:
        lines = ["mechanism,parameter,v_min,v_median,v_max"]
        lines += [f"{m},{p},{a:.6f},{b:.6f},{c:.6f}" for m, p, a, b, c in self.rows()]
        return "\n".join(lines) + "\n"


def variance_sweep(config: RunConfig, rates, toydown_ref: ToyDownConfig | None = None,
                   runs_per_point: int = 5, md: Microdata | None = None,
                   identical_pairs: bool = False, mechanism: str | None = None) -> SweepResult:
    """Two-run variance estimates of swapping across swap rates, with a ToyDown reference.

    Each run draws two fresh swaps; ``identical_pairs`` reuses one seed for
    both (a zero-variance control).
    """
    rates = [float(r) for r in rates]
    if any(not 0 < r < 1 for r in rates):
        raise ConfigError("swap rates must lie in (0, 1)")
    base = config.mechanism(mechanism, "swap").swap
    md = config.load_input() if md is None else md
    values = []
    for rate in rates:
        cfg = replace(base, swap_rate=rate)
        vals = []
        for j in range(runs_per_point):
            sa = derive_seed(config.base_seed, f"sweep:{rate!r}", 2 * j)
            sb = sa if identical_pairs else derive_seed(config.base_seed, f"sweep:{rate!r}", 2 * j + 1)
            a, _ = select_and_swap(md, replace(cfg, seed=sa))
            b, _ = select_and_swap(md, replace(cfg, seed=sb))
            vals.append(variance_estimate(block_matrix(a), block_matrix(b)))
        values.append(vals)
    reference = []
    if toydown_ref is not None:
        for j in range(runs_per_point):
            sa = derive_seed(config.base_seed, "sweep:toydown", 2 * j)
            sb = derive_seed(config.base_seed, "sweep:toydown", 2 * j + 1)
            reference.append(variance_estimate(run_toydown(md, replace(toydown_ref, seed=sa)),
                                               run_toydown(md, replace(toydown_ref, seed=sb))))
    return SweepResult(rates, values, reference, toydown_ref.epsilon_total if toydown_ref else float("nan"))


def write_population(md: Microdata, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    hp, gp = out / "households.csv", out / "geography.csv"
    _write_atomic(hp, household_csv(md))
    _write_atomic(gp, geography_csv(md.geo))
    return [hp, gp]


def precinct_table(md: Microdata, spec: ElectionSpec) -> str:
    return precinct_csv(_election(md, spec)[1])
