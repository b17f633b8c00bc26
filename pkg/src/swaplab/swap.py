"""Risk-tiered household swapping with key-matched, distance-ranked partners.

Pipeline for one run (:func:`select_and_swap`):

1. score every household by how many *other* households in its block share
   its flag key (race counts, Hispanic count, size, adults);
2. sort by score (rarest first, seeded tie-breaking) and cut into tiers 4..1;
3. visit households tier 4 first, shuffled within tier; each undisplaced
   household becomes a target with its tier's probability;
4. pair each target with a uniformly chosen household among the ``k``
   nearest legal candidates (same size and adult count, different tract,
   not yet displaced) and exchange their blocks.

Randomness: ``cfg.seed`` seeds a :class:`numpy.random.SeedSequence` which is
spawned into two children.  The first yields the tie-breaking seed for
:func:`assign_tiers`; the second drives, in order, the per-tier shuffles
(tier 4 down to 1), one uniform per visited position for the target
decision and one uniform per visited position for the partner choice.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, SwaplabError
from .geodata import Household, Microdata

STANDARD_PROBS = (1.0, 0.6, 0.3, 0.1)
HIGH_VARIANCE_PROBS = (1.0, 0.3, 0.3, 0.1)
# tier 4 share per unit swap rate: f4 + 0.6 * f3 / 2 = rate with f3 = 2 f4
TIER4_DIVISOR = 1.6
MAX_FEASIBLE_RATE = TIER4_DIVISOR / 6

SWAPLOG_HEADER = ("target_id", "partner_id", "target_block_before",
                  "partner_block_before", "target_tier")


@dataclass(frozen=True)
class SwapConfig:
    """Parameters of one swapping run.

    ``tier_probs`` is ordered (p4, p3, p2, p1).
    """

    swap_rate: float
    k_nearest: int = 10
    tier_probs: tuple[float, float, float, float] = STANDARD_PROBS
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tier_probs", tuple(float(p) for p in self.tier_probs))
        if not 0.0 < self.swap_rate < 1.0:
            raise ConfigError(f"swap_rate must lie in (0, 1), got {self.swap_rate}")
        if int(self.k_nearest) != self.k_nearest or self.k_nearest < 1:
            raise ConfigError("k_nearest must be a positive integer")
        if len(self.tier_probs) != 4:
            raise ConfigError("tier_probs needs four entries (p4, p3, p2, p1)")
        p4, p3, p2, p1 = self.tier_probs
        if p4 != 1.0 or not 0.0 <= p1 <= p2 <= p3 <= 1.0:
            raise ConfigError("tier_probs must satisfy p4 = 1 and 0 <= p1 <= p2 <= p3 <= 1")


def swap_variant(name: str, swap_rate: float = 0.02, seed: int = 0) -> SwapConfig:
    """Config template for the ``standard`` or ``high_variance`` variant."""
    if name == "standard":
        return SwapConfig(swap_rate, 10, STANDARD_PROBS, seed)
    if name in ("high_variance", "high-variance"):
        return SwapConfig(swap_rate, 100, HIGH_VARIANCE_PROBS, seed)
    raise ConfigError(f"unknown swap variant {name!r} (expected 'standard' or 'high_variance')")


@dataclass(frozen=True, eq=False)
class RiskProfile:
    """Per-household flag keys and risk scores, aligned with the microdata rows."""

    household_id: np.ndarray
    flag_key: np.ndarray  # (N, 10): 7 race counts, hispanic, size, adults
    risk_score: np.ndarray

    def __len__(self) -> int:
        return len(self.household_id)


@dataclass(frozen=True, eq=False)
class TierAssignment:
    tier: np.ndarray
    fractions: tuple[float, float, float, float]  # (f4, f3, f2, f1)
    counts: tuple[int, int, int, int]  # (n4, n3, n2, n1)


@dataclass(frozen=True)
class SwapRecord:
    target_id: int
    partner_id: int
    target_block_before: str
    partner_block_before: str
    target_tier: int


@dataclass
class SwapLog:
    records: list[SwapRecord] = field(default_factory=list)
    skipped_targets: int = 0
    exhausted: bool = False

    @property
    def targets_count(self) -> int:
        return len(self.records)

    @property
    def households_displaced(self) -> int:
        return 2 * len(self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SWAPLOG_HEADER)
        for r in self.records:
            w.writerow([r.target_id, r.partner_id, r.target_block_before,
                        r.partner_block_before, r.target_tier])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SwapLog":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if tuple(header or ()) != SWAPLOG_HEADER:
            raise SwaplabError("not a swap log CSV")
        return cls([SwapRecord(int(a), int(b), c, d, int(t)) for a, b, c, d, t in reader])


def flag_keys(md: Microdata) -> np.ndarray:
    return np.column_stack([md.race_counts, md.hispanic, md.size, md.adults])


def risk_scores(md: Microdata) -> RiskProfile:
    """Score = number of other households in the same block with an identical flag key."""
    keys = flag_keys(md)
    if len(md) == 0:
        return RiskProfile(md.household_id, keys, np.zeros(0, dtype=np.int64))
    _, inverse, counts = np.unique(np.column_stack([md.block, keys]), axis=0,
                                   return_inverse=True, return_counts=True)
    return RiskProfile(md.household_id, keys, (counts[inverse.ravel()] - 1).astype(np.int64))


def tier_fractions(swap_rate: float, saturate: bool = False) -> tuple[float, float, float, float]:
    """Tier shares (f4, f3, f2, f1) for a swap rate.

    f4 = rate / 1.6 with f3 = 2 f4 and f2 = 3 f4.  Rates above 1.6/6 leave no
    room for tier 1; with ``saturate`` the shares are then capped at
    (1/6, 1/3, 1/2, 0), otherwise :class:`ConfigError` is raised.
    """
    if not 0.0 < swap_rate < 1.0:
        raise ConfigError(f"swap_rate must lie in (0, 1), got {swap_rate}")
    f4 = swap_rate / TIER4_DIVISOR
    if 6 * f4 > 1.0 + 1e-12:
        if not saturate:
            raise ConfigError(
                f"swap_rate {swap_rate} needs tier fractions above 1 "
                f"(maximum feasible rate is {MAX_FEASIBLE_RATE:.6f})")
        f4 = 1.0 / 6
    return (f4, 2 * f4, 3 * f4, max(0.0, 1.0 - 6 * f4))


def _ceil(x: float) -> int:
    # tolerate float noise such as 625.0000000000001
    return math.ceil(round(x, 9))


def assign_tiers(profiles: RiskProfile, swap_rate: float, tie_seed: int,
                 saturate: bool = False) -> TierAssignment:
    """Cut households, sorted rarest first, into tiers 4, 3, 2, 1.

    Ties in risk score are broken by a permutation drawn from ``tie_seed``.
    Tier sizes are ceil(f * N) taken in order 4, 3, 2, each clipped to the
    households left; tier 1 gets the remainder.
    """
    fr = tier_fractions(swap_rate, saturate)
    n = len(profiles)
    rng = np.random.default_rng(tie_seed)
    order = np.lexsort((rng.permutation(n), profiles.risk_score))
    counts, left = [], n
    for f in fr[:3]:
        c = min(_ceil(f * n), left)
        counts.append(c)
        left -= c
    counts.append(left)
    tier = np.empty(n, dtype=np.int64)
    start = 0
    for t, c in zip((4, 3, 2, 1), counts):
        tier[order[start:start + c]] = t
        start += c
    return TierAssignment(tier, fr, tuple(counts))


class _PartnerIndex:
    """Households grouped by key-matching variables (size, adults), id-sorted."""

    def __init__(self, md: Microdata):
        size = md.size
        keys = np.column_stack([size, md.adults])
        if len(md):
            _, inv = np.unique(keys, axis=0, return_inverse=True)
            inv = inv.ravel()
        else:
            inv = np.zeros(0, dtype=np.int64)
        self.group_of = inv
        xy = md.geo.block_xy[md.block]
        tract = md.geo.block_tract[md.block]
        self.groups = []
        self.slot = np.empty(len(md), dtype=np.int64)
        for g in range(int(inv.max()) + 1 if len(inv) else 0):
            members = np.flatnonzero(inv == g)
            members = members[np.argsort(md.household_id[members], kind="stable")]
            self.slot[members] = np.arange(len(members))
            self.groups.append({
                "pos": members,
                "x": xy[members, 0].copy(),
                "y": xy[members, 1].copy(),
                "tract": tract[members].copy(),
                "alive": np.ones(len(members), dtype=bool),
            })
        self.xy = xy
        self.tract = tract

    def remove(self, pos: int) -> None:
        self.groups[self.group_of[pos]]["alive"][self.slot[pos]] = False

    def nearest(self, pos: int, k: int | None) -> tuple[np.ndarray, np.ndarray]:
        """Positions and squared distances of the first k legal candidates."""
        g = self.groups[self.group_of[pos]]
        dx = g["x"] - self.xy[pos, 0]
        dy = g["y"] - self.xy[pos, 1]
        d2 = dx * dx + dy * dy
        elig = np.flatnonzero(g["alive"] & (g["tract"] != self.tract[pos]))
        if k is not None and len(elig) > k:
            de = d2[elig]
            kth = np.partition(de, k - 1)[k - 1]
            elig = elig[de <= kth]
        # group members are id-sorted, so a stable sort on distance breaks ties by id
        elig = elig[np.argsort(d2[elig], kind="stable")]
        if k is not None:
            elig = elig[:k]
        return g["pos"][elig], d2[elig]


def candidate_partners(target: Household | int, md: Microdata,
                       exclusions: Iterable[int] = (), k: int | None = None) -> list[int]:
    """Legal partners for ``target`` as household ids, nearest block centroid first.

    Candidates share size and adult count with the target, live in a
    different tract and are not in ``exclusions``.  Distance ties are
    broken by ascending household id.  An empty list means no partner.
    """
    tid = target.id if isinstance(target, Household) else int(target)
    excl = set(int(e) for e in exclusions)
    if tid in excl:
        raise ValueError(f"target {tid} is in the exclusion set")
    index = _PartnerIndex(md)
    pos = md.position(tid)
    if excl:
        for p in np.flatnonzero(np.isin(md.household_id, list(excl))):
            index.remove(int(p))
    found, _ = index.nearest(pos, k)
    return [int(md.household_id[p]) for p in found]


def _seed_children(seed: int) -> tuple[int, np.random.SeedSequence]:
    tie_ss, run_ss = np.random.SeedSequence(int(seed) & (2**64 - 1)).spawn(2)
    return int(tie_ss.generate_state(1, np.uint64)[0]), run_ss


def swap_budget(swap_rate: float, n: int) -> int:
    """round(rate * N), halves rounded up."""
    return int(math.floor(swap_rate * n + 0.5))


def select_and_swap(md: Microdata, cfg: SwapConfig) -> tuple[Microdata, SwapLog]:
    """Run one swap; returns the swapped microdata and its audit log.

    The budget counts targets only; each swap displaces two households and
    displaced households take no further part.  A target without a legal
    partner is skipped (counted in ``log.skipped_targets``) and stays
    available as a partner.  Rates above the feasible tier range use
    saturated tiers (see :func:`tier_fractions`).
    """
    n = len(md)
    log = SwapLog()
    budget = swap_budget(cfg.swap_rate, n)
    if n == 0 or budget == 0:
        return md, log

    tie_seed, run_ss = _seed_children(cfg.seed)
    tiers = assign_tiers(risk_scores(md), cfg.swap_rate, tie_seed, saturate=True)
    rng = np.random.default_rng(run_ss)
    order = np.concatenate([rng.permutation(np.flatnonzero(tiers.tier == t)) for t in (4, 3, 2, 1)])
    u_target = rng.random(n)
    u_partner = rng.random(n)
    probs = {4: cfg.tier_probs[0], 3: cfg.tier_probs[1], 2: cfg.tier_probs[2], 1: cfg.tier_probs[3]}

    index = _PartnerIndex(md)
    displaced = np.zeros(n, dtype=bool)
    block = md.block.copy()
    bids = md.geo.block_ids
    k = int(cfg.k_nearest)
    for step, pos in enumerate(order):
        if displaced[pos]:
            continue
        t = int(tiers.tier[pos])
        if u_target[step] >= probs[t]:
            continue
        cands, _ = index.nearest(pos, k)
        if len(cands) == 0:
            log.skipped_targets += 1
            continue
        partner = int(cands[int(u_partner[step] * len(cands))])
        log.records.append(SwapRecord(
            int(md.household_id[pos]), int(md.household_id[partner]),
            bids[int(block[pos])], bids[int(block[partner])], t))
        block[pos], block[partner] = block[partner], block[pos]
        displaced[pos] = displaced[partner] = True
        index.remove(pos)
        index.remove(partner)
        if log.targets_count == budget:
            break
    else:
        log.exhausted = True
    return md.with_blocks(block), log


def apply_log(md: Microdata, log: SwapLog) -> Microdata:
    """Re-apply a swap log to the microdata it was produced from."""
    block = md.block.copy()
    for r in log.records:
        a, b = md.position(r.target_id), md.position(r.partner_id)
        block[a], block[b] = block[b], block[a]
    return md.with_blocks(block)


def check_record(md_before: Microdata, rec: SwapRecord) -> list[str]:
    """Legality problems for one record against the pre-swap microdata (empty if legal)."""
    problems = []
    a, b = md_before.position(rec.target_id), md_before.position(rec.partner_id)
    size = md_before.size
    if size[a] != size[b]:
        problems.append("size mismatch")
    if md_before.adults[a] != md_before.adults[b]:
        problems.append("adult count mismatch")
    tract = md_before.tract()
    if tract[a] == tract[b]:
        problems.append("same tract")
    st = md_before.geo.block_to("state")
    if st[md_before.block[a]] != st[md_before.block[b]]:
        problems.append("different state")
    bids = md_before.geo.block_ids
    if bids[md_before.block[a]] != rec.target_block_before \
            or bids[md_before.block[b]] != rec.partner_block_before:
        problems.append("logged blocks disagree with microdata")
    return problems


def with_seed(cfg: SwapConfig, seed: int) -> SwapConfig:
    return replace(cfg, seed=int(seed))


def with_rate(cfg: SwapConfig, rate: float) -> SwapConfig:
    return replace(cfg, swap_rate=float(rate))


__all__: Sequence[str] = (
    "SwapConfig", "SwapLog", "SwapRecord", "RiskProfile", "TierAssignment",
    "swap_variant", "risk_scores", "tier_fractions", "assign_tiers", "candidate_partners",
    "select_and_swap", "apply_log", "check_record", "swap_budget", "with_seed", "with_rate",
)
