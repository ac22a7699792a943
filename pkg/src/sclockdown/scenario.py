"""Lockdown policies, capacity profiles and the experiment drivers."""

from __future__ import annotations

import functools
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import pandas as pd

from sclockdown.kernels import get_backend
from sclockdown.netgen import DAYS_PER_YEAR, Network
from sclockdown.prodsim import ModelParams, group_sum_reducer, run_simulation

logger = logging.getLogger(__name__)

RATE_TOLERANCE = 5e-4


@dataclass(frozen=True)
class SectorPolicy:
    sector: int
    exposure: float
    work_at_home: float
    reduction_rate: float
    abbr: str = ""


def _policy_from_frame(df: pd.DataFrame, source: str, work_at_home_zero: bool = False
                       ) -> dict[int, SectorPolicy]:
    missing = {"sector", "exposure", "work_at_home"} - set(df.columns)
    if missing:
        raise ValueError(f"{source}: missing columns {sorted(missing)}")
    table: dict[int, SectorPolicy] = {}
    has_rate = "reduction_rate" in df.columns
    for row in df.itertuples(index=False):
        sector = int(row.sector)
        exposure, wah = float(row.exposure), float(row.work_at_home)
        if not (0 <= exposure <= 1 and 0 <= wah <= 1):
            raise ValueError(f"{source}: sector {sector} has exposure or work_at_home outside [0, 1]")
        rate = exposure * (1.0 - wah)
        if has_rate and not pd.isna(row.reduction_rate):
            printed = float(row.reduction_rate)
            if abs(printed - rate) > RATE_TOLERANCE:
                raise ValueError(f"{source}: sector {sector} reduction_rate {printed} does not "
                                 f"match exposure x (1 - work_at_home) = {rate:.6f}")
        if sector in table:
            raise ValueError(f"{source}: duplicate sector {sector}")
        if work_at_home_zero:
            wah, rate = 0.0, exposure
        table[sector] = SectorPolicy(sector, exposure, wah, rate, str(getattr(row, "abbr", "")))
    return table


def load_policy_table(path: str | Path, work_at_home_zero: bool = False) -> dict[int, SectorPolicy]:
    """Read ``sector,exposure,work_at_home[,reduction_rate]`` and derive reduction rates.

    A provided ``reduction_rate`` column is cross-checked against
    ``exposure * (1 - work_at_home)``; a mismatch beyond 5e-4 raises naming the
    sector. ``work_at_home_zero`` applies the no-telework robustness variant.
    """
    return _policy_from_frame(pd.read_csv(path), str(path), work_at_home_zero)


@functools.lru_cache(maxsize=2)
def default_policy(work_at_home_zero: bool = False) -> dict[int, SectorPolicy]:
    """Bundled sector table (JSIC two-digit codes plus 560/561/569)."""
    with resources.files("sclockdown.data").joinpath("policy_table.csv").open("r") as fh:
        df = pd.read_csv(fh)
    return _policy_from_frame(df, "policy_table.csv", work_at_home_zero)


# --------------------------------------------------------------------------- schedules

FIRST_DECLARED = (11, 12, 13, 14, 27, 28, 40)
ALL_PREFECTURES = tuple(range(1, 48))
NATIONWIDE_DAY = 9
LIFT_WAVES = ((37, None), (44, (26, 27, 28)), (48, (1, 11, 12, 13, 14)))


@dataclass(frozen=True)
class ScheduleEntry:
    region: int
    start_day: int
    end_day: int
    multiplier: float = 1.0


@dataclass(frozen=True)
class LockdownSchedule:
    """Per-region lockdown intervals ``[start_day, end_day)`` with a multiplier each."""

    entries: tuple[ScheduleEntry, ...]

    def __post_init__(self) -> None:
        by_region: dict[int, list[ScheduleEntry]] = {}
        for e in self.entries:
            if not 0.0 <= e.multiplier <= 1.0:
                raise ValueError(f"region {e.region}: multiplier {e.multiplier} outside [0, 1]")
            if e.start_day < 0 or e.end_day <= e.start_day:
                raise ValueError(f"region {e.region}: empty or negative interval "
                                 f"[{e.start_day}, {e.end_day})")
            by_region.setdefault(e.region, []).append(e)
        for region, items in by_region.items():
            items.sort(key=lambda e: e.start_day)
            for prev, nxt in zip(items, items[1:]):
                if nxt.start_day < prev.end_day:
                    raise ValueError(f"region {region}: overlapping lockdown intervals")

    def multipliers(self, day: int) -> dict[int, float]:
        """Multiplier of every region locked on ``day``."""
        return {e.region: e.multiplier for e in self.entries if e.start_day <= day < e.end_day}

    def locked_regions(self, day: int) -> set[int]:
        return set(self.multipliers(day))

    def breakpoints(self) -> list[int]:
        return sorted({d for e in self.entries for d in (e.start_day, e.end_day)})

    @classmethod
    def uniform(cls, regions, start_day: int, end_day: int,
                multiplier: float | dict[int, float] = 1.0) -> LockdownSchedule:
        """Lock every region over the same interval; ``multiplier`` may map region -> value."""
        def mult(r):
            return float(multiplier[r]) if isinstance(multiplier, dict) else float(multiplier)
        return cls(tuple(ScheduleEntry(int(r), start_day, end_day, mult(r)) for r in regions
                         if mult(r) > 0))

    def without(self, regions) -> LockdownSchedule:
        drop = {int(r) for r in regions}
        return LockdownSchedule(tuple(e for e in self.entries if e.region not in drop))


def build_actual_schedule() -> LockdownSchedule:
    """The 2020 state-of-emergency timeline with day 0 = 7 April.

    Seven prefectures from day 0, all 47 from day 9; lifted for 39 on day 37,
    for Osaka, Kyoto and Hyogo on day 44 and for the last five on day 48.
    """
    late = {r: end for end, group in LIFT_WAVES[1:] for r in group}
    entries = []
    for r in ALL_PREFECTURES:
        start = 0 if r in FIRST_DECLARED else NATIONWIDE_DAY
        entries.append(ScheduleEntry(r, start, late.get(r, LIFT_WAVES[0][0]), 1.0))
    return LockdownSchedule(tuple(entries))


def read_schedule_csv(path: str | Path) -> LockdownSchedule:
    """Read ``prefecture,start_day,end_day,multiplier``."""
    df = pd.read_csv(path)
    missing = {"prefecture", "start_day", "end_day"} - set(df.columns)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    mult = df["multiplier"] if "multiplier" in df.columns else pd.Series(1.0, index=df.index)
    return LockdownSchedule(tuple(
        ScheduleEntry(int(r), int(s), int(e), float(m))
        for r, s, e, m in zip(df["prefecture"], df["start_day"], df["end_day"], mult)))


def write_schedule_csv(schedule: LockdownSchedule, path: str | Path) -> None:
    pd.DataFrame({
        "prefecture": [e.region for e in schedule.entries],
        "start_day": [e.start_day for e in schedule.entries],
        "end_day": [e.end_day for e in schedule.entries],
        "multiplier": [e.multiplier for e in schedule.entries],
    }).to_csv(path, index=False)


# --------------------------------------------------------------------------- capacity


def firm_reduction_rates(net: Network, policy: dict[int, SectorPolicy]) -> np.ndarray:
    """Benchmark capacity reduction rate of every firm's sector."""
    codes = net.sector_codes
    unknown = [int(c) for c in codes if int(c) not in policy]
    if unknown:
        raise ValueError(f"sectors missing from the policy table: {unknown}")
    rate = np.array([policy[int(c)].reduction_rate for c in codes])
    return rate[net.sector_idx]


class ScheduleCapacity:
    """Capacity loss ``multiplier x reduction_rate(sector)`` for firms in locked regions.

    Piecewise constant between schedule breakpoints; vectors are cached per
    distinct set of regional multipliers.
    """

    def __init__(self, schedule: LockdownSchedule, rates: np.ndarray, net: Network,
                 multiplier_overrides: dict[int, float] | None = None) -> None:
        self.schedule = schedule
        self._rates = rates
        self._region_idx = net.region_idx
        self._lookup = {int(c): k for k, c in enumerate(net.region_codes)}
        self._n_regions = net.n_regions
        self._overrides = dict(multiplier_overrides or {})
        for r, m in self._overrides.items():
            if not 0.0 <= m <= 1.0:
                raise ValueError(f"region {r}: multiplier override {m} outside [0, 1]")
        self._cache: dict[tuple, np.ndarray] = {}
        self._zero = np.zeros(len(rates))

    def region_multipliers(self, day: int) -> np.ndarray:
        out = np.zeros(self._n_regions)
        for region, m in self.schedule.multipliers(day).items():
            k = self._lookup.get(region)
            if k is not None:
                out[k] = self._overrides.get(region, m)
        return out

    def delta(self, day: int) -> np.ndarray:
        mult = self.region_multipliers(day)
        if not mult.any():
            return self._zero
        key = tuple(mult.tolist())
        cached = self._cache.get(key)
        if cached is None:
            cached = mult[self._region_idx] * self._rates
            self._cache[key] = cached
        return cached


def capacity_profile(schedule: LockdownSchedule, policy: dict[int, SectorPolicy], net: Network,
                     multiplier_overrides: dict[int, float] | None = None) -> ScheduleCapacity:
    """Daily capacity loss of every firm under ``schedule``.

    ``multiplier_overrides`` maps region -> multiplier and replaces the
    schedule's multiplier for that region while it is locked.
    """
    return ScheduleCapacity(schedule, firm_reduction_rates(net, policy), net, multiplier_overrides)


# --------------------------------------------------------------------------- Monte Carlo


EXPERIMENT_KINDS = ("replicate", "multiplier_grid", "lift_one", "lift_two")
THREADS_ENV = "SCLOCKDOWN_THREADS"


def default_threads() -> int:
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return 1
    try:
        n = int(value)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {value!r}") from None
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {value!r}")
    return n


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run: kind, horizon, number of Monte Carlo runs and the seeding."""

    kind: str = "replicate"
    horizon_days: int = 60
    runs: int = 30
    base_seed: int = 0
    groups: tuple[tuple[int, str], ...] = ()
    params: ModelParams = field(default_factory=ModelParams)

    def __post_init__(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.runs < 1:
            raise ValueError(f"runs must be >= 1, got {self.runs}")
        if self.horizon_days < 1:
            raise ValueError(f"horizon_days must be >= 1, got {self.horizon_days}")
        if self.base_seed < 0:
            raise ValueError(f"base_seed must be >= 0, got {self.base_seed}")
        self.params.validate()

    def seed(self, run: int) -> int:
        return self.base_seed + run

    def group_map(self) -> dict[int, str]:
        return dict(self.groups)


@dataclass
class MonteCarloResult:
    """Per-run and mean daily value added by region, shape ``(runs, days, regions)``."""

    regions: np.ndarray
    per_run: np.ndarray
    mean: np.ndarray

    @property
    def gdp(self) -> np.ndarray:
        return self.mean.sum(axis=1)

    @property
    def gdp_per_run(self) -> np.ndarray:
        return self.per_run.sum(axis=2)


def _region_reducer(net: Network, value_weights: np.ndarray | None):
    return group_sum_reducer(net.region_idx, net.n_regions, value_weights)


def run_jobs(net: Network, spec: ExperimentSpec, capacities: list, value_weights=None,
             threads: int | None = None, backend=None) -> list[MonteCarloResult]:
    """Run every capacity profile for every Monte Carlo run on a worker pool.

    Job ``(k, r)`` simulates profile ``k`` with seed ``base_seed + r``. Results
    are collected in job-id order, so the output does not depend on
    ``threads``.
    """
    threads = default_threads() if threads is None else threads
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    reducer = _region_reducer(net, value_weights)
    k_backend = backend or get_backend()
    jobs = [(k, r) for k in range(len(capacities)) for r in range(spec.runs)]

    def work(job):
        k, r = job
        res = run_simulation(net, capacities[k], spec.params, spec.horizon_days, spec.seed(r),
                             reducer=reducer, backend=k_backend)
        return res.series

    if threads == 1 or len(jobs) == 1:
        outputs = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outputs = list(pool.map(work, jobs))
    results = []
    for k in range(len(capacities)):
        per_run = np.stack(outputs[k * spec.runs:(k + 1) * spec.runs])
        results.append(MonteCarloResult(net.region_codes, per_run, per_run.mean(axis=0)))
    return results


def run_monte_carlo(net: Network, spec: ExperimentSpec, capacity, value_weights=None,
                    threads: int | None = None, backend=None) -> MonteCarloResult:
    """Per-run and mean regional value-added series for one capacity profile."""
    return run_jobs(net, spec, [capacity], value_weights, threads, backend)[0]


def baseline_output(net: Network, value_weights=None) -> np.ndarray:
    """Daily regional value added without any lockdown (the model's fixed point)."""
    values = net.p_ini if value_weights is None else net.p_ini * value_weights
    return np.bincount(net.region_idx, weights=values, minlength=net.n_regions)


# --------------------------------------------------------------------------- experiments


MORE = "more"
LESS = "less"


def default_groups(net: Network) -> dict[int, str]:
    """First-declared prefectures form the more restricted group, all others the less."""
    return {int(r): MORE if int(r) in FIRST_DECLARED else LESS for r in net.region_codes}


def experiment_multiplier_grid(net: Network, spec: ExperimentSpec, multipliers_more,
                               multipliers_less, policy=None, value_weights=None,
                               threads: int | None = None, backend=None) -> pd.DataFrame:
    """Value-added loss for every pair of group multipliers.

    Every region is locked over the whole horizon at its group's multiplier.
    Losses are totals over the horizon relative to the no-lockdown path, as a
    percentage of yearly baseline GDP, split by group.
    """
    policy = default_policy() if policy is None else policy
    groups = spec.group_map() or default_groups(net)
    codes = [int(c) for c in net.region_codes]
    missing = [c for c in codes if groups.get(c) not in (MORE, LESS)]
    if missing:
        raise ValueError(f"regions without a '{MORE}'/'{LESS}' group: {missing}")
    rates = firm_reduction_rates(net, policy)
    combos = [(float(a), float(b)) for a in multipliers_more for b in multipliers_less]
    caps = []
    for m_more, m_less in combos:
        mult = {c: m_more if groups[c] == MORE else m_less for c in codes}
        sched = LockdownSchedule.uniform(codes, 0, spec.horizon_days, mult)
        caps.append(ScheduleCapacity(sched, rates, net))
    results = run_jobs(net, spec, caps, value_weights, threads, backend)

    base = baseline_output(net, value_weights)
    yearly = base.sum() * DAYS_PER_YEAR
    is_more = np.array([groups[c] == MORE for c in codes])
    rows = []
    for (m_more, m_less), res in zip(combos, results):
        loss = (base[None, :] - res.mean).sum(axis=0)
        rows.append({
            "mult_more": m_more, "mult_less": m_less,
            "loss_total": 100.0 * loss.sum() / yearly,
            "loss_more": 100.0 * loss[is_more].sum() / yearly,
            "loss_less": 100.0 * loss[~is_more].sum() / yearly,
        })
    return pd.DataFrame(rows)


def _lift_capacities(net: Network, spec: ExperimentSpec, lifted_sets, policy, multiplier):
    codes = [int(c) for c in net.region_codes]
    rates = firm_reduction_rates(net, policy)
    full = LockdownSchedule.uniform(codes, 0, spec.horizon_days, multiplier)
    return [ScheduleCapacity(full.without(s), rates, net) for s in lifted_sets]


def experiment_lift_one(net: Network, spec: ExperimentSpec, policy=None, multiplier: float = 1.0,
                        value_weights=None, threads: int | None = None,
                        backend=None) -> pd.DataFrame:
    """Recovery rate of every region from lifting only its own lockdown.

    The lift happens at day 0 and the window is the whole horizon. The
    recovery rate is the region's value-added gain over the all-locked run
    divided by its loss relative to no lockdown; NaN (``defined`` False) when
    that loss is not positive.
    """
    policy = default_policy() if policy is None else policy
    codes = [int(c) for c in net.region_codes]
    caps = _lift_capacities(net, spec, [()] + [(c,) for c in codes], policy, multiplier)
    results = run_jobs(net, spec, caps, value_weights, threads, backend)
    base = baseline_output(net, value_weights) * spec.horizon_days
    locked = results[0].mean.sum(axis=0)
    rows = []
    for k, c in enumerate(codes):
        loss = base[k] - locked[k]
        gain = results[k + 1].mean[:, k].sum() - locked[k]
        rec = recovery_ratio(gain, loss)
        rows.append({"region": c, "recovery": rec, "gain": gain, "loss": loss,
                     "defined": not math.isnan(rec)})
    return pd.DataFrame(rows)


def experiment_lift_two(net: Network, spec: ExperimentSpec, pairs=None, policy=None,
                        multiplier: float = 1.0, value_weights=None,
                        threads: int | None = None, backend=None) -> pd.DataFrame:
    """Relative recovery of ``a`` from lifting together with ``b`` versus alone.

    ``pairs`` defaults to all ordered pairs. NaN (``defined`` False) when the
    gain from lifting alone is not positive.
    """
    policy = default_policy() if policy is None else policy
    codes = [int(c) for c in net.region_codes]
    if pairs is None:
        pairs = [(a, b) for a in codes for b in codes if a != b]
    pairs = [(int(a), int(b)) for a, b in pairs]
    for a, b in pairs:
        if a == b:
            raise ValueError(f"lift-two pair needs two different regions, got ({a}, {b})")
        if a not in codes or b not in codes:
            raise ValueError(f"unknown region in pair ({a}, {b})")
    singles = sorted({a for a, _ in pairs})
    sets = [()] + [(a,) for a in singles] + [tuple(p) for p in pairs]
    results = run_jobs(net, spec, _lift_capacities(net, spec, sets, policy, multiplier),
                       value_weights, threads, backend)
    k_of = {c: k for k, c in enumerate(codes)}
    locked = results[0].mean.sum(axis=0)
    alone = {a: results[1 + i].mean[:, k_of[a]].sum() - locked[k_of[a]]
             for i, a in enumerate(singles)}
    rows = []
    for j, (a, b) in enumerate(pairs):
        together = results[1 + len(singles) + j].mean[:, k_of[a]].sum() - locked[k_of[a]]
        rel = recovery_ratio(together, alone[a])
        rows.append({"region_a": a, "region_b": b, "relative_recovery": rel,
                     "gain_pair": together, "gain_alone": alone[a],
                     "defined": not math.isnan(rel)})
    return pd.DataFrame(rows)


def recovery_ratio(gain: float, loss: float, eps: float = 1e-12) -> float:
    """``gain / loss``, or NaN when ``loss`` is not meaningfully positive."""
    if not loss > eps:
        return math.nan
    return float(gain / loss)


def experiment_replicate(net: Network, spec: ExperimentSpec, schedule: LockdownSchedule | None = None,
                         policy=None, value_weights=None, threads: int | None = None,
                         backend=None) -> MonteCarloResult:
    """Monte Carlo run of a (by default the actual 2020) schedule."""
    schedule = build_actual_schedule() if schedule is None else schedule
    policy = default_policy() if policy is None else policy
    return run_monte_carlo(net, spec, capacity_profile(schedule, policy, net), value_weights,
                           threads, backend)
