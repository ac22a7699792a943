"""Firm-level supply-chain networks: loading, link weighting, synthesis, topology.

A :class:`Network` is the static weighted directed graph the simulator runs
on. Links point from supplier to customer and carry the baseline daily flow.
Internally firms are dense indices ``0..n-1`` and links are kept sorted
customer-major, ``(customer, supplier)`` ascending, with a supplier-major
permutation alongside.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse import csgraph

from sclockdown._rng import stream

logger = logging.getLogger(__name__)

DAYS_PER_YEAR = 365
FINAL = "FINAL"
VALUE_ADDED = "VA"
N_PREFECTURES = 47


@dataclass
class FirmTable:
    """Firm attributes, one row per firm. ``sales`` is currency per year."""

    id: np.ndarray
    sector: np.ndarray
    region: np.ndarray
    sales: np.ndarray

    def __post_init__(self) -> None:
        self.id = np.asarray(self.id, dtype=np.int64)
        self.sector = np.asarray(self.sector, dtype=np.int64)
        self.region = np.asarray(self.region, dtype=np.int64)
        self.sales = np.asarray(self.sales, dtype=np.float64)
        n = len(self.id)
        if not (len(self.sector) == len(self.region) == len(self.sales) == n):
            raise ValueError("firm columns have different lengths")
        if len(np.unique(self.id)) != n:
            raise ValueError("duplicate firm ids")
        if n and (self.region.min() < 1 or self.region.max() > N_PREFECTURES):
            raise ValueError(f"region codes must lie in 1..{N_PREFECTURES}")
        if np.any(~np.isfinite(self.sales)) or np.any(self.sales < 0):
            raise ValueError("sales must be finite and non-negative")

    def __len__(self) -> int:
        return len(self.id)

    def subset(self, mask: np.ndarray) -> FirmTable:
        return FirmTable(self.id[mask], self.sector[mask], self.region[mask], self.sales[mask])


@dataclass
class LinkTable:
    """Supplier -> customer links in firm-id space; ``value`` is currency/day."""

    supplier: np.ndarray
    customer: np.ndarray
    value: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.supplier = np.asarray(self.supplier, dtype=np.int64)
        self.customer = np.asarray(self.customer, dtype=np.int64)
        if self.value is not None:
            self.value = np.asarray(self.value, dtype=np.float64)
            if len(self.value) != len(self.supplier):
                raise ValueError("link value column has the wrong length")
        if len(self.supplier) != len(self.customer):
            raise ValueError("supplier and customer columns have different lengths")

    def __len__(self) -> int:
        return len(self.supplier)


@dataclass
class IoTable:
    """Sector-level input-output values, currency per year.

    ``pairs`` maps ``(sector_from, sector_to)`` to the intermediate flow,
    ``final_demand`` maps a sector to its final demand and ``value_added``
    (optional) maps a sector to its value added.
    """

    pairs: dict[tuple[int, int], float]
    final_demand: dict[int, float]
    value_added: dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for table in (self.pairs, self.final_demand, self.value_added):
            for key, v in table.items():
                if not v >= 0:
                    raise ValueError(f"negative or NaN IO value at {key}: {v}")

    def value_added_ratio(self) -> dict[int, float]:
        """Value added over gross output (intermediate inputs plus value added) per sector."""
        inputs: dict[int, float] = {}
        for (_, s_to), v in self.pairs.items():
            inputs[s_to] = inputs.get(s_to, 0.0) + v
        out = {}
        for s, va in self.value_added.items():
            total = inputs.get(s, 0.0) + va
            out[s] = va / total if total > 0 else 0.0
        return out


class Network:
    """Immutable weighted supply-chain graph with the adjacency views the simulator needs.

    Parameters
    ----------
    firms : FirmTable
        Firms; their ids are kept as labels, rows become dense indices.
    supplier, customer : array of int
        Dense firm indices of each link.
    flow : array of float
        Baseline daily flow of each link.
    final_consumption : array of float
        Baseline daily sales to final consumers per firm.
    io : IoTable, optional
        The table the link values were derived from, if any.
    """

    def __init__(
        self,
        firms: FirmTable,
        supplier: np.ndarray,
        customer: np.ndarray,
        flow: np.ndarray,
        final_consumption: np.ndarray,
        io: IoTable | None = None,
    ) -> None:
        n = len(firms)
        supplier = np.asarray(supplier, dtype=np.int64)
        customer = np.asarray(customer, dtype=np.int64)
        flow = np.asarray(flow, dtype=np.float64)
        final_consumption = np.asarray(final_consumption, dtype=np.float64)
        if len(final_consumption) != n:
            raise ValueError("final_consumption must have one entry per firm")
        if len(supplier) and (supplier.min() < 0 or max(supplier.max(), customer.max()) >= n
                              or customer.min() < 0):
            raise ValueError("link endpoint outside the firm table")
        if np.any(supplier == customer):
            raise ValueError("self-links are not allowed")
        if np.any(~(flow > 0)) or np.any(~np.isfinite(flow)):
            raise ValueError("link flows must be finite and positive")
        if np.any(~(final_consumption >= 0)) or np.any(~np.isfinite(final_consumption)):
            raise ValueError("final consumption must be finite and non-negative")

        order = np.lexsort((supplier, customer))
        supplier, customer, flow = supplier[order], customer[order], flow[order]
        if len(supplier) > 1:
            dup = (supplier[1:] == supplier[:-1]) & (customer[1:] == customer[:-1])
            if dup.any():
                raise ValueError(f"{int(dup.sum())} duplicate (supplier, customer) links")

        self.firms = firms
        self.n_firms = n
        self.n_links = len(supplier)
        self.supplier = supplier
        self.customer = customer
        self.flow = flow
        self.final_consumption = final_consumption
        self.io = io

        self.p_ini = np.bincount(supplier, weights=flow, minlength=n) + final_consumption
        bad = np.flatnonzero(~(self.p_ini > 0))
        if len(bad):
            raise ValueError(
                f"{len(bad)} firms have zero initial production (no customers and no final "
                f"consumption), e.g. ids {firms.id[bad[:10]].tolist()}"
            )

        self.cust_ptr = np.searchsorted(customer, np.arange(n + 1)).astype(np.int64)
        self.sup_order = np.lexsort((customer, supplier)).astype(np.int64)
        self.sup_ptr = np.searchsorted(supplier[self.sup_order], np.arange(n + 1)).astype(np.int64)

        self.sector_codes, self.sector_idx = np.unique(firms.sector, return_inverse=True)
        self.region_codes, self.region_idx = np.unique(firms.region, return_inverse=True)
        self.n_sectors = len(self.sector_codes)
        self.n_regions = len(self.region_codes)

        # (customer, supplier sector) input groups, customer-major
        key = customer * max(self.n_sectors, 1) + self.sector_idx[supplier]
        group_keys, self.link_group = np.unique(key, return_inverse=True)
        self.link_group = self.link_group.astype(np.int64)
        self.group_customer = group_keys // max(self.n_sectors, 1)
        self.group_ptr = np.searchsorted(self.group_customer, np.arange(n + 1)).astype(np.int64)
        self.group_a_tot = np.bincount(self.link_group, weights=flow, minlength=len(group_keys)).astype(np.float64)

        for arr in (self.supplier, self.customer, self.flow, self.final_consumption, self.p_ini):
            arr.setflags(write=False)

    @property
    def sector(self) -> np.ndarray:
        return self.firms.sector

    @property
    def region(self) -> np.ndarray:
        return self.firms.region

    def __repr__(self) -> str:
        return (f"Network(n_firms={self.n_firms}, n_links={self.n_links}, "
                f"n_regions={self.n_regions}, n_sectors={self.n_sectors})")


# --------------------------------------------------------------------------- weighting


def _merge_raw_links(supplier: np.ndarray, customer: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keep = supplier != customer
    if not keep.all():
        logger.warning("dropping %d self-links", int((~keep).sum()))
    pairs = np.unique(np.stack([supplier[keep], customer[keep]], axis=1), axis=0)
    return pairs[:, 0], pairs[:, 1]


def _tentative_values(
    sales: np.ndarray, sup: np.ndarray, cust: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Split each supplier's sales over its customers in proportion to customer sales."""
    denom = np.bincount(sup, weights=sales[cust], minlength=len(sales))
    ok = denom[sup] > 0
    v = np.zeros(len(sup))
    v[ok] = sales[sup[ok]] * sales[cust[ok]] / denom[sup[ok]]
    return v, ok


def estimate_link_values(firms: FirmTable, raw_links: LinkTable, io: IoTable) -> LinkTable:
    """Weight unweighted links with sales splits rescaled to the IO sector-pair totals.

    Endpoints in ``raw_links`` are dense row indices into ``firms``. Duplicate
    edges are merged first. Returned values are currency per day.

    Raises
    ------
    ValueError
        If a sector pair carries tentative flow but is missing from the IO table.
    """
    sup, cust = _merge_raw_links(raw_links.supplier, raw_links.customer)
    n = len(firms)
    if len(sup) and (min(sup.min(), cust.min()) < 0 or max(sup.max(), cust.max()) >= n):
        raise ValueError("link endpoint outside the firm table")
    v, ok = _tentative_values(firms.sales, sup, cust)
    if not ok.all():
        rejected = np.unique(sup[~ok])
        logger.warning("rejecting outgoing split of %d suppliers whose customers have zero "
                       "total sales", len(rejected))
        sup, cust, v = sup[ok], cust[ok], v[ok]

    s_from, s_to = firms.sector[sup], firms.sector[cust]
    pair_keys, inv = np.unique(np.stack([s_from, s_to], axis=1), axis=0, return_inverse=True)
    inv = inv.ravel()
    agg = np.bincount(inv, weights=v, minlength=len(pair_keys))
    ratio = np.empty(len(pair_keys))
    missing = []
    for k, (a, b) in enumerate(pair_keys.tolist()):
        target = io.pairs.get((a, b))
        if target is None:
            if agg[k] > 0:
                missing.append((a, b))
            ratio[k] = 0.0
        else:
            ratio[k] = target / agg[k] if agg[k] > 0 else 0.0
    if missing:
        raise ValueError(f"IO table lacks sector pairs with nonzero tentative flow: {missing[:20]}")

    value = v * ratio[inv] / DAYS_PER_YEAR
    pos = value > 0
    if not pos.all():
        logger.warning("dropping %d links whose rescaled value is zero", int((~pos).sum()))
    return LinkTable(sup[pos], cust[pos], value[pos])


def allocate_final_consumption(firms: FirmTable, io: IoTable) -> np.ndarray:
    """Share each sector's final demand over its firms by sales; currency per day."""
    codes, inv = np.unique(firms.sector, return_inverse=True)
    sector_sales = np.bincount(inv, weights=firms.sales, minlength=len(codes))
    demand = np.array([io.final_demand.get(int(s), 0.0) for s in codes])
    bad = [int(s) for s, d, t in zip(codes, demand, sector_sales) if d > 0 and t <= 0]
    if bad:
        raise ValueError(f"sectors with final demand but zero total sales: {bad}")
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(sector_sales[inv] > 0, firms.sales / sector_sales[inv], 0.0)
    return demand[inv] * share / DAYS_PER_YEAR


def build_network(firms: FirmTable, links: LinkTable, io: IoTable | None) -> Network:
    """Assemble a :class:`Network` from tables keyed by firm id.

    Firms without sales are dropped together with their links. When ``links``
    has no values they are estimated from ``io``; final consumption always
    comes from ``io`` (zero without one).
    """
    keep = firms.sales > 0
    if not keep.all():
        logger.info("dropping %d firms without sales", int((~keep).sum()))
    firms = firms.subset(keep)
    order = np.argsort(firms.id, kind="stable")
    firms = firms.subset(order)

    pos_s = np.searchsorted(firms.id, links.supplier)
    pos_c = np.searchsorted(firms.id, links.customer)
    pos_s = np.minimum(pos_s, max(len(firms) - 1, 0))
    pos_c = np.minimum(pos_c, max(len(firms) - 1, 0))
    known = (firms.id[pos_s] == links.supplier) & (firms.id[pos_c] == links.customer)
    if not known.all():
        logger.info("dropping %d links touching unknown or dropped firms", int((~known).sum()))
    sup, cust = pos_s[known], pos_c[known]

    if links.value is None:
        if io is None:
            raise ValueError("links carry no values and no IO table was given")
        weighted = estimate_link_values(firms, LinkTable(sup, cust), io)
        sup, cust, value = weighted.supplier, weighted.customer, weighted.value
    else:
        value = links.value[known]
        sup, cust, value = _merge_valued(sup, cust, value)
    final = allocate_final_consumption(firms, io) if io is not None else np.zeros(len(firms))
    return Network(firms, sup, cust, value, final, io=io)


def _merge_valued(sup, cust, value):
    keep = sup != cust
    sup, cust, value = sup[keep], cust[keep], value[keep]
    keys, inv = np.unique(np.stack([sup, cust], axis=1), axis=0, return_inverse=True)
    merged = np.bincount(inv.ravel(), weights=value, minlength=len(keys))
    return keys[:, 0], keys[:, 1], merged


# --------------------------------------------------------------------------- CSV


def read_firms_csv(path: str | Path) -> FirmTable:
    df = pd.read_csv(path, dtype={"id": np.int64, "sector": np.int64, "prefecture": np.int64,
                                  "sales": np.float64}, float_precision="round_trip")
    missing = {"id", "sector", "prefecture", "sales"} - set(df.columns)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    return FirmTable(df["id"].to_numpy(), df["sector"].to_numpy(), df["prefecture"].to_numpy(),
                     df["sales"].to_numpy())


def read_links_csv(path: str | Path) -> LinkTable:
    df = pd.read_csv(path, float_precision="round_trip")
    missing = {"supplier_id", "customer_id"} - set(df.columns)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    value = df["value"].to_numpy(np.float64) if "value" in df.columns else None
    return LinkTable(df["supplier_id"].to_numpy(np.int64), df["customer_id"].to_numpy(np.int64),
                     value)


def read_io_csv(path: str | Path) -> IoTable:
    df = pd.read_csv(path, dtype=str)
    missing = {"sector_from", "sector_to", "value"} - set(df.columns)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    pairs: dict[tuple[int, int], float] = {}
    final: dict[int, float] = {}
    va: dict[int, float] = {}
    for s_from, s_to, v in zip(df["sector_from"], df["sector_to"], df["value"]):
        v = float(v)
        if s_to.strip() == FINAL:
            final[int(s_from)] = final.get(int(s_from), 0.0) + v
        elif s_from.strip() == VALUE_ADDED:
            va[int(s_to)] = va.get(int(s_to), 0.0) + v
        else:
            key = (int(s_from), int(s_to))
            pairs[key] = pairs.get(key, 0.0) + v
    return IoTable(pairs, final, va)


def write_io_csv(io: IoTable, path: str | Path) -> None:
    rows = [(str(a), str(b), v) for (a, b), v in sorted(io.pairs.items())]
    rows += [(str(s), FINAL, v) for s, v in sorted(io.final_demand.items())]
    rows += [(VALUE_ADDED, str(s), v) for s, v in sorted(io.value_added.items())]
    pd.DataFrame(rows, columns=["sector_from", "sector_to", "value"]).to_csv(path, index=False)


def write_network(net: Network, directory: str | Path) -> None:
    """Write ``firms.csv``, ``links.csv`` (daily values) and, if present, ``io_table.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ids = net.firms.id
    pd.DataFrame({"id": ids, "sector": net.sector, "prefecture": net.region,
                  "sales": net.firms.sales}).to_csv(directory / "firms.csv", index=False)
    pd.DataFrame({"supplier_id": ids[net.supplier], "customer_id": ids[net.customer],
                  "value": net.flow}).to_csv(directory / "links.csv", index=False)
    if net.io is not None:
        write_io_csv(net.io, directory / "io_table.csv")


def load_network(directory: str | Path) -> Network:
    """Load a network written by :func:`write_network` (or hand-made CSVs of the same schema)."""
    directory = Path(directory)
    firms = read_firms_csv(directory / "firms.csv")
    links = read_links_csv(directory / "links.csv")
    io_path = directory / "io_table.csv"
    io = read_io_csv(io_path) if io_path.exists() else None
    return build_network(firms, links, io)


# --------------------------------------------------------------------------- synthesis


@dataclass(frozen=True)
class SyntheticParams:
    """Knobs of the synthetic generator.

    Each arriving firm makes a geometric number (mean ``links_per_firm``) of links to
    earlier firms, picked with probability proportional to
    ``(degree + attachment_offset) ** attachment_exponent``; a share
    ``intra_region_bias`` (varied per region) of the picks is restricted to
    the firm's own region. Link direction follows a sector hierarchy of
    strength ``hierarchy``; with probability ``loop_bias`` a firm with two or
    more links gets at least one inbound and one outbound link. Regions lean
    towards upstream or downstream sectors with strength ``specialization``.
    """

    n_firms: int = 10_000
    n_regions: int = 47
    n_sectors: int = 30
    links_per_firm: float = 3.7
    attachment_exponent: float = 1.0
    attachment_offset: float = -0.5
    intra_region_bias: float = 0.6
    loop_bias: float = 0.0
    hierarchy: float = 8.0
    specialization: float = 1.5
    seed: int = 0

    def validate(self) -> None:
        checks = [
            (self.n_firms >= 10, "n_firms must be >= 10"),
            (1 <= self.n_regions <= N_PREFECTURES, f"n_regions must lie in 1..{N_PREFECTURES}"),
            (1 <= self.n_sectors, "n_sectors must be >= 1"),
            (self.links_per_firm >= 1, "links_per_firm must be >= 1"),
            (self.attachment_exponent > 0, "attachment_exponent must be > 0"),
            (self.attachment_offset > -1, "attachment_offset must be > -1"),
            (0 <= self.intra_region_bias <= 1, "intra_region_bias must lie in [0, 1]"),
            (0 <= self.loop_bias <= 1, "loop_bias must lie in [0, 1]"),
            (self.hierarchy >= 0, "hierarchy must be >= 0"),
            (self.specialization >= 0, "specialization must be >= 0"),
            (self.seed >= 0, "seed must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)


def _synthetic_sectors(n_sectors: int) -> np.ndarray:
    from sclockdown.scenario import default_policy

    codes = np.array(sorted(default_policy().keys()), dtype=np.int64)
    if n_sectors > len(codes):
        raise ValueError(f"n_sectors must be <= {len(codes)}")
    pick = np.unique(np.round(np.linspace(0, len(codes) - 1, n_sectors)).astype(int))
    return codes[pick]


def _draw_attributes(p: SyntheticParams):
    rng = stream(p.seed, "netgen.attributes")
    n, n_reg = p.n_firms, p.n_regions
    codes = _synthetic_sectors(p.n_sectors)
    n_sec = len(codes)

    rank = rng.permutation(n_reg) + 1
    region_p = 1.0 / rank
    region_p /= region_p.sum()
    region = rng.choice(n_reg, size=n, p=region_p)

    upstream = rng.permutation(n_sec) / max(n_sec - 1, 1)
    base_w = rng.lognormal(0.0, 0.7, n_sec)
    tilt = rng.normal(0.0, 1.0, n_reg)
    sector = np.empty(n, dtype=np.int64)
    for r in range(n_reg):
        members = np.flatnonzero(region == r)
        w = base_w * np.exp(p.specialization * tilt[r] * (upstream - 0.5))
        sector[members] = rng.choice(n_sec, size=len(members), p=w / w.sum())

    intra = np.clip(p.intra_region_bias + 0.2 * rng.normal(size=n_reg), 0.0, 0.95)
    if p.intra_region_bias in (0.0, 1.0):
        intra = np.full(n_reg, p.intra_region_bias)
    return region, sector, codes, upstream, intra


def _attach(p: SyntheticParams, region, sector, upstream, intra):
    """Batched directed preferential attachment; returns raw (supplier, customer) arrays."""
    rng = stream(p.seed, "netgen.attach")
    n = p.n_firms
    n0 = min(n, 10)
    sup_parts = [np.arange(n0, dtype=np.int64)]
    cust_parts = [(np.arange(n0, dtype=np.int64) + 1) % n0]
    degree = np.zeros(n, dtype=np.float64)
    degree[:n0] = 2.0

    perm = np.lexsort((np.arange(n), region))
    reg_sorted = region[perm]
    seg_lo = np.searchsorted(reg_sorted, np.arange(p.n_regions), side="left")
    seg_hi = np.searchsorted(reg_sorted, np.arange(p.n_regions), side="right")

    n_links = rng.geometric(1.0 / p.links_per_firm, size=n)
    t0 = n0
    while t0 < n:
        t1 = min(n, t0 + max(1, int(0.02 * t0)))
        w = np.zeros(n)
        w[:t0] = (degree[:t0] + p.attachment_offset) ** p.attachment_exponent
        cum = np.concatenate(([0.0], np.cumsum(w[perm])))

        new = np.arange(t0, t1)
        m = n_links[t0:t1]
        owner = np.repeat(new, m)
        k = len(owner)
        reg = region[owner]
        lo = np.zeros(k)
        hi = np.full(k, cum[-1])
        local = rng.random(k) < intra[reg]
        r_lo, r_hi = cum[seg_lo[reg]], cum[seg_hi[reg]]
        local &= r_hi > r_lo
        lo[local], hi[local] = r_lo[local], r_hi[local]
        u = lo + rng.random(k) * (hi - lo)
        pos = np.searchsorted(cum, u, side="right") - 1
        pos = np.clip(pos, 0, n - 1)
        partner = perm[pos]

        gap = upstream[sector[owner]] - upstream[sector[partner]]
        p_sup = 1.0 / (1.0 + np.exp(-p.hierarchy * gap))
        owner_supplies = rng.random(k) < p_sup
        first = np.concatenate(([0], np.cumsum(m)[:-1]))
        last = first + m - 1
        force = (m >= 2) & (rng.random(len(m)) < p.loop_bias)
        owner_supplies[last[force]] = ~owner_supplies[first[force]]

        sup_parts.append(np.where(owner_supplies, owner, partner))
        cust_parts.append(np.where(owner_supplies, partner, owner))
        degree += np.bincount(owner, minlength=n) + np.bincount(partner, minlength=n)
        t0 = t1
    return np.concatenate(sup_parts), np.concatenate(cust_parts)


def generate_synthetic(params: SyntheticParams | None = None, **overrides) -> Network:
    """Generate a seeded synthetic network with a synthetic IO table.

    The same parameters always give the same network, bit for bit.
    """
    p = params if params is not None else SyntheticParams()
    if overrides:
        p = SyntheticParams(**{**p.__dict__, **overrides})
    p.validate()
    region, sector_i, codes, upstream, intra = _draw_attributes(p)
    sup, cust = _attach(p, region, sector_i, upstream, intra)
    sup, cust = _merge_raw_links(sup, cust)

    rng = stream(p.seed, "netgen.weights")
    degree = np.bincount(sup, minlength=p.n_firms) + np.bincount(cust, minlength=p.n_firms)
    sales = 100.0 * rng.lognormal(0.0, 0.8, p.n_firms) * np.maximum(degree, 1)
    firms = FirmTable(np.arange(p.n_firms), codes[sector_i], region + 1, sales)

    v, _ = _tentative_values(sales, sup, cust)
    n_sec = len(codes)
    pair = sector_i[sup] * n_sec + sector_i[cust]
    agg = np.bincount(pair, weights=v, minlength=n_sec * n_sec)
    noise = rng.lognormal(0.0, 0.5, n_sec * n_sec)
    pairs = {(int(codes[k // n_sec]), int(codes[k % n_sec])): float(agg[k] * noise[k])
             for k in np.flatnonzero(agg > 0)}
    sector_sales = np.bincount(sector_i, weights=sales, minlength=n_sec)
    # upstream sectors sell mostly to firms, downstream ones to final users
    fd_share = (0.1 + 0.9 * (1.0 - upstream)) * rng.uniform(0.7, 1.0, n_sec)
    va_share = rng.uniform(0.2, 0.6, n_sec)
    inputs = np.zeros(n_sec)
    for (a, b), val in pairs.items():
        inputs[np.searchsorted(codes, b)] += val
    final_demand, value_added = {}, {}
    for k, code in enumerate(codes.tolist()):
        if sector_sales[k] > 0:
            final_demand[code] = float(fd_share[k] * sector_sales[k])
        value_added[code] = float(inputs[k] * va_share[k] / (1 - va_share[k])
                                  if inputs[k] > 0 else sector_sales[k])
    io = IoTable(pairs, final_demand, value_added)
    links = estimate_link_values(firms, LinkTable(sup, cust), io)
    final = allocate_final_consumption(firms, io)
    return Network(firms, links.supplier, links.customer, links.value, final, io=io)


# --------------------------------------------------------------------------- topology


@dataclass
class TopologyStats:
    degree_values: np.ndarray
    degree_counts: np.ndarray
    tail_exponent: float
    tail_kmin: int
    gscc_share: float
    avg_path_length: float


def powerlaw_tail_exponent(values: np.ndarray, min_tail: int = 50) -> tuple[float, int]:
    """Complementary-CDF exponent of a discrete power-law tail.

    Maximum likelihood with the continuity-corrected estimator, the lower
    cutoff chosen by minimising the Kolmogorov-Smirnov distance. Returns
    ``(exponent, kmin)`` where ``P(K >= k) ~ k ** -exponent``.
    """
    x = np.sort(np.asarray(values, dtype=np.float64))
    x = x[x >= 1]
    if len(x) < 2:
        return math.nan, 0
    best = (math.inf, math.nan, 0)
    candidates = np.unique(x)
    for kmin in candidates:
        tail = x[x >= kmin]
        if len(tail) < min_tail:
            break
        s = np.log(tail / (kmin - 0.5)).sum()
        if s <= 0:
            continue
        alpha = 1.0 + len(tail) / s
        uniq, idx = np.unique(tail, return_index=True)
        emp = 1.0 - idx / len(tail)
        model = ((uniq - 0.5) / (kmin - 0.5)) ** (1.0 - alpha)
        ks = np.max(np.abs(emp - model))
        if ks < best[0]:
            best = (ks, alpha - 1.0, int(kmin))
    return best[1], best[2]


def _adjacency(net: Network) -> sparse.csr_matrix:
    n = net.n_firms
    return sparse.csr_matrix((np.ones(net.n_links), (net.supplier, net.customer)), shape=(n, n))


def gscc_share(net: Network) -> float:
    if net.n_firms == 0:
        raise ValueError("empty network")
    _, labels = csgraph.connected_components(_adjacency(net), directed=True, connection="strong")
    return float(np.bincount(labels).max() / net.n_firms)


def topology_stats(net: Network, n_sources: int = 100, seed: int = 0) -> TopologyStats:
    """Degree histogram, tail exponent, giant SCC share and sampled mean path length."""
    if net.n_firms == 0 or net.n_links == 0:
        raise ValueError("empty network: topology statistics need at least one link")
    degree = (np.bincount(net.supplier, minlength=net.n_firms)
              + np.bincount(net.customer, minlength=net.n_firms))
    values, counts = np.unique(degree, return_counts=True)
    exponent, kmin = powerlaw_tail_exponent(degree)

    adj = _adjacency(net)
    rng = stream(seed, "netgen.path_sources")
    k = min(max(n_sources, 100), net.n_firms)
    sources = np.sort(rng.choice(net.n_firms, size=k, replace=False))
    total, count = 0.0, 0
    for chunk in np.array_split(sources, max(1, k // 10)):
        dist = csgraph.shortest_path(adj, method="D", directed=True, unweighted=True, indices=chunk)
        finite = np.isfinite(dist) & (dist > 0)
        total += dist[finite].sum()
        count += int(finite.sum())
    return TopologyStats(values, counts, exponent, kmin, gscc_share(net),
                         total / count if count else math.nan)


def as_mapping(stats: TopologyStats) -> Mapping[str, float]:
    return {"tail_exponent": stats.tail_exponent, "tail_kmin": stats.tail_kmin,
            "gscc_share": stats.gscc_share, "avg_path_length": stats.avg_path_length}
