"""Region-level structure measures built from firm links and the flow decomposition.

Flow intensities are divided by the region's total link count ``F_a`` (each
link touching the region counted once) by default. ``flow_denominator=True``
divides by the region's total absolute net flow instead, which keeps the
ratios dimensionless.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from sclockdown.hhd import HhdResult
from sclockdown.netgen import Network


@dataclass
class RegionProfile:
    region: int
    total_degree: int
    in_link_share: float
    in_loop_share: float
    out_link_share: float
    inbound_link_share: float
    avg_potential: float
    grp: float
    n_firms: int


@dataclass
class RegionPairProfile:
    region_a: int
    region_b: int
    link_ab: float
    link_ba: float
    pot_ab: float
    pot_ba: float
    loop_ab: float
    bi_links: int
    sub_ab: float


def _region_mask(net: Network, region: int) -> np.ndarray:
    mask = net.region == region
    if not mask.any():
        raise ValueError(f"region {region} has no firms")
    return mask


def _edge_regions(net: Network, result: HhdResult) -> tuple[np.ndarray, np.ndarray]:
    fg = result.graph
    return net.region[fg.u], net.region[fg.v]


def _denominator(net: Network, result: HhdResult, region: int, flow_denominator: bool) -> float:
    in_a = net.region == region
    touching = in_a[net.supplier] | in_a[net.customer]
    if not flow_denominator:
        return float(touching.sum())
    ru, rv = _edge_regions(net, result)
    edge_touch = (ru == region) | (rv == region)
    return float(np.abs(result.graph.net_flow[edge_touch]).sum())


def region_profile(net: Network, result: HhdResult, region: int, grp: float | None = None,
                   flow_denominator: bool = False) -> RegionProfile:
    """Link shares, in-region loop intensity and mean potential of one region.

    ``grp`` defaults to the region's baseline output.
    """
    in_a = _region_mask(net, region)
    s_in, c_in = in_a[net.supplier], in_a[net.customer]
    intra = int((s_in & c_in).sum())
    out = int((s_in & ~c_in).sum())
    inbound = int((~s_in & c_in).sum())
    total = intra + out + inbound
    denom = _denominator(net, result, region, flow_denominator)

    ru, rv = _edge_regions(net, result)
    inside = (ru == region) & (rv == region)
    loop_inside = float(np.abs(result.loop_flow[inside]).sum())

    def share(x: float, d: float) -> float:
        return x / d if d > 0 else math.nan

    return RegionProfile(
        region=int(region),
        total_degree=total,
        in_link_share=share(intra, total),
        in_loop_share=share(loop_inside, denom),
        out_link_share=share(out, total),
        inbound_link_share=share(inbound, total),
        avg_potential=float(result.phi[in_a].mean()),
        grp=float(net.p_ini[in_a].sum()) if grp is None else float(grp),
        n_firms=int(in_a.sum()),
    )


def pair_profile(net: Network, result: HhdResult, a: int, b: int,
                 flow_denominator: bool = False) -> RegionPairProfile:
    """Directional link, potential and loop intensities between regions ``a`` and ``b``.

    Directional sums keep the positive part of each pair's flow in the stated
    direction; the loop intensity sums absolute loop flow on cross pairs.
    """
    if a == b:
        raise ValueError("pair_profile needs two different regions")
    _region_mask(net, a)
    _region_mask(net, b)
    fg = result.graph
    ru, rv = _edge_regions(net, result)
    ab = (ru == a) & (rv == b)   # edge oriented a -> b
    ba = (ru == b) & (rv == a)   # edge oriented b -> a

    def directed(values: np.ndarray) -> tuple[float, float]:
        a_to_b = np.concatenate([values[ab], -values[ba]])
        return float(np.clip(a_to_b, 0, None).sum()), float(np.clip(-a_to_b, 0, None).sum())

    denom = _denominator(net, result, a, flow_denominator)
    link_ab, link_ba = directed(fg.net_flow)
    pot_ab, pot_ba = directed(result.pot_flow)
    loop = float(np.abs(result.loop_flow[ab | ba]).sum())
    in_a, in_b = net.region == a, net.region == b
    bi = int(((in_a[net.supplier] & in_b[net.customer])
              | (in_b[net.supplier] & in_a[net.customer])).sum())

    def scaled(x: float) -> float:
        return x / denom if denom > 0 else math.nan

    return RegionPairProfile(
        region_a=int(a), region_b=int(b),
        link_ab=scaled(link_ab), link_ba=scaled(link_ba),
        pot_ab=scaled(pot_ab), pot_ba=scaled(pot_ba), loop_ab=scaled(loop),
        bi_links=bi, sub_ab=substitutability_two(net, a, b),
    )


def substitutability_one(net: Network, region: int) -> float:
    """Share of (customer in region, outside supplier) pairs with a same-sector in-region supplier.

    Returns NaN when the region's firms have no outside suppliers.
    """
    in_a = net.region == region
    cust_in = in_a[net.customer]
    sup_sector = net.sector[net.supplier]
    local = cust_in & in_a[net.supplier]
    outside = cust_in & ~in_a[net.supplier]
    if not outside.any():
        return math.nan
    n_sec = int(net.sector.max()) + 1
    have = np.unique(net.customer[local] * n_sec + sup_sector[local])
    keys = net.customer[outside] * n_sec + sup_sector[outside]
    matched = np.isin(keys, have)
    return float(matched.sum() / outside.sum())


def substitutability_two(net: Network, a: int, b: int) -> float:
    """Share of suppliers of ``a``'s firms outside ``a`` and ``b`` whose sector some
    ``b``-located supplier of the same customer also covers; NaN without such suppliers.
    """
    if a == b:
        raise ValueError("substitutability_two needs two different regions")
    reg_s = net.region[net.supplier]
    cust_in = net.region[net.customer] == a
    outside = cust_in & (reg_s != a) & (reg_s != b)
    if not outside.any():
        return math.nan
    from_b = cust_in & (reg_s == b)
    n_sec = int(net.sector.max()) + 1
    sup_sector = net.sector[net.supplier]
    have = np.unique(net.customer[from_b] * n_sec + sup_sector[from_b])
    matched = np.isin(net.customer[outside] * n_sec + sup_sector[outside], have)
    return float(matched.sum() / outside.sum())


def region_table(net: Network, result: HhdResult, grp: dict[int, float] | None = None,
                 flow_denominator: bool = False) -> pd.DataFrame:
    """One row per region with profile fields plus one-region substitutability."""
    rows = []
    for r in net.region_codes.tolist():
        prof = region_profile(net, result, r, None if grp is None else grp.get(r),
                              flow_denominator)
        row = asdict(prof)
        row["sub"] = substitutability_one(net, r)
        rows.append(row)
    return pd.DataFrame(rows)


def _pair_substitutability(net: Network, n_reg: int) -> tuple[np.ndarray, np.ndarray]:
    """Numerator and denominator of two-region substitutability for every ordered pair."""
    ridx = net.region_idx
    r_sup, r_cust = ridx[net.supplier], ridx[net.customer]
    df = pd.DataFrame({"cust": net.customer, "sec": net.sector_idx[net.supplier],
                       "a": r_cust, "r": r_sup})
    cnt = df.groupby(["cust", "sec", "a", "r"], sort=True).size().rename("n").reset_index()
    out = cnt[cnt["r"] != cnt["a"]]
    out_tot = out.groupby(["cust", "sec"], sort=True)["n"].sum().rename("n_out")
    cand = out.join(out_tot, on=["cust", "sec"])
    # b ranges over supplier regions of the same (customer, sector) group, b != a
    contrib = cand["n_out"] - cand["n"]
    num = np.bincount((cand["a"] * n_reg + cand["r"]).to_numpy(), weights=contrib.to_numpy(),
                      minlength=n_reg * n_reg).reshape(n_reg, n_reg)
    inflow = np.bincount(r_cust * n_reg + r_sup, minlength=n_reg * n_reg).reshape(n_reg, n_reg)
    inflow_outside = inflow.sum(axis=1) - np.diag(inflow)
    den = inflow_outside[:, None] - inflow
    return num, den


def pair_table(net: Network, result: HhdResult, pairs=None,
               flow_denominator: bool = False) -> pd.DataFrame:
    """One row per ordered region pair (all ordered pairs by default), vectorized."""
    codes = net.region_codes
    n_reg = len(codes)
    fg = result.graph
    ru, rv = net.region_idx[fg.u], net.region_idx[fg.v]

    def directed_matrix(values: np.ndarray) -> np.ndarray:
        keys = np.concatenate([ru * n_reg + rv, rv * n_reg + ru])
        vals = np.concatenate([np.clip(values, 0, None), np.clip(-values, 0, None)])
        return np.bincount(keys, weights=vals, minlength=n_reg * n_reg).reshape(n_reg, n_reg)

    link_m = directed_matrix(fg.net_flow)
    pot_m = directed_matrix(result.pot_flow)
    loop_m = np.bincount(ru * n_reg + rv, weights=np.abs(result.loop_flow),
                         minlength=n_reg * n_reg).reshape(n_reg, n_reg)
    loop_m = loop_m + loop_m.T
    rs, rc = net.region_idx[net.supplier], net.region_idx[net.customer]
    links_m = np.bincount(rs * n_reg + rc, minlength=n_reg * n_reg).reshape(n_reg, n_reg)
    bi_m = links_m + links_m.T

    if flow_denominator:
        touch = np.bincount(ru, weights=np.abs(fg.net_flow), minlength=n_reg)
        touch += np.bincount(rv, weights=np.where(ru != rv, np.abs(fg.net_flow), 0.0),
                             minlength=n_reg)
    else:
        touch = links_m.sum(axis=0) + links_m.sum(axis=1) - np.diag(links_m)
    num, den = _pair_substitutability(net, n_reg)

    if pairs is None:
        ia, ib = np.nonzero(~np.eye(n_reg, dtype=bool))
    else:
        lookup = {int(c): k for k, c in enumerate(codes)}
        ia = np.array([lookup[int(a)] for a, _ in pairs], dtype=np.int64)
        ib = np.array([lookup[int(b)] for _, b in pairs], dtype=np.int64)
        if np.any(ia == ib):
            raise ValueError("pair_table needs two different regions per pair")
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(touch[ia] > 0, touch[ia], np.nan)
        sub = np.where(den[ia, ib] > 0, num[ia, ib] / np.maximum(den[ia, ib], 1), np.nan)
    return pd.DataFrame({
        "region_a": codes[ia], "region_b": codes[ib],
        "link_ab": link_m[ia, ib] / d, "link_ba": link_m[ib, ia] / d,
        "pot_ab": pot_m[ia, ib] / d, "pot_ba": pot_m[ib, ia] / d,
        "loop_ab": loop_m[ia, ib] / d, "bi_links": bi_m[ia, ib], "sub_ab": sub,
    })
