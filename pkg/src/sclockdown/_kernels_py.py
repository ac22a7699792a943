"""Pure numpy implementations of the per-day hot kernels.

Same signatures and semantics as the compiled ``_kernels`` module; used when the
extension is not built or when ``SCLOCKDOWN_PURE_PYTHON`` is set.
"""

from __future__ import annotations

import numpy as np


def place_orders(flow, inventory, customer, demand_ratio, target_days, inv_tau, floor_zero):
    """Orders per link: baseline scaled by last realized demand plus inventory gap over tau."""
    orders = flow * demand_ratio[customer] + inv_tau * (target_days[customer] * flow - inventory)
    if floor_zero:
        np.maximum(orders, 0.0, out=orders)
    return orders


def input_ratio_min(inventory, link_group, group_a_tot, group_ptr):
    """Per firm, min over supplier sectors of stocked inputs over baseline daily use.

    Firms without inputs get ``inf``.
    """
    n = len(group_ptr) - 1
    s_tot = np.bincount(link_group, weights=inventory, minlength=len(group_a_tot))
    ratio = s_tot / group_a_tot
    out = np.full(n, np.inf)
    has = group_ptr[1:] > group_ptr[:-1]
    if has.any():
        out[has] = np.minimum.reduceat(ratio, group_ptr[:-1][has])
    return out


def _waterfill_rows(rho, base, supply):
    """Water-fill each row of padded ``(rho, base)`` matrices against ``supply``.

    Padding carries ``rho = inf`` and ``base = 0``. Every row must be scarce:
    ``supply < sum(rho * base)``.
    """
    order = np.argsort(rho, axis=1, kind="stable")
    rho_s = np.take_along_axis(rho, order, axis=1)
    base_s = np.take_along_axis(base, order, axis=1)
    pad = ~np.isfinite(rho_s)
    with np.errstate(invalid="ignore"):
        served = np.where(pad, 0.0, rho_s * base_s)
    prefix = np.zeros_like(served)
    np.cumsum(served[:, :-1], axis=1, out=prefix[:, 1:])
    suffix = np.cumsum(base_s[:, ::-1], axis=1)[:, ::-1]
    with np.errstate(invalid="ignore"):
        level = np.where(pad, np.inf, prefix + rho_s * suffix)
    k = np.argmax(level >= supply[:, None], axis=1)
    rows = np.arange(len(supply))
    fill = (supply - prefix[rows, k]) / suffix[rows, k]
    alloc_s = np.minimum(rho_s, fill[:, None]) * base_s
    alloc_s[pad] = 0.0
    alloc = np.empty_like(alloc_s)
    np.put_along_axis(alloc, order, alloc_s, axis=1)
    return alloc


def ration(sup_ptr, orders, baseline, supply, demand, c_request, c_baseline):
    """Allocate each supplier's output over its claimants by water-filling.

    ``orders`` and ``baseline`` are in supplier-major link order, segmented by
    ``sup_ptr``. ``demand`` is the supplier's total requested amount (orders
    plus ``c_request``). A claimant with requested ratio ``rho`` against
    baseline ``b`` receives ``min(rho, f) * b``; ``f`` is the fill level that
    exhausts ``supply``. Returns ``(accepted_orders, accepted_consumption)``.
    """
    n = len(sup_ptr) - 1
    accepted = orders.copy()
    c_acc = c_request.copy()
    scarce = np.flatnonzero(supply < demand)
    if len(scarce) == 0:
        return accepted, c_acc

    # padded copies keep masked gathers in range when there are no links
    base_p = np.append(baseline, 0.0)
    orders_p = np.append(orders, 0.0)
    deg = sup_ptr[scarce + 1] - sup_ptr[scarce]
    width = deg + 1  # links plus the final consumer
    bucket = np.ceil(np.log2(width)).astype(np.int64)
    for b in np.unique(bucket):
        rows = scarce[bucket == b]
        w = 1 << int(b)
        starts = sup_ptr[rows]
        degs = sup_ptr[rows + 1] - starts
        col = np.arange(w)
        link_mask = col[None, :] < degs[:, None]
        link_idx = np.where(link_mask, starts[:, None] + col[None, :], 0)
        cons_col = degs

        base = np.where(link_mask, base_p[link_idx], 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(link_mask, orders_p[link_idx] / base, np.inf)
        r_idx = np.arange(len(rows))
        cb = c_baseline[rows]
        base[r_idx, cons_col] = cb
        with np.errstate(divide="ignore", invalid="ignore"):
            rho[r_idx, cons_col] = np.where(cb > 0, c_request[rows] / cb, 0.0)

        alloc = _waterfill_rows(rho, base, supply[rows])
        accepted[link_idx[link_mask]] = alloc[link_mask]
        c_acc[rows] = alloc[r_idx, cons_col]
    return accepted, c_acc


def update_inventory(inventory, accepted, flow, customer, used_ratio):
    """Next-day inventory: add deliveries, subtract input use, floor at zero."""
    out = inventory + (accepted - flow * used_ratio[customer])
    np.maximum(out, 0.0, out=out)
    return out
