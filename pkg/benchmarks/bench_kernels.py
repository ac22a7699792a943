"""Compare the compiled and pure-Python kernels on a synthetic network.

Times each kernel on one shocked day and a full multi-day simulation, checks
that both backends agree, and prints a table of timings and speedups.

Usage: python3 benchmarks/bench_kernels.py [--n-firms N] [--days D] [--repeat R]
"""

import argparse
import time

import numpy as np

from sclockdown.kernels import HAVE_COMPILED, get_backend
from sclockdown.netgen import generate_synthetic
from sclockdown.prodsim import (
    ArrayCapacity,
    ModelParams,
    aggregate_demand,
    initialize_state,
    place_orders,
    run_simulation,
    group_sum_reducer,
)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def kernel_cases(net, state, params, backend):
    k = get_backend(backend)
    orders = place_orders(state, net, params, k)
    demand = aggregate_demand(orders, net)
    supply = demand * 0.7
    so = net.sup_order
    c = net.final_consumption
    inv_tau = 1.0 / params.tau
    ratio = state.d_star / net.p_ini
    return {
        "place_orders": lambda: k.place_orders(net.flow, state.inventory, net.customer, ratio,
                                               state.target_days, inv_tau, True),
        "input_ratio_min": lambda: k.input_ratio_min(state.inventory, net.link_group,
                                                     net.group_a_tot, net.group_ptr),
        "ration": lambda: k.ration(net.sup_ptr, orders[so], net.flow[so], supply, demand, c, c),
        "update_inventory": lambda: k.update_inventory(state.inventory, orders, net.flow,
                                                       net.customer, ratio),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-firms", type=int, default=100_000)
    ap.add_argument("--days", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not HAVE_COMPILED:
        raise SystemExit("compiled kernels are not built; reinstall without SCLOCKDOWN_NO_EXT")

    net = generate_synthetic(n_firms=args.n_firms, seed=0)
    params = ModelParams()
    state = initialize_state(net, params, seed=0)
    # perturb inventories so rationing and input limits are active
    state.inventory = state.inventory * np.random.default_rng(0).uniform(0.3, 1.2, net.n_links)
    print(f"network: {net.n_firms} firms, {net.n_links} links")
    print(f"{'kernel':<18}{'python ms':>12}{'cython ms':>12}{'speedup':>10}{'max diff':>12}")

    py_cases = kernel_cases(net, state, params, "python")
    cy_cases = kernel_cases(net, state, params, "cython")
    for name in py_cases:
        tp, out_p = best_of(py_cases[name], args.repeat)
        tc, out_c = best_of(cy_cases[name], args.repeat)
        a = np.concatenate([np.atleast_1d(x) for x in (out_p if isinstance(out_p, tuple) else (out_p,))])
        b = np.concatenate([np.atleast_1d(x) for x in (out_c if isinstance(out_c, tuple) else (out_c,))])
        finite = np.isfinite(a)
        diff = float(np.max(np.abs(a[finite] - b[finite]), initial=0.0))
        print(f"{name:<18}{1e3 * tp:>12.2f}{1e3 * tc:>12.2f}{tp / tc:>10.1f}{diff:>12.1e}")

    rng = np.random.default_rng(1)
    delta = np.where(rng.random((args.days, net.n_firms)) < 0.3,
                     rng.uniform(0, 0.7, (args.days, net.n_firms)), 0.0)
    cap = ArrayCapacity(delta)
    red = group_sum_reducer(net.region_idx, net.n_regions)
    results = {}
    for backend in ("python", "cython"):
        k = get_backend(backend)
        results[backend] = best_of(lambda: run_simulation(net, cap, params, args.days, 0,
                                                          reducer=red, backend=k), 1)
    tp, sp = results["python"]
    tc, sc = results["cython"]
    diff = float(np.max(np.abs(sp.series - sc.series) / np.abs(sp.series)))
    print(f"{f'{args.days}-day run':<18}{1e3 * tp:>12.0f}{1e3 * tc:>12.0f}{tp / tc:>10.1f}"
          f"{diff:>12.1e}")


if __name__ == "__main__":
    main()
