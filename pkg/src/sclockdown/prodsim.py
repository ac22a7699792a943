"""Daily agent-based production dynamics with inventories and priority rationing.

One simulated day runs five phases over the whole network: customers place
orders, suppliers aggregate demand, each firm's output is capped by capacity
and by its scarcest input sector, scarce output is rationed (claimants asking
for the smallest share of their baseline are served first), and inventories
are updated. The per-day hot loops live in :mod:`sclockdown.kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Protocol

import numpy as np

from sclockdown._rng import stream
from sclockdown.kernels import get_backend
from sclockdown.netgen import Network


@dataclass(frozen=True)
class ModelParams:
    """Behavioural parameters.

    ``consumption_lag=1`` draws down inventories with the previous day's
    output; ``0`` uses the same day's output.
    """

    tau: float = 6.0
    n_mean: float = 10.0
    n_min: int = 4
    order_floor_zero: bool = True
    consumption_lag: int = 1

    def validate(self) -> None:
        if not self.tau >= 1:
            raise ValueError(f"tau must be >= 1, got {self.tau}")
        if not self.n_min >= 0:
            raise ValueError(f"n_min must be >= 0, got {self.n_min}")
        if not self.n_mean >= 0:
            raise ValueError(f"n_mean must be >= 0, got {self.n_mean}")
        if self.consumption_lag not in (0, 1):
            raise ValueError(f"consumption_lag must be 0 or 1, got {self.consumption_lag}")


@dataclass
class SimState:
    """State at the start of ``day``.

    ``inventory`` is per link in the network's customer-major order.
    ``d_star`` and ``p_act`` hold the previous day's realized demand and
    output; ``accepted`` / ``c_accepted`` are the realized orders and
    consumption of the previous day (``None`` before the first step).
    """

    day: int
    inventory: np.ndarray
    target_days: np.ndarray
    p_ini: np.ndarray
    d_star: np.ndarray
    p_act: np.ndarray
    accepted: np.ndarray | None = None
    c_accepted: np.ndarray | None = None

    def copy(self) -> SimState:
        return replace(
            self,
            inventory=self.inventory.copy(),
            d_star=self.d_star.copy(),
            p_act=self.p_act.copy(),
            accepted=None if self.accepted is None else self.accepted.copy(),
            c_accepted=None if self.c_accepted is None else self.c_accepted.copy(),
        )


class CapacityProfile(Protocol):
    """Anything that yields the malfunctioning capital share of each firm on a day."""

    def delta(self, day: int) -> np.ndarray: ...


class ArrayCapacity:
    """Capacity loss from an explicit array: one vector for all days, or one row per day.

    Days beyond the last row reuse the last row.
    """

    def __init__(self, delta: np.ndarray) -> None:
        delta = np.asarray(delta, dtype=np.float64)
        if np.any(~((delta >= 0) & (delta <= 1))):
            raise ValueError("delta must lie in [0, 1]")
        self._delta = delta

    def delta(self, day: int) -> np.ndarray:
        if self._delta.ndim == 1:
            return self._delta
        return self._delta[min(day, len(self._delta) - 1)]

    @classmethod
    def zero(cls, n_firms: int) -> ArrayCapacity:
        return cls(np.zeros(n_firms))


# --------------------------------------------------------------------------- phases


def initialize_state(net: Network, params: ModelParams, seed: int) -> SimState:
    """Draw target inventory days and start every inventory at its target."""
    params.validate()
    rng = stream(seed, "prodsim.target_days")
    n_days = np.maximum(rng.poisson(params.n_mean, size=net.n_firms), params.n_min).astype(np.int64)
    inventory = n_days[net.customer] * net.flow
    return SimState(
        day=0,
        inventory=inventory,
        target_days=n_days,
        p_ini=net.p_ini,
        d_star=net.p_ini.copy(),
        p_act=net.p_ini.copy(),
    )


def place_orders(state: SimState, net: Network, params: ModelParams, backend=None) -> np.ndarray:
    """Orders per link (customer-major) for ``state.day``."""
    k = backend or get_backend()
    return k.place_orders(net.flow, state.inventory, net.customer, state.d_star / state.p_ini,
                          state.target_days, 1.0 / params.tau, params.order_floor_zero)


@dataclass
class ProductionLimits:
    demand: np.ndarray
    p_cap: np.ndarray
    p_pro: np.ndarray
    p_max: np.ndarray
    p_act: np.ndarray


def aggregate_demand(orders: np.ndarray, net: Network) -> np.ndarray:
    """Total demand per supplier: incoming orders plus baseline final consumption."""
    return (np.bincount(net.supplier[net.sup_order], weights=orders[net.sup_order],
                        minlength=net.n_firms) + net.final_consumption)


def production_limits(state: SimState, net: Network, demand: np.ndarray, delta: np.ndarray,
                      backend=None) -> ProductionLimits:
    """Capacity, input-limited and actual output per firm.

    ``p_pro`` is the tightest sector limit; it is ``inf`` for firms without inputs.
    """
    k = backend or get_backend()
    p_cap = state.p_ini * (1.0 - delta)
    p_pro = k.input_ratio_min(state.inventory, net.link_group, net.group_a_tot,
                              net.group_ptr) * state.p_ini
    p_max = np.minimum(p_cap, p_pro)
    p_act = np.minimum(p_max, demand)
    return ProductionLimits(demand, p_cap, p_pro, p_max, p_act)


def ration(orders: np.ndarray, baselines: np.ndarray, supply: float,
           c_request: float = 0.0, c_baseline: float = 0.0, backend=None
           ) -> tuple[np.ndarray, float]:
    """Ration one supplier's output over its customers and final consumers.

    ``orders`` and ``baselines`` list the customers' orders and baseline
    flows. Returns the accepted orders and accepted consumption.
    """
    orders = np.asarray(orders, dtype=np.float64)
    baselines = np.asarray(baselines, dtype=np.float64)
    if np.any(orders < 0) or c_request < 0:
        raise ValueError("orders must be non-negative")
    if supply < 0:
        raise ValueError("supply must be non-negative")
    k = backend or get_backend()
    demand = np.array([orders.sum() + c_request])
    acc, c_acc = k.ration(np.array([0, len(orders)], dtype=np.int64), orders, baselines,
                          np.array([float(supply)]), demand, np.array([float(c_request)]),
                          np.array([float(c_baseline)]))
    return acc, float(c_acc[0])


def step_day(state: SimState, net: Network, capacity: CapacityProfile, params: ModelParams,
             backend=None) -> SimState:
    """Advance one day; ``state`` is left untouched."""
    k = backend or get_backend()
    orders = place_orders(state, net, params, k)
    so = net.sup_order
    orders_s = orders[so]
    demand = (np.bincount(net.supplier[so], weights=orders_s, minlength=net.n_firms)
              + net.final_consumption)
    limits = production_limits(state, net, demand, capacity.delta(state.day), k)
    p_act = limits.p_act

    acc_s, c_acc = k.ration(net.sup_ptr, orders_s, net.flow[so], p_act, demand,
                            net.final_consumption, net.final_consumption)
    accepted = np.empty_like(acc_s)
    accepted[so] = acc_s
    d_star = np.bincount(net.supplier[so], weights=acc_s, minlength=net.n_firms) + c_acc

    used = state.p_act if params.consumption_lag == 1 else p_act
    inventory = k.update_inventory(state.inventory, accepted, net.flow, net.customer,
                                   used / state.p_ini)
    return SimState(
        day=state.day + 1,
        inventory=inventory,
        target_days=state.target_days,
        p_ini=state.p_ini,
        d_star=d_star,
        p_act=p_act,
        accepted=accepted,
        c_accepted=c_acc,
    )


# --------------------------------------------------------------------------- runs


Reducer = Callable[[np.ndarray], np.ndarray]


def group_sum_reducer(groups: np.ndarray, n_groups: int, weights: np.ndarray | None = None
                      ) -> Reducer:
    """Reducer summing ``p_act * weights`` over firm groups (e.g. regions)."""
    groups = np.asarray(groups, dtype=np.int64)

    def reduce(p_act: np.ndarray) -> np.ndarray:
        values = p_act if weights is None else p_act * weights
        return np.bincount(groups, weights=values, minlength=n_groups)

    return reduce


@dataclass
class SimResult:
    """Per-day output; row ``t`` is day ``t``. ``series`` holds reduced output when a reducer was used."""

    series: np.ndarray
    final_state: SimState


def run_simulation(net: Network, capacity: CapacityProfile, params: ModelParams,
                   horizon_days: int, seed: int, reducer: Reducer | None = None,
                   backend=None, state: SimState | None = None) -> SimResult:
    """Simulate ``horizon_days`` days from the target-inventory start.

    Without a reducer the result holds the full ``(horizon, n_firms)``
    matrix of actual output.
    """
    if horizon_days < 1:
        raise ValueError("horizon_days must be >= 1")
    params.validate()
    k = backend or get_backend()
    st = state if state is not None else initialize_state(net, params, seed)
    rows = []
    for _ in range(horizon_days):
        st = step_day(st, net, capacity, params, k)
        rows.append(st.p_act if reducer is None else reducer(st.p_act))
    return SimResult(np.vstack(rows), st)
