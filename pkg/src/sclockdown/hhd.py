"""Helmholtz-Hodge decomposition of net supply-chain flows.

Net flow on every linked firm pair splits into a gradient part
``w_ij * (phi_i - phi_j)`` and a divergence-free loop part. The potentials
solve the weighted graph-Laplacian system ``L phi = div F`` with one
zero-mean gauge per weakly connected component; higher potential means
further upstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse import csgraph

from sclockdown.netgen import Network

DEFAULT_TOL = 1e-10


class ConvergenceError(RuntimeError):
    """The iterative potential solve hit ``max_iter`` before reaching tolerance."""

    def __init__(self, residual: float, iterations: int) -> None:
        super().__init__(f"potential solve did not converge: residual {residual:.3e} "
                         f"after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations


@dataclass
class FlowGraph:
    """Undirected view of a flow network.

    Each unordered linked pair appears once as ``(u[e], v[e])`` with
    ``u < v``; ``net_flow[e]`` is ``B_uv - B_vu`` and ``weight[e]`` counts the
    directions that carry a link (1 or 2).
    """

    n_nodes: int
    u: np.ndarray
    v: np.ndarray
    weight: np.ndarray
    net_flow: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.u)

    def divergence(self, flow: np.ndarray | None = None) -> np.ndarray:
        """Net outflow per node of an edge flow (default: the net flow)."""
        f = self.net_flow if flow is None else flow
        return (np.bincount(self.u, weights=f, minlength=self.n_nodes)
                - np.bincount(self.v, weights=f, minlength=self.n_nodes))

    def laplacian(self) -> sparse.csr_matrix:
        n = self.n_nodes
        w = self.weight
        off = sparse.coo_matrix((np.concatenate([-w, -w]),
                                 (np.concatenate([self.u, self.v]),
                                  np.concatenate([self.v, self.u]))), shape=(n, n))
        deg = np.bincount(self.u, weights=w, minlength=n) + np.bincount(self.v, weights=w, minlength=n)
        return (off + sparse.diags(deg)).tocsr()

    def components(self) -> np.ndarray:
        adj = sparse.coo_matrix((np.ones(self.n_edges), (self.u, self.v)),
                                shape=(self.n_nodes, self.n_nodes))
        _, labels = csgraph.connected_components(adj, directed=False)
        return labels.astype(np.int64)


def flow_graph_from_edges(n_nodes: int, source, target, value) -> FlowGraph:
    """Build a :class:`FlowGraph` from directed edges ``source -> target`` carrying ``value``."""
    source = np.asarray(source, dtype=np.int64)
    target = np.asarray(target, dtype=np.int64)
    value = np.asarray(value, dtype=np.float64)
    if np.any(source == target):
        raise ValueError("self-loops carry no net flow and are not allowed")
    if np.any(value < 0):
        raise ValueError("flows must be non-negative")
    lo = np.minimum(source, target)
    hi = np.maximum(source, target)
    sign = np.where(source < target, 1.0, -1.0)
    keys, inv = np.unique(lo * n_nodes + hi, return_inverse=True)
    inv = inv.ravel()
    net = np.bincount(inv, weights=sign * value, minlength=len(keys))
    weight = np.bincount(inv, minlength=len(keys)).astype(np.float64)
    if np.any(weight > 2):
        raise ValueError("duplicate directed edges")
    return FlowGraph(n_nodes, keys // n_nodes, keys % n_nodes, weight, net)


def build_flow_graph(net: Network) -> FlowGraph:
    """Net flows of a supply-chain network; goods flow from supplier to customer."""
    return flow_graph_from_edges(net.n_firms, net.supplier, net.customer, net.flow)


def _center(phi: np.ndarray, comp: np.ndarray) -> np.ndarray:
    n_comp = int(comp.max()) + 1 if len(comp) else 0
    sums = np.bincount(comp, weights=phi, minlength=n_comp)
    sizes = np.bincount(comp, minlength=n_comp)
    return phi - (sums / sizes)[comp]


def _prune_leaves(fg: FlowGraph, b: np.ndarray):
    """Eliminate degree-one nodes repeatedly, folding their divergence into the neighbour.

    A leaf ``i`` attached to ``j`` by weight ``w`` satisfies
    ``w (phi_i - phi_j) = b_i`` exactly, so it can be removed and ``b_i``
    added to ``b_j``. Returns ``(alive, b_core, eliminated)`` where
    ``eliminated`` lists ``(i, j, b_i / w)`` in removal order.
    """
    n = fg.n_nodes
    adj = sparse.coo_matrix((np.concatenate([fg.weight, fg.weight]),
                             (np.concatenate([fg.u, fg.v]), np.concatenate([fg.v, fg.u]))),
                            shape=(n, n)).tocsr()
    indptr, indices, data = adj.indptr.tolist(), adj.indices.tolist(), adj.data.tolist()
    deg = np.diff(adj.indptr).tolist()
    alive = [True] * n
    rhs = b.tolist()
    stack = [i for i in range(n) if deg[i] == 1]
    eliminated = []
    while stack:
        i = stack.pop()
        if not alive[i] or deg[i] != 1:
            continue
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if alive[j]:
                break
        alive[i] = False
        deg[i] = 0
        eliminated.append((i, j, rhs[i] / data[k]))
        rhs[j] += rhs[i]
        deg[j] -= 1
        if deg[j] == 1:
            stack.append(j)
    return np.array(alive, dtype=bool), np.array(rhs), eliminated


def _pcg(lap: sparse.csr_matrix, b: np.ndarray, target: float, max_iter: int
         ) -> tuple[np.ndarray, int]:
    """Jacobi-preconditioned conjugate gradients until ``max|r| <= target``."""
    n = len(b)
    diag = lap.diagonal()
    inv_diag = np.divide(1.0, diag, out=np.zeros(n), where=diag > 0)
    x = np.zeros(n)
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    it = 0
    res = float(np.max(np.abs(r), initial=0.0))
    while res > target:
        if it >= max_iter:
            raise ConvergenceError(res, it)
        q = lap @ p
        pq = float(p @ q)
        if pq <= 0:
            break
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        it += 1
        if it % 50 == 0:
            r = b - lap @ x
        res = float(np.max(np.abs(r)))
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, it


def solve_potentials(fg: FlowGraph, tol: float = DEFAULT_TOL, max_iter: int | None = None
                     ) -> tuple[np.ndarray, dict]:
    """Solve ``L phi = div F`` by leaf elimination plus Jacobi-preconditioned CG.

    Tree-like parts are solved exactly by peeling degree-one nodes; conjugate
    gradients handle the remaining core. Converged when the residual infinity
    norm is at most ``tol * max|F|``. The returned potentials have zero mean
    within every weakly connected component. Returns ``(phi, info)`` with
    ``info`` holding ``iterations``, ``residual`` (absolute), ``scale`` and
    ``core_nodes``.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` iterations (default ``max(100, 10 * sqrt(n))``) do not suffice.
    """
    n = fg.n_nodes
    if n == 0:
        raise ValueError("empty flow graph")
    comp = fg.components()
    scale = float(np.max(np.abs(fg.net_flow))) if fg.n_edges else 0.0
    if scale == 0.0:
        return np.zeros(n), {"iterations": 0, "residual": 0.0, "scale": 0.0, "components": comp,
                             "core_nodes": 0}
    if max_iter is None:
        max_iter = max(100, int(math.ceil(10 * math.sqrt(n))))
    target = tol * scale

    lap = fg.laplacian()
    b = fg.divergence()
    alive, rhs, eliminated = _prune_leaves(fg, b)
    core = np.flatnonzero(alive)
    x = np.zeros(n)
    it = 0
    if len(core):
        core_lap = lap[core][:, core]
        # the core Laplacian loses the weight of every pruned neighbour
        core_lap = (core_lap - sparse.diags(np.asarray(core_lap.sum(axis=1)).ravel())).tocsr()
        x[core], it = _pcg(core_lap, rhs[core], target, max_iter)
    for i, j, step in reversed(eliminated):
        x[i] = x[j] + step
    x = _center(x, comp)
    res = float(np.max(np.abs(b - lap @ x)))
    if res > target:
        raise ConvergenceError(res, it)
    return x, {"iterations": it, "residual": res, "scale": scale, "components": comp,
               "core_nodes": int(len(core))}


def solve_potentials_dense(fg: FlowGraph) -> np.ndarray:
    """Direct dense solve of ``(L + sum_c 1_c 1_c^T) phi = div F``; for small graphs and tests."""
    n = fg.n_nodes
    comp = fg.components()
    lap = fg.laplacian().toarray()
    ones = (comp[:, None] == comp[None, :]).astype(np.float64)
    return np.linalg.solve(lap + ones, fg.divergence())


@dataclass
class HhdResult:
    """Potentials per node and potential/loop flow per edge of ``graph``."""

    graph: FlowGraph
    phi: np.ndarray
    pot_flow: np.ndarray
    loop_flow: np.ndarray
    component: np.ndarray
    iterations: int = 0
    residual: float = 0.0

    def link_table(self, net: Network) -> pd.DataFrame:
        """Per-link components oriented supplier -> customer."""
        fg = self.graph
        lo = np.minimum(net.supplier, net.customer)
        hi = np.maximum(net.supplier, net.customer)
        edge = np.searchsorted(fg.u * fg.n_nodes + fg.v, lo * fg.n_nodes + hi)
        sign = np.where(net.supplier < net.customer, 1.0, -1.0)
        ids = net.firms.id
        return pd.DataFrame({
            "supplier_id": ids[net.supplier],
            "customer_id": ids[net.customer],
            "f_net": sign * fg.net_flow[edge],
            "f_pot": sign * self.pot_flow[edge],
            "f_loop": sign * self.loop_flow[edge],
        })

    def node_table(self, net: Network) -> pd.DataFrame:
        return pd.DataFrame({"firm_id": net.firms.id, "phi": self.phi, "component": self.component})

    def write_csv(self, net: Network, directory: str | Path) -> None:
        directory = Path(directory)
        self.node_table(net).to_csv(directory / "hhd_nodes.csv", index=False)
        self.link_table(net).to_csv(directory / "hhd_links.csv", index=False)


def decompose_flows(fg: FlowGraph, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Potential flow ``w (phi_u - phi_v)`` and loop flow ``F - potential`` per edge."""
    pot = fg.weight * (phi[fg.u] - phi[fg.v])
    return pot, fg.net_flow - pot


def hhd(fg: FlowGraph, tol: float = DEFAULT_TOL, max_iter: int | None = None,
        dense: bool = False) -> HhdResult:
    """Full decomposition; ``dense=True`` uses the direct solver instead of CG."""
    if dense:
        phi = solve_potentials_dense(fg)
        info = {"iterations": 0, "residual": float(np.max(np.abs(
            fg.divergence() - fg.laplacian() @ phi), initial=0.0)), "components": fg.components()}
    else:
        phi, info = solve_potentials(fg, tol, max_iter)
    pot, loop = decompose_flows(fg, phi)
    return HhdResult(fg, phi, pot, loop, info["components"], info["iterations"], info["residual"])
