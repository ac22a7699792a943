import numpy as np
import pytest

from sclockdown.hhd import (
    ConvergenceError,
    build_flow_graph,
    decompose_flows,
    flow_graph_from_edges,
    hhd,
    solve_potentials,
    solve_potentials_dense,
)

from conftest import make_network
from oracles import hhd_lstsq


def _random_graph(rng, n, m):
    src = rng.integers(0, n, m)
    dst = rng.integers(0, n, m)
    keep = src != dst
    pairs = np.unique(np.stack([src[keep], dst[keep]], axis=1), axis=0)
    return flow_graph_from_edges(n, pairs[:, 0], pairs[:, 1], rng.uniform(0.1, 10, len(pairs)))


class TestBuild:
    def test_single_link(self):
        fg = flow_graph_from_edges(2, [0], [1], [5.0])
        assert fg.net_flow.tolist() == [5.0] and fg.weight.tolist() == [1.0]

    def test_reverse_orientation(self):
        fg = flow_graph_from_edges(2, [1], [0], [5.0])
        assert fg.u.tolist() == [0] and fg.net_flow.tolist() == [-5.0]

    def test_reciprocal_pair(self):
        fg = flow_graph_from_edges(2, [0, 1], [1, 0], [5.0, 3.0])
        assert fg.net_flow.tolist() == [2.0] and fg.weight.tolist() == [2.0]

    def test_balanced_pair_kept(self):
        fg = flow_graph_from_edges(2, [0, 1], [1, 0], [4.0, 4.0])
        assert fg.net_flow.tolist() == [0.0] and fg.weight.tolist() == [2.0]

    def test_empty(self):
        fg = flow_graph_from_edges(3, [], [], [])
        assert fg.n_edges == 0
        phi, info = solve_potentials(fg)
        assert np.all(phi == 0) and info["iterations"] == 0

    def test_from_network(self):
        net = make_network(3, [(0, 1, 2.0), (1, 0, 0.5), (1, 2, 1.0)], [1.0, 1.0, 1.0])
        fg = build_flow_graph(net)
        assert fg.net_flow.tolist() == [1.5, 1.0]
        assert fg.weight.tolist() == [2.0, 1.0]

    def test_rejects_self_loop(self):
        with pytest.raises(ValueError):
            flow_graph_from_edges(2, [0], [0], [1.0])


class TestSolve:
    def test_chain(self):
        res = hhd(flow_graph_from_edges(3, [0, 1], [1, 2], [1.0, 1.0]))
        assert np.allclose(res.phi, [1.0, 0.0, -1.0], atol=1e-10)
        assert np.allclose(res.loop_flow, 0, atol=1e-10)

    def test_cycle(self):
        res = hhd(flow_graph_from_edges(3, [0, 1, 2], [1, 2, 0], [1.0, 1.0, 1.0]))
        assert np.allclose(res.phi, 0, atol=1e-10)
        assert np.allclose(res.pot_flow, 0, atol=1e-10)
        assert np.allclose(res.loop_flow, res.graph.net_flow)

    def test_four_node_dense(self):
        fg = flow_graph_from_edges(4, [0, 1, 0, 2], [1, 2, 2, 3], [1.0, 1.0, 1.0, 2.0])
        lap = np.array([[2, -1, -1, 0], [-1, 2, -1, 0], [-1, -1, 3, -1], [0, 0, -1, 1]], float)
        div = np.array([2.0, 0.0, 0.0, -2.0])
        want = np.linalg.solve(np.vstack([lap, np.ones(4)]).T @ np.vstack([lap, np.ones(4)]),
                               np.vstack([lap, np.ones(4)]).T @ np.append(div, 0.0))
        phi, _ = solve_potentials(fg)
        assert np.allclose(phi, want, atol=1e-9)
        assert np.allclose(solve_potentials_dense(fg), want, atol=1e-12)

    def test_isolated_node_zero(self):
        fg = flow_graph_from_edges(4, [0, 1], [1, 2], [1.0, 1.0])
        phi, _ = solve_potentials(fg)
        assert phi[3] == 0.0

    def test_per_component_gauge(self):
        fg = flow_graph_from_edges(5, [0, 1, 3], [1, 2, 4], [1.0, 3.0, 2.0])
        res = hhd(fg)
        assert abs(res.phi[:3].sum()) < 1e-12 and abs(res.phi[3:].sum()) < 1e-12
        assert np.allclose(res.phi[3:], [1.0, -1.0])

    def test_convergence_error(self):
        fg = _random_graph(np.random.default_rng(0), 300, 1500)
        with pytest.raises(ConvergenceError) as info:
            solve_potentials(fg, tol=1e-14, max_iter=2)
        assert info.value.residual > 0 and info.value.iterations == 2

    def test_empty_node_set(self):
        with pytest.raises(ValueError):
            solve_potentials(flow_graph_from_edges(0, [], [], []))


class TestProperties:
    @pytest.mark.parametrize("seed", range(6))
    def test_matches_lstsq_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 50))
        fg = _random_graph(rng, n, int(rng.integers(n, 4 * n)))
        res = hhd(fg)
        want = hhd_lstsq(n, fg.u, fg.v, fg.weight, fg.net_flow)
        assert np.allclose(res.phi, want, atol=1e-8 * np.abs(fg.net_flow).max())
        assert np.allclose(res.phi, solve_potentials_dense(fg), atol=1e-8)

    @pytest.mark.parametrize("seed", range(3))
    def test_identities_on_large_graph(self, seed):
        rng = np.random.default_rng(seed)
        fg = _random_graph(rng, 3000, 10000)
        res = hhd(fg)
        scale = np.abs(fg.net_flow).max()
        assert np.max(np.abs(fg.net_flow - res.pot_flow - res.loop_flow)) <= 1e-8 * scale
        assert np.max(np.abs(fg.divergence(res.loop_flow))) <= 1e-8 * scale
        for c in np.unique(res.component):
            members = res.component == c
            assert abs(res.phi[members].sum()) <= 1e-8 * members.sum() * max(np.abs(res.phi).max(), 1)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(4)
        fg = _random_graph(rng, 40, 120)
        big = flow_graph_from_edges(fg.n_nodes, fg.u, fg.v, np.zeros(fg.n_edges))
        big.net_flow = fg.net_flow * 7.5
        big.weight = fg.weight
        a, b = hhd(fg), hhd(big)
        assert np.allclose(b.phi, 7.5 * a.phi, rtol=1e-8, atol=1e-9)
        assert np.allclose(b.loop_flow, 7.5 * a.loop_flow, rtol=1e-8, atol=1e-8)

    def test_relabeling(self):
        rng = np.random.default_rng(5)
        n = 30
        src = rng.integers(0, n, 90)
        dst = rng.integers(0, n, 90)
        keep = src != dst
        pairs = np.unique(np.stack([src[keep], dst[keep]], axis=1), axis=0)
        val = rng.uniform(1, 5, len(pairs))
        perm = rng.permutation(n)
        a = hhd(flow_graph_from_edges(n, pairs[:, 0], pairs[:, 1], val))
        b = hhd(flow_graph_from_edges(n, perm[pairs[:, 0]], perm[pairs[:, 1]], val))
        assert np.allclose(b.phi[perm], a.phi, atol=1e-9)

    def test_decompose_definition(self):
        fg = flow_graph_from_edges(3, [0, 1, 0], [1, 2, 2], [2.0, 1.0, 4.0])
        phi = np.array([1.0, -0.5, -0.5])
        pot, loop = decompose_flows(fg, phi)
        assert np.allclose(pot, fg.weight * (phi[fg.u] - phi[fg.v]))
        assert np.allclose(pot + loop, fg.net_flow)


def test_csv_export(tmp_path):
    net = make_network(3, [(0, 1, 2.0), (2, 1, 1.0)], [1.0, 1.0, 1.0])
    res = hhd(build_flow_graph(net))
    res.write_csv(net, tmp_path)
    links = (tmp_path / "hhd_links.csv").read_text().splitlines()
    nodes = (tmp_path / "hhd_nodes.csv").read_text().splitlines()
    assert links[0] == "supplier_id,customer_id,f_net,f_pot,f_loop"
    assert nodes[0] == "firm_id,phi,component"
    table = res.link_table(net)
    assert table["f_net"].tolist() == [2.0, 1.0]
    assert np.allclose(table["f_pot"] + table["f_loop"], table["f_net"])


class TestLeafElimination:
    def test_long_path_is_exact(self):
        n = 3000
        fg = flow_graph_from_edges(n, np.arange(n - 1), np.arange(1, n), np.ones(n - 1))
        phi, info = solve_potentials(fg)
        assert info["iterations"] == 0 and info["core_nodes"] <= 1
        assert np.allclose(phi, (n - 1) / 2 - np.arange(n), atol=1e-9)

    def test_cycle_with_pendant_chain(self):
        # 3-cycle 0-1-2 with chain 2 -> 3 -> 4 hanging off it
        fg = flow_graph_from_edges(5, [0, 1, 2, 2, 3], [1, 2, 0, 3, 4], [1.0, 2.0, 1.5, 4.0, 1.0])
        phi, info = solve_potentials(fg)
        assert info["core_nodes"] == 3
        assert np.allclose(phi, solve_potentials_dense(fg), atol=1e-10)

    def test_isolated_edges(self):
        fg = flow_graph_from_edges(4, [0, 2], [1, 3], [2.0, 6.0])
        phi, _ = solve_potentials(fg)
        assert np.allclose(phi, [1.0, -1.0, 3.0, -3.0])
