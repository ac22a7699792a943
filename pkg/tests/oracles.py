"""Independent reference implementations used as test oracles.

Written with plain Python loops and dictionaries, sharing no code with the
package beyond the network's public link arrays.
"""

import numpy as np


def ration_oracle(requests, baselines, supply):
    """Serve claimants in increasing order of requested/baseline ratio; split the rest evenly by baseline."""
    m = len(requests)
    total = sum(requests)
    if supply >= total:
        return list(requests)
    ratio = [requests[k] / baselines[k] if baselines[k] > 0 else 0.0 for k in range(m)]
    order = sorted(range(m), key=lambda k: (ratio[k], k))
    out = [0.0] * m
    remaining = supply
    for pos, k in enumerate(order):
        rest_base = sum(baselines[j] for j in order[pos:])
        if ratio[k] * rest_base <= remaining:
            out[k] = ratio[k] * baselines[k]
            remaining -= out[k]
        else:
            level = remaining / rest_base
            for j in order[pos:]:
                out[j] = level * baselines[j]
            break
    return out


class StepOracle:
    """Straight-line daily model over dictionaries keyed by firm and link."""

    def __init__(self, net, target_days, tau=6.0):
        self.n = net.n_firms
        self.links = [(int(s), int(c)) for s, c in zip(net.supplier, net.customer)]
        self.A = {lk: float(v) for lk, v in zip(self.links, net.flow)}
        self.C = [float(x) for x in net.final_consumption]
        self.sector = [int(x) for x in net.sector]
        self.tau = tau
        self.n_days = [int(x) for x in target_days]
        self.p_ini = [self.C[i] + sum(self.A[(s, c)] for (s, c) in self.links if s == i)
                      for i in range(self.n)]
        self.S = {(s, c): self.n_days[c] * self.A[(s, c)] for (s, c) in self.links}
        self.d_star = list(self.p_ini)
        self.p_act = list(self.p_ini)

    def step(self, delta):
        n, A, S = self.n, self.A, self.S
        orders = {}
        for (s, c) in self.links:
            o = A[(s, c)] * self.d_star[c] / self.p_ini[c] + (self.n_days[c] * A[(s, c)] - S[(s, c)]) / self.tau
            orders[(s, c)] = max(o, 0.0)
        demand = [self.C[j] + sum(orders[(s, c)] for (s, c) in self.links if s == j) for j in range(n)]

        p_act = []
        for i in range(n):
            cap = self.p_ini[i] * (1.0 - delta[i])
            by_sector = {}
            for (s, c) in self.links:
                if c == i:
                    st, at = by_sector.get(self.sector[s], (0.0, 0.0))
                    by_sector[self.sector[s]] = (st + S[(s, c)], at + A[(s, c)])
            pro = min((st / at * self.p_ini[i] for st, at in by_sector.values()), default=float("inf"))
            p_act.append(min(cap, pro, demand[i]))

        accepted = {}
        c_acc = [0.0] * n
        for j in range(n):
            outgoing = [(s, c) for (s, c) in self.links if s == j]
            reqs = [orders[lk] for lk in outgoing] + [self.C[j]]
            bases = [A[lk] for lk in outgoing] + [self.C[j]]
            got = ration_oracle(reqs, bases, p_act[j])
            for lk, g in zip(outgoing, got[:-1]):
                accepted[lk] = g
            c_acc[j] = got[-1]
        d_star = [c_acc[j] + sum(accepted[(s, c)] for (s, c) in self.links if s == j) for j in range(n)]

        new_S = {}
        for (s, c) in self.links:
            used = A[(s, c)] * self.p_act[c] / self.p_ini[c]
            new_S[(s, c)] = max(S[(s, c)] + accepted[(s, c)] - used, 0.0)
        self.S, self.d_star, self.p_act = new_S, d_star, p_act
        return p_act

    def inventory_array(self, net):
        return np.array([self.S[(int(s), int(c))] for s, c in zip(net.supplier, net.customer)])


def hhd_lstsq(n, u, v, weight, net_flow):
    """Potentials from weighted least squares on the incidence matrix, zero mean per component."""
    m = len(u)
    B = np.zeros((m, n))
    B[np.arange(m), u] = 1.0
    B[np.arange(m), v] = -1.0
    sw = np.sqrt(weight)
    phi = np.linalg.lstsq(B * sw[:, None], net_flow / sw, rcond=None)[0]
    # components by union-find
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in zip(u, v):
        parent[find(int(a))] = find(int(b))
    roots = np.array([find(i) for i in range(n)])
    for r in np.unique(roots):
        phi[roots == r] -= phi[roots == r].mean()
    return phi


def substitutability_two_oracle(net, a, b):
    """Ratio of (customer in a, supplier outside a and b) pairs whose sector a b-supplier of that customer covers."""
    region = net.region
    sector = net.sector
    from_b = {}
    for s, c in zip(net.supplier, net.customer):
        if region[c] == a and region[s] == b:
            from_b.setdefault(int(c), set()).add(int(sector[s]))
    num = den = 0
    for s, c in zip(net.supplier, net.customer):
        if region[c] == a and region[s] not in (a, b):
            den += 1
            num += int(sector[s]) in from_b.get(int(c), set())
    return num / den if den else float("nan")


def substitutability_one_oracle(net, a):
    region = net.region
    sector = net.sector
    local = {}
    for s, c in zip(net.supplier, net.customer):
        if region[c] == a and region[s] == a:
            local.setdefault(int(c), set()).add(int(sector[s]))
    num = den = 0
    for s, c in zip(net.supplier, net.customer):
        if region[c] == a and region[s] != a:
            den += 1
            num += int(sector[s]) in local.get(int(c), set())
    return num / den if den else float("nan")
