"""Independent reference computations used by the tests.

Nothing in here imports the package's solver or model builder.
"""
from __future__ import annotations

import itertools
from collections import deque

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog


def enumerate_vertices_min(c, A, senses, rhs, lb, ub, tol=1e-9):
    """Minimum of ``c@x`` over the vertices of a bounded polyhedron.

    Every candidate vertex is the solution of ``n`` linearly independent
    active constraints chosen among rows and finite bounds.  Returns ``None``
    when no vertex is feasible (the box-bounded problem is then infeasible).
    """
    c = np.asarray(c, float)
    A = np.asarray(A, float).reshape(-1, len(c))
    rhs = np.asarray(rhs, float)
    n = len(c)
    normals, values = [], []
    for i in range(len(rhs)):
        if not np.any(A[i]):
            ok = {"L": 0 <= rhs[i] + tol, "G": 0 >= rhs[i] - tol, "E": abs(rhs[i]) <= tol}[senses[i]]
            if not ok:
                return None
            continue
        normals.append(A[i])
        values.append(rhs[i])
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        for bound in (lb[j], ub[j]):
            if np.isfinite(bound):
                normals.append(e)
                values.append(bound)
    normals = np.array(normals)
    values = np.array(values)
    choices = list(itertools.combinations(range(len(values)), n))
    if not choices:
        return None
    idx = np.array(choices)
    M = normals[idx]
    v = values[idx]
    det = np.linalg.det(M)
    ok = np.abs(det) > 1e-9
    if not ok.any():
        return None
    xs = np.linalg.solve(M[ok], v[ok][..., None])[..., 0]
    act = xs @ A.T
    feas = np.all(xs >= np.asarray(lb) - tol, axis=1) & np.all(xs <= np.asarray(ub) + tol, axis=1)
    for i, s in enumerate(senses):
        if s == "L":
            feas &= act[:, i] <= rhs[i] + tol
        elif s == "G":
            feas &= act[:, i] >= rhs[i] - tol
        else:
            feas &= np.abs(act[:, i] - rhs[i]) <= tol
    if not feas.any():
        return None
    return float((xs[feas] @ c).min())


def bfs_distances(n_nodes, edges, source):
    """Hop distances on an unweighted undirected graph."""
    adj = [[] for _ in range(n_nodes)]
    for u, v, *_ in edges:
        adj[u].append(v)
        adj[v].append(u)
    dist = [None] * n_nodes
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if dist[v] is None:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def recourse_lp_value(instance, scenarios, x, ge_mode=False, w=None):
    """Optimal cost of the two-stage model with siting ``x`` fixed.

    Written directly from the model equations with dense matrices and solved
    with HiGHS.  ``w`` (stock per station) is a decision unless given.
    Returns ``inf`` if infeasible.
    """
    I = len(instance.stations)
    J = len(instance.routes)
    N = len(instance.buses)
    L = len(instance.lines)
    G = len(instance.generators)
    S = len(scenarios)
    cmat = instance.detour_costs
    a = instance.params.battery_power

    # column layout: w[I], then per scenario t[I] s[I] q[J] y[I*J] alpha[L] theta[N] delta[N] beta[G]
    per = 2 * I + J + I * J + L + 2 * N + G
    ncol = I + S * per
    cost = np.zeros(ncol)
    lo = np.zeros(ncol)
    hi = np.full(ncol, np.inf)
    A_ub, b_ub, A_eq, b_eq = [], [], [], []

    for i, st in enumerate(instance.stations):
        lo[i] = st.min_batteries * x[i]
        hi[i] = st.max_batteries * x[i]
        cost[i] = st.per_battery_cost
        if w is not None:
            lo[i] = hi[i] = w[i]

    islands = _islands(N, [(l.from_bus, l.to_bus) for l in instance.lines])
    refs = {}
    for u in range(N):
        has_gen = any(g.bus == u for g in instance.generators)
        key = islands[u]
        cur = refs.get(key)
        cand = (0 if has_gen else 1, u)
        if cur is None or cand < cur:
            refs[key] = cand
    ref_buses = {u for _, u in refs.values()}

    for k, sc in enumerate(scenarios):
        p = float(sc.probability)
        base = I + k * per
        t = base + np.arange(I)
        s = base + I + np.arange(I)
        q = base + 2 * I + np.arange(J)
        y = base + 2 * I + J + np.arange(I * J).reshape(I, J)
        al = base + 2 * I + J + I * J + np.arange(L)
        th = base + 2 * I + J + I * J + L + np.arange(N)
        de = th + N
        be = base + 2 * I + J + I * J + L + 2 * N + np.arange(G)
        for i in range(I):
            for j in range(J):
                if np.isnan(cmat[i, j]):
                    hi[y[i, j]] = 0.0
                else:
                    cost[y[i, j]] = p * cmat[i, j]
        for j, r in enumerate(instance.routes):
            cost[q[j]] = 0.0 if ge_mode else p * r.unmet_penalty
        for u, b in enumerate(instance.buses):
            cost[de[u]] = p * b.shed_penalty
            hi[de[u]] = sc.bus_loads[u]
            lo[th[u]] = -np.inf
            if u in ref_buses:
                lo[th[u]] = hi[th[u]] = 0.0
        for gi in range(G):
            cost[be[gi]] = p * sc.gen_costs[gi]
            hi[be[gi]] = sc.gen_capacities[gi]
        for li, ln in enumerate(instance.lines):
            lo[al[li]] = -ln.capacity
            hi[al[li]] = ln.capacity
        for i in range(I):
            row = np.zeros(ncol)
            row[s[i]] = row[t[i]] = 1.0
            row[i] = -1.0
            A_ub.append(row)
            b_ub.append(0.0)
            row = np.zeros(ncol)
            row[y[i, :]] = 1.0
            row[t[i]] = -1.0
            A_ub.append(row)
            b_ub.append(0.0)
        for j in range(J):
            row = np.zeros(ncol)
            row[y[:, j]] = 1.0
            row[q[j]] = 1.0
            A_eq.append(row)
            b_eq.append(sc.route_demands[j])
        for u in range(N):
            row = np.zeros(ncol)
            for li, ln in enumerate(instance.lines):
                if ln.from_bus == u:
                    row[al[li]] += 1.0
                if ln.to_bus == u:
                    row[al[li]] -= 1.0
            row[de[u]] -= 1.0
            for gi, g in enumerate(instance.generators):
                if g.bus == u:
                    row[be[gi]] -= 1.0
            for i, st in enumerate(instance.stations):
                if st.grid_bus == u:
                    row[s[i]] -= a
            A_eq.append(row)
            b_eq.append(-sc.bus_loads[u])
        for li, ln in enumerate(instance.lines):
            row = np.zeros(ncol)
            row[al[li]] = 1.0
            row[th[ln.from_bus]] -= 1.0 / ln.reactance
            row[th[ln.to_bus]] += 1.0 / ln.reactance
            A_eq.append(row)
            b_eq.append(0.0)

    res = linprog(cost,
                  A_ub=sp.csr_matrix(np.array(A_ub)) if A_ub else None, b_ub=b_ub or None,
                  A_eq=sp.csr_matrix(np.array(A_eq)) if A_eq else None, b_eq=b_eq or None,
                  bounds=list(zip(lo, hi)), method="highs")
    if res.status == 2:
        return np.inf
    assert res.status == 0, res.message
    first = sum(st.fixed_cost * x[i] for i, st in enumerate(instance.stations))
    return float(res.fun + first)


def _islands(n, edges):
    parent = list(range(n))

    def find(u):
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    for u, v in edges:
        parent[find(u)] = find(v)
    return [find(u) for u in range(n)]


def enumerate_sitings(instance, scenarios, ge_mode=False, budget=None):
    """Best objective over all 0/1 siting vectors (LP recourse for each)."""
    I = len(instance.stations)
    best = np.inf
    best_x = None
    for bits in itertools.product((0, 1), repeat=I):
        if budget is not None and sum(bits) > budget:
            continue
        val = recourse_lp_value(instance, scenarios, bits, ge_mode=ge_mode)
        if val < best - 1e-12:
            best, best_x = val, bits
    return best, best_x
