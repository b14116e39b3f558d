"""Seeded generators for the two case-study shaped instances.

``generate_rts_like_instance`` adapts the public IEEE RTS-79 24-bus system:
one extra bus (25) is spliced into the double 15-21 corridor and the double
18-21 circuit is merged, giving 25 buses and 38 lines; a 155 MW unit sits at
bus 25; unit capacities are scaled so they total 2999 MW and peak loads total
2880 MW.  The transport side is an 8 x 11 unit lattice.

``generate_miami_like_instance`` is a purely synthetic surrogate matched to
target summary statistics only (bus/line counts, MW totals, candidate and
route counts, population).  It is not derived from any real city data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import minimum_spanning_tree, shortest_path
from scipy.sparse.linalg import spsolve

from .core import (Bus, CandidateStation, Generator, Instance, InstanceParams, Line, Route,
                   TransportNetwork, nearest_buses)
from .scenarios import allocate_route_demands, total_battery_demand
from .toys import lattice

RTS_POPULATION = 344_850
MIAMI_POPULATION = 5_414_712


@dataclass(frozen=True)
class InstanceKnobs:
    """Economic parameters that the generators cannot infer from topology.

    ``shed_penalty_factor`` multiplies the most expensive generator's unit
    cost; ``max_stock_fraction`` caps each station at that share of the
    expected total battery demand.
    """
    battery_power: float = 0.01
    fixed_cost: float = 2000.0
    per_battery_cost: float = 1.0
    unmet_penalty: float = 100.0
    detour_unit_cost: float = 2.0
    shed_penalty_factor: float = 10.0
    min_batteries: float = 0.0
    max_stock_fraction: float = 0.2
    line_capacity_scale: float = 1.0
    vehicle_ratio: float = 0.78
    phev_ratio: float = 0.1
    exchange_fraction: float = 0.1
    include_exchange_fraction: bool = True


# (from, to, reactance p.u., rating MW), 1-based RTS bus numbers
_RTS_BRANCHES = (
    (1, 2, 0.0139, 175), (1, 3, 0.2112, 175), (1, 5, 0.0845, 175), (2, 4, 0.1267, 175),
    (2, 6, 0.1920, 175), (3, 9, 0.1190, 175), (3, 24, 0.0839, 400), (4, 9, 0.1037, 175),
    (5, 10, 0.0883, 175), (6, 10, 0.0605, 175), (7, 8, 0.0614, 175), (8, 9, 0.1651, 175),
    (8, 10, 0.1651, 175), (9, 11, 0.0839, 400), (9, 12, 0.0839, 400), (10, 11, 0.0839, 400),
    (10, 12, 0.0839, 400), (11, 13, 0.0476, 500), (11, 14, 0.0418, 500), (12, 13, 0.0476, 500),
    (12, 23, 0.0966, 500), (13, 23, 0.0865, 500), (14, 16, 0.0389, 500), (15, 16, 0.0173, 500),
    (15, 21, 0.0490, 500), (15, 24, 0.0519, 500), (16, 17, 0.0259, 500), (16, 19, 0.0231, 500),
    (17, 18, 0.0144, 500), (17, 22, 0.1053, 500), (18, 21, 0.0259, 500), (19, 20, 0.0396, 500),
    (19, 20, 0.0396, 500), (20, 23, 0.0216, 500), (20, 23, 0.0216, 500), (21, 22, 0.0678, 500),
    # second 15-21 circuit rerouted through bus 25
    (15, 25, 0.0245, 500), (25, 21, 0.0245, 500),
)

_RTS_LOADS = {1: 108, 2: 97, 3: 180, 4: 74, 5: 71, 6: 136, 7: 125, 8: 171, 9: 175, 10: 195,
              13: 265, 14: 194, 15: 317, 16: 100, 18: 333, 19: 181, 20: 128}
# top-up spread over otherwise unloaded transmission buses (2850 -> 2880 MW)
_RTS_EXTRA_LOAD_BUSES = (11, 12, 17, 21, 22, 23, 24)

# (bus, MW, unit cost per MWh) by unit type
_U20, _U76, _U100, _U197, _U12 = (20, 100.0), (76, 13.0), (100, 40.0), (197, 45.0), (12, 56.0)
_U155, _U400, _U50, _U350 = (155, 15.0), (400, 6.0), (50, 1.0), (350, 17.0)
_RTS_UNITS = (
    [(1, *u) for u in (_U20, _U20, _U76, _U76)]
    + [(2, *u) for u in (_U20, _U20, _U76, _U76)]
    + [(7, *_U100)] * 3 + [(13, *_U197)] * 3
    + [(15, *_U12)] * 5 + [(15, *_U155)] + [(16, *_U155)]
    + [(18, *_U400)] + [(21, *_U400)] + [(22, *_U50)] * 6
    + [(23, *_U155)] * 2 + [(23, *_U350)] + [(25, *_U155)]
)

RTS_TOTAL_CAPACITY = 2999.0
RTS_TOTAL_LOAD = 2880.0


def _scale_exact(values: np.ndarray, total: float) -> np.ndarray:
    """Scale to ``total``; the largest entry absorbs floating-point residue."""
    out = values * (total / values.sum())
    k = int(np.argmax(out))
    out[k] = total - (out.sum() - out[k])
    return out


def _classical_mds(dist: np.ndarray) -> np.ndarray:
    n = len(dist)
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ (dist ** 2) @ J
    vals, vecs = np.linalg.eigh(B)
    top = np.argsort(vals)[::-1][:2]
    pts = vecs[:, top] * np.sqrt(np.maximum(vals[top], 0.0))
    # eigenvector sign is arbitrary; pin it so coordinates are reproducible
    for k in range(2):
        if pts[np.argmax(np.abs(pts[:, k])), k] < 0:
            pts[:, k] = -pts[:, k]
    return pts


def _fit_box(pts: np.ndarray, width: float, height: float) -> np.ndarray:
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    return (pts - lo) / span * np.array([width, height])


def _stations(transport: TransportNetwork, nodes: np.ndarray, buses, knobs: InstanceKnobs,
              max_stock: float) -> tuple[CandidateStation, ...]:
    pts = np.array([transport.nodes[k] for k in nodes])
    bus_of = nearest_buses(pts, buses)
    return tuple(CandidateStation(id=i, transport_node=int(n), grid_bus=int(bus_of[i]),
                                  fixed_cost=knobs.fixed_cost,
                                  per_battery_cost=knobs.per_battery_cost,
                                  min_batteries=knobs.min_batteries, max_batteries=max_stock)
                 for i, n in enumerate(nodes))


def _random_routes(transport: TransportNetwork, n_routes: int, rng: np.random.Generator,
                   penalty: float, min_hops: int) -> list[Route]:
    routes = []
    while len(routes) < n_routes:
        o, d = (int(v) for v in rng.choice(transport.n_nodes, size=2, replace=False))
        path = transport.shortest_path(o, d)
        if len(path) - 1 < min_hops:
            continue
        routes.append(Route(id=len(routes), node_path=tuple(path), avg_demand=0.0,
                            unmet_penalty=penalty))
    return routes


def _with_demands(routes: list[Route], total: int) -> tuple[Route, ...]:
    demands = allocate_route_demands(total, routes)
    return tuple(replace(r, avg_demand=float(d)) for r, d in zip(routes, demands))


def _params(knobs: InstanceKnobs, population: int) -> InstanceParams:
    return InstanceParams(battery_power=knobs.battery_power, population=population,
                          vehicle_ratio=knobs.vehicle_ratio, phev_ratio=knobs.phev_ratio,
                          exchange_fraction=knobs.exchange_fraction,
                          detour_unit_cost=knobs.detour_unit_cost)


def _battery_total(knobs: InstanceKnobs, population: int) -> int:
    return total_battery_demand(population, knobs.vehicle_ratio, knobs.phev_ratio,
                                knobs.exchange_fraction,
                                include_exchange_fraction=knobs.include_exchange_fraction)


def generate_rts_like_instance(seed: int = 0, knobs: InstanceKnobs | None = None,
                               n_candidates: int = 28, n_routes: int = 10) -> Instance:
    """25-bus / 38-line grid on an 8 x 11 lattice city with seeded stations and routes."""
    knobs = knobs or InstanceKnobs()
    rng = np.random.default_rng(seed)
    n_bus = 25

    lines_raw = [(f - 1, t - 1, x, cap) for f, t, x, cap in _RTS_BRANCHES]
    lines = tuple(Line(f, t, x, cap * knobs.line_capacity_scale) for f, t, x, cap in lines_raw)

    peak = np.zeros(n_bus)
    for b, mw in _RTS_LOADS.items():
        peak[b - 1] = mw
    extra = (RTS_TOTAL_LOAD - peak.sum()) / len(_RTS_EXTRA_LOAD_BUSES)
    for b in _RTS_EXTRA_LOAD_BUSES:
        peak[b - 1] += extra

    caps = _scale_exact(np.array([u[1] for u in _RTS_UNITS], dtype=float), RTS_TOTAL_CAPACITY)
    gens = tuple(Generator(id=g, bus=u[0] - 1, max_capacity=float(caps[g]), unit_cost=u[2])
                 for g, u in enumerate(_RTS_UNITS))
    shed = knobs.shed_penalty_factor * max(g.unit_cost for g in gens)

    # bus coordinates: 2-D embedding of hop distances, stretched over the lattice
    adj = sp.coo_matrix((np.ones(len(lines_raw)), ([l[0] for l in lines_raw],
                                                   [l[1] for l in lines_raw])),
                        shape=(n_bus, n_bus))
    hops = shortest_path(adj, directed=False, unweighted=True)
    rows, cols = 8, 11
    coords = _fit_box(_classical_mds(hops), cols - 1, rows - 1)
    buses = tuple(Bus(id=u, coords=(float(coords[u, 0]), float(coords[u, 1])),
                      peak_load=float(peak[u]), shed_penalty=shed) for u in range(n_bus))

    transport = lattice(rows, cols)
    total = _battery_total(knobs, RTS_POPULATION)
    max_stock = float(math.ceil(knobs.max_stock_fraction * total))
    nodes = rng.choice(transport.n_nodes, size=n_candidates, replace=False)
    stations = _stations(transport, nodes, buses, knobs, max_stock)
    routes = _with_demands(_random_routes(transport, n_routes, rng, knobs.unmet_penalty, 4), total)
    return Instance(buses=buses, lines=lines, generators=gens, transport=transport, routes=routes,
                    stations=stations, params=_params(knobs, RTS_POPULATION),
                    name=f"rts-like-{seed}")


def _grid_lattice(rows: int, cols: int, rng: np.random.Generator) -> TransportNetwork:
    """Lattice with jittered edge lengths (street lengths vary)."""
    base = lattice(rows, cols)
    edges = tuple((u, v, float(rng.uniform(0.8, 1.2))) for u, v, _ in base.edges)
    return TransportNetwork(nodes=base.nodes, edges=edges)


def generate_miami_like_instance(seed: int = 0, knobs: InstanceKnobs | None = None,
                                 n_buses: int = 200, n_lines: int = 275,
                                 total_load: float = 6400.0, total_capacity: float = 8200.0,
                                 n_candidates: int = 316, n_routes: int = 100,
                                 n_generators: int = 60, city_size: int = 36,
                                 flow_margin: float = 1.5) -> Instance:
    """Statistics-matched synthetic surrogate of a large metropolitan case."""
    knobs = knobs or InstanceKnobs()
    rng = np.random.default_rng(seed)
    n_bus = n_buses
    pts = rng.uniform(0, city_size - 1, size=(n_bus, 2))

    # lines: minimum spanning tree plus the shortest remaining pairs
    d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    mst = minimum_spanning_tree(sp.csr_matrix(np.triu(d, 1))).tocoo()
    pairs = {(min(u, v), max(u, v)) for u, v in zip(mst.row.tolist(), mst.col.tolist())}
    iu, ju = np.triu_indices(n_bus, 1)
    for k in np.argsort(d[iu, ju], kind="stable"):
        if len(pairs) >= n_lines:
            break
        pairs.add((int(iu[k]), int(ju[k])))
    pairs = sorted(pairs)
    react = np.array([0.01 * max(d[u, v], 0.1) for u, v in pairs])

    load_w = rng.uniform(0.2, 1.0, size=n_bus) * (rng.uniform(size=n_bus) < 0.8)
    peak = _scale_exact(load_w, total_load)
    gen_bus = np.sort(rng.choice(n_bus, size=n_generators, replace=True))
    # no more than six units on one bus
    for b in np.unique(gen_bus):
        extra = np.flatnonzero(gen_bus == b)[6:]
        gen_bus[extra] = rng.choice(np.setdiff1d(np.arange(n_bus), gen_bus), size=len(extra),
                                    replace=False)
    caps = _scale_exact(rng.uniform(50, 400, size=n_generators), total_capacity)
    costs = np.round(rng.uniform(5, 60, size=n_generators), 2)
    gens = tuple(Generator(id=g, bus=int(gen_bus[g]), max_capacity=float(caps[g]),
                           unit_cost=float(costs[g])) for g in range(n_generators))

    # line ratings from a proportional-dispatch DC flow at peak load
    inj = -peak.copy()
    np.add.at(inj, gen_bus, caps * (total_load / total_capacity))
    f_idx = np.array([p[0] for p in pairs])
    t_idx = np.array([p[1] for p in pairs])
    A = sp.csr_matrix((np.r_[np.ones(len(pairs)), -np.ones(len(pairs))],
                       (np.r_[np.arange(len(pairs)), np.arange(len(pairs))], np.r_[f_idx, t_idx])),
                      shape=(len(pairs), n_bus))
    Bmat = (A.T @ sp.diags(1.0 / react) @ A).tocsc()
    theta = np.zeros(n_bus)
    theta[1:] = spsolve(Bmat[1:, 1:], inj[1:])
    flow = (theta[f_idx] - theta[t_idx]) / react
    rating = np.maximum(100.0, np.ceil(np.abs(flow) * flow_margin))
    lines = tuple(Line(int(u), int(v), float(x), float(c) * knobs.line_capacity_scale)
                  for (u, v), x, c in zip(pairs, react, rating))

    shed = knobs.shed_penalty_factor * float(costs.max())
    buses = tuple(Bus(id=u, coords=(float(pts[u, 0]), float(pts[u, 1])),
                      peak_load=float(peak[u]), shed_penalty=shed) for u in range(n_bus))
    transport = _grid_lattice(city_size, city_size, rng)
    total = _battery_total(knobs, MIAMI_POPULATION)
    max_stock = float(math.ceil(knobs.max_stock_fraction * total))
    nodes = rng.choice(transport.n_nodes, size=n_candidates, replace=False)
    stations = _stations(transport, nodes, buses, knobs, max_stock)
    routes = _with_demands(_random_routes(transport, n_routes, rng, knobs.unmet_penalty, 10),
                           total)
    return Instance(buses=buses, lines=lines, generators=gens, transport=transport, routes=routes,
                    stations=stations, params=_params(knobs, MIAMI_POPULATION),
                    name=f"miami-like-{seed}")
