"""Small hand-sized instances for tests, demos and oracle comparisons."""
from __future__ import annotations

import numpy as np

from .core import (Bus, CandidateStation, Generator, Instance, InstanceParams, Line, Route,
                   TransportNetwork, nearest_buses)

TOY_NAMES = ("triangle", "ring4", "mesh5")


def lattice(rows: int, cols: int, spacing: float = 1.0) -> TransportNetwork:
    """``rows x cols`` grid graph; node ``r * cols + c`` sits at ``(c, r) * spacing``."""
    nodes = tuple((c * spacing, r * spacing) for r in range(rows) for c in range(cols))
    edges = []
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            if c + 1 < cols:
                edges.append((k, k + 1, spacing))
            if r + 1 < rows:
                edges.append((k, k + cols, spacing))
    return TransportNetwork(nodes=nodes, edges=tuple(edges))


def _route(transport: TransportNetwork, rid: int, o: int, d: int, demand: float,
           penalty: float) -> Route:
    return Route(id=rid, node_path=tuple(transport.shortest_path(o, d)), avg_demand=demand,
                 unmet_penalty=penalty)


def toy_instance(name: str = "triangle") -> Instance:
    if name == "triangle":
        buses = (Bus(0, (0.0, 0.0), 0.0, 500.0), Bus(1, (2.0, 0.0), 60.0, 500.0),
                 Bus(2, (1.0, 1.0), 40.0, 500.0))
        lines = (Line(0, 1, 0.1, 80.0), Line(1, 2, 0.1, 80.0), Line(0, 2, 0.1, 80.0))
        gens = (Generator(0, 0, 80.0, 10.0), Generator(1, 1, 60.0, 20.0))
        tr = lattice(2, 3)
        routes = (_route(tr, 0, 0, 2, 40.0, 50.0), _route(tr, 1, 3, 5, 30.0, 50.0))
        stations = (CandidateStation(0, 1, 0, 100.0, 1.0, 0.0, 80.0),
                    CandidateStation(1, 4, 2, 120.0, 1.0, 0.0, 80.0))
        params = InstanceParams(battery_power=0.1, detour_unit_cost=2.0)
    elif name == "ring4":
        buses = tuple(Bus(u, xy, load, 400.0) for u, (xy, load) in
                      enumerate((((0.0, 0.0), 10.0), ((3.0, 0.0), 50.0),
                                 ((3.0, 2.0), 40.0), ((0.0, 2.0), 20.0))))
        lines = (Line(0, 1, 0.2, 30.0), Line(1, 2, 0.1, 60.0), Line(2, 3, 0.2, 60.0),
                 Line(3, 0, 0.1, 60.0))
        gens = (Generator(0, 0, 70.0, 8.0), Generator(1, 0, 30.0, 25.0), Generator(2, 3, 40.0, 15.0))
        tr = lattice(3, 4)
        routes = (_route(tr, 0, 0, 3, 50.0, 40.0), _route(tr, 1, 8, 11, 35.0, 40.0))
        stations = (CandidateStation(0, 1, 0, 150.0, 0.5, 0.0, 60.0),
                    CandidateStation(1, 5, 1, 80.0, 0.5, 0.0, 60.0),
                    CandidateStation(2, 10, 2, 120.0, 0.5, 10.0, 60.0))
        params = InstanceParams(battery_power=0.2, detour_unit_cost=3.0)
    elif name == "mesh5":
        coords = ((0.0, 0.0), (2.0, 0.0), (4.0, 0.0), (1.0, 2.0), (3.0, 2.0))
        loads = (0.0, 30.0, 45.0, 25.0, 35.0)
        buses = tuple(Bus(u, coords[u], loads[u], 300.0) for u in range(5))
        lines = (Line(0, 1, 0.1, 70.0), Line(1, 2, 0.1, 40.0), Line(0, 3, 0.15, 50.0),
                 Line(3, 4, 0.1, 40.0), Line(1, 4, 0.2, 40.0), Line(2, 4, 0.1, 50.0))
        gens = (Generator(0, 0, 100.0, 12.0), Generator(1, 2, 40.0, 20.0),
                Generator(2, 4, 30.0, 18.0))
        tr = lattice(3, 5)
        routes = (_route(tr, 0, 0, 4, 30.0, 60.0), _route(tr, 1, 10, 14, 25.0, 60.0),
                  _route(tr, 2, 2, 12, 20.0, 60.0))
        stations = (CandidateStation(0, 2, 1, 90.0, 0.4, 0.0, 50.0),
                    CandidateStation(1, 6, 3, 70.0, 0.4, 0.0, 50.0),
                    CandidateStation(2, 8, 4, 110.0, 0.4, 0.0, 50.0),
                    CandidateStation(3, 13, 4, 60.0, 0.4, 0.0, 50.0))
        params = InstanceParams(battery_power=0.25, detour_unit_cost=2.5)
    else:
        raise ValueError(f"unknown toy {name!r}; choose from {TOY_NAMES}")
    return Instance(buses=buses, lines=lines, generators=gens, transport=tr, routes=routes,
                    stations=stations, params=params, name=name)


def random_tiny_instance(seed: int, max_buses: int = 5, max_lines: int = 6,
                         max_stations: int = 4, max_routes: int = 3) -> Instance:
    """Random connected instance within the given size caps."""
    rng = np.random.default_rng(seed)
    n_bus = int(rng.integers(2, max_buses + 1))
    coords = rng.uniform(0, 4, size=(n_bus, 2))
    # spanning tree first, then extra lines up to the cap
    pairs = [(int(rng.integers(0, u)), u) for u in range(1, n_bus)]
    others = [(u, v) for u in range(n_bus) for v in range(u + 1, n_bus) if (u, v) not in pairs]
    n_extra = min(len(others), int(rng.integers(0, max_lines - len(pairs) + 1)))
    for k in rng.permutation(len(others))[:n_extra]:
        pairs.append(others[k])
    lines = tuple(Line(u, v, float(rng.uniform(0.05, 0.3)), float(rng.uniform(20, 80)))
                  for u, v in pairs)
    loads = rng.uniform(0, 40, size=n_bus)
    buses = tuple(Bus(u, tuple(map(float, coords[u])), float(loads[u]),
                      float(rng.uniform(200, 400))) for u in range(n_bus))
    n_gen = int(rng.integers(1, n_bus + 1))
    gens = tuple(Generator(g, int(rng.integers(0, n_bus)), float(rng.uniform(20, 80)),
                           float(rng.uniform(5, 30))) for g in range(n_gen))
    tr = lattice(3, 4, spacing=4 / 3)
    n_st = int(rng.integers(1, max_stations + 1))
    nodes = rng.choice(tr.n_nodes, size=n_st, replace=False)
    grid_bus = nearest_buses(np.array([tr.nodes[k] for k in nodes]), buses)
    stations = tuple(CandidateStation(i, int(nodes[i]), int(grid_bus[i]),
                                      float(rng.uniform(20, 150)), float(rng.uniform(0.1, 1.0)),
                                      float(rng.choice([0.0, 5.0])), float(rng.uniform(20, 60)))
                     for i in range(n_st))
    n_rt = int(rng.integers(1, max_routes + 1))
    routes = []
    for j in range(n_rt):
        o, d = rng.choice(tr.n_nodes, size=2, replace=False)
        routes.append(Route(j, tuple(tr.shortest_path(int(o), int(d))),
                            float(rng.uniform(5, 40)), float(rng.uniform(10, 60))))
    params = InstanceParams(battery_power=float(rng.uniform(0.05, 0.5)),
                            detour_unit_cost=float(rng.uniform(0.5, 3)))
    return Instance(buses=buses, lines=lines, generators=gens, transport=tr, routes=tuple(routes),
                    stations=stations, params=params, name=f"tiny-{seed}")
