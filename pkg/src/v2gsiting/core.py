"""Domain types for the coupled power grid / transportation instance.

Everything here is immutable after construction. Shortest-path distances on the
transport network are computed lazily with scipy and cached on the network
object.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra

Point = tuple[float, float]


class InstanceFormatError(ValueError):
    """Raised when an instance document cannot be parsed.

    ``path`` is a JSON-pointer-like locator of the offending value.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class Bus:
    id: int
    coords: Point
    peak_load: float
    shed_penalty: float


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    reactance: float
    capacity: float


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    max_capacity: float
    unit_cost: float
    renewable_eligible: bool = True


@dataclass(frozen=True)
class TransportNetwork:
    """Undirected road network; edges are ``(node, node, length)``."""

    nodes: tuple[Point, ...]
    edges: tuple[tuple[int, int, float], ...]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @cached_property
    def adjacency(self):
        n = self.n_nodes
        if not self.edges:
            return coo_matrix((n, n)).tocsr()
        u, v, length = zip(*self.edges)
        # csgraph drops explicit zeros, so zero-length roads get a tiny weight
        w = np.maximum(np.asarray(length, dtype=float), 1e-300)
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        data = np.concatenate([w, w])
        # parallel edges: keep the shortest (coo -> csr would sum them)
        order = np.lexsort((data, cols, rows))
        r, c, d = rows[order], cols[order], data[order]
        keep = np.ones(len(r), dtype=bool)
        keep[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
        return coo_matrix((d[keep], (r[keep], c[keep])), shape=(n, n)).tocsr()

    @cached_property
    def component_labels(self) -> np.ndarray:
        _, labels = connected_components(self.adjacency, directed=False)
        return labels

    def shortest_paths_from(self, sources: Sequence[int]) -> np.ndarray:
        """Distance rows (len(sources) x n_nodes); unreachable is ``inf``."""
        dist = dijkstra(self.adjacency, directed=False, indices=list(sources))
        return np.atleast_2d(dist)

    def shortest_path(self, origin: int, destination: int) -> list[int]:
        """One shortest node path, or ``[]`` if the nodes are disconnected."""
        _, pred = dijkstra(self.adjacency, directed=False, indices=origin,
                           return_predecessors=True)
        if origin != destination and pred[destination] < 0:
            return []
        path = [destination]
        while path[-1] != origin:
            path.append(int(pred[path[-1]]))
        return path[::-1]


@dataclass(frozen=True)
class Route:
    id: int
    node_path: tuple[int, ...]
    avg_demand: float
    unmet_penalty: float
    weight: float = 1.0

    @property
    def origin(self) -> int:
        return self.node_path[0]

    @property
    def destination(self) -> int:
        return self.node_path[-1]


@dataclass(frozen=True)
class CandidateStation:
    id: int
    transport_node: int
    grid_bus: int
    fixed_cost: float
    per_battery_cost: float
    min_batteries: float
    max_batteries: float


@dataclass(frozen=True)
class InstanceParams:
    battery_power: float = 0.01
    population: int = 0
    vehicle_ratio: float = 0.78
    phev_ratio: float = 0.1
    exchange_fraction: float = 0.1
    detour_unit_cost: float = 1.0


@dataclass(frozen=True)
class Instance:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    transport: TransportNetwork
    routes: tuple[Route, ...]
    stations: tuple[CandidateStation, ...]
    params: InstanceParams = field(default_factory=InstanceParams)
    name: str = ""

    @property
    def battery_power(self) -> float:
        return self.params.battery_power

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @cached_property
    def detour_costs(self) -> np.ndarray:
        """(stations x routes) detour costs; ``nan`` marks unreachable pairs."""
        return detour_cost_matrix(self.routes, self.stations, self.transport,
                                  self.params.detour_unit_cost)

    @cached_property
    def grid_islands(self) -> np.ndarray:
        """Connected-component label per bus."""
        n = len(self.buses)
        if not self.lines:
            return np.arange(n)
        rows = [ln.from_bus for ln in self.lines]
        cols = [ln.to_bus for ln in self.lines]
        adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        _, labels = connected_components(adj, directed=False)
        return labels

    def generators_at(self, bus: int) -> list[Generator]:
        return [g for g in self.generators if g.bus == bus]


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


def _bad_number(v: float) -> bool:
    return not isinstance(v, (int, float)) or math.isnan(v)


def validate_instance(instance: Instance) -> list[Violation]:
    """Report every structural invariant the instance breaks.

    Never raises; an empty list means the instance is valid.
    """
    out: list[Violation] = []

    def bad(path: str, msg: str) -> None:
        out.append(Violation(path, msg))

    n_bus = len(instance.buses)
    bus_ids = [b.id for b in instance.buses]
    if bus_ids != list(range(n_bus)):
        bad("buses", "bus ids must be unique and dense from 0 in list order")
    for k, b in enumerate(instance.buses):
        if _bad_number(b.peak_load) or b.peak_load < 0:
            bad(f"buses[{k}].peak_load", f"must be >= 0, got {b.peak_load}")
        if _bad_number(b.shed_penalty) or b.shed_penalty < 0:
            bad(f"buses[{k}].shed_penalty", f"must be >= 0, got {b.shed_penalty}")

    valid_bus = set(bus_ids)
    for k, ln in enumerate(instance.lines):
        for end in ("from_bus", "to_bus"):
            if getattr(ln, end) not in valid_bus:
                bad(f"lines[{k}].{end}", f"unknown bus {getattr(ln, end)}")
        if ln.from_bus == ln.to_bus:
            bad(f"lines[{k}]", "from_bus equals to_bus")
        if _bad_number(ln.reactance) or ln.reactance <= 0:
            bad(f"lines[{k}].reactance", f"must be > 0, got {ln.reactance}")
        if _bad_number(ln.capacity) or ln.capacity <= 0:
            bad(f"lines[{k}].capacity", f"must be > 0, got {ln.capacity}")

    if [g.id for g in instance.generators] != list(range(len(instance.generators))):
        bad("generators", "generator ids must be unique and dense from 0 in list order")
    for k, g in enumerate(instance.generators):
        if g.bus not in valid_bus:
            bad(f"generators[{k}].bus", f"unknown bus {g.bus}")
        if _bad_number(g.max_capacity) or g.max_capacity < 0:
            bad(f"generators[{k}].max_capacity", f"must be >= 0, got {g.max_capacity}")
        if _bad_number(g.unit_cost) or g.unit_cost < 0:
            bad(f"generators[{k}].unit_cost", f"must be >= 0, got {g.unit_cost}")

    tn = instance.transport
    n_nodes = tn.n_nodes
    edge_set = set()
    for k, (u, v, length) in enumerate(tn.edges):
        if not (0 <= u < n_nodes and 0 <= v < n_nodes):
            bad(f"transport.edges[{k}]", f"endpoint out of range ({u}, {v})")
        if _bad_number(length) or length < 0:
            bad(f"transport.edges[{k}]", f"length must be >= 0, got {length}")
        edge_set.add((u, v))
        edge_set.add((v, u))

    if [r.id for r in instance.routes] != list(range(len(instance.routes))):
        bad("routes", "route ids must be unique and dense from 0 in list order")
    for k, r in enumerate(instance.routes):
        path = r.node_path
        if not path:
            bad(f"routes[{k}].node_path", "empty path")
        elif any(not (0 <= n < n_nodes) for n in path):
            bad(f"routes[{k}].node_path", "node out of range")
        else:
            if len(set(path)) != len(path):
                bad(f"routes[{k}].node_path", "path is not simple")
            for a, b in zip(path, path[1:]):
                if (a, b) not in edge_set:
                    bad(f"routes[{k}].node_path", f"no edge between {a} and {b}")
                    break
        if _bad_number(r.avg_demand) or r.avg_demand < 0:
            bad(f"routes[{k}].avg_demand", f"must be >= 0, got {r.avg_demand}")
        if _bad_number(r.unmet_penalty) or r.unmet_penalty < 0:
            bad(f"routes[{k}].unmet_penalty", f"must be >= 0, got {r.unmet_penalty}")
        if _bad_number(r.weight) or r.weight < 0:
            bad(f"routes[{k}].weight", f"must be >= 0, got {r.weight}")

    if [s.id for s in instance.stations] != list(range(len(instance.stations))):
        bad("stations", "station ids must be unique and dense from 0 in list order")
    for k, s in enumerate(instance.stations):
        if s.grid_bus not in valid_bus:
            bad(f"stations[{k}].grid_bus", f"unknown bus {s.grid_bus}")
        if not (0 <= s.transport_node < n_nodes):
            bad(f"stations[{k}].transport_node", f"node {s.transport_node} out of range")
        if _bad_number(s.min_batteries) or s.min_batteries < 0:
            bad(f"stations[{k}].min_batteries", "must be >= 0")
        if s.min_batteries > s.max_batteries:
            bad(f"stations[{k}]", f"min_batteries {s.min_batteries} > max_batteries {s.max_batteries}")
        for attr in ("fixed_cost", "per_battery_cost"):
            v = getattr(s, attr)
            if _bad_number(v) or v < 0:
                bad(f"stations[{k}].{attr}", f"must be >= 0, got {v}")

    p = instance.params
    if _bad_number(p.battery_power) or p.battery_power <= 0:
        bad("params.battery_power", f"must be > 0, got {p.battery_power}")
    if p.population < 0:
        bad("params.population", "must be >= 0")
    for attr in ("vehicle_ratio", "phev_ratio", "exchange_fraction"):
        v = getattr(p, attr)
        if _bad_number(v) or not 0 <= v <= 1:
            bad(f"params.{attr}", f"must lie in [0, 1], got {v}")
    if _bad_number(p.detour_unit_cost) or p.detour_unit_cost < 0:
        bad("params.detour_unit_cost", "must be >= 0")
    return out


# --------------------------------------------------------------------------
# Geometry and detours
# --------------------------------------------------------------------------

def map_station_to_bus(station_point: Point, buses: Sequence[Bus]) -> int:
    """Id of the bus nearest to ``station_point`` (ties go to the lowest id)."""
    if not buses:
        raise ValueError("cannot map a station onto an empty bus list")
    px, py = station_point
    best = min(buses, key=lambda b: ((b.coords[0] - px) ** 2 + (b.coords[1] - py) ** 2, b.id))
    return best.id


def nearest_buses(points: np.ndarray, buses: Sequence[Bus]) -> np.ndarray:
    """Vectorised :func:`map_station_to_bus` for many points."""
    ordered = sorted(buses, key=lambda b: b.id)
    coords = np.array([b.coords for b in ordered], dtype=float)
    ids = np.array([b.id for b in ordered])
    pts = np.asarray(points, dtype=float)
    d2 = ((pts[:, None, 0] - coords[None, :, 0]) ** 2
          + (pts[:, None, 1] - coords[None, :, 1]) ** 2)
    return ids[np.argmin(d2, axis=1)]


def detour_cost(route: Route, station: CandidateStation, transport: TransportNetwork,
                unit_cost: float) -> float | None:
    """Extra distance a driver on ``route`` travels to visit ``station``, times
    ``unit_cost``.  Returns ``None`` when the station is unreachable."""
    o, d, s = route.origin, route.destination, station.transport_node
    dist = transport.shortest_paths_from([o, s])
    via = dist[0, s] + dist[1, d]
    direct = dist[0, d]
    if not np.isfinite(via):
        return None
    return unit_cost * max(0.0, float(via - direct))


def detour_cost_matrix(routes: Sequence[Route], stations: Sequence[CandidateStation],
                       transport: TransportNetwork, unit_cost: float) -> np.ndarray:
    out = np.full((len(stations), len(routes)), np.nan)
    if not routes or not stations:
        return out
    ends = sorted({r.origin for r in routes} | {r.destination for r in routes})
    pos = {n: k for k, n in enumerate(ends)}
    dist = transport.shortest_paths_from(ends)
    snodes = np.array([s.transport_node for s in stations])
    for j, r in enumerate(routes):
        from_o = dist[pos[r.origin]]
        from_d = dist[pos[r.destination]]
        via = from_o[snodes] + from_d[snodes]
        extra = np.maximum(0.0, via - from_o[r.destination])
        out[np.isfinite(via), j] = unit_cost * extra[np.isfinite(via)]
    return out


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------

def instance_to_dict(instance: Instance) -> dict[str, Any]:
    p = instance.params
    return {
        "name": instance.name,
        "buses": [{"id": b.id, "coords": list(b.coords), "peak_load": b.peak_load,
                   "shed_penalty": b.shed_penalty} for b in instance.buses],
        "lines": [{"from_bus": ln.from_bus, "to_bus": ln.to_bus, "reactance": ln.reactance,
                   "capacity": ln.capacity} for ln in instance.lines],
        "generators": [{"id": g.id, "bus": g.bus, "max_capacity": g.max_capacity,
                        "unit_cost": g.unit_cost, "renewable_eligible": g.renewable_eligible}
                       for g in instance.generators],
        "transport": {"nodes": [list(n) for n in instance.transport.nodes],
                      "edges": [[u, v, length] for u, v, length in instance.transport.edges]},
        "routes": [{"id": r.id, "node_path": list(r.node_path), "avg_demand": r.avg_demand,
                    "unmet_penalty": r.unmet_penalty, "weight": r.weight}
                   for r in instance.routes],
        "stations": [{"id": s.id, "transport_node": s.transport_node, "grid_bus": s.grid_bus,
                      "fixed_cost": s.fixed_cost, "per_battery_cost": s.per_battery_cost,
                      "min_batteries": s.min_batteries, "max_batteries": s.max_batteries}
                     for s in instance.stations],
        "params": {"battery_power": p.battery_power, "population": p.population,
                   "vehicle_ratio": p.vehicle_ratio, "phev_ratio": p.phev_ratio,
                   "exchange_fraction": p.exchange_fraction,
                   "detour_unit_cost": p.detour_unit_cost},
    }


class _Reader:
    """Small helper producing located errors while walking a JSON document."""

    def __init__(self, doc: Any, path: str = ""):
        self.doc = doc
        self.path = path

    def get(self, key: str, kind: type | tuple[type, ...], default: Any = ...) -> Any:
        here = f"{self.path}/{key}"
        if not isinstance(self.doc, dict):
            raise InstanceFormatError(self.path or "/", "expected an object")
        if key not in self.doc:
            if default is ...:
                raise InstanceFormatError(here, "missing field")
            return default
        v = self.doc[key]
        if kind is float:
            kind = (int, float)
        if isinstance(v, bool) and kind in ((int, float), int):
            raise InstanceFormatError(here, f"expected number, got {v!r}")
        if not isinstance(v, kind):
            raise InstanceFormatError(here, f"expected {getattr(kind, '__name__', 'number')}, got {v!r}")
        return v

    def items(self, key: str) -> Iterable["_Reader"]:
        seq = self.get(key, list)
        for k, item in enumerate(seq):
            yield _Reader(item, f"{self.path}/{key}/{k}")


def _point(v: Any, path: str) -> Point:
    if (not isinstance(v, list) or len(v) != 2
            or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v)):
        raise InstanceFormatError(path, "expected a 2-D point [x, y]")
    return (float(v[0]), float(v[1]))


def instance_from_dict(doc: dict[str, Any]) -> Instance:
    """Parse the instance JSON schema; raises :class:`InstanceFormatError`."""
    top = _Reader(doc)
    buses = tuple(Bus(id=r.get("id", int), coords=_point(r.get("coords", list), r.path + "/coords"),
                      peak_load=float(r.get("peak_load", float)),
                      shed_penalty=float(r.get("shed_penalty", float)))
                  for r in top.items("buses"))
    lines = tuple(Line(from_bus=r.get("from_bus", int), to_bus=r.get("to_bus", int),
                       reactance=float(r.get("reactance", float)),
                       capacity=float(r.get("capacity", float)))
                  for r in top.items("lines"))
    gens = tuple(Generator(id=r.get("id", int), bus=r.get("bus", int),
                           max_capacity=float(r.get("max_capacity", float)),
                           unit_cost=float(r.get("unit_cost", float)),
                           renewable_eligible=r.get("renewable_eligible", bool, True))
                 for r in top.items("generators"))
    tr = _Reader(top.get("transport", dict), "/transport")
    nodes = tuple(_point(v, f"/transport/nodes/{k}") for k, v in enumerate(tr.get("nodes", list)))
    edges = []
    for k, e in enumerate(tr.get("edges", list)):
        if (not isinstance(e, list) or len(e) != 3 or not isinstance(e[0], int)
                or not isinstance(e[1], int) or not isinstance(e[2], (int, float))):
            raise InstanceFormatError(f"/transport/edges/{k}", "expected [node, node, length]")
        edges.append((e[0], e[1], float(e[2])))
    routes = tuple(Route(id=r.get("id", int),
                         node_path=tuple(r.get("node_path", list)),
                         avg_demand=float(r.get("avg_demand", float)),
                         unmet_penalty=float(r.get("unmet_penalty", float)),
                         weight=float(r.get("weight", float, 1.0)))
                   for r in top.items("routes"))
    for k, r in enumerate(routes):
        if not all(isinstance(n, int) and not isinstance(n, bool) for n in r.node_path):
            raise InstanceFormatError(f"/routes/{k}/node_path", "expected a list of node ids")
    stations = tuple(CandidateStation(
        id=r.get("id", int), transport_node=r.get("transport_node", int),
        grid_bus=r.get("grid_bus", int), fixed_cost=float(r.get("fixed_cost", float)),
        per_battery_cost=float(r.get("per_battery_cost", float)),
        min_batteries=float(r.get("min_batteries", float)),
        max_batteries=float(r.get("max_batteries", float)))
        for r in top.items("stations"))
    pr = _Reader(top.get("params", dict, {}), "/params")
    defaults = InstanceParams()
    params = InstanceParams(
        battery_power=float(pr.get("battery_power", float, defaults.battery_power)),
        population=int(pr.get("population", float, defaults.population)),
        vehicle_ratio=float(pr.get("vehicle_ratio", float, defaults.vehicle_ratio)),
        phev_ratio=float(pr.get("phev_ratio", float, defaults.phev_ratio)),
        exchange_fraction=float(pr.get("exchange_fraction", float, defaults.exchange_fraction)),
        detour_unit_cost=float(pr.get("detour_unit_cost", float, defaults.detour_unit_cost)),
    )
    return Instance(buses=buses, lines=lines, generators=gens,
                    transport=TransportNetwork(nodes=nodes, edges=tuple(edges)),
                    routes=routes, stations=stations, params=params,
                    name=top.get("name", str, ""))


def dump_instance(instance: Instance) -> str:
    return json.dumps(instance_to_dict(instance), indent=1, sort_keys=False) + "\n"


def load_instance(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"line {exc.lineno} col {exc.colno}", exc.msg) from exc
    if not isinstance(doc, dict):
        raise InstanceFormatError("/", "expected a JSON object")
    return instance_from_dict(doc)
