"""Cluster topology and router contraction.

Sites and routers form an undirected graph; contraction replaces every
router chain between two sites with a direct effective link whose delay is
the minimal path delay (edge delays plus intermediate router delays) and
whose bandwidth is the bottleneck edge bandwidth along that path. Sites
never relay traffic.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

Id = int | str  # site/router/fragment identifier: integer or lowercase symbol

INFINITE = math.inf


class TopologyError(Exception):
    """Invalid topology description."""


class MissingLinkError(LookupError):
    """Cost lookup between sites with no effective link (disconnected)."""


@dataclass(frozen=True)
class NetworkElement:
    id: Id
    kind: str  # "site" | "router"
    delay: float = 0.0
    bandwidth: float = INFINITE


@dataclass(frozen=True)
class Edge:
    endpoints: tuple[Id, Id]
    delay: float
    bandwidth: float = INFINITE


@dataclass
class NetworkGraph:
    sites: dict[Id, NetworkElement]
    routers: dict[Id, NetworkElement]
    edges: list[Edge]
    # adjacency: element id -> [(neighbor id, edge)]
    neighbors: dict[Id, list[tuple[Id, Edge]]] = field(default_factory=dict)

    def element(self, element_id: Id) -> NetworkElement:
        if element_id in self.sites:
            return self.sites[element_id]
        return self.routers[element_id]


@dataclass(frozen=True)
class EffectiveLink:
    src: Id
    dst: Id
    delay: float
    bandwidth: float


class LinkTable:
    """Effective links for every reachable ordered site pair, (i, i) included."""

    def __init__(self, links: dict[tuple[Id, Id], EffectiveLink]):
        self._links = links

    def get(self, src: Id, dst: Id) -> EffectiveLink:
        link = self._links.get((src, dst))
        if link is None:
            raise MissingLinkError(f"no effective link between {src!r} and {dst!r}")
        return link

    def __contains__(self, pair: tuple[Id, Id]) -> bool:
        return pair in self._links

    def pairs(self) -> list[tuple[Id, Id]]:
        return sorted(self._links, key=lambda p: (id_sort_key(p[0]), id_sort_key(p[1])))

    def items(self) -> list[tuple[tuple[Id, Id], EffectiveLink]]:
        return [(pair, self._links[pair]) for pair in self.pairs()]


def id_sort_key(element_id: Id) -> tuple:
    """Total order on ids: numbers by value first, then symbols."""
    if isinstance(element_id, bool) or not isinstance(element_id, (int, float)):
        return (1, 0, str(element_id))
    return (0, element_id, "")


def _check_number(value, what: str, allow_zero: bool, allow_inf: bool) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TopologyError(f"{what} must be a number, got {value!r}")
    value = float(value)
    if math.isnan(value):
        raise TopologyError(f"{what} must not be NaN")
    if math.isinf(value) and not allow_inf:
        raise TopologyError(f"{what} must be finite")
    if value < 0 or (value == 0 and not allow_zero):
        raise TopologyError(f"{what} must be {'>= 0' if allow_zero else '> 0'}, got {value}")
    return value


def build_graph(topology: dict) -> NetworkGraph:
    """Validate a topology description and build the graph.

    ``topology`` holds ``sites``, ``routers`` (lists of ``{id, delay?,
    bandwidth?}``) and ``edges`` (list of ``{endpoints: [a, b], delay,
    bandwidth?}``); omitted bandwidths are infinite.

    Raises:
        TopologyError: duplicate ids, unknown endpoints, self-loops,
            duplicate edges, negative delays, or non-positive bandwidths.
    """
    sites: dict[Id, NetworkElement] = {}
    routers: dict[Id, NetworkElement] = {}
    seen: set[Id] = set()

    for kind, store in (("site", sites), ("router", routers)):
        for entry in topology.get(f"{kind}s", []):
            if not isinstance(entry, dict):
                entry = {"id": entry}
            element_id = entry.get("id")
            if element_id is None:
                raise TopologyError(f"{kind} entry missing id: {entry!r}")
            if element_id in seen:
                raise TopologyError(f"duplicate id {element_id!r}")
            seen.add(element_id)
            delay = _check_number(entry.get("delay", 0), f"{kind} {element_id!r} delay",
                                  allow_zero=True, allow_inf=False)
            bandwidth = _check_number(entry.get("bandwidth", INFINITE),
                                      f"{kind} {element_id!r} bandwidth",
                                      allow_zero=False, allow_inf=True)
            store[element_id] = NetworkElement(element_id, kind, delay, bandwidth)

    if not sites:
        raise TopologyError("topology needs at least one site")

    edges: list[Edge] = []
    edge_pairs: set[frozenset] = set()
    for entry in topology.get("edges", []):
        endpoints = entry.get("endpoints")
        if not isinstance(endpoints, (list, tuple)) or len(endpoints) != 2:
            raise TopologyError(f"edge endpoints must be a pair: {entry!r}")
        a, b = endpoints
        for endpoint in (a, b):
            if endpoint not in seen:
                raise TopologyError(f"unknown endpoint {endpoint!r}")
        if a == b:
            raise TopologyError(f"self-loop on {a!r}")
        pair = frozenset((a, b))
        if pair in edge_pairs:
            raise TopologyError(f"duplicate edge between {a!r} and {b!r}")
        edge_pairs.add(pair)
        if "delay" not in entry:
            raise TopologyError(f"edge {a!r}-{b!r} missing delay")
        delay = _check_number(entry["delay"], f"edge {a!r}-{b!r} delay",
                              allow_zero=True, allow_inf=False)
        bandwidth = _check_number(entry.get("bandwidth", INFINITE),
                                  f"edge {a!r}-{b!r} bandwidth",
                                  allow_zero=False, allow_inf=True)
        edges.append(Edge((a, b), delay, bandwidth))

    neighbors: dict[Id, list[tuple[Id, Edge]]] = {eid: [] for eid in seen}
    for edge in edges:
        a, b = edge.endpoints
        neighbors[a].append((b, edge))
        neighbors[b].append((a, edge))
    for lst in neighbors.values():
        lst.sort(key=lambda pair: id_sort_key(pair[0]))

    return NetworkGraph(sites=sites, routers=routers, edges=edges, neighbors=neighbors)


def contract_routers(graph: NetworkGraph) -> LinkTable:
    """Effective site-to-site links for every reachable pair.

    Path selection minimizes total delay; ties break on the lexicographically
    smallest element-id sequence, chosen once per unordered pair (from the
    smaller endpoint) and mirrored so the table stays symmetric. Bandwidth is
    the minimum edge bandwidth along the selected path. Unreachable pairs are
    absent; (i, i) carries zero delay and infinite bandwidth.
    """
    links: dict[tuple[Id, Id], EffectiveLink] = {}
    site_ids = sorted(graph.sites, key=id_sort_key)
    for site_id in site_ids:
        links[(site_id, site_id)] = EffectiveLink(site_id, site_id, 0.0, INFINITE)

    for i, src in enumerate(site_ids):
        best = _delay_minimal_paths(graph, src)
        for dst in site_ids[i + 1:]:
            found = best.get(dst)
            if found is None:
                continue
            delay, _, path = found
            bandwidth = _path_bandwidth(graph, path)
            links[(src, dst)] = EffectiveLink(src, dst, delay, bandwidth)
            links[(dst, src)] = EffectiveLink(dst, src, delay, bandwidth)
    return LinkTable(links)


def _delay_minimal_paths(
    graph: NetworkGraph, src: Id
) -> dict[Id, tuple[float, tuple, tuple[Id, ...]]]:
    """Dijkstra from a site, relaying only through routers.

    Returns per reachable site: (delay, path id-key sequence, path ids).
    Entering a router adds its node delay; sites terminate paths.
    """
    start = (0.0, (id_sort_key(src),), (src,))
    best: dict[Id, tuple[float, tuple, tuple[Id, ...]]] = {}
    heap = [start]
    while heap:
        delay, key_seq, path = heapq.heappop(heap)
        node = path[-1]
        settled = best.get(node)
        if settled is not None and (settled[0], settled[1]) <= (delay, key_seq):
            continue
        best[node] = (delay, key_seq, path)
        if node != src and node in graph.sites:
            continue  # sites are never relay points
        for neighbor, edge in graph.neighbors.get(node, ()):
            if neighbor in path:
                continue
            step = delay + edge.delay
            if neighbor in graph.routers:
                step = step + graph.routers[neighbor].delay
            heapq.heappush(
                heap, (step, key_seq + (id_sort_key(neighbor),), path + (neighbor,))
            )
    best.pop(src, None)
    return {node: entry for node, entry in best.items() if node in graph.sites}


def _path_bandwidth(graph: NetworkGraph, path: tuple[Id, ...]) -> float:
    bandwidth = INFINITE
    for a, b in zip(path, path[1:]):
        for neighbor, edge in graph.neighbors[a]:
            if neighbor == b:
                bandwidth = min(bandwidth, edge.bandwidth)
                break
    return bandwidth


def derive_adjacency(graph: NetworkGraph) -> list[tuple[Id, Id]]:
    """Site pairs joined by a router-free single edge, sorted."""
    pairs = []
    for edge in graph.edges:
        a, b = edge.endpoints
        if a in graph.sites and b in graph.sites:
            pair = tuple(sorted((a, b), key=id_sort_key))
            pairs.append(pair)
    return sorted(set(pairs), key=lambda p: (id_sort_key(p[0]), id_sort_key(p[1])))
