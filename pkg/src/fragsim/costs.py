"""Workload parameters, transfer/aggregate cost computation, and fact emission.

Ids (sites, fragments) are integers or lowercase symbols and map onto rule
terms one to one: integers become numbers, symbols stay symbols. Fact text
uses the exact line format ``pred(a1,a2,...).`` with integer-valued numbers
printed without a decimal point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .network import Id, LinkTable, MissingLinkError, id_sort_key
from .rules import Atom, Term, atom_sort_key, format_atom

QUERY_TYPES = ("se", "up", "de")


class QueryType(str, Enum):
    SELECT = "se"
    UPDATE = "up"
    DELETE = "de"


class CostModelError(Exception):
    """Inconsistent cost-model inputs."""


@dataclass(frozen=True)
class FragmentSpec:
    """A data fragment: ``size`` in megabytes drives transfer cost, ``units``
    (size in records) drives capacity."""

    id: Id
    size: float
    units: float

    def __post_init__(self):
        if self.size <= 0:
            raise CostModelError(f"fragment {self.id!r} size must be > 0")
        if self.units <= 0:
            raise CostModelError(f"fragment {self.id!r} units must be > 0")


@dataclass
class AccessStats:
    """Per-node query counters and access frequencies.

    ``counts[(node, fragment, qtype)]`` is the cumulative number of queries of
    that type. ``req_overrides`` pins the access frequency r for a (node,
    fragment) pair; pairs without an override default to the summed counters.
    """

    counts: dict[tuple[Id, Id, str], float] = field(default_factory=dict)
    req_overrides: dict[tuple[Id, Id], float] = field(default_factory=dict)

    def record(self, node: Id, fragment: Id, qtype: str, count: float = 1) -> float:
        key = (node, fragment, str(qtype))
        self.counts[key] = self.counts.get(key, 0.0) + count
        return self.counts[key]

    def count(self, node: Id, fragment: Id, qtype: str) -> float:
        return self.counts.get((node, fragment, str(qtype)), 0.0)

    def total_freq(self, node: Id, fragment: Id) -> float:
        return sum(self.counts.get((node, fragment, k), 0.0) for k in QUERY_TYPES)

    def req(self, node: Id, fragment: Id) -> float:
        override = self.req_overrides.get((node, fragment))
        if override is not None:
            return override
        return self.total_freq(node, fragment)

    def copy(self) -> "AccessStats":
        return AccessStats(dict(self.counts), dict(self.req_overrides))


@dataclass
class CostFactors:
    """User factor, per-megabyte communication expense, and per-query
    execution weight; everything unspecified defaults to 1."""

    user_factor: dict[tuple[Id, Id], float] = field(default_factory=dict)
    other_cost: dict[tuple[Id, Id], float] = field(default_factory=dict)
    exec_weight: dict[tuple[Id, Id, str], float] = field(default_factory=dict)

    def gamma(self, i: Id, j: Id) -> float:
        return self.user_factor.get((i, j), 1.0)

    def other(self, i: Id, j: Id) -> float:
        return self.other_cost.get((i, j), 1.0)

    def weight(self, i: Id, j: Id, k: str) -> float:
        return self.exec_weight.get((i, j, str(k)), 1.0)


Placement = dict  # fragment id -> node id, total over fragments
Capacity = dict  # node id -> capacity in fragment units


def reverse_bandwidth(bandwidth: float) -> float:
    """1/bandwidth, with infinite bandwidth encoding as 0."""
    if math.isinf(bandwidth):
        return 0.0
    return 1.0 / bandwidth


def transfer_cost(
    node: Id,
    holder: Id,
    frag: FragmentSpec,
    links: LinkTable,
    factors: CostFactors,
) -> float:
    """Cost for ``node`` to access ``frag`` held at ``holder``.

    Computes user_factor * size * (1/bandwidth) * delay * other between the
    two sites, in that multiplication order (the engine's transfer-cost rule
    multiplies the same way, and the cross-check demands exact equality).
    Local access is free. Raises MissingLinkError for disconnected pairs.
    """
    if node == holder:
        return 0.0
    link = links.get(node, holder)
    return (
        factors.gamma(node, holder)
        * frag.size
        * reverse_bandwidth(link.bandwidth)
        * link.delay
        * factors.other(node, holder)
    )


def total_transmission_cost(
    placement: Placement,
    stats: AccessStats,
    links: LinkTable,
    factors: CostFactors,
    fragments: dict[Id, FragmentSpec],
) -> float:
    """Sum of r * t over every accessing node and fragment, with t evaluated
    against the fragment's current holder. Pairs with zero frequency
    contribute nothing and skip the link lookup."""
    accessed: set[tuple[Id, Id]] = set()
    for node, fragment, _ in stats.counts:
        accessed.add((node, fragment))
    for node, fragment in stats.req_overrides:
        accessed.add((node, fragment))

    total = 0.0
    for node, fragment in sorted(accessed, key=lambda p: (id_sort_key(p[0]), id_sort_key(p[1]))):
        r = stats.req(node, fragment)
        if r == 0:
            continue
        frag = fragments.get(fragment)
        if frag is None:
            raise CostModelError(f"stats reference unknown fragment {fragment!r}")
        holder = placement.get(fragment)
        if holder is None:
            raise CostModelError(f"fragment {fragment!r} is not placed")
        total += r * transfer_cost(node, holder, frag, links, factors)
    return total


def check_capacity(
    placement: Placement,
    fragments: dict[Id, FragmentSpec],
    capacities: Capacity,
) -> list[tuple[Id, float, float]]:
    """(node, load, limit) for every node whose summed fragment units exceed
    its capacity; empty means feasible."""
    loads: dict[Id, float] = {}
    for fragment, node in placement.items():
        frag = fragments.get(fragment)
        if frag is None:
            raise CostModelError(f"placement references unknown fragment {fragment!r}")
        loads[node] = loads.get(node, 0.0) + frag.units
    violations = []
    for node in sorted(loads, key=id_sort_key):
        limit = capacities.get(node)
        if limit is not None and loads[node] > limit:
            violations.append((node, loads[node], limit))
    return violations


def execution_cost(stats: AccessStats, factors: CostFactors) -> float:
    """Weighted sum of query counters (weights default to 1)."""
    total = 0.0
    for key in sorted(stats.counts, key=lambda k: (id_sort_key(k[0]), id_sort_key(k[1]), k[2])):
        node, fragment, qtype = key
        total += factors.weight(node, fragment, qtype) * stats.counts[key]
    return total


# ---------------------------------------------------------------------------
# Fact emission
# ---------------------------------------------------------------------------

#: The engine-side twin of :func:`transfer_cost`, in the rule language. Joins
#: node-pair link facts against fragment sizes, so it only derives costs when
#: fragment ids double as site ids (the classic one-fragment-per-site setup);
#: the simulator injects transfer_cost/3 facts directly instead.
TRANSFER_COST_RULE = """\
transfer_cost(I,J,T) :- user_defined_parameter(I,J,U),
                        size(J,S),
                        reverse_bandwidth(I,J,W),
                        delay(I,J,D),
                        other(I,J,O),
                        T is U*S*W*D*O.
"""


def term_for_id(value: Id) -> Term:
    """Ids map to rule terms: integers become numbers, symbols stay."""
    if isinstance(value, bool):
        raise CostModelError(f"invalid id {value!r}")
    if isinstance(value, int):
        return float(value)
    return value


def id_from_term(term: Term) -> Id:
    if isinstance(term, float):
        if term != int(term):
            raise CostModelError(f"non-integer id term {term!r}")
        return int(term)
    return term


def network_fact_atoms(
    links: LinkTable,
    factors: CostFactors,
    fragments: dict[Id, FragmentSpec],
    stats: AccessStats,
    placement: Placement,
    adjacency: list[tuple[Id, Id]],
    capacities: Capacity,
    nodes: list[Id],
) -> list[Atom]:
    """The ground atoms behind :func:`emit_network_facts`, sorted."""
    atoms: list[Atom] = []

    def _to_term(v) -> Term:
        if isinstance(v, str):
            return v
        if isinstance(v, bool):
            raise CostModelError(f"invalid term {v!r}")
        return float(v)

    def make(pred: str, *values) -> None:
        atoms.append(Atom(pred, tuple(_to_term(v) for v in values)))

    for (src, dst), link in links.items():
        if src == dst:
            continue
        make("delay", src, dst, link.delay)
        make("reverse_bandwidth", src, dst, reverse_bandwidth(link.bandwidth))
        make("other", src, dst, factors.other(src, dst))
        make("user_defined_parameter", src, dst, factors.gamma(src, dst))

    for fragment_id in sorted(fragments, key=id_sort_key):
        frag = fragments[fragment_id]
        make("size", fragment_id, frag.size)
        make("units", fragment_id, frag.units)

    for key in sorted(stats.counts, key=lambda k: (id_sort_key(k[0]), id_sort_key(k[1]), k[2])):
        node, fragment, qtype = key
        make("freq", node, fragment, qtype, stats.counts[key])

    for node in sorted(nodes, key=id_sort_key):
        for fragment_id in sorted(fragments, key=id_sort_key):
            make("req", node, fragment_id, stats.req(node, fragment_id))

    for key in sorted(factors.exec_weight,
                      key=lambda k: (id_sort_key(k[0]), id_sort_key(k[1]), k[2])):
        node, fragment, qtype = key
        make("exec_weight", node, fragment, qtype, factors.exec_weight[key])

    for fragment_id in sorted(placement, key=id_sort_key):
        make("placed", fragment_id, placement[fragment_id])

    for a, b in adjacency:
        make("adjacent", a, b)
        make("adjacent", b, a)

    for node in sorted(capacities, key=id_sort_key):
        make("capacity", node, capacities[node])

    return sorted(atoms, key=atom_sort_key)


def emit_network_facts(
    links: LinkTable,
    factors: CostFactors,
    fragments: dict[Id, FragmentSpec],
    stats: AccessStats,
    placement: Placement,
    adjacency: list[tuple[Id, Id]],
    capacities: Capacity,
    nodes: list[Id],
) -> str:
    """Network parameters as fact text, one ground fact per line, ordered by
    predicate name then term order."""
    atoms = network_fact_atoms(
        links, factors, fragments, stats, placement, adjacency, capacities, nodes
    )
    return "".join(f"{format_atom(a)}.\n" for a in atoms)


def transfer_cost_atoms(
    nodes: list[Id],
    fragments: dict[Id, FragmentSpec],
    placement: Placement,
    links: LinkTable,
    factors: CostFactors,
) -> list[Atom]:
    """transfer_cost(node, fragment, t) facts against current holders.

    t is zero for the holder itself. Pairs with no effective link to the
    holder are omitted (such nodes simply cannot trigger moves there).
    """
    atoms: list[Atom] = []
    for node in sorted(nodes, key=id_sort_key):
        for fragment_id in sorted(fragments, key=id_sort_key):
            holder = placement.get(fragment_id)
            if holder is None:
                raise CostModelError(f"fragment {fragment_id!r} is not placed")
            try:
                cost = transfer_cost(node, holder, fragments[fragment_id], links, factors)
            except MissingLinkError:
                continue
            atoms.append(
                Atom("transfer_cost",
                     (term_for_id(node), term_for_id(fragment_id), cost))
            )
    return sorted(atoms, key=atom_sort_key)
