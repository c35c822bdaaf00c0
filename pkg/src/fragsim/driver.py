"""Scenario loading, deterministic workload generation, and the run loop.

Workload rates are realized by an error-diffusion accumulator instead of
random sampling: a rate of 0.5 emits one event on every second round, and
any rate averages out exactly, so a scenario always produces byte-identical
metrics.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field
from typing import IO

from .costs import (
    AccessStats,
    CostFactors,
    FragmentSpec,
    QUERY_TYPES,
    check_capacity,
    execution_cost,
    network_fact_atoms,
    total_transmission_cost,
    transfer_cost_atoms,
)
from .network import (
    Id,
    LinkTable,
    NetworkGraph,
    TopologyError,
    build_graph,
    contract_routers,
    derive_adjacency,
    id_sort_key,
)
from .policies import Move, PolicyError, PolicyRuleSet, builtin_policy, load_policy_file
from .rules import ParseError, atom_sort_key
from .runtime import Cluster, ClusterContext, Tracer

_SYMBOL_RE = re.compile(r"[a-z][A-Za-z0-9_]*\Z")
_INT_RE = re.compile(r"-?\d+\Z")


class ScenarioError(Exception):
    """Invalid scenario document; the message names the offending field."""


@dataclass
class WorkloadEntry:
    node: Id
    fragment: Id
    qtype: str
    rate: float


@dataclass(frozen=True)
class QueryEvent:
    round: int
    node: Id
    fragment: Id
    qtype: str


@dataclass
class Scenario:
    graph: NetworkGraph
    links: LinkTable
    sites: list[Id]
    fragments: dict[Id, FragmentSpec]
    placement: dict
    capacities: dict
    factors: CostFactors
    workload: list[WorkloadEntry]
    policy: PolicyRuleSet
    rounds: int
    sync_period: int
    adjacency: list[tuple[Id, Id]]


@dataclass
class RoundMetrics:
    round: int
    transmission_cost: float
    execution_cost: float
    relocation_cost: float
    moves: list[Move]
    capacity_violations: list[tuple[Id, float, float]]


@dataclass
class MetricsTimeline:
    rounds: list[RoundMetrics] = field(default_factory=list)
    failed: str | None = None

    def summary(self) -> dict:
        last = self.rounds[-1] if self.rounds else None
        return {
            "rounds": len(self.rounds),
            "total_moves": sum(len(r.moves) for r in self.rounds),
            "total_relocation_cost": sum((r.relocation_cost for r in self.rounds), 0.0),
            "final_transmission_cost": last.transmission_cost if last else 0.0,
            "final_execution_cost": last.execution_cost if last else 0.0,
            "failed": self.failed,
        }


class SimulationError(Exception):
    """Run aborted; ``timeline`` holds the partial, failure-marked results."""

    def __init__(self, message: str, timeline: MetricsTimeline):
        super().__init__(message)
        self.timeline = timeline


# ---------------------------------------------------------------------------
# Scenario loading
# ---------------------------------------------------------------------------


def _parse_id(value, path: str) -> Id:
    if isinstance(value, bool):
        raise ScenarioError(f"{path}: id must be an integer or lowercase identifier")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        if _SYMBOL_RE.match(value):
            return value
        if _INT_RE.match(value):
            return int(value)
    raise ScenarioError(
        f"{path}: id must be an integer or lowercase identifier, got {value!r}"
    )


def _parse_number(value, path: str, minimum: float | None = None) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{path}: expected a number, got {value!r}")
    number = float(value)
    if math.isnan(number):
        raise ScenarioError(f"{path}: must not be NaN")
    if minimum is not None and number < minimum:
        raise ScenarioError(f"{path}: must be >= {minimum}, got {number}")
    return number


def _parse_pair_map(doc, path: str, known: set[Id]) -> dict[tuple[Id, Id], float]:
    out: dict[tuple[Id, Id], float] = {}
    if doc is None:
        return out
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: expected an object")
    for raw_i, inner in doc.items():
        i = _parse_id(raw_i, f"{path}.{raw_i}")
        if i not in known:
            raise ScenarioError(f"{path}.{raw_i}: unknown site {i!r}")
        if not isinstance(inner, dict):
            raise ScenarioError(f"{path}.{raw_i}: expected an object")
        for raw_j, value in inner.items():
            j = _parse_id(raw_j, f"{path}.{raw_i}.{raw_j}")
            if j not in known:
                raise ScenarioError(f"{path}.{raw_i}.{raw_j}: unknown site {j!r}")
            out[(i, j)] = _parse_number(value, f"{path}.{raw_i}.{raw_j}", minimum=0.0)
    return out


def load_scenario(doc: dict | str | os.PathLike, base_dir: str | None = None) -> Scenario:
    """Validate a scenario document (dict, or a path to a JSON file).

    Raises:
        ScenarioError: schema violations, dangling references, or an
            infeasible initial placement; the message names the field.
    """
    if not isinstance(doc, dict):
        path = os.fspath(doc)
        base_dir = base_dir or os.path.dirname(os.path.abspath(path))
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ScenarioError(f"scenario file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}")
        if not isinstance(doc, dict):
            raise ScenarioError("scenario: top level must be an object")

    topology = doc.get("topology")
    if not isinstance(topology, dict):
        raise ScenarioError("topology: required object missing")
    try:
        graph = build_graph(_normalize_topology(topology))
    except TopologyError as exc:
        raise ScenarioError(f"topology: {exc}")
    links = contract_routers(graph)
    sites = sorted(graph.sites, key=id_sort_key)
    site_set = set(sites)

    fragments: dict[Id, FragmentSpec] = {}
    for index, entry in enumerate(doc.get("fragments", [])):
        path = f"fragments[{index}]"
        if not isinstance(entry, dict):
            raise ScenarioError(f"{path}: expected an object")
        fragment_id = _parse_id(entry.get("id"), f"{path}.id")
        if fragment_id in fragments:
            raise ScenarioError(f"{path}.id: duplicate fragment {fragment_id!r}")
        size = _parse_number(entry.get("size"), f"{path}.size")
        units = _parse_number(entry.get("units"), f"{path}.units")
        if size <= 0:
            raise ScenarioError(f"{path}.size: must be > 0")
        if units <= 0:
            raise ScenarioError(f"{path}.units: must be > 0")
        fragments[fragment_id] = FragmentSpec(fragment_id, size, units)

    placement_doc = doc.get("placement")
    if not isinstance(placement_doc, dict):
        raise ScenarioError("placement: required object missing")
    placement: dict = {}
    for raw_fragment, raw_node in placement_doc.items():
        fragment_id = _parse_id(raw_fragment, f"placement.{raw_fragment}")
        node_id = _parse_id(raw_node, f"placement.{raw_fragment}")
        if fragment_id not in fragments:
            raise ScenarioError(
                f"placement.{raw_fragment}: unknown fragment {fragment_id!r}"
            )
        if node_id not in site_set:
            raise ScenarioError(f"placement.{raw_fragment}: unknown site {node_id!r}")
        placement[fragment_id] = node_id
    unplaced = sorted(set(fragments) - set(placement), key=id_sort_key)
    if unplaced:
        raise ScenarioError(f"placement: fragment {unplaced[0]!r} is not placed")

    capacities: dict = {}
    for raw_node, value in (doc.get("capacities") or {}).items():
        node_id = _parse_id(raw_node, f"capacities.{raw_node}")
        if node_id not in site_set:
            raise ScenarioError(f"capacities.{raw_node}: unknown site {node_id!r}")
        capacity = _parse_number(value, f"capacities.{raw_node}")
        if capacity <= 0:
            raise ScenarioError(f"capacities.{raw_node}: must be > 0")
        capacities[node_id] = capacity

    violations = check_capacity(placement, fragments, capacities)
    if violations:
        node, load, limit = violations[0]
        raise ScenarioError(
            f"placement: infeasible initial placement at node {node!r} "
            f"(load {load} > capacity {limit})"
        )

    factors_doc = doc.get("factors") or {}
    if not isinstance(factors_doc, dict):
        raise ScenarioError("factors: expected an object")
    factors = CostFactors(
        user_factor=_parse_pair_map(factors_doc.get("gamma"), "factors.gamma", site_set),
        other_cost=_parse_pair_map(factors_doc.get("other"), "factors.other", site_set),
        exec_weight=_parse_exec_weight(
            factors_doc.get("exec_weight"), site_set, set(fragments)
        ),
    )

    workload: list[WorkloadEntry] = []
    for index, entry in enumerate(doc.get("workload", [])):
        path = f"workload[{index}]"
        if not isinstance(entry, dict):
            raise ScenarioError(f"{path}: expected an object")
        node_id = _parse_id(entry.get("node"), f"{path}.node")
        if node_id not in site_set:
            raise ScenarioError(f"{path}.node: unknown site {node_id!r}")
        fragment_id = _parse_id(entry.get("fragment"), f"{path}.fragment")
        if fragment_id not in fragments:
            raise ScenarioError(f"{path}.fragment: unknown fragment {fragment_id!r}")
        qtype = entry.get("type")
        if qtype not in QUERY_TYPES:
            raise ScenarioError(f"{path}.type: expected one of {QUERY_TYPES}, got {qtype!r}")
        rate = _parse_number(entry.get("rate"), f"{path}.rate", minimum=0.0)
        workload.append(WorkloadEntry(node_id, fragment_id, qtype, rate))
    workload.sort(key=lambda w: (id_sort_key(w.node), id_sort_key(w.fragment), w.qtype))

    rounds = doc.get("rounds")
    if not isinstance(rounds, int) or isinstance(rounds, bool) or rounds < 1:
        raise ScenarioError(f"rounds: expected an integer >= 1, got {rounds!r}")
    sync_period = doc.get("sync_period", 1)
    if not isinstance(sync_period, int) or isinstance(sync_period, bool) or sync_period < 1:
        raise ScenarioError(f"sync_period: expected an integer >= 1, got {sync_period!r}")

    adjacency_doc = doc.get("adjacency", "derive")
    if adjacency_doc == "derive":
        adjacency = derive_adjacency(graph)
    elif isinstance(adjacency_doc, list):
        adjacency = []
        for index, pair in enumerate(adjacency_doc):
            path = f"adjacency[{index}]"
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise ScenarioError(f"{path}: expected a pair of sites")
            a = _parse_id(pair[0], f"{path}[0]")
            b = _parse_id(pair[1], f"{path}[1]")
            for endpoint in (a, b):
                if endpoint not in site_set:
                    raise ScenarioError(f"{path}: unknown site {endpoint!r}")
            if a == b:
                raise ScenarioError(f"{path}: sites must differ")
            adjacency.append(tuple(sorted((a, b), key=id_sort_key)))
        adjacency = sorted(set(adjacency), key=lambda p: (id_sort_key(p[0]), id_sort_key(p[1])))
    else:
        raise ScenarioError('adjacency: expected "derive" or a list of pairs')

    policy = _load_policy(doc.get("policy"), base_dir)

    return Scenario(
        graph=graph,
        links=links,
        sites=sites,
        fragments=fragments,
        placement=placement,
        capacities=capacities,
        factors=factors,
        workload=workload,
        policy=policy,
        rounds=rounds,
        sync_period=sync_period,
        adjacency=adjacency,
    )


def _normalize_topology(topology: dict) -> dict:
    """Resolve "inf"/"infinity" bandwidth strings before graph validation."""

    def fix(entry):
        if isinstance(entry, dict) and isinstance(entry.get("bandwidth"), str):
            text = entry["bandwidth"].lower()
            if text in ("inf", "infinity"):
                entry = dict(entry)
                entry["bandwidth"] = math.inf
        return entry

    return {
        "sites": [fix(e) for e in topology.get("sites", [])],
        "routers": [fix(e) for e in topology.get("routers", [])],
        "edges": [fix(e) for e in topology.get("edges", [])],
    }


def _parse_exec_weight(doc, sites: set[Id], fragments: set[Id]) -> dict:
    out: dict = {}
    if doc is None:
        return out
    if not isinstance(doc, dict):
        raise ScenarioError("factors.exec_weight: expected an object")
    for raw_i, inner in doc.items():
        i = _parse_id(raw_i, f"factors.exec_weight.{raw_i}")
        if i not in sites:
            raise ScenarioError(f"factors.exec_weight.{raw_i}: unknown site {i!r}")
        for raw_j, kinds in (inner or {}).items():
            j = _parse_id(raw_j, f"factors.exec_weight.{raw_i}.{raw_j}")
            if j not in fragments:
                raise ScenarioError(
                    f"factors.exec_weight.{raw_i}.{raw_j}: unknown fragment {j!r}"
                )
            for qtype, value in (kinds or {}).items():
                if qtype not in QUERY_TYPES:
                    raise ScenarioError(
                        f"factors.exec_weight.{raw_i}.{raw_j}.{qtype}: "
                        f"expected one of {QUERY_TYPES}"
                    )
                out[(i, j, qtype)] = _parse_number(
                    value, f"factors.exec_weight.{raw_i}.{raw_j}.{qtype}", minimum=0.0
                )
    return out


def _load_policy(doc, base_dir: str | None) -> PolicyRuleSet:
    if isinstance(doc, str):
        try:
            return builtin_policy(doc)
        except PolicyError as exc:
            raise ScenarioError(f"policy: {exc}")
    if isinstance(doc, dict) and isinstance(doc.get("file"), str):
        path = doc["file"]
        if base_dir and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        try:
            return load_policy_file(path)
        except FileNotFoundError:
            raise ScenarioError(f"policy.file: file not found: {path}")
        except (ParseError, PolicyError) as exc:
            raise ScenarioError(f"policy.file: {exc}")
    raise ScenarioError('policy: expected a builtin name or {"file": path}')


# ---------------------------------------------------------------------------
# Workload and run loop
# ---------------------------------------------------------------------------


def generate_workload(scenario: Scenario, round_number: int) -> list[QueryEvent]:
    """Events for one round: each entry emits floor((n+1)*rate) - floor(n*rate)
    events, ordered by (node, fragment, type)."""
    if not 0 <= round_number < scenario.rounds:
        raise ValueError(f"round {round_number} outside 0..{scenario.rounds - 1}")
    events: list[QueryEvent] = []
    for entry in scenario.workload:
        count = math.floor((round_number + 1) * entry.rate) - math.floor(
            round_number * entry.rate
        )
        events.extend(
            QueryEvent(round_number, entry.node, entry.fragment, entry.qtype)
            for _ in range(count)
        )
    return events


def build_context(scenario: Scenario) -> ClusterContext:
    return ClusterContext(
        sites=scenario.sites,
        links=scenario.links,
        fragments=scenario.fragments,
        factors=scenario.factors,
        capacities=scenario.capacities,
        adjacency=scenario.adjacency,
    )


def static_stats(scenario: Scenario) -> AccessStats:
    """The scenario's workload rates read as standing per-round query
    counters (the static parameter view used by emit-facts and query)."""
    stats = AccessStats()
    for entry in scenario.workload:
        if entry.rate > 0:
            stats.record(entry.node, entry.fragment, entry.qtype, entry.rate)
    return stats


def scenario_fact_atoms(scenario: Scenario) -> list:
    """Every parameter of the scenario as ground facts: the network fact set
    plus transfer_cost/3 facts against the initial placement."""
    stats = static_stats(scenario)
    atoms = network_fact_atoms(
        scenario.links,
        scenario.factors,
        scenario.fragments,
        stats,
        scenario.placement,
        scenario.adjacency,
        scenario.capacities,
        scenario.sites,
    )
    atoms.extend(
        transfer_cost_atoms(
            scenario.sites,
            scenario.fragments,
            scenario.placement,
            scenario.links,
            scenario.factors,
        )
    )
    return sorted(atoms, key=atom_sort_key)


def run(scenario: Scenario, trace: Tracer | None = None) -> MetricsTimeline:
    """Execute the scenario round by round.

    Each round generates workload, records it on the issuing nodes, and (on
    sync rounds) synchronizes fact bases and runs the allocation policy. The
    recorded per-round transmission cost is the objective recomputed from the
    round-end placement and cumulative statistics.

    Raises:
        SimulationError: carrying the partial, failure-marked timeline.
    """
    cluster = Cluster(build_context(scenario), scenario.placement, scenario.sync_period, trace)
    timeline = MetricsTimeline()
    try:
        for round_number in range(scenario.rounds):
            cluster.round = round_number + 1
            for event in generate_workload(scenario, round_number):
                cluster.record_query(event.node, event.fragment, event.qtype)
            moves: list[Move] = []
            relocation = 0.0
            if cluster.round % scenario.sync_period == 0:
                cluster.synchronize()
                moves, relocation = cluster.allocation_round(scenario.policy)
            stats = cluster.merged_stats()
            timeline.rounds.append(
                RoundMetrics(
                    round=round_number,
                    transmission_cost=total_transmission_cost(
                        cluster.placement, stats, scenario.links,
                        scenario.factors, scenario.fragments,
                    ),
                    execution_cost=execution_cost(stats, scenario.factors),
                    relocation_cost=relocation,
                    moves=moves,
                    capacity_violations=check_capacity(
                        cluster.placement, scenario.fragments, scenario.capacities
                    ),
                )
            )
    except Exception as exc:
        timeline.failed = str(exc)
        raise SimulationError(str(exc), timeline) from exc
    return timeline


# ---------------------------------------------------------------------------
# Metrics output
# ---------------------------------------------------------------------------


def _round_record(metrics: RoundMetrics) -> dict:
    return {
        "round": metrics.round,
        "transmission_cost": metrics.transmission_cost,
        "execution_cost": metrics.execution_cost,
        "relocation_cost": metrics.relocation_cost,
        "moves": [
            {
                "src": m.trigger.src,
                "dst": m.trigger.dst,
                "fragment": m.trigger.fragment,
            }
            for m in metrics.moves
        ],
    }


def write_metrics(timeline: MetricsTimeline, destination: str | os.PathLike | IO[str]) -> None:
    """JSON-lines: one record per round plus a final summary record."""
    if hasattr(destination, "write"):
        _write_jsonl(timeline, destination)
    else:
        with open(destination, "w", encoding="utf-8") as fh:
            _write_jsonl(timeline, fh)


def _write_jsonl(timeline: MetricsTimeline, fh: IO[str]) -> None:
    for metrics in timeline.rounds:
        fh.write(json.dumps(_round_record(metrics)) + "\n")
    fh.write(json.dumps({"summary": timeline.summary()}) + "\n")


def write_csv(timeline: MetricsTimeline, destination: str | os.PathLike | IO[str]) -> None:
    """CSV with the same numbers as the JSON-lines output; moves are
    semicolon-joined src>dst:fragment triples, the summary row carries the
    summary totals in the matching columns."""
    if hasattr(destination, "write"):
        _write_csv(timeline, destination)
    else:
        with open(destination, "w", encoding="utf-8", newline="") as fh:
            _write_csv(timeline, fh)


def _write_csv(timeline: MetricsTimeline, fh: IO[str]) -> None:
    fh.write("round,transmission_cost,execution_cost,relocation_cost,moves\n")
    for metrics in timeline.rounds:
        moves = ";".join(
            f"{m.trigger.src}>{m.trigger.dst}:{m.trigger.fragment}"
            for m in metrics.moves
        )
        fh.write(
            f"{metrics.round},{json.dumps(metrics.transmission_cost)},"
            f"{json.dumps(metrics.execution_cost)},"
            f"{json.dumps(metrics.relocation_cost)},{moves}\n"
        )
    summary = timeline.summary()
    fh.write(
        f"summary,{json.dumps(summary['final_transmission_cost'])},"
        f"{json.dumps(summary['final_execution_cost'])},"
        f"{json.dumps(summary['total_relocation_cost'])},{summary['total_moves']}\n"
    )
