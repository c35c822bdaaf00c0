"""fragsim: a rule-driven fragment allocation simulator for distributed
database clusters.

The package models the cluster as a graph of sites and routers, contracts
router chains into effective site-to-site links, expresses allocation policy
as declarative rules over per-node fact bases, evaluates them with an
embedded stratified rule engine, and steps the cluster through deterministic
synchronization rounds while accounting transmission, execution, and
relocation costs.
"""

from .costs import (
    AccessStats,
    CostFactors,
    FragmentSpec,
    QueryType,
    check_capacity,
    emit_network_facts,
    execution_cost,
    total_transmission_cost,
    transfer_cost,
)
from .driver import (
    MetricsTimeline,
    Scenario,
    ScenarioError,
    SimulationError,
    generate_workload,
    load_scenario,
    run,
    write_csv,
    write_metrics,
)
from .network import (
    EffectiveLink,
    LinkTable,
    NetworkGraph,
    TopologyError,
    build_graph,
    contract_routers,
)
from .policies import Move, MoveTrigger, PolicyRuleSet, builtin_policy, compute_triggers, resolve_conflicts
from .runtime import Cluster, ClusterContext
from .rules import FactBase, Program, evaluate, parse_program, query, stratify

__version__ = "0.1.0"

__all__ = [
    "AccessStats",
    "Cluster",
    "ClusterContext",
    "CostFactors",
    "EffectiveLink",
    "FactBase",
    "FragmentSpec",
    "LinkTable",
    "MetricsTimeline",
    "Move",
    "MoveTrigger",
    "NetworkGraph",
    "PolicyRuleSet",
    "Program",
    "QueryType",
    "Scenario",
    "ScenarioError",
    "SimulationError",
    "TopologyError",
    "build_graph",
    "builtin_policy",
    "check_capacity",
    "compute_triggers",
    "contract_routers",
    "emit_network_facts",
    "evaluate",
    "execution_cost",
    "generate_workload",
    "load_scenario",
    "parse_program",
    "query",
    "resolve_conflicts",
    "run",
    "stratify",
    "total_transmission_cost",
    "transfer_cost",
    "write_csv",
    "write_metrics",
]
