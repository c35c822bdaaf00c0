"""Per-node state machines and the synchronized allocation loop.

Every node keeps a full fact base; local query statistics are staged as
assert/retract deltas and broadcast all-to-all on sync rounds, after which
all fact bases are byte-identical. Policy evaluation runs on every node's
base (the identical trigger lists are asserted), conflicts are resolved to
at most one move per fragment, and each move's source executes the transfer
on all bases. Nodes are stepped deterministically in ascending id order; no
real parallelism is involved.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .costs import (
    AccessStats,
    Capacity,
    CostFactors,
    FragmentSpec,
    Placement,
    network_fact_atoms,
    term_for_id,
    transfer_cost_atoms,
)
from .network import Id, LinkTable, id_sort_key
from .policies import Move, PolicyRuleSet, compute_triggers, relocation_cost, resolve_conflicts
from .rules import Atom, FactBase, atom_sort_key, format_atom, update_facts

Tracer = Callable[[str], None]


class NodeRuntimeError(Exception):
    """Base for runtime failures."""


class UnknownFragmentError(NodeRuntimeError):
    pass


class InvariantViolation(NodeRuntimeError):
    """A cluster-wide invariant broke (divergent bases, placement mismatch)."""


class PendingDeltas:
    """Staged fact changes since the last sync, kept disjoint.

    Asserting an atom cancels a staged retraction of it and vice versa, so a
    counter bumped several times in one round nets out to one removal of the
    old fact and one addition of the newest.
    """

    def __init__(self):
        self.additions: set[Atom] = set()
        self.removals: set[Atom] = set()

    def stage_assert(self, atom: Atom) -> None:
        if atom in self.removals:
            self.removals.discard(atom)
        self.additions.add(atom)

    def stage_retract(self, atom: Atom) -> None:
        if atom in self.additions:
            self.additions.discard(atom)
        else:
            self.removals.add(atom)

    def is_empty(self) -> bool:
        return not self.additions and not self.removals

    def clear(self) -> None:
        self.additions.clear()
        self.removals.clear()


@dataclass
class SyncMessage:
    sender: Id
    round: int
    additions: tuple[Atom, ...]
    removals: tuple[Atom, ...]


@dataclass
class NodeState:
    id: Id
    base: FactBase
    pending: PendingDeltas = field(default_factory=PendingDeltas)
    stats: AccessStats = field(default_factory=AccessStats)


@dataclass
class ClusterContext:
    """Shared immutable configuration every node sees."""

    sites: list[Id]
    links: LinkTable
    fragments: dict[Id, FragmentSpec]
    factors: CostFactors
    capacities: Capacity
    adjacency: list[tuple[Id, Id]]


class Cluster:
    """The simulated set of nodes plus the authoritative placement."""

    def __init__(
        self,
        ctx: ClusterContext,
        placement: Placement,
        sync_period: int,
        trace: Tracer | None = None,
    ):
        if sync_period < 1:
            raise ValueError("sync_period must be >= 1")
        self.ctx = ctx
        self.placement: Placement = dict(placement)
        self.sync_period = sync_period
        self.round = 0
        self.dirty = True  # initial fact load counts as an update
        self.trace = trace

        initial = FactBase(self._initial_atoms())
        self.nodes = [
            NodeState(id=site, base=initial.copy())
            for site in sorted(ctx.sites, key=id_sort_key)
        ]
        self._by_id = {node.id: node for node in self.nodes}

    def _initial_atoms(self) -> list[Atom]:
        atoms = network_fact_atoms(
            self.ctx.links,
            self.ctx.factors,
            self.ctx.fragments,
            AccessStats(),
            self.placement,
            self.ctx.adjacency,
            self.ctx.capacities,
            self.ctx.sites,
        )
        atoms.extend(
            transfer_cost_atoms(
                self.ctx.sites,
                self.ctx.fragments,
                self.placement,
                self.ctx.links,
                self.ctx.factors,
            )
        )
        return atoms

    def node(self, node_id: Id) -> NodeState:
        return self._by_id[node_id]

    def _emit(self, line: str) -> None:
        if self.trace is not None:
            self.trace(line)

    # -- statistics ----------------------------------------------------------

    def record_query(self, node_id: Id, fragment: Id, qtype: str) -> None:
        """Count one query of ``qtype`` by ``node_id`` on ``fragment`` and
        stage the freq/req fact updates for the next sync."""
        if fragment not in self.ctx.fragments:
            raise UnknownFragmentError(f"unknown fragment {fragment!r}")
        node = self._by_id[node_id]
        qtype = str(qtype)

        old_count = node.stats.count(node_id, fragment, qtype)
        defaulted = (node_id, fragment) not in node.stats.req_overrides
        old_req = node.stats.req(node_id, fragment) if defaulted else None

        new_count = node.stats.record(node_id, fragment, qtype)

        i, j = term_for_id(node_id), term_for_id(fragment)
        if old_count > 0:
            node.pending.stage_retract(Atom("freq", (i, j, qtype, old_count)))
        node.pending.stage_assert(Atom("freq", (i, j, qtype, new_count)))
        if defaulted:
            node.pending.stage_retract(Atom("req", (i, j, float(old_req))))
            node.pending.stage_assert(
                Atom("req", (i, j, node.stats.req(node_id, fragment)))
            )

    def merged_stats(self) -> AccessStats:
        merged = AccessStats()
        for node in self.nodes:
            for key, value in node.stats.counts.items():
                merged.counts[key] = merged.counts.get(key, 0.0) + value
            merged.req_overrides.update(node.stats.req_overrides)
        return merged

    # -- synchronization -----------------------------------------------------

    def synchronize(self) -> list[SyncMessage]:
        """All-to-all delta exchange; afterwards every base is identical.

        Conflicting deltas (an atom added by one node and removed by another
        in the same round) resolve deterministically: the removal wins.
        """
        messages = [
            SyncMessage(
                sender=node.id,
                round=self.round,
                additions=tuple(sorted(node.pending.additions, key=atom_sort_key)),
                removals=tuple(sorted(node.pending.removals, key=atom_sort_key)),
            )
            for node in self.nodes
        ]

        all_removals: set[Atom] = set()
        for message in messages:
            all_removals.update(message.removals)
        conflicts = {
            atom
            for message in messages
            for atom in message.additions
            if atom in all_removals
        }
        if conflicts:
            messages = [
                SyncMessage(
                    sender=m.sender,
                    round=m.round,
                    additions=tuple(a for a in m.additions if a not in conflicts),
                    removals=m.removals,
                )
                for m in messages
            ]
            for atom in sorted(conflicts, key=atom_sort_key):
                self._emit(f"sync conflict, removal wins: {format_atom(atom)}")

        changed = any(m.additions or m.removals for m in messages)
        for node in self.nodes:
            for message in messages:  # already in ascending sender order
                missing = update_facts(
                    node.base, list(message.additions), list(message.removals)
                )
                for atom in missing:
                    self._emit(
                        f"sync node={node.id} retract not present: {format_atom(atom)}"
                    )
            node.pending.clear()

        for message in messages:
            self._emit(
                f"sync round={self.round} node={message.sender} "
                f"+{len(message.additions)} -{len(message.removals)}"
            )
        if changed:
            self.dirty = True
        self.assert_converged()
        return messages

    def base_hashes(self) -> list[str]:
        return [node.base.content_hash() for node in self.nodes]

    def assert_converged(self) -> None:
        first = self.nodes[0].base
        for node in self.nodes[1:]:
            if not node.base.same_facts(first):
                raise InvariantViolation("fact bases diverged after synchronization")

    # -- allocation ----------------------------------------------------------

    def allocation_round(self, policy: PolicyRuleSet) -> tuple[list[Move], float]:
        """Evaluate the policy (only if facts changed), execute the resolved
        moves, and return them with the round's relocation charge.

        Engine errors roll the cluster back to its pre-round state.
        """
        if not self.dirty:
            self._emit("allocation skipped: no fact updates")
            return [], 0.0

        snapshot = (
            [node.base.copy() for node in self.nodes],
            dict(self.placement),
            self.dirty,
        )
        try:
            trigger_lists = [
                compute_triggers(node.base, policy) for node in self.nodes
            ]
            for node, triggers in zip(self.nodes, trigger_lists):
                self._emit(f"eval node={node.id} triggers={len(triggers)}")
            first = trigger_lists[0]
            if any(other != first for other in trigger_lists[1:]):
                raise InvariantViolation("nodes derived different trigger lists")

            self.dirty = False
            moves = resolve_conflicts(
                first,
                self.placement,
                self.merged_stats(),
                self.ctx.links,
                self.ctx.factors,
                self.ctx.fragments,
                self.ctx.capacities,
            )
            for trigger in first:
                self._emit(
                    f"trigger {trigger.src}->{trigger.dst} fragment={trigger.fragment}"
                )
            charge = 0.0
            for move in moves:
                charge += self.execute_transfer(move)
            return moves, charge
        except Exception:
            bases, placement, dirty = snapshot
            for node, base in zip(self.nodes, bases):
                node.base = base
            self.placement = placement
            self.dirty = dirty
            raise

    def execute_transfer(self, move: Move) -> float:
        """Move the fragment on every node's base, refresh its transfer-cost
        facts, and return the relocation charge."""
        trigger = move.trigger
        fragment = trigger.fragment
        if self.placement.get(fragment) != trigger.src:
            raise NodeRuntimeError(
                f"fragment {fragment!r} not placed at src {trigger.src!r}"
            )
        placed_src = Atom("placed", (term_for_id(fragment), term_for_id(trigger.src)))
        placed_dst = Atom("placed", (term_for_id(fragment), term_for_id(trigger.dst)))
        for node in self.nodes:
            if placed_src not in node.base:
                raise InvariantViolation(
                    f"node {node.id!r} disagrees on placement of {fragment!r}"
                )

        frag_spec = self.ctx.fragments[fragment]
        single = {fragment: frag_spec}
        old_tc = transfer_cost_atoms(
            self.ctx.sites, single, {fragment: trigger.src},
            self.ctx.links, self.ctx.factors,
        )
        new_placement = {fragment: trigger.dst}
        new_tc = transfer_cost_atoms(
            self.ctx.sites, single, new_placement, self.ctx.links, self.ctx.factors
        )
        for node in self.nodes:
            update_facts(node.base, [placed_dst] + new_tc, [placed_src] + old_tc)

        self.placement[fragment] = trigger.dst
        self.dirty = True
        charge = relocation_cost(
            frag_spec, trigger.src, trigger.dst, self.ctx.links, self.ctx.factors
        )
        self._emit(
            f"transfer fragment={fragment} {trigger.src}->{trigger.dst} cost={charge}"
        )
        return charge


def build_cluster(
    ctx: ClusterContext,
    placement: Placement,
    sync_period: int,
    trace: Tracer | None = None,
) -> Cluster:
    return Cluster(ctx, placement, sync_period, trace)
