"""Built-in allocation policies and move decision making.

A policy is a rule set defining move/3 over the fact base: move(Src, Dst,
Fragment) fires when the destination's summed query counters exceed its
access threshold r * t while the holder's do not. The nearest-neighbor
variant additionally requires a direct link between the two sites.
"""

from __future__ import annotations

from dataclasses import dataclass

from .costs import (
    AccessStats,
    Capacity,
    CostFactors,
    FragmentSpec,
    Placement,
    id_from_term,
    reverse_bandwidth,
    total_transmission_cost,
)
from .network import Id, LinkTable, MissingLinkError, id_sort_key
from .rules import FactBase, Program, parse_goal, parse_program, query, stratify


class PolicyError(Exception):
    """Unknown policy name or a rule set that does not define move/3."""


THRESHOLD_RULES = """\
% Threshold policy: move a fragment from a holder whose demand sits at or
% below its access threshold to a node whose demand exceeds its own.

total_freq(I,J,F) :- req(I,J,_), F is sum(V : freq(I,J,K,V)).

threshold(I,J,T) :- req(I,J,R), transfer_cost(I,J,C), T is R*C.

move(I1,I2,J) :- placed(J,I1),
                 total_freq(I1,J,F1), threshold(I1,J,T1), F1 <= T1,
                 total_freq(I2,J,F2), threshold(I2,J,T2), F2 > T2.
"""

NNA_RULES = """\
% Nearest-neighbor allocation: the threshold policy restricted to moves
% between directly linked sites.

total_freq(I,J,F) :- req(I,J,_), F is sum(V : freq(I,J,K,V)).

threshold(I,J,T) :- req(I,J,R), transfer_cost(I,J,C), T is R*C.

move(I1,I2,J) :- placed(J,I1),
                 total_freq(I1,J,F1), threshold(I1,J,T1), F1 <= T1,
                 total_freq(I2,J,F2), threshold(I2,J,T2), F2 > T2,
                 adjacent(I1,I2).
"""

_BUILTIN_TEXTS = {"threshold": THRESHOLD_RULES, "nna": NNA_RULES}

_MOVE_GOAL = parse_goal("move(Src, Dst, Fragment)")


@dataclass(frozen=True)
class MoveTrigger:
    """A derived move(src, dst, fragment) binding."""

    src: Id
    dst: Id
    fragment: Id

    def __post_init__(self):
        if self.src == self.dst:
            raise PolicyError(f"trigger with src == dst: {self.src!r}")


@dataclass(frozen=True)
class Move:
    """A conflict-resolved trigger with its projected transmission-cost
    saving."""

    trigger: MoveTrigger
    benefit: float


@dataclass(frozen=True)
class PolicyRuleSet:
    name: str
    text: str
    program: Program

    @staticmethod
    def from_text(name: str, text: str) -> "PolicyRuleSet":
        program = stratify(parse_program(text))
        if not any(r.head.pred == "move" and r.head.arity == 3 for r in program.rules):
            raise PolicyError(f"policy {name!r} does not define move/3")
        return PolicyRuleSet(name=name, text=text, program=program)


def builtin_policy(name: str) -> PolicyRuleSet:
    """The threshold or nna rule set; anything else is unknown."""
    text = _BUILTIN_TEXTS.get(name)
    if text is None:
        raise PolicyError(f"unknown policy {name!r}")
    return PolicyRuleSet.from_text(name, text)


def load_policy_file(path: str) -> PolicyRuleSet:
    with open(path, encoding="utf-8") as fh:
        return PolicyRuleSet.from_text(path, fh.read())


def compute_triggers(base: FactBase, policy: PolicyRuleSet) -> list[MoveTrigger]:
    """move(X, Y, Z) answers over the base, deduplicated, in term order."""
    result = query(policy.program, base, _MOVE_GOAL)
    triggers = []
    for answer in result.answers:
        values = [answer[v] for v in _MOVE_GOAL.args]  # goal args are variables
        triggers.append(
            MoveTrigger(
                src=id_from_term(values[0]),
                dst=id_from_term(values[1]),
                fragment=id_from_term(values[2]),
            )
        )
    return triggers


def resolve_conflicts(
    triggers: list[MoveTrigger],
    placement: Placement,
    stats: AccessStats,
    links: LinkTable,
    factors: CostFactors,
    fragments: dict[Id, FragmentSpec],
    capacities: Capacity,
) -> list[Move]:
    """Pick at most one feasible move per fragment.

    Stale triggers (fragment not held by src) are dropped. Among a fragment's
    remaining triggers the one with the largest transmission-cost benefit
    wins, ties broken by smallest (dst, src) in term order. Selected moves
    are then feasibility-checked in fragment term order against a working
    placement, dropping any that would overflow the destination's capacity.
    """
    by_fragment: dict[Id, list[MoveTrigger]] = {}
    for trigger in triggers:
        if placement.get(trigger.fragment) != trigger.src:
            continue
        by_fragment.setdefault(trigger.fragment, []).append(trigger)

    cost_before = None
    candidates: list[Move] = []
    for fragment in sorted(by_fragment, key=id_sort_key):
        best: tuple | None = None
        for trigger in by_fragment[fragment]:
            if cost_before is None:
                cost_before = total_transmission_cost(
                    placement, stats, links, factors, fragments
                )
            hypothetical = dict(placement)
            hypothetical[fragment] = trigger.dst
            try:
                cost_after = total_transmission_cost(
                    hypothetical, stats, links, factors, fragments
                )
            except MissingLinkError:
                continue  # the move would strand an accessor; infeasible
            benefit = cost_before - cost_after
            rank = (-benefit, id_sort_key(trigger.dst), id_sort_key(trigger.src))
            if best is None or rank < best[0]:
                best = (rank, Move(trigger, benefit))
        if best is not None:
            candidates.append(best[1])

    # capacity guard: simulate accepted moves on a working placement
    working = dict(placement)
    loads: dict[Id, float] = {}
    for fragment_id, node in working.items():
        loads[node] = loads.get(node, 0.0) + fragments[fragment_id].units

    accepted: list[Move] = []
    for move in candidates:
        trigger = move.trigger
        units = fragments[trigger.fragment].units
        limit = capacities.get(trigger.dst)
        if limit is not None and loads.get(trigger.dst, 0.0) + units > limit:
            continue
        loads[trigger.src] = loads.get(trigger.src, 0.0) - units
        loads[trigger.dst] = loads.get(trigger.dst, 0.0) + units
        working[trigger.fragment] = trigger.dst
        accepted.append(move)
    return accepted


def relocation_cost(
    fragment: FragmentSpec, src: Id, dst: Id, links: LinkTable, factors: CostFactors
) -> float:
    """One-off charge for physically moving a fragment: the transfer-cost
    product with a unit user factor."""
    if src == dst:
        return 0.0
    link = links.get(src, dst)
    return (
        fragment.size
        * reverse_bandwidth(link.bandwidth)
        * link.delay
        * factors.other(src, dst)
    )
