"""Stratification, fixpoint evaluation, and queries.

Evaluation is bottom-up and semi-naive: each stratum is saturated by delta
iteration before the next begins, so sum aggregations only ever read
completed relations. Numbers are doubles compared exactly; symbols compare
lexicographically; answers and serialized fact bases follow the total term
order, which makes every output deterministic.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .ast import (
    Aggregation,
    Atom,
    BinOp,
    Binding,
    Comparison,
    Expr,
    Neg,
    Program,
    Rule,
    Term,
    Var,
    atom_sort_key,
    format_atom,
    format_rule,
    literal_variables,
    substitute,
    term_sort_key,
)

DEFAULT_FACT_CAP = 1_000_000


class StratificationError(Exception):
    """Aggregation feeds back into its own inputs."""


class EvaluationError(Exception):
    """Runtime failure while firing a rule (bad arithmetic, fact cap)."""


class FactBaseError(Exception):
    """Invalid fact-base update (non-ground atom, arity clash)."""


Subst = dict[Var, Term]


class FactBase:
    """A mutable store of ground atoms with set semantics.

    Facts are indexed by predicate; per-argument-position indexes are built
    lazily and invalidated on writes. Only input facts are ever stored here;
    derived facts are recomputed by :func:`evaluate`.
    """

    def __init__(self, facts: list[Atom] | None = None):
        self._by_pred: dict[str, set[tuple[Term, ...]]] = {}
        self._arity: dict[str, int] = {}
        self._indexes: dict[str, dict[int, dict[Term, list[tuple[Term, ...]]]]] = {}
        self._count = 0
        if facts:
            for fact in facts:
                self.add(fact)

    def __len__(self) -> int:
        return self._count

    def __contains__(self, atom: Atom) -> bool:
        rows = self._by_pred.get(atom.pred)
        return rows is not None and atom.args in rows

    def __iter__(self):
        for pred in self._by_pred:
            for args in self._by_pred[pred]:
                yield Atom(pred, args)

    def predicates(self) -> set[str]:
        return {p for p, rows in self._by_pred.items() if rows}

    def rows(self, pred: str) -> set[tuple[Term, ...]]:
        return self._by_pred.get(pred, set())

    def add(self, atom: Atom) -> bool:
        """Insert a ground atom; returns True if it was new."""
        if not atom.is_ground():
            raise FactBaseError(f"non-ground atom: {format_atom(atom)}")
        known = self._arity.get(atom.pred)
        if known is None:
            self._arity[atom.pred] = atom.arity
        elif known != atom.arity:
            raise FactBaseError(
                f"arity clash for {atom.pred}: {atom.arity} vs {known}"
            )
        rows = self._by_pred.setdefault(atom.pred, set())
        if atom.args in rows:
            return False
        rows.add(atom.args)
        self._count += 1
        self._indexes.pop(atom.pred, None)
        return True

    def remove(self, atom: Atom) -> bool:
        """Remove a ground atom; returns False (flagging "not present") if
        the fact was absent."""
        if not atom.is_ground():
            raise FactBaseError(f"non-ground atom: {format_atom(atom)}")
        rows = self._by_pred.get(atom.pred)
        if rows is None or atom.args not in rows:
            return False
        rows.remove(atom.args)
        self._count -= 1
        self._indexes.pop(atom.pred, None)
        return True

    def update(self, additions: list[Atom], removals: list[Atom]) -> list[Atom]:
        """Apply removals then additions; returns removals that were absent."""
        missing = [atom for atom in removals if not self.remove(atom)]
        for atom in additions:
            self.add(atom)
        return missing

    def copy(self) -> "FactBase":
        clone = FactBase()
        clone._arity = dict(self._arity)
        clone._by_pred = {p: set(rows) for p, rows in self._by_pred.items()}
        clone._count = self._count
        return clone

    def match(self, pattern: Atom, subst: Subst) -> list[tuple[Term, ...]]:
        """Rows of pattern's predicate compatible with the bound pattern
        positions under ``subst``, narrowed through the most selective
        per-position index (unbound positions are not filtered)."""
        rows = self._by_pred.get(pattern.pred)
        if not rows:
            return []
        bound: list[tuple[int, Term]] = []
        for pos, arg in enumerate(pattern.args):
            if isinstance(arg, Var):
                arg = subst.get(arg, arg)
            if not isinstance(arg, Var):
                bound.append((pos, arg))
        if not bound:
            return list(rows)
        if len(bound) == len(pattern.args):
            key = tuple(val for _, val in bound)
            return [key] if key in rows else []
        best: list[tuple[Term, ...]] | None = None
        for pos, val in bound:
            candidates = self._index_for(pattern.pred, pos).get(val)
            if candidates is None:
                return []
            if best is None or len(candidates) < len(best):
                best = candidates
            if len(best) <= 8:  # good enough; further probing costs more than scanning
                break
        return best if best is not None else []

    def _index_for(self, pred: str, pos: int) -> dict[Term, list[tuple[Term, ...]]]:
        by_pos = self._indexes.setdefault(pred, {})
        index = by_pos.get(pos)
        if index is None:
            index = {}
            for row in self._by_pred.get(pred, ()):
                index.setdefault(row[pos], []).append(row)
            by_pos[pos] = index
        return index

    def same_facts(self, other: "FactBase") -> bool:
        """Set equality of stored facts (cheaper than comparing hashes)."""
        mine = {p: rows for p, rows in self._by_pred.items() if rows}
        theirs = {p: rows for p, rows in other._by_pred.items() if rows}
        return mine == theirs

    def sorted_facts(self) -> list[Atom]:
        return sorted(self, key=atom_sort_key)

    def to_text(self) -> str:
        """Canonical serialization: sorted fact lines, one per fact."""
        return "".join(f"{format_atom(a)}.\n" for a in self.sorted_facts())

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def update_facts(base: FactBase, additions: list[Atom], removals: list[Atom]) -> list[Atom]:
    """Apply removals then additions to ``base`` in place.

    Returns the removals that were not present (no-ops, flagged for the
    caller to log). Raises FactBaseError on non-ground atoms.
    """
    return base.update(additions, removals)


# ---------------------------------------------------------------------------
# Stratification
# ---------------------------------------------------------------------------


def stratify(program: Program) -> Program:
    """Assign stratum numbers so every aggregation reads a lower stratum.

    Plain positive dependencies may share a stratum; an aggregation edge
    forces a strict increase. Raises StratificationError when a predicate
    transitively aggregates over itself.
    """
    preds = program.predicates()
    edges: list[tuple[str, str, int]] = []
    for rule in program.rules:
        head = rule.head.pred
        for lit in rule.body:
            if isinstance(lit, Atom):
                edges.append((lit.pred, head, 0))
            elif isinstance(lit, Aggregation):
                edges.append((lit.atom.pred, head, 1))

    strata = {p: 0 for p in preds}
    limit = len(preds) + 1
    changed = True
    while changed:
        changed = False
        for src, dst, weight in edges:
            required = strata[src] + weight
            if strata[dst] < required:
                strata[dst] = required
                if strata[dst] > limit:
                    cycle_pred = _find_aggregation_cycle(edges)
                    raise StratificationError(
                        f"aggregation cycle through {cycle_pred or dst}"
                    )
                changed = True
    return Program(rules=program.rules, facts=program.facts, strata=strata)


def _find_aggregation_cycle(edges: list[tuple[str, str, int]]) -> str | None:
    """Name a predicate on a dependency cycle that crosses an aggregation."""
    adjacency: dict[str, list[tuple[str, int]]] = {}
    for src, dst, weight in edges:
        adjacency.setdefault(src, []).append((dst, weight))

    for src, dst, weight in edges:
        if weight != 1:
            continue
        # cycle exists iff dst reaches src
        seen = {dst}
        stack = [dst]
        while stack:
            node = stack.pop()
            if node == src:
                return src
            for nxt, _ in adjacency.get(node, ()):
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
    return None


# ---------------------------------------------------------------------------
# Expression evaluation
# ---------------------------------------------------------------------------


def eval_expr(expr: Expr, subst: Subst, rule: Rule | None = None) -> float:
    if isinstance(expr, Var):
        value = subst.get(expr)
        if value is None:
            raise EvaluationError(f"unbound variable {expr.name} in expression")
        expr = value
    if isinstance(expr, float):
        return expr
    if isinstance(expr, str):
        raise EvaluationError(
            f"arithmetic on non-numeric term {expr!r}" + _rule_context(rule, subst)
        )
    if isinstance(expr, Neg):
        return -eval_expr(expr.operand, subst, rule)
    if isinstance(expr, BinOp):
        left = eval_expr(expr.left, subst, rule)
        right = eval_expr(expr.right, subst, rule)
        if expr.op == "+":
            return left + right
        if expr.op == "-":
            return left - right
        if expr.op == "*":
            return left * right
        if right == 0.0:
            raise EvaluationError("division by zero" + _rule_context(rule, subst))
        return left / right
    raise EvaluationError(f"bad expression node: {expr!r}")


def _rule_context(rule: Rule | None, subst: Subst) -> str:
    if rule is None:
        return ""
    grounded = Rule(
        substitute(rule.head, subst),
        tuple(
            substitute(lit, subst) if isinstance(lit, Atom) else lit
            for lit in rule.body
        ),
    )
    return f" in {format_rule(grounded)}"


_COMPARATORS = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
}


# ---------------------------------------------------------------------------
# Semi-naive evaluation
# ---------------------------------------------------------------------------


@dataclass
class _CompiledRule:
    rule: Rule
    stratum: int
    # positions (into rule.body) of atoms whose predicate lives in the same
    # stratum as the head; these drive the semi-naive delta variants
    recursive_positions: list[int] = field(default_factory=list)
    # per aggregation literal: inner-atom variables that occur nowhere else
    # in the rule (summed over rather than grouped by)
    local_vars: dict[int, set[Var]] = field(default_factory=dict)


def _compile_rules(program: Program) -> list[_CompiledRule]:
    assert program.strata is not None
    compiled = []
    for rule in program.rules:
        stratum = program.strata[rule.head.pred]
        c = _CompiledRule(rule=rule, stratum=stratum)
        for pos, lit in enumerate(rule.body):
            if isinstance(lit, Atom) and program.strata.get(lit.pred, 0) == stratum:
                c.recursive_positions.append(pos)
            elif isinstance(lit, Aggregation):
                elsewhere: set[Var] = set(rule.head.variables())
                for other_pos, other in enumerate(rule.body):
                    if other_pos != pos:
                        elsewhere.update(literal_variables(other))
                c.local_vars[pos] = {
                    v for v in lit.atom.variables()
                    if v != lit.value_var and v not in elsewhere
                }
        compiled.append(c)
    return compiled


def _unify_row(pattern: Atom, row: tuple[Term, ...], subst: Subst) -> Subst | None:
    out = subst
    copied = False
    for arg, value in zip(pattern.args, row):
        if isinstance(arg, Var):
            bound = out.get(arg)
            if bound is None:
                if not copied:
                    out = dict(out)
                    copied = True
                out[arg] = value
            elif bound != value:
                return None
        elif arg != value:
            return None
    return out


def _eval_aggregation(
    lit: Aggregation,
    locals_: set[Var],
    facts: FactBase,
    subst: Subst,
    rule: Rule,
) -> list[Subst]:
    """Group matching facts by the shared unbound variables and sum the value
    variable; with no unbound group variables an empty match sums to 0."""
    pattern = lit.atom
    group_vars: list[Var] = []
    for v in pattern.variables():
        if v != lit.value_var and v not in locals_ and v not in subst and v not in group_vars:
            group_vars.append(v)
    # rows are summed in term order: float addition is order-sensitive and
    # set iteration order varies across processes
    rows = sorted(
        facts.match(pattern, subst),
        key=lambda row: tuple(term_sort_key(t) for t in row),
    )
    sums: dict[tuple[Term, ...], float] = {}
    for row in rows:
        bound = _unify_row(pattern, row, subst)
        if bound is None:
            continue
        value = bound[lit.value_var]
        if not isinstance(value, float):
            raise EvaluationError(
                f"arithmetic on non-numeric term {value!r}" + _rule_context(rule, subst)
            )
        key = tuple(bound[v] for v in group_vars)
        sums[key] = sums.get(key, 0.0) + value
    if not group_vars:
        total = sums.get((), 0.0)
        return _bind_result(subst, lit.var, total)
    results = []
    for key, total in sums.items():
        bound = dict(subst)
        bound.update(zip(group_vars, key))
        results.extend(_bind_result(bound, lit.var, total))
    return results


def _bind_result(subst: Subst, var: Var, value: float) -> list[Subst]:
    existing = subst.get(var)
    if existing is not None:
        return [subst] if existing == value else []
    out = dict(subst)
    out[var] = value
    return [out]


def _fire_rule(
    compiled: _CompiledRule,
    facts: FactBase,
    delta_pos: int | None,
    delta: "FactBase | None",
) -> list[Atom]:
    """All head instantiations of one rule, optionally forcing a single body
    atom position to range over the delta only."""
    rule = compiled.rule
    substs: list[Subst] = [{}]
    for pos, lit in enumerate(rule.body):
        if not substs:
            return []
        next_substs: list[Subst] = []
        if isinstance(lit, Atom):
            source = delta if pos == delta_pos and delta is not None else facts
            for subst in substs:
                for row in source.match(lit, subst):
                    bound = _unify_row(lit, row, subst)
                    if bound is not None:
                        next_substs.append(bound)
        elif isinstance(lit, Comparison):
            cmp = _COMPARATORS[lit.op]
            for subst in substs:
                left = eval_expr(lit.left, subst, rule)
                right = eval_expr(lit.right, subst, rule)
                if cmp(left, right):
                    next_substs.append(subst)
        elif isinstance(lit, Binding):
            for subst in substs:
                value = eval_expr(lit.expr, subst, rule)
                next_substs.extend(_bind_result(subst, lit.var, value))
        else:  # Aggregation
            locals_ = compiled.local_vars[pos]
            for subst in substs:
                next_substs.extend(_eval_aggregation(lit, locals_, facts, subst, rule))
        substs = next_substs
    return [substitute(rule.head, subst) for subst in substs]


def evaluate(program: Program, base: FactBase, max_facts: int = DEFAULT_FACT_CAP) -> FactBase:
    """Least fixpoint of the program over ``base``, stratum by stratum.

    The result contains the input facts (base plus the program's own facts)
    and every derivable fact. ``base`` is not modified. Stratifies the
    program on demand if needed.

    Raises:
        EvaluationError: bad arithmetic during rule firing, or more than
            ``max_facts`` facts derived (runaway binding recursion).
        StratificationError: the program cannot be stratified.
    """
    if program.strata is None:
        program = stratify(program)
    compiled = _compile_rules(program)

    result = base.copy()
    for fact in program.facts:
        result.add(fact)

    max_stratum = max(program.strata.values(), default=0)
    for stratum in range(max_stratum + 1):
        layer = [c for c in compiled if c.stratum == stratum]
        if not layer:
            continue
        # initial full pass seeds the delta
        delta = FactBase()
        for c in layer:
            for atom in _fire_rule(c, result, None, None):
                if result.add(atom):
                    delta.add(atom)
                    _check_cap(result, max_facts)
        # delta iteration over recursive atom positions
        while len(delta):
            new_delta = FactBase()
            for c in layer:
                for pos in c.recursive_positions:
                    body_atom = c.rule.body[pos]
                    assert isinstance(body_atom, Atom)
                    if not delta.rows(body_atom.pred):
                        continue
                    for atom in _fire_rule(c, result, pos, delta):
                        if result.add(atom):
                            new_delta.add(atom)
                            _check_cap(result, max_facts)
            delta = new_delta
    return result


def _check_cap(result: FactBase, max_facts: int) -> None:
    if len(result) > max_facts:
        raise EvaluationError(f"derived-fact cap exceeded ({max_facts} facts)")


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------


@dataclass
class QueryResult:
    """Sorted, deduplicated goal matches.

    ``unknown_predicate`` flags a goal whose predicate/arity pair appears
    nowhere in the program or fact base (answers are then empty; this is a
    warning, not an error).
    """

    answers: list[dict[Var, Term]]
    unknown_predicate: bool = False

    def __iter__(self):
        return iter(self.answers)

    def __len__(self) -> int:
        return len(self.answers)


def query(program: Program, base: FactBase, goal: Atom,
          max_facts: int = DEFAULT_FACT_CAP) -> QueryResult:
    """Evaluate the program and match ``goal`` against the fixpoint.

    Answers carry one variable-to-ground-term map each and are sorted by the
    instantiated goal arguments under the total term order, so the order is
    deterministic cluster-wide.
    """
    derived = evaluate(program, base, max_facts=max_facts)
    known = _goal_known(program, base, goal)

    answers: dict[tuple[Term, ...], dict[Var, Term]] = {}
    for row in derived.match(goal, {}):
        if len(row) != goal.arity:
            continue
        bound = _unify_row(goal, row, {})
        if bound is not None:
            answers.setdefault(row, bound)
    ordered = sorted(answers.items(), key=lambda kv: tuple(term_sort_key(t) for t in kv[0]))
    return QueryResult(
        answers=[bound for _, bound in ordered],
        unknown_predicate=not known,
    )


def _goal_known(program: Program, base: FactBase, goal: Atom) -> bool:
    signature = (goal.pred, goal.arity)
    for fact in program.facts:
        if (fact.pred, fact.arity) == signature:
            return True
    for rule in program.rules:
        if (rule.head.pred, rule.head.arity) == signature:
            return True
        for lit in rule.body:
            if isinstance(lit, Atom) and (lit.pred, lit.arity) == signature:
                return True
    for pred in base.predicates():
        if pred == goal.pred:
            rows = base.rows(pred)
            if rows and len(next(iter(rows))) == goal.arity:
                return True
    return False
