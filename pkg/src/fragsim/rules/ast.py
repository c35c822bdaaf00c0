"""Syntax tree and term model for the rule language.

Ground terms are plain Python values: numbers are ``float`` (decimal doubles
with exact-equality semantics), symbols are ``str``. Variables only ever occur
inside rules and are represented by :class:`Var`. Everything is hashable so
ground atoms can live in sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Union


class Var:
    """A rule variable (uppercase- or underscore-initial identifier).

    Immutable by convention; the hash is precomputed because variables are
    dictionary keys on the engine's hottest paths.
    """

    __slots__ = ("name", "_hash")

    def __init__(self, name: str):
        self.name = name
        self._hash = hash(("var", name))

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        return type(other) is Var and other.name == self.name

    def __repr__(self) -> str:
        return f"Var({self.name})"


Term = Union[float, str, Var]

#: Comparison operators accepted in rule bodies.
COMPARISON_OPS = ("==", "!=", "<=", ">=", "<", ">")


@dataclass(frozen=True)
class BinOp:
    """Arithmetic node: left op right, op in + - * /."""

    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Neg:
    """Unary minus."""

    operand: "Expr"


Expr = Union[float, str, Var, BinOp, Neg]


class Atom:
    """A predicate applied to terms, e.g. delay(1,3,5).

    Immutable by convention, with hash and groundness precomputed: ground
    atoms live in sets and get hashed constantly during evaluation.
    """

    __slots__ = ("pred", "args", "_hash", "_ground")

    def __init__(self, pred: str, args: tuple[Term, ...]):
        self.pred = pred
        self.args = args
        self._hash = hash((pred, args))
        self._ground = not any(isinstance(a, Var) for a in args)

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other) -> bool:
        return type(other) is Atom and other.pred == self.pred and other.args == self.args

    def __repr__(self) -> str:
        return f"Atom({self.pred}, {self.args!r})"

    @property
    def arity(self) -> int:
        return len(self.args)

    def is_ground(self) -> bool:
        return self._ground

    def variables(self) -> Iterator[Var]:
        for a in self.args:
            if isinstance(a, Var):
                yield a


@dataclass(frozen=True)
class Comparison:
    """expr op expr, restricted to numeric operands at evaluation time."""

    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Binding:
    """var is expr."""

    var: Var
    expr: Expr


@dataclass(frozen=True)
class Aggregation:
    """var is sum(value_var : atom).

    Sums ``value_var`` over all facts matching ``atom``; inner variables that
    occur nowhere else in the rule are summed over, inner variables shared
    with the rest of the rule act as grouping keys.
    """

    var: Var
    value_var: Var
    atom: Atom


Literal = Union[Atom, Comparison, Binding, Aggregation]


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple[Literal, ...]


@dataclass
class Program:
    """A parsed rule set plus its ground facts.

    ``strata`` maps predicate name to stratum number once :func:`stratify`
    has run; evaluation requires it and computes it on demand.
    """

    rules: list[Rule]
    facts: list[Atom]
    strata: dict[str, int] | None = field(default=None)

    def predicates(self) -> set[str]:
        preds: set[str] = set()
        for fact in self.facts:
            preds.add(fact.pred)
        for rule in self.rules:
            preds.add(rule.head.pred)
            for lit in rule.body:
                if isinstance(lit, Atom):
                    preds.add(lit.pred)
                elif isinstance(lit, Aggregation):
                    preds.add(lit.atom.pred)
        return preds


# ---------------------------------------------------------------------------
# Term order and formatting
# ---------------------------------------------------------------------------


def term_sort_key(term: Term) -> tuple:
    """Total order on ground terms: numbers by value first, then symbols."""
    if isinstance(term, float):
        return (0, term, "")
    if isinstance(term, str):
        return (1, 0.0, term)
    raise TypeError(f"not a ground term: {term!r}")


def atom_sort_key(atom: Atom) -> tuple:
    return (atom.pred, atom.arity, tuple(term_sort_key(a) for a in atom.args))


def format_number(value: float) -> str:
    """Integer-valued floats print without a decimal point, others shortest
    round-trip (``repr``). Non-finite values fall back to repr; they cannot
    re-parse, but they only arise from degenerate rule arithmetic."""
    if math.isfinite(value) and value == int(value):
        return str(int(value))
    return repr(value)


def format_term(term: Term) -> str:
    if isinstance(term, float):
        return format_number(term)
    if isinstance(term, str):
        return term
    return term.name


def format_expr(expr: Expr) -> str:
    if isinstance(expr, BinOp):
        return f"({format_expr(expr.left)} {expr.op} {format_expr(expr.right)})"
    if isinstance(expr, Neg):
        return f"(-{format_expr(expr.operand)})"
    return format_term(expr)


def format_atom(atom: Atom) -> str:
    args = ",".join(format_term(a) for a in atom.args)
    return f"{atom.pred}({args})"


def format_literal(lit: Literal) -> str:
    if isinstance(lit, Atom):
        return format_atom(lit)
    if isinstance(lit, Comparison):
        return f"{format_expr(lit.left)} {lit.op} {format_expr(lit.right)}"
    if isinstance(lit, Binding):
        return f"{lit.var.name} is {format_expr(lit.expr)}"
    return f"{lit.var.name} is sum({lit.value_var.name} : {format_atom(lit.atom)})"


def format_rule(rule: Rule) -> str:
    body = ", ".join(format_literal(lit) for lit in rule.body)
    return f"{format_atom(rule.head)} :- {body}."


def format_fact(atom: Atom) -> str:
    return f"{format_atom(atom)}."


def program_to_text(program: Program) -> str:
    """Printable form that re-parses to an equivalent program."""
    lines = [format_fact(f) for f in program.facts]
    lines.extend(format_rule(r) for r in program.rules)
    return "\n".join(lines) + ("\n" if lines else "")


def expr_variables(expr: Expr) -> Iterator[Var]:
    if isinstance(expr, Var):
        yield expr
    elif isinstance(expr, BinOp):
        yield from expr_variables(expr.left)
        yield from expr_variables(expr.right)
    elif isinstance(expr, Neg):
        yield from expr_variables(expr.operand)


def literal_variables(lit: Literal) -> Iterator[Var]:
    """All variables occurring anywhere in the literal."""
    if isinstance(lit, Atom):
        yield from lit.variables()
    elif isinstance(lit, Comparison):
        yield from expr_variables(lit.left)
        yield from expr_variables(lit.right)
    elif isinstance(lit, Binding):
        yield lit.var
        yield from expr_variables(lit.expr)
    else:
        yield lit.var
        yield lit.value_var
        yield from lit.atom.variables()


def substitute(atom: Atom, subst: dict[Var, Term]) -> Atom:
    """Apply a substitution to an atom (bound variables become ground terms)."""
    return Atom(atom.pred, tuple(subst.get(a, a) if isinstance(a, Var) else a for a in atom.args))
