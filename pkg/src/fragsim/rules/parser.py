"""Lexer and recursive-descent parser for the rule language.

Grammar (``%`` starts a line comment, clauses end with ``.``)::

    program     := { clause }
    clause      := (fact | rule) "."
    fact        := atom
    rule        := atom ":-" literal {"," literal}
    atom        := ident "(" term {"," term} ")"
    term        := VARIABLE | NUMBER | ident
    literal     := atom | comparison | binding | aggregation
    comparison  := expr ("==" | "!=" | "<" | ">" | "<=" | ">=") expr
    binding     := VARIABLE "is" expr
    aggregation := VARIABLE "is" "sum" "(" VARIABLE ":" atom ")"
    expr        := arithmetic over terms with + - * / and parentheses

VARIABLE matches ``[A-Z_][A-Za-z0-9_]*``, ident matches ``[a-z][A-Za-z0-9_]*``
and NUMBER is a decimal literal with optional fraction and exponent. ``is``
and ``sum`` are reserved words. A bare ``_`` is an anonymous variable, fresh
at each occurrence.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .ast import (
    COMPARISON_OPS,
    Aggregation,
    Atom,
    BinOp,
    Binding,
    Comparison,
    Expr,
    Literal,
    Neg,
    Program,
    Rule,
    Term,
    Var,
    expr_variables,
    literal_variables,
)

RESERVED_WORDS = frozenset({"is", "sum"})

_TOKEN_RE = re.compile(
    r"""
      (?P<ws>\s+)
    | (?P<comment>%[^\n]*)
    | (?P<number>\d+(\.\d+)?([eE][+-]?\d+)?)
    | (?P<variable>[A-Z_][A-Za-z0-9_]*)
    | (?P<ident>[a-z][A-Za-z0-9_]*)
    | (?P<punct>:-|==|!=|<=|>=|[<>.,()+\-*/:])
    """,
    re.VERBOSE,
)


class ParseError(Exception):
    """Syntax, safety, or arity error with source position."""

    def __init__(self, message: str, line: int, column: int, category: str = "syntax error"):
        super().__init__(f"{category} at {line}:{column}: {message}")
        self.message = message
        self.line = line
        self.column = column
        self.category = category


@dataclass(frozen=True)
class Token:
    kind: str  # "number" | "variable" | "ident" | "punct" | "eof"
    text: str
    line: int
    column: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        lexeme = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, lexeme, line, col))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        pos = m.end()
    tokens.append(Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0
        self.arities: dict[str, int] = {}
        self._anon_counter = 0

    # -- token helpers ------------------------------------------------------

    @property
    def cur(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.cur
        self.pos += 1
        return tok

    def at_punct(self, *texts: str) -> bool:
        return self.cur.kind == "punct" and self.cur.text in texts

    def expect_punct(self, text: str) -> Token:
        if not self.at_punct(text):
            self.error(f"expected {text!r}")
        return self.advance()

    def error(self, message: str, tok: Token | None = None) -> None:
        tok = tok or self.cur
        raise ParseError(message, tok.line, tok.column)

    # -- grammar ------------------------------------------------------------

    def parse_program(self) -> Program:
        rules: list[Rule] = []
        facts: list[Atom] = []
        positions: list[Token] = []
        while self.cur.kind != "eof":
            start = self.cur
            clause_rule, clause_fact = self.parse_clause()
            if clause_rule is not None:
                rules.append(clause_rule)
                positions.append(start)
            else:
                assert clause_fact is not None
                if not clause_fact.is_ground():
                    self.error("facts must be ground", start)
                facts.append(clause_fact)
        for rule, start in zip(rules, positions):
            _check_safety(rule, start)
        return Program(rules=rules, facts=facts)

    def parse_clause(self) -> tuple[Rule | None, Atom | None]:
        head = self.parse_atom()
        if self.at_punct(":-"):
            self.advance()
            body = [self.parse_literal()]
            while self.at_punct(","):
                self.advance()
                body.append(self.parse_literal())
            self.expect_punct(".")
            return Rule(head, tuple(body)), None
        self.expect_punct(".")
        return None, head

    def parse_atom(self) -> Atom:
        tok = self.cur
        if tok.kind != "ident":
            self.error("expected predicate name")
        if tok.text in RESERVED_WORDS:
            self.error(f"{tok.text!r} is a reserved word")
        self.advance()
        self.expect_punct("(")
        args = [self.parse_term()]
        while self.at_punct(","):
            self.advance()
            args.append(self.parse_term())
        self.expect_punct(")")
        atom = Atom(tok.text, tuple(args))
        known = self.arities.get(atom.pred)
        if known is None:
            self.arities[atom.pred] = atom.arity
        elif known != atom.arity:
            raise ParseError(
                f"{atom.pred} used with arity {atom.arity} here, {known} earlier",
                tok.line,
                tok.column,
                category="inconsistent arity",
            )
        return atom

    def parse_term(self) -> Term:
        tok = self.cur
        if tok.kind == "variable":
            self.advance()
            return self._make_var(tok.text)
        if tok.kind == "number":
            self.advance()
            return float(tok.text)
        if self.at_punct("-") and self.tokens[self.pos + 1].kind == "number":
            self.advance()
            return -float(self.advance().text)
        if tok.kind == "ident":
            if tok.text in RESERVED_WORDS:
                self.error(f"{tok.text!r} is a reserved word")
            self.advance()
            return tok.text
        self.error("expected term")
        raise AssertionError  # unreachable

    def _make_var(self, name: str) -> Var:
        if name == "_":
            self._anon_counter += 1
            return Var(f"_{self._anon_counter}")
        return Var(name)

    def parse_literal(self) -> Literal:
        # atom: ident followed by "(" (expressions never apply idents)
        nxt = self.tokens[self.pos + 1]
        if self.cur.kind == "ident" and nxt.kind == "punct" and nxt.text == "(":
            return self.parse_atom()
        # binding / aggregation: VARIABLE "is" ...
        if self.cur.kind == "variable" and nxt.kind == "ident" and nxt.text == "is":
            var = self._make_var(self.advance().text)
            self.advance()  # "is"
            if self.cur.kind == "ident" and self.cur.text == "sum":
                return self.parse_aggregation(var)
            return Binding(var, self.parse_expr())
        # otherwise a comparison
        left = self.parse_expr()
        if not self.at_punct(*COMPARISON_OPS):
            self.error("expected comparison operator")
        op = self.advance().text
        right = self.parse_expr()
        return Comparison(op, left, right)

    def parse_aggregation(self, var: Var) -> Aggregation:
        self.advance()  # "sum"
        self.expect_punct("(")
        tok = self.cur
        if tok.kind != "variable":
            self.error("expected value variable in sum(...)")
        value_var = self._make_var(self.advance().text)
        self.expect_punct(":")
        atom = self.parse_atom()
        self.expect_punct(")")
        if value_var not in set(atom.variables()):
            self.error(f"sum value variable {value_var.name} does not occur in {atom.pred}", tok)
        return Aggregation(var, value_var, atom)

    # expr := mul {("+"|"-") mul} ; mul := unary {("*"|"/") unary}
    def parse_expr(self) -> Expr:
        left = self.parse_mul()
        while self.at_punct("+", "-"):
            op = self.advance().text
            left = BinOp(op, left, self.parse_mul())
        return left

    def parse_mul(self) -> Expr:
        left = self.parse_unary()
        while self.at_punct("*", "/"):
            op = self.advance().text
            left = BinOp(op, left, self.parse_unary())
        return left

    def parse_unary(self) -> Expr:
        if self.at_punct("-"):
            self.advance()
            return Neg(self.parse_unary())
        if self.at_punct("("):
            self.advance()
            inner = self.parse_expr()
            self.expect_punct(")")
            return inner
        tok = self.cur
        if tok.kind == "variable":
            self.advance()
            return self._make_var(tok.text)
        if tok.kind == "number":
            self.advance()
            return float(tok.text)
        if tok.kind == "ident":
            if tok.text in RESERVED_WORDS:
                self.error(f"{tok.text!r} is a reserved word")
            self.advance()
            return tok.text
        self.error("expected expression")
        raise AssertionError  # unreachable


def _unsafe(message: str, tok: Token) -> ParseError:
    return ParseError(message, tok.line, tok.column, category="unsafe rule")


def _check_safety(rule: Rule, start: Token) -> None:
    """Range restriction: head variables and expression operands must be
    bound left-to-right by positive atoms, bindings, or aggregations."""
    head_vars = set(rule.head.variables())
    literal_var_sets = [set(literal_variables(lit)) for lit in rule.body]

    bound: set[Var] = set()

    def require_bound(variables, context: str) -> None:
        for v in variables:
            if v not in bound:
                raise _unsafe(f"variable {v.name} unbound in {context}", start)

    for index, lit in enumerate(rule.body):
        if isinstance(lit, Atom):
            bound.update(lit.variables())
        elif isinstance(lit, Comparison):
            require_bound(expr_variables(lit.left), "comparison")
            require_bound(expr_variables(lit.right), "comparison")
        elif isinstance(lit, Binding):
            require_bound(expr_variables(lit.expr), "binding expression")
            bound.add(lit.var)
        else:  # Aggregation
            v = lit.value_var
            used_elsewhere = v in head_vars or v == lit.var or any(
                v in vs for i, vs in enumerate(literal_var_sets) if i != index
            )
            if v in bound or used_elsewhere:
                raise _unsafe(f"sum value variable {v.name} must be fresh", start)
            bound.add(lit.var)
            bound.update(w for w in lit.atom.variables() if w != v)
    for v in head_vars:
        if v not in bound:
            raise _unsafe(f"variable {v.name} not bound in body", start)


def parse_program(text: str) -> Program:
    """Parse rule-language source into a (not yet stratified) Program.

    Raises:
        ParseError: on syntax errors (with line/column), unsafe rules, or
            inconsistent predicate arities.
    """
    return _Parser(text).parse_program()


def parse_goal(text: str) -> Atom:
    """Parse a single atom, optionally period-terminated, for use as a query
    goal. Variables are allowed."""
    parser = _Parser(text)
    atom = parser.parse_atom()
    if parser.at_punct("."):
        parser.advance()
    if parser.cur.kind != "eof":
        parser.error("unexpected input after goal")
    return atom
