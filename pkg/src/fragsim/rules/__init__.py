"""Embedded rule language: parser, stratifier, and fixpoint engine."""

from .ast import (
    Aggregation,
    Atom,
    BinOp,
    Binding,
    Comparison,
    Neg,
    Program,
    Rule,
    Term,
    Var,
    atom_sort_key,
    format_atom,
    format_fact,
    format_number,
    format_rule,
    format_term,
    program_to_text,
    substitute,
    term_sort_key,
)
from .engine import (
    DEFAULT_FACT_CAP,
    EvaluationError,
    FactBase,
    FactBaseError,
    QueryResult,
    StratificationError,
    evaluate,
    query,
    stratify,
    update_facts,
)
from .parser import ParseError, parse_goal, parse_program

__all__ = [
    "Aggregation",
    "Atom",
    "BinOp",
    "Binding",
    "Comparison",
    "DEFAULT_FACT_CAP",
    "EvaluationError",
    "FactBase",
    "FactBaseError",
    "Neg",
    "ParseError",
    "Program",
    "QueryResult",
    "Rule",
    "StratificationError",
    "Term",
    "Var",
    "atom_sort_key",
    "evaluate",
    "format_atom",
    "format_fact",
    "format_number",
    "format_rule",
    "format_term",
    "parse_goal",
    "parse_program",
    "program_to_text",
    "query",
    "stratify",
    "substitute",
    "term_sort_key",
    "update_facts",
]
