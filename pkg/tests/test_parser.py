import pytest

from fragsim.rules import (
    Aggregation,
    Atom,
    Binding,
    Comparison,
    ParseError,
    parse_goal,
    parse_program,
    program_to_text,
)


def test_single_fact():
    program = parse_program("p(1).")
    assert program.rules == []
    assert program.facts == [Atom("p", (1.0,))]


def test_missing_period_reports_line_and_column():
    with pytest.raises(ParseError) as err:
        parse_program("p(1)")
    assert err.value.line == 1
    assert err.value.column == 5
    assert "syntax error at 1:5" in str(err.value)


def test_transfer_cost_rule_has_six_literals():
    text = """\
transfer_cost(I,J,T) :- user_defined_parameter(I,J,U),
                        size(J,S),
                        reverse_bandwidth(I,J,W),
                        delay(I,J,D),
                        other(I,J,O),
                        T is U*S*W*D*O.
"""
    program = parse_program(text)
    assert len(program.rules) == 1
    rule = program.rules[0]
    assert rule.head.pred == "transfer_cost"
    assert len(rule.body) == 6
    assert isinstance(rule.body[-1], Binding)


def test_comments_and_whitespace_ignored():
    program = parse_program("% header\np(1). % trailing\n\n  q(2).\n")
    assert [f.pred for f in program.facts] == ["p", "q"]


def test_numbers_parse_to_floats():
    program = parse_program("v(0.5). v(12). v(1e-3). v(2.5e2).")
    values = sorted(f.args[0] for f in program.facts)
    assert values == [0.001, 0.5, 12.0, 250.0]


def test_negative_number_term():
    program = parse_program("t(-3).")
    assert program.facts[0].args == (-3.0,)


def test_comparison_and_binding_literals():
    program = parse_program("p(X,Y) :- q(X), Y is X*2, Y > 3.")
    body = program.rules[0].body
    assert isinstance(body[0], Atom)
    assert isinstance(body[1], Binding)
    assert isinstance(body[2], Comparison)


def test_aggregation_literal():
    program = parse_program("total(I,S) :- f(I,K,V), S is sum(W : g(I,W)).")
    assert isinstance(program.rules[0].body[1], Aggregation)


def test_unsafe_head_variable_named():
    with pytest.raises(ParseError) as err:
        parse_program("p(X,Y) :- q(X).")
    assert "Y" in str(err.value)
    assert "unsafe" in str(err.value)


def test_unsafe_comparison_variable():
    with pytest.raises(ParseError) as err:
        parse_program("p(X) :- q(X), Y > 2.")
    assert "Y" in str(err.value)


def test_binding_expression_must_use_bound_variables():
    with pytest.raises(ParseError):
        parse_program("p(X) :- q(X), Z is Y+1.")


def test_aggregation_value_variable_must_be_fresh():
    with pytest.raises(ParseError) as err:
        parse_program("p(X,S) :- q(X,V), S is sum(V : f(X,V)).")
    assert "V" in str(err.value)


def test_inconsistent_arity_rejected():
    with pytest.raises(ParseError) as err:
        parse_program("p(1). p(1,2).")
    assert "arity" in str(err.value)


def test_non_ground_fact_rejected():
    with pytest.raises(ParseError):
        parse_program("p(X).")


def test_anonymous_variables_are_fresh():
    # a shared _ would join the two columns and drop the (1,2) row
    program = parse_program("r(1,2). r(3,3). p(X) :- r(_,_), q(X). q(9).")
    rule = program.rules[0]
    body_vars = [v.name for v in rule.body[0].variables()]
    assert len(set(body_vars)) == 2


def test_reserved_words_rejected_as_predicates():
    with pytest.raises(ParseError):
        parse_program("sum(1).")
    with pytest.raises(ParseError):
        parse_program("is(1).")


def test_round_trip_through_printed_form():
    text = """\
p(1).
edge(1,2).
path(X,Y) :- edge(X,Y).
path(X,Z) :- edge(X,Y), path(Y,Z), X != Z.
total(I,S) :- p(I), S is sum(V : edge(I,V)).
cost(X,C) :- edge(X,Y), C is (X+Y)*2/4.
"""
    program = parse_program(text)
    reparsed = parse_program(program_to_text(program))
    assert reparsed.facts == program.facts
    assert reparsed.rules == program.rules


def test_parse_goal_allows_variables_and_period():
    goal = parse_goal("move(X,Y,7).")
    assert goal.pred == "move"
    assert goal.args[2] == 7.0


def test_parse_goal_rejects_trailing_garbage():
    with pytest.raises(ParseError):
        parse_goal("move(X,Y,Z) extra")
