import math
import random

from fragsim.costs import (
    AccessStats,
    CostFactors,
    FragmentSpec,
    TRANSFER_COST_RULE,
    check_capacity,
    emit_network_facts,
    execution_cost,
    network_fact_atoms,
    total_transmission_cost,
    transfer_cost,
    transfer_cost_atoms,
)
from fragsim.network import build_graph, contract_routers
from fragsim.rules import FactBase, evaluate, parse_program

from oracles import random_topology


def _two_site_links(delay=5.0, bandwidth=2.0):
    graph = build_graph(
        {"sites": [{"id": 1}, {"id": 3}], "routers": [],
         "edges": [{"endpoints": [1, 3], "delay": delay, "bandwidth": bandwidth}]}
    )
    return contract_routers(graph)


def test_transfer_cost_worked_value():
    links = _two_site_links()
    factors = CostFactors(other_cost={(1, 3): 5.0, (3, 1): 5.0})
    frag = FragmentSpec(3, size=1.0, units=1.0)
    assert transfer_cost(1, 3, frag, links, factors) == 12.5


def test_transfer_cost_local_is_zero():
    links = _two_site_links()
    frag = FragmentSpec(7, size=4.0, units=1.0)
    assert transfer_cost(1, 1, frag, links, CostFactors()) == 0.0


def test_transfer_cost_zero_user_factor():
    links = _two_site_links()
    factors = CostFactors(user_factor={(1, 3): 0.0})
    frag = FragmentSpec(7, size=4.0, units=1.0)
    assert transfer_cost(1, 3, frag, links, factors) == 0.0


def test_total_transmission_cost_two_term_sum():
    links = _two_site_links(delay=1.0, bandwidth=1.0)
    factors = CostFactors(other_cost={(1, 3): 2.0, (3, 1): 2.0})
    fragments = {7: FragmentSpec(7, size=1.0, units=1.0)}
    stats = AccessStats(req_overrides={(1, 7): 3.0, (3, 7): 5.0})
    placement = {7: 3}
    # t(1,3) = 1*1*1*1*2 = 2, so 3*2 + 5*0(local) = 6
    assert total_transmission_cost(placement, stats, links, factors, fragments) == 6.0


def test_total_transmission_cost_all_local_zero():
    links = _two_site_links()
    fragments = {7: FragmentSpec(7, size=1.0, units=1.0)}
    stats = AccessStats(req_overrides={(1, 7): 3.0})
    assert total_transmission_cost({7: 1}, stats, links, CostFactors(), fragments) == 0.0


def test_total_transmission_cost_linear_in_r():
    links = _two_site_links()
    fragments = {7: FragmentSpec(7, size=2.0, units=1.0)}
    base = AccessStats(req_overrides={(1, 7): 3.0})
    doubled = AccessStats(req_overrides={(1, 7): 6.0})
    factors = CostFactors()
    one = total_transmission_cost({7: 3}, base, links, factors, fragments)
    two = total_transmission_cost({7: 3}, doubled, links, factors, fragments)
    assert two == 2 * one


def test_check_capacity_violation():
    fragments = {
        "fa": FragmentSpec("fa", size=1.0, units=6.0),
        "fb": FragmentSpec("fb", size=1.0, units=5.0),
    }
    violations = check_capacity({"fa": 1, "fb": 1}, fragments, {1: 10.0})
    assert violations == [(1, 11.0, 10.0)]
    assert check_capacity({"fa": 1, "fb": 2}, fragments, {1: 10.0, 2: 10.0}) == []
    assert check_capacity({}, {}, {1: 10.0}) == []


def test_check_capacity_permutation_invariant():
    rng = random.Random(5)
    fragments = {
        i: FragmentSpec(i, size=1.0, units=float(rng.randint(1, 4))) for i in range(10)
    }
    placement = {i: rng.choice([1, 2]) for i in range(10)}
    capacities = {1: 12.0, 2: 12.0}
    expected = check_capacity(placement, fragments, capacities)
    items = list(placement.items())
    rng.shuffle(items)
    assert check_capacity(dict(items), fragments, capacities) == expected


def test_execution_cost_sums_counters():
    stats = AccessStats()
    stats.record(1, 7, "se", 2)
    stats.record(1, 7, "up", 3)
    assert execution_cost(stats, CostFactors()) == 5.0
    assert execution_cost(AccessStats(), CostFactors()) == 0.0
    weighted = CostFactors(exec_weight={(1, 7, "se"): 2.0, (1, 7, "up"): 2.0})
    assert execution_cost(stats, weighted) == 10.0


def test_req_defaults_to_summed_counters():
    stats = AccessStats()
    stats.record(2, 7, "se", 4)
    stats.record(2, 7, "de", 1)
    assert stats.req(2, 7) == 5.0
    stats.req_overrides[(2, 7)] = 9.0
    assert stats.req(2, 7) == 9.0


# -- fact emission -------------------------------------------------------------


def _emission_inputs():
    links = _two_site_links()
    factors = CostFactors(other_cost={(1, 3): 5.0, (3, 1): 5.0})
    fragments = {7: FragmentSpec(7, size=2.0, units=3.0)}
    stats = AccessStats()
    stats.record(1, 7, "se", 2)
    placement = {7: 1}
    adjacency = [(1, 3)]
    capacities = {1: 10.0, 3: 10.0}
    return links, factors, fragments, stats, placement, adjacency, capacities


def test_emit_network_facts_exact_lines():
    links, factors, fragments, stats, placement, adjacency, capacities = _emission_inputs()
    text = emit_network_facts(
        links, factors, fragments, stats, placement, adjacency, capacities, [1, 3]
    )
    lines = text.splitlines()
    assert "delay(1,3,5)." in lines
    assert "reverse_bandwidth(1,3,0.5)." in lines
    assert "other(1,3,5)." in lines
    assert "user_defined_parameter(1,3,1)." in lines
    assert "size(7,2)." in lines
    assert "units(7,3)." in lines
    assert "freq(1,7,se,2)." in lines
    assert "req(1,7,2)." in lines
    assert "req(3,7,0)." in lines
    assert "placed(7,1)." in lines
    assert "adjacent(1,3)." in lines
    assert "adjacent(3,1)." in lines
    assert "capacity(1,10)." in lines
    assert lines == sorted(lines)  # predicate-name then term order


def test_emit_infinite_bandwidth_encodes_zero():
    links = _two_site_links(bandwidth=math.inf)
    text = emit_network_facts(
        links, CostFactors(), {}, AccessStats(), {}, [], {}, [1, 3]
    )
    assert "reverse_bandwidth(1,3,0)." in text.splitlines()


def test_emit_empty_fragments_no_size_units_placed():
    links = _two_site_links()
    text = emit_network_facts(
        links, CostFactors(), {}, AccessStats(), {}, [], {}, [1, 3]
    )
    assert "size(" not in text
    assert "units(" not in text
    assert "placed(" not in text


def test_emitted_facts_round_trip_through_parser():
    links, factors, fragments, stats, placement, adjacency, capacities = _emission_inputs()
    atoms = network_fact_atoms(
        links, factors, fragments, stats, placement, adjacency, capacities, [1, 3]
    )
    text = emit_network_facts(
        links, factors, fragments, stats, placement, adjacency, capacities, [1, 3]
    )
    reparsed = parse_program(text)
    assert reparsed.rules == []
    assert sorted(map(str, reparsed.facts)) == sorted(map(str, atoms))


def test_engine_rule_matches_direct_transfer_cost_on_random_networks():
    """Fragment ids doubling as site ids (one fragment homed per site), the
    layout under which the engine rule and the direct computation coincide."""
    rng = random.Random(99)
    for _ in range(30):
        graph = build_graph(random_topology(rng, max_elements=8))
        links = contract_routers(graph)
        sites = sorted(graph.sites)
        factors = CostFactors(
            user_factor={
                (i, j): float(rng.randint(1, 3))
                for i in sites for j in sites if i != j
            },
            other_cost={
                (i, j): rng.choice([0.5, 1.0, 2.0, 5.0])
                for i in sites for j in sites if i != j
            },
        )
        fragments = {
            s: FragmentSpec(s, size=rng.choice([0.5, 1.0, 2.0]), units=1.0)
            for s in sites
        }
        placement = {s: s for s in sites}
        atoms = network_fact_atoms(
            links, factors, fragments, AccessStats(), placement, [], {}, sites
        )
        program = parse_program(TRANSFER_COST_RULE)
        derived = evaluate(program, FactBase(atoms))
        engine_values = {
            (int(a.args[0]), int(a.args[1])): a.args[2]
            for a in derived
            if a.pred == "transfer_cost"
        }
        for i in sites:
            for j in sites:
                if i == j or (i, j) not in links:
                    continue
                direct = transfer_cost(i, j, fragments[j], links, factors)
                assert engine_values[(i, j)] == direct
        for i in sites:
            assert transfer_cost(i, i, fragments[i], links, factors) == 0.0


def test_transfer_cost_atoms_track_holder():
    links, factors, fragments, stats, placement, adjacency, capacities = _emission_inputs()
    atoms = transfer_cost_atoms([1, 3], fragments, {7: 1}, links, factors)
    values = {(a.args[0], a.args[1]): a.args[2] for a in atoms}
    assert values[(1.0, 7.0)] == 0.0  # holder
    assert values[(3.0, 7.0)] == transfer_cost(3, 1, fragments[7], links, factors)
