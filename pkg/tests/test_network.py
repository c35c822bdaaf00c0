import math
import random

import pytest

from fragsim.network import (
    MissingLinkError,
    TopologyError,
    build_graph,
    contract_routers,
    derive_adjacency,
)

from oracles import contraction_oracle, random_topology


def test_minimal_two_site_graph():
    graph = build_graph(
        {"sites": [{"id": 1}, {"id": 2}], "routers": [],
         "edges": [{"endpoints": [1, 2], "delay": 3}]}
    )
    assert len(graph.sites) == 2
    assert len(graph.edges) == 1


def test_unknown_endpoint_rejected():
    with pytest.raises(TopologyError) as err:
        build_graph(
            {"sites": [{"id": 1}, {"id": 2}], "routers": [],
             "edges": [{"endpoints": [1, 99], "delay": 1}]}
        )
    assert "unknown endpoint" in str(err.value)


def test_duplicate_id_rejected_across_kinds():
    with pytest.raises(TopologyError) as err:
        build_graph({"sites": [{"id": 1}], "routers": [{"id": 1}], "edges": []})
    assert "duplicate id" in str(err.value)


def test_negative_delay_rejected():
    with pytest.raises(TopologyError):
        build_graph(
            {"sites": [{"id": 1}, {"id": 2}], "routers": [],
             "edges": [{"endpoints": [1, 2], "delay": -1}]}
        )


def test_non_positive_bandwidth_rejected():
    with pytest.raises(TopologyError):
        build_graph(
            {"sites": [{"id": 1}, {"id": 2}], "routers": [],
             "edges": [{"endpoints": [1, 2], "delay": 1, "bandwidth": 0}]}
        )


def test_self_loop_rejected():
    with pytest.raises(TopologyError):
        build_graph(
            {"sites": [{"id": 1}], "routers": [],
             "edges": [{"endpoints": [1, 1], "delay": 1}]}
        )


def _five_site_topology():
    # five sites behind three routers: site-router chains plus two direct
    # site-site edges
    return {
        "sites": [{"id": i} for i in range(1, 6)],
        "routers": [
            {"id": "r1", "delay": 1},
            {"id": "r2", "delay": 2},
            {"id": "r3", "delay": 1},
        ],
        "edges": [
            {"endpoints": [5, "r1"], "delay": 2, "bandwidth": 10},
            {"endpoints": ["r1", 3], "delay": 3, "bandwidth": 4},
            {"endpoints": [1, "r2"], "delay": 1},
            {"endpoints": ["r2", 2], "delay": 1},
            {"endpoints": [2, "r3"], "delay": 2},
            {"endpoints": ["r3", 4], "delay": 1},
            {"endpoints": [1, 4], "delay": 7},
            {"endpoints": [4, 5], "delay": 3, "bandwidth": 8},
        ],
    }


def test_five_site_three_router_topology_accepted():
    graph = build_graph(_five_site_topology())
    assert len(graph.sites) == 5
    assert len(graph.routers) == 3


def test_router_chain_contraction_hand_example():
    # site5 --a(d=2,w=10)-- r1(d=1) --b(d=3,w=4)-- site3: delay 6, bandwidth 4
    graph = build_graph(
        {
            "sites": [{"id": 5}, {"id": 3}],
            "routers": [{"id": "r1", "delay": 1}],
            "edges": [
                {"endpoints": [5, "r1"], "delay": 2, "bandwidth": 10},
                {"endpoints": ["r1", 3], "delay": 3, "bandwidth": 4},
            ],
        }
    )
    link = contract_routers(graph).get(5, 3)
    assert link.delay == 6
    assert link.bandwidth == 4


def test_direct_edge_infinite_bandwidth():
    graph = build_graph(
        {"sites": [{"id": 1}, {"id": 2}], "routers": [],
         "edges": [{"endpoints": [1, 2], "delay": 7}]}
    )
    link = contract_routers(graph).get(1, 2)
    assert link.delay == 7
    assert math.isinf(link.bandwidth)


def test_delay_minimal_path_wins_over_wider_path():
    # two router paths: delay 6 / bandwidth 4 versus delay 9 / bandwidth 100
    graph = build_graph(
        {
            "sites": [{"id": 1}, {"id": 2}],
            "routers": [{"id": "ra", "delay": 0}, {"id": "rb", "delay": 1}],
            "edges": [
                {"endpoints": [1, "ra"], "delay": 3, "bandwidth": 4},
                {"endpoints": ["ra", 2], "delay": 3, "bandwidth": 10},
                {"endpoints": [1, "rb"], "delay": 4, "bandwidth": 100},
                {"endpoints": ["rb", 2], "delay": 4, "bandwidth": 100},
            ],
        }
    )
    link = contract_routers(graph).get(1, 2)
    assert link.delay == 6
    assert link.bandwidth == 4


def test_sites_never_relay():
    # 1-2 and 2-3 direct edges exist, but 1-3 must not route through site 2
    graph = build_graph(
        {
            "sites": [{"id": 1}, {"id": 2}, {"id": 3}],
            "routers": [],
            "edges": [
                {"endpoints": [1, 2], "delay": 1},
                {"endpoints": [2, 3], "delay": 1},
            ],
        }
    )
    table = contract_routers(graph)
    assert (1, 3) not in table
    with pytest.raises(MissingLinkError):
        table.get(1, 3)


def test_self_links_zero_delay_infinite_bandwidth():
    graph = build_graph({"sites": [{"id": 1}], "routers": [], "edges": []})
    link = contract_routers(graph).get(1, 1)
    assert link.delay == 0
    assert math.isinf(link.bandwidth)


def test_lexicographic_tie_break():
    # both router paths have delay 2; ra < rb so ra's bandwidth is reported
    graph = build_graph(
        {
            "sites": [{"id": 1}, {"id": 2}],
            "routers": [{"id": "ra", "delay": 0}, {"id": "rb", "delay": 0}],
            "edges": [
                {"endpoints": [1, "ra"], "delay": 1, "bandwidth": 5},
                {"endpoints": ["ra", 2], "delay": 1, "bandwidth": 5},
                {"endpoints": [1, "rb"], "delay": 1, "bandwidth": 50},
                {"endpoints": ["rb", 2], "delay": 1, "bandwidth": 50},
            ],
        }
    )
    link = contract_routers(graph).get(1, 2)
    assert link.bandwidth == 5


def test_contraction_matches_enumeration_oracle_on_random_topologies():
    rng = random.Random(123)
    for _ in range(120):
        spec = random_topology(rng)
        graph = build_graph(spec)
        table = contract_routers(graph)
        expected = contraction_oracle(graph)
        actual = {pair: (link.delay, link.bandwidth) for pair, link in table.items()}
        assert actual == expected


def test_symmetry_on_random_topologies():
    rng = random.Random(321)
    for _ in range(40):
        graph = build_graph(random_topology(rng))
        table = contract_routers(graph)
        for (src, dst), link in table.items():
            mirror = table.get(dst, src)
            assert mirror.delay == link.delay
            assert mirror.bandwidth == link.bandwidth


def test_all_infinite_bandwidth_stays_infinite():
    rng = random.Random(7)
    for _ in range(20):
        spec = random_topology(rng)
        for edge in spec["edges"]:
            edge["bandwidth"] = math.inf
        table = contract_routers(build_graph(spec))
        assert all(math.isinf(link.bandwidth) for _, link in table.items())


def test_derive_adjacency_lists_router_free_edges():
    graph = build_graph(_five_site_topology())
    assert derive_adjacency(graph) == [(1, 4), (4, 5)]
