"""Two-mode construction, one-mode projection, and the graph container."""

import io
import itertools

import numpy as np
import pytest

from conftest import make_case
from surgnet.records import Segment
from surgnet.network import (
    CoworkerGraph,
    build_bipartite,
    project_one_mode,
    summarize,
    write_edge_list,
)


def seg(cases, index=1, start=0, end=365):
    return Segment(index=index, start_day=start, end_day_exclusive=end,
                   cases=tuple(cases))


def test_bipartite_links_each_case_to_its_providers():
    s = seg([make_case("c1", providers=("a", "b")),
             make_case("c2", providers=("b", "c"))])
    bg = build_bipartite(s)
    assert bg.case_nodes == {"c1", "c2"}
    assert bg.provider_nodes == {"a", "b", "c"}
    assert bg.edges == {("c1", "a"), ("c1", "b"), ("c2", "b"), ("c2", "c")}


def test_projection_makes_clique_per_case():
    s = seg([make_case("c1", providers=("a", "b", "c"))])
    g = project_one_mode(build_bipartite(s))
    assert g.nodes == ("a", "b", "c")
    assert list(g.edges()) == [("a", "b"), ("a", "c"), ("b", "c")]


def test_projection_collapses_repeats_but_counts_them():
    s = seg([make_case("c1", providers=("a", "b")),
             make_case("c2", providers=("a", "b")),
             make_case("c3", providers=("b", "c"))])
    g = project_one_mode(build_bipartite(s))
    assert g.n_edges == 2
    assert g.pair_counts == {("a", "b"): 2, ("b", "c"): 1}


def test_solo_provider_is_isolated_node():
    s = seg([make_case("c1", providers=("a",)),
             make_case("c2", providers=("b", "c"))])
    g = project_one_mode(build_bipartite(s))
    assert "a" in g
    assert g.neighbors("a") == ()
    assert g.n_nodes == 3 and g.n_edges == 1


def test_graph_container_invariants():
    g = CoworkerGraph(["d", "b", "a", "c"], [("d", "a"), ("b", "a")])
    assert g.nodes == ("a", "b", "c", "d")
    assert list(g.edges()) == [("a", "b"), ("a", "d")]
    assert list(g.degrees()) == [2, 1, 0, 1]
    assert g.neighbors("a") == ("b", "d")
    assert g.has_edge("a", "d") and g.has_edge("d", "a")
    assert not g.has_edge("b", "d") and not g.has_edge("a", "c")
    assert "q" not in g
    assert "n_nodes=4" in repr(g)


def test_graph_rejects_self_loops():
    with pytest.raises(ValueError, match="self-loop"):
        CoworkerGraph(["a"], [("a", "a")])


def test_graph_deduplicates_edges_either_orientation():
    g = CoworkerGraph(["a", "b"], [("a", "b"), ("b", "a")])
    assert g.n_edges == 1


def test_graph_construction_is_input_order_independent():
    rng = np.random.default_rng(3)
    nodes = [f"p{i}" for i in range(12)]
    edges = [(u, v) for u, v in itertools.combinations(nodes, 2)
             if rng.uniform() < 0.4]
    shuffled = [(v, u) for u, v in reversed(edges)]
    rng.shuffle(shuffled)
    a = CoworkerGraph(reversed(nodes), shuffled)
    b = CoworkerGraph(nodes, edges)
    assert a.nodes == b.nodes
    assert np.array_equal(a.indptr, b.indptr)
    assert np.array_equal(a.indices, b.indices)


def test_summarize_hand_computed():
    s = seg([make_case("c1", providers=("a", "b", "c")),
             make_case("c2", providers=("c", "d"))])
    g = project_one_mode(build_bipartite(s))
    info = summarize(g, s)
    assert info.node_count == 4
    assert info.edge_count == 4
    assert info.case_count == 2
    assert info.avg_team_size == pytest.approx(2.5)
    assert info.avg_degree == pytest.approx(2.0)
    assert info.density == pytest.approx(4 / 6)


def test_summarize_empty_segment():
    s = seg([])
    g = project_one_mode(build_bipartite(s))
    info = summarize(g, s)
    assert (info.node_count, info.edge_count, info.case_count) == (0, 0, 0)
    assert info.avg_team_size == info.avg_degree == info.density == 0.0


def test_write_edge_list_stream_and_path(tmp_path):
    g = CoworkerGraph(["a", "b", "c"], [("b", "c"), ("a", "c")])
    buf = io.StringIO()
    write_edge_list(g, buf)
    assert buf.getvalue() == "a\tc\nb\tc\n"
    path = tmp_path / "edges.tsv"
    write_edge_list(g, path)
    assert path.read_text() == "a\tc\nb\tc\n"


def test_projection_equals_union_of_cliques_on_random_segments():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n_cases = int(rng.integers(1, 12))
        pool = [f"p{i}" for i in range(int(rng.integers(2, 15)))]
        cases = []
        for k in range(n_cases):
            size = int(rng.integers(1, min(6, len(pool)) + 1))
            team = rng.choice(pool, size=size, replace=False)
            cases.append(make_case(f"c{k}", providers=tuple(team)))
        g = project_one_mode(build_bipartite(seg(cases)))

        expected_edges = set()
        for c in cases:
            expected_edges |= set(itertools.combinations(sorted(c.providers), 2))
        expected_nodes = set().union(*(c.providers for c in cases))

        assert set(g.nodes) == expected_nodes
        assert set(g.edges()) == expected_edges
        for c in cases:  # each team really is a clique
            for u, v in itertools.combinations(sorted(c.providers), 2):
                assert g.has_edge(u, v)
