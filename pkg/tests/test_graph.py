import numpy as np
import pytest
from hypothesis import given, strategies as st

from treewave import (NetworkFormatError, ValidationError, figure1_tree, parse_network, peel_schedule,
                      random_tree, serialize_network, single_edge, star_tree, validate_tree)
from treewave.graph import add_edge, relabel, tree_from_edges

from oracles import leaf_stripping_stages

seeds = st.integers(0, 2 ** 31)
sizes = st.integers(1, 40)


def test_figure1_counts():
    g = figure1_tree()
    assert len(g.edges) == 10
    assert len(g.internal_nodes) == 4 and len(g.external_nodes) == 7
    assert validate_tree(g) == []
    plan = peel_schedule(g, "Q7")
    assert plan.n_stages == 4
    assert [sorted(s.edge for s in st_) for st_ in plan.stages] == leaf_stripping_stages(g, "Q7")


def test_star_and_single_edge():
    assert validate_tree(single_edge(2.0)) == []
    s = star_tree((1.0, 2.0, 3.0))
    assert s.internal_nodes == ["P"] and s.degree("P") == 3
    assert peel_schedule(s, "Q1").n_stages == 2


@given(seeds, sizes)
def test_serialize_roundtrip(seed, n):
    g = random_tree(n, seed)
    g = g.with_potentials({e.id: list(np.linspace(0, 1, 3) * e.length) for e in g.edges[:2]})
    back = parse_network(serialize_network(g))
    assert serialize_network(back) == serialize_network(g)
    assert back.digest() == g.digest()


@given(seeds, sizes)
def test_schedule_matches_oracle(seed, n):
    g = random_tree(n, seed)
    rng = np.random.default_rng(seed)
    ext = g.external_nodes
    excluded = ext[rng.integers(len(ext))]
    plan = peel_schedule(g, excluded)
    assert [sorted(s.edge for s in st_) for st_ in plan.stages] == leaf_stripping_stages(g, excluded)
    # every edge exactly once, and each leaf really is a leaf of the reduced graph at its stage
    assert sorted(plan.edges()) == sorted(g.edge_ids)
    for stage in plan.stages:
        for s in stage:
            assert s.leaf != excluded


@given(seeds, sizes)
def test_relabel_invariance(seed, n):
    g = random_tree(n, seed)
    nm = {v: f"n{i}" for i, v in enumerate(reversed(g.node_ids))}
    em = {e: f"x{i}" for i, e in enumerate(reversed(g.edge_ids))}
    h = relabel(g, nm, em)
    ex = g.external_nodes[0]
    a = peel_schedule(g, ex)
    b = peel_schedule(h, nm[ex])
    assert [sorted(em[s.edge] for s in st_) for st_ in a.stages] == \
        [sorted(s.edge for s in st_) for st_ in b.stages]


@given(seeds, st.integers(2, 30))
def test_cycle_rejected(seed, n):
    g = random_tree(n, seed)
    rng = np.random.default_rng(seed)
    a, b = rng.choice(len(g.node_ids), 2, replace=False)
    cyc = add_edge(g, "extra", g.node_ids[a], g.node_ids[b], 1.0)
    assert validate_tree(cyc)
    with pytest.raises(ValidationError):
        peel_schedule(cyc, g.external_nodes[0])


def test_self_loop_and_disconnected():
    g = tree_from_edges([("e0", "A", "B", 1.0)])
    assert any("self-loop" in p for p in validate_tree(add_edge(g, "s", "A", "A", 1.0)))
    two = parse_network("node A external\nnode B external\nnode C external\nnode D external\n"
                        "edge e0 A B 1\nedge e1 C D 1\n")
    assert any("not connected" in p for p in validate_tree(two))


@pytest.mark.parametrize("text,line", [
    ("node A external\nnode A external\n", 2),
    ("node A external\nedge e0 A B 1.0\n", 2),
    ("node A external\nnode B external\nedge e0 A B -1\n", 3),
    ("node A external\nnode B external\nedge e0 A B x\n", 3),
    ("node A external\nnode B external\nedge e0 A B 1\npotential e0 3 1 2\n", 4),
    ("bogus line\n", 1),
])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(NetworkFormatError) as exc:
        parse_network(text)
    assert exc.value.lineno == line


def test_wrong_kind_degree():
    g = parse_network("node A external\nnode B internal\nedge e0 A B 1\n")
    assert any("internal node B" in p for p in validate_tree(g))


def test_excluded_must_be_external():
    with pytest.raises(ValidationError):
        peel_schedule(figure1_tree(), "P1")


def test_distances():
    g = figure1_tree()
    d = g.distances_from("Q7")
    assert d["P1"] == pytest.approx(g.edge("e0").length)
    assert d["Q5"] == pytest.approx(sum(g.edge(e).length for e in ("e0", "e5", "e7", "e8")))
