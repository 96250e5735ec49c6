import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xrtransfer.core import AspectAnnotation, Example
from xrtransfer.errors import EmptyTree, MalformedNode, MissingTree, PivotNotInTree, Unbalanced
from xrtransfer.frag import (NOUN_TAGS, OPINION_TAGS, decompose, find_fragment, locate_pivot,
                             noun_pivots, parse_bracketed, pivot_from_span)

FIXTURES = json.loads((Path(__file__).parent / "fixtures" / "frag_trees.json").read_text())


def fixture_pivots(tree, entry):
    if entry.get("nouns"):
        return noun_pivots(tree)
    if "phrases" in entry:
        return [locate_pivot(tree.tokens, p) for p in entry["phrases"]]
    return [pivot_from_span(tree.tokens, s) for s in entry["spans"]]


def run_fixture(fx):
    tree = parse_bracketed(fx["tree"])
    pivots = fixture_pivots(tree, fx["pivots"])
    strategy = fx.get("strategy", "filter-then-highest")
    return [find_fragment(tree, p, pivots, strategy) for p in pivots]


def test_fixture_corpus_size():
    assert len(FIXTURES) >= 12


@pytest.mark.parametrize("fx", FIXTURES, ids=[f["name"] for f in FIXTURES])
def test_fixture_spans(fx):
    got = run_fixture(fx)
    assert [list(f.span) for f in got] == fx["expected"]
    if "fallback" in fx:
        assert [f.fallback for f in got] == fx["fallback"]


# -- parsing ---------------------------------------------------------------

def test_parse_single_leaf():
    t = parse_bracketed("(S (NP (NN food)))")
    assert t.tokens == ("food",) and t.leaves[0].position == 0


@pytest.mark.parametrize("text", ["(S (NP (NN food)", "(S (NN a)))", ")("])
def test_unbalanced(text):
    with pytest.raises((Unbalanced, MalformedNode)):
        parse_bracketed(text)


def test_unbalanced_specific():
    with pytest.raises(Unbalanced):
        parse_bracketed("(S (NP (NN food)")


@pytest.mark.parametrize("text", ["(S)", "(NN a b)", "(S (NN a)) (S (NN b))", "food"])
def test_malformed(text):
    with pytest.raises(MalformedNode):
        parse_bracketed(text)


@pytest.mark.parametrize("text", ["", "   ", "(S (-NONE- *))"])
def test_empty(text):
    with pytest.raises(EmptyTree):
        parse_bracketed(text)


def canonical(text):
    """Independent pretty-printer: collapse whitespace around brackets."""
    out = " ".join(text.replace("(", " ( ").replace(")", " ) ").split())
    return out.replace("( ", "(").replace(" )", ")")


@pytest.mark.parametrize("fx", FIXTURES[:2] + FIXTURES[4:11], ids=lambda f: f["name"])
def test_round_trip(fx):
    assert parse_bracketed(fx["tree"]).to_string() == canonical(fx["tree"])


def test_round_trip_whitespace():
    messy = "(S\n  (NP (NN food) )\t(VP (VBZ rocks)))"
    assert parse_bracketed(messy).to_string() == "(S (NP (NN food)) (VP (VBZ rocks)))"


def test_noun_pivots():
    assert noun_pivots(parse_bracketed("(S (RB very) (JJ nice))")) == []
    t = parse_bracketed("(S (NP (NN food)) (VP (VBZ rocks)))")
    assert [p.span for p in noun_pivots(t)] == [(0, 1)]
    t = parse_bracketed("(S (NP (NNS fries) (JJ hot) (NN sauce)) (VP (VBZ rocks)))")
    assert [p.tokens for p in noun_pivots(t)] == [("fries",), ("sauce",)]


def test_locate_pivot_errors():
    with pytest.raises(PivotNotInTree):
        locate_pivot(["a", "b"], "c")
    with pytest.raises(PivotNotInTree):
        pivot_from_span(["a"], (0, 2))
    t = parse_bracketed("(S (NN a))")
    with pytest.raises(PivotNotInTree):
        find_fragment(t, pivot_from_span(["b"], (0, 1)), [])


# -- decompose -------------------------------------------------------------

def ex(text, aspects=()):
    tree = parse_bracketed(text)
    return Example("e", tree.tokens, aspects=aspects, tree=tree)


def test_decompose_zero_pivots():
    assert decompose(ex("(S (RB very) (JJ nice))")) == []


def test_decompose_aspect_labels_carry_over():
    e = ex(FIXTURES[1]["tree"], [AspectAnnotation((1, 3), 0), AspectAnnotation((8, 10), 1)])
    frags = decompose(e)
    assert [(f.span, f.gold_label) for f in frags] == [((0, 5), 0), ((7, 12), 1)]
    assert frags[0].tokens == ("the", "duck", "confit", "is", "flavorful")


def test_decompose_requires_tree():
    with pytest.raises(MissingTree):
        decompose(Example("e", ["a"]))


# -- invariants on random trees -------------------------------------------

TAGS = sorted(NOUN_TAGS) + ["JJ", "VBZ", "VBD", "DT", "IN", "RB", "CC", "PRP"]
PHRASES = ["S", "NP", "VP", "PP", "ADJP", "SBAR"]


def random_tree(rng, max_nodes=30):
    budget = [max_nodes]

    def build(depth):
        budget[0] -= 1
        if depth > 0 and (budget[0] <= 2 or rng.random() < 0.35 + 0.1 * depth):
            return f"({TAGS[rng.integers(len(TAGS))]} w{rng.integers(1000)})"
        kids = [build(depth + 1) for _ in range(rng.integers(1, 4)) if budget[0] > 0]
        if not kids:
            kids = [f"({TAGS[rng.integers(len(TAGS))]} w{rng.integers(1000)})"]
        return f"({PHRASES[rng.integers(len(PHRASES))]} {' '.join(kids)})"

    return parse_bracketed(build(0))


def satisfies(node, pivot, pivots, tree):
    covered = {i for p in pivots for i in range(*p.span)}
    dom = node.start <= pivot.span[0] and pivot.span[1] <= node.end
    opinion = any(leaf.label in OPINION_TAGS and leaf.position not in covered
                  and node.start <= leaf.position < node.end for leaf in tree.leaves)
    return dom and opinion


def pivot_count(node, pivots):
    return sum(node.start <= p.span[0] and p.span[1] <= node.end for p in pivots)


def check_invariants(tree):
    pivots = noun_pivots(tree)
    for p in pivots:
        fs = find_fragment(tree, p, pivots)
        assert fs.span[0] <= p.span[0] and p.span[1] <= fs.span[1]
        if fs.fallback:
            assert not any(satisfies(n, p, pivots, tree) for n in tree.nodes)
            continue
        assert satisfies(fs.node, p, pivots, tree)
        best = pivot_count(fs.node, pivots)
        for n in tree.nodes:
            if satisfies(n, p, pivots, tree):
                assert pivot_count(n, pivots) >= best
                if n.depth < fs.node.depth:
                    assert pivot_count(n, pivots) > best
    assert decompose(Example("r", tree.tokens, tree=tree)) == decompose(Example("r", tree.tokens, tree=tree))


def test_invariants_on_1000_random_trees():
    rng = np.random.default_rng(2024)
    n_checked = 0
    for _ in range(1000):
        tree = random_tree(rng)
        assert len(tree.nodes) <= 60
        check_invariants(tree)
        n_checked += len(noun_pivots(tree))
    assert n_checked > 500


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_invariants_hypothesis(seed):
    check_invariants(random_tree(np.random.default_rng(seed)))
