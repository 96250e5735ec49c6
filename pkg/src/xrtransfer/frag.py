"""Bracketed constituency trees and pivot-anchored fragment extraction.

A fragment for a pivot phrase is the span of the highest tree node that
dominates the pivot, dominates a verb or adjective outside every pivot, and
dominates as few pivots as possible.  When no node qualifies the whole
sentence is used.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from .core import Example, Fragment
from .errors import (EmptyTree, MalformedNode, MissingTree, PivotNotInTree,
                     Unbalanced, XRError)

NOUN_TAGS = frozenset({"NN", "NNS", "NNP", "NNPS"})
OPINION_TAGS = frozenset({"VB", "VBD", "VBN", "VBG", "VBP", "VBZ", "JJ", "JJR", "JJS"})
STRATEGIES = ("filter-then-highest", "highest-then-filter")


@dataclass(eq=False)
class Node:
    label: str
    children: list = field(default_factory=list)
    token: Optional[str] = None
    position: Optional[int] = None
    start: int = 0
    end: int = 0
    depth: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.token is not None

    @property
    def span(self):
        return (self.start, self.end)

    def to_string(self) -> str:
        if self.is_leaf:
            return f"({self.label} {self.token})"
        inner = " ".join(c.to_string() for c in self.children)
        return f"({self.label} {inner})" if self.label else f"({inner})"


class ParseTree:
    def __init__(self, root: Node):
        self.root = root
        self.leaves: List[Node] = []
        self.nodes: List[Node] = []
        self._index(root, 0)
        if not self.leaves:
            raise EmptyTree("tree has no leaves")

    def _index(self, node: Node, depth: int) -> None:
        node.depth = depth
        self.nodes.append(node)
        if node.is_leaf:
            node.position = len(self.leaves)
            node.start, node.end = node.position, node.position + 1
            self.leaves.append(node)
            return
        node.start = len(self.leaves)
        for c in node.children:
            self._index(c, depth + 1)
        node.end = len(self.leaves)

    @property
    def tokens(self) -> tuple:
        return tuple(leaf.token for leaf in self.leaves)

    @property
    def tags(self) -> tuple:
        return tuple(leaf.label for leaf in self.leaves)

    def __len__(self):
        return len(self.leaves)

    def to_string(self) -> str:
        return self.root.to_string()

    def __repr__(self):
        return f"ParseTree({self.to_string()!r})"


def _lex(text: str):
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            yield ch, i
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            yield text[i:j], i
            i = j


def parse_bracketed(text: str) -> ParseTree:
    """Parse one Penn-style tree, e.g. ``(S (NP (NN food)) (VP (VBZ rocks)))``.

    ``-NONE-`` leaves, and internal nodes left empty by removing them, are
    dropped.  An unlabeled outer bracket ``( (S ...) )`` becomes a node with
    an empty label.
    """
    toks = list(_lex(text))
    if not toks:
        raise EmptyTree("empty input")
    if toks[0][0] != "(":
        raise MalformedNode(toks[0][1], "tree must start with '('")
    depth = 0
    for tok, pos in toks:
        depth += (tok == "(") - (tok == ")")
        if depth < 0:
            raise Unbalanced(pos)
    if depth:
        raise Unbalanced(len(text))

    def word(i):
        return i < len(toks) and toks[i][0] not in "()"

    def node_at(i):
        # toks[i] is "("; returns (node or None if dropped, next index)
        pos = toks[i][1]
        i += 1
        label = ""
        if word(i):
            label = toks[i][0]
            i += 1
        if word(i):
            token = toks[i][0]
            i += 1
            if toks[i][0] != ")":
                raise MalformedNode(pos, "leaf must hold exactly one token")
            leaf = None if label == "-NONE-" else Node(label, token=token)
            return leaf, i + 1
        children, seen = [], 0
        while toks[i][0] == "(":
            child, i = node_at(i)
            seen += 1
            if child is not None:
                children.append(child)
        if not seen:
            raise MalformedNode(pos, "node without children")
        return (Node(label, children) if children else None), i + 1

    root, i = node_at(0)
    if i != len(toks):
        raise MalformedNode(toks[i][1], "content after the tree closed")
    if root is None:
        raise EmptyTree("tree has no leaves")
    return ParseTree(root)


@dataclass(frozen=True)
class PivotPhrase:
    span: tuple
    tokens: tuple


@dataclass(frozen=True, eq=False)
class FragmentSpan:
    span: tuple
    node: Optional[Node]
    pivot: PivotPhrase
    fallback: bool = False


def noun_pivots(tree: ParseTree) -> List[PivotPhrase]:
    return [PivotPhrase((leaf.position, leaf.position + 1), (leaf.token,))
            for leaf in tree.leaves if leaf.label in NOUN_TAGS]


def locate_pivot(tokens: Sequence[str], phrase) -> PivotPhrase:
    """First left-to-right occurrence of ``phrase`` (string or token list)."""
    words = tuple(phrase.split()) if isinstance(phrase, str) else tuple(phrase)
    if not words:
        raise PivotNotInTree("empty pivot phrase")
    tokens = tuple(tokens)
    for s in range(len(tokens) - len(words) + 1):
        if tokens[s:s + len(words)] == words:
            return PivotPhrase((s, s + len(words)), words)
    raise PivotNotInTree(f"phrase {' '.join(words)!r} not found in sentence")


def pivot_from_span(tokens: Sequence[str], span) -> PivotPhrase:
    s, e = int(span[0]), int(span[1])
    if not 0 <= s < e <= len(tokens):
        raise PivotNotInTree(f"span {span} outside sentence of length {len(tokens)}")
    return PivotPhrase((s, e), tuple(tokens[s:e]))


def _dominates(node: Node, span) -> bool:
    return node.start <= span[0] and span[1] <= node.end


def find_fragment(tree: ParseTree, pivot: PivotPhrase, all_pivots: Sequence[PivotPhrase],
                  strategy: str = "filter-then-highest") -> FragmentSpan:
    if strategy not in STRATEGIES:
        raise XRError(f"unknown strategy {strategy!r}")
    s, e = pivot.span
    if not 0 <= s < e <= len(tree) or tuple(pivot.tokens) != tree.tokens[s:e]:
        raise PivotNotInTree(f"pivot {pivot.tokens} at {pivot.span} is not in the tree")

    covered = set()
    for p in all_pivots:
        covered.update(range(*p.span))
    opinion_positions = [leaf.position for leaf in tree.leaves
                         if leaf.label in OPINION_TAGS and leaf.position not in covered]

    candidates = []
    for node in tree.nodes:
        if not _dominates(node, pivot.span):
            continue
        if not any(node.start <= q < node.end for q in opinion_positions):
            continue
        n_pivots = len({p.span for p in all_pivots if _dominates(node, p.span)})
        candidates.append((n_pivots, node))
    if not candidates:
        return FragmentSpan(tree.root.span, tree.root, pivot, fallback=True)

    if strategy == "filter-then-highest":
        key = lambda c: (c[0], c[1].depth, c[1].start, -(c[1].end - c[1].start))
    else:
        key = lambda c: (c[1].depth, c[0], c[1].start, -(c[1].end - c[1].start))
    best = min(candidates, key=key)[1]
    return FragmentSpan(best.span, best, pivot)


def example_pivots(example: Example) -> List[PivotPhrase]:
    """Aspect pivots when the example has aspects, otherwise one per noun."""
    if example.aspects:
        return [pivot_from_span(example.tokens, a.pivot_span) for a in example.aspects]
    if example.tree is None:
        raise MissingTree(f"example {example.id!r} has no parse tree")
    return noun_pivots(example.tree)


def decompose(example: Example, pivots: Optional[Sequence[PivotPhrase]] = None,
              strategy: str = "filter-then-highest") -> List[Fragment]:
    """One fragment per pivot.  Aspect labels carry over as fragment gold labels."""
    if example.tree is None:
        raise MissingTree(f"example {example.id!r} has no parse tree")
    if tuple(example.tree.tokens) != tuple(example.tokens):
        raise XRError(f"tree tokens do not match example {example.id!r}")
    labels = []
    if pivots is None:
        pivots = example_pivots(example)
        if example.aspects:
            labels = [a.label for a in example.aspects]
    out = []
    for i, pv in enumerate(pivots):
        fs = find_fragment(example.tree, pv, pivots, strategy)
        gold = labels[i] if i < len(labels) else None
        out.append(Fragment.of(example, fs.span, gold))
    return out
