"""File formats.

Every format starts with a header carrying ``format_version``:

* dataset (JSON lines): header ``{"format_version", "kind": "dataset",
  "source_labels", "target_labels"}``, then one record per example
  ``{"id", "tokens", "sentence_label"?, "aspects"?: [{"span", "phrase",
  "label"?}], "tree_line_ref"?}``.  ``sentence_label`` names a source label,
  aspect labels name target labels, ``tree_line_ref`` is the 1-based line of
  the example's tree in the companion tree file.
* tree file: first line ``# xr-trees format-version: 1``, then one bracketed
  tree per line.  With the dataset's header line this keeps example ``i`` on
  the same line number in both files.
* fragments (JSON lines): header ``kind: "fragments"``, records
  ``{"parent_id", "span", "tokens", "gold_label"?}``.
* constraint sets (JSON lines): header ``kind: "constraint_sets"``, records
  ``{"source_label", "proportion": {target: p}, "members": [fragment]}``.
* source labels (JSON lines): header ``kind: "source_labels"``, records
  ``{"id", "label"}``.
* proportion table, partition, metrics, manifest: single JSON documents with
  ``format_version`` and ``kind`` keys.
"""
from __future__ import annotations

import json
import os
from typing import Iterator, List, Optional, Sequence

from .checkpoint import atomic_write
from .core import AspectAnnotation, ConstraintSet, Example, Fragment, LabelSpace, ProportionTable
from .errors import BadSpan, DuplicateId, MalformedRecord, MissingHeader, XRError
from .frag import parse_bracketed

FORMAT_VERSION = 1
TREE_HEADER = "# xr-trees format-version: 1"


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def write_jsonl(path, header: dict, records) -> None:
    lines = [_dumps({"format_version": FORMAT_VERSION, **header})]
    lines += [_dumps(r) for r in records]
    atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def write_json(path, kind: str, doc: dict) -> None:
    body = _dumps({"format_version": FORMAT_VERSION, "kind": kind, **doc})
    atomic_write(path, (body + "\n").encode("utf-8"))


def read_json(path, kind: Optional[str] = None) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION:
        raise XRError(f"{path}: unsupported format version {doc.get('format_version')}")
    if kind is not None and doc.get("kind") != kind:
        raise XRError(f"{path}: expected a {kind} document, got {doc.get('kind')!r}")
    return doc


def iter_jsonl(path, kind: str):
    """Yield ``(header, None)`` first, then ``(line_no, record)`` pairs."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        try:
            header = json.loads(first) if first.strip() else None
        except json.JSONDecodeError:
            header = None
        if not isinstance(header, dict) or "format_version" not in header:
            raise MissingHeader(f"{path}: first line must be a format header")
        if header["format_version"] != FORMAT_VERSION:
            raise XRError(f"{path}: unsupported format version {header['format_version']}")
        if header.get("kind") != kind:
            raise MissingHeader(f"{path}: expected a {kind} header, got {header.get('kind')!r}")
        yield header, None
        for line_no, line in enumerate(fh, 2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, str(exc)) from None
            if not isinstance(rec, dict):
                raise MalformedRecord(line_no, "record is not an object")
            yield line_no, rec


def _labels(header, key) -> LabelSpace:
    try:
        return LabelSpace(header[key])
    except KeyError:
        raise MissingHeader(f"header lacks {key!r}") from None


# -- trees -----------------------------------------------------------------

def write_trees(path, trees: Sequence) -> None:
    lines = [TREE_HEADER] + [t.to_string() for t in trees]
    atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_tree_lines(path) -> dict:
    """1-based line number -> raw tree string."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or lines[0].strip() != TREE_HEADER:
        raise MissingHeader(f"{path}: missing tree-file header")
    return {i: ln for i, ln in enumerate(lines, 1) if i > 1 and ln.strip()}


# -- datasets --------------------------------------------------------------

class Dataset:
    def __init__(self, examples: List[Example], source_labels: LabelSpace, target_labels: LabelSpace):
        self.examples = examples
        self.source_labels = source_labels
        self.target_labels = target_labels

    def __len__(self):
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)


def _example(rec, line_no, S, T, trees) -> Example:
    try:
        ident = str(rec["id"])
        tokens = rec["tokens"]
    except KeyError as exc:
        raise MalformedRecord(line_no, f"missing field {exc}") from None
    if not isinstance(tokens, list) or not tokens or not all(isinstance(t, str) for t in tokens):
        raise MalformedRecord(line_no, "tokens must be a non-empty list of strings")
    sl = rec.get("sentence_label")
    aspects = []
    for a in rec.get("aspects") or []:
        try:
            s, e = (int(x) for x in a["span"])
        except (KeyError, TypeError, ValueError):
            raise MalformedRecord(line_no, "aspect needs a [start, end) span") from None
        if not 0 <= s < e <= len(tokens):
            raise BadSpan(ident, f"{[s, e]} for {len(tokens)} tokens")
        lab = a.get("label")
        aspects.append(AspectAnnotation((s, e), None if lab is None else T.index(lab), a.get("phrase")))
    tree = None
    ref = rec.get("tree_line_ref")
    if ref is not None and trees is not None:
        if ref not in trees:
            raise MalformedRecord(line_no, f"tree line {ref} not found")
        tree = parse_bracketed(trees[ref])
        if tree.tokens != tuple(tokens):
            raise MalformedRecord(line_no, "tree leaves do not match tokens")
    return Example(ident, tokens, None if sl is None else S.index(sl), aspects, tree)


def iter_dataset(path, trees_path=None) -> Iterator[Example]:
    """Stream examples; the first item yielded is ``(source_labels, target_labels)``."""
    trees = read_tree_lines(trees_path) if trees_path else None
    it = iter_jsonl(path, "dataset")
    header, _ = next(it)
    S, T = _labels(header, "source_labels"), _labels(header, "target_labels")
    yield S, T
    seen = set()
    for line_no, rec in it:
        ex = _example(rec, line_no, S, T, trees)
        if ex.id in seen:
            raise DuplicateId(ex.id)
        seen.add(ex.id)
        yield ex


def read_dataset(path, trees_path=None) -> Dataset:
    it = iter_dataset(path, trees_path)
    S, T = next(it)
    return Dataset(list(it), S, T)


def example_record(e: Example, S: LabelSpace, T: LabelSpace, tree_line_ref=None) -> dict:
    rec = {"id": e.id, "tokens": list(e.tokens)}
    if e.sentence_label is not None:
        rec["sentence_label"] = S.name(e.sentence_label)
    if e.aspects:
        rec["aspects"] = []
        for a in e.aspects:
            d = {"span": list(a.pivot_span),
                 "phrase": a.phrase or " ".join(e.tokens[a.pivot_span[0]:a.pivot_span[1]])}
            if a.label is not None:
                d["label"] = T.name(a.label)
            rec["aspects"].append(d)
    if tree_line_ref is not None:
        rec["tree_line_ref"] = tree_line_ref
    return rec


def write_dataset(path, examples: Sequence[Example], S: LabelSpace, T: LabelSpace,
                  trees_path=None) -> None:
    """Write examples; when ``trees_path`` is given their trees go there too."""
    refs = [None] * len(examples)
    if trees_path is not None:
        if any(e.tree is None for e in examples):
            raise XRError("every example needs a tree to write a tree file")
        write_trees(trees_path, [e.tree for e in examples])
        refs = list(range(2, len(examples) + 2))
    write_jsonl(path, {"kind": "dataset", "source_labels": list(S.names), "target_labels": list(T.names)},
                (example_record(e, S, T, r) for e, r in zip(examples, refs)))


# -- fragments and sets ----------------------------------------------------

def fragment_record(f: Fragment, T: LabelSpace) -> dict:
    rec = {"parent_id": f.parent_id, "span": list(f.span), "tokens": list(f.tokens)}
    if f.gold_label is not None:
        rec["gold_label"] = T.name(f.gold_label)
    return rec


def _fragment(rec, T, line_no) -> Fragment:
    try:
        g = rec.get("gold_label")
        return Fragment(rec["parent_id"], rec["span"], rec["tokens"], None if g is None else T.index(g))
    except (KeyError, TypeError) as exc:
        raise MalformedRecord(line_no, str(exc)) from None


def write_fragments(path, fragments: Sequence[Fragment], S: LabelSpace, T: LabelSpace) -> None:
    write_jsonl(path, {"kind": "fragments", "source_labels": list(S.names), "target_labels": list(T.names)},
                (fragment_record(f, T) for f in fragments))


def read_fragments(path):
    it = iter_jsonl(path, "fragments")
    header, _ = next(it)
    S, T = _labels(header, "source_labels"), _labels(header, "target_labels")
    return [_fragment(rec, T, n) for n, rec in it], S, T


def _dist_doc(row, T: LabelSpace) -> dict:
    return {T.name(i): float(p) for i, p in enumerate(row)}


def _dist_row(doc, T: LabelSpace):
    return [float(doc[name]) for name in T.names]


def write_sets(path, sets: Sequence[ConstraintSet], S: LabelSpace, T: LabelSpace) -> None:
    write_jsonl(path, {"kind": "constraint_sets", "source_labels": list(S.names),
                       "target_labels": list(T.names)},
                ({"source_label": S.name(s.source_label), "proportion": _dist_doc(s.proportion, T),
                  "members": [fragment_record(f, T) for f in s.members]} for s in sets))


def read_sets(path):
    it = iter_jsonl(path, "constraint_sets")
    header, _ = next(it)
    S, T = _labels(header, "source_labels"), _labels(header, "target_labels")
    sets = []
    for n, rec in it:
        try:
            members = [_fragment(m, T, n) for m in rec["members"]]
            sets.append(ConstraintSet(S.index(rec["source_label"]), members,
                                      _dist_row(rec["proportion"], T)))
        except KeyError as exc:
            raise MalformedRecord(n, f"missing field {exc}") from None
    return sets, S, T


# -- labels, tables, partitions -------------------------------------------

def write_labels(path, ids: Sequence[str], labels: Sequence[int], S: LabelSpace) -> None:
    write_jsonl(path, {"kind": "source_labels", "source_labels": list(S.names)},
                ({"id": i, "label": S.name(y)} for i, y in zip(ids, labels)))


def read_labels(path):
    it = iter_jsonl(path, "source_labels")
    header, _ = next(it)
    S = _labels(header, "source_labels")
    return {str(r["id"]): S.index(r["label"]) for _, r in it}, S


def write_table(path, table: ProportionTable) -> None:
    S, T = table.source_labels, table.target_labels
    doc = {"source_labels": list(S.names), "target_labels": list(T.names),
           "rows": {S.name(j): _dist_doc(r, T) for j, r in enumerate(table.rows)},
           "counts": None if table.counts is None else
           {S.name(j): {T.name(i): int(c) for i, c in enumerate(r)} for j, r in enumerate(table.counts)},
           "warnings": list(table.warnings)}
    write_json(path, "proportion_table", doc)


def read_table(path) -> ProportionTable:
    """Also accepts hand-written tables (``counts`` and ``warnings`` optional)."""
    doc = read_json(path, "proportion_table")
    S, T = LabelSpace(doc["source_labels"]), LabelSpace(doc["target_labels"])
    missing = [s for s in S.names if s not in doc["rows"]]
    if missing:
        raise XRError(f"{path}: no row for source labels {missing}")
    rows = [_dist_row(doc["rows"][s], T) for s in S.names]
    counts = doc.get("counts")
    if counts is not None:
        counts = [[int(counts[s][t]) for t in T.names] for s in S.names]
    return ProportionTable(rows, counts, S, T, tuple(doc.get("warnings") or ()))


def write_partition(path, buckets, S: LabelSpace) -> None:
    write_json(path, "partition", {"source_labels": list(S.names),
                                   "buckets": {S.name(j): [e.id for e in buckets[j]] for j in sorted(buckets)}})


def read_partition(path):
    doc = read_json(path, "partition")
    S = LabelSpace(doc["source_labels"])
    return {S.index(k): list(v) for k, v in doc["buckets"].items()}, S


def dataset_paths(directory, split: str):
    return os.path.join(directory, f"{split}.jsonl"), os.path.join(directory, f"{split}.trees")
