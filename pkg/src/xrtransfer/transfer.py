"""Source-to-target transfer: label with the source classifier, estimate the
conditional proportion table, partition the unlabeled corpus, turn buckets
into fragment constraint sets and train the target classifier with XR.
"""
from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Protocol, Sequence

import numpy as np

from .core import ConstraintSet, Example, Fragment, LabelSpace, ProportionTable, Vocab
from .errors import EmptyData, EmptyPairs, MissingTableRow, XRError
from .frag import decompose
from .model import ClassifierConfig, ClassifierParams, predict
from .train import TrainConfig, TrainReport, train_xr


class SourceClassifier(Protocol):
    def predict_labels(self, examples: Sequence[Example]) -> List[int]: ...


@dataclass
class ModelSourceClassifier:
    params: ClassifierParams
    config: ClassifierConfig
    vocab: Vocab

    def predict_labels(self, examples):
        if not examples:
            return []
        preds = predict([self.vocab.encode(e.tokens) for e in examples], self.params, self.config)
        return [int(p) for p in preds]


@dataclass(frozen=True)
class ConstantSourceClassifier:
    label: int = 0

    def predict_labels(self, examples):
        return [self.label] * len(examples)


@dataclass(frozen=True)
class RuleSourceClassifier:
    """Votes with a token -> label lexicon; ties and no hits go to ``default``."""

    lexicon: Mapping[str, int]
    num_labels: int
    default: int = 0

    def predict_labels(self, examples):
        out = []
        for e in examples:
            votes = np.zeros(self.num_labels, dtype=np.int64)
            for t in e.tokens:
                if t in self.lexicon:
                    votes[self.lexicon[t]] += 1
            top = np.flatnonzero(votes == votes.max())
            out.append(int(top[0]) if votes.max() > 0 and len(top) == 1 else self.default)
        return out


@dataclass(frozen=True)
class CallableSourceClassifier:
    fn: Callable[[Example], int]

    def predict_labels(self, examples):
        return [int(self.fn(e)) for e in examples]


def as_source_classifier(cs) -> SourceClassifier:
    if hasattr(cs, "predict_labels"):
        return cs
    if callable(cs):
        return CallableSourceClassifier(cs)
    raise XRError(f"{cs!r} is not a source classifier")


@dataclass(frozen=True)
class NoisyLabeledExample:
    example: Example
    noisy_source_label: int


def label_with_source(cs, examples: Sequence[Example]) -> List[NoisyLabeledExample]:
    if not examples:
        raise EmptyData("no examples to label")
    labels = as_source_classifier(cs).predict_labels(list(examples))
    return [NoisyLabeledExample(e, int(y)) for e, y in zip(examples, labels)]


def aspect_pairs(noisy: Sequence[NoisyLabeledExample]) -> List[tuple]:
    """(noisy sentence label, aspect gold label) for every labeled aspect."""
    return [(n.noisy_source_label, a.label) for n in noisy
            for a in n.example.aspects if a.label is not None]


def estimate_table(pairs, source_labels, target_labels, smoothing: float = 0.0) -> ProportionTable:
    """Maximum-likelihood P(target | noisy source) from co-occurrence counts.

    Source labels that never occur get a uniform row and a warning.
    ``smoothing`` adds that pseudo-count to every cell.
    """
    S = getattr(source_labels, "size", source_labels)
    T = getattr(target_labels, "size", target_labels)
    pairs = list(pairs)
    if not pairs:
        raise EmptyPairs("no (source, target) pairs")
    counts = np.zeros((S, T), dtype=np.int64)
    for s, t in pairs:
        counts[int(s), int(t)] += 1
    cells = counts + smoothing
    rows = np.empty((S, T))
    notes = []
    for j in range(S):
        tot = cells[j].sum()
        if tot > 0:
            rows[j] = cells[j] / tot
        else:
            rows[j] = 1.0 / T
            name = source_labels.name(j) if isinstance(source_labels, LabelSpace) else j
            notes.append(f"source label {name} never observed; using a uniform row")
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return ProportionTable(rows, counts,
                           source_labels if isinstance(source_labels, LabelSpace) else None,
                           target_labels if isinstance(target_labels, LabelSpace) else None,
                           tuple(notes))


def partition_unlabeled(cs, corpus: Sequence[Example], num_source: int) -> Dict[int, List[Example]]:
    if not corpus:
        raise EmptyData("empty unlabeled corpus")
    buckets: Dict[int, List[Example]] = {j: [] for j in range(num_source)}
    for e, y in zip(corpus, as_source_classifier(cs).predict_labels(list(corpus))):
        if not 0 <= y < num_source:
            raise XRError(f"source classifier produced label {y} outside [0, {num_source})")
        buckets[int(y)].append(e)
    return buckets


def fragment_corpus(examples: Sequence[Example], strategy: str = "filter-then-highest") -> Dict[str, List[Fragment]]:
    return {e.id: decompose(e, strategy=strategy) for e in examples}


def build_fragment_sets(partition: Mapping[int, Sequence[Example]],
                        fragments: Mapping[str, Sequence[Fragment]],
                        table: ProportionTable) -> List[ConstraintSet]:
    out = []
    for j in sorted(partition):
        if j >= table.rows.shape[0]:
            raise MissingTableRow(f"no proportion row for source label {j}")
        members = [f for e in partition[j] for f in fragments[e.id]]
        if not members:
            if partition[j]:
                warnings.warn(f"set for source label {j} has no fragments; dropped",
                              RuntimeWarning, stacklevel=2)
            continue
        out.append(ConstraintSet(j, members, table.row(j)))
    return out


def split_dev(examples: Sequence[Example], dev_fraction: float):
    """Leading part for training, trailing ``dev_fraction`` for selection."""
    n_dev = max(1, int(round(len(examples) * dev_fraction)))
    if n_dev >= len(examples):
        raise XRError("dev split leaves no training examples")
    return list(examples[:-n_dev]), list(examples[-n_dev:])


def aspect_fragments(examples: Sequence[Example], strategy: str = "filter-then-highest") -> List[Fragment]:
    return [f for e in examples for f in decompose(e, strategy=strategy)]


def transfer_train(unlabeled: Sequence[Example], target: Sequence[Example], cs,
                   source_labels: LabelSpace, target_labels: LabelSpace,
                   config: ClassifierConfig, tcfg: TrainConfig,
                   dev_fraction: float = 0.2, smoothing: float = 0.0,
                   strategy: str = "filter-then-highest") -> TrainReport:
    """End-to-end transfer.  ``config.vocab_size`` and ``config.num_classes``
    are replaced by the vocabulary built from the constraint sets and the
    target label space.

    Target gold labels are read by the table estimate and by dev-epoch
    selection only; the XR trainer sees sets and proportions.
    """
    if not unlabeled or not target:
        raise EmptyData("transfer needs a non-empty unlabeled corpus and target set")
    noisy = label_with_source(cs, target)
    table = estimate_table(aspect_pairs(noisy), source_labels, target_labels, smoothing)
    partition = partition_unlabeled(cs, unlabeled, source_labels.size)
    sets = build_fragment_sets(partition, fragment_corpus(unlabeled, strategy), table)
    if not sets:
        raise XRError("every constraint set is empty")
    _, dev_examples = split_dev(target, dev_fraction)
    dev = aspect_fragments(dev_examples, strategy)
    vocab = Vocab.build(m.tokens for s in sets for m in s.members)
    cfg = dataclasses.replace(config, vocab_size=len(vocab), num_classes=target_labels.size)
    report = train_xr(sets, cfg, tcfg, dev, vocab=vocab)
    report.extra["table"] = table
    report.extra["set_sizes"] = {s.source_label: len(s) for s in sets}
    return report
