"""Stochastic batched XR training, supervised training, fine-tuning, Adam and
model selection.

Every trainer evaluates the dev set once before the first update (epoch 0)
and after every epoch, and returns the parameters of the best epoch (first
one on ties).  Randomness comes from ``TrainConfig.seed`` split into
independent streams for parameter init, example sampling and dropout, so a
run is bitwise reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from . import metrics
from .core import ConstraintSet, Vocab
from .errors import (EmptyCandidates, EmptyData, EmptySetMember, EmptySets,
                     ShapeMismatch, XRError)
from .model import (ClassifierConfig, ClassifierParams, init_params,
                    parameter_gradients, predict)

# stream ids for np.random.default_rng([seed, stream])
INIT, SAMPLING, DROPOUT = 0, 1, 2


@dataclass(frozen=True)
class AdamConfig:
    alpha: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.alpha > 0 or not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1 or not self.eps > 0:
            raise XRError(f"invalid Adam hyperparameters {self}")


@dataclass(frozen=True)
class TrainConfig:
    k: int = 450
    # 0 sizes epochs to the data: ceil(sum |U_j| / (pass_batch or k)) steps
    steps_per_epoch: int = 50
    pass_batch: Optional[int] = None
    epochs: int = 10
    supervised_batch_size: int = 30
    adam: AdamConfig = AdamConfig()
    seed: int = 0
    dropout_enabled: bool = True
    selection_metric: str = "macro-f1"

    def __post_init__(self):
        if self.k < 1 or self.supervised_batch_size < 1:
            raise XRError("k and supervised_batch_size must be >= 1")
        if self.pass_batch is not None and self.pass_batch < 1:
            raise XRError("pass_batch must be >= 1")
        if self.steps_per_epoch < 0:
            raise XRError("steps_per_epoch must be >= 0")
        if self.epochs < 0:
            raise XRError("epochs must be >= 0")
        if self.selection_metric not in ("accuracy", "macro-f1"):
            raise XRError(f"unknown selection metric {self.selection_metric!r}")

    def rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream])


@dataclass
class AdamState:
    m: ClassifierParams
    v: ClassifierParams
    t: int = 0

    @classmethod
    def fresh(cls, params: ClassifierParams) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0)


@dataclass
class TrainReport:
    dev_scores: List[float]
    selected_epoch: int
    params: ClassifierParams
    config: ClassifierConfig
    loss_curve: List[float] = field(default_factory=list)
    vocab: Optional[Vocab] = None
    extra: dict = field(default_factory=dict)

    @property
    def best_score(self) -> float:
        return self.dev_scores[self.selected_epoch]


def adam_update(params: ClassifierParams, grads: ClassifierParams, state: AdamState,
                hyper: AdamConfig = AdamConfig()):
    """One bias-corrected Adam step.  Returns new ``(params, state)``."""
    if params.shapes() != grads.shapes() or params.shapes() != state.m.shapes():
        raise ShapeMismatch("params, gradients and Adam moments disagree in shape")
    t = state.t + 1
    b1, b2 = hyper.beta1, hyper.beta2
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    new_p, new_m, new_v = {}, {}, {}
    for name in params:
        g = grads[name]
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * (g * g)
        new_p[name] = params[name] - hyper.alpha * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
        new_m[name], new_v[name] = m, v
    return ClassifierParams(new_p), AdamState(ClassifierParams(new_m), ClassifierParams(new_v), t)


# -- data plumbing ---------------------------------------------------------

def _seq(item, vocab: Optional[Vocab]) -> np.ndarray:
    toks = getattr(item, "tokens", item)
    if vocab is not None and len(toks) and isinstance(toks[0], str):
        return vocab.encode(toks)
    return np.asarray(toks, dtype=np.int64)


def labeled_items(items, vocab: Optional[Vocab] = None, label_attr: str = "gold_label"):
    """Normalize labeled data to ``(index_sequences, labels)``.

    Accepts ``(tokens, label)`` pairs or objects with ``.tokens`` and
    ``label_attr``; string tokens are mapped through ``vocab``.
    """
    seqs, labels = [], []
    for it in items:
        if isinstance(it, tuple):
            toks, lab = it
        else:
            toks, lab = it, getattr(it, label_attr)
        if lab is None:
            raise XRError("unlabeled item in labeled data")
        seqs.append(_seq(toks, vocab))
        labels.append(int(lab))
    return seqs, np.array(labels, dtype=np.int64)


class _Evaluator:
    def __init__(self, dev, config, vocab, metric, label_attr="gold_label"):
        if not dev:
            raise EmptyData("empty dev set")
        self.seqs, self.gold = labeled_items(dev, vocab, label_attr)
        self.config, self.metric = config, metric

    def __call__(self, params) -> float:
        preds = predict(self.seqs, params, self.config)
        return metrics.score(self.metric, preds, self.gold, self.config.num_classes)


def _run(config, tcfg, init, evaluate, step_fn, steps_per_epoch, callback, vocab):
    params = init.copy() if init is not None else init_params(config, tcfg.rng(INIT))
    state = AdamState.fresh(params)
    scores = [evaluate(params)]
    best_params, best_epoch = params, 0
    losses = []
    step = 0
    for epoch in range(1, tcfg.epochs + 1):
        for _ in range(steps_per_epoch(epoch)):
            loss, grads = step_fn(step, params)
            params, state = adam_update(params, grads, state, tcfg.adam)
            losses.append(loss)
            step += 1
            if callback is not None:
                callback(step, params, loss)
        s = evaluate(params)
        scores.append(s)
        if s > scores[best_epoch]:
            best_params, best_epoch = params, epoch
    return TrainReport(scores, best_epoch, best_params, config, losses, vocab)


def train_xr(sets: Sequence[ConstraintSet], config: ClassifierConfig, tcfg: TrainConfig, dev,
             vocab: Optional[Vocab] = None, init: Optional[ClassifierParams] = None,
             schedule: Optional[Sequence[int]] = None,
             callback: Optional[Callable] = None) -> TrainReport:
    """Stochastic batched XR.

    Each step picks one set uniformly at random (or ``schedule[step]``), draws
    ``k`` of its members without replacement (the whole set when it has at
    most ``k`` members) and takes an Adam step on the XR loss of that subset.
    """
    if not sets:
        raise EmptySets("no constraint sets")
    members, props = [], []
    for s in sets:
        seqs = [_seq(m, vocab) for m in s.members]
        if any(x.size == 0 for x in seqs):
            raise EmptySetMember(f"set for source label {s.source_label} has an empty member")
        members.append(seqs)
        props.append(np.asarray(s.proportion))
    evaluate = _Evaluator(dev, config, vocab, tcfg.selection_metric)
    sampling = tcfg.rng(SAMPLING)
    drop = tcfg.rng(DROPOUT) if tcfg.dropout_enabled else None

    def step_fn(step, params):
        j = int(schedule[step]) if schedule is not None else int(sampling.integers(len(sets)))
        pool = members[j]
        if len(pool) <= tcfg.k:
            batch = pool
        else:
            batch = [pool[i] for i in sampling.choice(len(pool), tcfg.k, replace=False)]
        return parameter_gradients("xr", batch, props[j], params, config, drop)

    steps = tcfg.steps_per_epoch or -(-sum(len(m) for m in members) // (tcfg.pass_batch or tcfg.k))
    return _run(config, tcfg, init, evaluate, step_fn, lambda e: steps, callback, vocab)


def supervised_schedule(tcfg: TrainConfig, n: int) -> List[np.ndarray]:
    """Per-epoch example orders used by :func:`train_supervised`."""
    sampling = tcfg.rng(SAMPLING)
    return [sampling.permutation(n) for _ in range(tcfg.epochs)]


def train_supervised(data, config: ClassifierConfig, tcfg: TrainConfig, dev,
                     vocab: Optional[Vocab] = None, init: Optional[ClassifierParams] = None,
                     label_attr: str = "gold_label",
                     callback: Optional[Callable] = None) -> TrainReport:
    """Shuffled minibatch cross-entropy (mean over the batch) with Adam."""
    if not data:
        raise EmptyData("no labeled training data")
    seqs, labels = labeled_items(data, vocab, label_attr)
    if labels.max() >= config.num_classes:
        raise ShapeMismatch("labels exceed the classifier's label space")
    evaluate = _Evaluator(dev, config, vocab, tcfg.selection_metric, label_attr)
    orders = supervised_schedule(tcfg, len(seqs))
    B = tcfg.supervised_batch_size
    per_epoch = -(-len(seqs) // B)
    flat = np.concatenate(orders) if orders else np.zeros(0, dtype=np.int64)
    drop = tcfg.rng(DROPOUT) if tcfg.dropout_enabled else None

    def step_fn(step, params):
        epoch, b = divmod(step, per_epoch)
        idx = flat[epoch * len(seqs) + b * B: epoch * len(seqs) + min((b + 1) * B, len(seqs))]
        loss, grads = parameter_gradients("cross-entropy", [seqs[i] for i in idx], labels[idx],
                                          params, config, drop)
        if len(idx) != 1:
            grads = ClassifierParams({k: g / len(idx) for k, g in grads.items()})
            loss = loss / len(idx)
        return loss, grads

    return _run(config, tcfg, init, evaluate, step_fn, lambda e: per_epoch, callback, vocab)


def finetune(params: ClassifierParams, config: ClassifierConfig, data, tcfg: TrainConfig, dev,
             vocab: Optional[Vocab] = None, label_attr: str = "gold_label") -> TrainReport:
    """Continue cross-entropy training from ``params`` with a fresh Adam state."""
    if params.shapes() != config.shapes():
        raise ShapeMismatch("parameters do not match the classifier config")
    return train_supervised(data, config, tcfg, dev, vocab, init=params, label_attr=label_attr)


def choose_source(neutral_recalls: Sequence[float], scores: Sequence[float],
                  threshold: float = 0.20) -> int:
    """Index of the best-scoring candidate among those whose neutral recall
    reaches ``threshold``; the highest-recall candidate if none does."""
    if not neutral_recalls:
        raise EmptyCandidates("no source classifier candidates")
    ok = [i for i, r in enumerate(neutral_recalls) if r >= threshold]
    if not ok:
        return int(np.argmax(neutral_recalls))
    return max(ok, key=lambda i: (scores[i], -i))


def select_source_classifier(candidates: Sequence[TrainReport], dev, neutral_label: int,
                             threshold: float = 0.20, metric: str = "accuracy",
                             label_attr: str = "sentence_label") -> TrainReport:
    if not candidates:
        raise EmptyCandidates("no source classifier candidates")
    recalls, scores = [], []
    for rep in candidates:
        seqs, gold = labeled_items(dev, rep.vocab, label_attr)
        preds = predict(seqs, rep.params, rep.config)
        m = metrics.macro_f1(preds, gold, rep.config.num_classes)
        recalls.append(m.recall[neutral_label])
        scores.append(m.accuracy if metric == "accuracy" else m.macro_f1)
    chosen = candidates[choose_source(recalls, scores, threshold)]
    chosen.extra["neutral_recalls"] = recalls
    chosen.extra["selection_scores"] = scores
    return chosen
