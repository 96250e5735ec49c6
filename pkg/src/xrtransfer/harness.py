"""Synthetic correlated-task benchmark and experiment runner.

The generator draws a sentence-level (source) label from a prior, then for
every fragment of the sentence a target label from the true proportion table
row of that source label.  A fragment is ``noun is adj+`` where the
adjectives are emitted from a target-label-conditioned distribution, so the
target task is learnable from fragment text while the source label is only
informative in aggregate.  Every sentence comes with a parse tree whose
noun-pivot decomposition recovers the generator's fragment spans.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import metrics
from .checkpoint import atomic_write
from .core import AspectAnnotation, Example, Fragment, LabelSpace, Vocab, validate_distribution
from .errors import XRError
from .frag import parse_bracketed
from .model import ClassifierConfig, predict
from .train import (AdamConfig, TrainConfig, TrainReport, finetune, labeled_items,
                    select_source_classifier, train_supervised)
from .transfer import (ConstantSourceClassifier, ModelSourceClassifier,
                       aspect_fragments, split_dev, transfer_train)

LABELS = ("POS", "NEG", "NEU")
COPULA = "is"

# stage ids for derive_seed
SYNTH, SOURCE, XR, FINETUNE, SKYLINE = range(5)


def derive_seed(seed: int, stage: int, index: int = 0) -> int:
    return int(np.random.SeedSequence([seed, stage, index]).generate_state(1)[0])


@dataclass(frozen=True)
class SynthConfig:
    vocab_size: int = 200
    noun_fraction: float = 0.3
    adjectives_per_fragment: tuple = (1, 3)
    fragments_per_sentence: tuple = (1, 3)
    source_labels: tuple = LABELS
    target_labels: tuple = LABELS
    true_table: tuple = ((0.80, 0.15, 0.05),
                         (0.20, 0.75, 0.05),
                         (0.30, 0.25, 0.45))
    source_prior: tuple = (0.45, 0.35, 0.20)
    # weight multiplier of a label's own adjectives; 1 means no signal
    emission_sharpness: float = 6.0
    zipf_exponent: float = 1.0
    n_unlabeled: int = 5000
    n_source_train: int = 1000
    n_target: int = 300
    n_test: int = 1000
    seed: int = 1

    def __post_init__(self):
        table = np.asarray(self.true_table, dtype=float)
        if table.shape != (len(self.source_labels), len(self.target_labels)):
            raise XRError("true_table shape does not match the label spaces")
        for row in table:
            validate_distribution(row)
        validate_distribution(self.source_prior)
        if min(self.n_unlabeled, self.n_target, self.n_test) < 1 or self.n_source_train < 0:
            raise XRError("split sizes must be >= 1 (source train may be 0)")
        if self.n_adjectives < len(self.target_labels) or self.n_nouns < 1:
            raise XRError("vocab_size too small")

    @property
    def n_nouns(self) -> int:
        return max(1, int(self.vocab_size * self.noun_fraction))

    @property
    def n_adjectives(self) -> int:
        return self.vocab_size - self.n_nouns - 1

    def nouns(self) -> List[str]:
        return [f"n{i}" for i in range(self.n_nouns)]

    def adjectives(self) -> List[str]:
        return [f"a{i}" for i in range(self.n_adjectives)]

    def emission(self) -> np.ndarray:
        """(|target labels|, n_adjectives) emission distributions.

        Adjective ``a{i}`` leans towards target label ``i % |Y|``; base
        frequencies follow a Zipf law over ``i // |Y|`` so that every label
        has the same frequency profile.
        """
        T = len(self.target_labels)
        idx = np.arange(self.n_adjectives)
        base = 1.0 / (1.0 + idx // T) ** self.zipf_exponent
        w = np.tile(base, (T, 1))
        w[idx % T, idx] *= self.emission_sharpness
        return w / w.sum(axis=1, keepdims=True)


@dataclass
class SyntheticData:
    unlabeled: List[Example]
    source_train: List[Example]
    target: List[Example]
    test: List[Example]
    # hidden generator state, never read by the pipeline:
    # id -> (source label, fragment spans, fragment target labels)
    truth: Dict[str, tuple] = field(repr=False, default_factory=dict)
    config: Optional[SynthConfig] = None

    def splits(self) -> Dict[str, List[Example]]:
        return {"unlabeled": self.unlabeled, "source_train": self.source_train,
                "target": self.target, "test": self.test}


def _fragment_tree(tokens: Sequence[str]) -> str:
    adj = " ".join(f"(JJ {a})" for a in tokens[2:])
    return f"(S (NP (NN {tokens[0]})) (VP (VBZ {tokens[1]}) (ADJP {adj})))"


def gen_synthetic(cfg: SynthConfig, seed: Optional[int] = None) -> SyntheticData:
    """Draw the four splits.  Each split has its own random stream, so
    changing one split's size leaves the others untouched and a smaller
    split is a prefix of a larger one."""
    seed = cfg.seed if seed is None else seed
    nouns, adjs = cfg.nouns(), cfg.adjectives()
    emission = cfg.emission()
    table = np.asarray(cfg.true_table, dtype=float)
    prior = np.asarray(cfg.source_prior, dtype=float)
    fmin, fmax = cfg.fragments_per_sentence
    amin, amax = cfg.adjectives_per_fragment
    truth = {}

    def sentence(ident, role, rng):
        ys = int(rng.choice(len(prior), p=prior))
        n_frag = int(rng.integers(fmin, fmax + 1))
        tokens, spans, labels, subtrees = [], [], [], []
        for _ in range(n_frag):
            yt = int(rng.choice(table.shape[1], p=table[ys]))
            n_adj = int(rng.integers(amin, amax + 1))
            frag = [nouns[int(rng.integers(len(nouns)))], COPULA]
            frag += [adjs[i] for i in rng.choice(len(adjs), size=n_adj, p=emission[yt])]
            spans.append((len(tokens), len(tokens) + len(frag)))
            labels.append(yt)
            tokens += frag
            subtrees.append(_fragment_tree(frag))
        body = subtrees[0] if n_frag == 1 else "(S " + " ".join(subtrees) + ")"
        tree = parse_bracketed(f"(ROOT {body})")
        truth[ident] = (ys, tuple(spans), tuple(labels))
        if role == "source":
            return Example(ident, tokens, sentence_label=ys, tree=tree)
        if role == "aspect":
            aspects = [AspectAnnotation((s, s + 1), y, tokens[s]) for (s, _), y in zip(spans, labels)]
            return Example(ident, tokens, aspects=aspects, tree=tree)
        return Example(ident, tokens, tree=tree)

    splits = [("u", cfg.n_unlabeled, "none"), ("s", cfg.n_source_train, "source"),
              ("t", cfg.n_target, "aspect"), ("x", cfg.n_test, "aspect")]
    out = []
    for k, (p, n, role) in enumerate(splits):
        rng = np.random.default_rng([seed, SYNTH, k])
        out.append([sentence(f"{p}{i}", role, rng) for i in range(n)])
    return SyntheticData(*out, truth=truth, config=cfg)


def truth_fragments(data: SyntheticData, examples: Sequence[Example]) -> list:
    """Generator-labeled fragments (skyline training data)."""
    out = []
    for e in examples:
        _, spans, labels = data.truth[e.id]
        out += [Fragment.of(e, sp, y) for sp, y in zip(spans, labels)]
    return out


# -- experiments -----------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    synth: SynthConfig = SynthConfig()
    model: ClassifierConfig = ClassifierConfig(vocab_size=1, num_classes=3, embed_dim=16,
                                               hidden_dim=16, encoder_kind="mean-pool")
    source_train: TrainConfig = TrainConfig(epochs=15, supervised_batch_size=30,
                                            adam=AdamConfig(alpha=0.003))
    # epochs scale with the corpus: ceil(#fragments / 200) steps each
    xr_train: TrainConfig = TrainConfig(k=450, steps_per_epoch=0, pass_batch=200, epochs=10,
                                        adam=AdamConfig(alpha=0.003))
    finetune_train: TrainConfig = TrainConfig(epochs=10, supervised_batch_size=30,
                                              adam=AdamConfig(alpha=0.003))
    source_candidates: int = 5
    # one source classifier shared by all training seeds; None retrains per seed
    source_seed: Optional[int] = 0
    neutral_label: int = 2
    neutral_threshold: float = 0.20
    dev_fraction: float = 0.2

    def with_sweep(self, param: str, value) -> "ExperimentConfig":
        if param == "k":
            return dataclasses.replace(self, xr_train=dataclasses.replace(self.xr_train, k=int(value)))
        if param == "unlabeled_size":
            return dataclasses.replace(self, synth=dataclasses.replace(self.synth, n_unlabeled=int(value)))
        if param == "source_train_size":
            return dataclasses.replace(self, synth=dataclasses.replace(self.synth, n_source_train=int(value)))
        raise XRError(f"unknown sweep parameter {param!r}")


SWEEPS = ("k", "unlabeled_size", "source_train_size")


def train_source(exp: ExperimentConfig, examples: Sequence[Example], seed: int):
    """Five-candidate source training with the neutral-recall rule.

    Returns ``(classifier, report or None)``; no training data gives the
    constant classifier.
    """
    if not examples:
        return ConstantSourceClassifier(0), None
    train, dev = split_dev(examples, exp.dev_fraction)
    vocab = Vocab.build(e.tokens for e in train)
    cfg = dataclasses.replace(exp.model, vocab_size=len(vocab), num_classes=len(exp.synth.source_labels))
    cands = []
    for c in range(exp.source_candidates):
        tcfg = dataclasses.replace(exp.source_train, seed=derive_seed(seed, SOURCE, c))
        cands.append(train_supervised(train, cfg, tcfg, dev, vocab=vocab, label_attr="sentence_label"))
    best = select_source_classifier(cands, dev, exp.neutral_label, exp.neutral_threshold)
    return ModelSourceClassifier(best.params, best.config, vocab), best


def evaluate(report: TrainReport, fragments) -> metrics.MetricsReport:
    seqs, gold = labeled_items(fragments, report.vocab)
    return metrics.macro_f1(predict(seqs, report.params, report.config), gold, report.config.num_classes)


def run_cell(exp: ExperimentConfig, seed: int, extras: bool = False) -> dict:
    """Full pipeline for one training seed on the corpus fixed by
    ``exp.synth.seed``; the seed drives XR parameter init, sampling and
    dropout (and source training when ``exp.source_seed`` is None).  With
    ``extras`` also fine-tunes the XR model and trains the majority and
    gold-label skyline baselines."""
    data = gen_synthetic(exp.synth)
    S = LabelSpace(exp.synth.source_labels)
    T = LabelSpace(exp.synth.target_labels)
    cs, _ = train_source(exp, data.source_train, seed if exp.source_seed is None else exp.source_seed)
    xr_cfg = dataclasses.replace(exp.xr_train, seed=derive_seed(seed, XR))
    report = transfer_train(data.unlabeled, data.target, cs, S, T, exp.model, xr_cfg,
                            dev_fraction=exp.dev_fraction)
    test = aspect_fragments(data.test)
    out = {"seed": seed, "xr": evaluate(report, test), "xr_report": report}
    if extras:
        t_train, t_dev = split_dev(data.target, exp.dev_fraction)
        train_frags, dev_frags = aspect_fragments(t_train), aspect_fragments(t_dev)
        ft_cfg = dataclasses.replace(exp.finetune_train, seed=derive_seed(seed, FINETUNE))
        ft = finetune(report.params, report.config, train_frags, ft_cfg, dev_frags, vocab=report.vocab)
        out["finetune"] = evaluate(ft, test)
        out["finetune_report"] = ft

        counts = np.bincount([f.gold_label for f in train_frags], minlength=T.size)
        majority = int(np.argmax(counts))
        golds = [f.gold_label for f in test]
        out["majority"] = metrics.macro_f1([majority] * len(golds), golds, T.size)

        sky_frags = truth_fragments(data, data.unlabeled)
        vocab = Vocab.build(f.tokens for f in sky_frags)
        sky_model = dataclasses.replace(exp.model, vocab_size=len(vocab), num_classes=T.size)
        sky_cfg = dataclasses.replace(exp.source_train, seed=derive_seed(seed, SKYLINE),
                                      selection_metric="macro-f1")
        sky = train_supervised(sky_frags, sky_model, sky_cfg, dev_frags, vocab=vocab)
        out["skyline"] = evaluate(sky, test)
    return out


def _cell_row(args):
    exp, param, value, seed = args
    m = run_cell(exp.with_sweep(param, value), seed)["xr"]
    return (param, value, seed, m.accuracy, m.macro_f1)


RESULT_HEADER = ("sweep_param", "value", "seed", "accuracy", "macro_f1")
AGG_HEADER = ("sweep_param", "value", "n", "accuracy_mean", "accuracy_std",
              "macro_f1_mean", "macro_f1_std")
FORMAT_LINE = "# format-version: 1\n"


def _fmt(x) -> str:
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def aggregate_rows(rows) -> list:
    out = []
    for value in sorted({r[1] for r in rows}):
        sel = [r for r in rows if r[1] == value]
        agg = metrics.aggregate(metrics.MetricsReport(r[3], r[4], (), (), (), ()) for r in sel)
        out.append((sel[0][0], value, agg.n, agg.accuracy_mean, agg.accuracy_std,
                    agg.macro_f1_mean, agg.macro_f1_std))
    return out


def write_table(path, header, rows) -> None:
    buf = io.StringIO()
    buf.write(FORMAT_LINE)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    atomic_write(path, buf.getvalue().encode("utf-8"))


def read_table(path) -> list:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def run_experiment(sweep: str, values: Sequence, seeds: Sequence[int],
                   exp: ExperimentConfig = ExperimentConfig(), out_dir=None,
                   workers: int = 1):
    """Run the pipeline for every value x seed and aggregate per value.

    Returns ``(rows, aggregate_rows)``; with ``out_dir`` also writes
    ``results.csv`` and ``aggregate.csv`` there.
    """
    if sweep not in SWEEPS:
        raise XRError(f"unknown sweep parameter {sweep!r}")
    if not values or not seeds:
        raise XRError("need at least one value and one seed")
    jobs = [(exp, sweep, v, s) for v in sorted(values) for s in sorted(seeds)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_cell_row, jobs))
    else:
        rows = [_cell_row(j) for j in jobs]
    rows.sort(key=lambda r: (r[1], r[2]))
    agg = aggregate_rows(rows)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_table(os.path.join(out_dir, "results.csv"), RESULT_HEADER, rows)
        write_table(os.path.join(out_dir, "aggregate.csv"), AGG_HEADER, agg)
    return rows, agg
