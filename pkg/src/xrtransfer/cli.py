"""Command-line entry point: ``xrtransfer <command> [flags]``.

Each pipeline stage is its own command and talks to the next one through
versioned files (see :mod:`xrtransfer.io`).  Configuration comes from a
``key=value`` file (``--config``) overridden by repeated ``--set key=value``
flags; keys address :class:`~xrtransfer.harness.ExperimentConfig` with
dotted paths such as ``xr.k``, ``xr.adam.alpha``, ``synth.n_unlabeled`` or
``model.encoder_kind``.

Exit status is 0 on success, 2 for usage errors (unknown command, missing or
malformed flags) and 1 when the pipeline itself fails.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from typing import Dict, List, Optional, Sequence

from . import io as xio
from . import metrics
from .checkpoint import MAGIC, atomic_write, load_checkpoint, save_checkpoint
from .core import LabelSpace, Vocab
from .errors import MissingFlag, UnknownCommand, XRError
from .frag import decompose
from .harness import (FINETUNE, SWEEPS, XR, ExperimentConfig, derive_seed,
                      gen_synthetic, run_experiment, train_source)
from .model import predict
from .train import TrainReport, finetune, labeled_items, select_source_classifier, train_xr
from .transfer import (ConstantSourceClassifier, ModelSourceClassifier,
                       build_fragment_sets, estimate_table, label_with_source,
                       split_dev)

# short config prefixes -> ExperimentConfig fields
_SECTIONS = {"source": "source_train", "xr": "xr_train", "finetune": "finetune_train"}


# -- configuration ---------------------------------------------------------

def _coerce(raw: str, current):
    text = raw.strip()
    if isinstance(current, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise XRError(f"not a boolean: {raw!r}")
    if text.lower() in ("none", "null"):
        return None
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, tuple):
        def tup(v):
            return tuple(tup(x) for x in v) if isinstance(v, list) else v
        return tup(json.loads(text))
    if current is None:
        try:
            return json.loads(text)
        except json.JSONDecodeError:
            return text
    return text


def _set_path(obj, path: List[str], raw: str):
    name = _SECTIONS.get(path[0], path[0]) if dataclasses.is_dataclass(obj) and \
        isinstance(obj, ExperimentConfig) else path[0]
    if not dataclasses.is_dataclass(obj) or name not in {f.name for f in dataclasses.fields(obj)}:
        raise XRError(f"unknown config key component {path[0]!r}")
    current = getattr(obj, name)
    if len(path) == 1:
        try:
            value = _coerce(raw, current)
        except ValueError as exc:
            raise XRError(f"bad value for {path[0]!r}: {exc}") from None
        return dataclasses.replace(obj, **{name: value})
    return dataclasses.replace(obj, **{name: _set_path(current, path[1:], raw)})


def parse_config_text(text: str) -> Dict[str, str]:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise XRError(f"config line {n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_config(config_path: Optional[str], overrides: Sequence[str]) -> ExperimentConfig:
    pairs: Dict[str, str] = {}
    if config_path:
        with open(config_path, encoding="utf-8") as fh:
            pairs.update(parse_config_text(fh.read()))
    for item in overrides or ():
        if "=" not in item:
            raise XRError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v.strip()
    exp = ExperimentConfig()
    for key, raw in pairs.items():
        exp = _set_path(exp, key.split("."), raw)
    return exp


# -- helpers ---------------------------------------------------------------

def _sha256(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _manifest_path(out: str) -> str:
    return os.path.join(out, "manifest.json") if os.path.isdir(out) else out + ".manifest.json"


def write_manifest(out: str, command: str, args, exp: ExperimentConfig, outputs: Sequence[str]):
    """Seed, resolved config and output digests; only ``timestamp`` varies between reruns."""
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
    doc = {"command": command, "seed": getattr(args, "seed", None), "flags": flags,
           "config": dataclasses.asdict(exp),
           "outputs": {os.path.basename(p): _sha256(p) for p in outputs},
           "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
    xio.write_json(_manifest_path(out), "manifest", doc)


def _trees_for(data_path: str, trees: Optional[str]) -> Optional[str]:
    if trees:
        return trees
    guess = os.path.splitext(data_path)[0] + ".trees"
    return guess if os.path.exists(guess) else None


def _read(path, trees=None):
    return xio.read_dataset(path, _trees_for(path, trees))


def _select(examples, which: str, dev_fraction: float):
    if which == "all":
        return list(examples)
    train, dev = split_dev(examples, dev_fraction)
    return train if which == "train" else dev


def load_source_classifier(path):
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        params, config, labels, vocab, _ = load_checkpoint(path)
        return ModelSourceClassifier(params, config, vocab), labels
    doc = xio.read_json(path, "constant_source")
    labels = LabelSpace(doc["source_labels"])
    return ConstantSourceClassifier(labels.index(doc["label"])), labels


def _require(args, *names):
    for n in names:
        if getattr(args, n, None) in (None, [], ""):
            raise MissingFlag(n.replace("_", "-"))


# -- commands --------------------------------------------------------------

def cmd_synth(args, exp):
    _require(args, "out")
    seed = exp.synth.seed if args.seed is None else args.seed
    args.seed = seed
    data = gen_synthetic(exp.synth, seed)
    S, T = LabelSpace(exp.synth.source_labels), LabelSpace(exp.synth.target_labels)
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    for split, examples in data.splits().items():
        jpath, tpath = xio.dataset_paths(args.out, split)
        xio.write_dataset(jpath, examples, S, T, trees_path=tpath)
        outputs += [jpath, tpath]
    write_manifest(args.out, "synth", args, exp, outputs)


def cmd_train_source(args, exp):
    _require(args, "data", "out")
    seed = args.seed if args.seed is not None else (exp.source_seed or 0)
    args.seed = seed
    ds = _read(args.data, args.trees)
    cs, report = train_source(exp, ds.examples, seed)
    if report is None:
        xio.write_json(args.out, "constant_source",
                       {"source_labels": list(ds.source_labels.names),
                        "label": ds.source_labels.name(cs.label)})
    else:
        save_checkpoint(args.out, report.params, report.config, ds.source_labels, report.vocab,
                        {"seed": seed, "command": "train-source",
                         "neutral_recalls": report.extra["neutral_recalls"],
                         "selection_scores": report.extra["selection_scores"]})
    write_manifest(args.out, "train-source", args, exp, [args.out])


def cmd_select_source(args, exp):
    _require(args, "checkpoints", "dev", "out")
    ds = _read(args.dev, args.trees)
    cands, labels = [], None
    for path in args.checkpoints:
        params, config, labels, vocab, _ = load_checkpoint(path)
        cands.append(TrainReport([0.0], 0, params, config, vocab=vocab, extra={"path": path}))
    neutral = labels.index(args.neutral_label) if args.neutral_label else exp.neutral_label
    best = select_source_classifier(cands, ds.examples, neutral, exp.neutral_threshold)
    with open(best.extra["path"], "rb") as fh:
        atomic_write(args.out, fh.read())
    write_manifest(args.out, "select-source", args, exp, [args.out])


def cmd_label(args, exp):
    _require(args, "classifier", "data", "out")
    cs, S = load_source_classifier(args.classifier)
    ds = _read(args.data, args.trees)
    noisy = label_with_source(cs, ds.examples)
    xio.write_labels(args.out, [n.example.id for n in noisy], [n.noisy_source_label for n in noisy], S)
    write_manifest(args.out, "label", args, exp, [args.out])


def cmd_estimate_props(args, exp):
    _require(args, "labels", "data", "out")
    labels, S = xio.read_labels(args.labels)
    ds = _read(args.data, args.trees)
    pairs = []
    for e in ds.examples:
        if e.id not in labels:
            raise XRError(f"no source label for example {e.id!r}")
        pairs += [(labels[e.id], a.label) for a in e.aspects if a.label is not None]
    table = estimate_table(pairs, S, ds.target_labels, args.smoothing)
    xio.write_table(args.out, table)
    write_manifest(args.out, "estimate-props", args, exp, [args.out])


def cmd_partition(args, exp):
    _require(args, "data", "out")
    ds = _read(args.data, args.trees)
    if args.labels:
        labels, S = xio.read_labels(args.labels)
        ys = [labels[e.id] for e in ds.examples]
    elif args.classifier:
        cs, S = load_source_classifier(args.classifier)
        ys = [n.noisy_source_label for n in label_with_source(cs, ds.examples)]
    else:
        raise MissingFlag("classifier")
    buckets = {j: [] for j in range(S.size)}
    for e, y in zip(ds.examples, ys):
        buckets[y].append(e)
    xio.write_partition(args.out, buckets, S)
    write_manifest(args.out, "partition", args, exp, [args.out])


def cmd_fragment(args, exp):
    _require(args, "data", "out")
    ds = _read(args.data, args.trees)
    examples = _select(ds.examples, args.select, args.dev_fraction)
    per_example = {e.id: decompose(e, strategy=args.strategy) for e in examples}
    frags = [f for e in examples for f in per_example[e.id]]
    xio.write_fragments(args.out, frags, ds.source_labels, ds.target_labels)
    outputs = [args.out]
    if args.partition or args.table or args.sets_out:
        _require(args, "partition", "table", "sets_out")
        ids, S = xio.read_partition(args.partition)
        table = xio.read_table(args.table)
        by_id = {e.id: e for e in examples}
        partition = {j: [by_id[i] for i in members] for j, members in ids.items()}
        sets = build_fragment_sets(partition, per_example, table)
        if not sets:
            raise XRError("every constraint set is empty")
        xio.write_sets(args.sets_out, sets, S, ds.target_labels)
        outputs.append(args.sets_out)
    write_manifest(args.out, "fragment", args, exp, outputs)


def _save_model(path, report: TrainReport, labels, seed, command, extra=None):
    meta = {"seed": seed, "command": command, "selected_epoch": report.selected_epoch,
            "dev_scores": report.dev_scores, **(extra or {})}
    save_checkpoint(path, report.params, report.config, labels, report.vocab, meta)


def cmd_train_xr(args, exp):
    _require(args, "sets", "dev", "out")
    sets, _, T = xio.read_sets(args.sets)
    dev, _, _ = xio.read_fragments(args.dev)
    vocab = Vocab.build(m.tokens for s in sets for m in s.members)
    cfg = dataclasses.replace(exp.model, vocab_size=len(vocab), num_classes=T.size)
    tcfg = dataclasses.replace(exp.xr_train, seed=derive_seed(args.seed, XR))
    report = train_xr(sets, cfg, tcfg, dev, vocab=vocab)
    _save_model(args.out, report, T, args.seed, "train-xr")
    write_manifest(args.out, "train-xr", args, exp, [args.out])


def cmd_finetune(args, exp):
    _require(args, "checkpoint", "train", "dev", "out")
    params, config, T, vocab, _ = load_checkpoint(args.checkpoint)
    train, _, _ = xio.read_fragments(args.train)
    dev, _, _ = xio.read_fragments(args.dev)
    tcfg = dataclasses.replace(exp.finetune_train, seed=derive_seed(args.seed, FINETUNE))
    report = finetune(params, config, train, tcfg, dev, vocab=vocab)
    _save_model(args.out, report, T, args.seed, "finetune")
    write_manifest(args.out, "finetune", args, exp, [args.out])


def cmd_eval(args, exp):
    _require(args, "checkpoint", "data", "out")
    params, config, T, vocab, _ = load_checkpoint(args.checkpoint)
    frags, _, _ = xio.read_fragments(args.data)
    seqs, gold = labeled_items(frags, vocab)
    m = metrics.macro_f1(predict(seqs, params, config), gold, config.num_classes)
    doc = {"accuracy": m.accuracy, "macro_f1": m.macro_f1,
           "per_class": {T.name(i): {"precision": m.precision[i], "recall": m.recall[i],
                                     "f1": m.f1[i], "support": m.support[i]}
                         for i in range(T.size)}}
    xio.write_json(args.out, "metrics", doc)
    write_manifest(args.out, "eval", args, exp, [args.out])
    print(f"accuracy={m.accuracy:.4f} macro_f1={m.macro_f1:.4f}")


def cmd_sweep(args, exp):
    _require(args, "param", "values", "out")
    if args.param not in SWEEPS:
        raise XRError(f"unknown sweep parameter {args.param!r}; choose from {SWEEPS}")
    values = [int(v) for v in args.values.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")]
    os.makedirs(args.out, exist_ok=True)
    _, agg = run_experiment(args.param, values, seeds, exp, out_dir=args.out, workers=args.workers)
    write_manifest(args.out, "sweep", args, exp,
                   [os.path.join(args.out, "results.csv"), os.path.join(args.out, "aggregate.csv")])
    for row in agg:
        print(f"{row[0]}={row[1]}: macro_f1 {row[5]:.4f} +- {row[6]:.4f} (n={row[2]})")


COMMANDS = {
    "synth": cmd_synth, "train-source": cmd_train_source, "select-source": cmd_select_source,
    "label": cmd_label, "estimate-props": cmd_estimate_props, "partition": cmd_partition,
    "fragment": cmd_fragment, "train-xr": cmd_train_xr, "finetune": cmd_finetune,
    "eval": cmd_eval, "sweep": cmd_sweep,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="xrtransfer", description="Expectation-regularization transfer toolkit")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="config override (repeatable)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out")
        sp.add_argument("--trees", help="tree file (default: sibling .trees file)")
        return sp

    add("synth", "generate the synthetic benchmark")
    sp = add("train-source", "train and select the sentence-level classifier")
    sp.add_argument("--data")
    sp = add("select-source", "pick among candidate checkpoints with the neutral-recall rule")
    sp.add_argument("--checkpoints", nargs="+")
    sp.add_argument("--dev")
    sp.add_argument("--neutral-label")
    sp = add("label", "label a dataset with the source classifier")
    sp.add_argument("--classifier")
    sp.add_argument("--data")
    sp = add("estimate-props", "estimate P(target | source) from labeled aspects")
    sp.add_argument("--labels")
    sp.add_argument("--data")
    sp.add_argument("--smoothing", type=float, default=0.0)
    sp = add("partition", "split an unlabeled corpus by predicted source label")
    sp.add_argument("--data")
    sp.add_argument("--classifier")
    sp.add_argument("--labels")
    sp = add("fragment", "decompose sentences into fragments and build constraint sets")
    sp.add_argument("--data")
    sp.add_argument("--select", choices=("all", "train", "dev"), default="all")
    sp.add_argument("--dev-fraction", type=float, default=None)
    sp.add_argument("--strategy", choices=("filter-then-highest", "highest-then-filter"),
                    default="filter-then-highest")
    sp.add_argument("--partition")
    sp.add_argument("--table")
    sp.add_argument("--sets-out")
    sp = add("train-xr", "train the target classifier on constraint sets")
    sp.add_argument("--sets")
    sp.add_argument("--dev")
    sp = add("finetune", "continue training on labeled fragments")
    sp.add_argument("--checkpoint")
    sp.add_argument("--train")
    sp.add_argument("--dev")
    sp = add("eval", "score a checkpoint on labeled fragments")
    sp.add_argument("--checkpoint")
    sp.add_argument("--data")
    sp = add("sweep", "run a sweep over one parameter")
    sp.add_argument("--param")
    sp.add_argument("--values")
    sp.add_argument("--seeds", default="1,2,3,4,5")
    sp.add_argument("--workers", type=int, default=1)
    return p


def dispatch(argv: Sequence[str]) -> int:
    argv = list(argv)
    if argv and not argv[0].startswith("-") and argv[0] not in COMMANDS:
        print(f"error: {UnknownCommand(f'unknown command {argv[0]!r}')}", file=sys.stderr)
        return 2
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        build_parser().print_usage(sys.stderr)
        return 2
    try:
        exp = build_config(args.config, args.set)
        if getattr(args, "dev_fraction", 0) is None:
            args.dev_fraction = exp.dev_fraction
        if args.seed is None and args.command not in ("synth", "train-source"):
            args.seed = 0
        COMMANDS[args.command](args, exp)
    except MissingFlag as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (XRError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
