import json
import os

import pytest

from xrtransfer.cli import build_config, dispatch, parse_config_text
from xrtransfer.errors import XRError
from xrtransfer.harness import run_cell

CONFIG = """\
# small benchmark so the pipeline runs in seconds
synth.n_unlabeled = 200
synth.n_source_train = 60
synth.n_target = 60
synth.n_test = 50
source.epochs = 2
source_candidates = 2
xr.k = 50
finetune.epochs = 1
"""

PIPELINE = [
    "synth --config c.cfg --out data",
    "train-source --config c.cfg --data data/source_train.jsonl --out src.ckpt",
    "label --classifier src.ckpt --data data/target.jsonl --out tlabels.jsonl",
    "estimate-props --labels tlabels.jsonl --data data/target.jsonl --out table.json",
    "partition --classifier src.ckpt --data data/unlabeled.jsonl --out part.json",
    "fragment --data data/unlabeled.jsonl --out ufrags.jsonl --partition part.json "
    "--table table.json --sets-out sets.jsonl",
    "fragment --config c.cfg --data data/target.jsonl --select dev --out tdev.jsonl",
    "fragment --config c.cfg --data data/target.jsonl --select train --out ttrain.jsonl",
    "fragment --data data/test.jsonl --out test.jsonl",
    "train-xr --config c.cfg --sets sets.jsonl --dev tdev.jsonl --out xr.ckpt --seed {seed}",
    "eval --checkpoint xr.ckpt --data test.jsonl --out metrics.json",
    "finetune --config c.cfg --checkpoint xr.ckpt --train ttrain.jsonl --dev tdev.jsonl "
    "--out ft.ckpt --seed {seed}",
    "eval --checkpoint ft.ckpt --data test.jsonl --out ft_metrics.json",
]


def run_pipeline(directory, seed, monkeypatch):
    monkeypatch.chdir(directory)
    (directory / "c.cfg").write_text(CONFIG)
    for cmd in PIPELINE:
        assert dispatch(cmd.format(seed=seed).split()) == 0, cmd


def snapshot(directory):
    out = {}
    for root, _, files in os.walk(directory):
        for f in files:
            path = os.path.join(root, f)
            rel = os.path.relpath(path, directory)
            if f.endswith("manifest.json"):
                doc = json.loads(open(path).read())
                assert doc["timestamp"]
                doc.pop("timestamp")
                out[rel] = doc
            else:
                out[rel] = open(path, "rb").read()
    return out


def test_pipeline_matches_harness_and_is_deterministic(tmp_path, monkeypatch):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    run_pipeline(a, 3, monkeypatch)
    run_pipeline(b, 3, monkeypatch)
    snap_a = snapshot(a)
    assert snap_a == snapshot(b)

    exp = build_config(str(a / "c.cfg"), [])
    cell = run_cell(exp, 3, extras=True)
    metrics = json.loads((a / "metrics.json").read_text())
    assert metrics["macro_f1"] == cell["xr"].macro_f1
    assert metrics["accuracy"] == cell["xr"].accuracy
    ft = json.loads((a / "ft_metrics.json").read_text())
    assert ft["macro_f1"] == cell["finetune"].macro_f1

    manifest = json.loads((a / "xr.ckpt.manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["config"]["xr_train"]["k"] == 50
    assert sorted(os.listdir(a / "data")) == sorted(
        [f"{s}.{ext}" for s in ("unlabeled", "source_train", "target", "test")
         for ext in ("jsonl", "trees")] + ["manifest.json"])


def test_synth_outputs_and_seed_flag(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "c.cfg").write_text(CONFIG)
    assert dispatch("synth --config c.cfg --out d1 --seed 5".split()) == 0
    assert dispatch("synth --config c.cfg --out d2 --seed 6".split()) == 0
    assert (tmp_path / "d1/unlabeled.jsonl").read_bytes() != (tmp_path / "d2/unlabeled.jsonl").read_bytes()
    assert json.loads((tmp_path / "d1/manifest.json").read_text())["seed"] == 5


def test_select_source(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "c.cfg").write_text(CONFIG)
    assert dispatch("synth --config c.cfg --out data".split()) == 0
    for s in (1, 2):
        assert dispatch(f"train-source --config c.cfg --data data/source_train.jsonl --out c{s}.ckpt --seed {s}".split()) == 0
    assert dispatch("select-source --checkpoints c1.ckpt c2.ckpt --dev data/source_train.jsonl --out best.ckpt".split()) == 0
    best = (tmp_path / "best.ckpt").read_bytes()
    assert best in ((tmp_path / "c1.ckpt").read_bytes(), (tmp_path / "c2.ckpt").read_bytes())


def test_constant_source_when_no_training_data(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "c.cfg").write_text(CONFIG + "synth.n_source_train = 0\n")
    assert dispatch("synth --config c.cfg --out data".split()) == 0
    assert dispatch("train-source --config c.cfg --data data/source_train.jsonl --out src.json".split()) == 0
    assert dispatch("label --classifier src.json --data data/target.jsonl --out l.jsonl".split()) == 0
    labels = [json.loads(x)["label"] for x in (tmp_path / "l.jsonl").read_text().splitlines()[1:]]
    assert set(labels) == {"POS"}


def test_sweep_command(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "c.cfg").write_text(CONFIG + "source.epochs = 1\nxr.epochs = 1\n")
    assert dispatch("sweep --config c.cfg --param k --values 5,50 --seeds 1 --out sw".split()) == 0
    assert (tmp_path / "sw/results.csv").read_text().splitlines()[1] == "sweep_param,value,seed,accuracy,macro_f1"
    assert "k=50" in capsys.readouterr().out


def test_usage_errors(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert dispatch(["train-xr", "--dev", "x.jsonl", "--out", "m.ckpt"]) == 2
    assert "--sets" in capsys.readouterr().err
    assert dispatch(["frobnicate"]) == 2
    assert dispatch([]) == 2
    assert dispatch(["synth", "--bogus"]) == 2
    assert dispatch(["synth", "--out", "d", "--set", "nonsense.key=1"]) == 1
    assert dispatch(["eval", "--checkpoint", "missing.ckpt", "--data", "x", "--out", "y"]) == 1


def test_config_parsing(tmp_path):
    assert parse_config_text("a = 1  # note\n\n# skip\nb=x\n") == {"a": "1", "b": "x"}
    with pytest.raises(XRError):
        parse_config_text("novalue\n")
    (tmp_path / "c.cfg").write_text("xr.k = 7\nxr.adam.alpha = 0.5\nmodel.encoder_kind = birecurrent\n"
                                    "synth.adjectives_per_fragment = [2, 4]\nsource_seed = none\n")
    exp = build_config(str(tmp_path / "c.cfg"), ["xr.k=9", "xr.dropout_enabled=false"])
    assert exp.xr_train.k == 9 and exp.xr_train.adam.alpha == 0.5
    assert exp.model.encoder_kind == "birecurrent"
    assert exp.synth.adjectives_per_fragment == (2, 4)
    assert exp.source_seed is None and exp.xr_train.dropout_enabled is False
    with pytest.raises(XRError):
        build_config(None, ["xr.k=abc"])
