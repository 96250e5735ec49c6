"""Checkpoint container.

Byte layout (format version 1)::

    line 1   b"XRCKPT\\n"                               magic
    line 2   UTF-8 JSON header, sorted keys, then b"\\n"
    rest     payload: tensors as little-endian float64, C order, concatenated
             in the order listed in header["tensors"]

Header keys: ``format_version`` (int), ``config`` (ClassifierConfig fields),
``labels`` (label names, in index order), ``vocab`` (tokens, in index
order), ``tensors`` (list of ``{name, shape, dtype, offset, nbytes}`` with
offsets relative to the payload start), ``sha256`` (hex digest of the
payload) and ``meta`` (free-form, e.g. the training seed).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import tempfile

import numpy as np

from .core import LabelSpace, Vocab
from .errors import XRError
from .model import ClassifierConfig, ClassifierParams, check_params

MAGIC = b"XRCKPT\n"
FORMAT_VERSION = 1


def atomic_write(path, data: bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path, params: ClassifierParams, config: ClassifierConfig,
                    labels: LabelSpace, vocab: Vocab, meta=None) -> None:
    check_params(params, config)
    blobs, entries, offset = [], [], 0
    for name in params:
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        raw = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "<f8",
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    payload = b"".join(blobs)
    header = {
        "format_version": FORMAT_VERSION,
        "config": dataclasses.asdict(config),
        "labels": list(labels.names),
        "vocab": list(vocab.tokens),
        "tensors": entries,
        "sha256": hashlib.sha256(payload).hexdigest(),
        "meta": meta or {},
    }
    head = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    atomic_write(path, MAGIC + head + b"\n" + payload)


def load_checkpoint(path):
    """Returns ``(params, config, labels, vocab, meta)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC):
        raise XRError(f"{path}: not a checkpoint file")
    nl = data.index(b"\n", len(MAGIC))
    header = json.loads(data[len(MAGIC):nl].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise XRError(f"{path}: unsupported checkpoint version {header.get('format_version')}")
    payload = data[nl + 1:]
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise XRError(f"{path}: checksum mismatch")
    tensors = {}
    for e in header["tensors"]:
        raw = payload[e["offset"]:e["offset"] + e["nbytes"]]
        tensors[e["name"]] = np.frombuffer(raw, dtype=e["dtype"]).reshape(e["shape"]).astype(np.float64)
    config = ClassifierConfig(**header["config"])
    params = ClassifierParams(tensors)
    check_params(params, config)
    return params, config, LabelSpace(header["labels"]), Vocab(header["vocab"]), header["meta"]
