"""Embedding + sequence encoder + linear layer + tempered softmax classifier,
with hand-derived gradients.

Two encoders share one contract:

* ``mean-pool``: the feature vector is the mean of the token embeddings.
* ``birecurrent``: a single-layer tanh recurrence run forward and backward
  over the sequence; the feature vector is the concatenation of both final
  states.

Parameters live in a :class:`ClassifierParams` mapping from tensor name to
float64 array.  Nothing here mutates parameters in place.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Optional, Sequence

import numpy as np

from .errors import (DimensionMismatch, EmptyBatch, EmptySequence,
                     IndexOutOfVocab, MalformedLine, XRError)
from .loss import grouped_xr

ENCODERS = ("mean-pool", "birecurrent")
OBJECTIVES = ("xr", "cross-entropy")


@dataclass(frozen=True)
class ClassifierConfig:
    vocab_size: int
    num_classes: int
    embed_dim: int = 16
    hidden_dim: int = 16
    encoder_kind: str = "mean-pool"
    temperature: float = 1.0
    dropout_rate: float = 0.5

    def __post_init__(self):
        for name in ("vocab_size", "embed_dim", "hidden_dim"):
            if getattr(self, name) < 1:
                raise XRError(f"{name} must be >= 1")
        if self.num_classes < 2:
            raise XRError("num_classes must be >= 2")
        if self.encoder_kind not in ENCODERS:
            raise XRError(f"unknown encoder {self.encoder_kind!r}")
        if not self.temperature > 0:
            raise XRError("temperature must be positive")
        if not 0 <= self.dropout_rate < 1:
            raise XRError("dropout_rate must lie in [0, 1)")

    @property
    def feature_dim(self) -> int:
        if self.encoder_kind == "mean-pool":
            return self.embed_dim
        return 2 * self.hidden_dim

    def shapes(self) -> dict:
        e, h = self.embed_dim, self.hidden_dim
        shapes = {"embeddings": (self.vocab_size, e)}
        if self.encoder_kind == "birecurrent":
            for d in ("fw", "bw"):
                shapes[f"Wx_{d}"] = (e, h)
                shapes[f"Wh_{d}"] = (h, h)
                shapes[f"bh_{d}"] = (h,)
        shapes["W"] = (self.feature_dim, self.num_classes)
        shapes["b"] = (self.num_classes,)
        return shapes


@dataclass
class ClassifierParams(Mapping):
    """Named parameter tensors.  Also used for gradients and Adam moments."""

    tensors: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def copy(self) -> "ClassifierParams":
        return ClassifierParams({k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> "ClassifierParams":
        return ClassifierParams({k: np.zeros_like(v) for k, v in self.tensors.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.tensors.values()])

    def shapes(self) -> dict:
        return {k: v.shape for k, v in self.tensors.items()}

    def equal(self, other: "ClassifierParams") -> bool:
        return (list(self) == list(other)
                and all(np.array_equal(self[k], other[k]) for k in self))


GradientSet = ClassifierParams


def init_params(config: ClassifierConfig, rng: np.random.Generator) -> ClassifierParams:
    """Glorot-uniform weights; every bias starts at zero."""
    tensors = {}
    for name, shape in config.shapes().items():
        if len(shape) == 1:
            tensors[name] = np.zeros(shape)
        else:
            r = np.sqrt(6.0 / (shape[0] + shape[1]))
            tensors[name] = rng.uniform(-r, r, size=shape)
    return ClassifierParams(tensors)


def check_params(params: ClassifierParams, config: ClassifierConfig) -> None:
    expected = config.shapes()
    if params.shapes() != expected:
        raise DimensionMismatch(f"parameter shapes {params.shapes()} do not match config {expected}")


def load_embeddings(path, vocab: Mapping[str, int], embeddings: np.ndarray) -> tuple:
    """Overwrite rows of ``embeddings`` for tokens found in a text vector file.

    Returns ``(new_matrix, hits)``; the input matrix is left untouched.
    """
    out = np.array(embeddings, dtype=np.float64, copy=True)
    dim = None
    hits = 0
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if not parts or parts == [""]:
                continue
            if len(parts) < 2:
                raise MalformedLine(line_no, "no vector values")
            try:
                vec = np.array([float(x) for x in parts[1:]])
            except ValueError:
                raise MalformedLine(line_no, "non-numeric value") from None
            if dim is None:
                dim = vec.size
                if dim != out.shape[1]:
                    raise DimensionMismatch(f"file vectors have d={dim}, model expects {out.shape[1]}")
            elif vec.size != dim:
                raise MalformedLine(line_no, f"expected {dim} values, got {vec.size}")
            idx = vocab.get(parts[0])
            if idx is not None:
                out[idx] = vec
                hits += 1
    return out, hits


# -- forward / backward ----------------------------------------------------

def _as_batch(batch, vocab_size: int):
    seqs = [np.asarray(s, dtype=np.int64).ravel() for s in batch]
    if not seqs:
        raise EmptyBatch("empty batch")
    for s in seqs:
        if s.size == 0:
            raise EmptySequence("empty token sequence")
        if s.min() < 0 or s.max() >= vocab_size:
            raise IndexOutOfVocab(f"token index outside [0, {vocab_size})")
    return seqs


def _meanpool_forward(E, seqs):
    lengths = np.array([s.size for s in seqs])
    flat = np.concatenate(seqs)
    starts = np.concatenate(([0], np.cumsum(lengths)[:-1]))
    Z = np.add.reduceat(E[flat], starts, axis=0) / lengths[:, None]
    return Z, (flat, lengths)


def _meanpool_backward(shape, cache, dZ):
    flat, lengths = cache
    dE = np.zeros(shape)
    np.add.at(dE, flat, np.repeat(dZ / lengths[:, None], lengths, axis=0))
    return dE


def _padded(seqs, reverse=False):
    n, L = len(seqs), max(s.size for s in seqs)
    idx = np.zeros((n, L), dtype=np.int64)
    mask = np.zeros((n, L))
    for i, s in enumerate(seqs):
        idx[i, :s.size] = s[::-1] if reverse else s
        mask[i, :s.size] = 1.0
    return idx, mask


def _rnn_forward(X, mask, Wx, Wh, bh):
    # X: (n, L, e).  State is carried unchanged through padding positions.
    n, L, _ = X.shape
    h = np.zeros((n, Wh.shape[0]))
    hs, acts = [h], []
    for t in range(L):
        a = np.tanh(X[:, t] @ Wx + h @ Wh + bh)
        m = mask[:, t:t + 1]
        h = m * a + (1.0 - m) * h
        hs.append(h)
        acts.append(a)
    return h, (hs, acts)


def _rnn_backward(X, mask, Wx, Wh, cache, dh):
    hs, acts = cache
    n, L, _ = X.shape
    dWx, dWh, dbh = np.zeros_like(Wx), np.zeros_like(Wh), np.zeros(Wh.shape[0])
    dX = np.zeros_like(X)
    for t in reversed(range(L)):
        m = mask[:, t:t + 1]
        da = m * dh * (1.0 - acts[t] ** 2)
        dWx += X[:, t].T @ da
        dWh += hs[t].T @ da
        dbh += da.sum(axis=0)
        dX[:, t] = da @ Wx.T
        dh = (1.0 - m) * dh + da @ Wh.T
    return dX, dWx, dWh, dbh


def _birnn_forward(p, seqs):
    E = p["embeddings"]
    outs, caches = [], {}
    for d, rev in (("fw", False), ("bw", True)):
        idx, mask = _padded(seqs, reverse=rev)
        X = E[idx]
        h, c = _rnn_forward(X, mask, p[f"Wx_{d}"], p[f"Wh_{d}"], p[f"bh_{d}"])
        outs.append(h)
        caches[d] = (idx, mask, X, c)
    return np.concatenate(outs, axis=1), caches


def _birnn_backward(p, caches, dZ):
    grads = {"embeddings": np.zeros_like(p["embeddings"])}
    H = p["Wh_fw"].shape[0]
    for d, dh in (("fw", dZ[:, :H]), ("bw", dZ[:, H:])):
        idx, mask, X, c = caches[d]
        dX, dWx, dWh, dbh = _rnn_backward(X, mask, p[f"Wx_{d}"], p[f"Wh_{d}"], c, dh)
        grads[f"Wx_{d}"], grads[f"Wh_{d}"], grads[f"bh_{d}"] = dWx, dWh, dbh
        np.add.at(grads["embeddings"], idx.ravel(), (dX * mask[:, :, None]).reshape(-1, dX.shape[2]))
    return grads


def encode_batch(seqs, params: ClassifierParams, config: ClassifierConfig):
    """Feature matrix (n, feature_dim) for a batch of index sequences."""
    seqs = _as_batch(seqs, config.vocab_size)
    if config.encoder_kind == "mean-pool":
        Z, cache = _meanpool_forward(params["embeddings"], seqs)
    else:
        Z, cache = _birnn_forward(params, seqs)
    return Z, cache


def encode(tokens: Sequence[int], params: ClassifierParams, config: ClassifierConfig) -> np.ndarray:
    if len(tokens) == 0:
        raise EmptySequence("empty token sequence")
    return encode_batch([tokens], params, config)[0][0]


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def classify(z: np.ndarray, params: ClassifierParams, temperature: float = 1.0) -> np.ndarray:
    """softmax((zW + b) / T); works on a single vector or a row batch."""
    logits = np.asarray(z) @ params["W"] + params["b"]
    if temperature != 1.0:
        logits = logits / temperature
    return softmax(logits)


def predict_proba_batch(seqs, params, config, chunk: int = 2048) -> np.ndarray:
    out = []
    for i in range(0, len(seqs), chunk):
        Z, _ = encode_batch(seqs[i:i + chunk], params, config)
        out.append(classify(Z, params, config.temperature))
    if not out:
        return np.zeros((0, config.num_classes))
    return np.concatenate(out)


def predict_proba(tokens, params, config) -> np.ndarray:
    return predict_proba_batch([tokens], params, config)[0]


def predict(seqs, params, config) -> np.ndarray:
    return predict_proba_batch(seqs, params, config).argmax(axis=1)


def dropout_mask(shape, rate: float, rng: Optional[np.random.Generator]) -> Optional[np.ndarray]:
    if rng is None or rate == 0:
        return None
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def apply_dropout(z: np.ndarray, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted dropout: zero each entry with probability ``rate``, scale survivors."""
    if not 0 <= rate < 1:
        raise XRError("dropout rate must lie in [0, 1)")
    mask = dropout_mask(np.shape(z), rate, rng)
    return np.array(z, dtype=np.float64) if mask is None else z * mask


def parameter_gradients(objective: str, batch, targets, params: ClassifierParams,
                        config: ClassifierConfig, rng: Optional[np.random.Generator] = None):
    """Loss and exact gradient of every parameter tensor.

    ``objective="xr"``: ``targets`` is one proportion vector and the batch is
    treated as a single set (summed posteriors, normalized, cross-entropy
    against the proportion).  ``objective="cross-entropy"``: ``targets`` are
    gold indices and the loss is the sum of per-example negative
    log-likelihoods.  One dropout mask is drawn from ``rng`` per call; pass
    ``rng=None`` to disable dropout.
    """
    if objective not in OBJECTIVES:
        raise XRError(f"unknown objective {objective!r}")
    if len(batch) == 0:
        raise EmptyBatch("empty batch")
    Z, cache = encode_batch(batch, params, config)
    n, C = Z.shape[0], config.num_classes
    mask = dropout_mask(Z.shape, config.dropout_rate, rng)
    Hd = Z if mask is None else Z * mask
    T = config.temperature
    logits = Hd @ params["W"] + params["b"]
    P = softmax(logits / T if T != 1.0 else logits)

    if objective == "xr":
        starts = np.zeros(1, dtype=np.int64)
        tgt = np.asarray(targets, dtype=np.float64).reshape(1, C)
    else:
        gold = np.asarray(targets, dtype=np.int64).ravel()
        if gold.size != n:
            raise XRError(f"{gold.size} gold labels for a batch of {n}")
        starts = np.arange(n)
        tgt = np.zeros((n, C))
        tgt[np.arange(n), gold] = 1.0
    loss, dP = grouped_xr(P, starts, tgt)

    dlogits = P * (dP - (dP * P).sum(axis=1, keepdims=True))
    if T != 1.0:
        dlogits = dlogits / T
    grads = {"W": Hd.T @ dlogits, "b": dlogits.sum(axis=0)}
    dZ = dlogits @ params["W"].T
    if mask is not None:
        dZ = dZ * mask
    if config.encoder_kind == "mean-pool":
        grads["embeddings"] = _meanpool_backward(params["embeddings"].shape, cache, dZ)
    else:
        grads.update(_birnn_backward(params, cache, dZ))
    return loss, ClassifierParams({k: grads[k] for k in params})


def loss_value(objective, batch, targets, params, config) -> float:
    """Loss without dropout or gradients; used by finite-difference checks."""
    return parameter_gradients(objective, batch, targets, params, config, rng=None)[0]
