"""Shared data model: label spaces, distributions, examples, fragments and
constraint sets.

Labels are dense integer indices into a declared :class:`LabelSpace`; names
only appear at I/O boundaries.  Distributions are plain float64 numpy arrays
that passed :func:`validate_distribution`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .errors import NegativeMass, NotNormalized, XRError, ZeroMass

if TYPE_CHECKING:
    from .frag import ParseTree

SUM_TOL = 1e-9


@dataclass(frozen=True)
class LabelSpace:
    names: tuple

    def __init__(self, names: Sequence[str]):
        names = tuple(str(n) for n in names)
        if len(names) < 2:
            raise XRError("a label space needs at least two labels")
        if len(set(names)) != len(names):
            raise XRError(f"duplicate label names in {names}")
        object.__setattr__(self, "names", names)

    @property
    def size(self) -> int:
        return len(self.names)

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise XRError(f"unknown label {name!r}; expected one of {self.names}") from None

    def name(self, idx: int) -> str:
        return self.names[idx]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def validate_distribution(mass) -> np.ndarray:
    """Return ``mass`` as a read-only float array if it is a distribution.

    Raises NegativeMass for any negative entry and NotNormalized (carrying the
    sum) when the entries do not sum to 1 within 1e-9.
    """
    a = np.array(mass, dtype=np.float64).ravel()
    if a.size == 0:
        raise XRError("empty mass vector")
    if not np.all(np.isfinite(a)):
        raise XRError("non-finite mass")
    if np.any(a < 0):
        raise NegativeMass(f"negative entries in {a.tolist()}")
    total = a.sum()
    if abs(total - 1.0) > SUM_TOL:
        raise NotNormalized(total)
    return _frozen(a)


def normalize(mass) -> np.ndarray:
    a = np.array(mass, dtype=np.float64).ravel()
    if np.any(a < 0):
        raise NegativeMass(f"negative entries in {a.tolist()}")
    total = a.sum()
    if not total > 0:
        raise ZeroMass("cannot normalize an all-zero mass vector")
    return _frozen(a / total)


def entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    nz = p > 0
    return float(-(p[nz] * np.log(p[nz])).sum())


@dataclass(frozen=True)
class AspectAnnotation:
    pivot_span: tuple
    label: Optional[int] = None
    phrase: Optional[str] = None

    def __post_init__(self):
        start, end = (int(x) for x in self.pivot_span)
        if not 0 <= start < end:
            raise XRError(f"invalid aspect span {self.pivot_span}")
        object.__setattr__(self, "pivot_span", (start, end))


@dataclass(frozen=True)
class Example:
    id: str
    tokens: tuple
    sentence_label: Optional[int] = None
    aspects: tuple = ()
    tree: Optional["ParseTree"] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "aspects", tuple(self.aspects))
        if not self.tokens:
            raise XRError(f"example {self.id!r} has no tokens")
        n = len(self.tokens)
        for a in self.aspects:
            if a.pivot_span[1] > n:
                raise XRError(f"aspect span {a.pivot_span} outside example {self.id!r} of length {n}")


@dataclass(frozen=True)
class Fragment:
    parent_id: str
    span: tuple
    tokens: tuple
    gold_label: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "span", (int(self.span[0]), int(self.span[1])))
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if len(self.tokens) != self.span[1] - self.span[0] or not self.tokens:
            raise XRError(f"fragment tokens do not match span {self.span}")

    @classmethod
    def of(cls, example: Example, span, gold_label=None) -> "Fragment":
        start, end = span
        return cls(example.id, (start, end), example.tokens[start:end], gold_label)


@dataclass(frozen=True)
class ConstraintSet:
    """A set of unlabeled members supervised only by an expected label distribution."""

    source_label: int
    members: tuple
    proportion: np.ndarray = field(compare=False)

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise XRError("constraint set has no members")
        object.__setattr__(self, "proportion", validate_distribution(self.proportion))

    def __len__(self):
        return len(self.members)


@dataclass(frozen=True)
class ProportionTable:
    """Conditional target-label distributions, one row per source label."""

    rows: np.ndarray
    counts: Optional[np.ndarray] = None
    source_labels: Optional[LabelSpace] = None
    target_labels: Optional[LabelSpace] = None
    warnings: tuple = ()

    def __post_init__(self):
        rows = np.array(self.rows, dtype=np.float64)
        if rows.ndim != 2:
            raise XRError("proportion table must be two-dimensional")
        for r in rows:
            validate_distribution(r)
        if self.source_labels is not None and rows.shape[0] != self.source_labels.size:
            raise XRError("row count does not match the source label space")
        if self.target_labels is not None and rows.shape[1] != self.target_labels.size:
            raise XRError("column count does not match the target label space")
        object.__setattr__(self, "rows", _frozen(rows))
        if self.counts is not None:
            object.__setattr__(self, "counts", _frozen(np.array(self.counts, dtype=np.int64)))

    def row(self, j: int) -> np.ndarray:
        return self.rows[j]

    @property
    def shape(self):
        return self.rows.shape


UNK = "<unk>"


class Vocab:
    """Token to index mapping; index 0 is reserved for unknown tokens."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if not tokens or tokens[0] != UNK:
            tokens = [UNK] + [t for t in tokens if t != UNK]
        self.tokens = tuple(tokens)
        self._index = {t: i for i, t in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise XRError("duplicate tokens in vocabulary")

    @classmethod
    def build(cls, sequences) -> "Vocab":
        seen = set()
        for seq in sequences:
            seen.update(seq)
        seen.discard(UNK)
        return cls([UNK] + sorted(seen))

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, tok):
        return tok in self._index

    def get(self, tok, default=None):
        return self._index.get(tok, default)

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self._index.get(t, 0) for t in tokens], dtype=np.int64)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.tokens == other.tokens
