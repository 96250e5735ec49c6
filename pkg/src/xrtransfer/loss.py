"""Expectation-regularization loss over label-proportion sets, plus
cross-entropy and a KL diagnostic.

All functions take probability rows as array-likes of shape (n, |Y|).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import entropy, normalize
from .errors import EmptyRows, LengthMismatch

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class BatchPosterior:
    rows: np.ndarray
    aggregate: np.ndarray   # q-hat, unnormalized
    normalized: np.ndarray  # p-hat


def _rows(rows) -> np.ndarray:
    r = np.asarray(rows, dtype=np.float64)
    if r.ndim == 1:
        r = r[None, :]
    if r.shape[0] == 0:
        raise EmptyRows("no posterior rows")
    return r


def aggregate_posterior(rows) -> BatchPosterior:
    r = _rows(rows)
    q = r.sum(axis=0)
    return BatchPosterior(r, q, normalize(q))


def xr_loss(target, predicted) -> float:
    """Cross-entropy H(target, predicted) with predicted clamped at 1e-12."""
    t = np.asarray(target, dtype=np.float64)
    p = np.maximum(np.asarray(predicted, dtype=np.float64), PROB_FLOOR)
    return float(-(t * np.log(p)).sum())


def batched_xr_loss(target, subset_rows) -> float:
    return xr_loss(target, aggregate_posterior(subset_rows).normalized)


def cross_entropy_loss(gold, rows) -> float:
    # summed, not averaged; trainers divide by the batch size themselves
    r = np.asarray(rows, dtype=np.float64).reshape(len(rows), -1)
    gold = np.asarray(gold, dtype=np.int64).ravel()
    if gold.shape[0] != r.shape[0]:
        raise LengthMismatch(f"{gold.shape[0]} labels for {r.shape[0]} rows")
    picked = np.maximum(r[np.arange(len(gold)), gold], PROB_FLOOR)
    return float(-np.log(picked).sum())


def kl_divergence(target, predicted) -> float:
    """KL(target || predicted); diagnostic only, never optimized."""
    return xr_loss(target, predicted) - entropy(target)


def grouped_xr(probs: np.ndarray, starts: np.ndarray, targets: np.ndarray):
    """Summed XR loss over contiguous row groups and its gradient w.r.t. probs.

    ``starts`` holds the first row of each group; ``targets`` has one
    proportion row per group.  Cross-entropy over a batch is the special case
    where every row is its own group with a one-hot target.
    """
    q = np.add.reduceat(probs, starts, axis=0)
    total = q.sum(axis=1, keepdims=True)
    phat = q / total
    clamped = np.maximum(phat, PROB_FLOOR)
    loss = float(-(targets * np.log(clamped)).sum())
    # clamped entries have zero derivative
    g = np.where(phat > PROB_FLOOR, -targets / clamped, 0.0)
    dq = (g - (g * phat).sum(axis=1, keepdims=True)) / total
    sizes = np.diff(np.append(starts, probs.shape[0]))
    return loss, np.repeat(dq, sizes, axis=0)
