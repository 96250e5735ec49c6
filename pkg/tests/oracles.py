"""Independent reference computations used as test oracles.

These re-derive the classifier's forward pass with explicit per-example,
per-timestep loops instead of the batched code paths under test.
"""
import math

import numpy as np

from xrtransfer.model import ClassifierConfig, ClassifierParams, init_params, parameter_gradients


def ref_features(seq, p, cfg):
    E = p["embeddings"]
    if cfg.encoder_kind == "mean-pool":
        z = np.zeros(E.shape[1])
        for t in seq:
            z = z + E[t]
        return z / len(seq)
    states = []
    for d, order in (("fw", list(seq)), ("bw", list(seq)[::-1])):
        h = np.zeros(p[f"Wh_{d}"].shape[0])
        for t in order:
            h = np.tanh(E[t] @ p[f"Wx_{d}"] + h @ p[f"Wh_{d}"] + p[f"bh_{d}"])
        states.append(h)
    return np.concatenate(states)


def ref_probs(seq, p, cfg):
    logits = ref_features(seq, p, cfg) @ p["W"] + p["b"]
    scaled = [x / cfg.temperature for x in logits]
    m = max(scaled)
    ex = [math.exp(x - m) for x in scaled]
    s = sum(ex)
    return np.array([e / s for e in ex])


def ref_loss(objective, batch, targets, p, cfg):
    rows = [ref_probs(s, p, cfg) for s in batch]
    if objective == "cross-entropy":
        return -sum(math.log(max(r[y], 1e-12)) for r, y in zip(rows, targets))
    q = np.sum(rows, axis=0)
    phat = q / q.sum()
    return -sum(t * math.log(max(x, 1e-12)) for t, x in zip(targets, phat))


def relative_error(a, n, floor=1e-6):
    """|a - n| / max(|a|, |n|, floor): relative where gradients are
    non-negligible, absolute-with-floor where both vanish."""
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def random_instance(seed, encoder, objective, batch=6):
    rng = np.random.default_rng(seed)
    cfg = ClassifierConfig(vocab_size=10, num_classes=3, embed_dim=4, hidden_dim=5,
                           encoder_kind=encoder, temperature=float(rng.choice([1.0, 0.7, 2.0])))
    p = init_params(cfg, rng)
    # non-zero biases so their gradients are exercised too
    p = ClassifierParams({k: v + (0.1 * rng.standard_normal(v.shape) if v.ndim == 1 else 0)
                          for k, v in p.items()})
    seqs = [rng.integers(0, 10, size=rng.integers(1, 6)) for _ in range(batch)]
    if objective == "xr":
        targets = rng.dirichlet(np.ones(3))
    else:
        targets = rng.integers(0, 3, size=batch)
    return cfg, p, seqs, targets


def max_fd_error(cfg, p, seqs, targets, objective, eps=1e-4):
    """Max relative error of analytic gradients against central differences
    of the reference loss."""
    _, grads = parameter_gradients(objective, seqs, targets, p, cfg, rng=None)
    worst = 0.0
    for name in p:
        base = p[name]
        num = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            up = {k: v.copy() for k, v in p.items()}
            dn = {k: v.copy() for k, v in p.items()}
            up[name][idx] += eps
            dn[name][idx] -= eps
            num[idx] = (ref_loss(objective, seqs, targets, up, cfg)
                        - ref_loss(objective, seqs, targets, dn, cfg)) / (2 * eps)
        worst = max(worst, float(relative_error(grads[name], num).max()))
    return worst
