"""Multi-label classification losses and class-frequency weighting.

Every loss returns (scalar, gradient w.r.t. its score/logit argument) so the
trainer never re-derives gradients. The scaled BCE multiplies the mean-reduced
loss by a constant factor; that factor interacts with momentum and weight
decay, which is exactly why it is not the same thing as raising the learning
rate (see the trajectory tests).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import as_f64, sigmoid

LOSS_KINDS = ("bce", "lsep", "warp")
WEIGHT_RULES = ("none", "ratio", "sqrt_ratio", "inv_ratio", "inv_sqrt_ratio")


@dataclass
class ClassStats:
    """Per-class video counts N_i; the mean count normalizes the weight rules."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = as_f64(self.counts)
        if self.counts.ndim != 1:
            raise ValueError("class counts must be a vector")

    @property
    def n_mean(self) -> float:
        return float(self.counts.mean())

    @classmethod
    def from_labels(cls, labels) -> "ClassStats":
        """Count videos containing each class from a binary [S,C] matrix."""
        labels = np.asarray(labels)
        return cls(labels.sum(axis=0).astype(np.float64))


def class_weights(stats: ClassStats, rule: str) -> np.ndarray:
    if rule not in WEIGHT_RULES:
        raise ValueError(f"unknown weight rule {rule!r}")
    if rule == "none":
        return np.ones_like(stats.counts)
    if np.any(stats.counts <= 0):
        raise ValueError("ratio weight rules require every class count to be positive")
    ratio = stats.counts / stats.n_mean
    if rule == "ratio":
        return ratio
    if rule == "sqrt_ratio":
        return np.sqrt(ratio)
    if rule == "inv_ratio":
        return 1.0 / ratio
    return 1.0 / np.sqrt(ratio)


@dataclass
class LossConfig:
    kind: str = "bce"
    scale: float = 160.0
    class_weights: np.ndarray | None = None
    margin: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.scale <= 0:
            raise ValueError(f"loss scale must be positive, got {self.scale}")
        if self.class_weights is not None:
            self.class_weights = as_f64(self.class_weights)
            if np.any(self.class_weights <= 0):
                raise ValueError("class weights must all be positive")


def _check_targets(targets) -> np.ndarray:
    targets = as_f64(targets)
    if not np.all((targets == 0.0) | (targets == 1.0)):
        raise ValueError("targets must be exactly 0 or 1")
    return targets


def bce_scaled(logits, targets, cfg: LossConfig):
    """Scaled, optionally class-weighted binary cross-entropy with logits.

    L = scale * mean(w_c * [-y log s(z) - (1-y) log(1 - s(z))]) over all N*C
    entries, computed in the overflow-free form max(z,0) - z*y + log1p(e^-|z|).
    """
    z = as_f64(logits)
    y = _check_targets(targets)
    if z.shape != y.shape:
        raise ValueError(f"logits shape {z.shape} != targets shape {y.shape}")
    w = np.ones(z.shape[1]) if cfg.class_weights is None else cfg.class_weights
    if w.shape != (z.shape[1],):
        raise ValueError(f"class weights shape {w.shape} does not match C={z.shape[1]}")
    per_entry = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    loss = cfg.scale * float((w[None, :] * per_entry).mean())
    grad = cfg.scale * w[None, :] * (sigmoid(z) - y) / z.size
    return loss, grad


def lsep(scores, targets):
    """Smooth pairwise rank loss: log(1 + sum_{p,n} exp(s_n - s_p)) per sample.

    Samples lacking a positive or a negative contribute zero. Mean over all
    samples. Stabilized through log-sum-exp so huge score gaps cannot overflow.
    """
    s = as_f64(scores)
    y = _check_targets(targets)
    n_samples = s.shape[0]
    total = 0.0
    grad = np.zeros_like(s)
    for i in range(n_samples):
        pos = np.flatnonzero(y[i] == 1.0)
        neg = np.flatnonzero(y[i] == 0.0)
        if pos.size == 0 or neg.size == 0:
            continue
        diffs = s[i, neg][None, :] - s[i, pos][:, None]  # [P, Q]
        m = diffs.max()
        lse = m + np.log(np.exp(diffs - m).sum())
        log_total = np.logaddexp(0.0, lse)  # log(1 + sum e^d)
        total += log_total
        coef = np.exp(diffs - log_total)
        grad[i, neg] += coef.sum(axis=0)
        grad[i, pos] -= coef.sum(axis=1)
    return total / n_samples, grad / n_samples


def _harmonic(r: int) -> float:
    return sum(1.0 / j for j in range(1, r + 1))


def warp(scores, targets, margin: float = 1.0):
    """Rank-weighted hinge loss with the exact rank (no negative sampling).

    Per positive p: r = #{negatives n : s_n + margin > s_p}; the contribution
    is H(r) * mean over violating n of (margin - s_p + s_n), where H is the
    harmonic number. Positives with r = 0 contribute nothing. Sample losses
    are the sum of their positives' contributions, averaged over samples.
    """
    s = as_f64(scores)
    y = _check_targets(targets)
    n_samples = s.shape[0]
    total = 0.0
    grad = np.zeros_like(s)
    for i in range(n_samples):
        pos = np.flatnonzero(y[i] == 1.0)
        neg = np.flatnonzero(y[i] == 0.0)
        if pos.size == 0 or neg.size == 0:
            continue
        for p in pos:
            viol = margin - s[i, p] + s[i, neg]
            violating = viol > 0.0
            r = int(violating.sum())
            if r == 0:
                continue
            hr = _harmonic(r)
            total += hr * viol[violating].mean()
            grad[i, neg[violating]] += hr / r
            grad[i, p] -= hr
    return total / n_samples, grad / n_samples
