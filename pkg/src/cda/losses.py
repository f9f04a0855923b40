"""Classification, adversarial and contrastive losses on the autodiff graph."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

KINDS = ("CE", "Adv", "SupCL", "CrossCL")


class DegenerateBatchError(ValueError):
    pass


@dataclass
class LossValue:
    value: Tensor
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        v = self.value.item()
        if not np.isfinite(v):
            raise FloatingPointError(f"{self.kind} loss is not finite")

    def item(self) -> float:
        return self.value.item()


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else ad.constant(x)


def _labels(y, n_classes=None, what="labels") -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or (y.size and not np.issubdtype(y.dtype, np.integer)):
        raise ValueError(f"{what} must be a 1-D integer array")
    if n_classes is not None:
        bad = np.flatnonzero((y < 0) | (y >= n_classes))
        if bad.size:
            raise ValueError(f"{what}[{bad[0]}] = {y[bad[0]]} outside [0, {n_classes})")
    return y.astype(np.int64)


def cross_entropy(logits, labels) -> LossValue:
    """Mean of -log softmax(logits)[label] over the batch."""
    logits = _t(logits)
    if logits.ndim != 2:
        raise ad.ShapeError("cross_entropy", logits.shape)
    B, N = logits.shape
    y = _labels(labels, N)
    if B < 1 or y.shape[0] != B:
        raise ad.ShapeError("cross_entropy", logits.shape, y.shape)
    onehot = np.zeros((B, N))
    onehot[np.arange(B), y] = 1.0
    picked = ad.sum(ad.mul(logits, onehot), axis=1)
    per_sample = ad.sub(ad.logsumexp(logits, axis=1), picked)
    return LossValue(ad.mean(per_sample), "CE")


def adversarial_loss(d_src, d_tgt) -> LossValue:
    """mean(log d_tgt) + mean(log(1 - d_src)) for target-domain probabilities.

    The discriminator maximizes this value; the generator minimizes it.
    """
    d_src, d_tgt = _t(d_src), _t(d_tgt)
    for name, d in (("d_src", d_src), ("d_tgt", d_tgt)):
        if d.data.size == 0:
            raise ValueError(f"adversarial_loss: {name} is empty")
        if np.any(d.data <= 0) or np.any(d.data >= 1):
            raise ValueError(f"adversarial_loss: {name} outside (0, 1); missing sigmoid?")
    value = ad.add(ad.mean(ad.log(d_tgt)), ad.mean(ad.log(ad.sub(1.0, d_src))))
    return LossValue(value, "Adv")


def adversarial_loss_from_logits(logit_src, logit_tgt) -> LossValue:
    """Same quantity as ``adversarial_loss`` computed from raw logits.

    Uses log(sigmoid(a)) and log(1 - sigmoid(a)) = log(sigmoid(-a)) so that a
    confident discriminator cannot produce log(0).
    """
    logit_src, logit_tgt = _t(logit_src), _t(logit_tgt)
    if logit_src.data.size == 0 or logit_tgt.data.size == 0:
        raise ValueError("adversarial_loss: empty batch")
    value = ad.add(
        ad.mean(ad.log_sigmoid(logit_tgt)), ad.mean(ad.log_sigmoid(ad.neg(logit_src)))
    )
    return LossValue(value, "Adv")


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not tau > 0:
        raise ValueError(f"temperature must be > 0, got {tau}")
    return tau


def sup_contrastive(z, labels, tau: float = 0.5) -> LossValue:
    """Supervised contrastive loss over all ordered same-label pairs.

    For anchor a and positive p the denominator holds the positive term plus
    every different-label sample; other positives are excluded. The result
    is averaged over pairs.
    """
    tau = _check_tau(tau)
    z = _t(z)
    y = _labels(labels)
    B = z.shape[0]
    if y.shape[0] != B:
        raise ad.ShapeError("sup_contrastive", z.shape, y.shape)
    same = y[:, None] == y[None, :]
    pos = same & ~np.eye(B, dtype=bool)
    neg = ~same
    n_pairs = int(pos.sum())
    if n_pairs == 0:
        raise DegenerateBatchError("sup_contrastive: degenerate batch (no positive pair)")

    sim = ad.mul(ad.matmul(z, ad.transpose(z)), 1.0 / tau)
    s = sim.data
    has_neg = neg.any(axis=1, keepdims=True)
    # Per-anchor max over negatives, and per-pair shift max(s_ap, negmax_a).
    row_max = np.max(s, axis=1, keepdims=True)
    neg_max = np.where(has_neg, np.max(np.where(neg, s, -np.inf), axis=1, keepdims=True), row_max)
    shift = np.where(has_neg, np.maximum(s, neg_max), s)

    # Non-negative entries are shifted to exp(0) and then masked out.
    neg_shift = np.where(neg, neg_max, s)
    neg_sum = ad.sum(ad.mul(ad.exp(ad.sub(sim, neg_shift)), neg.astype(float)), axis=1, keepdims=True)
    scale = np.where(has_neg, np.exp(np.minimum(neg_max - shift, 0.0)), 0.0)
    denom = ad.add(ad.exp(ad.sub(sim, shift)), ad.mul(neg_sum, scale))
    # Non-pair entries are masked out below; keep them finite and positive.
    denom = ad.add(denom, np.where(pos, 0.0, 1.0))
    terms = ad.sub(ad.log(denom), ad.sub(sim, shift))
    total = ad.sum(ad.mul(terms, pos.astype(float)))
    return LossValue(ad.mul(total, 1.0 / n_pairs), "SupCL")


def class_centroids(z, labels, classes) -> Tensor:
    """Unit-norm mean embedding of each listed class."""
    z = _t(z)
    y = _labels(labels)
    member = (np.asarray(classes)[:, None] == y[None, :]).astype(float)
    counts = member.sum(axis=1, keepdims=True)
    if np.any(counts == 0):
        raise ValueError("class_centroids: a listed class has no members")
    mean = ad.matmul(member / counts, z)
    norms = np.sqrt(np.sum(mean.data**2, axis=1))
    if not np.all(np.isfinite(norms)) or np.any(norms <= 1e-12):
        raise FloatingPointError("class_centroids: NaN or zero centroid")
    norm = ad.sqrt(ad.sum(ad.mul(mean, mean), axis=1, keepdims=True))
    return ad.div(mean, norm)


def cross_domain_contrastive(z_s, y_s, z_t, y_t, tau: float = 0.5, num_classes=None) -> LossValue:
    """Class-centroid contrastive loss between source and (pseudo-)labeled target.

    For every class present in both batches the source centroid's positive is
    the matching target centroid; negatives are the other target centroids.
    """
    tau = _check_tau(tau)
    z_s, z_t = _t(z_s), _t(z_t)
    y_s = _labels(y_s, num_classes, "y_s")
    y_t = _labels(y_t, num_classes, "y_t")
    if y_s.shape[0] != z_s.shape[0] or y_t.shape[0] != z_t.shape[0]:
        raise ad.ShapeError("cross_domain_contrastive", z_s.shape, y_s.shape, z_t.shape, y_t.shape)
    tgt_classes = np.unique(y_t)
    shared = np.intersect1d(np.unique(y_s), tgt_classes)
    if shared.size == 0:
        raise DegenerateBatchError("cross_domain_contrastive: no cross-domain anchors")

    c_s = class_centroids(z_s, y_s, shared)
    c_t = class_centroids(z_t, y_t, tgt_classes)
    sim = ad.mul(ad.matmul(c_s, ad.transpose(c_t)), 1.0 / tau)
    match = (shared[:, None] == tgt_classes[None, :]).astype(float)
    positive = ad.sum(ad.mul(sim, match), axis=1)
    terms = ad.sub(ad.logsumexp(sim, axis=1), positive)
    return LossValue(ad.mean(terms), "CrossCL")
