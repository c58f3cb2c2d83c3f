"""Contrastive objectives over mean-shifted and raw embeddings, with exact gradients.

The unsupervised term scores each anchor z_i against its positive z_i+ in
the numerator and, by default, against the other anchors z_j (j != i) in
the denominator (negatives only; the positive never enters it). A toggle
switches to the SimCLR-style denominator that additionally includes every
positive. The supervised term operates on raw (pre-shift) embeddings of
labeled items only, pulling same-class pairs together against all
other-class labeled items.

Gradients are taken with respect to the loss inputs as free vectors; any
normalization Jacobians belong to the callers that produced the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientBatchError


@dataclass(frozen=True)
class LossConfig:
    tau_u: float = 0.3
    tau_s: float = 0.07
    lam: float = 0.35
    symmetrize_cms: bool = True         # both views serve as anchors (2B terms)
    simclr_denominator: bool = False    # include positives in the CMS denominator

    def __post_init__(self):
        if self.tau_u <= 0 or self.tau_s <= 0:
            raise ValueError("temperatures must be strictly positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")


@dataclass(frozen=True)
class ContrastiveBatch:
    anchors_z: np.ndarray     # (B, d) mean-shifted embeddings of view a
    positives_z: np.ndarray   # (B, d) mean-shifted embeddings of view b
    raw_v: np.ndarray         # (B, d) pre-shift embeddings of view a
    labels: tuple             # per item: class id or None

    def __post_init__(self):
        za = np.atleast_2d(np.asarray(self.anchors_z, dtype=np.float64))
        zp = np.atleast_2d(np.asarray(self.positives_z, dtype=np.float64))
        rv = np.atleast_2d(np.asarray(self.raw_v, dtype=np.float64))
        if not (za.shape == zp.shape == rv.shape):
            raise ValueError("anchors, positives and raw embeddings must align")
        if len(self.labels) != za.shape[0]:
            raise ValueError("labels must align with the batch")
        for name, m in (("anchors_z", za), ("positives_z", zp), ("raw_v", rv)):
            norms = np.linalg.norm(m, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-4):
                raise ValueError(f"{name} rows must be unit norm")
        object.__setattr__(self, "anchors_z", za)
        object.__setattr__(self, "positives_z", zp)
        object.__setattr__(self, "raw_v", rv)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def size(self) -> int:
        return self.anchors_z.shape[0]


def _masked_softmax_rows(scores: np.ndarray, mask: np.ndarray):
    """Row softmax over masked-in entries; returns (weights, logsumexp)."""
    neg = np.where(mask, scores, -np.inf)
    peak = np.max(neg, axis=1, keepdims=True)
    expd = np.where(mask, np.exp(neg - peak), 0.0)
    total = expd.sum(axis=1, keepdims=True)
    lse = peak[:, 0] + np.log(total[:, 0])
    return expd / total, lse


def cms_loss(
    batch: ContrastiveBatch,
    tau_u: float,
    simclr_denominator: bool = False,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean anchor loss and exact gradients w.r.t. anchors_z and positives_z."""
    za, zp = batch.anchors_z, batch.positives_z
    b = batch.size
    if b < 2:
        raise InsufficientBatchError("contrastive batch needs at least 2 items")
    pos = np.sum(za * zp, axis=1) / tau_u

    if not simclr_denominator:
        scores = (za @ za.T) / tau_u
        mask = ~np.eye(b, dtype=bool)
        weights, lse = _masked_softmax_rows(scores, mask)
        value = float(np.mean(-pos + lse))
        g_anchors = (-zp + weights @ za + weights.T @ za) / (tau_u * b)
        g_positives = -za / (tau_u * b)
        return value, g_anchors, g_positives

    pool = np.concatenate([za, zp], axis=0)  # columns: B anchors then B positives
    scores = (za @ pool.T) / tau_u
    mask = np.ones((b, 2 * b), dtype=bool)
    mask[np.arange(b), np.arange(b)] = False  # drop self among anchors
    weights, lse = _masked_softmax_rows(scores, mask)
    value = float(np.mean(-pos + lse))
    g_anchors = (-zp + weights @ pool + weights[:, :b].T @ za) / (tau_u * b)
    g_positives = (-za + weights[:, b:].T @ za) / (tau_u * b)
    return value, g_anchors, g_positives


def sup_con_loss(
    batch: ContrastiveBatch,
    tau_s: float,
) -> tuple[float, np.ndarray, bool]:
    """Supervised contrastive loss over labeled raw embeddings.

    An anchor contributes when it has at least one same-class labeled
    positive and at least one other-class labeled item for the denominator;
    with no contributing anchors, returns (0, zeros, empty-positives flag).
    """
    v = batch.raw_v
    labeled = [i for i, lab in enumerate(batch.labels) if lab is not None]
    grad = np.zeros_like(v)
    terms = []
    contributions = []
    for i in labeled:
        pos_idx = [j for j in labeled if j != i and batch.labels[j] == batch.labels[i]]
        neg_idx = [j for j in labeled if j != i and batch.labels[j] != batch.labels[i]]
        if not pos_idx or not neg_idx:
            continue
        s_pos = (v[pos_idx] @ v[i]) / tau_s
        s_neg = (v[neg_idx] @ v[i]) / tau_s
        peak = np.max(s_neg)
        expd = np.exp(s_neg - peak)
        lse = peak + np.log(expd.sum())
        q = expd / expd.sum()
        terms.append(-float(np.mean(s_pos)) + float(lse))
        contributions.append((i, pos_idx, neg_idx, q))
    if not terms:
        return 0.0, grad, True
    m = len(terms)
    for i, pos_idx, neg_idx, q in contributions:
        grad[i] += (-v[pos_idx].mean(axis=0) + q @ v[neg_idx]) / (tau_s * m)
        grad[pos_idx] += -v[i] / (tau_s * len(pos_idx) * m)
        grad[neg_idx] += np.outer(q, v[i]) / (tau_s * m)
    return float(np.mean(terms)), grad, False


@dataclass(frozen=True)
class TotalLoss:
    value: float
    grad_anchors: np.ndarray
    grad_positives: np.ndarray
    grad_raw: np.ndarray
    cms_value: float
    sup_value: float
    sup_empty: bool


def total_loss(batch: ContrastiveBatch, cfg: LossConfig) -> TotalLoss:
    """lam * supervised + (1 - lam) * unsupervised, gradients combined the same way."""
    cms_fwd, ga_fwd, gp_fwd = cms_loss(batch, cfg.tau_u, cfg.simclr_denominator)
    if cfg.symmetrize_cms:
        swapped = ContrastiveBatch(
            anchors_z=batch.positives_z,
            positives_z=batch.anchors_z,
            raw_v=batch.raw_v,
            labels=batch.labels,
        )
        cms_bwd, ga_bwd, gp_bwd = cms_loss(swapped, cfg.tau_u, cfg.simclr_denominator)
        cms_value = 0.5 * (cms_fwd + cms_bwd)
        g_anchors = 0.5 * (ga_fwd + gp_bwd)
        g_positives = 0.5 * (gp_fwd + ga_bwd)
    else:
        cms_value, g_anchors, g_positives = cms_fwd, ga_fwd, gp_fwd
    sup_value, g_raw, sup_empty = sup_con_loss(batch, cfg.tau_s)
    value = cfg.lam * sup_value + (1.0 - cfg.lam) * cms_value
    return TotalLoss(
        value=value,
        grad_anchors=(1.0 - cfg.lam) * g_anchors,
        grad_positives=(1.0 - cfg.lam) * g_positives,
        grad_raw=cfg.lam * g_raw,
        cms_value=cms_value,
        sup_value=sup_value,
        sup_empty=sup_empty,
    )
