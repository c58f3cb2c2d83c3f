"""Hungarian optimal matching and accuracy over All/Old/Novel partitions.

Predicted clusters are matched one-to-one against ground-truth classes on
the intersection-count matrix of the evaluated items; an item counts as
correct iff its cluster is matched to its class. Items of unmatched
clusters or classes are incorrect. Old/Novel restrict the same matching
(never re-matched per subset) to unlabeled items of known/unknown classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .clustering import ClusteringResult
from .data import DatasetManifest, ManifestView


@dataclass(frozen=True)
class CostMatrix:
    entries: np.ndarray          # (clusters, classes) intersection counts
    cluster_ids: np.ndarray
    class_ids: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.int64)
        object.__setattr__(self, "entries", e)
        if e.ndim != 2:
            raise ValueError("cost matrix must be 2-d")


@dataclass(frozen=True)
class AccuracyReport:
    all: float
    old: float
    novel: float
    matching: tuple[tuple[int, int], ...]  # (cluster id, class id) pairs
    n_all: int
    n_old: int
    n_novel: int
    k: int

    def machine_line(self) -> str:
        return f"{self.all:.3f},{self.old:.3f},{self.novel:.3f},{self.k}"

    def text_block(self) -> str:
        lines = [
            f"all={self.all:.6f}",
            f"old={self.old:.6f}",
            f"novel={self.novel:.6f}",
            f"n_all={self.n_all}",
            f"n_old={self.n_old}",
            f"n_novel={self.n_novel}",
            f"k={self.k}",
        ]
        return "\n".join(lines)


def hungarian(cost: np.ndarray, maximize: bool) -> list[tuple[int, int]]:
    """Optimal one-to-one assignment over min(rows, cols) pairs."""
    m = np.asarray(cost, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("cost matrix must be non-empty and 2-d")
    if not np.all(np.isfinite(m)):
        raise ValueError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(m, maximize=maximize)
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def build_cost_matrix(
    clusters: np.ndarray, labels: np.ndarray, k: int
) -> CostMatrix:
    """Intersection counts between the K predicted clusters and the distinct labels."""
    clusters = np.asarray(clusters, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    class_ids = np.unique(labels)
    col = {cls: j for j, cls in enumerate(class_ids)}
    entries = np.zeros((k, class_ids.size), dtype=np.int64)
    for c, lab in zip(clusters, labels):
        entries[c, col[lab]] += 1
    return CostMatrix(entries=entries, cluster_ids=np.arange(k), class_ids=class_ids)


def _matched_pairs(cost: CostMatrix) -> set[tuple[int, int]]:
    pairs = hungarian(cost.entries, maximize=True)
    return {(int(cost.cluster_ids[r]), int(cost.class_ids[c])) for r, c in pairs}


def gcd_accuracy(pred: ClusteringResult, manifest: DatasetManifest) -> AccuracyReport:
    """Transductive protocol: match and score over the unlabeled items."""
    scope = manifest.unlabeled_indices()
    if scope.size == 0:
        raise ValueError("manifest has no unlabeled items to evaluate")
    cluster_of = pred.cluster_of()
    missing = [int(i) for i in scope if int(i) not in cluster_of]
    if missing:
        raise ValueError(f"prediction does not cover unlabeled items, e.g. {missing[:5]}")
    clusters = np.array([cluster_of[int(i)] for i in scope])
    labels = manifest.gt_class[scope]
    matched = _matched_pairs(build_cost_matrix(clusters, labels, pred.k))
    correct = np.array(
        [(int(c), int(lab)) in matched for c, lab in zip(clusters, labels)]
    )
    known = manifest.is_known_class[scope]
    n_all = scope.size
    n_old = int(known.sum())
    n_novel = n_all - n_old

    def rate(mask: np.ndarray) -> float:
        total = int(mask.sum())
        return float(correct[mask].sum() / total) if total else 0.0

    return AccuracyReport(
        all=float(correct.sum() / n_all),
        old=rate(known),
        novel=rate(~known),
        matching=tuple(sorted(matched)),
        n_all=n_all,
        n_old=n_old,
        n_novel=n_novel,
        k=pred.k,
    )


SCOPE_LABELED = "labeled"
SCOPE_LABELED_VALIDATION = "labeled-validation"


def labeled_subset_accuracy(
    pred: ClusteringResult,
    view: ManifestView,
    scope: str = SCOPE_LABELED,
) -> float:
    """Matching accuracy restricted to items whose labels a training view exposes."""
    if scope == SCOPE_LABELED:
        indices = view.labeled_indices()
    elif scope == SCOPE_LABELED_VALIDATION:
        indices = view.labeled_validation_indices()
    else:
        raise ValueError(f"unknown scope {scope!r}")
    if indices.size == 0:
        raise ValueError(f"scope {scope!r} is empty")
    cluster_of = pred.cluster_of()
    missing = [int(i) for i in indices if int(i) not in cluster_of]
    if missing:
        raise ValueError(f"prediction does not cover scoped items, e.g. {missing[:5]}")
    clusters = np.array([cluster_of[int(i)] for i in indices])
    labels = np.array([view.label_of(int(i)) for i in indices])
    matched = _matched_pairs(build_cost_matrix(clusters, labels, pred.k))
    correct = sum((int(c), int(lab)) in matched for c, lab in zip(clusters, labels))
    return correct / indices.size
