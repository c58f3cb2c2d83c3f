"""Ward-linkage agglomeration with full merge history, plus a semi-supervised k-means baseline.

Merging is greedy on Ward's minimum-variance criterion: the cost of joining
clusters A and B is the increase in total within-cluster sum of squares,

    cost(A, B) = |A| |B| / (|A| + |B|) * ||mean(A) - mean(B)||^2,

maintained incrementally with the Lance-Williams recurrence. Cost ties
(within 1e-12 absolute) are broken by the lexicographically smallest
(min_id, max_id) pair so merge sequences are platform-stable. Items carry
ids 0..n-1 and merged clusters n..2n-2.

Note: the greedy global-minimum scan replaces the nearest-neighbor-chain
variant; the chain cannot guarantee the pinned tie order, and desk-scale
inputs keep the vectorized scan cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COST_TIE_TOL = 1e-12


@dataclass(frozen=True)
class MergeRecord:
    cluster_a: int   # smaller id
    cluster_b: int   # larger id
    cost: float
    new_cluster: int


@dataclass(frozen=True)
class MergeHistory:
    n: int
    merges: tuple[MergeRecord, ...]


@dataclass(frozen=True)
class ClusteringResult:
    """Cluster ids 0..K-1 per item; item_indices maps rows to dataset indices."""

    assignments: np.ndarray
    k: int
    item_indices: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=np.int64)
        object.__setattr__(self, "assignments", a)
        idx = self.item_indices
        idx = np.arange(a.size) if idx is None else np.asarray(idx, dtype=np.int64)
        if idx.size != a.size:
            raise ValueError("item_indices must align with assignments")
        object.__setattr__(self, "item_indices", idx)
        if self.k < 1:
            raise ValueError("K must be >= 1")
        present = np.unique(a)
        if present.size != self.k or present[0] != 0 or present[-1] != self.k - 1:
            raise ValueError(f"expected exactly {self.k} nonempty clusters 0..{self.k - 1}")

    def cluster_of(self) -> dict[int, int]:
        return {int(i): int(c) for i, c in zip(self.item_indices, self.assignments)}


def _pairwise_ward_costs(points: np.ndarray) -> np.ndarray:
    """Initial singleton costs 0.5 * squared Euclidean distance."""
    sq = np.sum(points**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (points @ points.T)
    np.maximum(d2, 0.0, out=d2)
    return 0.5 * d2


def ward_cluster(points: np.ndarray) -> MergeHistory:
    """Full agglomeration of the rows of ``points`` under Ward's criterion."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = pts.shape[0]
    if n < 1:
        raise ValueError("need at least one point")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    if n == 1:
        return MergeHistory(n=1, merges=())

    costs = _pairwise_ward_costs(pts)
    np.fill_diagonal(costs, np.inf)
    alive = np.ones(n, dtype=bool)
    ids = np.arange(n)         # cluster id currently held by each slot
    sizes = np.ones(n)
    merges = []

    for step in range(n - 1):
        masked = np.where(alive[:, None] & alive[None, :], costs, np.inf)
        best = float(masked.min())
        cand_i, cand_j = np.nonzero(masked <= best + COST_TIE_TOL)
        upper = cand_i < cand_j
        cand_i, cand_j = cand_i[upper], cand_j[upper]
        pair_ids = np.stack(
            [np.minimum(ids[cand_i], ids[cand_j]), np.maximum(ids[cand_i], ids[cand_j])],
            axis=1,
        )
        pick = int(np.lexsort((pair_ids[:, 1], pair_ids[:, 0]))[0])
        si, sj = int(cand_i[pick]), int(cand_j[pick])
        id_a, id_b = int(pair_ids[pick, 0]), int(pair_ids[pick, 1])
        new_id = n + step
        merges.append(MergeRecord(id_a, id_b, float(costs[si, sj]), new_id))

        # Lance-Williams update against every other live slot
        sa, sb = sizes[si], sizes[sj]
        others = alive.copy()
        others[si] = others[sj] = False
        sc = sizes[others]
        merged = (
            (sa + sc) * costs[si, others]
            + (sb + sc) * costs[sj, others]
            - sc * costs[si, sj]
        ) / (sa + sb + sc)
        costs[si, others] = merged
        costs[others, si] = merged
        costs[si, si] = np.inf
        alive[sj] = False
        ids[si] = new_id
        sizes[si] = sa + sb

    return MergeHistory(n=n, merges=tuple(merges))


def cut(history: MergeHistory, k: int, item_indices: np.ndarray | None = None) -> ClusteringResult:
    """Undo the last K-1 merges; clusters relabeled 0..K-1 by smallest member index."""
    n = history.n
    if not 1 <= k <= n:
        raise ValueError(f"K must lie in [1, {n}], got {k}")
    parent = np.arange(2 * n - 1)
    for record in history.merges[: n - k]:
        parent[record.cluster_a] = record.new_cluster
        parent[record.cluster_b] = record.new_cluster

    def root(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    labels = np.empty(n, dtype=np.int64)
    relabel: dict[int, int] = {}
    for i in range(n):
        r = root(i)
        if r not in relabel:
            relabel[r] = len(relabel)
        labels[i] = relabel[r]
    return ClusteringResult(assignments=labels, k=k, item_indices=item_indices)


def semi_supervised_kmeans(
    points: np.ndarray,
    labeled_items: list[tuple[int, int]],
    k: int,
    max_iters: int = 100,
    seed: int = 0,
) -> ClusteringResult:
    """Lloyd iterations with labeled points pinned to their class centroids.

    Class centroids start at labeled-class means; the remaining K - C
    centroids are seeded by farthest-point selection over unlabeled points.
    A centroid that loses all members is re-seeded to the unlabeled point
    farthest from its nearest centroid.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = pts.shape[0]
    classes = sorted({cls for _, cls in labeled_items})
    c = len(classes)
    if k < max(c, 1):
        raise ValueError(f"K={k} below the {c} distinct labeled classes")
    if k > n:
        raise ValueError(f"K={k} exceeds the {n} points")
    class_slot = {cls: slot for slot, cls in enumerate(classes)}
    pinned = np.full(n, -1, dtype=np.int64)
    for idx, cls in labeled_items:
        pinned[idx] = class_slot[cls]
    unlabeled = np.nonzero(pinned < 0)[0]

    centroids = np.zeros((k, pts.shape[1]))
    for cls, slot in class_slot.items():
        members = [idx for idx, lab in labeled_items if lab == cls]
        centroids[slot] = pts[members].mean(axis=0)
    extra = k - c
    if extra > 0:
        if unlabeled.size < extra:
            raise ValueError(f"{extra} extra centroids but only {unlabeled.size} unlabeled points")
        rng = np.random.Generator(np.random.PCG64(seed))
        placed = c
        if placed == 0:
            first = unlabeled[int(rng.integers(unlabeled.size))]
            centroids[0] = pts[first]
            placed = 1
        while placed < k:
            dists = np.min(
                np.linalg.norm(pts[unlabeled][:, None, :] - centroids[None, :placed, :], axis=2),
                axis=1,
            )
            centroids[placed] = pts[unlabeled[int(np.argmax(dists))]]
            placed += 1

    assign = np.full(n, -1, dtype=np.int64)
    assign[pinned >= 0] = pinned[pinned >= 0]
    for _ in range(max_iters):
        if unlabeled.size:
            d = np.linalg.norm(pts[unlabeled][:, None, :] - centroids[None, :, :], axis=2)
            new_u = np.argmin(d, axis=1)
        else:
            new_u = np.empty(0, dtype=np.int64)
        new_assign = assign.copy()
        new_assign[unlabeled] = new_u
        if np.array_equal(new_assign, assign) and np.all(assign >= 0):
            break
        assign = new_assign
        for slot in range(k):
            members = np.nonzero(assign == slot)[0]
            if members.size:
                centroids[slot] = pts[members].mean(axis=0)
            elif unlabeled.size:
                d = np.min(
                    np.linalg.norm(pts[unlabeled][:, None, :] - centroids[None, :, :], axis=2),
                    axis=1,
                )
                centroids[slot] = pts[unlabeled[int(np.argmax(d))]]
    return ClusteringResult(assignments=assign, k=k)


def save_clustering(result: ClusteringResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("index,cluster\n")
        for idx, label in zip(result.item_indices, result.assignments):
            fh.write(f"{idx},{label}\n")


def load_clustering(path) -> ClusteringResult:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != "index,cluster":
        raise ValueError(f"{path}: missing or bad header line")
    indices, labels = [], []
    for ln in lines[1:]:
        a, b = ln.split(",")
        indices.append(int(a))
        labels.append(int(b))
    k = len(set(labels))
    return ClusteringResult(
        assignments=np.array(labels), k=k, item_indices=np.array(indices)
    )