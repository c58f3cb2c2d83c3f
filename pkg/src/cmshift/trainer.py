"""Epoch orchestration: bank refresh, contrastive optimization, K estimation,
snapshot selection, and the iterative mean-shift inference loop.

Per epoch, the full-collection embedding bank is recomputed once and then
used read-only for neighbor retrieval; batch queries are live head outputs
of the two views, each view retrieving its own neighbors with the item's
own bank row excluded, and neighbor vectors treated as constants so
gradients flow only through the query. After each epoch the dendrogram of
the validation embeddings is cut at every candidate K; the K with the best
labeled-validation accuracy is the epoch's estimate, and the best epoch's
head and K are kept.

Inference starts from the trained embeddings and alternates clustering
with synchronous mean-shift steps, stopping once the labeled accuracy two
steps back dominates the last two (early-stopping rule); on exhaustion the
best-scoring iteration wins, earliest on ties.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusteringResult, cut, ward_cluster
from .data import EmbeddingBank, ManifestView
from .encoder import (
    HeadConfig,
    OptimizerConfig,
    ProjectionHead,
    backward,
    forward,
    init_head,
    make_views,
    sgd_step,
)
from .errors import DegenerateAggregateError
from .evaluation import SCOPE_LABELED, labeled_subset_accuracy
from .losses import ContrastiveBatch, LossConfig, TotalLoss, total_loss
from .meanshift import KERNEL_KNN, KERNEL_UNIFORM, KernelConfig, shift_all


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    kernel: KernelConfig = field(default_factory=KernelConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    head: HeadConfig = field(default_factory=lambda: HeadConfig(in_dim=768))
    view_noise_scale: float = 0.1
    k_search_max: int = 1000
    k_search_min: int = 1
    use_gt_k_for_validation: bool = False
    gt_k: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.view_noise_scale < 0:
            raise ValueError("view_noise_scale must be non-negative")
        if self.k_search_max < 1 or self.k_search_min < 1:
            raise ValueError("K search bounds must be >= 1")
        if self.use_gt_k_for_validation and self.gt_k is None:
            raise ValueError("use_gt_k_for_validation requires gt_k")


@dataclass(frozen=True)
class InferenceConfig:
    t_max: int = 10
    k_override: int | None = None
    accuracy_scope: str = SCOPE_LABELED

    def __post_init__(self):
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")


@dataclass
class EpochState:
    bank: EmbeddingBank
    head: ProjectionHead
    momentum_state: list | None
    epoch_index: int
    val_accuracy: float = 0.0
    estimated_k: int = 0


_FORWARD_CHUNK = 4096


def refresh_bank(head: ProjectionHead, base_features: np.ndarray) -> EmbeddingBank:
    """Embed the whole collection; used read-only for retrieval within an epoch."""
    base = np.atleast_2d(np.asarray(base_features, dtype=np.float64))
    rows = []
    for start in range(0, base.shape[0], _FORWARD_CHUNK):
        chunk, _ = forward(head, base[start : start + _FORWARD_CHUNK])
        rows.append(chunk)
    return EmbeddingBank(vectors=np.concatenate(rows, axis=0))


def retrieve_neighbors(
    queries: np.ndarray,
    item_indices: np.ndarray,
    bank: EmbeddingBank,
    kernel: KernelConfig,
    candidates: np.ndarray,
) -> list[np.ndarray]:
    """Per-query neighbor bank indices drawn from ``candidates`` minus the item itself."""
    cand_vectors = bank.vectors[candidates]
    sims = queries @ cand_vectors.T
    position = {int(idx): pos for pos, idx in enumerate(candidates)}
    out = []
    for row, item in enumerate(item_indices):
        s = sims[row]
        self_pos = position.get(int(item))
        if self_pos is not None:
            s = s.copy()
            s[self_pos] = -np.inf
        available = candidates.size - (1 if self_pos is not None else 0)
        if kernel.kind == KERNEL_KNN:
            m = min(kernel.k, available)
            chosen = np.argsort(-s, kind="stable")[:m]
        elif kernel.kind == KERNEL_UNIFORM:
            inside = np.nonzero(s >= kernel.delta)[0]
            if inside.size > kernel.max_neighbors:
                order = np.argsort(-s[inside], kind="stable")
                inside = inside[order[: kernel.max_neighbors]]
            chosen = inside
        else:  # gaussian
            m = min(kernel.max_neighbors, available)
            chosen = np.argsort(-s, kind="stable")[:m]
        out.append(candidates[chosen])
    return out


@dataclass(frozen=True)
class ShiftCache:
    shifted: np.ndarray
    aggregate_norms: np.ndarray
    neighbor_sets: tuple[np.ndarray, ...]
    weights: tuple[np.ndarray, ...]  # fixed-radius kinds only


def shift_queries(
    queries: np.ndarray,
    neighbor_sets: list[np.ndarray],
    bank: EmbeddingBank,
    kernel: KernelConfig,
) -> tuple[np.ndarray, ShiftCache]:
    """Mean-shift live query embeddings against frozen bank rows."""
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    shifted = np.zeros_like(q)
    norms = np.zeros(q.shape[0])
    weights_kept = []
    for i, nb in enumerate(neighbor_sets):
        vectors = bank.vectors[nb]
        if kernel.kind == KERNEL_KNN:
            aggregate = (1.0 - kernel.alpha) * q[i] + (kernel.alpha / kernel.k) * vectors.sum(
                axis=0
            )
            weights_kept.append(np.empty(0))
        else:
            cos = vectors @ q[i]
            if kernel.kind == KERNEL_UNIFORM:
                w = (cos >= kernel.delta).astype(np.float64)
            else:
                w = np.exp(-(1.0 - cos) / (2.0 * kernel.sigma**2))
            aggregate = q[i] + w @ vectors  # query weight is phi(1) = 1
            weights_kept.append(w)
        norm = float(np.linalg.norm(aggregate))
        if norm < 1e-12:
            raise DegenerateAggregateError(f"batch row {i}: aggregate norm {norm:.3g}")
        shifted[i] = aggregate / norm
        norms[i] = norm
    cache = ShiftCache(
        shifted=shifted,
        aggregate_norms=norms,
        neighbor_sets=tuple(neighbor_sets),
        weights=tuple(weights_kept),
    )
    return shifted, cache


def shift_queries_backward(
    grad_shifted: np.ndarray,
    cache: ShiftCache,
    bank: EmbeddingBank,
    kernel: KernelConfig,
) -> np.ndarray:
    """Chain gradients through the shift back to the query embeddings."""
    z = cache.shifted
    radial = np.sum(grad_shifted * z, axis=1, keepdims=True)
    g_aggregate = (grad_shifted - radial * z) / cache.aggregate_norms[:, None]
    if kernel.kind == KERNEL_KNN:
        return (1.0 - kernel.alpha) * g_aggregate
    if kernel.kind == KERNEL_UNIFORM:
        return g_aggregate.copy()  # indicator weights are locally constant
    g_query = g_aggregate.copy()
    for i, (nb, w) in enumerate(zip(cache.neighbor_sets, cache.weights)):
        vectors = bank.vectors[nb]
        coeff = (w / (2.0 * kernel.sigma**2)) * (vectors @ g_aggregate[i])
        g_query[i] += coeff @ vectors
    return g_query


def batch_objective(
    head: ProjectionHead,
    base_a: np.ndarray,
    base_b: np.ndarray,
    item_indices: np.ndarray,
    bank: EmbeddingBank,
    labels,
    kernel: KernelConfig,
    loss_cfg: LossConfig,
    candidates: np.ndarray,
    neighbors_a: list[np.ndarray] | None = None,
    neighbors_b: list[np.ndarray] | None = None,
) -> tuple[TotalLoss, tuple]:
    """Loss of one batch and exact parameter gradients through both views.

    Neighbor sets may be passed in to freeze retrieval (finite-difference
    checks); by default each view retrieves its own set from the bank.
    """
    v_a, tape_a = forward(head, base_a)
    v_b, tape_b = forward(head, base_b)
    if neighbors_a is None:
        neighbors_a = retrieve_neighbors(v_a, item_indices, bank, kernel, candidates)
    if neighbors_b is None:
        neighbors_b = retrieve_neighbors(v_b, item_indices, bank, kernel, candidates)
    z_a, cache_a = shift_queries(v_a, neighbors_a, bank, kernel)
    z_b, cache_b = shift_queries(v_b, neighbors_b, bank, kernel)
    batch = ContrastiveBatch(anchors_z=z_a, positives_z=z_b, raw_v=v_a, labels=labels)
    out = total_loss(batch, loss_cfg)
    g_va = shift_queries_backward(out.grad_anchors, cache_a, bank, kernel) + out.grad_raw
    g_vb = shift_queries_backward(out.grad_positives, cache_b, bank, kernel)
    grads_a = backward(head, tape_a, g_va)
    grads_b = backward(head, tape_b, g_vb)
    grads = tuple((ga[0] + gb[0], ga[1] + gb[1]) for ga, gb in zip(grads_a, grads_b))
    return out, grads


def _epoch_rng(seed: int, epoch_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, epoch_index))))


def train_epoch(
    state: EpochState,
    base_features: np.ndarray,
    view: ManifestView,
    cfg: TrainConfig,
    paired_views: tuple[EmbeddingBank, EmbeddingBank] | None = None,
) -> tuple[EpochState, float]:
    """One pass over the shuffled training items; returns the new state and mean loss."""
    rng = _epoch_rng(cfg.seed, state.epoch_index)
    train_idx = view.train_indices()
    order = train_idx[rng.permutation(train_idx.size)]
    batch_size = cfg.optimizer.batch_size
    head = state.head
    momentum = state.momentum_state
    losses = []
    for start in range(0, order.size, batch_size):
        batch_idx = order[start : start + batch_size]
        if batch_idx.size < 2:
            break  # a 1-item trailing batch has no negatives
        if paired_views is not None:
            base_a = paired_views[0].vectors[batch_idx]
            base_b = paired_views[1].vectors[batch_idx]
        else:
            pairs = [
                make_views(base_features[i], cfg.view_noise_scale, rng) for i in batch_idx
            ]
            base_a = np.stack([p[0] for p in pairs])
            base_b = np.stack([p[1] for p in pairs])
        labels = view.visible_labels(batch_idx)
        out, grads = batch_objective(
            head,
            base_a,
            base_b,
            batch_idx,
            state.bank,
            labels,
            cfg.kernel,
            cfg.loss,
            candidates=train_idx,
        )
        head, momentum = sgd_step(head, grads, cfg.optimizer, momentum)
        losses.append(out.value)
    new_state = EpochState(
        bank=state.bank,
        head=head,
        momentum_state=momentum,
        epoch_index=state.epoch_index + 1,
        val_accuracy=state.val_accuracy,
        estimated_k=state.estimated_k,
    )
    return new_state, float(np.mean(losses)) if losses else 0.0


def estimate_k(
    val_embeddings: np.ndarray,
    view: ManifestView,
    k_search_max: int = 1000,
    gt_k: int | None = None,
    k_search_min: int = 1,
) -> tuple[int, float]:
    """Best-accuracy dendrogram cut of the validation embeddings.

    Rows of ``val_embeddings`` correspond to ``view.validation_indices()``
    in order. With ``gt_k`` given, returns that K and its accuracy instead
    of the argmax (ground-truth-K validation mode).
    """
    val_idx = view.validation_indices()
    if val_idx.size == 0:
        raise ValueError("validation set is empty")
    if view.labeled_validation_indices().size == 0:
        raise ValueError("validation set has no labeled items")
    if val_embeddings.shape[0] != val_idx.size:
        raise ValueError("validation embeddings do not match the validation split")
    history = ward_cluster(val_embeddings)
    if gt_k is not None:
        if not 1 <= gt_k <= val_idx.size:
            raise ValueError(f"gt_k={gt_k} outside [1, {val_idx.size}]")
        result = cut(history, gt_k, item_indices=val_idx)
        return gt_k, labeled_subset_accuracy(result, view, "labeled-validation")
    best_k, best_acc = 0, -1.0
    for k in range(k_search_min, min(val_idx.size, k_search_max) + 1):
        result = cut(history, k, item_indices=val_idx)
        acc = labeled_subset_accuracy(result, view, "labeled-validation")
        if acc > best_acc:
            best_k, best_acc = k, acc
    return best_k, best_acc


@dataclass(frozen=True)
class TrainingLog:
    initial_val_accuracy: float
    initial_estimated_k: int
    rows: tuple[tuple[int, float, float, int], ...]  # (epoch, loss, val_acc, est_k)

    def to_text(self) -> str:
        lines = ["epoch,loss,val_acc,est_k"]
        lines.append(f"0,nan,{self.initial_val_accuracy:.6f},{self.initial_estimated_k}")
        for epoch, loss, acc, k in self.rows:
            lines.append(f"{epoch},{loss:.12g},{acc:.6f},{k}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class FitResult:
    head: ProjectionHead
    estimated_k: int
    log: TrainingLog
    best_epoch: int
    best_val_accuracy: float


def _validate(
    state: EpochState, view: ManifestView, cfg: TrainConfig
) -> tuple[int, float]:
    val_idx = view.validation_indices()
    gt_k = cfg.gt_k if cfg.use_gt_k_for_validation else None
    return estimate_k(
        state.bank.vectors[val_idx],
        view,
        k_search_max=cfg.k_search_max,
        gt_k=gt_k,
        k_search_min=cfg.k_search_min,
    )


def fit(
    base_features: np.ndarray,
    view: ManifestView,
    cfg: TrainConfig,
    paired_views: tuple[EmbeddingBank, EmbeddingBank] | None = None,
) -> FitResult:
    """Train for cfg.epochs, keep the snapshot with the best validation accuracy.

    Ties go to the earliest epoch. Epoch 0 (the untrained head) is logged
    for reference but only post-epoch snapshots are selectable.
    """
    if cfg.loss.lam > 0 and view.labeled_indices().size == 0:
        raise ValueError("supervised loss weight > 0 requires labeled items")
    head = init_head(cfg.head)
    bank = refresh_bank(head, base_features)
    state = EpochState(bank=bank, head=head, momentum_state=None, epoch_index=0)
    k0, acc0 = _validate(state, view, cfg)
    state.val_accuracy, state.estimated_k = acc0, k0

    rows = []
    best_head, best_k, best_acc, best_epoch = None, 0, -1.0, -1
    for _ in range(cfg.epochs):
        state, mean_loss = train_epoch(state, base_features, view, cfg, paired_views)
        state.bank = refresh_bank(state.head, base_features)
        k, acc = _validate(state, view, cfg)
        state.val_accuracy, state.estimated_k = acc, k
        rows.append((state.epoch_index, mean_loss, acc, k))
        if acc > best_acc:
            best_head, best_k, best_acc, best_epoch = state.head, k, acc, state.epoch_index
    log = TrainingLog(
        initial_val_accuracy=acc0, initial_estimated_k=k0, rows=tuple(rows)
    )
    return FitResult(
        head=best_head,
        estimated_k=best_k,
        log=log,
        best_epoch=best_epoch,
        best_val_accuracy=best_acc,
    )


@dataclass(frozen=True)
class InferenceOutcome:
    result: ClusteringResult
    iterations_used: int       # last iteration index evaluated
    returned_iteration: int    # iteration whose clustering is returned
    aborted_degenerate: bool = False


def final_inference(
    head: ProjectionHead,
    base_features: np.ndarray,
    view: ManifestView,
    k: int,
    inf: InferenceConfig,
    kernel: KernelConfig,
    cluster_hook=None,
) -> InferenceOutcome:
    """Iterative mean-shift inference with the two-step early-stopping rule.

    ``cluster_hook(bank, t) -> (ClusteringResult, labeled_accuracy)``
    replaces the default ward-cut-and-score step when provided (used to
    exercise the stop rule in isolation).
    """
    if k < 1:
        raise ValueError("K must be >= 1")
    train_idx = view.train_indices()
    bank = refresh_bank(head, base_features[train_idx])
    results: list[ClusteringResult] = []
    accs: list[float] = []
    aborted = False
    for t in range(inf.t_max + 1):
        if cluster_hook is not None:
            result, acc = cluster_hook(bank, t)
        else:
            history = ward_cluster(bank.vectors)
            result = cut(history, k, item_indices=train_idx)
            acc = labeled_subset_accuracy(result, view, inf.accuracy_scope)
        results.append(result)
        accs.append(acc)
        if t > 1 and accs[t - 2] >= max(accs[t - 1], accs[t]):
            return InferenceOutcome(
                result=results[t - 2], iterations_used=t, returned_iteration=t - 2
            )
        if t < inf.t_max:
            try:
                bank = shift_all(bank, kernel)
            except DegenerateAggregateError:
                aborted = True
                break
    best = int(np.argmax(accs))
    return InferenceOutcome(
        result=results[best],
        iterations_used=len(accs) - 1,
        returned_iteration=best,
        aborted_degenerate=aborted,
    )
