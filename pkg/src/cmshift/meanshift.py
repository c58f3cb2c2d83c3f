"""Neighborhood retrieval and kernel-weighted aggregation on the unit sphere.

The default kernel aggregates a query q with its k nearest neighbors by
cosine similarity, putting weight (1 - alpha) on q and alpha/k on each
neighbor, then renormalizes:

    z = normalize((1 - alpha) * q + (alpha / k) * sum(neighbors))

Two fixed-radius alternatives are provided for comparison, both expressed
in cosine similarity s = cos(v_j, q) and both including the query itself
in the aggregate (its own weight is phi(1)):

    uniform:   phi(s) = 1 if s >= delta else 0
    gaussian:  phi(s) = exp(-(1 - s) / (2 * sigma**2))
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import EmbeddingBank
from .errors import DegenerateAggregateError, EmptyBankError

DEGENERATE_NORM_TOL = 1e-12

KERNEL_KNN = "knn"
KERNEL_UNIFORM = "uniform"
KERNEL_GAUSSIAN = "gaussian"
KERNEL_KINDS = (KERNEL_KNN, KERNEL_UNIFORM, KERNEL_GAUSSIAN)


@dataclass(frozen=True)
class KernelConfig:
    kind: str = KERNEL_KNN
    k: int = 8                  # knn only
    alpha: float = 0.5          # knn only
    delta: float = 0.9          # uniform only: cosine window threshold
    sigma: float = 0.1          # gaussian only: bandwidth
    max_neighbors: int = 1000   # uniform/gaussian only: retrieval cap
    include_self_in_topk: bool = False  # literal top-k reading; self occupies a slot

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not -1.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [-1, 1]")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.max_neighbors < 1:
            raise ValueError("max_neighbors must be >= 1")


@dataclass(frozen=True)
class NeighborSet:
    """Top-k retrieval result; indices ordered by descending cosine, ties by index."""

    query_index: int | None
    neighbor_indices: np.ndarray
    includes_self: bool = False  # true only under the literal top-k reading
    truncated: bool = False      # fewer than k candidates were available


def knn_search(
    query: np.ndarray,
    bank: EmbeddingBank,
    k: int,
    exclude_index: int | None = None,
) -> NeighborSet:
    """Exhaustive top-k by cosine against the bank, excluding ``exclude_index``.

    Deterministic tie-break: equal cosines are ordered by ascending index.
    Returns a reduced set (flagged) when fewer than k candidates exist.
    """
    if bank.count == 0:
        raise EmptyBankError("cannot search an empty bank")
    if k < 1:
        raise ValueError("k must be >= 1")
    sims = bank.vectors @ np.asarray(query, dtype=np.float64)
    if exclude_index is not None:
        sims = sims.copy()
        sims[exclude_index] = -np.inf
    available = bank.count - (1 if exclude_index is not None else 0)
    if available <= 0:
        return NeighborSet(exclude_index, np.empty(0, dtype=np.int64), truncated=True)
    m = min(k, available)
    # stable argsort on the negated similarities = descending cosine, ties by index
    order = np.argsort(-sims, kind="stable")[:m]
    return NeighborSet(exclude_index, order.astype(np.int64), truncated=m < k)


def kernel_weights(cfg: KernelConfig, m: int) -> tuple[float, float]:
    """Center and per-neighbor weights of the kNN kernel.

    The divisor is the configured k even when only m < k neighbors exist;
    the shortfall is absorbed by the final renormalization.
    """
    if cfg.kind != KERNEL_KNN:
        raise ValueError("kernel_weights applies to the knn kind only")
    if m < 0:
        raise ValueError("m must be >= 0")
    return 1.0 - cfg.alpha, cfg.alpha / cfg.k


def _normalize_or_raise(aggregate: np.ndarray, context: str) -> np.ndarray:
    norm = float(np.linalg.norm(aggregate))
    if norm < DEGENERATE_NORM_TOL:
        raise DegenerateAggregateError(f"{context}: aggregate norm {norm:.3g} below tolerance")
    return aggregate / norm


def _fixed_radius_weights(cfg: KernelConfig, cosines: np.ndarray) -> np.ndarray:
    if cfg.kind == KERNEL_UNIFORM:
        return (cosines >= cfg.delta).astype(np.float64)
    return np.exp(-(1.0 - cosines) / (2.0 * cfg.sigma**2))


def shift_one(
    query: np.ndarray,
    neighbors: np.ndarray,
    cfg: KernelConfig,
) -> np.ndarray:
    """Single mean-shift step of one query given its neighbor vectors.

    For the knn kind, ``neighbors`` is the retrieved top-k set (the query
    must not be among them; its weight enters via the center term). For
    uniform/gaussian the query joins the aggregation with weight phi(1).
    """
    q = np.asarray(query, dtype=np.float64)
    nb = np.asarray(neighbors, dtype=np.float64).reshape(-1, q.shape[0])
    if cfg.kind == KERNEL_KNN:
        center_w, neighbor_w = kernel_weights(cfg, nb.shape[0])
        aggregate = center_w * q + neighbor_w * nb.sum(axis=0)
    else:
        cosines = nb @ q
        weights = _fixed_radius_weights(cfg, cosines)
        aggregate = weights @ nb + _fixed_radius_weights(cfg, np.array([1.0]))[0] * q
    return _normalize_or_raise(aggregate, f"shift_one[{cfg.kind}]")


def _fixed_radius_candidates(
    sims: np.ndarray, cfg: KernelConfig, exclude: int
) -> np.ndarray:
    """Indices entering a uniform/gaussian aggregate, capped at max_neighbors."""
    sims = sims.copy()
    sims[exclude] = -np.inf
    if cfg.kind == KERNEL_UNIFORM:
        inside = np.nonzero(sims >= cfg.delta)[0]
        if inside.size <= cfg.max_neighbors:
            return inside
        order = np.argsort(-sims[inside], kind="stable")
        return inside[order[: cfg.max_neighbors]]
    m = min(cfg.max_neighbors, sims.size - 1)
    return np.argsort(-sims, kind="stable")[:m]


_SHIFT_CHUNK = 256  # rows of similarities held at once


def shift_all(bank: EmbeddingBank, cfg: KernelConfig) -> EmbeddingBank:
    """One synchronous mean-shift step of every bank row against the input bank.

    All rows are computed from the input bank (no in-place cascade), so the
    result is invariant to row-processing order.
    """
    v = bank.vectors
    n = bank.count
    out = np.zeros_like(v)
    self_weight = float(_fixed_radius_weights(cfg, np.array([1.0]))[0])
    for start in range(0, n, _SHIFT_CHUNK):
        stop = min(start + _SHIFT_CHUNK, n)
        sims_block = v[start:stop] @ v.T
        for i in range(start, stop):
            sims = sims_block[i - start]
            if cfg.kind == KERNEL_KNN:
                if not cfg.include_self_in_topk:
                    sims = sims.copy()
                    sims[i] = -np.inf
                    m = min(cfg.k, n - 1)
                else:
                    m = min(cfg.k, n)
                idx = np.argsort(-sims, kind="stable")[:m] if m > 0 else np.empty(0, np.int64)
                center_w, neighbor_w = kernel_weights(cfg, len(idx))
                aggregate = center_w * v[i] + neighbor_w * v[idx].sum(axis=0)
            else:
                idx = _fixed_radius_candidates(sims, cfg, i)
                weights = _fixed_radius_weights(cfg, sims[idx])
                aggregate = weights @ v[idx] + self_weight * v[i]
            norm = float(np.linalg.norm(aggregate))
            if norm < DEGENERATE_NORM_TOL:
                raise DegenerateAggregateError(
                    f"row {i}: aggregate norm {norm:.3g} below tolerance"
                )
            out[i] = aggregate / norm
    return EmbeddingBank(vectors=out)
