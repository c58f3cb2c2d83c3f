import math

import numpy as np
import pytest

from cmshift.data import EmbeddingBank, SyntheticConfig, generate_synthetic
from cmshift.errors import DegenerateAggregateError, EmptyBankError
from cmshift.meanshift import (
    KernelConfig,
    kernel_weights,
    knn_search,
    shift_all,
    shift_one,
)


def unit_rows(rng, n, d):
    m = rng.standard_normal((n, d))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def knn_oracle(query, vectors, k, exclude):
    """Exhaustive sort over (descending cosine, ascending index)."""
    scored = [
        (-float(v @ query), i)
        for i, v in enumerate(vectors)
        if i != exclude
    ]
    scored.sort()
    return [i for _, i in scored[:k]]


class TestKnnSearch:
    def test_orthogonal_ties_break_by_index(self):
        bank = EmbeddingBank(vectors=np.eye(4))
        result = knn_search(np.array([1.0, 0, 0, 0]), bank, k=2)
        assert result.neighbor_indices.tolist() == [0, 1]

    def test_exclusion_contract(self):
        bank = EmbeddingBank(vectors=np.eye(4))
        result = knn_search(bank.vectors[3], bank, k=3, exclude_index=3)
        assert 3 not in result.neighbor_indices.tolist()
        assert result.neighbor_indices.size == 3

    def test_matches_exhaustive_sort_oracle(self):
        rng = np.random.default_rng(29)
        vectors = unit_rows(rng, 64, 8)
        bank = EmbeddingBank(vectors=vectors)
        for trial in range(20):
            qi = int(rng.integers(64))
            expect = knn_oracle(vectors[qi], vectors, 8, exclude=qi)
            got = knn_search(vectors[qi], bank, k=8, exclude_index=qi)
            assert got.neighbor_indices.tolist() == expect

    def test_reduced_size_when_k_exceeds_candidates(self):
        bank = EmbeddingBank(vectors=np.eye(3))
        result = knn_search(bank.vectors[0], bank, k=10, exclude_index=0)
        assert result.truncated
        assert result.neighbor_indices.size == 2

    def test_empty_bank(self):
        bank = EmbeddingBank(vectors=np.zeros((0, 3)))
        with pytest.raises(EmptyBankError):
            knn_search(np.array([1.0, 0, 0]), bank, k=1)


class TestKernelWeights:
    def test_paper_defaults(self):
        center, per = kernel_weights(KernelConfig(alpha=0.5, k=8), m=8)
        assert (center, per) == (0.5, 0.0625)

    def test_alpha_zero_is_identity_kernel(self):
        assert kernel_weights(KernelConfig(alpha=0.0, k=8), m=8) == (1.0, 0.0)

    def test_alpha_one_is_pure_neighbor_mean(self):
        assert kernel_weights(KernelConfig(alpha=1.0, k=4), m=4) == (0.0, 0.25)

    @pytest.mark.parametrize("alpha", [0.0, 0.25, 0.5, 1.0])
    @pytest.mark.parametrize("k", [1, 4, 8, 64])
    def test_weights_sum_to_one_exactly(self, alpha, k):
        center, per = kernel_weights(KernelConfig(alpha=alpha, k=k), m=k)
        assert center + k * per == 1.0


class TestShiftOne:
    def test_fixed_point_when_neighbors_equal_query(self):
        q = np.array([0.0, 1.0, 0.0])
        z = shift_one(q, np.stack([q, q]), KernelConfig(alpha=0.5, k=2))
        assert np.allclose(z, q, atol=1e-12)

    def test_hand_value_diagonal(self):
        z = shift_one(
            np.array([1.0, 0.0]), np.array([[0.0, 1.0]]), KernelConfig(alpha=0.5, k=1)
        )
        assert abs(z[0] - math.sqrt(2) / 2) < 1e-12
        assert abs(z[1] - math.sqrt(2) / 2) < 1e-12

    def test_alpha_zero_identity(self):
        rng = np.random.default_rng(5)
        q = unit_rows(rng, 1, 6)[0]
        nb = unit_rows(rng, 4, 6)
        z = shift_one(q, nb, KernelConfig(alpha=0.0, k=4))
        assert np.allclose(z, q, atol=1e-12)

    def test_antipodal_cancellation(self):
        with pytest.raises(DegenerateAggregateError):
            shift_one(
                np.array([1.0, 0.0]), np.array([[-1.0, 0.0]]), KernelConfig(alpha=0.5, k=1)
            )

    def test_output_unit_norm(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            q = unit_rows(rng, 1, 5)[0]
            nb = unit_rows(rng, 8, 5)
            z = shift_one(q, nb, KernelConfig(alpha=0.5, k=8))
            assert abs(np.linalg.norm(z) - 1.0) < 1e-9

    def test_uniform_kernel_windows_by_cosine(self):
        q = np.array([1.0, 0.0])
        near = np.array([math.cos(0.1), math.sin(0.1)])
        far = np.array([0.0, 1.0])
        cfg = KernelConfig(kind="uniform", delta=0.9)
        z = shift_one(q, np.stack([near, far]), cfg)
        # only the near neighbor and the query itself aggregate
        expect = q + near
        expect /= np.linalg.norm(expect)
        assert np.allclose(z, expect, atol=1e-12)

    def test_gaussian_kernel_weights(self):
        q = np.array([1.0, 0.0])
        nb = np.array([[0.0, 1.0], [math.sqrt(0.5), math.sqrt(0.5)]])
        cfg = KernelConfig(kind="gaussian", sigma=0.1)
        z = shift_one(q, nb, cfg)
        w = np.exp(-(1.0 - nb @ q) / (2 * 0.1**2))
        expect = q * 1.0 + w @ nb
        expect /= np.linalg.norm(expect)
        assert np.allclose(z, expect, atol=1e-12)


def shift_all_oracle(vectors, cfg):
    """Straightforward double loop re-deriving every shifted row."""
    n = vectors.shape[0]
    out = np.zeros_like(vectors)
    for i in range(n):
        sims = [(-float(vectors[j] @ vectors[i]), j) for j in range(n) if j != i]
        sims.sort()
        chosen = [j for _, j in sims[: cfg.k]]
        agg = (1 - cfg.alpha) * vectors[i]
        for j in chosen:
            agg = agg + (cfg.alpha / cfg.k) * vectors[j]
        out[i] = agg / np.linalg.norm(agg)
    return out


class TestShiftAll:
    def test_single_point_unchanged(self):
        bank = EmbeddingBank(vectors=np.array([[0.0, 1.0]]))
        shifted = shift_all(bank, KernelConfig(alpha=0.5, k=1))
        assert np.allclose(shifted.vectors, bank.vectors, atol=1e-12)

    def test_coincident_clusters_are_fixed_points(self):
        a = np.array([1.0, 0.0, 0.0])
        b = np.array([0.0, 1.0, 0.0])
        bank = EmbeddingBank(vectors=np.stack([a, a, a, b, b, b]))
        shifted = shift_all(bank, KernelConfig(alpha=0.5, k=2))
        assert np.allclose(shifted.vectors, bank.vectors, atol=1e-12)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(41)
        bank = EmbeddingBank(vectors=unit_rows(rng, 32, 4))
        cfg = KernelConfig(alpha=0.5, k=8)
        got = shift_all(bank, cfg)
        expect = shift_all_oracle(bank.vectors, cfg)
        assert np.max(np.abs(got.vectors - expect)) < 1e-12

    def test_alpha_zero_is_identity_map(self):
        rng = np.random.default_rng(13)
        bank = EmbeddingBank(vectors=unit_rows(rng, 24, 6))
        shifted = shift_all(bank, KernelConfig(alpha=0.0, k=4))
        assert np.allclose(shifted.vectors, bank.vectors, atol=1e-12)

    def test_synchronous_permutation_equivariance(self):
        rng = np.random.default_rng(53)
        vectors = unit_rows(rng, 20, 5)
        cfg = KernelConfig(alpha=0.5, k=4)
        base = shift_all(EmbeddingBank(vectors=vectors), cfg).vectors
        perm = rng.permutation(20)
        permuted = shift_all(EmbeddingBank(vectors=vectors[perm]), cfg).vectors
        restored = np.empty_like(permuted)
        restored[perm] = permuted
        assert np.max(np.abs(restored - base)) < 1e-12

    def test_within_class_cosine_non_decreasing_on_pinned_instance(self):
        cfg = SyntheticConfig(
            num_classes=4, dim=16, per_class=50, center_max_cosine=0.2,
            noise_scale=0.08, known_fraction=0.5, labeled_fraction=0.5,
            val_fraction=0.1, seed=7,
        )
        bank, manifest = generate_synthetic(cfg)
        kernel = KernelConfig(alpha=0.5, k=8)

        def mean_within_class_cosine(vectors):
            vals = []
            for c in range(4):
                rows = vectors[manifest.gt_class == c]
                sims = rows @ rows.T
                iu = np.triu_indices(rows.shape[0], k=1)
                vals.append(sims[iu].mean())
            return float(np.mean(vals))

        current = bank
        scores = [mean_within_class_cosine(current.vectors)]
        for _ in range(5):
            current = shift_all(current, kernel)
            scores.append(mean_within_class_cosine(current.vectors))
        assert all(b >= a - 1e-12 for a, b in zip(scores, scores[1:]))

    def test_include_self_in_topk_toggle(self):
        # query occupies a top-k slot under the literal reading
        vectors = np.array([[1.0, 0.0], [0.0, 1.0], [math.sqrt(0.5), math.sqrt(0.5)]])
        bank = EmbeddingBank(vectors=vectors)
        literal = shift_all(bank, KernelConfig(alpha=0.5, k=1, include_self_in_topk=True))
        # with k=1 the self similarity 1.0 always wins, so nothing moves
        assert np.allclose(literal.vectors, vectors, atol=1e-12)
        default = shift_all(bank, KernelConfig(alpha=0.5, k=1))
        assert not np.allclose(default.vectors, vectors, atol=1e-3)
