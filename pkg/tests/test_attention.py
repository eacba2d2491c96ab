"""Window partitioning, sparse channel attention, fusion, and windowed MSA."""

import numpy as np
import pytest

from chromacube.attention import (
    AttentionParams,
    identity_spectral_params,
    load_attention_params,
    masked_softmax,
    multi_ratio_attention,
    random_spatial_params,
    random_spectral_params,
    save_attention_params,
    topk_mask,
    topk_spectral_attention,
    window_merge,
    window_msa,
    window_partition,
)
from chromacube.errors import ConfigError


def dense_channel_attention(window, params):
    """Independent dense (unmasked) attention oracle."""
    n, _, channels = window.shape
    x = window.reshape(n * n, channels)
    shape = (n * n, channels, params.heads, params.head_dim)
    q = (x @ params.wq).reshape(shape)
    k = (x @ params.wk).reshape(shape)
    v = (x @ params.wv).reshape(shape)
    fused = np.zeros(shape)
    for loc in range(n * n):
        for h in range(params.heads):
            scores = q[loc, :, h, :] @ k[loc, :, h, :].T / np.sqrt(params.head_dim)
            e = np.exp(scores - scores.max(axis=1, keepdims=True))
            fused[loc, :, h, :] = (e / e.sum(axis=1, keepdims=True)) @ v[loc, :, h, :]
    flat = fused.transpose(0, 2, 1, 3).reshape(n * n, -1)
    return (flat @ params.wo).reshape(n, n, channels)


class TestWindowPartition:
    def test_whole_image_window(self):
        rng = np.random.Generator(np.random.PCG64(0))
        f = rng.standard_normal((4, 4, 3))
        windows = window_partition(f, 4)
        assert len(windows) == 1
        assert np.array_equal(windows[0], f)

    def test_partition_merge_round_trip(self):
        rng = np.random.Generator(np.random.PCG64(1))
        for height, width, n in [(4, 4, 2), (6, 9, 3), (5, 7, 4)]:
            f = rng.standard_normal((height, width, 2))
            merged = window_merge(window_partition(f, n), height, width)
            assert np.array_equal(merged, f)

    def test_row_major_order(self):
        rng = np.random.Generator(np.random.PCG64(2))
        f = rng.standard_normal((4, 4, 1))
        windows = window_partition(f, 2)
        expected = [f[0:2, 0:2], f[0:2, 2:4], f[2:4, 0:2], f[2:4, 2:4]]
        assert len(windows) == 4
        for got, want in zip(windows, expected):
            assert np.array_equal(got, want)

    def test_padding_is_zero(self):
        f = np.ones((3, 3, 1))
        windows = window_partition(f, 2)
        assert len(windows) == 4
        assert windows[3][1, 1, 0] == 0.0

    def test_invalid_window_size(self):
        with pytest.raises(ConfigError):
            window_partition(np.ones((4, 4, 1)), 0)


class TestTopkMask:
    def test_ties_break_to_lower_index(self):
        scores = np.array([[1.0, 3.0, 3.0, 0.0]])
        mask = topk_mask(scores, 2)
        assert mask.tolist() == [[False, True, True, False]]
        mask1 = topk_mask(scores, 1)
        assert mask1.tolist() == [[False, True, False, False]]

    def test_retained_sets_nest(self):
        rng = np.random.Generator(np.random.PCG64(3))
        scores = rng.standard_normal((6, 5, 5))
        scores[scores > 1] = 1.0  # force some ties
        previous = topk_mask(scores, 1)
        for k in range(2, 6):
            current = topk_mask(scores, k)
            assert np.all(current[previous])  # k-set is a subset of (k+1)-set
            previous = current

    def test_k_out_of_range(self):
        with pytest.raises(ConfigError):
            topk_mask(np.zeros((2, 3)), 0)
        with pytest.raises(ConfigError):
            topk_mask(np.zeros((2, 3)), 4)


class TestSpectralAttention:
    def test_full_k_equals_dense(self):
        rng = np.random.Generator(np.random.PCG64(4))
        params = random_spectral_params(5, window=2, heads=2, head_dim=3, seed=10)
        window = rng.standard_normal((2, 2, 5))
        sparse = topk_spectral_attention(window, params, k=5)
        np.testing.assert_allclose(sparse, dense_channel_attention(window, params), atol=1e-12)

    def test_rows_sum_to_one_with_at_most_k_nonzeros(self):
        rng = np.random.Generator(np.random.PCG64(5))
        scores = rng.standard_normal((4, 1, 6, 6))
        attn = masked_softmax(scores, topk_mask(scores, 3))
        np.testing.assert_allclose(attn.sum(axis=-1), 1.0, atol=1e-12)
        assert np.all((attn > 0).sum(axis=-1) <= 3)

    def test_hand_sized_brute_force(self):
        params = identity_spectral_params(3, window=1)
        x = np.array([0.9, 0.1, 0.5])
        out = topk_spectral_attention(x.reshape(1, 1, 3), params, k=2)
        scores = np.outer(x, x)
        attn = np.zeros((3, 3))
        for row in range(3):
            keep = sorted(range(3), key=lambda j: (-scores[row, j], j))[:2]
            masked = np.full(3, -np.inf)
            masked[keep] = scores[row, keep]
            e = np.exp(masked - masked[keep].max())
            attn[row] = e / e.sum()
        np.testing.assert_allclose(out.ravel(), attn @ x, atol=1e-14)

    def test_location_permutation_equivariance(self):
        rng = np.random.Generator(np.random.PCG64(6))
        params = random_spectral_params(4, window=2, seed=11)
        window = rng.standard_normal((2, 2, 4))
        perm = [2, 0, 3, 1]
        permuted = window.reshape(4, 4)[perm].reshape(2, 2, 4)
        out = topk_spectral_attention(window, params, 2).reshape(4, 4)
        out_permuted = topk_spectral_attention(permuted, params, 2).reshape(4, 4)
        assert np.array_equal(out[perm], out_permuted)

    def test_k_out_of_range(self):
        params = identity_spectral_params(3, window=1)
        with pytest.raises(ConfigError):
            topk_spectral_attention(np.ones((1, 1, 3)), params, 4)

    def test_deterministic(self):
        rng = np.random.Generator(np.random.PCG64(7))
        params = random_spectral_params(4, window=2, seed=12)
        window = rng.standard_normal((2, 2, 4))
        a = topk_spectral_attention(window, params, 2)
        b = topk_spectral_attention(window, params, 2)
        assert np.array_equal(a, b)


class TestMultiRatioAttention:
    def test_single_ratio_unit_weight(self):
        rng = np.random.Generator(np.random.PCG64(8))
        params = random_spectral_params(4, window=2, seed=13)
        window = rng.standard_normal((2, 2, 4))
        fused = multi_ratio_attention(window, params, [0.5], [1.0])
        np.testing.assert_allclose(fused, topk_spectral_attention(window, params, 2), atol=1e-14)

    def test_zero_weights_annihilate(self):
        rng = np.random.Generator(np.random.PCG64(9))
        params = random_spectral_params(4, window=2, seed=14)
        window = rng.standard_normal((2, 2, 4))
        fused = multi_ratio_attention(window, params, [0.5, 1.0], [0.0, 0.0])
        assert np.all(fused == 0.0)

    def test_matches_per_ratio_recombination(self):
        rng = np.random.Generator(np.random.PCG64(10))
        params = random_spectral_params(8, window=2, heads=2, head_dim=2, seed=15)
        window = rng.standard_normal((2, 2, 8))
        ratios = [1 / 2, 2 / 3, 3 / 4, 4 / 5]
        weights = list(rng.standard_normal(4))
        fused = multi_ratio_attention(window, params, ratios, weights)
        expected = np.zeros_like(fused)
        for ratio, weight in zip(ratios, weights):
            k = int(np.ceil(ratio * 8))
            expected += weight * topk_spectral_attention(window, params, k)
        np.testing.assert_allclose(fused, expected, atol=1e-12)

    def test_ceil_rule_keeps_k_at_least_one(self):
        rng = np.random.Generator(np.random.PCG64(11))
        params = random_spectral_params(5, window=1, seed=16)
        window = rng.standard_normal((1, 1, 5))
        fused = multi_ratio_attention(window, params, [0.01], [1.0])
        np.testing.assert_allclose(fused, topk_spectral_attention(window, params, 1), atol=1e-14)

    def test_length_mismatch(self):
        params = identity_spectral_params(3, window=1)
        with pytest.raises(ConfigError):
            multi_ratio_attention(np.ones((1, 1, 3)), params, [0.5, 1.0], [1.0])

    def test_stored_weights_used_as_default(self):
        rng = np.random.Generator(np.random.PCG64(12))
        base = random_spectral_params(4, window=2, seed=17)
        params = AttentionParams(
            heads=base.heads, head_dim=base.head_dim, window=2,
            wq=base.wq, wk=base.wk, wv=base.wv, wo=base.wo,
            ratio_weights=np.array([0.25, 0.75]),
        )
        window = rng.standard_normal((2, 2, 4))
        implicit = multi_ratio_attention(window, params, [0.5, 1.0])
        explicit = multi_ratio_attention(window, params, [0.5, 1.0], [0.25, 0.75])
        assert np.array_equal(implicit, explicit)


class TestWindowMsa:
    def test_zero_weights_identity(self):
        rng = np.random.Generator(np.random.PCG64(13))
        params = random_spatial_params(5, window=4, zero_weights=True)
        f = rng.standard_normal((8, 8, 5))
        assert np.array_equal(window_msa(f, params, shifted=False), f)

    def test_zero_weights_identity_shifted_and_padded(self):
        rng = np.random.Generator(np.random.PCG64(14))
        params = random_spatial_params(5, window=4, zero_weights=True)
        f = rng.standard_normal((10, 7, 5))
        assert np.array_equal(window_msa(f, params, shifted=True), f)

    def test_output_shape_preserved(self):
        rng = np.random.Generator(np.random.PCG64(15))
        params = random_spatial_params(3, window=2, seed=20)
        f = rng.standard_normal((5, 6, 3))
        assert window_msa(f, params, shifted=True).shape == f.shape

    def test_single_window_brute_force(self):
        rng = np.random.Generator(np.random.PCG64(16))
        params = random_spatial_params(3, window=2, heads=1, head_dim=2, hidden=4, seed=7)
        params.rel_bias = np.random.Generator(np.random.PCG64(9)).standard_normal((9, 1)) * 0.1
        f = rng.standard_normal((2, 2, 3))
        out = window_msa(f, params, shifted=False)

        def layer_norm(x, gamma, beta):
            mean = x.mean(-1, keepdims=True)
            var = x.var(-1, keepdims=True)
            return (x - mean) / np.sqrt(var + 1e-5) * gamma + beta

        def gelu(x):
            return 0.5 * x * (1 + np.tanh(np.sqrt(2 / np.pi) * (x + 0.044715 * x**3)))

        tokens = f.reshape(4, 3)
        t = layer_norm(tokens, params.ln1_gamma, params.ln1_beta)
        q, k, v = t @ params.wq, t @ params.wk, t @ params.wv
        coords = [(0, 0), (0, 1), (1, 0), (1, 1)]
        bias = np.zeros((4, 4))
        for i, (yi, xi) in enumerate(coords):
            for j, (yj, xj) in enumerate(coords):
                bias[i, j] = params.rel_bias[(yi - yj + 1) * 3 + (xi - xj + 1), 0]
        scores = q @ k.T / np.sqrt(2) + bias
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        attn = e / e.sum(axis=1, keepdims=True)
        z_spa = (attn @ v) @ params.wo + params.bo + tokens
        t2 = layer_norm(z_spa, params.ln2_gamma, params.ln2_beta)
        expected = gelu(t2 @ params.ffn_w1 + params.ffn_b1) @ params.ffn_w2 + params.ffn_b2 + z_spa
        np.testing.assert_allclose(out.reshape(4, 3), expected, atol=1e-13)

    def test_missing_parameters_rejected(self):
        params = identity_spectral_params(3, window=2)
        with pytest.raises(ConfigError):
            window_msa(np.ones((4, 4, 3)), params)


class TestParameterBundles:
    def test_round_trip(self, tmp_path):
        params = random_spatial_params(4, window=2, heads=2, head_dim=3, seed=21)
        save_attention_params(params, str(tmp_path / "bundle"))
        loaded = load_attention_params(str(tmp_path / "bundle"))
        assert loaded.heads == params.heads
        assert loaded.head_dim == params.head_dim
        assert loaded.window == params.window
        assert loaded.shift == params.shift
        np.testing.assert_allclose(loaded.wq, params.wq, atol=2e-7)  # float32 storage
        np.testing.assert_allclose(loaded.ffn_w2, params.ffn_w2, atol=2e-7)
        assert loaded.ratio_weights is None

    def test_loaded_params_drive_kernels(self, tmp_path):
        rng = np.random.Generator(np.random.PCG64(17))
        params = random_spectral_params(4, window=2, seed=22)
        save_attention_params(params, str(tmp_path / "spectral"))
        loaded = load_attention_params(str(tmp_path / "spectral"))
        window = rng.standard_normal((2, 2, 4))
        out = topk_spectral_attention(window, loaded, 2)
        assert out.shape == (2, 2, 4)

    def test_seeded_init_reproducible(self):
        a = random_spectral_params(6, window=2, seed=33)
        b = random_spectral_params(6, window=2, seed=33)
        assert np.array_equal(a.wq, b.wq)
        assert np.array_equal(a.wo, b.wo)
