import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kedformer.errors import ConfigurationError, DimensionError
from kedformer.keda import (
    AttentionConfig, LagSet, SelectionReplay, Variant, canonical_attention, keda_attention, lag_correlation,
    merge_heads, select_top_queries, sparsity_measure, split_heads, time_delay_aggregate, top_k_lags,
)
from kedformer.numerics import Tensor, check_gradient, mse_loss

from oracles import aggregate_loops, attention_loops, correlation_loops, measure_loops, roll_loops

seeds = st.integers(0, 2 ** 31 - 1)


class TestAttentionConfig:
    @pytest.mark.parametrize("length, expected", [(1, 1), (2, 2), (4, 4), (96, 14), (8192, 28)])
    def test_counts_use_natural_log(self, length, expected):
        cfg = AttentionConfig(factor=3.0)
        assert cfg.lag_count(length) == expected == cfg.query_count(length)
        assert expected == min(max(math.ceil(3 * math.log(length)), 1), length)

    @given(st.floats(0.01, 50), st.integers(1, 10 ** 6))
    def test_counts_within_bounds(self, factor, length):
        cfg = AttentionConfig(factor=factor)
        assert 1 <= cfg.lag_count(length) <= length
        assert 1 <= cfg.query_count(length) <= length

    @pytest.mark.parametrize("kwargs", [{"factor": 0}, {"factor": -1}, {"heads": 0}, {"variant": "bogus"}])
    def test_invalid(self, kwargs):
        with pytest.raises((ConfigurationError, ValueError)):
            AttentionConfig(**kwargs)

    def test_variant_from_string(self):
        assert AttentionConfig(variant="KEDatt-f").variant is Variant.KEDATT_F


class TestCanonicalAttention:
    def test_single_key(self, rng):
        q = rng.standard_normal((5, 4))
        k, v = rng.standard_normal((2, 1, 4))
        assert np.abs(canonical_attention(q, k, v).data - v).max() < 1e-15

    def test_orthogonal_query_gives_column_mean(self, rng):
        q = np.zeros((3, 4))
        k, v = rng.standard_normal((2, 6, 4))
        assert np.abs(canonical_attention(q, k, v).data - v.mean(axis=0)).max() < 1e-15

    def test_two_loop_oracle(self, rng):
        q, k, v = rng.standard_normal((3, 8, 4))
        assert np.abs(canonical_attention(q, k, v).data - attention_loops(q, k, v)).max() < 1e-12

    def test_grad_path_matches(self, rng):
        q, k, v = rng.standard_normal((3, 8, 4))
        tracked = canonical_attention(Tensor(q, requires_grad=True), k, v).data
        assert np.abs(tracked - attention_loops(q, k, v)).max() < 1e-12

    def test_shape_mismatch(self, rng):
        with pytest.raises(DimensionError):
            canonical_attention(np.ones((3, 4)), np.ones((5, 4)), np.ones((6, 4)))

    def test_gradient(self, rng):
        q, k, v = (Tensor(a, requires_grad=True) for a in rng.standard_normal((3, 6, 4)))
        target = rng.standard_normal((6, 4))
        assert check_gradient(lambda _: mse_loss(canonical_attention(q, k, v), target), [q, k, v]) < 1e-6


class TestSparsityMeasure:
    @pytest.mark.parametrize("n_keys", [2, 10, 1000])
    def test_equal_scores(self, n_keys):
        q = np.ones((3, 4))
        k = np.ones((n_keys, 4))
        assert np.abs(sparsity_measure(q, k) - math.log(n_keys)).max() < 1e-12

    def test_two_keys_closed_form(self):
        # with d = 1 the scaled scores are q * k
        q = np.array([[1.0]])
        k = np.array([[0.0], [math.log(3)]])
        assert abs(sparsity_measure(q, k)[0] - (math.log(4) - math.log(3) / 2)) < 1e-15

    def test_loop_oracle(self, rng):
        q, k = rng.standard_normal((2, 7, 5))
        assert np.abs(sparsity_measure(q, k) - measure_loops(q, k)).max() < 1e-12

    def test_dominant_key_raises_measure(self, rng):
        q = np.abs(rng.standard_normal((6, 4))) + 0.1
        k = rng.standard_normal((10, 4))
        before = sparsity_measure(q, k)
        after = sparsity_measure(q, np.vstack([k, np.full((1, 4), 50.0)]))
        assert np.all(after > before)

    @given(st.integers(1, 12), st.integers(1, 40), st.integers(1, 6), seeds)
    @settings(max_examples=50, deadline=None)
    def test_lower_bound_and_permutation(self, lq, lk, d, seed):
        r = np.random.default_rng(seed)
        q, k = r.standard_normal((lq, d)) * 3, r.standard_normal((lk, d)) * 3
        m = sparsity_measure(q, k)
        assert np.all(m >= -1e-12)
        assert np.array_equal(m, sparsity_measure(q, k[r.permutation(lk)]))

    @given(st.integers(2, 12), st.integers(1, 30), seeds, st.floats(-20, 20))
    @settings(max_examples=40, deadline=None)
    def test_score_shift_keeps_argmax(self, lq, lk, seed, shift):
        # an extra coordinate where every key holds the same value adds a per-query constant to its scores
        r = np.random.default_rng(seed)
        q, k = r.standard_normal((lq, 3)), r.standard_normal((lk, 3))
        q2 = np.hstack([q, r.standard_normal((lq, 1)) * shift])
        k2 = np.hstack([k, np.ones((lk, 1))])
        base = sparsity_measure(np.hstack([q, np.zeros((lq, 1))]), np.hstack([k, np.zeros((lk, 1))]))
        assert np.allclose(sparsity_measure(q2, k2), base, rtol=0, atol=1e-9)

    def test_sampled_keys(self, rng):
        q, k = rng.standard_normal((2, 20, 4))
        idx = np.array([0, 5, 10, 15])
        assert np.abs(sparsity_measure(q, k, idx) - measure_loops(q, k[idx])).max() < 1e-12


class TestSelectTopQueries:
    @pytest.mark.parametrize("m, u, expected", [
        ([3, 1, 2], 2, [0, 2]),
        ([5, 5, 1], 1, [0]),
        ([0.1, 0.4, 0.2, 0.3], 4, [0, 1, 2, 3]),
        ([1, 1, 1, 1], 2, [0, 1]),
    ])
    def test_examples(self, m, u, expected):
        assert select_top_queries(np.array(m, float), u).tolist() == expected

    @pytest.mark.parametrize("u", [0, 4, -1])
    def test_out_of_range(self, u):
        with pytest.raises(ConfigurationError):
            select_top_queries(np.zeros(3), u)


class TestLagCorrelation:
    def test_sine_peaks_at_period(self):
        t = np.arange(96.0)
        x = np.sin(2 * np.pi * t / 24)[:, None]
        r = lag_correlation(x, x).data
        assert np.abs(r - correlation_loops(x, x)).max() < 1e-12
        assert np.argmax(r[1:]) + 1 == 24

    def test_zero_lag_is_mean_square(self, rng):
        x = rng.standard_normal((16, 3))
        assert abs(lag_correlation(x, x).data[0] - (x ** 2).mean()) < 1e-12

    def test_zero_keys(self, rng):
        assert np.all(lag_correlation(rng.standard_normal((10, 2)), np.zeros((10, 2))).data == 0)

    @pytest.mark.parametrize("length", [4, 17, 64, 96])
    def test_masked_oracle(self, rng, length):
        q, k = rng.standard_normal((2, length, 3))
        sel = np.sort(rng.choice(length, size=max(1, length // 3), replace=False))
        fast = lag_correlation(q, k, sel).data
        slow = correlation_loops(q, k, sel)
        assert np.abs(fast - slow).max() <= 1e-9 * np.abs(slow).max()

    def test_empty_selection(self):
        with pytest.raises(ConfigurationError):
            lag_correlation(np.ones((4, 2)), np.ones((4, 2)), np.zeros(0, dtype=int))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            lag_correlation(np.ones((4, 2)), np.ones((5, 2)))


class TestTopKLags:
    def test_singleton_weight(self, rng):
        lag_set = top_k_lags(rng.standard_normal(9), 1)
        assert lag_set.weights.data.tolist() == [1.0]

    def test_tie_break_smaller_lag(self):
        lag_set = top_k_lags(np.array([0.9, 0.1, 0.5, 0.5]), 2)
        assert lag_set.lags.tolist() == [0, 2]

    def test_sinusoid_harmonics(self):
        x = np.sin(2 * np.pi * np.arange(96.0) / 24)[:, None]
        lags = top_k_lags(lag_correlation(x, x), 3).lags
        assert set(lags.tolist()) <= {0, 24, 48, 72}

    @given(st.integers(1, 50), seeds)
    @settings(max_examples=40)
    def test_lag_set_invariants(self, length, seed):
        r = np.random.default_rng(seed)
        values = r.standard_normal(length)
        k = r.integers(1, length + 1)
        lag_set = top_k_lags(values, k)
        assert len(set(lag_set.lags.tolist())) == k
        assert np.all(lag_set.weights.data > 0)
        assert abs(lag_set.weights.data.sum() - 1) <= 1e-12
        assert values[lag_set.lags].min() >= np.delete(values, lag_set.lags).max(initial=-np.inf)

    @pytest.mark.parametrize("k", [0, 5])
    def test_out_of_range(self, k):
        with pytest.raises(ConfigurationError):
            top_k_lags(np.zeros(4), k)


class TestTimeDelayAggregate:
    def test_zero_lag_identity(self, rng):
        v = rng.standard_normal((8, 3))
        out = time_delay_aggregate(v, LagSet(np.array([0]), Tensor(np.array([1.0]))))
        assert np.array_equal(out.data, v)

    def test_degenerate_weights(self, rng):
        v = rng.standard_normal((8, 3))
        out = time_delay_aggregate(v, LagSet(np.array([3, 5]), Tensor(np.array([1.0, 0.0]))))
        assert np.array_equal(out.data, roll_loops(v, 3))

    def test_loop_oracle(self, rng):
        v = rng.standard_normal((20, 4))
        lags = rng.choice(20, size=4, replace=False)
        w = rng.random(4)
        w /= w.sum()
        out = time_delay_aggregate(v, LagSet(lags, Tensor(w))).data
        assert np.abs(out - aggregate_loops(v, lags, w)).max() < 1e-12

    @given(st.integers(2, 20), st.integers(1, 5), seeds)
    @settings(max_examples=40)
    def test_convex_hull(self, length, k, seed):
        r = np.random.default_rng(seed)
        k = min(k, length)
        v = r.standard_normal((length, 2))
        lags = r.choice(length, size=k, replace=False)
        w = r.random(k) + 1e-3
        w /= w.sum()
        out = time_delay_aggregate(v, LagSet(lags, Tensor(w))).data
        rolled = np.stack([roll_loops(v, int(t)) for t in lags])
        assert np.all(out <= rolled.max(axis=0) + 1e-12) and np.all(out >= rolled.min(axis=0) - 1e-12)


class TestHeads:
    def test_split_merge_round_trip(self, rng):
        x = rng.standard_normal((2, 5, 12))
        heads = split_heads(x, 3)
        assert heads.shape == (2, 3, 5, 4)
        assert np.array_equal(heads.data[:, 1], x[:, :, 4:8])
        assert np.array_equal(merge_heads(heads).data, x)

    def test_indivisible(self):
        with pytest.raises(ConfigurationError):
            split_heads(np.ones((4, 10)), 3)


def full_lag_oracle(q, k, v):
    """u = k = L: every query contributes, every lag is aggregated with softmax weights."""
    r = correlation_loops(q, k)
    w = np.exp(r - r.max())
    w /= w.sum()
    return aggregate_loops(v, range(len(r)), w)


class TestKedaAttention:
    def test_canonical_dispatch(self, rng):
        q, k, v = rng.standard_normal((3, 10, 8))
        cfg = AttentionConfig(heads=2, variant=Variant.CANONICAL)
        out = keda_attention(q, k, v, cfg).data
        expect = np.hstack([attention_loops(q[:, s], k[:, s], v[:, s]) for s in (slice(0, 4), slice(4, 8))])
        assert np.abs(out - expect).max() < 1e-12

    def test_full_enumeration_oracle(self, rng):
        q, k, v = rng.standard_normal((3, 4, 6))
        cfg = AttentionConfig(factor=10.0, heads=2)
        assert cfg.query_count(4) == cfg.lag_count(4) == 4
        out = keda_attention(q, k, v, cfg).data
        expect = np.hstack([full_lag_oracle(q[:, s], k[:, s], v[:, s]) for s in (slice(0, 3), slice(3, 6))])
        assert np.abs(out - expect).max() < 1e-12

    def test_filter_is_noop_when_selecting_everything(self, rng):
        q, k, v = rng.standard_normal((3, 2, 6, 8))
        kw = dict(factor=10.0, heads=2)
        a = keda_attention(q, k, v, AttentionConfig(variant=Variant.KEDATT, **kw)).data
        b = keda_attention(q, k, v, AttentionConfig(variant=Variant.KEDATT_F, **kw)).data
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("lk", [5, 12, 20])
    def test_cross_lengths(self, rng, lk):
        q = rng.standard_normal((2, 12, 8))
        k, v = rng.standard_normal((2, 2, lk, 8))
        for variant in Variant:
            out = keda_attention(q, k, v, AttentionConfig(heads=4, variant=variant))
            assert out.shape == q.shape

    def test_deterministic(self, rng):
        q, k, v = rng.standard_normal((3, 3, 50, 16))
        cfg = AttentionConfig(heads=4)
        assert np.array_equal(keda_attention(q, k, v, cfg).data, keda_attention(q, k, v, cfg).data)

    def test_head_mismatch(self):
        with pytest.raises(ConfigurationError):
            keda_attention(np.ones((4, 6)), np.ones((4, 6)), np.ones((4, 6)), AttentionConfig(heads=4))

    @pytest.mark.parametrize("variant", list(Variant))
    def test_gradient(self, rng, variant):
        q, k, v = (Tensor(a, requires_grad=True) for a in rng.standard_normal((3, 2, 10, 4)))
        target = rng.standard_normal((2, 10, 4))
        cfg = AttentionConfig(heads=2, variant=variant)
        with SelectionReplay() as replay:
            f = lambda _: mse_loss(keda_attention(q, k, v, cfg), target)  # noqa: E731
            f(None)
            replay.rewind()
            assert check_gradient(f, [q, k, v]) < 1e-4
