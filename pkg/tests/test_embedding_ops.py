import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from earncast.features import (
    DegenerateEmbeddingError,
    Embedding,
    FeatureError,
    encode_missing_modality,
    mean_pool,
    truncate_matryoshka,
)


def unit(values):
    v = np.asarray(values, dtype=np.float64)
    return v / np.linalg.norm(v)


class TestEmbeddingType:
    def test_dim_and_finite_checks(self):
        e = Embedding(np.ones(4), modality="text")
        assert e.dim == 4
        with pytest.raises(FeatureError):
            Embedding(np.array([1.0, np.inf]), modality="text")
        with pytest.raises(FeatureError):
            Embedding(np.ones(3), modality="audio")
        with pytest.raises(FeatureError):
            Embedding(np.ones((2, 2)), modality="text")


class TestTruncation:
    def test_mass_in_prefix_is_identity(self):
        v = np.zeros(256)
        v[:128] = unit(np.arange(1, 129))
        e = Embedding(v, modality="text")
        out = truncate_matryoshka(e, 128)
        np.testing.assert_allclose(out.values, v[:128], rtol=1e-12)
        assert out.truncated_from == 256
        assert out.dim == 128

    def test_zero_prefix_is_degenerate(self):
        v = np.zeros(256)
        v[200] = 1.0
        with pytest.raises(DegenerateEmbeddingError):
            truncate_matryoshka(Embedding(v, modality="image"), 128)

    def test_matches_componentwise_oracle(self):
        rng = np.random.default_rng(0)
        v = rng.normal(size=768)
        out = truncate_matryoshka(Embedding(v, modality="text"), 128)
        prefix = v[:128]
        expected = prefix / np.sqrt(np.sum(prefix * prefix))
        np.testing.assert_allclose(out.values, expected, rtol=1e-12)

    def test_default_k_is_128(self):
        rng = np.random.default_rng(1)
        out = truncate_matryoshka(Embedding(rng.normal(size=512), modality="text"))
        assert out.dim == 128

    def test_k_beyond_dim_rejected(self):
        with pytest.raises(FeatureError):
            truncate_matryoshka(Embedding(np.ones(64), modality="text"), 128)

    @given(st.integers(min_value=0, max_value=2**31 - 1), st.integers(min_value=1, max_value=64))
    @settings(max_examples=100, deadline=None)
    def test_output_is_unit_norm(self, seed, k):
        rng = np.random.default_rng(seed)
        v = rng.normal(size=64) + 0.01  # keep prefixes comfortably non-degenerate
        out = truncate_matryoshka(Embedding(v, modality="image"), k)
        assert abs(np.linalg.norm(out.values) - 1.0) < 1e-9


class TestMeanPool:
    def test_single_embedding_is_itself(self):
        e = Embedding(unit([1, 2, 3]), modality="image")
        out = mean_pool([e])
        np.testing.assert_allclose(out.values, e.values)
        assert out.modality == "pooled"

    def test_opposite_vectors_cancel(self):
        v = unit([3.0, -4.0])
        out = mean_pool([Embedding(v, modality="image"), Embedding(-v, modality="image")])
        np.testing.assert_allclose(out.values, np.zeros(2), atol=1e-15)

    def test_matches_bruteforce_mean(self):
        rng = np.random.default_rng(2)
        vs = [rng.normal(size=128) for _ in range(3)]
        out = mean_pool([Embedding(v, modality="image") for v in vs])
        expected = np.array([sum(v[i] for v in vs) / 3 for i in range(128)])
        np.testing.assert_allclose(out.values, expected, rtol=1e-12, atol=1e-15)

    def test_errors(self):
        with pytest.raises(FeatureError):
            mean_pool([])
        with pytest.raises(FeatureError):
            mean_pool([Embedding(np.ones(3), modality="image"),
                       Embedding(np.ones(4), modality="image")])

    def test_pool_of_copies_then_truncate_commutes(self):
        rng = np.random.default_rng(3)
        v = rng.normal(size=256)
        e = Embedding(v, modality="image")
        pooled = mean_pool([e, Embedding(v.copy(), modality="image"), e])
        a = truncate_matryoshka(pooled, 128)
        b = truncate_matryoshka(e, 128)
        np.testing.assert_allclose(a.values, b.values, rtol=1e-9)


class TestMissingModality:
    def test_definition(self):
        emb, flag = encode_missing_modality(128)
        assert emb.dim == 128
        assert flag == 1.0
        assert np.all(emb.values == 0.0)

    def test_rejects_bad_dim(self):
        with pytest.raises(FeatureError):
            encode_missing_modality(0)
