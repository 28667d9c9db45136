import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stubs import EchoStub, GaussianStub
from pyrotime.cwgan import build_networks, config_for_size, generator_forward
from pyrotime.posterior import (
    Ensemble, NoFireError, ignition_time, merge_weighted, pixel_stats, sample_ensemble,
    weighted_moments,
)
from pyrotime.rastercore import GridSpec, NormalizedField

SPEC = GridSpec(8, 8, 60.0)


def ens(members, weights=None):
    members = np.asarray(members, dtype=float)
    if weights is None:
        weights = np.full(len(members), 1.0 / len(members))
    return Ensemble(SPEC, members, np.asarray(weights, dtype=float))


def meas(value=0.5):
    return NormalizedField(SPEC, np.full((8, 8), value))


class TestEnsemble:
    def test_validation(self):
        with pytest.raises(ValueError):
            ens(np.zeros((2, 8, 8)), [0.3, 0.3])
        with pytest.raises(ValueError):
            ens(np.zeros((2, 4, 4)))
        with pytest.raises(ValueError):
            Ensemble(SPEC, np.zeros((0, 8, 8)), np.zeros(0))


class TestSampling:
    def test_k1_equals_forward_pass(self):
        import torch

        nets = build_networks(*config_for_size(16), seed=0)
        spec = GridSpec(16, 16, 60.0)
        m = NormalizedField(spec, np.random.default_rng(0).random((16, 16)))
        e = sample_ensemble(nets, m, k=1, seed=3)
        z = torch.randn(1, 64, generator=torch.Generator().manual_seed(3))
        direct = generator_forward(nets, z, m).values
        np.testing.assert_allclose(e.members[0], direct, rtol=0, atol=1e-7)
        assert e.weights.tolist() == [1.0]

    def test_same_seed_same_ensemble(self):
        stub = GaussianStub(8)
        a = sample_ensemble(stub, meas(), k=30, seed=9)
        b = sample_ensemble(stub, meas(), k=30, seed=9)
        assert np.array_equal(a.members, b.members)
        assert not np.array_equal(a.members, sample_ensemble(stub, meas(), k=30, seed=10).members)

    def test_batching_does_not_change_members(self):
        stub = GaussianStub(8)
        a = sample_ensemble(stub, meas(), k=37, seed=1, batch_size=5)
        b = sample_ensemble(stub, meas(), k=37, seed=1, batch_size=50)
        assert np.array_equal(a.members, b.members)

    def test_uniform_weights_and_range(self):
        e = sample_ensemble(GaussianStub(8, sigma=3.0), meas(), k=20, seed=0)
        assert np.allclose(e.weights, 1 / 20)
        assert e.members.min() >= 0 and e.members.max() <= 1

    def test_bad_k(self):
        with pytest.raises(ValueError):
            sample_ensemble(EchoStub(), meas(), k=0)


class TestMerge:
    def test_singletons(self):
        m = merge_weighted(ens([np.zeros((8, 8))]), ens([np.ones((8, 8))]), (0.2, 0.8))
        assert m.weights.tolist() == pytest.approx([0.2, 0.8])

    def test_degenerate_weight(self):
        rng = np.random.default_rng(0)
        hi, both = ens(rng.random((3, 8, 8))), ens(rng.random((4, 8, 8)))
        m = pixel_stats(merge_weighted(hi, both, (1.0, 0.0)))
        direct = pixel_stats(hi)
        np.testing.assert_allclose(m.mean_normalized, direct.mean_normalized, atol=1e-12)
        np.testing.assert_allclose(m.std_normalized, direct.std_normalized, atol=1e-12)

    def test_sizes(self):
        m = merge_weighted(ens(np.zeros((200, 8, 8))), ens(np.ones((200, 8, 8))))
        assert len(m) == 400 and m.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert m.weights[0] == pytest.approx(0.2 / 200) and m.weights[-1] == pytest.approx(0.8 / 200)

    def test_spec_mismatch(self):
        other = Ensemble(GridSpec(8, 8, 30.0), np.zeros((1, 8, 8)), np.ones(1))
        with pytest.raises(ValueError):
            merge_weighted(ens(np.zeros((1, 8, 8))), other)

    @given(st.integers(1, 6), st.integers(1, 6), st.floats(0, 1))
    def test_merge_equals_union_moments(self, n1, n2, w):
        rng = np.random.default_rng(n1 * 10 + n2)
        a, b = rng.random((n1, 8, 8)), rng.random((n2, 8, 8))
        merged = pixel_stats(merge_weighted(ens(a), ens(b), (w, 1 - w)))
        weights = np.concatenate([np.full(n1, w / n1), np.full(n2, (1 - w) / n2)])
        allm = np.concatenate([a, b])
        mean = np.tensordot(weights, allm, axes=1)
        std = np.sqrt(np.tensordot(weights, (allm - mean) ** 2, axes=1))
        np.testing.assert_allclose(merged.mean_normalized, mean, atol=1e-9)
        np.testing.assert_allclose(merged.std_normalized, std, atol=1e-9)


class TestPixelStats:
    def test_identical_members(self):
        member = np.random.default_rng(0).random((8, 8)) * 0.9
        s = pixel_stats(ens([member] * 5))
        assert (s.std_normalized == 0).all()
        np.testing.assert_allclose(s.mean.values, member * 72)

    def test_two_point(self):
        s = pixel_stats(ens([np.full((8, 8), 0.25), np.full((8, 8), 0.75)]))
        assert np.allclose(s.mean_normalized, 0.5) and np.allclose(s.std_normalized, 0.25)
        assert np.allclose(s.std.values, 18.0)

    def test_background_and_ignition(self):
        a = np.ones((8, 8))
        a[2, 3] = 0.25
        a[4, 4] = 0.5
        s = pixel_stats(ens([a, a]))
        assert np.isposinf(s.mean.values[0, 0])
        assert s.ignition_estimate == 18.0
        assert ignition_time(s) == "18:00"

    def test_disagreement_keeps_pixel_burned(self):
        s = pixel_stats(ens([np.ones((8, 8)), np.full((8, 8), 0.5)]))
        assert np.isfinite(s.mean.values).all() and (s.std_normalized > 0).all()

    def test_no_fire(self):
        with pytest.raises(NoFireError):
            ignition_time(pixel_stats(ens([np.ones((8, 8))])))

    @given(arrays(np.float64, (4, 8, 8), elements=st.floats(0, 1)), st.permutations(range(4)))
    def test_permutation_and_duplication_invariance(self, members, perm):
        base = pixel_stats(ens(members))
        np.testing.assert_allclose(pixel_stats(ens(members[list(perm)])).mean_normalized,
                                   base.mean_normalized, atol=1e-12)
        dup = np.concatenate([members, members[:1]])
        w = np.array([0.125, 0.25, 0.25, 0.25, 0.125])
        np.testing.assert_allclose(pixel_stats(ens(dup, w)).mean_normalized, base.mean_normalized,
                                   atol=1e-12)

    @given(arrays(np.float64, (3, 8, 8), elements=st.floats(0, 1)))
    def test_std_zero_iff_agreement(self, members):
        _, std = weighted_moments(members, np.full(3, 1 / 3))
        agree = (members == members[0]).all(axis=0)
        assert (std[agree] == 0).all()
        spread = np.ptp(members, axis=0) > 1e-100  # below that the squares underflow
        assert (std[spread] > 0).all()


def test_std_matches_stub_sigma():
    e = sample_ensemble(GaussianStub(8), meas(), k=200, seed=0)
    std = pixel_stats(e).std_normalized
    assert abs(std.mean() - 0.1) <= 0.015


def test_json_summary():
    doc = pixel_stats(ens([np.full((8, 8), 23.8 / 72)])).to_json()
    assert doc["ignition_time"] == "23:48" and doc["n_members"] == 1
