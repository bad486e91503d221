"""Sampling oracle: seeding contract, reproducibility, estimators."""

import numpy as np
import pytest

from conftest import batch_input, lenet_style, random_mlp
from pfp import (Dense, DeterministicTensor, GaussianWeights,
                 InsufficientSamples, ModelGraph, PfpError, SampleSet,
                 empirical_moments, mc_predict, sample_deterministic_model,
                 scalar_mc_moments)
from pfp.mc import deterministic_forward, normal_block, normal_stream


class TestSeedingContract:
    def test_zero_sigma_gives_the_mean_model(self):
        rng = np.random.default_rng(0)
        model = random_mlp(rng, [3, 4, 2], var_scale=0.0, bias="deterministic")
        sampled = sample_deterministic_model(model, 5, seed=99)
        assert np.array_equal(sampled[0][1], model.layers[0].weights.mean)
        assert np.array_equal(sampled[2][1], model.layers[2].weights.mean)

    def test_fixed_seed_and_index_reproduce_exactly(self):
        rng = np.random.default_rng(1)
        model = random_mlp(rng, [3, 4, 2])
        a = sample_deterministic_model(model, 7, seed=11)
        b = sample_deterministic_model(model, 7, seed=11)
        for ea, eb in zip(a, b):
            if len(ea) > 1:
                assert np.array_equal(ea[1], eb[1])

    def test_single_weight_clt(self):
        # 1e5 draws of w ~ N(2, 1): empirical mean within 4/sqrt(1e5) of 2.
        n = 100_000
        w = GaussianWeights.from_moments([[2.0]], [[1.0]])
        model = ModelGraph("w", (1,), (Dense(w),))
        draws = np.array([sample_deterministic_model(model, i, seed=3)[0][1][0, 0]
                          for i in range(2000)])
        # cheap spot check on a prefix plus the full-block route
        z = normal_block(3, 0, n, 1)[:, 0]
        assert np.array_equal(draws, 2.0 + z[:2000])
        assert abs((2.0 + z).mean() - 2.0) < 4.0 / np.sqrt(n)

    def test_block_and_stream_paths_are_bit_identical(self):
        zb = normal_block(42, 0, 16, 1001)
        for i in (0, 7, 15):
            assert np.array_equal(normal_stream(42, i, 1001), zb[i])


class TestMcPredict:
    def test_zero_variance_model_gives_identical_samples(self):
        rng = np.random.default_rng(2)
        model = random_mlp(rng, [4, 5, 3], var_scale=0.0, bias="deterministic")
        x = batch_input(rng, model, 2)
        ss = mc_predict(model, x, 8, seed=1)
        ref = deterministic_forward(sample_deterministic_model(model, 0, 1), x.values)
        for k in range(8):
            np.testing.assert_array_equal(ss.logits[k], ref)

    def test_single_dense_logit_variance(self):
        # one weight, mu_w=2 sigma_w^2=1, x=3: logit ~ N(6, 9) exactly.
        n = 1_000_000
        model = ModelGraph("w", (1,), (Dense(GaussianWeights.from_moments([[2.0]], [[1.0]])),))
        ss = mc_predict(model, DeterministicTensor.from_array([[3.0]]), n, seed=5)
        _, var = empirical_moments(ss)
        s2 = var[0, 0]
        assert abs(s2 - 9.0) < 4 * s2 * np.sqrt(2.0 / (n - 1))

    def test_reference_budget_shape(self):
        rng = np.random.default_rng(3)
        model = lenet_style(rng, classes=10, in_hw=8)
        x = batch_input(rng, model, 2)
        ss = mc_predict(model, x, 30, seed=4)
        assert ss.logits.shape == (30, 2, 10)

    def test_chunking_is_invisible(self):
        # crossing the internal chunk boundary changes nothing
        rng = np.random.default_rng(4)
        model = random_mlp(rng, [3, 4, 2])
        x = batch_input(rng, model, 2)
        full = mc_predict(model, x, 520, seed=9).logits
        for i in (0, 511, 512, 519):
            ref = deterministic_forward(sample_deterministic_model(model, i, 9), x.values)
            np.testing.assert_array_equal(full[i], ref)

    def test_repeat_runs_bit_identical(self):
        rng = np.random.default_rng(5)
        model = random_mlp(rng, [3, 4, 2])
        x = batch_input(rng, model, 2)
        a = mc_predict(model, x, 100, seed=6).logits
        b = mc_predict(model, x, 100, seed=6).logits
        assert np.array_equal(a, b)

    def test_needs_at_least_one_sample(self):
        rng = np.random.default_rng(6)
        model = random_mlp(rng, [3, 4, 2])
        with pytest.raises(InsufficientSamples):
            mc_predict(model, batch_input(rng, model, 1), 0, seed=0)


class TestEmpiricalMoments:
    def test_hand_arithmetic(self):
        ss = SampleSet(2, np.array([[[1.0]], [[3.0]]]), seed=0)
        mean, var = empirical_moments(ss)
        assert mean[0, 0] == 2.0 and var[0, 0] == 2.0  # unbiased (n-1)

    def test_identical_samples_zero_variance(self):
        ss = SampleSet(4, np.full((4, 1, 2), 7.0), seed=0)
        _, var = empirical_moments(ss)
        assert np.all(var == 0.0)

    def test_gaussian_set_recovers_moments(self):
        n = 1_000_000
        z = 6.0 + np.sqrt(29.0) * normal_stream(12, 0, n)
        ss = SampleSet(n, z.reshape(n, 1, 1), seed=12)
        mean, var = empirical_moments(ss)
        assert abs(mean[0, 0] - 6.0) < 4 * np.sqrt(29.0 / n)
        assert abs(var[0, 0] - 29.0) < 4 * 29.0 * np.sqrt(2.0 / (n - 1))

    def test_variance_needs_two_samples(self):
        with pytest.raises(InsufficientSamples):
            empirical_moments(SampleSet(1, np.zeros((1, 1, 1)), seed=0))


class TestScalarOracle:
    def test_relu_standard_normal(self):
        mean, srm = scalar_mc_moments("relu", 0.0, 1.0, 1_000_000, seed=8)
        assert mean == pytest.approx(0.39894, abs=4e-3)
        assert srm == pytest.approx(0.5, abs=4e-3)

    def test_identity_recovers_raw_moments(self):
        mean, srm = scalar_mc_moments("identity", 1.5, 2.0, 1_000_000, seed=9)
        assert mean == pytest.approx(1.5, abs=6e-3)
        assert srm == pytest.approx(1.5 ** 2 + 2.0, abs=2e-2)

    def test_max_pair_standard_normals(self):
        mean, srm = scalar_mc_moments("max_pair", 0.0, 1.0, 1_000_000, seed=10,
                                      mu2=0.0, var2=1.0)
        assert mean == pytest.approx(0.56419, abs=4e-3)
        assert srm == pytest.approx(1.0, abs=5e-3)  # 0.68169 + 0.31831

    def test_unknown_transform(self):
        with pytest.raises(PfpError):
            scalar_mc_moments("tanh", 0.0, 1.0, 10, seed=0)
