from dataclasses import replace

import numpy as np
import pytest

from loadmdn import training as tr
from loadmdn.ensemble import (Ensemble, EnsembleError, draws_per_member, member_mixtures, predict_samples,
                              predictive_summary, train_ensemble)
from loadmdn.mixture import mixture_sample
from loadmdn.scaling import standardize
from loadmdn.training import ModelSpec, TrainConfig, forward, with_posterior_std

CFG = TrainConfig(max_epochs=12, patience=4, seed=0)


@pytest.fixture(scope="module")
def det_pair(small_synthetic):
    return train_ensemble(ModelSpec("det-mdn", hidden_sizes=(8,)), small_synthetic, CFG, 2)


@pytest.fixture(scope="module")
def bay_five(small_synthetic):
    return train_ensemble(ModelSpec("bay-mdn", hidden_sizes=(8,)), small_synthetic, CFG, 5)


def test_single_member_is_wrapped_train_result(small_synthetic):
    spec = ModelSpec("det-mdn", hidden_sizes=(8,))
    e = train_ensemble(spec, small_synthetic, CFG, 1)
    m = tr.train(spec, small_synthetic, CFG)
    assert len(e) == 1 and e.members[0].history == m.history


def test_members_differ_by_seed(det_pair):
    a, b = det_pair.members
    assert det_pair.seeds == [0, 1]
    assert not np.array_equal(a.params["W0"], b.params["W0"])


def test_five_distinct_validation_curves(bay_five):
    curves = [tuple(h[2] for h in m.history) for m in bay_five.members]
    assert len(set(curves)) == 5


def test_parallel_training_matches_serial(small_synthetic):
    spec = ModelSpec("det-mdn", hidden_sizes=(4,))
    cfg = TrainConfig(max_epochs=4, patience=2)
    a = train_ensemble(spec, small_synthetic, cfg, 2, workers=2)
    b = train_ensemble(spec, small_synthetic, cfg, 2, workers=1)
    assert [m.history for m in a.members] == [m.history for m in b.members]


def test_member_divergence_names_member(monkeypatch, small_synthetic):
    def boom(spec, data, cfg):
        if cfg.seed == 2:
            raise tr.TrainingError("nan", 3, 0)
        return tr.train(spec, data, replace(cfg, max_epochs=2, patience=1))

    import loadmdn.ensemble as ens
    monkeypatch.setattr(ens, "train", boom)
    with pytest.raises(EnsembleError) as info:
        train_ensemble(ModelSpec("det-mdn", hidden_sizes=(4,)), small_synthetic, CFG, 3)
    assert info.value.member == 2


def test_ensemble_rejects_mixed_specs(det_pair, bay_five):
    with pytest.raises(ValueError):
        Ensemble([det_pair.members[0], bay_five.members[0]])
    with pytest.raises(ValueError):
        Ensemble([])


def test_sample_count_contract(bay_five, small_synthetic):
    x = small_synthetic.part("test").inputs[:7]
    s = predict_samples(bay_five, x, 100, seed=1)
    assert s.samples.shape == (7, 500)
    assert np.bincount(s.member).tolist() == [100] * 5
    assert draws_per_member(5) == 100 and draws_per_member(3) == 167


def test_single_deterministic_member_equals_mixture_sample(det_pair, small_synthetic):
    m = det_pair.members[0]
    x = small_synthetic.part("test").inputs[:3]
    s = predict_samples(m, x, 50, seed=4)
    for i in range(3):
        p = forward(m, standardize(x[i], m.x_scaler))
        draws = mixture_sample(p, np.random.default_rng([4, m.seed, 0, i]), 50)
        # batched vs single-row matmul may round differently in the last bit
        np.testing.assert_allclose(s.samples[i], draws * m.y_scaler.std + m.y_scaler.mean, rtol=1e-12, atol=1e-12)


def test_duplicated_members_pool_to_single_distribution(det_pair, small_synthetic):
    m = det_pair.members[0]
    x = small_synthetic.part("test").inputs[:4]
    single = predict_samples(m, x, 40, seed=2).samples
    pooled = predict_samples(Ensemble([m, m, m]), x, 40, seed=2).samples
    np.testing.assert_array_equal(np.sort(pooled, axis=1), np.sort(np.tile(single, 3), axis=1))


def test_pooling_invariant_to_member_order(bay_five, small_synthetic):
    x = small_synthetic.part("test").inputs[:5]
    a = predict_samples(bay_five, x, 30, seed=0).samples
    b = predict_samples(Ensemble(bay_five.members[::-1]), x, 30, seed=0).samples
    np.testing.assert_array_equal(np.sort(a, axis=1), np.sort(b, axis=1))


def test_scoring_order_does_not_change_draws(bay_five, small_synthetic):
    x = small_synthetic.part("test").inputs[:6]
    whole = predict_samples(bay_five, x, 20, seed=0).samples
    first = predict_samples(bay_five, x[:1], 20, seed=0).samples
    np.testing.assert_allclose(whole[0], first[0], rtol=1e-12, atol=1e-12)


def test_gauss_homo_sample_std_matches_sigma(small_synthetic):
    m = tr.train(ModelSpec("gauss-homo", hidden_sizes=(8,)), small_synthetic, CFG)
    M = 10_000
    s = predict_samples(m, small_synthetic.part("test").inputs[:3], M, seed=0).samples
    target = m.sigma_y * m.y_scaler.std
    se = target / np.sqrt(2 * M)
    assert np.all(np.abs(s.std(axis=1) - target) < 3 * se)


def test_zero_posterior_std_collapses_to_deterministic_sampling(bay_five, small_synthetic):
    bay = with_posterior_std(bay_five.members[0], 0.0)
    det_params = {k[:-4]: v for k, v in bay.params.items() if k.endswith(".loc")}
    det = replace(bay, spec=replace(bay.spec, variant="det-mdn"), params=det_params)
    x = small_synthetic.part("test").inputs[:5]
    np.testing.assert_array_equal(predict_samples(bay, x, 25, seed=3).samples,
                                  predict_samples(det, x, 25, seed=3).samples)


def test_bayesian_draws_vary_weights(bay_five, small_synthetic):
    m = bay_five.members[0]
    x = standardize(small_synthetic.part("test").inputs[:2], m.x_scaler)
    p = member_mixtures(m, x, 10, seed=0)
    assert p.means.shape == (2, 10, 3)
    assert np.unique(p.means[0, :, 0]).size == 10


def test_n1_ensemble_reproduces_single_model(bay_five, small_synthetic):
    m = bay_five.members[2]
    x = small_synthetic.part("test").inputs[:4]
    assert np.array_equal(predict_samples(Ensemble([m]), x, 60, seed=7).samples,
                          predict_samples(m, x, 60, seed=7).samples)


def test_predictive_summary_examples():
    from loadmdn.ensemble import PredictiveSamples

    const = PredictiveSamples(np.full((2, 9), 3.5), np.zeros(9, int), np.arange(9))
    out = predictive_summary(const)
    np.testing.assert_array_equal(out["quantiles"], 3.5)
    two = PredictiveSamples(np.array([[0.0, 2.0]]), np.zeros(2, int), np.arange(2))
    assert predictive_summary(two)["mean"][0] == 1.0
    rnd = PredictiveSamples(np.random.default_rng(0).normal(size=(4, 200)), np.zeros(200, int), np.arange(200))
    assert np.all(np.diff(predictive_summary(rnd)["quantiles"], axis=1) >= 0)


def test_rejects_non_positive_draws(det_pair):
    with pytest.raises(ValueError):
        predict_samples(det_pair, np.zeros((1, 1)), 0)
