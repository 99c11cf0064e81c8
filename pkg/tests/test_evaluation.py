import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import hypergeom

from nmfsga import data
from nmfsga.classifier import LdaModel, fit
from nmfsga.evaluation import (
    METRICS,
    ExperimentResult,
    bayes_optimal_model,
    conditional_pcc_closed_form,
    conditional_pcc_mc,
    cross_validated_report,
    score_feature_recovery,
)

from conftest import separable_dataset


def phi(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def model_in_dataset_order(spec, w_orig, b):
    """Place weights given per original column into dataset column order."""
    w = np.asarray(w_orig, float)[spec.column_permutation]
    p = w.size
    return LdaModel(w, float(b), (np.zeros(p), np.zeros(p)), np.eye(p), 0.0, 0.5)


@pytest.fixture
def unit_spec():
    # Means (-1, 0) and (1, 0): the (0,0)/(2,0) pair shifted by -1 along x1,
    # so the threshold b = -1 there becomes b = 0 here.
    return data.GaussianTaskSpec(2, 2, np.array([2.0, 0.0]), np.eye(2), None, seed=3)


class TestPcc:
    def test_closed_form_phi_one(self, unit_spec):
        m = model_in_dataset_order(unit_spec, [1.0, 0.0], 0.0)
        mask = np.ones(2, bool)
        assert conditional_pcc_closed_form(m, mask, unit_spec) == pytest.approx(phi(1.0), abs=1e-12)
        assert conditional_pcc_closed_form(m, mask, unit_spec) == pytest.approx(0.8413447, abs=1e-7)

    def test_mc_phi_one(self, unit_spec):
        m = model_in_dataset_order(unit_spec, [1.0, 0.0], 0.0)
        n = 1_000_000
        p = phi(1.0)
        est = conditional_pcc_mc(m, np.ones(2, bool), unit_spec, n_samples=n, seed=4)
        assert abs(est - p) <= 3 * math.sqrt(p * (1 - p) / n)

    def test_sign_flip(self, unit_spec):
        m = model_in_dataset_order(unit_spec, [0.7, -0.4], 0.3)
        flipped = model_in_dataset_order(unit_spec, [-0.7, 0.4], -0.3)
        mask = np.ones(2, bool)
        a = conditional_pcc_closed_form(m, mask, unit_spec)
        assert conditional_pcc_closed_form(flipped, mask, unit_spec) == pytest.approx(1 - a, abs=1e-12)

    def test_zero_model(self, unit_spec):
        m = model_in_dataset_order(unit_spec, [0.0, 0.0], 0.0)
        mask = np.ones(2, bool)
        assert conditional_pcc_closed_form(m, mask, unit_spec) == 0.5
        assert conditional_pcc_mc(m, mask, unit_spec, n_samples=1000) == 0.5

    @pytest.mark.parametrize(
        "factory,target", [(data.dataset_a_spec, 0.046), (data.dataset_b_spec, 0.141)]
    )
    def test_bayes_optimal(self, factory, target):
        spec = factory(seed=2)
        model, mask = bayes_optimal_model(spec)
        assert mask.sum() == spec.k_informative
        assert conditional_pcc_closed_form(model, mask, spec) == pytest.approx(1 - data.bayes_error(spec), abs=1e-9)
        assert conditional_pcc_closed_form(model, mask, spec) == pytest.approx(1 - target, abs=1e-9)

    def test_bayes_optimal_mc(self):
        spec = data.dataset_a_spec(seed=1)
        model, mask = bayes_optimal_model(spec)
        n = 1_000_000
        p = 0.954
        assert abs(conditional_pcc_mc(model, mask, spec, n, seed=2) - p) <= 3 * math.sqrt(p * (1 - p) / n)

    def test_weights_on_noise_columns(self):
        spec = data.equicorrelated_spec(6, 2, 0.1, seed=5)
        ds = data.generate_synthetic(spec, 50)
        mask = np.ones(6, bool)
        m = fit(ds.features, ds.clean_labels)
        n = 400_000
        p = conditional_pcc_closed_form(m, mask, spec)
        est = conditional_pcc_mc(m, mask, spec, n, seed=1)
        assert abs(est - p) <= 4 * math.sqrt(p * (1 - p) / n)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**32), st.integers(1, 6))
    def test_mc_converges_to_closed_form(self, seed, p):
        gen = np.random.default_rng(seed)
        k = int(gen.integers(1, 4))
        spec = data.equicorrelated_spec(8, k, float(gen.uniform(0.05, 0.4)), seed=seed, correlation=float(gen.uniform(0, 0.8)))
        ds = data.generate_synthetic(spec, 15)
        mask = np.zeros(8, bool)
        mask[gen.choice(8, p, replace=False)] = True
        m = fit(ds.features[:, mask], ds.clean_labels)
        n = 200_000
        closed = conditional_pcc_closed_form(m, mask, spec)
        mc = conditional_pcc_mc(m, mask, spec, n, seed=seed)
        assert abs(mc - closed) <= 4 * math.sqrt(max(closed * (1 - closed), 1e-12) / n) + 1 / n

    def test_mc_deterministic_and_sharded(self, unit_spec):
        m = model_in_dataset_order(unit_spec, [1.0, 0.5], 0.1)
        mask = np.ones(2, bool)
        a = conditional_pcc_mc(m, mask, unit_spec, 100_000, seed=9, shards=4)
        assert a == conditional_pcc_mc(m, mask, unit_spec, 100_000, seed=9, shards=4)
        assert a != conditional_pcc_mc(m, mask, unit_spec, 100_000, seed=10, shards=4)

    def test_mask_model_mismatch(self, unit_spec):
        m = model_in_dataset_order(unit_spec, [1.0, 0.0], 0.0)
        with pytest.raises(ValueError):
            conditional_pcc_closed_form(m, np.array([True, False]), unit_spec)
        with pytest.raises(ValueError):
            conditional_pcc_mc(m, np.ones(3, bool), unit_spec)


class TestRecovery:
    def test_exact_informative(self, dataset_a):
        mask = dataset_a.column_ids < 6
        assert score_feature_recovery(mask, dataset_a) == 6

    def test_disjoint(self, dataset_a):
        mask = dataset_a.column_ids >= 6
        assert score_feature_recovery(mask, dataset_a) == 0

    def test_hypergeometric_mean(self, dataset_a):
        m, d, k, trials = 50, 500, 6, 2000
        gen = np.random.default_rng(0)
        counts = []
        for _ in range(trials):
            mask = np.zeros(d, bool)
            mask[gen.choice(d, m, replace=False)] = True
            counts.append(score_feature_recovery(mask, dataset_a))
        sd = math.sqrt(hypergeom(d, k, m).var() / trials)
        assert abs(np.mean(counts) - m * k / d) <= 3 * sd

    def test_missing_provenance(self):
        ds = data.Dataset(np.zeros((4, 2)), [0, 1, 0, 1])
        with pytest.raises(ValueError):
            score_feature_recovery(np.ones(2, bool), ds)


class TestReport:
    def test_separable(self):
        ds = separable_dataset(n_per_class=30)
        res = cross_validated_report(ds, [True, True, False], k=10, seed=0)
        assert res.metrics["balanced_accuracy"]["mean"] == 1.0
        assert res.metrics["balanced_accuracy"]["sd"] == 0.0

    def test_noise_near_chance(self):
        vals = []
        for seed in range(5):
            ds = separable_dataset(n_per_class=60, seed=seed)
            vals.append(cross_validated_report(ds, [False, False, True], k=10, seed=seed).metrics["balanced_accuracy"]["mean"])
        assert abs(np.mean(vals) - 0.5) < 0.1

    def test_trains_on_noisy_scores_on_clean(self):
        ds = separable_dataset(n_per_class=30)
        noisy = data.inject_label_noise(ds, data.NoiseSpec.symmetric(0.1, 3))
        res = cross_validated_report(noisy, [True, True, False], k=5, seed=1)
        assert res.metrics["balanced_accuracy"]["mean"] > 0.95

    def test_recomputable_and_deterministic(self):
        ds = separable_dataset(n_per_class=30, noise_columns=4, seed=2)
        ds = data.inject_label_noise(ds, data.NoiseSpec.symmetric(0.3, 1))
        mask = [True, False, True, True, False, True]
        a = cross_validated_report(ds, mask, k=10, seed=4)
        b = cross_validated_report(ds, mask, k=10, seed=4)
        assert a.to_json() == b.to_json()
        for name in METRICS:
            folds = np.array(a.metrics[name]["folds"])
            assert len(folds) == 10
            assert abs(folds.mean() - a.metrics[name]["mean"]) <= 1e-12
            assert abs(folds.std(ddof=1) - a.metrics[name]["sd"]) <= 1e-12

    def test_requirements(self):
        ds = data.Dataset(np.zeros((20, 2)), [0, 1] * 10)
        with pytest.raises(ValueError):
            cross_validated_report(ds, [True, False])
        labelled = separable_dataset()
        with pytest.raises(ValueError):
            cross_validated_report(labelled, [False, False, False])


def test_result_serialization_roundtrip():
    res = ExperimentResult(
        np.array([True, False, True]),
        pcc_mc=0.81,
        pcc_closed=0.8123,
        metrics=None,
        informative_recovered=2,
        runtime_seconds=1.5,
        config_echo={"seed": 4},
    )
    doc = json.loads(res.to_json())
    assert doc["selected_mask"] == "101" and doc["n_selected"] == 2
    back = ExperimentResult.from_dict(doc)
    assert back.to_json() == res.to_json()
    header, row = res.csv_row().strip().split("\n")
    assert header.split(",") == ["pcc_mc", "pcc_closed", "informative_recovered", "n_selected"]
    assert row.split(",") == ["0.81", "0.8123", "2", "2"]
