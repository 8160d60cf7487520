import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from grrail.clustering import (
    GmmModel,
    bic,
    cluster_feature_map,
    cluster_values,
    fit_gmm,
    load_cluster_map,
    posterior,
    save_cluster_map,
)
from grrail.glcm import FeatureMap


def mixture(seed, means, sd=1.0, n=2000, weights=None):
    rng = np.random.default_rng(seed)
    comp = rng.choice(len(means), size=n, p=weights)
    return rng.normal(np.asarray(means, float)[comp], sd)


# --------------------------------------------------------------------------- #
# fit_gmm


def test_constant_samples_single_component():
    m = fit_gmm(np.full(50, 3.25), 1)
    assert m.means[0] == 3.25 and m.weights[0] == 1.0
    assert m.variances[0] == 1e-12  # floor = 1e-6 * 0 + 1e-12


def test_m1_is_closed_form_mle():
    x = np.random.default_rng(4).normal(2.0, 3.0, 777)
    m = fit_gmm(x, 1)
    assert m.means[0] == np.mean(x) and m.variances[0] == np.var(x)
    ll = norm.logpdf(x, np.mean(x), np.sqrt(np.var(x))).sum()
    assert abs(m.log_likelihood - ll) <= 1e-9 * abs(ll)


def test_two_component_recovery():
    x = mixture(7, [0.0, 10.0], n=5000)
    m = fit_gmm(x, 2, seed=1)
    assert np.all(np.abs(m.means - [0, 10]) < 0.15)
    assert np.all(np.abs(m.weights - 0.5) < 0.05)


@given(st.integers(0, 2 ** 31), st.integers(1, 5))
def test_model_invariants(seed, M):
    x = mixture(seed, [0.0, 3.0, 9.0], sd=1.5, n=300)
    m = fit_gmm(x, M, seed=seed)
    assert abs(m.weights.sum() - 1) <= 1e-12 and np.all(m.weights > 0)
    assert np.all(m.variances >= 1e-6 * np.var(x) + 1e-12)
    assert np.all(np.diff(m.means) >= 0)


@given(st.integers(0, 2 ** 31), st.integers(2, 5))
def test_em_log_likelihood_non_decreasing(seed, M):
    x = mixture(seed, [0.0, 4.0], sd=1.0, n=400)
    trace = np.array(fit_gmm(x, M, seed=seed).ll_trace)
    assert np.all(np.diff(trace) >= -1e-9 * np.abs(trace[1:]))


def test_fit_is_deterministic_per_seed():
    x = mixture(3, [0, 5, 9], n=1000)
    a, b = fit_gmm(x, 3, seed=11), fit_gmm(x, 3, seed=11)
    assert a.means.tobytes() == b.means.tobytes() and a.log_likelihood == b.log_likelihood


def test_fit_errors():
    with pytest.raises(ValueError):
        fit_gmm([1.0, 2.0], 3)
    with pytest.raises(ValueError):
        fit_gmm([1.0, 2.0], 0)


# --------------------------------------------------------------------------- #
# posterior and BIC


def test_posterior_single_component_is_one():
    m = GmmModel(np.ones(1), np.zeros(1), np.ones(1), 0.0, 0)
    assert np.all(posterior(m, np.linspace(-5, 5, 11)) == 1.0)


def test_posterior_symmetric_midpoint():
    m = GmmModel(np.array([0.5, 0.5]), np.array([-2.0, 2.0]), np.ones(2), 0.0, 0)
    assert posterior(m, 0.0).tolist() == [0.5, 0.5]


@given(st.integers(0, 2 ** 31), st.integers(1, 6))
def test_posterior_matches_density_oracle(seed, M):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(M))
    mu = np.sort(rng.normal(0, 5, M))
    var = rng.uniform(0.5, 4, M)
    model = GmmModel(w, mu, var, 0.0, 0)
    x = rng.uniform(mu.min() - 2, mu.max() + 2, 200)
    dens = w * norm.pdf(x[:, None], mu, np.sqrt(var))
    want = dens / dens.sum(axis=1, keepdims=True)
    got = posterior(model, x)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)
    assert np.all((got >= 0) & (got <= 1))
    assert np.max(np.abs(got.sum(axis=1) - 1)) <= 1e-12


def test_posterior_rows_sum_to_one_on_random_probes():
    rng = np.random.default_rng(99)
    for _ in range(100):
        M = int(rng.integers(1, 8))
        model = GmmModel(rng.dirichlet(np.ones(M)), rng.normal(0, 10, M), rng.uniform(1e-3, 10, M), 0.0, 0)
        p = posterior(model, rng.normal(0, 30, 100))
        assert np.max(np.abs(p.sum(axis=1) - 1)) <= 1e-12


def test_bic_arithmetic_identity():
    m = GmmModel(np.ones(1), np.zeros(1), np.ones(1), -100.0, 0)
    assert abs(bic(m, math.e) - 202.0) <= 1e-12


def test_bic_prefers_one_component_on_constant_data():
    x = np.full(500, 4.0)
    assert bic(fit_gmm(x, 2), x.size) > bic(fit_gmm(x, 1), x.size)


def test_bic_selects_two_for_separated_components():
    hits = 0
    for trial in range(100):
        x = mixture(1000 + trial, [0.0, 8.0], n=1000)
        cm = cluster_values(x.reshape(10, 10, 10), np.ones((10, 10, 10), bool), 5, trial)
        hits += cm.u == 2
    assert hits >= 90


# --------------------------------------------------------------------------- #
# cluster maps


def fmap(values, mask=None):
    values = np.asarray(values, float)
    mask = np.ones(values.shape, bool) if mask is None else mask
    return FeatureMap("test", np.where(mask, values, np.nan), mask, 16)


def test_constant_map_single_cluster():
    cm = cluster_feature_map(fmap(np.full((4, 4, 4), 2.5)), 5, 0)
    assert cm.u == 1 and cm.cluster_means.tolist() == [2.5] and np.all(cm.labels == 0)


def test_two_blocks_recovered_exactly():
    v = np.zeros((6, 6, 6))
    v[3:] = 100.0
    cm = cluster_feature_map(fmap(v), 5, 0)
    assert cm.u == 2
    assert np.all(cm.labels[:3] == 0) and np.all(cm.labels[3:] == 1)
    assert cm.cluster_means.tolist() == [0.0, 100.0]


@given(st.integers(0, 2 ** 31))
def test_cluster_map_invariants(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(6, 6, 5)) + 6 * (rng.random((6, 6, 5)) < 0.4)
    mask = rng.random(v.shape) < 0.8
    mask[0, 0, 0] = True
    cm = cluster_feature_map(fmap(v, mask), 4, seed)
    assert np.all(cm.labels[~mask] == -1)
    lab = cm.labels[mask]
    assert lab.min() == 0 and lab.max() == cm.u - 1
    assert np.array_equal(np.bincount(lab, minlength=cm.u), cm.member_counts)
    assert np.all(cm.member_counts > 0)
    for c in range(cm.u):
        assert cm.cluster_means[c] == np.mean(v[mask][lab == c])
    g = cm.g_volume()
    assert np.array_equal(g[mask], cm.cluster_means[lab])
    assert set(cm.bic_table) == set(range(1, 5))


def test_cluster_map_deterministic():
    v = mixture(5, [0, 3, 7], n=512).reshape(8, 8, 8)
    a, b = cluster_feature_map(fmap(v), 5, 42), cluster_feature_map(fmap(v), 5, 42)
    assert a.labels.tobytes() == b.labels.tobytes()
    assert a.cluster_means.tobytes() == b.cluster_means.tobytes() and a.bic_table == b.bic_table


def test_labels_ordered_by_mean():
    v = mixture(8, [10, 0, 20], n=1000).reshape(10, 10, 10)
    cm = cluster_feature_map(fmap(v), 5, 1)
    assert np.all(np.diff(cm.cluster_means) > 0)


def test_affine_transform_keeps_hard_assignments():
    v = mixture(12, [0, 6, 12], n=1000).reshape(10, 10, 10)
    a = cluster_feature_map(fmap(v), 5, 3)
    b = cluster_feature_map(fmap(v * 4.0 - 7.0), 5, 3)
    assert a.u == b.u and np.array_equal(a.labels, b.labels)


def test_cluster_map_roundtrip(tmp_path):
    v = mixture(2, [0, 6], n=216).reshape(6, 6, 6)
    mask = np.ones(v.shape, bool)
    mask[0] = False
    cm = cluster_feature_map(fmap(v, mask), 3, 9)
    back = load_cluster_map(save_cluster_map(tmp_path / "c.raw", cm))
    assert np.array_equal(back.labels, cm.labels) and back.u == cm.u
    assert back.cluster_means.tolist() == cm.cluster_means.tolist()
    assert back.member_counts.tolist() == cm.member_counts.tolist()
    assert back.bic_table == cm.bic_table and back.seed == 9
