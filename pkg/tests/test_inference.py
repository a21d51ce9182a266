import numpy as np
import pytest

from multidefer.inference import (
    mad,
    predict,
    predict_batch,
    predict_sparse,
    predict_sparse_batch,
    sample_committee,
    sparsity_bound_check,
    top_k_committee,
)
from multidefer.losses import sigma
from multidefer.models import ClassifierModel, DeferrerModel


def _const_classifier(label, c=2):
    """Linear model on one feature that always prefers ``label``."""
    bias = np.zeros(c)
    bias[label] = 5.0
    return ClassifierModel(1, c, params=np.concatenate([np.zeros(c), bias]))


def _weights(*w):
    return DeferrerModel(1, len(w), "global", params=np.array(w, dtype=float))


X = np.array([[0.3]])


def test_unanimity(backend):
    for c in (2, 4):
        for j in range(c):
            label, probs = predict(_const_classifier(j, c), _weights(0.4, 0.9, 0.2), X, np.array([j, j]))
            assert label == j and probs.sum() == pytest.approx(1.0)


def test_boundary_score_half_is_label_zero(backend):
    # expert 0 votes 1 with weight 0.5, identity votes 0 with weight 0 -> s1 = 0.5
    label, probs = predict(_const_classifier(0), _weights(0.5, 0.0), X, np.array([1]))
    assert probs[1] == 0.5 and label == 0


def test_all_weight_on_one_expert(backend):
    clf = _const_classifier(0)
    for p in (0, 1):
        label, _ = predict(clf, _weights(0.0, 1.0, 0.0, 0.0), X, np.array([1 - p, p, 1 - p]))
        assert label == p


def test_unobserved_expert_ignored(backend):
    clf = _const_classifier(0)
    de = _weights(1.0, 0.2)
    label, _ = predict(clf, de, X, np.array([1]), mask=np.array([False]))
    assert label == 0
    label, _ = predict(clf, de, X, np.array([1]), mask=np.array([True]))
    assert label == 1


def test_zero_weight_expert_is_invisible(backend, rng):
    for _ in range(20):
        m = 4
        w = rng.uniform(0, 1, m)
        preds = rng.integers(0, 3, m - 1)
        clf = _const_classifier(int(rng.integers(3)), 3)
        base = predict(clf, _weights(*w), X, preds)
        ext = predict(clf, _weights(*w[:-1], 0.0, w[-1]), X, np.append(preds, int(rng.integers(3))))
        assert base[0] == ext[0]
        np.testing.assert_allclose(base[1], ext[1], atol=1e-15)


def test_sample_committee_examples(backend):
    d = sample_committee(np.array([0.0, 0.7, 0.0]), 6, 1)
    assert list(d.members) == [1] * 6 and d.k == 6 and d.weight_mass == pytest.approx(0.7)
    draws = np.concatenate([sample_committee(np.array([0.5, 0.5]), 100, s).members for s in range(100)])
    assert abs(np.mean(draws == 0) - 0.5) < 0.01 + 3 * 0.005
    w = np.array([0.3, 0.0, 0.6, 0.1])
    many = sample_committee(w, 20_000, 2).members
    assert not np.any(many == 1)
    assert abs(np.mean(many == 2) - 0.6) < 0.015
    with pytest.raises(ValueError):
        sample_committee(np.zeros(3), 2, 0)
    with pytest.raises(ValueError):
        sample_committee(np.ones(3), 0, 0)


def test_sample_committee_frequency_tight():
    rng = np.random.default_rng(0)
    draws = sample_committee(np.array([0.5, 0.5]), 10_000, rng).members
    assert abs(np.mean(draws == 0) - 0.5) < 0.01


def test_sample_committee_respects_observation():
    d = sample_committee(np.array([0.9, 0.1, 0.2]), 500, 0, observed=np.array([False, True]))
    assert not np.any(d.members == 0)
    assert d.weight_mass == pytest.approx(0.3)


def test_sparse_equals_full_without_dispersion(backend, rng):
    for _ in range(10):
        w = rng.uniform(0.1, 1, 4)
        clf = _const_classifier(1)
        full = predict(clf, _weights(*w), X, np.array([1, 1, 1]))
        for k in (1, 3, 7):
            lab, probs, _ = predict_sparse(clf, _weights(*w), X, np.array([1, 1, 1]), None, k, rng)
            assert lab == full[0]
            np.testing.assert_allclose(probs, full[1], atol=1e-12)


def test_sparse_two_point_enumeration(backend):
    clf = _const_classifier(0)
    de = _weights(1.0, 1.0, 0.0)  # identity has weight 0, never drawn
    seen = []
    for s in range(400):
        _, probs, draw = predict_sparse(clf, de, X, np.array([1, 0]), None, 1, s)
        assert probs[1] == pytest.approx(sigma(2.0) if draw.members[0] == 0 else sigma(0.0))
        seen.append(draw.members[0])
    assert abs(np.mean(np.array(seen) == 0) - 0.5) < 0.1


def test_sparse_batch_deterministic_and_per_sample(backend, rng):
    n = 30
    x = rng.normal(size=(n, 1))
    preds = rng.integers(0, 2, (n, 5))
    mask = rng.random((n, 5)) > 0.3
    clf = ClassifierModel(1, 2, seed=3)
    de = DeferrerModel(1, 6, "input", seed=4)
    a = predict_sparse_batch(clf, de, x, preds, mask, 3, 11)
    b = predict_sparse_batch(clf, de, x, preds, mask, 3, 11)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[2], b[2])
    tail = predict_sparse_batch(clf, de, x[:10], preds[:10], mask[:10], 3, 11)
    assert np.array_equal(tail[2], a[2][:10])
    assert a[2].shape == (n, 3)
    unobserved = np.concatenate([~mask, np.zeros((n, 1), bool)], axis=1)
    assert not np.any(np.take_along_axis(unobserved, a[2], axis=1))


def test_top_k_examples():
    assert list(top_k_committee([0.9, 0.1, 0.5], 2)) == [0, 2]
    assert list(top_k_committee([0.3, 0.3, 0.3], 2)) == [0, 1]
    assert list(top_k_committee([0.2, 0.7, 0.1], 3)) == [0, 1, 2]
    with pytest.raises(ValueError):
        top_k_committee([0.1], 2)


def test_mad_examples():
    assert mad([0, 1, 0], [1, 0, 1]) == 0.0
    assert mad([1, 1], [1, 0]) == pytest.approx(0.5)
    assert mad([0.2, 0.7, 0.4], [1, 1, 1]) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        mad([0, 0], [1, 0])


def _random_model(rng, m=6):
    clf = ClassifierModel(2, 2, seed=int(rng.integers(1 << 30)))
    de = DeferrerModel(2, m, "input", seed=int(rng.integers(1 << 30)))
    return clf, de


def test_sparse_converges_with_k(backend):
    rng = np.random.default_rng(5)
    n = 60
    x = rng.normal(size=(n, 2))
    preds = rng.integers(0, 2, (n, 5))
    mask = np.ones((n, 5), bool)
    clf, de = _random_model(rng)
    _, full, _ = predict_batch(clf, de, x, preds, mask)
    err = {}
    for k in (4, 256):
        gaps = [np.abs(predict_sparse_batch(clf, de, x, preds, mask, k, s)[1][:, 1] - full[:, 1]).mean()
                for s in range(10)]
        err[k] = np.mean(gaps)
    assert err[256] < err[4]


def test_sparsity_bound_cases(backend):
    clf = _const_classifier(0)
    # zero dispersion: everyone votes 0
    rep = sparsity_bound_check(clf, _weights(1.0, 1.0, 1.0), X, np.array([[0, 0]]), np.ones((1, 2), bool), 1, 200)
    assert rep["lhs"][0] == 0.0 and rep["holds"].all()
    # adversarial: weight (1, 1) on disagreeing experts
    rep = sparsity_bound_check(clf, _weights(1.0, 1.0, 0.0), X, np.array([[1, 0]]), np.ones((1, 2), bool), 1, 1000)
    assert rep["lhs"][0] > 0 and rep["holds"].all()
    assert rep["s_d"][0] == pytest.approx(0.5) and rep["mass"][0] == pytest.approx(2.0)


@pytest.mark.parametrize("k", [1, 5])
def test_sparsity_bound_random_models(backend, k):
    rng = np.random.default_rng(k)
    n = 40
    x = rng.normal(size=(n, 2)) * 3
    preds = rng.integers(0, 2, (n, 5))
    mask = rng.random((n, 5)) > 0.2
    clf, de = _random_model(rng)
    rep = sparsity_bound_check(clf, de, x, preds, mask, k, trials=300, seed=1)
    assert rep["holds"].all()


def test_sparsity_bound_binary_only():
    with pytest.raises(ValueError):
        sparsity_bound_check(_const_classifier(0, 3), _weights(1.0, 1.0), X, np.array([[0]]), np.ones((1, 1), bool), 1)
