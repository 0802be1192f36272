import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from misinforank.classifiers import (
    MEMBER_TYPES,
    GaussianNB,
    LinearSVM,
    LogisticRegression,
    NotFittedError,
    RandomForest,
    logistic_loss_grad,
    platt_apply,
    platt_fit,
)


def blobs(n=200, d=2, margin=1.0, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.normal(size=(n, d))
    X[:, 0] = np.where(y == 1, np.abs(X[:, 0]) + margin / 2, -np.abs(X[:, 0]) - margin / 2)
    return X, y


@given(st.integers(0, 10_000), st.integers(2, 6), st.integers(3, 12), st.floats(0.1, 10))
def test_lr_gradient_matches_finite_differences(seed, d, n, C):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = rng.integers(0, 2, size=n).astype(float)
    params = rng.normal(size=d + 1)
    _, grad = logistic_loss_grad(params, X, y, C)
    h = 1e-6
    numeric = np.empty_like(params)
    for i in range(len(params)):
        e = np.zeros_like(params)
        e[i] = h
        numeric[i] = (logistic_loss_grad(params + e, X, y, C)[0] - logistic_loss_grad(params - e, X, y, C)[0]) / (2 * h)
    assert np.allclose(grad, numeric, rtol=1e-5, atol=1e-5 * max(1.0, np.abs(numeric).max()))


def test_lr_matches_reference_solver():
    sk = pytest.importorskip("sklearn.linear_model")
    rng = np.random.default_rng(4)
    X = rng.normal(size=(120, 4))
    y = (X @ [1.0, -2.0, 0.5, 0.0] + rng.normal(scale=1.5, size=120) > 0).astype(int)
    ours = LogisticRegression(tol=1e-10, max_iter=1000).fit(X, y)
    ref = sk.LogisticRegression(C=1.0, tol=1e-10, max_iter=10_000).fit(X, y)
    assert np.allclose(ours.coef_, ref.coef_[0], atol=1e-4)
    assert ours.intercept_ == pytest.approx(ref.intercept_[0], abs=1e-4)


def test_gnb_closed_form_posterior():
    X = np.array([[0.0], [2.0], [3.0], [5.0]])
    y = np.array([0, 0, 1, 1])
    nb = GaussianNB().fit(X, y)
    v = 1.0 + 1e-9 * np.var(X)
    p1 = 1.0 / (1.0 + math.exp(((2 - 4) ** 2 - (2 - 1) ** 2) / (2 * v)))
    assert nb.predict_proba([[2.0]])[0, 1] == pytest.approx(p1, abs=1e-9)
    assert nb.predict_proba([[2.5]])[0, 1] == pytest.approx(0.5, abs=1e-9)


def test_gnb_matches_reference():
    sk = pytest.importorskip("sklearn.naive_bayes")
    rng = np.random.default_rng(9)
    X = rng.normal(size=(80, 3))
    y = (X[:, 0] + 0.3 * rng.normal(size=80) > 0).astype(int)
    Xt = rng.normal(size=(20, 3))
    assert np.allclose(GaussianNB().fit(X, y).predict_proba(Xt), sk.GaussianNB().fit(X, y).predict_proba(Xt), atol=1e-9)


def test_gnb_constant_features():
    X = np.zeros((4, 2))
    p = GaussianNB().fit(X, np.array([0, 1, 0, 1])).predict_proba(X)
    assert np.allclose(p, 0.5)


@pytest.mark.parametrize("name", sorted(MEMBER_TYPES))
def test_members_emit_distributions(name):
    X, y = blobs(80, 3, seed=2)
    m = MEMBER_TYPES[name]().fit(X, y)
    p = m.predict_proba(np.random.default_rng(1).normal(size=(30, 3)) * 3)
    assert p.shape == (30, 2)
    assert np.all(p >= 0) and np.all(p <= 1)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)
    again = MEMBER_TYPES[name].from_dict(m.to_dict())
    assert np.array_equal(again.predict_proba(X), m.predict_proba(X))


@pytest.mark.parametrize("name", sorted(MEMBER_TYPES))
def test_members_learn_separable_data(name):
    X, y = blobs(200, 2, margin=1.0, seed=5)
    m = MEMBER_TYPES[name]().fit(X, y)
    assert np.mean(m.predict_proba(X).argmax(axis=1) == y) >= 0.95


@pytest.mark.parametrize("name", sorted(MEMBER_TYPES))
def test_unfitted_members_raise(name):
    with pytest.raises(NotFittedError):
        MEMBER_TYPES[name]().predict_proba(np.zeros((1, 2)))


def test_forest_seeded():
    X, y = blobs(60, 4, seed=3)
    a = RandomForest(n_estimators=20, seed=11).fit(X, y).to_dict()
    b = RandomForest(n_estimators=20, seed=11).fit(X, y).to_dict()
    c = RandomForest(n_estimators=20, seed=12).fit(X, y).to_dict()
    assert a == b and a != c


def test_forest_handles_duplicate_values():
    X = np.array([[1.0], [1.0], [1.0 + 1e-16], [2.0], [2.0]])
    y = np.array([0, 1, 0, 1, 1])
    p = RandomForest(n_estimators=5, seed=0).fit(X, y).predict_proba(X)
    assert np.allclose(p.sum(axis=1), 1.0)


def test_platt_monotone_in_decision_value():
    X, y = blobs(100, 2, seed=7)
    svm = LinearSVM(seed=3).fit(X, y)
    f = np.linspace(-10, 10, 201)
    p = platt_apply(f, *svm.platt_)
    assert np.all(np.diff(p) >= 0)
    grid = np.random.default_rng(0).normal(size=(50, 2)) * 4
    order = np.argsort(svm.decision_function(grid))
    assert np.all(np.diff(svm.predict_proba(grid)[order, 1]) >= -1e-15)


def test_platt_fit_recovers_direction():
    rng = np.random.default_rng(1)
    f = rng.normal(size=300)
    y = (rng.random(300) < 1 / (1 + np.exp(-2 * f))).astype(int)
    A, B = platt_fit(f, y)
    assert A < 0 and abs(B) < 0.5
