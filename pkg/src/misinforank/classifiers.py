"""Binary probabilistic classifiers used as soft-voting members.

Every member exposes ``fit(X, y)``, ``predict_proba(X) -> (n, 2)`` and a
JSON-friendly ``to_dict``/``from_dict`` pair. Labels are 0/1.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logsumexp


class NotFittedError(RuntimeError):
    pass


def _stack(p1):
    p1 = np.clip(np.asarray(p1, dtype=float), 0.0, 1.0)
    return np.column_stack([1.0 - p1, p1])


# --------------------------------------------------------------------------
# logistic regression


def logistic_loss_grad(params, X, y, C=1.0):
    """L2-regularised log-loss and its gradient.

    ``params = [w..., b]``; objective ``0.5 * w.w + C * sum log(1 + exp(-s * (Xw + b)))``
    with ``s = 2y - 1``. The intercept is not penalised.
    """
    w, b = params[:-1], params[-1]
    s = 2.0 * y - 1.0
    z = s * (X @ w + b)
    loss = 0.5 * w @ w + C * np.sum(np.logaddexp(0.0, -z))
    coef = -C * s * expit(-z)
    grad = np.empty_like(params)
    grad[:-1] = w + X.T @ coef
    grad[-1] = coef.sum()
    return loss, grad


class LogisticRegression:
    name = "logistic_regression"

    def __init__(self, C=1.0, tol=1e-4, max_iter=100):
        self.C, self.tol, self.max_iter = C, tol, max_iter
        self.coef_ = None
        self.intercept_ = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        x0 = np.zeros(X.shape[1] + 1)
        res = minimize(
            logistic_loss_grad,
            x0,
            args=(X, y, self.C),
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": self.max_iter, "gtol": self.tol},
        )
        self.coef_, self.intercept_ = res.x[:-1], float(res.x[-1])
        return self

    def decision_function(self, X):
        if self.coef_ is None:
            raise NotFittedError(self.name)
        return np.asarray(X, dtype=float) @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        return _stack(expit(self.decision_function(X)))

    def to_dict(self):
        return {"C": self.C, "coef": self.coef_.tolist(), "intercept": self.intercept_}

    @classmethod
    def from_dict(cls, d):
        m = cls(C=d["C"])
        m.coef_, m.intercept_ = np.array(d["coef"], dtype=float), d["intercept"]
        return m


# --------------------------------------------------------------------------
# Gaussian naive Bayes


class GaussianNB:
    name = "gaussian_nb"

    def __init__(self, var_smoothing=1e-9):
        self.var_smoothing = var_smoothing
        self.theta_ = self.var_ = self.prior_ = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        eps = self.var_smoothing * (np.var(X, axis=0).max() or 1.0)
        self.theta_ = np.array([X[y == c].mean(axis=0) for c in (0, 1)])
        self.var_ = np.array([X[y == c].var(axis=0) for c in (0, 1)]) + eps
        self.prior_ = np.array([np.mean(y == c) for c in (0, 1)])
        return self

    def joint_log_likelihood(self, X):
        if self.theta_ is None:
            raise NotFittedError(self.name)
        X = np.asarray(X, dtype=float)
        out = []
        for c in (0, 1):
            ll = -0.5 * np.sum(np.log(2.0 * np.pi * self.var_[c]))
            ll = ll - 0.5 * np.sum((X - self.theta_[c]) ** 2 / self.var_[c], axis=1)
            out.append(np.log(self.prior_[c]) + ll)
        return np.column_stack(out)

    def predict_proba(self, X):
        jll = self.joint_log_likelihood(X)
        return np.exp(jll - logsumexp(jll, axis=1, keepdims=True))

    def to_dict(self):
        return {
            "var_smoothing": self.var_smoothing,
            "theta": self.theta_.tolist(),
            "var": self.var_.tolist(),
            "prior": self.prior_.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        m = cls(d["var_smoothing"])
        m.theta_, m.var_, m.prior_ = (np.array(d[k], dtype=float) for k in ("theta", "var", "prior"))
        return m


# --------------------------------------------------------------------------
# random forest of CART trees


def _best_split(x, y):
    """Best Gini threshold on one feature; returns (impurity, threshold) or None."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = len(xs)
    valid = np.nonzero(xs[1:] > xs[:-1])[0] + 1  # left sizes with a value change
    if valid.size == 0:
        return None
    ones_left = np.cumsum(ys)[valid - 1]
    n_left = valid.astype(float)
    n_right = n - n_left
    ones_right = ys.sum() - ones_left
    p_l = ones_left / n_left
    p_r = ones_right / n_right
    impurity = n_left * 2 * p_l * (1 - p_l) + n_right * 2 * p_r * (1 - p_r)
    i = int(np.argmin(impurity))
    cut = valid[i]
    mid = (xs[cut - 1] + xs[cut]) / 2.0
    # adjacent floats can round the midpoint up onto the right-hand value
    return float(impurity[i]), float(mid if mid < xs[cut] else xs[cut - 1])


def grow_tree(X, y, rng, max_features):
    """Fully grown CART tree; returns parallel node arrays."""
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(y[idx].mean()))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)))]
    n_features = X.shape[1]
    while stack:
        node, idx = stack.pop()
        ys = y[idx]
        if len(idx) < 2 or ys.min() == ys.max():
            continue
        best = None
        for tried, f in enumerate(rng.permutation(n_features), start=1):
            split = _best_split(X[idx, f], ys)
            if split is not None and (best is None or split[0] < best[0]):
                best = (split[0], int(f), split[1])
            # keep drawing features past max_features only while nothing splits
            if tried >= max_features and best is not None:
                break
        if best is None:
            continue
        _, f, thr = best
        mask = X[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        left[node] = new_node(idx[mask])
        right[node] = new_node(idx[~mask])
        stack.append((right[node], idx[~mask]))
        stack.append((left[node], idx[mask]))
    return {
        "feature": feature,
        "threshold": threshold,
        "left": left,
        "right": right,
        "value": value,
    }


def tree_predict(tree, X):
    feature = np.asarray(tree["feature"])
    threshold = np.asarray(tree["threshold"], dtype=float)
    left, right = np.asarray(tree["left"]), np.asarray(tree["right"])
    node = np.zeros(len(X), dtype=int)
    rows = np.arange(len(X))
    while True:
        f = feature[node]
        active = f >= 0
        if not active.any():
            break
        go_left = X[rows[active], f[active]] <= threshold[node[active]]
        node[active] = np.where(go_left, left[node[active]], right[node[active]])
    return np.asarray(tree["value"], dtype=float)[node]


class RandomForest:
    name = "random_forest"

    def __init__(self, n_estimators=100, seed=0):
        self.n_estimators, self.seed = n_estimators, seed
        self.trees_ = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n, d = X.shape
        max_features = max(1, int(np.sqrt(d)))
        children = np.random.SeedSequence(self.seed).spawn(self.n_estimators)
        self.trees_ = []
        for ss in children:
            rng = np.random.default_rng(ss)
            boot = rng.integers(0, n, size=n)
            self.trees_.append(grow_tree(X[boot], y[boot], rng, max_features))
        return self

    def predict_proba(self, X):
        if self.trees_ is None:
            raise NotFittedError(self.name)
        X = np.asarray(X, dtype=float)
        return _stack(np.mean([tree_predict(t, X) for t in self.trees_], axis=0))

    def to_dict(self):
        return {"n_estimators": self.n_estimators, "seed": self.seed, "trees": self.trees_}

    @classmethod
    def from_dict(cls, d):
        m = cls(d["n_estimators"], d["seed"])
        m.trees_ = d["trees"]
        return m


# --------------------------------------------------------------------------
# linear SVM with Platt scaling


def platt_fit(f, y, max_iter=100):
    """Sigmoid ``P(1|f) = 1 / (1 + exp(A f + B))`` fitted by Newton's method
    with backtracking, using Platt's smoothed targets."""
    f = np.asarray(f, dtype=float)
    y = np.asarray(y)
    prior1 = float(np.sum(y == 1))
    prior0 = float(len(y) - prior1)
    t = np.where(y == 1, (prior1 + 1.0) / (prior1 + 2.0), 1.0 / (prior0 + 2.0))

    def objective(A, B):
        z = f * A + B
        return float(np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-np.abs(z))), (t - 1) * z + np.log1p(np.exp(-np.abs(z))))))

    A, B = 0.0, float(np.log((prior0 + 1.0) / (prior1 + 1.0)))
    fval = objective(A, B)
    for _ in range(max_iter):
        z = f * A + B
        p = expit(-z)  # P(1|f)
        q = 1.0 - p
        d2 = p * q
        h11 = 1e-12 + np.sum(f * f * d2)
        h22 = 1e-12 + np.sum(d2)
        h21 = np.sum(f * d2)
        d1 = t - p
        g1, g2 = np.sum(f * d1), np.sum(d1)
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= 1e-10:
            newA, newB = A + step * dA, B + step * dB
            newf = objective(newA, newB)
            if newf < fval + 1e-4 * step * gd:
                A, B, fval = newA, newB, newf
                break
            step /= 2.0
        if step < 1e-10:
            break
    return float(A), float(B)


def platt_apply(f, A, B):
    return expit(-(np.asarray(f, dtype=float) * A + B))


class LinearSVM:
    """Hinge-loss linear SVM trained with Pegasos SGD, calibrated with Platt
    scaling on its training decision values. The bias is an extra constant
    feature and is regularised like the weights."""

    name = "linear_svm"

    def __init__(self, C=1.0, epochs=50, seed=0):
        self.C, self.epochs, self.seed = C, epochs, seed
        self.w_ = None
        self.platt_ = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        n = len(X)
        Xa = np.column_stack([X, np.ones(n)])
        s = 2.0 * y - 1.0
        lam = 1.0 / (self.C * n)
        radius = 1.0 / np.sqrt(lam)
        rng = np.random.default_rng(self.seed)
        w = np.zeros(Xa.shape[1])
        t = 0
        for _ in range(self.epochs):
            for i in rng.permutation(n):
                t += 1
                eta = 1.0 / (lam * t)
                violated = s[i] * (Xa[i] @ w) < 1.0
                w *= 1.0 - eta * lam
                if violated:
                    w += eta * s[i] * Xa[i]
                norm = np.linalg.norm(w)
                if norm > radius:
                    w *= radius / norm
        self.w_ = w
        self.platt_ = platt_fit(self.decision_function(X), y)
        return self

    def decision_function(self, X):
        if self.w_ is None:
            raise NotFittedError(self.name)
        return np.asarray(X, dtype=float) @ self.w_[:-1] + self.w_[-1]

    def predict_proba(self, X):
        return _stack(platt_apply(self.decision_function(X), *self.platt_))

    def to_dict(self):
        return {"C": self.C, "epochs": self.epochs, "seed": self.seed, "w": self.w_.tolist(), "platt": list(self.platt_)}

    @classmethod
    def from_dict(cls, d):
        m = cls(d["C"], d["epochs"], d["seed"])
        m.w_, m.platt_ = np.array(d["w"], dtype=float), tuple(d["platt"])
        return m


MEMBER_TYPES = {cls.name: cls for cls in (LogisticRegression, GaussianNB, RandomForest, LinearSVM)}
