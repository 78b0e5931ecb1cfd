"""L1-penalized logistic regression by accelerated proximal gradient (FISTA).

Minimizes ``mean(log(1 + exp(eta)) - y * eta) + ||beta||_1 / (C * N)``,
which matches the usual ``C * sum(logloss) + ||beta||_1`` scaling. The
intercept is not penalized. More than two classes are handled one-vs-rest.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from esscv.errors import ConvergenceError
from esscv.learners.lasso import soft_threshold


def _objective(Z, y, w, lam):
    eta = Z @ w
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta) + lam * np.abs(w[1:]).sum())


def logit_l1_fit(X, y01, C, tol=1e-7, max_iter=50_000):
    """Binary fit; returns ``(intercept, coef)``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y01, dtype=float)
    N, p = X.shape
    Z = np.hstack([np.ones((N, 1)), X])
    lam = 1.0 / (C * N)
    L = 0.25 * np.linalg.norm(Z, 2) ** 2 / N
    step = 1.0 / L
    w = np.zeros(p + 1)
    v = w.copy()
    t = 1.0
    prev_obj = _objective(Z, y, w, lam)
    for it in range(1, max_iter + 1):
        grad = Z.T @ (expit(Z @ v) - y) / N
        w_new = v - step * grad
        w_new[1:] = soft_threshold(w_new[1:], step * lam)
        obj = _objective(Z, y, w_new, lam)
        if obj > prev_obj:
            # adaptive restart of the momentum
            t = 1.0
            v = w.copy()
            continue
        t_new = (1 + np.sqrt(1 + 4 * t * t)) / 2
        v = w_new + ((t - 1) / t_new) * (w_new - w)
        change = np.max(np.abs(w_new - w)) if p + 1 else 0.0
        w, t, prev_obj = w_new, t_new, obj
        if change <= tol * max(1.0, np.max(np.abs(w))):
            return w[0], w[1:]
    raise ConvergenceError(f"L1 logistic regression did not converge in {max_iter} iterations",
                           C=float(C), n=N, p=p, objective=prev_obj)


class LogitL1:
    def __init__(self, C=1.0):
        self.C = C

    def fit(self, X, y):
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        targets = self.classes_[1:] if len(self.classes_) == 2 else self.classes_
        fits = [logit_l1_fit(X, (y == c).astype(float), self.C) for c in targets]
        self.intercept_ = np.array([f[0] for f in fits])
        self.coef_ = np.array([f[1] for f in fits])
        return self

    def decision_function(self, X):
        return np.asarray(X, dtype=float) @ self.coef_.T + self.intercept_

    def predict(self, X):
        scores = self.decision_function(X)
        if len(self.classes_) == 2:
            return self.classes_[(scores[:, 0] > 0).astype(int)]
        return self.classes_[np.argmax(scores, axis=1)]
