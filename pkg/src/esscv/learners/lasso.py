"""Lasso by cyclic coordinate descent.

Objective: ``(1 / (2N)) ||y - b0 - X beta||^2 + alpha ||beta||_1`` with an
unpenalized intercept, handled by centering. ``lasso_cd_batch`` solves B
independent problems of identical shape at once (one per training block).
"""

from __future__ import annotations

import numpy as np

from esscv.errors import ConvergenceError


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def alpha_max(X, y):
    """Smallest penalty at which every coefficient is zero."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[1] == 0 or len(y) == 0:
        return 0.0
    Xc = X - X.mean(axis=0)
    return float(np.max(np.abs(Xc.T @ (y - y.mean()))) / len(y))


def alpha_path(X, y, n_alphas=20, decades=3.0):
    top = alpha_max(X, y)
    if top <= 0:
        return np.array([0.0])
    return np.geomspace(top, top * 10.0 ** (-decades), n_alphas)


def lasso_cd(X, y, alpha, tol=1e-10, max_iter=100_000, warm_start=None):
    """Returns ``(intercept, coef, n_sweeps)``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    N, p = X.shape
    xm = X.mean(axis=0) if N else np.zeros(p)
    ym = float(y.mean())
    Xc = X - xm
    col_sq = (Xc * Xc).sum(axis=0) / N
    beta = np.zeros(p) if warm_start is None else np.array(warm_start, dtype=float)
    r = y - ym - Xc @ beta
    scale = max(float(np.std(y)), 1.0)
    active = np.flatnonzero(col_sq > 0)
    beta[col_sq == 0] = 0.0
    for sweep in range(1, max_iter + 1):
        max_delta = 0.0
        for j in active:
            old = beta[j]
            xj = Xc[:, j]
            z = xj @ r / N + col_sq[j] * old
            new = np.sign(z) * max(abs(z) - alpha, 0.0) / col_sq[j]
            if new != old:
                r -= xj * (new - old)
                beta[j] = new
                max_delta = max(max_delta, abs(new - old) * np.sqrt(col_sq[j]))
        if max_delta <= tol * scale:
            return ym - xm @ beta, beta, sweep
    raise ConvergenceError(
        f"lasso coordinate descent did not converge in {max_iter} sweeps",
        alpha=float(alpha), last_change=float(max_delta), n=N, p=p)


def lasso_cd_batch(X, y, alpha, tol=1e-10, max_iter=100_000):
    """Vectorized over the leading axis: ``X`` is (B, N, p), ``y`` is (B, N).

    Returns ``(intercepts (B,), coefs (B, p))``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    B, N, p = X.shape
    xm = X.mean(axis=1)
    ym = y.mean(axis=1)
    Xc = X - xm[:, None, :]
    col_sq = (Xc * Xc).sum(axis=1) / N
    safe = np.where(col_sq > 0, col_sq, 1.0)
    beta = np.zeros((B, p))
    r = y - ym[:, None]
    scale = np.maximum(y.std(axis=1), 1.0)
    # converged blocks are frozen so each block's result does not depend on the others
    live = np.ones(B, dtype=bool)
    for _ in range(max_iter):
        max_delta = np.zeros(B)
        for j in range(p):
            xj = Xc[:, :, j]
            old = beta[:, j]
            z = np.einsum("bn,bn->b", xj, r) / N + col_sq[:, j] * old
            new = np.where(col_sq[:, j] > 0, soft_threshold(z, alpha) / safe[:, j], 0.0)
            delta = np.where(live, new - old, 0.0)
            r -= xj * delta[:, None]
            beta[:, j] = old + delta
            max_delta = np.maximum(max_delta, np.abs(delta) * np.sqrt(col_sq[:, j]))
        live &= max_delta > tol * scale
        if not live.any():
            return ym - np.einsum("bp,bp->b", xm, beta), beta
    raise ConvergenceError(f"batched lasso did not converge in {max_iter} sweeps",
                           alpha=float(alpha), blocks=B, n=N, p=p)


def kkt_violation(X, y, intercept, coef, alpha):
    """Largest violation of the lasso subgradient optimality conditions."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    resid = y - intercept - X @ coef
    violations = [abs(resid.mean())]
    g = (X - X.mean(axis=0)).T @ resid / len(y)
    for gj, bj in zip(g, coef):
        if bj != 0:
            violations.append(abs(gj - alpha * np.sign(bj)))
        else:
            violations.append(max(abs(gj) - alpha, 0.0))
    return float(max(violations))


def lasso_objective(X, y, intercept, coef, alpha):
    resid = np.asarray(y, dtype=float) - intercept - np.asarray(X, dtype=float) @ coef
    return float(resid @ resid / (2 * len(resid)) + alpha * np.abs(coef).sum())
