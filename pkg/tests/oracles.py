"""Independent reference implementations used to check derived values.

Everything in this module is deliberately written from the mathematical
definitions, without calling into ipinfer, so tests can compare the library
against a second route.
"""

from __future__ import annotations

import numpy as np
from scipy import optimize


def finite_difference_gradient(f, theta: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of theta."""
    theta = np.asarray(theta, dtype=float)
    out = np.zeros_like(theta)
    for j in range(theta.size):
        step = np.zeros_like(theta)
        step[j] = eps
        out[j] = (f(theta + step) - f(theta - step)) / (2.0 * eps)
    return out


def finite_difference_jacobian(g, theta: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a vector function of theta."""
    theta = np.asarray(theta, dtype=float)
    cols = []
    for j in range(theta.size):
        step = np.zeros_like(theta)
        step[j] = eps
        cols.append((g(theta + step) - g(theta - step)) / (2.0 * eps))
    return np.stack(cols, axis=1)


def logistic_fit_gradient_descent(
    x_cov: np.ndarray,
    y: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 200_000,
) -> np.ndarray:
    """Logistic-loss minimizer by plain gradient descent with backtracking.

    Independent of any Newton machinery; used as the reference solution for
    the complete-case solver.
    """
    x_cov = np.asarray(x_cov, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = np.zeros(x_cov.shape[1])

    def mean_loss(t):
        z = x_cov @ t
        # log(1 + exp(z)) - y z, computed stably
        return float(np.mean(np.logaddexp(0.0, z) - y * z))

    def mean_grad(t):
        s = 1.0 / (1.0 + np.exp(-(x_cov @ t)))
        return x_cov.T @ (s - y) / x_cov.shape[0]

    step = 1.0
    for _ in range(max_iter):
        g = mean_grad(theta)
        if np.max(np.abs(g)) <= tol:
            break
        base = mean_loss(theta)
        step = min(step * 2.0, 1e4)
        while mean_loss(theta - step * g) > base - 0.5 * step * float(g @ g):
            step *= 0.5
        theta = theta - step * g
    return theta


def gaussian_conditional_mean(
    mu: np.ndarray,
    sigma: np.ndarray,
    observed: np.ndarray,
    missing: np.ndarray,
    x_obs: np.ndarray,
) -> np.ndarray:
    """Conditional mean of the missing block given the observed block."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    s_oo = sigma[np.ix_(observed, observed)]
    s_mo = sigma[np.ix_(missing, observed)]
    return mu[missing] + s_mo @ np.linalg.solve(s_oo, x_obs - mu[observed])


def ols_coefficients(x_cov: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Plain least-squares fit, the reference for closed-form targets."""
    return np.linalg.lstsq(np.asarray(x_cov, dtype=float), np.asarray(y, dtype=float), rcond=None)[0]


def numeric_lambda_minimizer(objective, start: np.ndarray) -> np.ndarray:
    """Numeric minimizer of a smooth scalar objective over lambda.

    Quasi-Newton from the given start, run to tight tolerance, with a
    Nelder-Mead polish; the reference for the closed-form tuning solution.
    """
    start = np.asarray(start, dtype=float)
    res = optimize.minimize(objective, start, method="BFGS", options={"gtol": 1e-12, "maxiter": 2000})
    best = res.x
    res2 = optimize.minimize(
        objective,
        best,
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20_000, "maxfev": 20_000},
    )
    if res2.fun <= res.fun:
        best = res2.x
    return best


def grid_search_lambda_1d(objective, lo: float = -2.0, hi: float = 2.0, rounds: int = 12) -> float:
    """Iteratively refined 1-D grid search to ~1e-8 resolution."""
    for _ in range(rounds):
        grid = np.linspace(lo, hi, 401)
        vals = np.array([objective(np.array([g])) for g in grid])
        k = int(np.argmin(vals))
        lo = grid[max(k - 1, 0)]
        hi = grid[min(k + 1, grid.size - 1)]
    return float(0.5 * (lo + hi))
