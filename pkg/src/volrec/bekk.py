"""Scalar and full BEKK(1,1) covariance models."""

import logging

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

from .errors import EstimationFailure, InvalidInput
from .garch import variance_recursion
from .likelihood import mv_gaussian_loglik
from .matrix import is_positive_definite, symmetrize
from .params import FBekkParams, FilterOutput, SBekkParams

MIN_FIT_OBS = 100
MAX_ITER = 500


def as_matrix(returns) -> np.ndarray:
    r = np.asarray(returns, dtype=float)
    if r.ndim == 1:
        r = r[:, None]
    if r.ndim != 2 or r.shape[0] < 1:
        raise InvalidInput(f"returns must be a T x n matrix, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise InvalidInput("returns contain non-finite values")
    return r


def initial_covariance(returns) -> np.ndarray:
    r = as_matrix(returns)
    return symmetrize(r.T @ r / r.shape[0])


def _check_init(init_cov: np.ndarray, n: int) -> np.ndarray:
    init = symmetrize(init_cov)
    if init.shape != (n, n):
        raise InvalidInput(f"init_cov must be {n} x {n}, got {init.shape}")
    if not is_positive_definite(init):
        raise InvalidInput("init_cov must be symmetric positive definite")
    return init


def _outer_products(r: np.ndarray) -> np.ndarray:
    return r[:, :, None] * r[:, None, :]


def _output(r: np.ndarray, sigmas: np.ndarray) -> FilterOutput:
    path = sigmas[:-1]
    return FilterOutput(
        sigma_path=path,
        next_sigma=sigmas[-1],
        loglik=mv_gaussian_loglik(r, path),
    )


def sbekk_filter(params: SBekkParams, returns, init_cov) -> FilterOutput:
    r = as_matrix(returns)
    if r.shape[1] != params.n:
        raise InvalidInput(f"returns have {r.shape[1]} columns, params expect {params.n}")
    init = _check_init(init_cov, params.n)
    drive = symmetrize(params.intercept)[None] + params.alpha * _outer_products(r)
    return _output(r, variance_recursion(drive, params.beta, init))


def fbekk_filter(params: FBekkParams, returns, init_cov) -> FilterOutput:
    r = as_matrix(returns)
    if r.shape[1] != params.n:
        raise InvalidInput(f"returns have {r.shape[1]} columns, params expect {params.n}")
    init = _check_init(init_cov, params.n)
    intercept = symmetrize(params.intercept)
    shocks = r @ params.a.T
    sigmas = np.empty((r.shape[0] + 1, params.n, params.n))
    sigmas[0] = init
    for t in range(r.shape[0]):
        nxt = intercept + np.outer(shocks[t], shocks[t]) + params.b @ sigmas[t] @ params.b.T
        sigmas[t + 1] = 0.5 * (nxt + nxt.T)
    return _output(r, sigmas)


def sbekk_iterate(params: SBekkParams, one_step, steps: int) -> np.ndarray:
    value = np.asarray(one_step, dtype=float)
    intercept = symmetrize(params.intercept)
    persistence = params.alpha + params.beta
    for _ in range(steps):
        value = intercept + persistence * value
    return value


def fbekk_iterate(params: FBekkParams, one_step, steps: int) -> np.ndarray:
    """Iterate E[S] <- CC' + A S A' + B S B' on one matrix or a stack of them."""
    value = np.asarray(one_step, dtype=float)
    intercept = symmetrize(params.intercept)
    a, b = params.a, params.b
    for _ in range(steps):
        value = intercept + a @ value @ a.T + b @ value @ b.T
        value = 0.5 * (value + np.swapaxes(value, -1, -2))
    return value


def sbekk_forecast(params: SBekkParams, last_return, last_cov, horizon: int) -> np.ndarray:
    if horizon < 1:
        raise InvalidInput("horizon must be at least 1")
    r = np.asarray(last_return, dtype=float).ravel()
    one_step = (
        symmetrize(params.intercept) + params.alpha * np.outer(r, r) + params.beta * np.asarray(last_cov)
    )
    return sbekk_iterate(params, one_step, horizon - 1)


def fbekk_forecast(params: FBekkParams, last_return, last_cov, horizon: int) -> np.ndarray:
    if horizon < 1:
        raise InvalidInput("horizon must be at least 1")
    shock = params.a @ np.asarray(last_return, dtype=float).ravel()
    one_step = (
        symmetrize(params.intercept)
        + np.outer(shock, shock)
        + params.b @ np.asarray(last_cov, dtype=float) @ params.b.T
    )
    return fbekk_iterate(params, symmetrize(one_step), horizon - 1)


def _unpack(theta: np.ndarray):
    persistence = expit(theta[0])
    share = expit(theta[1])
    return float(persistence * share), float(persistence * (1 - share))


def sbekk_fit(returns) -> SBekkParams:
    """QML fit with covariance targeting: CC' = (1 - alpha - beta) * sample covariance."""
    r = as_matrix(returns)
    if r.shape[0] < MIN_FIT_OBS:
        raise InvalidInput(f"scalar BEKK fit needs at least {MIN_FIT_OBS} observations, got {r.shape[0]}")
    sample = initial_covariance(r)
    if not is_positive_definite(sample):
        raise EstimationFailure("sample covariance is not positive definite", stage="sbekk")
    outer = _outer_products(r)

    def objective(theta: np.ndarray) -> float:
        alpha, beta = _unpack(theta)
        drive = (1.0 - alpha - beta) * sample[None] + alpha * outer
        path = variance_recursion(drive, beta, sample)[:-1]
        value = -mv_gaussian_loglik(r, path)
        return value if np.isfinite(value) else 1e100

    starts = [
        np.array([logit(alpha + beta), logit(alpha / (alpha + beta))])
        for alpha, beta in ((0.05, 0.90), (0.10, 0.85), (0.03, 0.95))
    ]
    theta0 = min(starts, key=objective)
    result = minimize(objective, theta0, method="BFGS", options={"maxiter": MAX_ITER, "gtol": 1e-5})
    # status 2 is precision loss at a flat optimum, which is a usable answer
    if result.status not in (0, 2) or not result.fun < 1e100:
        raise EstimationFailure(
            f"scalar BEKK optimizer did not converge: {result.message}",
            stage="sbekk",
            diagnostics={"nit": int(result.nit), "fun": float(result.fun)},
        )

    alpha, beta = _unpack(result.x)
    c = np.linalg.cholesky((1.0 - alpha - beta) * sample)
    logging.debug("Scalar BEKK fit alpha=%.4f beta=%.4f loglik=%.6f", alpha, beta, -result.fun)
    return SBekkParams(c=c, alpha=alpha, beta=beta)
