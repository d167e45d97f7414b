"""Univariate GARCH(1,1): filter, forecasts and quasi maximum likelihood fit."""

import itertools
import logging
from typing import Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter
from scipy.special import expit, logit

from .errors import EstimationFailure, InvalidInput
from .likelihood import gaussian_loglik
from .params import FilterOutput, Garch11Params

MIN_FIT_OBS = 50
MAX_ITER = 500
TOLERANCE = 1e-8


def as_vector(returns) -> np.ndarray:
    r = np.asarray(returns, dtype=float).ravel()
    if r.size < 1:
        raise InvalidInput("returns must hold at least one observation")
    if not np.all(np.isfinite(r)):
        raise InvalidInput("returns contain non-finite values")
    return r


def initial_variance(returns) -> float:
    """Second moment of the (de-meaned) sample, used to start every variance filter."""
    r = as_vector(returns)
    return float(np.mean(r * r))


def variance_recursion(
    drive: np.ndarray, beta: float, init: np.ndarray, axis: int = 0
) -> np.ndarray:
    """Run s_t = drive_{t-1} + beta * s_{t-1} from s_0 = init; returns s_0..s_T along axis."""
    init = np.asarray(init, dtype=float)
    zi = np.expand_dims(beta * init, axis)
    path, _ = lfilter([1.0], [1.0, -beta], drive, axis=axis, zi=zi)
    return np.concatenate([np.expand_dims(init, axis), path], axis=axis)


def garch11_filter(params: Garch11Params, returns, init_var: float) -> FilterOutput:
    r = as_vector(returns)
    if not init_var > 0:
        raise InvalidInput(f"init_var must be positive, got {init_var}")
    drive = params.omega + params.alpha * r * r
    sigma2 = variance_recursion(drive, params.beta, np.asarray(init_var, dtype=float))
    variances = sigma2[:-1]
    return FilterOutput(
        sigma_path=variances,
        next_sigma=np.asarray(sigma2[-1]),
        loglik=gaussian_loglik(r, variances),
        std_residuals=r / np.sqrt(variances),
    )


def garch11_iterate(params: Garch11Params, one_step, steps: int) -> np.ndarray:
    """Expected variance `steps` periods after a one-step forecast (works on arrays)."""
    value = np.asarray(one_step, dtype=float)
    persistence = params.persistence
    for _ in range(steps):
        value = params.omega + persistence * value
    return value


def garch11_forecast(
    params: Garch11Params, last_return: float, last_var: float, horizon: int
) -> float:
    if horizon < 1:
        raise InvalidInput("horizon must be at least 1")
    one_step = params.omega + params.alpha * last_return**2 + params.beta * last_var
    return float(garch11_iterate(params, one_step, horizon - 1))


def _unpack(theta: np.ndarray) -> Tuple[float, float, float]:
    persistence = expit(theta[1])
    share = expit(theta[2])
    return float(np.exp(theta[0])), float(persistence * share), float(persistence * (1 - share))


def _pack(omega: float, alpha: float, beta: float) -> np.ndarray:
    persistence = alpha + beta
    return np.array([np.log(omega), logit(persistence), logit(alpha / persistence)])


def garch11_fit(returns) -> Garch11Params:
    r = as_vector(returns)
    if r.size < MIN_FIT_OBS:
        raise InvalidInput(f"GARCH(1,1) fit needs at least {MIN_FIT_OBS} observations, got {r.size}")
    init_var = initial_variance(r)
    if not init_var > 0 or np.ptp(r) == 0:
        raise EstimationFailure("degenerate likelihood: returns have no variation", stage="garch")

    def objective(theta: np.ndarray) -> float:
        omega, alpha, beta = _unpack(theta)
        drive = omega + alpha * r * r
        sigma2 = variance_recursion(drive, beta, np.asarray(init_var))[:-1]
        value = -gaussian_loglik(r, sigma2)
        return value if np.isfinite(value) else 1e100

    starts = [
        _pack(init_var * (1 - alpha - beta), alpha, beta)
        for alpha, beta in itertools.product((0.03, 0.08, 0.15), (0.75, 0.85, 0.92))
        if alpha + beta < 0.995
    ]
    theta0 = min(starts, key=objective)
    scale = max(1.0, abs(objective(theta0)))
    options = {"maxiter": MAX_ITER, "xatol": 1e-7, "fatol": TOLERANCE * scale}

    result = minimize(objective, theta0, method="Nelder-Mead", options=options)
    if not result.success:
        # one restart from the last simplex vertex before giving up
        result = minimize(objective, result.x, method="Nelder-Mead", options=options)
    if not result.success or result.fun >= 1e100:
        raise EstimationFailure(
            f"GARCH(1,1) optimizer did not converge: {result.message}",
            stage="garch",
            diagnostics={"nit": int(result.nit), "fun": float(result.fun)},
        )

    omega, alpha, beta = _unpack(result.x)
    logging.debug(
        "GARCH fit omega=%.6g alpha=%.4f beta=%.4f loglik=%.6f nit=%s",
        omega,
        alpha,
        beta,
        -result.fun,
        result.nit,
    )
    return Garch11Params(omega, alpha, beta)
