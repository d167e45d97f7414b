"""Gaussian simulation r_t = Sigma_t^(1/2) z_t from any of the supported models."""

from functools import singledispatch
from typing import Callable, Tuple, Union

import numpy as np

from .errors import InvalidInput, NumericalFailure
from .matrix import symmetrize, vech, vech_inv, vech_size
from .params import (
    DccParams,
    EdccParams,
    FBekkParams,
    Garch11Params,
    ModelParams,
    SBekkParams,
    stationarity_check,
)

Seed = Union[int, np.random.Generator, np.random.SeedSequence, None]
# state -> covariance, (state, return) -> next state
Step = Tuple[object, Callable[[object], np.ndarray], Callable[[object, np.ndarray], object]]


def as_generator(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


@singledispatch
def unconditional_covariance(params) -> np.ndarray:
    raise InvalidInput(f"unsupported parameter type {type(params).__name__}")


@unconditional_covariance.register
def _(params: Garch11Params) -> np.ndarray:
    return np.array([[params.unconditional_variance]])


@unconditional_covariance.register
def _(params: SBekkParams) -> np.ndarray:
    if not params.stationary:
        raise InvalidInput("unconditional covariance undefined when alpha + beta >= 1")
    return symmetrize(params.intercept) / (1.0 - params.alpha - params.beta)


@unconditional_covariance.register
def _(params: FBekkParams) -> np.ndarray:
    if not params.stationary:
        raise InvalidInput("unconditional covariance undefined for nonstationary full BEKK")
    m = vech_size(params.n)
    value = np.linalg.solve(np.eye(m) - params.companion(), vech(symmetrize(params.intercept)))
    return vech_inv(value)


def _dcc_variances(params: DccParams) -> np.ndarray:
    return np.array([m.unconditional_variance for m in params.marginals])


def _edcc_variances(params: EdccParams) -> np.ndarray:
    if not params.stationary:
        raise InvalidInput("unconditional variances undefined when A + B has an eigenvalue outside the unit circle")
    return np.linalg.solve(np.eye(params.n) - params.a - params.b, params.nu)


@unconditional_covariance.register
def _(params: DccParams) -> np.ndarray:
    sd = np.sqrt(_dcc_variances(params))
    return params.gamma * np.outer(sd, sd)


@unconditional_covariance.register
def _(params: EdccParams) -> np.ndarray:
    sd = np.sqrt(_edcc_variances(params))
    return params.gamma * np.outer(sd, sd)


@singledispatch
def _stepper(params) -> Step:
    raise InvalidInput(f"unsupported parameter type {type(params).__name__}")


@_stepper.register
def _(params: Garch11Params) -> Step:
    def update(var, r):
        return params.omega + params.alpha * r[0] ** 2 + params.beta * var

    return params.unconditional_variance, lambda var: np.array([[var]]), update


@_stepper.register
def _(params: SBekkParams) -> Step:
    intercept = symmetrize(params.intercept)

    def update(sigma, r):
        return intercept + params.alpha * np.outer(r, r) + params.beta * sigma

    return unconditional_covariance(params), lambda sigma: sigma, update


@_stepper.register
def _(params: FBekkParams) -> Step:
    intercept = symmetrize(params.intercept)

    def update(sigma, r):
        shock = params.a @ r
        nxt = intercept + np.outer(shock, shock) + params.b @ sigma @ params.b.T
        return 0.5 * (nxt + nxt.T)

    return unconditional_covariance(params), lambda sigma: sigma, update


def _correlation_step(params, variance_update) -> Tuple[Callable, Callable]:
    dynamic = params.theta1 + params.theta2

    def covariance(state):
        var, q = state
        d = np.sqrt(np.diag(q))
        corr = q / np.outer(d, d)
        np.fill_diagonal(corr, 1.0)
        sd = np.sqrt(var)
        return corr * np.outer(sd, sd)

    def update(state, r):
        var, q = state
        eta = r / np.sqrt(var)
        q_next = (1.0 - dynamic) * params.gamma + params.theta1 * np.outer(eta, eta) + params.theta2 * q
        return variance_update(var, r), q_next

    return covariance, update


@_stepper.register
def _(params: DccParams) -> Step:
    omega = np.array([m.omega for m in params.marginals])
    alpha = np.array([m.alpha for m in params.marginals])
    beta = np.array([m.beta for m in params.marginals])
    covariance, update = _correlation_step(params, lambda var, r: omega + alpha * r * r + beta * var)
    return (_dcc_variances(params), params.gamma.copy()), covariance, update


@_stepper.register
def _(params: EdccParams) -> Step:
    covariance, update = _correlation_step(
        params, lambda var, r: params.nu + params.a @ (r * r) + params.b @ var
    )
    return (_edcc_variances(params), params.gamma.copy()), covariance, update


def _dimension(params: ModelParams) -> int:
    return 1 if isinstance(params, Garch11Params) else params.n


def simulate(model: ModelParams, t_total: int, rng_seed: Seed) -> Tuple[np.ndarray, np.ndarray]:
    """Draw t_total returns and the covariance matrices that generated them.

    The recursion starts from the unconditional covariance; callers drop a burn-in.
    """
    if t_total < 1:
        raise InvalidInput("t_total must be at least 1")
    report = stationarity_check(model)
    if not report.ok:
        raise InvalidInput(f"cannot simulate nonstationary parameters ({report.quantity}={report.binding:.6g})")
    rng = as_generator(rng_seed)
    n = _dimension(model)
    state, covariance, update = _stepper(model)
    shocks = rng.standard_normal((t_total, n))
    returns = np.empty((t_total, n))
    cov_path = np.empty((t_total, n, n))
    for t in range(t_total):
        sigma = covariance(state)
        try:
            root = np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure(f"conditional covariance lost positive definiteness at t={t}") from exc
        cov_path[t] = sigma
        returns[t] = root @ shocks[t]
        state = update(state, returns[t])
    return returns, cov_path


