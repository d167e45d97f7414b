"""DCC-GARCH and extended DCC-GARCH (volatility spillovers in the variance equation).

Both models share the correlation block: standardized residuals drive
Q_t = (1 - theta1 - theta2) Gamma + theta1 eta eta' + theta2 Q_{t-1}, which is
rescaled by sqrt(q_ii) to a correlation matrix. Estimation is multi-step:
variances first, then Gamma as the sample correlation of eta, then the
correlation dynamics by QML on the correlation likelihood.
"""

import itertools
import logging
from typing import Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter
from scipy.special import expit, logit

from .bekk import as_matrix
from .errors import EstimationFailure, InvalidInput, NumericalFailure
from .garch import garch11_filter, garch11_fit, garch11_iterate, variance_recursion
from .likelihood import correlation_loglik, gaussian_loglik, mv_gaussian_loglik
from .matrix import symmetrize
from .params import DccParams, EdccParams, FilterOutput, spectral_radius

MIN_FIT_OBS = 100
MAX_ITER = 500


def normalize_q(q: np.ndarray) -> np.ndarray:
    """Correlation matrices diag(q_ii)^-1/2 Q diag(q_ii)^-1/2 for one Q or a stack."""
    q = np.asarray(q, dtype=float)
    diag = np.diagonal(q, axis1=-2, axis2=-1)
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise NumericalFailure("correlation driver has a nonpositive diagonal entry")
    sd = np.sqrt(diag)
    corr = q / (sd[..., :, None] * sd[..., None, :])
    idx = np.arange(q.shape[-1])
    corr[..., idx, idx] = 1.0
    return corr


def _covariances(variances: np.ndarray, correlations: np.ndarray) -> np.ndarray:
    sd = np.sqrt(variances)
    return correlations * sd[..., :, None] * sd[..., None, :]


def correlation_recursion(
    gamma: np.ndarray, theta1: float, theta2: float, std_residuals: np.ndarray, q0: np.ndarray
) -> np.ndarray:
    """Q_0..Q_T for the correlation driver started from q0."""
    eta = np.asarray(std_residuals, dtype=float)
    outer = eta[:, :, None] * eta[:, None, :]
    drive = (1.0 - theta1 - theta2) * gamma[None] + theta1 * outer
    return variance_recursion(drive, theta2, q0)


def _correlation_output(
    r: np.ndarray,
    var_all: np.ndarray,
    gamma: np.ndarray,
    theta1: float,
    theta2: float,
) -> FilterOutput:
    variances = var_all[:-1]
    eta = r / np.sqrt(variances)
    q_all = correlation_recursion(gamma, theta1, theta2, eta, gamma)
    sigmas = _covariances(var_all, normalize_q(q_all))
    path = sigmas[:-1]
    return FilterOutput(
        sigma_path=path,
        next_sigma=sigmas[-1],
        loglik=mv_gaussian_loglik(r, path),
        std_residuals=eta,
        q_path=q_all[:-1],
        next_q=q_all[-1],
        var_path=variances,
        next_var=var_all[-1],
    )


def _init_variances(r: np.ndarray, init_var) -> np.ndarray:
    if init_var is None:
        return np.mean(r * r, axis=0)
    init = np.asarray(init_var, dtype=float).ravel()
    if init.shape != (r.shape[1],) or np.any(init <= 0):
        raise InvalidInput("init_var must hold one positive variance per asset")
    return init


def dcc_filter(params: DccParams, returns, init_var=None) -> FilterOutput:
    r = as_matrix(returns)
    if r.shape[1] != params.n:
        raise InvalidInput(f"returns have {r.shape[1]} columns, params expect {params.n}")
    init = _init_variances(r, init_var)
    var_all = np.empty((r.shape[0] + 1, params.n))
    for i, marginal in enumerate(params.marginals):
        out = garch11_filter(marginal, r[:, i], init[i])
        var_all[:-1, i] = out.sigma_path
        var_all[-1, i] = out.next_sigma
    return _correlation_output(r, var_all, params.gamma, params.theta1, params.theta2)


def edcc_variances(params: EdccParams, r: np.ndarray, init: np.ndarray) -> np.ndarray:
    """sigma2_t = nu + A r2_{t-1} + B sigma2_{t-1}; returns sigma2_0..sigma2_T."""
    drive = params.nu[None] + (r * r) @ params.a.T
    var_all = np.empty((r.shape[0] + 1, params.n))
    for i in range(params.n):
        var_all[:, i] = variance_recursion(drive[:, i], params.b[i, i], init[i])
    return var_all


def edcc_filter(params: EdccParams, returns, init_var=None) -> FilterOutput:
    r = as_matrix(returns)
    if r.shape[1] != params.n:
        raise InvalidInput(f"returns have {r.shape[1]} columns, params expect {params.n}")
    var_all = edcc_variances(params, r, _init_variances(r, init_var))
    return _correlation_output(r, var_all, params.gamma, params.theta1, params.theta2)


def correlation_iterate(
    gamma: np.ndarray, theta1: float, theta2: float, one_step_q, steps: int
) -> np.ndarray:
    value = np.asarray(one_step_q, dtype=float)
    persistence = theta1 + theta2
    for _ in range(steps):
        value = (1.0 - persistence) * gamma + persistence * value
    return value


def dcc_iterate(params: DccParams, one_step_var, one_step_q, steps: int) -> np.ndarray:
    """Covariance forecast `steps` periods after the one-step (variances, Q) state."""
    var = np.array(one_step_var, dtype=float)
    for i, marginal in enumerate(params.marginals):
        var[..., i] = garch11_iterate(marginal, var[..., i], steps)
    q = correlation_iterate(params.gamma, params.theta1, params.theta2, one_step_q, steps)
    return _covariances(var, normalize_q(q))


def edcc_iterate(params: EdccParams, one_step_var, one_step_q, steps: int) -> np.ndarray:
    var = np.asarray(one_step_var, dtype=float)
    transition = params.a + params.b
    for _ in range(steps):
        var = params.nu + var @ transition.T
    q = correlation_iterate(params.gamma, params.theta1, params.theta2, one_step_q, steps)
    return _covariances(var, normalize_q(q))


def _one_step_q(params, last_return, last_var, last_q) -> Tuple[np.ndarray, np.ndarray]:
    r = np.asarray(last_return, dtype=float).ravel()
    var = np.asarray(last_var, dtype=float).ravel()
    if np.any(var <= 0):
        raise InvalidInput("last_var must be positive")
    eta = r / np.sqrt(var)
    q = (
        (1.0 - params.theta1 - params.theta2) * params.gamma
        + params.theta1 * np.outer(eta, eta)
        + params.theta2 * np.asarray(last_q, dtype=float)
    )
    return r, q


def dcc_forecast(params: DccParams, last_return, last_var, last_q, horizon: int) -> np.ndarray:
    if horizon < 1:
        raise InvalidInput("horizon must be at least 1")
    r, q = _one_step_q(params, last_return, last_var, last_q)
    var = np.array(
        [
            m.omega + m.alpha * r[i] ** 2 + m.beta * float(np.ravel(last_var)[i])
            for i, m in enumerate(params.marginals)
        ]
    )
    return dcc_iterate(params, var, q, horizon - 1)


def edcc_forecast(params: EdccParams, last_return, last_var, last_q, horizon: int) -> np.ndarray:
    if horizon < 1:
        raise InvalidInput("horizon must be at least 1")
    r, q = _one_step_q(params, last_return, last_var, last_q)
    var = params.nu + params.a @ (r * r) + params.b @ np.asarray(last_var, dtype=float).ravel()
    return edcc_iterate(params, var, q, horizon - 1)


def sample_correlation(std_residuals: np.ndarray) -> np.ndarray:
    gamma = symmetrize(np.corrcoef(std_residuals, rowvar=False))
    np.fill_diagonal(gamma, 1.0)
    return gamma


def fit_correlation_dynamics(std_residuals: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """Steps two and three: Gamma from the sample correlation, then (theta1, theta2)."""
    eta = np.asarray(std_residuals, dtype=float)
    gamma = sample_correlation(eta)
    if np.linalg.eigvalsh(gamma)[0] <= 0:
        raise EstimationFailure("sample correlation of residuals is singular", stage="gamma")

    def unpack(theta: np.ndarray) -> Tuple[float, float]:
        persistence = expit(theta[0])
        share = expit(theta[1])
        return float(persistence * share), float(persistence * (1 - share))

    def objective(theta: np.ndarray) -> float:
        theta1, theta2 = unpack(theta)
        try:
            corr = normalize_q(correlation_recursion(gamma, theta1, theta2, eta, gamma)[:-1])
        except NumericalFailure:
            return 1e100
        value = -correlation_loglik(eta, corr)
        return value if np.isfinite(value) else 1e100

    starts = [
        np.array([logit(t1 + t2), logit(t1 / (t1 + t2))])
        for t1, t2 in itertools.product((0.02, 0.05, 0.15), (0.80, 0.93))
        if t1 + t2 < 0.995
    ]
    theta0 = min(starts, key=objective)
    scale = max(1.0, abs(objective(theta0)))
    options = {"maxiter": MAX_ITER, "xatol": 1e-7, "fatol": 1e-8 * scale}
    result = minimize(objective, theta0, method="Nelder-Mead", options=options)
    if not result.success:
        result = minimize(objective, result.x, method="Nelder-Mead", options=options)
    if not result.success or not result.fun < 1e100:
        raise EstimationFailure(
            f"correlation optimizer did not converge: {result.message}",
            stage="correlation",
            diagnostics={"nit": int(result.nit), "fun": float(result.fun)},
        )
    theta1, theta2 = unpack(result.x)
    return gamma, theta1, theta2


def dcc_fit(returns) -> DccParams:
    r = as_matrix(returns)
    if r.shape[0] < MIN_FIT_OBS:
        raise InvalidInput(f"DCC fit needs at least {MIN_FIT_OBS} observations, got {r.shape[0]}")
    marginals = []
    eta = np.empty_like(r)
    for i in range(r.shape[1]):
        try:
            marginal = garch11_fit(r[:, i])
        except EstimationFailure as exc:
            raise EstimationFailure(
                f"marginal GARCH fit failed: {exc}",
                stage="marginal",
                asset=i,
                diagnostics=exc.diagnostics,
            ) from exc
        marginals.append(marginal)
        eta[:, i] = garch11_filter(marginal, r[:, i], float(np.mean(r[:, i] ** 2))).std_residuals
    gamma, theta1, theta2 = fit_correlation_dynamics(eta)
    logging.debug("DCC fit n=%s theta1=%.4f theta2=%.4f", r.shape[1], theta1, theta2)
    return DccParams(tuple(marginals), gamma, theta1, theta2)


def _fit_spillover_row(
    i: int, r2: np.ndarray, target: np.ndarray, init: float
) -> Tuple[float, np.ndarray, float]:
    """QML for asset i's variance equation: log nu, one row of A, one diagonal entry of B."""
    n = r2.shape[1]

    def split(x: np.ndarray):
        return float(np.exp(x[0])), x[1 : n + 1], float(x[n + 1])

    def objective(x: np.ndarray) -> float:
        nu, a_row, b = split(x)
        drive = nu + r2 @ a_row
        sigma2 = lfilter([1.0], [1.0, -b], drive, zi=[b * init])[0]
        variances = np.concatenate(([init], sigma2[:-1]))
        value = -gaussian_loglik(target, variances)
        return value if np.isfinite(value) else 1e100

    a0 = np.zeros(n)
    a0[i] = 0.05
    x0 = np.concatenate(([np.log(0.05 * init)], a0, [0.90]))
    bounds = [(None, None)] + [(0.0, 1.0)] * n + [(0.0, 0.9999)]
    options = {"maxiter": MAX_ITER}
    result = minimize(objective, x0, method="L-BFGS-B", bounds=bounds, options=options)
    if not result.success:
        result = minimize(objective, result.x, method="L-BFGS-B", bounds=bounds, options=options)
    if not result.success or not result.fun < 1e100:
        raise EstimationFailure(
            f"variance equation optimizer did not converge: {result.message}",
            stage="variance",
            asset=i,
            diagnostics={"nit": int(result.nit), "fun": float(result.fun)},
        )
    nu, a_row, b = split(result.x)
    return nu, np.clip(a_row, 0.0, None), min(max(b, 0.0), 0.9999)


def edcc_fit(returns) -> EdccParams:
    """Gaussian QML for (nu, A, B), then the DCC correlation steps on the standardized residuals.

    With diagonal B each variance equation only involves its own parameters, so the
    joint variance likelihood separates into one bounded problem per asset.
    """
    r = as_matrix(returns)
    if r.shape[0] < MIN_FIT_OBS:
        raise InvalidInput(f"EDCC fit needs at least {MIN_FIT_OBS} observations, got {r.shape[0]}")
    init = np.mean(r * r, axis=0)
    if np.any(init <= 0):
        raise EstimationFailure("an asset has no return variation", stage="variance")
    r2 = r * r
    n = r.shape[1]
    nu = np.empty(n)
    a = np.empty((n, n))
    b = np.zeros((n, n))
    for i in range(n):
        nu[i], a[i], b[i, i] = _fit_spillover_row(i, r2, r[:, i], float(init[i]))

    radius = spectral_radius(a + b)
    if radius >= 1.0:
        raise EstimationFailure(
            f"fitted variance dynamics are nonstationary (max|eig(A+B)|={radius:.4f})",
            stage="variance",
            diagnostics={"radius": radius},
        )
    variances = edcc_variances(EdccParams(nu, a, b, np.eye(n), 0.0, 0.0), r, init)[:-1]
    gamma, theta1, theta2 = fit_correlation_dynamics(r / np.sqrt(variances))
    logging.debug("EDCC fit n=%s radius=%.4f theta1=%.4f theta2=%.4f", n, radius, theta1, theta2)
    return EdccParams(nu, a, b, gamma, theta1, theta2)
