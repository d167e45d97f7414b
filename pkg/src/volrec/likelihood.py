import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


def gaussian_loglik(returns: np.ndarray, variances: np.ndarray) -> float:
    r = np.asarray(returns, dtype=float)
    v = np.asarray(variances, dtype=float)
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        return -np.inf
    return float(-0.5 * np.sum(LOG_2PI + np.log(v) + r * r / v))


def mv_gaussian_loglik(returns: np.ndarray, covariances: np.ndarray) -> float:
    r = np.asarray(returns, dtype=float)
    if not np.all(np.isfinite(covariances)):
        return -np.inf
    sign, logdet = np.linalg.slogdet(covariances)
    if np.any(sign <= 0):
        return -np.inf
    solved = np.linalg.solve(covariances, r[..., None])[..., 0]
    quad = np.sum(r * solved, axis=1)
    n = r.shape[1]
    return float(-0.5 * np.sum(n * LOG_2PI + logdet + quad))


def correlation_loglik(std_residuals: np.ndarray, correlations: np.ndarray) -> float:
    """Correlation part of the Gaussian likelihood given standardized residuals."""
    eta = np.asarray(std_residuals, dtype=float)
    if not np.all(np.isfinite(correlations)):
        return -np.inf
    sign, logdet = np.linalg.slogdet(correlations)
    if np.any(sign <= 0):
        return -np.inf
    solved = np.linalg.solve(correlations, eta[..., None])[..., 0]
    quad = np.sum(eta * solved, axis=1) - np.sum(eta * eta, axis=1)
    return float(-0.5 * np.sum(logdet + quad))
