"""Reconciliation of a univariate portfolio-variance forecast with a multivariate covariance forecast.

The stacked vector is y = (sigma_p^2, vech(Sigma)) and coherence is c'y = 0 with
c = (1, -a')' and a = D'(w kron w). `shr` is the GLS projection onto the coherent
plane under a shrunk forecast-error covariance; when the projected covariance
implies correlations outside [-1, 1], option A re-solves the projection with
correlation bounds and option B reconciles the correlations directly, keeping
the reconciled standard deviations fixed.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Union

import numpy as np
from scipy.optimize import Bounds, NonlinearConstraint, brentq, minimize

from .errors import (
    DegenerateCovariance,
    DegenerateErrors,
    InfeasibleReconciliation,
    InvalidInput,
    SingularProjection,
)
from .matrix import (
    aggregation_vector,
    cov_to_cor,
    dimension_from_vech,
    is_positive_definite,
    scaled_aggregation_vector,
    symmetrize,
    vech,
    vech_inv,
    vech_size,
    vech_positions,
    vech_stack,
)

VARIANCE_FLOOR = 1e-12
CORRELATION_TOL = 1e-12
PROJECTION_TOL = 1e-300
SOLVER_MAX_ITER = 200
OPTIONS = ("A", "B", "auto")
APPROACHES = ("base", "bu", "shr", "shr_A", "shr_B")


@dataclass
class BaseForecastSet:
    sigma_p2_hat: float
    sigma_hat: np.ndarray
    clamped: int = 0

    def __post_init__(self) -> None:
        self.sigma_hat = np.asarray(self.sigma_hat, dtype=float).ravel()
        if not self.sigma_p2_hat > 0:
            raise InvalidInput("portfolio variance forecast must be positive")
        if np.any(np.diag(vech_inv(self.sigma_hat)) <= 0):
            raise InvalidInput("covariance forecast must have a positive diagonal")

    @property
    def n_assets(self) -> int:
        return dimension_from_vech(self.sigma_hat.shape[0])

    def stacked(self) -> np.ndarray:
        return np.concatenate(([self.sigma_p2_hat], self.sigma_hat))


def make_base_forecasts(sigma_p2_hat: float, sigma_hat_matrix: np.ndarray) -> BaseForecastSet:
    """Stack the two base forecasts, clamping nonpositive variances at VARIANCE_FLOOR."""
    sigma = symmetrize(sigma_hat_matrix)
    clamped = 0
    p2 = float(sigma_p2_hat)
    if not p2 > 0:
        p2 = VARIANCE_FLOOR
        clamped += 1
    diag = np.diag(sigma).copy()
    low = ~(diag > 0)
    if np.any(low):
        clamped += int(np.sum(low))
        diag[low] = VARIANCE_FLOOR
        np.fill_diagonal(sigma, diag)
    if clamped:
        logging.warning("Clamped nonpositive base variance forecasts count=%s floor=%s", clamped, VARIANCE_FLOOR)
    return BaseForecastSet(p2, vech(sigma), clamped)


@dataclass
class ErrorCovariance:
    omega: np.ndarray
    shrinkage_intensity: float
    n_obs: int


@dataclass
class ReconciliationResult:
    y_tilde: np.ndarray
    sigma_tilde: np.ndarray
    method_used: str
    correlation_ok: bool
    diagnostics: Dict[str, object] = field(default_factory=dict)

    @property
    def sigma_p2(self) -> float:
        return float(self.y_tilde[0])


def _omega_matrix(omega: Union[ErrorCovariance, np.ndarray]) -> np.ndarray:
    if isinstance(omega, ErrorCovariance):
        return omega.omega
    return np.asarray(omega, dtype=float)


def build_constraint(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float).ravel()
    if w.size < 1:
        raise InvalidInput("weights must hold at least one asset")
    return np.concatenate(([1.0], -aggregation_vector(w)))


def insample_errors(fitted_univariate_path, fitted_cov_path, proxy_path, weights) -> np.ndarray:
    """Rows (proxy_p - sigma_p^2 hat, vech(proxy) - vech(Sigma hat)) for each in-sample date.

    proxy_path is either a (T, n, n) stack of variance proxies or (T, n) returns,
    in which case the proxy is r_t r_t'.
    """
    univariate = np.asarray(fitted_univariate_path, dtype=float).ravel()
    fitted = np.asarray(fitted_cov_path, dtype=float)
    proxy = np.asarray(proxy_path, dtype=float)
    w = np.asarray(weights, dtype=float).ravel()
    if proxy.ndim == 2:
        proxy = proxy[:, :, None] * proxy[:, None, :]
    if fitted.ndim != 3 or proxy.shape != fitted.shape:
        raise InvalidInput(f"covariance paths are misaligned: {fitted.shape} vs {proxy.shape}")
    if univariate.shape[0] != fitted.shape[0]:
        raise InvalidInput(
            f"univariate path has {univariate.shape[0]} dates, covariance path has {fitted.shape[0]}"
        )
    if w.shape[0] != fitted.shape[1]:
        raise InvalidInput("weights do not match the covariance dimension")
    proxy_p = np.einsum("i,tij,j->t", w, proxy, w)
    return np.column_stack([proxy_p - univariate, vech_stack(proxy) - vech_stack(fitted)])


def _cov2cor(cov: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.diag(cov))
    corr = cov / np.outer(d, d)
    np.fill_diagonal(corr, 1.0)
    return corr


def shrink_cov(errors) -> ErrorCovariance:
    """Shrink the error second-moment matrix toward its diagonal (Schafer-Strimmer intensity)."""
    x = np.asarray(errors, dtype=float)
    if x.ndim != 2:
        raise InvalidInput("errors must be a T x (m+1) matrix")
    n, p = x.shape
    if n < 2:
        raise InvalidInput("shrinkage needs at least two error rows")
    flat = np.ptp(x, axis=0) == 0
    if np.any(flat):
        raise DegenerateErrors(f"error columns {np.flatnonzero(flat).tolist()} have zero variance")

    s_mat = x.T @ x / n
    t_mat = np.diag(np.diag(s_mat))
    xscale = x / np.sqrt(np.diag(s_mat))
    xscale_sq = xscale**2
    var_sij = (xscale_sq.T @ xscale_sq - (xscale.T @ xscale) ** 2 / n) / (n * (n - 1))
    np.fill_diagonal(var_sij, 0.0)
    sq_sij = (_cov2cor(s_mat) - np.eye(p)) ** 2
    denominator = np.sum(sq_sij)
    intensity = 1.0 if denominator == 0 else float(np.clip(np.sum(var_sij) / denominator, 0.0, 1.0))

    shrunk = intensity * t_mat + (1.0 - intensity) * s_mat
    floored = intensity
    while not is_positive_definite(shrunk) and floored < 1.0:
        floored = 1.0 if 1.0 - floored < 1e-12 else 0.5 * (1.0 + floored)
        shrunk = floored * t_mat + (1.0 - floored) * s_mat
    if floored != intensity:
        logging.debug("Raised shrinkage intensity for definiteness from=%.6f to=%.6f", intensity, floored)
    return ErrorCovariance(symmetrize(shrunk), floored, n)


def gls_objective(y: np.ndarray, y_hat: np.ndarray, omega) -> float:
    diff = np.asarray(y, dtype=float) - np.asarray(y_hat, dtype=float)
    return float(diff @ np.linalg.solve(_omega_matrix(omega), diff))


def correlation_valid(sigma: np.ndarray) -> bool:
    corr, _ = cov_to_cor(sigma)
    return bool(np.all(np.abs(corr) <= 1.0 + CORRELATION_TOL))


def _max_abs_correlation(sigma: np.ndarray) -> float:
    try:
        corr, _ = cov_to_cor(sigma)
    except DegenerateCovariance:
        return float("nan")
    off = corr[~np.eye(corr.shape[0], dtype=bool)]
    return float(np.max(np.abs(off))) if off.size else 1.0


def _correlation_ok(sigma: np.ndarray) -> bool:
    try:
        return correlation_valid(sigma)
    except DegenerateCovariance:
        return False


def _result(y: np.ndarray, method: str, diagnostics: Optional[dict] = None) -> ReconciliationResult:
    sigma = vech_inv(y[1:])
    diagnostics = dict(diagnostics or {})
    diagnostics.setdefault("psd", bool(np.linalg.eigvalsh(sigma)[0] >= 0))
    return ReconciliationResult(y, sigma, method, _correlation_ok(sigma), diagnostics)


def reconcile_shr(y_hat, omega, c) -> ReconciliationResult:
    """GLS projection y~ = y^ - Omega c (c' Omega c)^-1 c' y^."""
    y = np.asarray(y_hat, dtype=float).ravel()
    c = np.asarray(c, dtype=float).ravel()
    om = _omega_matrix(omega)
    if y.shape != c.shape or om.shape != (y.size, y.size):
        raise InvalidInput("y_hat, c and omega dimensions disagree")
    om_c = om @ c
    denominator = float(c @ om_c)
    if not denominator > PROJECTION_TOL:
        raise SingularProjection(f"c' Omega c = {denominator:.3e} is not positive")
    y_tilde = y - om_c * (float(c @ y) / denominator)
    return _result(y_tilde, "shr", {"incoherence": float(c @ y)})


def _pairs(n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Positions in vech of the off-diagonal entries and of the two matching diagonal entries."""
    rows, cols = vech_positions(n)
    diag_index = {int(i): k for k, (i, j) in enumerate(zip(rows, cols)) if i == j}
    off = np.flatnonzero(rows != cols)
    first = np.array([diag_index[int(rows[k])] for k in off], dtype=int)
    second = np.array([diag_index[int(cols[k])] for k in off], dtype=int)
    diagonal = np.array(sorted(diag_index.values()), dtype=int)
    return off, first, second, diagonal


def _polish(sigma_vech: np.ndarray, a: np.ndarray, n: int) -> np.ndarray:
    """Clip implied correlations into [-1, 1] and restore exact coherence."""
    sigma = vech_inv(sigma_vech)
    sd = np.sqrt(np.diag(sigma))
    corr = np.clip(sigma / np.outer(sd, sd), -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    fixed = vech(symmetrize(corr * np.outer(sd, sd)))
    return np.concatenate(([a @ fixed], fixed))


def reconcile_shr_a(y_hat, omega, c, start: Optional[np.ndarray] = None) -> ReconciliationResult:
    """GLS projection with |rho_ij| <= 1 imposed as sigma_ii sigma_jj - sigma_ij^2 >= 0.

    Coherence is eliminated by substitution (sigma_p^2 = a' sigma). SLSQP starts from
    the shr solution; trust-constr is the fallback solver.
    """
    y = np.asarray(y_hat, dtype=float).ravel()
    c = np.asarray(c, dtype=float).ravel()
    om = _omega_matrix(omega)
    shr = reconcile_shr(y, om, c)
    if shr.correlation_ok:
        return ReconciliationResult(shr.y_tilde, shr.sigma_tilde, "shr_A", True, {"constraints_active": False})

    a = -c[1:]
    n = dimension_from_vech(a.size)
    off, first, second, diagonal = _pairs(n)
    om_inv = np.linalg.inv(om)
    x0 = np.asarray(start if start is not None else shr.y_tilde, dtype=float)[1:].copy()
    scale = float(np.median(np.abs(x0[diagonal]))) or 1.0
    floor = VARIANCE_FLOOR / scale
    z0 = x0 / scale
    z0[diagonal] = np.maximum(z0[diagonal], 10 * floor)
    norm = scale**2 * float(np.mean(np.diag(om_inv)))

    def stacked(z: np.ndarray) -> np.ndarray:
        sigma = scale * z
        return np.concatenate(([a @ sigma], sigma))

    def objective(z: np.ndarray) -> float:
        diff = stacked(z) - y
        return float(diff @ om_inv @ diff) / norm

    def gradient(z: np.ndarray) -> np.ndarray:
        g = 2.0 * om_inv @ (stacked(z) - y)
        return scale * (g[0] * a + g[1:]) / norm

    def bounds_value(z: np.ndarray) -> np.ndarray:
        return z[first] * z[second] - z[off] ** 2

    def bounds_jac(z: np.ndarray) -> np.ndarray:
        jac = np.zeros((off.size, z.size))
        k = np.arange(off.size)
        jac[k, first] += z[second]
        jac[k, second] += z[first]
        jac[k, off] = -2.0 * z[off]
        return jac

    lower = np.full(z0.size, -np.inf)
    lower[diagonal] = floor
    box = Bounds(lower, np.full(z0.size, np.inf))
    diagnostics: Dict[str, object] = {"constraints_active": True, "shr_max_abs_rho": _max_abs_correlation(shr.sigma_tilde)}

    result = minimize(
        objective,
        z0,
        jac=gradient,
        method="SLSQP",
        bounds=box,
        constraints=[{"type": "ineq", "fun": bounds_value, "jac": bounds_jac}],
        options={"maxiter": SOLVER_MAX_ITER, "ftol": 1e-12},
    )
    diagnostics.update({"solver": "SLSQP", "nit": int(result.nit), "message": str(result.message)})
    if not result.success:
        logging.debug("SLSQP failed for correlation-bounded projection message=%s", result.message)
        result = minimize(
            objective,
            z0,
            jac=gradient,
            method="trust-constr",
            bounds=box,
            constraints=[NonlinearConstraint(bounds_value, 0.0, np.inf, jac=bounds_jac)],
            options={"maxiter": 10 * SOLVER_MAX_ITER, "gtol": 1e-10, "xtol": 1e-12},
        )
        diagnostics.update({"solver": "trust-constr", "nit": int(result.nit), "message": str(result.message)})
    if not result.success or not np.all(np.isfinite(result.x)):
        raise InfeasibleReconciliation(f"correlation-bounded projection failed: {result.message}")
    if np.any(result.x[diagonal] <= 0):
        raise InfeasibleReconciliation("correlation-bounded projection reached a zero variance")

    y_tilde = _polish(scale * result.x, a, n)
    diagnostics["objective"] = gls_objective(y_tilde, y, om)
    diagnostics["shr_objective"] = gls_objective(shr.y_tilde, y, om)
    out = _result(y_tilde, "shr_A", diagnostics)
    if not out.correlation_ok:
        raise InfeasibleReconciliation("correlation-bounded projection left |rho| > 1")
    return out


def correlation_weights(omega, n: int) -> np.ndarray:
    """Default weighting for correlation reconciliation: diag(Omega_00, 1, ..., 1)."""
    om = _omega_matrix(omega)
    w = np.ones(vech_size(n) + 1)
    w[0] = om[0, 0]
    return np.diag(w)


def _solve_diagonal(
    x_hat: np.ndarray, w: np.ndarray, c_free: np.ndarray, target: float, lo: np.ndarray, hi: np.ndarray
) -> np.ndarray:
    """min sum (x - x_hat)^2 / w  s.t. c'x = target, lo <= x <= hi, for diagonal weights.

    The KKT point is x(lam) = clip(x_hat - lam w c, lo, hi) with c'x(lam) monotone in lam.
    """

    def x_of(lam: float) -> np.ndarray:
        return np.clip(x_hat - lam * w * c_free, lo, hi)

    def gap(lam: float) -> float:
        return float(c_free @ x_of(lam)) - target

    g0 = gap(0.0)
    if g0 == 0.0:
        return x_of(0.0)
    # gap is nonincreasing in lam
    step = 1.0
    lam_lo, lam_hi = (0.0, step) if g0 > 0 else (-step, 0.0)
    for _ in range(200):
        if gap(lam_lo) >= 0 >= gap(lam_hi):
            break
        step *= 2.0
        lam_lo, lam_hi = (0.0, step) if g0 > 0 else (-step, 0.0)
    else:
        raise InfeasibleReconciliation("no correlation vector within [-1, 1] meets the portfolio variance")
    lam = brentq(gap, lam_lo, lam_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return x_of(lam)


def reconcile_shr_b(y_hat, sigma_tilde_from_shr, rho_hat, w, weights) -> ReconciliationResult:
    """Reconcile (sigma_p^2, rho) with reconciled standard deviations held fixed.

    w is the (m+1) x (m+1) weighting matrix over (sigma_p^2, vech(R)); rows for the
    pinned unit diagonal are ignored. A zero weight on sigma_p^2 holds it fixed.
    """
    y = np.asarray(y_hat, dtype=float).ravel()
    sigma_shr = symmetrize(sigma_tilde_from_shr)
    rho = np.asarray(rho_hat, dtype=float).ravel()
    weight_matrix = _omega_matrix(w)
    n = sigma_shr.shape[0]
    if np.any(np.diag(sigma_shr) <= 0):
        raise DegenerateCovariance("reconciled covariance has a nonpositive diagonal entry")
    if rho.size != vech_size(n) or weight_matrix.shape != (rho.size + 1, rho.size + 1):
        raise InvalidInput("rho_hat and w dimensions do not match the covariance")

    sd = np.sqrt(np.diag(sigma_shr))
    a_sigma = scaled_aggregation_vector(weights, sd)
    off, _, _, diagonal = _pairs(n)
    free = np.concatenate(([0], off + 1))
    x_hat = np.concatenate(([y[0]], rho))[free]
    c_free = np.concatenate(([1.0], -a_sigma[off]))
    target = float(a_sigma[diagonal].sum())
    lo = np.concatenate(([-np.inf], np.full(off.size, -1.0)))
    hi = np.concatenate(([np.inf], np.full(off.size, 1.0)))
    w_free = weight_matrix[np.ix_(free, free)]
    diagnostics: Dict[str, object] = {"constraints_active": True}

    if np.count_nonzero(w_free - np.diag(np.diag(w_free))) == 0:
        x = _solve_diagonal(x_hat, np.diag(w_free), c_free, target, lo, hi)
        diagnostics["solver"] = "diagonal-kkt"
    else:
        if not is_positive_definite(w_free):
            raise InvalidInput("correlation weighting matrix must be positive definite")
        w_inv = np.linalg.inv(w_free)
        start = np.clip(x_hat, lo, hi)
        start[0] = target + a_sigma[off] @ start[1:]
        result = minimize(
            lambda x: float((x - x_hat) @ w_inv @ (x - x_hat)),
            start,
            jac=lambda x: 2.0 * w_inv @ (x - x_hat),
            method="SLSQP",
            bounds=Bounds(lo, hi),
            constraints=[{"type": "eq", "fun": lambda x: c_free @ x - target, "jac": lambda x: c_free}],
            options={"maxiter": SOLVER_MAX_ITER, "ftol": 1e-14},
        )
        if not result.success:
            raise InfeasibleReconciliation(f"correlation reconciliation failed: {result.message}")
        x = np.clip(result.x, lo, hi)
        diagnostics.update({"solver": "SLSQP", "nit": int(result.nit)})

    rho_tilde = np.empty(vech_size(n))
    rho_tilde[diagonal] = 1.0
    rho_tilde[off] = x[1:]
    corr = vech_inv(rho_tilde)
    sigma = symmetrize(corr * np.outer(sd, sd))
    sigma_p2 = float(a_sigma @ rho_tilde)
    diagnostics["sigma_p2_shift"] = sigma_p2 - float(x[0])
    diagnostics["rho_tilde"] = rho_tilde
    y_tilde = np.concatenate(([sigma_p2], vech(sigma)))
    diagnostics["psd"] = bool(np.linalg.eigvalsh(sigma)[0] >= 0)
    return ReconciliationResult(y_tilde, sigma, "shr_B", bool(np.all(np.abs(x[1:]) <= 1.0)), diagnostics)


def _option_b(y_hat, shr: ReconciliationResult, omega, weights, base_sigma: np.ndarray) -> ReconciliationResult:
    n = base_sigma.shape[0]
    rho_hat = vech(cov_to_cor(base_sigma)[0])
    return reconcile_shr_b(y_hat, shr.sigma_tilde, rho_hat, correlation_weights(omega, n), weights)


def _second_stage(
    option: str, y_hat, shr: ReconciliationResult, omega, c, weights, base_sigma
) -> ReconciliationResult:
    positive_diag = bool(np.all(np.diag(shr.sigma_tilde) > 0))
    if option == "A" or not positive_diag:
        try:
            return reconcile_shr_a(y_hat, omega, c, start=shr.y_tilde)
        except InfeasibleReconciliation as exc:
            if not positive_diag:
                raise
            logging.warning("Correlation-bounded projection failed, using correlation reconciliation error=%s", exc)
            out = _option_b(y_hat, shr, omega, weights, base_sigma)
            out.diagnostics["fallback_from"] = "shr_A"
            return out
    return _option_b(y_hat, shr, omega, weights, base_sigma)


def algorithm1(base: BaseForecastSet, omega, weights, option: str = "auto") -> ReconciliationResult:
    """shr, then a second stage only when the projected covariance has |rho| > 1."""
    if option not in OPTIONS:
        raise InvalidInput(f"option must be one of {OPTIONS}, got {option!r}")
    y_hat = base.stacked()
    c = build_constraint(weights)
    shr = reconcile_shr(y_hat, omega, c)
    if shr.correlation_ok:
        return shr
    return _second_stage(option, y_hat, shr, omega, c, weights, vech_inv(base.sigma_hat))


def reconcile_approaches(base: BaseForecastSet, omega, weights) -> Dict[str, ReconciliationResult]:
    """Every approach compared in the studies, sharing one shr projection.

    `base` keeps the univariate forecast and `bu` the bottom-up w' Sigma w; shr_A and
    shr_B equal shr whenever shr already implies valid correlations.
    """
    y_hat = base.stacked()
    c = build_constraint(weights)
    sigma_hat = vech_inv(base.sigma_hat)
    bu = float(-c[1:] @ base.sigma_hat)
    out = {
        "base": ReconciliationResult(y_hat, sigma_hat, "base", _correlation_ok(sigma_hat)),
        "bu": ReconciliationResult(
            np.concatenate(([bu], base.sigma_hat)), sigma_hat, "bu", _correlation_ok(sigma_hat)
        ),
    }
    shr = reconcile_shr(y_hat, omega, c)
    out["shr"] = shr
    if shr.correlation_ok:
        out["shr_A"] = out["shr_B"] = shr
        return out
    for option, key in (("A", "shr_A"), ("B", "shr_B")):
        out[key] = _second_stage(option, y_hat, shr, omega, c, weights, sigma_hat)
    return out
