"""Data-generating processes for the simulation designs.

Random designs redraw every parameter until the model is covariance
stationary; the 24-asset designs use fixed coefficient matrices.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, InvalidInput, SamplerExhausted
from .params import (
    DccParams,
    EdccParams,
    FBekkParams,
    Garch11Params,
    ModelParams,
    SBekkParams,
    stationarity_check,
)
from .simulation import simulate

MODEL_CLASSES = ("sbekk", "fbekk", "dcc", "edcc")
WEIGHT_SCHEMES = ("equal", "random")
DESIGNS = ("auto", "random", "fixed")
MAX_ATTEMPTS = 10_000
GAMMA_EIGEN_FLOOR = 1e-10
FIXED_DESIGN_ASSETS = 24


def make_rng(master_seed: int, replication: int = 0) -> np.random.Generator:
    """Counter-based generator for one replication of a study."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([master_seed, replication])))


def _rejection(draw: Callable[[], Any], accept: Callable[[Any], bool], what: str) -> Any:
    for attempt in range(1, MAX_ATTEMPTS + 1):
        candidate = draw()
        if accept(candidate):
            if attempt > 1:
                logging.debug("Sampler accepted draw sampler=%s attempts=%s", what, attempt)
            return candidate
    raise SamplerExhausted(f"{what}: no admissible draw after {MAX_ATTEMPTS} attempts")


def _stationary(params: ModelParams) -> bool:
    return stationarity_check(params).ok


def sample_intercept_factor(n: int, rng: np.random.Generator) -> np.ndarray:
    """Lower-triangular C with diagonal U(0.05, 0.30) and sub-diagonal N(0, 0.05^2)."""
    c = np.tril(rng.normal(0.0, 0.05, size=(n, n)), -1)
    c[np.diag_indices(n)] = rng.uniform(0.05, 0.30, size=n)
    return c


def sample_sbekk_params(n: int, rng: np.random.Generator) -> SBekkParams:
    c = sample_intercept_factor(n, rng)

    def draw() -> Tuple[float, float]:
        return float(rng.uniform(0.05, 0.20)), float(rng.uniform(0.70, 0.95))

    alpha, beta = _rejection(draw, lambda ab: ab[0] + ab[1] < 1.0, "sbekk")
    return SBekkParams(c=c, alpha=alpha, beta=beta)


def sample_fbekk_params(n: int, rng: np.random.Generator) -> FBekkParams:
    if n % 3 != 0:
        raise InvalidInput(f"full BEKK design uses 3x3 blocks, n={n} is not a multiple of 3")
    c = sample_intercept_factor(n, rng)

    def draw() -> FBekkParams:
        b = np.zeros((n, n))
        for start in range(0, n, 3):
            block = rng.uniform(0.0, 0.10, size=(3, 3))
            block[np.diag_indices(3)] = rng.uniform(0.70, 0.95, size=3)
            b[start : start + 3, start : start + 3] = block
        a = rng.uniform(0.0, 0.10, size=(n, n))
        return FBekkParams(c=c, a=a, b=b)

    return _rejection(draw, _stationary, "fbekk")


def gen_gamma(n: int, rng: np.random.Generator) -> np.ndarray:
    def draw() -> np.ndarray:
        a = rng.normal(-0.15, 0.6, size=(n, n))
        q = a.T @ a
        d = np.sqrt(np.diag(q))
        q = q / np.outer(d, d)
        gamma = 0.5 * (q + q.T)
        np.fill_diagonal(gamma, 1.0)
        return gamma

    return _rejection(draw, lambda g: np.linalg.eigvalsh(g)[0] > GAMMA_EIGEN_FLOOR, "gamma")


def equicorrelation(n: int, rho: float) -> np.ndarray:
    if not -1.0 / max(n - 1, 1) < rho < 1.0:
        raise InvalidInput(f"equicorrelation {rho} is not positive definite for n={n}")
    gamma = np.full((n, n), float(rho))
    np.fill_diagonal(gamma, 1.0)
    return gamma


def _sample_theta(rng: np.random.Generator) -> Tuple[float, float]:
    def draw() -> Tuple[float, float]:
        return float(rng.uniform(0.05, 0.30)), float(rng.uniform(0.70, 0.85))

    return _rejection(draw, lambda t: t[0] + t[1] < 1.0, "theta")


def sample_dcc_params(n: int, rng: np.random.Generator) -> DccParams:
    marginals = []
    for _ in range(n):
        # alpha + beta <= 1.00 on these ranges; the draw is redrawn only at equality
        alpha, beta = _rejection(
            lambda: (float(rng.uniform(0.05, 0.15)), float(rng.uniform(0.70, 0.85))),
            lambda ab: ab[0] + ab[1] < 1.0,
            "dcc marginal",
        )
        # unit unconditional variance
        marginals.append(Garch11Params(1.0 - alpha - beta, alpha, beta))
    theta1, theta2 = _sample_theta(rng)
    return DccParams(tuple(marginals), gen_gamma(n, rng), theta1, theta2)


def sample_edcc_params(n: int, rng: np.random.Generator) -> EdccParams:
    def draw() -> Tuple[np.ndarray, np.ndarray]:
        a = rng.uniform(0.0, 0.02, size=(n, n))
        a[np.diag_indices(n)] = rng.uniform(0.0, 0.2, size=n)
        b = np.diag(rng.uniform(0.70, 0.85, size=n))
        return a, b

    a, b = _rejection(
        draw, lambda ab: float(np.max(np.abs(np.linalg.eigvals(ab[0] + ab[1])))) < 1.0, "edcc"
    )
    nu = rng.uniform(0.02, 0.10, size=n)
    theta1, theta2 = _sample_theta(rng)
    return EdccParams(nu, a, b, gen_gamma(n, rng), theta1, theta2)


def fixed_intercept_factor(n: int) -> np.ndarray:
    """Cholesky factor of 0.05 * (0.7 I + 0.3 11'): unit-scale variances, 0.3 intercept correlation."""
    target = 0.05 * (0.7 * np.eye(n) + 0.3 * np.ones((n, n)))
    return np.linalg.cholesky(target)


FIXED_A_BLOCKS = np.array(
    [
        [0.025, 0.0125, 0.0],
        [0.0125, 0.0187, 0.025],
        [0.0187, 0.0125, 0.0312],
    ]
)
FIXED_B_BLOCK = np.array(
    [
        [0.80, 0.05, 0.05],
        [0.05, 0.80, 0.05],
        [0.05, 0.05, 0.80],
    ]
)


def fixed_fbekk_matrices_24() -> Tuple[np.ndarray, np.ndarray]:
    """(A, B) of the 24-asset full BEKK design: A block-constant over 8x8 blocks, B = I_8 kron B3."""
    a = np.kron(FIXED_A_BLOCKS, np.ones((8, 8)))
    b = np.kron(np.eye(8), FIXED_B_BLOCK)
    return a, b


def fixed_edcc_matrices_24() -> Tuple[np.ndarray, np.ndarray]:
    a = np.full((FIXED_DESIGN_ASSETS, FIXED_DESIGN_ASSETS), 0.05)
    np.fill_diagonal(a, 0.08)
    b = 0.80 * np.eye(FIXED_DESIGN_ASSETS)
    return a, b


def fixed_params_24(model_class: str, rng: Optional[np.random.Generator] = None) -> ModelParams:
    """Fixed 24-asset designs. Gamma is drawn with gen_gamma when rng is given, else 0.4 equicorrelation."""
    n = FIXED_DESIGN_ASSETS
    kind = model_class.lower()
    if kind == "sbekk":
        params: ModelParams = SBekkParams(c=fixed_intercept_factor(n), alpha=0.15, beta=0.80)
    elif kind == "fbekk":
        a, b = fixed_fbekk_matrices_24()
        params = FBekkParams(c=fixed_intercept_factor(n), a=a, b=b)
    elif kind in ("dcc", "edcc"):
        gamma = gen_gamma(n, rng) if rng is not None else equicorrelation(n, 0.4)
        if kind == "dcc":
            marginal = Garch11Params(0.05, 0.15, 0.80)
            params = DccParams((marginal,) * n, gamma, 0.15, 0.80)
        else:
            a, b = fixed_edcc_matrices_24()
            params = EdccParams(np.full(n, 0.05), a, b, gamma, 0.15, 0.80)
    else:
        raise ConfigurationError(f"unknown model class {model_class!r}", field="dgp.model_class")

    report = stationarity_check(params)
    if not report.ok:
        raise ConfigurationError(
            f"fixed {kind} design is not covariance stationary ({report.quantity}={report.binding:.4f})",
            field="dgp.model_class",
        )
    return params


def make_weights(scheme: str, n: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    if n < 1:
        raise InvalidInput("portfolio needs at least one asset")
    if scheme == "equal":
        return np.full(n, 1.0 / n)
    if scheme == "random":
        if rng is None:
            raise InvalidInput("random weights need a generator")
        draws = 1.0 - rng.random(n)  # (0, 1]
        return draws / draws.sum()
    raise InvalidInput(f"unknown weight scheme {scheme!r}")


@dataclass
class DgpSpec:
    model_class: str = "sbekk"
    n_assets: int = 9
    t_train: int = 500
    t_test: int = 250
    burn_in: int = 100
    weight_scheme: str = "equal"
    seed: int = 0
    # auto: fixed coefficients for 24 assets, random draws otherwise
    design: str = "auto"

    def __post_init__(self) -> None:
        if self.model_class not in MODEL_CLASSES:
            raise ConfigurationError(f"must be one of {MODEL_CLASSES}", field="dgp.model_class")
        if self.n_assets < 1:
            raise ConfigurationError("must be at least 1", field="dgp.n_assets")
        if self.t_train < 1:
            raise ConfigurationError("must be at least 1", field="dgp.t_train")
        if self.t_test < 1:
            raise ConfigurationError("must be at least 1", field="dgp.t_test")
        if self.burn_in < 0:
            raise ConfigurationError("must be nonnegative", field="dgp.burn_in")
        if self.weight_scheme not in WEIGHT_SCHEMES:
            raise ConfigurationError(f"must be one of {WEIGHT_SCHEMES}", field="dgp.weight_scheme")
        if self.design not in DESIGNS:
            raise ConfigurationError(f"must be one of {DESIGNS}", field="dgp.design")

    @property
    def fixed(self) -> bool:
        if self.design == "auto":
            return self.n_assets == FIXED_DESIGN_ASSETS
        return self.design == "fixed"


@dataclass
class SimulatedDataset:
    train_returns: np.ndarray
    test_returns: np.ndarray
    true_cov_path: np.ndarray
    weights: np.ndarray
    portfolio_returns: np.ndarray
    dgp_params: ModelParams
    train_cov_path: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def returns(self) -> np.ndarray:
        return np.vstack([self.train_returns, self.test_returns])


SAMPLERS = {
    "sbekk": sample_sbekk_params,
    "fbekk": sample_fbekk_params,
    "dcc": sample_dcc_params,
    "edcc": sample_edcc_params,
}


def draw_params(spec: DgpSpec, rng: np.random.Generator) -> ModelParams:
    if spec.fixed:
        if spec.n_assets != FIXED_DESIGN_ASSETS:
            raise ConfigurationError(
                f"fixed design is defined for {FIXED_DESIGN_ASSETS} assets", field="dgp.n_assets"
            )
        return fixed_params_24(spec.model_class, rng)
    return SAMPLERS[spec.model_class](spec.n_assets, rng)


def build_dataset(spec: DgpSpec, rng: Optional[np.random.Generator] = None) -> SimulatedDataset:
    """Simulate burn-in + train + test observations and split them; the burn-in is dropped."""
    rng = rng if rng is not None else make_rng(spec.seed)
    params = draw_params(spec, rng)
    weights = make_weights(spec.weight_scheme, spec.n_assets, rng)
    total = spec.burn_in + spec.t_train + spec.t_test
    returns, cov_path = simulate(params, total, rng)
    train_end = spec.burn_in + spec.t_train
    train = returns[spec.burn_in : train_end]
    test = returns[train_end:]
    kept = returns[spec.burn_in :]
    return SimulatedDataset(
        train_returns=train,
        test_returns=test,
        true_cov_path=cov_path[train_end:],
        weights=weights,
        portfolio_returns=kept @ weights,
        dgp_params=params,
        train_cov_path=cov_path[spec.burn_in : train_end],
    )
