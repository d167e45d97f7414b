from dataclasses import dataclass, field
from functools import singledispatch
from typing import Optional, Tuple, Union

import numpy as np

from .errors import InvalidInput
from .matrix import duplication, duplication_pinv, symmetrize


@dataclass(frozen=True)
class Garch11Params:
    omega: float
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not self.omega > 0:
            raise InvalidInput(f"omega must be positive, got {self.omega}")
        if self.alpha < 0 or self.beta < 0:
            raise InvalidInput(f"alpha and beta must be nonnegative, got {self.alpha}, {self.beta}")

    @property
    def persistence(self) -> float:
        return self.alpha + self.beta

    @property
    def stationary(self) -> bool:
        return self.persistence < 1.0

    @property
    def unconditional_variance(self) -> float:
        if not self.stationary:
            raise InvalidInput("unconditional variance undefined when alpha + beta >= 1")
        return self.omega / (1.0 - self.persistence)


def _lower_triangular(c: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(c, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise InvalidInput(f"{name} must be square")
    if np.any(np.triu(arr, 1) != 0):
        raise InvalidInput(f"{name} must be lower triangular")
    if np.any(np.diag(arr) <= 0):
        raise InvalidInput(f"{name} must have a positive diagonal")
    return arr


@dataclass(frozen=True, eq=False)
class SBekkParams:
    c: np.ndarray
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "c", _lower_triangular(self.c, "c"))
        if self.alpha < 0 or self.beta < 0:
            raise InvalidInput("alpha and beta must be nonnegative")

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def intercept(self) -> np.ndarray:
        return self.c @ self.c.T

    @property
    def stationary(self) -> bool:
        return self.alpha + self.beta < 1.0


@dataclass(frozen=True, eq=False)
class FBekkParams:
    c: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self) -> None:
        c = _lower_triangular(self.c, "c")
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.shape != c.shape or b.shape != c.shape:
            raise InvalidInput("c, a and b must share one square shape")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def intercept(self) -> np.ndarray:
        return self.c @ self.c.T

    def companion(self) -> np.ndarray:
        """P(A kron A)D + P(B kron B)D, the vech-space transition of the recursion."""
        p = duplication_pinv(self.n)
        d = duplication(self.n)
        return p @ np.kron(self.a, self.a) @ d + p @ np.kron(self.b, self.b) @ d

    @property
    def stationary(self) -> bool:
        return spectral_radius(self.companion()) < 1.0


def _correlation_target(gamma: np.ndarray) -> np.ndarray:
    g = symmetrize(gamma)
    if np.max(np.abs(np.diag(g) - 1.0)) > 1e-12:
        raise InvalidInput("gamma must have a unit diagonal")
    if np.linalg.eigvalsh(g)[0] <= 0:
        raise InvalidInput("gamma must be positive definite")
    return g


def _check_dcc_dynamics(theta1: float, theta2: float) -> None:
    if theta1 < 0 or theta2 < 0:
        raise InvalidInput("theta1 and theta2 must be nonnegative")
    if theta1 + theta2 >= 1:
        raise InvalidInput(f"theta1 + theta2 must be below 1, got {theta1 + theta2}")


@dataclass(frozen=True, eq=False)
class DccParams:
    marginals: Tuple[Garch11Params, ...]
    gamma: np.ndarray
    theta1: float
    theta2: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "marginals", tuple(self.marginals))
        gamma = _correlation_target(self.gamma)
        if gamma.shape[0] != len(self.marginals):
            raise InvalidInput("gamma dimension must match the number of marginals")
        object.__setattr__(self, "gamma", gamma)
        _check_dcc_dynamics(self.theta1, self.theta2)

    @property
    def n(self) -> int:
        return len(self.marginals)

    @property
    def stationary(self) -> bool:
        return self.theta1 + self.theta2 < 1 and all(m.stationary for m in self.marginals)


@dataclass(frozen=True, eq=False)
class EdccParams:
    nu: np.ndarray
    a: np.ndarray
    b: np.ndarray
    gamma: np.ndarray
    theta1: float
    theta2: float

    def __post_init__(self) -> None:
        nu = np.asarray(self.nu, dtype=float).ravel()
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        n = nu.shape[0]
        if a.shape != (n, n) or b.shape != (n, n):
            raise InvalidInput("a and b must be n x n with n = len(nu)")
        if np.any(nu <= 0):
            raise InvalidInput("nu must be strictly positive")
        if np.any(a < 0) or np.any(b < 0):
            raise InvalidInput("a and b must be nonnegative")
        if np.any(b != np.diag(np.diag(b))):
            raise InvalidInput("b must be diagonal")
        gamma = _correlation_target(self.gamma)
        if gamma.shape[0] != n:
            raise InvalidInput("gamma dimension must match nu")
        _check_dcc_dynamics(self.theta1, self.theta2)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "gamma", gamma)

    @property
    def n(self) -> int:
        return self.nu.shape[0]

    @property
    def stationary(self) -> bool:
        return spectral_radius(self.a + self.b) < 1 and self.theta1 + self.theta2 < 1


ModelParams = Union[Garch11Params, SBekkParams, FBekkParams, DccParams, EdccParams]


@dataclass
class FilterOutput:
    """Conditional (co)variances for every observation plus the one-step-ahead state.

    sigma_path[t] is the conditional (co)variance of returns[t] given the past;
    next_sigma is the forecast for the observation after the last return.
    """

    sigma_path: np.ndarray
    next_sigma: np.ndarray
    loglik: float
    std_residuals: Optional[np.ndarray] = None
    q_path: Optional[np.ndarray] = None
    next_q: Optional[np.ndarray] = None
    var_path: Optional[np.ndarray] = None
    next_var: Optional[np.ndarray] = None


@dataclass(frozen=True)
class StationarityReport:
    ok: bool
    binding: float
    quantity: str
    details: dict = field(default_factory=dict)


def spectral_radius(m: np.ndarray) -> float:
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


@singledispatch
def stationarity_check(params) -> StationarityReport:
    raise InvalidInput(f"unsupported parameter type {type(params).__name__}")


@stationarity_check.register
def _(params: Garch11Params) -> StationarityReport:
    total = params.persistence
    return StationarityReport(total < 1.0, total, "alpha+beta")


@stationarity_check.register
def _(params: SBekkParams) -> StationarityReport:
    total = params.alpha + params.beta
    return StationarityReport(total < 1.0, total, "alpha+beta")


@stationarity_check.register
def _(params: FBekkParams) -> StationarityReport:
    radius = spectral_radius(params.companion())
    return StationarityReport(radius < 1.0, radius, "max|eig(P(AxA)D+P(BxB)D)|")


@stationarity_check.register
def _(params: DccParams) -> StationarityReport:
    marginal = max(m.persistence for m in params.marginals)
    dynamic = params.theta1 + params.theta2
    binding = max(marginal, dynamic)
    return StationarityReport(
        binding < 1.0,
        binding,
        "max(theta1+theta2, alpha_i+beta_i)",
        {"theta_sum": dynamic, "max_marginal_persistence": marginal},
    )


@stationarity_check.register
def _(params: EdccParams) -> StationarityReport:
    radius = spectral_radius(params.a + params.b)
    dynamic = params.theta1 + params.theta2
    binding = max(radius, dynamic)
    return StationarityReport(
        binding < 1.0,
        binding,
        "max(max|eig(A+B)|, theta1+theta2)",
        {"theta_sum": dynamic, "variance_radius": radius},
    )
