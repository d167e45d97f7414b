"""Model registry shared by the experiment pipelines.

Parameters are estimated on a fitting window, then a single filter pass over
the fitting window plus the evaluation dates yields every one-step-ahead
state; h-step forecasts iterate those states in expectation.
"""

from functools import singledispatch
from typing import Callable, Dict, Tuple

import numpy as np

from .bekk import fbekk_filter, fbekk_iterate, initial_covariance, sbekk_filter, sbekk_fit, sbekk_iterate
from .dcc import dcc_filter, dcc_fit, dcc_iterate, edcc_filter, edcc_fit, edcc_iterate
from .errors import InvalidInput
from .garch import garch11_filter, garch11_fit, garch11_iterate, initial_variance
from .params import (
    DccParams,
    EdccParams,
    FBekkParams,
    FilterOutput,
    Garch11Params,
    ModelParams,
    SBekkParams,
)

MODEL_FITTERS: Dict[str, Callable[[np.ndarray], ModelParams]] = {
    "garch": garch11_fit,
    "sbekk": sbekk_fit,
    "dcc": dcc_fit,
    "edcc": edcc_fit,
}


def fit_model(kind: str, returns) -> ModelParams:
    try:
        fitter = MODEL_FITTERS[kind]
    except KeyError:
        raise InvalidInput(f"unknown model {kind!r}, expected one of {sorted(MODEL_FITTERS)}") from None
    return fitter(returns)


def _fit_window(returns, fit_obs: int) -> np.ndarray:
    r = np.asarray(returns, dtype=float)
    if not 1 <= fit_obs <= r.shape[0]:
        raise InvalidInput(f"fit_obs must lie in 1..{r.shape[0]}, got {fit_obs}")
    return r[:fit_obs]


@singledispatch
def run_filter(params, returns, fit_obs: int) -> FilterOutput:
    """Filter all of `returns`, initialized from the first `fit_obs` observations."""
    raise InvalidInput(f"unsupported parameter type {type(params).__name__}")


@run_filter.register
def _(params: Garch11Params, returns, fit_obs: int) -> FilterOutput:
    return garch11_filter(params, returns, initial_variance(_fit_window(returns, fit_obs)))


@run_filter.register
def _(params: SBekkParams, returns, fit_obs: int) -> FilterOutput:
    return sbekk_filter(params, returns, initial_covariance(_fit_window(returns, fit_obs)))


@run_filter.register
def _(params: FBekkParams, returns, fit_obs: int) -> FilterOutput:
    return fbekk_filter(params, returns, initial_covariance(_fit_window(returns, fit_obs)))


@run_filter.register
def _(params: DccParams, returns, fit_obs: int) -> FilterOutput:
    window = _fit_window(returns, fit_obs)
    return dcc_filter(params, returns, np.mean(window * window, axis=0))


@run_filter.register
def _(params: EdccParams, returns, fit_obs: int) -> FilterOutput:
    window = _fit_window(returns, fit_obs)
    return edcc_filter(params, returns, np.mean(window * window, axis=0))


def _with_next(path: np.ndarray, nxt: np.ndarray) -> np.ndarray:
    return np.concatenate([path, np.expand_dims(nxt, 0)], axis=0)


@singledispatch
def _one_step_states(params, out: FilterOutput) -> Tuple[np.ndarray, ...]:
    return (_with_next(out.sigma_path, out.next_sigma),)


@_one_step_states.register(DccParams)
@_one_step_states.register(EdccParams)
def _(params, out: FilterOutput) -> Tuple[np.ndarray, ...]:
    return _with_next(out.var_path, out.next_var), _with_next(out.q_path, out.next_q)


@singledispatch
def _iterate(params, states: Tuple[np.ndarray, ...], steps: int) -> np.ndarray:
    raise InvalidInput(f"unsupported parameter type {type(params).__name__}")


@_iterate.register
def _(params: Garch11Params, states, steps: int) -> np.ndarray:
    return garch11_iterate(params, states[0], steps)


@_iterate.register
def _(params: SBekkParams, states, steps: int) -> np.ndarray:
    return sbekk_iterate(params, states[0], steps)


@_iterate.register
def _(params: FBekkParams, states, steps: int) -> np.ndarray:
    return fbekk_iterate(params, states[0], steps)


@_iterate.register
def _(params: DccParams, states, steps: int) -> np.ndarray:
    return dcc_iterate(params, states[0], states[1], steps)


@_iterate.register
def _(params: EdccParams, states, steps: int) -> np.ndarray:
    return edcc_iterate(params, states[0], states[1], steps)


def forecast_path(params: ModelParams, out: FilterOutput, targets, horizon: int) -> np.ndarray:
    """Forecasts of each target observation issued `horizon` periods earlier.

    Target t uses returns up to t - horizon. Index len(returns) is the first
    observation after the filtered sample.
    """
    if horizon < 1:
        raise InvalidInput("horizon must be at least 1")
    targets = np.asarray(targets, dtype=int)
    states = _one_step_states(params, out)
    origin = targets - horizon + 1
    if origin.size and (origin.min() < 0 or origin.max() >= states[0].shape[0]):
        raise InvalidInput("forecast targets fall outside the filtered sample")
    return _iterate(params, tuple(s[origin] for s in states), horizon - 1)


@singledispatch
def params_to_dict(params) -> dict:
    raise InvalidInput(f"unsupported parameter type {type(params).__name__}")


@params_to_dict.register
def _(params: Garch11Params) -> dict:
    return {"model": "garch", "omega": params.omega, "alpha": params.alpha, "beta": params.beta}


@params_to_dict.register
def _(params: SBekkParams) -> dict:
    return {"model": "sbekk", "c": params.c.tolist(), "alpha": params.alpha, "beta": params.beta}


@params_to_dict.register
def _(params: FBekkParams) -> dict:
    return {"model": "fbekk", "c": params.c.tolist(), "a": params.a.tolist(), "b": params.b.tolist()}


@params_to_dict.register
def _(params: DccParams) -> dict:
    return {
        "model": "dcc",
        "marginals": [params_to_dict(m) for m in params.marginals],
        "gamma": params.gamma.tolist(),
        "theta1": params.theta1,
        "theta2": params.theta2,
    }


@params_to_dict.register
def _(params: EdccParams) -> dict:
    return {
        "model": "edcc",
        "nu": params.nu.tolist(),
        "a": params.a.tolist(),
        "b": params.b.tolist(),
        "gamma": params.gamma.tolist(),
        "theta1": params.theta1,
        "theta2": params.theta2,
    }
