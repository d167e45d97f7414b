import logging
import time
from dataclasses import dataclass
from functools import partial
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .config import RealDataConfig, multivariate_models, resolve_threads
from .data import DATE_FORMAT, ingest_realized_cov, ingest_returns
from .dgp import make_rng, make_weights
from .errors import ConfigurationError, VolrecError
from .evaluation import portfolio_variance
from .fitting import fit_model, forecast_path, run_filter
from .reconciliation import insample_errors, shrink_cov
from .study import (
    DIAGNOSTIC_COLUMNS,
    ReplicationOutput,
    ResultStore,
    build_manifest,
    collect,
    failure_record,
    floor_forecasts,
    loss_frame,
    map_ordered,
    reconcile_dates,
)
from .summary import summarize


def month_blocks(dates: pd.DatetimeIndex, first: int) -> List[Tuple[int, int]]:
    """[start, end) positions of consecutive calendar months, starting at `first`."""
    months = np.asarray(dates.year * 12 + dates.month)
    starts = [first] + [int(t) for t in np.flatnonzero(months[first + 1 :] != months[first:-1]) + first + 1]
    ends = starts[1:] + [len(dates)]
    return list(zip(starts, ends))


@dataclass
class MonthTask:
    """Data one re-estimation needs: the fitting window followed by the month's targets."""

    start: int
    end: int
    offset: int
    returns: np.ndarray
    proxies: np.ndarray
    labels: np.ndarray


def _month_tasks(
    returns: np.ndarray, proxies: np.ndarray, dates: pd.DatetimeIndex, window: int, horizons: List[int]
) -> List[MonthTask]:
    labels = np.asarray(dates.strftime(DATE_FORMAT))
    longest = max(horizons)
    tasks = []
    for start, end in month_blocks(dates, window):
        offset = start - window
        stop = min(end + longest - 1, len(dates))
        tasks.append(
            MonthTask(start, end, offset, returns[offset:end], proxies[offset:stop], labels[offset:stop])
        )
    return tasks


def _forecast_month(config: RealDataConfig, weights: np.ndarray, task: MonthTask) -> ReplicationOutput:
    window = config.window_length
    period = str(task.labels[window])
    portfolio = task.returns @ weights
    output = ReplicationOutput(0)
    frames = []
    model = "garch"
    try:
        garch = fit_model("garch", portfolio[:window])
        uni_out = run_filter(garch, portfolio, window)
        in_sample_proxy = task.proxies[:window]
        for model in multivariate_models(config.fitted_models):
            params = fit_model(model, task.returns[:window])
            out = run_filter(params, task.returns, window)
            errors = insample_errors(uni_out.sigma_path[:window], out.sigma_path[:window], in_sample_proxy, weights)
            omega = shrink_cov(errors)
            for horizon in config.horizons:
                issued = np.arange(window, window + task.end - task.start)
                targets = issued + horizon - 1
                targets = targets[targets < task.proxies.shape[0]]
                if targets.size == 0:
                    continue
                univariate = forecast_path(garch, uni_out, targets, horizon)
                covariances = forecast_path(params, out, targets, horizon)
                reconciled = reconcile_dates(univariate, covariances, omega, weights, config.approaches)
                floored = floor_forecasts(reconciled.sigma_p2)
                truth = portfolio_variance(task.proxies[targets], weights)
                frames.append(
                    loss_frame(
                        truth,
                        reconciled.sigma_p2,
                        config.loss_kinds,
                        task.labels[targets],
                        replication=0,
                        delta=np.nan,
                        horizon=horizon,
                        model=model,
                    )
                )
                output.diagnostics.append(
                    {
                        "replication": 0,
                        "period": f"{period}/h{horizon}",
                        "model": model,
                        "dates": int(targets.size),
                        "shr_violations": reconciled.shr_violations,
                        "shr_A_fallbacks": reconciled.shr_a_fallbacks,
                        "clamped": reconciled.clamped,
                        "floored": floored,
                        "shrinkage_intensity": omega.shrinkage_intensity,
                    }
                )
    except VolrecError as exc:
        logging.warning(
            "Re-estimation failed period=%s model=%s stage=%s error=%s",
            period,
            model,
            getattr(exc, "stage", type(exc).__name__),
            exc,
        )
        output.failure = failure_record(0, model, exc, period=period)
    if frames:
        output.losses = pd.concat(frames, ignore_index=True)
    return output


def run_real_data(config: RealDataConfig, threads: Optional[int] = None) -> ResultStore:
    """Rolling-window forecast comparison on observed returns.

    Parameters are re-estimated on the most recent `window_length`
    observations at the first date of every month and kept fixed while
    forecasts are issued for each date of that month at every horizon.
    """
    started = time.perf_counter()
    workers = resolve_threads(threads, config.threads)
    table = ingest_returns(config.returns_path, demean=config.demean)
    total, n = table.values.shape
    if config.window_length >= total:
        raise ConfigurationError(
            f"{config.window_length} exceeds the {total - 1} observations available before the last date",
            field="window_length",
        )
    if config.realized_cov_path:
        proxies = ingest_realized_cov(config.realized_cov_path, table.dates, n)
        proxy_kind = "realized"
    else:
        proxies = table.values[:, :, None] * table.values[:, None, :]
        proxy_kind = "outer_product"
    weights = make_weights(config.weight_scheme, n, make_rng(config.master_seed))
    tasks = _month_tasks(table.values, proxies, table.dates, config.window_length, list(config.horizons))
    logging.info(
        "Starting real-data study dates=%s assets=%s months=%s first_forecast=%s proxy=%s threads=%s",
        total,
        n,
        len(tasks),
        table.dates[config.window_length].strftime(DATE_FORMAT),
        proxy_kind,
        workers,
    )
    outputs = map_ordered(partial(_forecast_month, config, weights), tasks, workers)
    parts = collect(outputs)
    extra: Dict[str, Any] = {
        "months": len(tasks),
        "first_forecast": table.dates[config.window_length].strftime(DATE_FORMAT),
        "proxy": proxy_kind,
        "weights": weights.tolist(),
    }
    store = ResultStore(
        losses=parts["losses"],
        failures=parts["failures"],
        diagnostics=parts["diagnostics"].reindex(columns=DIAGNOSTIC_COLUMNS),
        manifest=build_manifest(
            config, "realdata", workers, len(parts["failures"]), time.perf_counter() - started, **extra
        ),
    )
    if store.losses.empty:
        logging.warning("No forecasts survived re-estimation months=%s", len(tasks))
    else:
        store.summary = summarize(store)
    return store
