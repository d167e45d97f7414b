import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, TypeVar

import numpy as np
import pandas as pd

from . import __version__
from .config import StudyConfig, config_hash, config_to_dict, multivariate_models, resolve_threads
from .data import FLOAT_FORMAT
from .dgp import build_dataset, make_rng
from .errors import InvalidInput, VolrecError
from .evaluation import loss_series, noisy_proxy_path, portfolio_variance
from .fitting import fit_model, forecast_path, run_filter
from .reconciliation import (
    VARIANCE_FLOOR,
    ErrorCovariance,
    insample_errors,
    make_base_forecasts,
    reconcile_approaches,
    shrink_cov,
)
from .summary import StudySummary, summarize

LOSS_COLUMNS = ["replication", "delta", "horizon", "model", "approach", "date", "loss_kind", "value"]
FAILURE_COLUMNS = ["replication", "period", "model", "stage", "asset", "error"]
DIAGNOSTIC_COLUMNS = [
    "replication",
    "period",
    "model",
    "dates",
    "shr_violations",
    "shr_A_fallbacks",
    "clamped",
    "floored",
    "shrinkage_intensity",
]
MATRIX_COLUMNS = ["replication", "model", "approach", "date", "i", "j", "value"]

LOSSES_FILE = "losses.csv"
FAILURES_FILE = "failures.csv"
DIAGNOSTICS_FILE = "diagnostics.csv"
MATRICES_FILE = "matrices.csv"
MANIFEST_FILE = "manifest.json"

T = TypeVar("T")
R = TypeVar("R")


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _read_csv(path: Path, columns: Sequence[str]) -> pd.DataFrame:
    if not path.is_file():
        return pd.DataFrame(columns=list(columns))
    return pd.read_csv(path, float_precision="round_trip")


@dataclass
class ResultStore:
    losses: pd.DataFrame
    failures: pd.DataFrame
    diagnostics: pd.DataFrame
    manifest: Dict[str, Any]
    matrices: Optional[pd.DataFrame] = None
    summary: Optional[StudySummary] = None

    @property
    def failure_count(self) -> int:
        return len(self.failures)

    def write(self, directory) -> Path:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(self.losses, out / LOSSES_FILE)
        _write_csv(self.failures, out / FAILURES_FILE)
        _write_csv(self.diagnostics, out / DIAGNOSTICS_FILE)
        if self.matrices is not None:
            _write_csv(self.matrices, out / MATRICES_FILE)
        if self.summary is not None:
            self.summary.write(out)
        (out / MANIFEST_FILE).write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logging.info("Wrote results directory=%s records=%s failures=%s", out, len(self.losses), self.failure_count)
        return out

    @classmethod
    def read(cls, directory) -> "ResultStore":
        out = Path(directory)
        manifest_path = out / MANIFEST_FILE
        if not manifest_path.is_file():
            raise InvalidInput(f"{out} holds no {MANIFEST_FILE}")
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        matrices = _read_csv(out / MATRICES_FILE, MATRIX_COLUMNS) if (out / MATRICES_FILE).is_file() else None
        return cls(
            losses=_read_csv(out / LOSSES_FILE, LOSS_COLUMNS),
            failures=_read_csv(out / FAILURES_FILE, FAILURE_COLUMNS),
            diagnostics=_read_csv(out / DIAGNOSTICS_FILE, DIAGNOSTIC_COLUMNS),
            manifest=manifest,
            matrices=matrices,
        )


@dataclass
class ReconciledForecasts:
    """Portfolio variance per approach for a run of dates, plus activation counts."""

    sigma_p2: Dict[str, np.ndarray]
    shr_violations: int = 0
    shr_a_fallbacks: int = 0
    clamped: int = 0
    matrices: List[Dict[str, Any]] = field(default_factory=list)


def reconcile_dates(
    univariate,
    covariances,
    omega: ErrorCovariance,
    weights: np.ndarray,
    approaches: Sequence[str],
    keep_matrices: bool = False,
) -> ReconciledForecasts:
    univariate = np.asarray(univariate, dtype=float)
    covariances = np.asarray(covariances, dtype=float)
    m = univariate.shape[0]
    out = ReconciledForecasts({approach: np.empty(m) for approach in approaches})
    rows, cols = np.tril_indices(covariances.shape[1])
    for t in range(m):
        base = make_base_forecasts(univariate[t], covariances[t])
        results = reconcile_approaches(base, omega, weights)
        out.clamped += base.clamped
        if not results["shr"].correlation_ok:
            out.shr_violations += 1
            if results["shr_A"].diagnostics.get("fallback_from"):
                out.shr_a_fallbacks += 1
        for approach in approaches:
            result = results[approach]
            out.sigma_p2[approach][t] = result.sigma_p2
            if keep_matrices:
                out.matrices.append(
                    {"approach": approach, "date": t, "i": rows + 1, "j": cols + 1, "value": result.sigma_tilde[rows, cols]}
                )
    return out


def floor_forecasts(forecasts: Dict[str, np.ndarray]) -> int:
    """Raise nonpositive portfolio variance forecasts to VARIANCE_FLOOR in place."""
    floored = 0
    for values in forecasts.values():
        low = ~(values > 0)
        floored += int(low.sum())
        values[low] = VARIANCE_FLOOR
    if floored:
        logging.warning("Floored nonpositive reconciled forecasts count=%s floor=%s", floored, VARIANCE_FLOOR)
    return floored


def loss_frame(
    truth: np.ndarray,
    forecasts: Dict[str, np.ndarray],
    loss_kinds: Sequence[str],
    dates,
    **labels: Any,
) -> pd.DataFrame:
    frames = []
    for kind in loss_kinds:
        for approach, forecast in forecasts.items():
            frame = pd.DataFrame({"date": dates, "value": loss_series(truth, forecast, kind)})
            frame["approach"] = approach
            frame["loss_kind"] = kind
            for key, value in labels.items():
                frame[key] = value
            frames.append(frame)
    return pd.concat(frames, ignore_index=True)[LOSS_COLUMNS]


def failure_record(replication: int, model: str, exc: VolrecError, period: str = "") -> Dict[str, Any]:
    return {
        "replication": replication,
        "period": period,
        "model": model,
        "stage": getattr(exc, "stage", type(exc).__name__),
        "asset": getattr(exc, "asset", None),
        "error": str(exc),
    }


def map_ordered(fn: Callable[[T], R], items: Iterable[T], threads: int) -> List[R]:
    """Apply fn to every item, in item order, serially or on a process pool."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass
class ReplicationOutput:
    replication: int
    losses: Optional[pd.DataFrame] = None
    failure: Optional[Dict[str, Any]] = None
    diagnostics: List[Dict[str, Any]] = field(default_factory=list)
    matrices: Optional[pd.DataFrame] = None


def _matrix_frame(replication: int, model: str, matrices: List[Dict[str, Any]]) -> pd.DataFrame:
    frames = [pd.DataFrame(entry) for entry in matrices]
    frame = pd.concat(frames, ignore_index=True)
    frame["replication"] = replication
    frame["model"] = model
    return frame[MATRIX_COLUMNS]


def _replication(config: StudyConfig, replication: int) -> ReplicationOutput:
    spec = config.dgp
    dataset = build_dataset(spec, make_rng(config.master_seed, replication))
    t_train = spec.t_train
    returns = dataset.returns
    portfolio = dataset.portfolio_returns
    weights = dataset.weights
    targets = np.arange(t_train, returns.shape[0])
    dates = np.arange(spec.t_test)

    truths = {0.0: portfolio_variance(dataset.true_cov_path, weights)}
    for delta in config.delta_grid:
        proxy = noisy_proxy_path(dataset.test_returns, dataset.true_cov_path, delta)
        truths[float(delta)] = portfolio_variance(proxy, weights)

    output = ReplicationOutput(replication)
    model = "garch"
    try:
        garch = fit_model("garch", portfolio[:t_train])
        uni_out = run_filter(garch, portfolio, t_train)
        uni_in = uni_out.sigma_path[:t_train]
        uni_test = forecast_path(garch, uni_out, targets, 1)

        frames, matrix_frames = [], []
        for model in multivariate_models(config.fitted_models):
            params = fit_model(model, dataset.train_returns)
            out = run_filter(params, returns, t_train)
            errors = insample_errors(uni_in, out.sigma_path[:t_train], dataset.train_returns, weights)
            omega = shrink_cov(errors)
            covariances = forecast_path(params, out, targets, 1)
            reconciled = reconcile_dates(uni_test, covariances, omega, weights, config.approaches, config.dump_matrices)
            floored = floor_forecasts(reconciled.sigma_p2)
            for delta, truth in truths.items():
                frames.append(
                    loss_frame(
                        truth,
                        reconciled.sigma_p2,
                        config.loss_kinds,
                        dates,
                        replication=replication,
                        delta=delta,
                        horizon=1,
                        model=model,
                    )
                )
            output.diagnostics.append(
                {
                    "replication": replication,
                    "period": "",
                    "model": model,
                    "dates": len(dates),
                    "shr_violations": reconciled.shr_violations,
                    "shr_A_fallbacks": reconciled.shr_a_fallbacks,
                    "clamped": reconciled.clamped,
                    "floored": floored,
                    "shrinkage_intensity": omega.shrinkage_intensity,
                }
            )
            if config.dump_matrices:
                matrix_frames.append(_matrix_frame(replication, model, reconciled.matrices))
    except VolrecError as exc:
        logging.warning(
            "Replication failed replication=%s model=%s stage=%s error=%s",
            replication,
            model,
            getattr(exc, "stage", type(exc).__name__),
            exc,
        )
        return ReplicationOutput(replication, failure=failure_record(replication, model, exc))

    output.losses = pd.concat(frames, ignore_index=True)
    if matrix_frames:
        output.matrices = pd.concat(matrix_frames, ignore_index=True)
    return output


def run_replication(config: StudyConfig, replication: int) -> ReplicationOutput:
    """One replication: simulate, fit, forecast the test dates, reconcile and score.

    Estimation and numerical failures are caught and returned as a failure
    record so the study carries on with the remaining replications.
    """
    try:
        return _replication(config, replication)
    except VolrecError as exc:
        logging.warning("Replication failed replication=%s stage=dgp error=%s", replication, exc)
        return ReplicationOutput(replication, failure=failure_record(replication, "dgp", exc))


def build_manifest(config, kind: str, threads: int, failures: int, wall_time: float, **extra: Any) -> Dict[str, Any]:
    manifest = {
        "kind": kind,
        "version": __version__,
        "config": config_to_dict(config),
        "config_hash": config_hash(config),
        "master_seed": config.master_seed,
        "threads": threads,
        "failure_count": failures,
        "wall_time_seconds": round(wall_time, 3),
    }
    manifest.update(extra)
    return manifest


def collect(outputs: Sequence[ReplicationOutput]) -> Dict[str, pd.DataFrame]:
    losses = [o.losses for o in outputs if o.losses is not None]
    matrices = [o.matrices for o in outputs if o.matrices is not None]
    return {
        "losses": pd.concat(losses, ignore_index=True) if losses else pd.DataFrame(columns=LOSS_COLUMNS),
        "failures": pd.DataFrame([o.failure for o in outputs if o.failure], columns=FAILURE_COLUMNS),
        "diagnostics": pd.DataFrame([d for o in outputs for d in o.diagnostics], columns=DIAGNOSTIC_COLUMNS),
        "matrices": pd.concat(matrices, ignore_index=True) if matrices else None,
    }


def run_simulation_study(config: StudyConfig, threads: Optional[int] = None) -> ResultStore:
    started = time.perf_counter()
    workers = resolve_threads(threads, config.threads)
    logging.info(
        "Starting simulation study dgp=%s n_assets=%s replications=%s models=%s threads=%s",
        config.dgp.model_class,
        config.dgp.n_assets,
        config.q_replications,
        ",".join(config.fitted_models),
        workers,
    )
    outputs = map_ordered(partial(run_replication, config), range(config.q_replications), workers)
    parts = collect(outputs)
    failures = len(parts["failures"])
    store = ResultStore(
        losses=parts["losses"],
        failures=parts["failures"],
        diagnostics=parts["diagnostics"],
        manifest=build_manifest(
            config,
            "simulation",
            workers,
            failures,
            time.perf_counter() - started,
            replications=config.q_replications,
            completed=config.q_replications - failures,
        ),
        matrices=parts["matrices"],
    )
    if failures == config.q_replications:
        logging.warning("Every replication failed replications=%s", failures)
    else:
        store.summary = summarize(store)
    logging.info(
        "Finished simulation study completed=%s failures=%s seconds=%.1f",
        config.q_replications - failures,
        failures,
        time.perf_counter() - started,
    )
    return store
