import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from .dgp import DgpSpec
from .errors import ConfigurationError
from .evaluation import LOSS_KINDS, MCS_LEVELS
from .reconciliation import APPROACHES

# the univariate GARCH base forecast is always fitted; listing "garch" is accepted
FITTED_MODELS = ("garch", "sbekk", "dcc", "edcc")
DEFAULT_THREADS = 1
DEFAULT_OUTPUT_DIR = "results"


@dataclass
class StudyConfig:
    dgp: DgpSpec = field(default_factory=DgpSpec)
    fitted_models: List[str] = field(default_factory=lambda: ["sbekk"])
    approaches: List[str] = field(default_factory=lambda: list(APPROACHES))
    q_replications: int = 1
    # true-covariance evaluation is always included; the grid adds noisy proxies
    delta_grid: List[float] = field(default_factory=list)
    loss_kinds: List[str] = field(default_factory=lambda: list(LOSS_KINDS))
    master_seed: int = 0
    output_dir: Optional[str] = None
    threads: Optional[int] = None
    hac_lags: int = 0
    mcs_levels: List[float] = field(default_factory=lambda: list(MCS_LEVELS))
    mcs_bootstrap: int = 1000
    mcs_block_length: int = 12
    dump_matrices: bool = False

    def __post_init__(self) -> None:
        _check_choices(self.fitted_models, FITTED_MODELS, "fitted_models")
        _check_choices(self.approaches, APPROACHES, "approaches")
        _check_choices(self.loss_kinds, LOSS_KINDS, "loss_kinds")
        if self.q_replications < 1:
            raise ConfigurationError("must be at least 1", field="q_replications")
        for i, delta in enumerate(self.delta_grid):
            if not 0.0 < delta <= 1.0:
                raise ConfigurationError(f"{delta} is outside (0, 1]", field=f"delta_grid[{i}]")
        _check_multivariate(self.fitted_models)
        _check_common(self)
        if self.dgp.fixed and self.dgp.model_class == "edcc":
            raise ConfigurationError(
                "the fixed 24-asset spillover design is not covariance stationary", field="dgp.model_class"
            )


@dataclass
class RealDataConfig:
    returns_path: str = ""
    realized_cov_path: Optional[str] = None
    window_length: int = 1500
    horizons: List[int] = field(default_factory=lambda: [1, 5, 22])
    weight_scheme: str = "equal"
    fitted_models: List[str] = field(default_factory=lambda: ["sbekk", "dcc"])
    approaches: List[str] = field(default_factory=lambda: list(APPROACHES))
    loss_kinds: List[str] = field(default_factory=lambda: list(LOSS_KINDS))
    demean: bool = True
    master_seed: int = 0
    output_dir: Optional[str] = None
    threads: Optional[int] = None
    # None: horizon - 1
    hac_lags: Optional[int] = None
    mcs_levels: List[float] = field(default_factory=lambda: list(MCS_LEVELS))
    mcs_bootstrap: int = 1000
    mcs_block_length: int = 12

    def __post_init__(self) -> None:
        if not self.returns_path:
            raise ConfigurationError("is required", field="returns_path")
        if self.window_length < 100:
            raise ConfigurationError("must be at least 100", field="window_length")
        if not self.horizons:
            raise ConfigurationError("must list at least one horizon", field="horizons")
        for i, h in enumerate(self.horizons):
            if not isinstance(h, int) or h < 1:
                raise ConfigurationError(f"{h} is not a positive integer", field=f"horizons[{i}]")
        if self.weight_scheme not in ("equal", "random"):
            raise ConfigurationError("must be 'equal' or 'random'", field="weight_scheme")
        _check_choices(self.fitted_models, FITTED_MODELS, "fitted_models")
        _check_choices(self.approaches, APPROACHES, "approaches")
        _check_multivariate(self.fitted_models)
        _check_choices(self.loss_kinds, LOSS_KINDS, "loss_kinds")
        _check_common(self)


def _check_choices(values: List[str], allowed, name: str) -> None:
    if not values:
        raise ConfigurationError("must not be empty", field=name)
    for i, value in enumerate(values):
        if value not in allowed:
            raise ConfigurationError(f"{value!r} is not one of {list(allowed)}", field=f"{name}[{i}]")


def _check_multivariate(models: List[str]) -> None:
    if not any(model != "garch" for model in models):
        raise ConfigurationError("must name at least one multivariate model", field="fitted_models")


def multivariate_models(models: List[str]) -> List[str]:
    return [model for model in models if model != "garch"]


def _check_common(config) -> None:
    if config.hac_lags is not None and config.hac_lags < 0:
        raise ConfigurationError("must be nonnegative", field="hac_lags")
    for i, level in enumerate(config.mcs_levels):
        if not 0.0 < level < 1.0:
            raise ConfigurationError(f"{level} is outside (0, 1)", field=f"mcs_levels[{i}]")
    if config.mcs_bootstrap < 1:
        raise ConfigurationError("must be at least 1", field="mcs_bootstrap")
    if config.mcs_block_length < 1:
        raise ConfigurationError("must be at least 1", field="mcs_block_length")
    if config.threads is not None and config.threads < 1:
        raise ConfigurationError("must be at least 1", field="threads")


def _build(cls, raw: Any, prefix: str = ""):
    if not isinstance(raw, dict):
        raise ConfigurationError("expected an object", field=prefix.rstrip(".") or None)
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs: Dict[str, Any] = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigurationError("unknown key", field=f"{prefix}{key}")
        if key == "dgp" and cls is StudyConfig:
            value = _build(DgpSpec, value, "dgp.")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc), field=prefix.rstrip(".") or None) from exc


def study_config_from_dict(raw: Dict[str, Any]) -> StudyConfig:
    return _build(StudyConfig, raw)


def realdata_config_from_dict(raw: Dict[str, Any]) -> RealDataConfig:
    return _build(RealDataConfig, raw)


def read_config_file(path: str) -> Dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError("top level of the config must be an object")
    return raw


def load_study_config(path: str) -> StudyConfig:
    return study_config_from_dict(read_config_file(path))


def load_realdata_config(path: str) -> RealDataConfig:
    return realdata_config_from_dict(read_config_file(path))


def config_to_dict(config) -> Dict[str, Any]:
    return dataclasses.asdict(config)


def config_hash(config) -> str:
    """sha256 of the canonical JSON form; run-local settings (threads, output_dir) are left out."""
    payload = config_to_dict(config)
    payload.pop("threads", None)
    payload.pop("output_dir", None)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _get_threads() -> int:
    raw = os.getenv("VOLREC_THREADS", "")
    if not raw:
        return DEFAULT_THREADS
    try:
        threads = int(raw)
    except ValueError:
        logging.warning("Invalid threads value: %s", raw)
        return DEFAULT_THREADS
    if threads < 1:
        logging.warning("Invalid threads value: %s", raw)
        return DEFAULT_THREADS
    return threads


def _get_output_dir() -> str:
    raw = os.getenv("VOLREC_OUTPUT_DIR", "").strip()
    return raw or DEFAULT_OUTPUT_DIR


def resolve_threads(cli_value: Optional[int], config_value: Optional[int]) -> int:
    if cli_value is not None:
        if cli_value < 1:
            raise ConfigurationError("must be at least 1", field="--threads")
        return cli_value
    if config_value is not None:
        return config_value
    return _get_threads()


def resolve_output_dir(cli_value: Optional[str], config_value: Optional[str]) -> str:
    return cli_value or config_value or _get_output_dir()
