"""Forecast evaluation: pointwise losses, relative accuracy, Diebold-Mariano tests and the model confidence set."""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from arch.bootstrap import MovingBlockBootstrap
from scipy.stats import norm
from statsmodels.stats.sandwich_covariance import S_hac_simple

from .errors import DegenerateVariance, InvalidInput

LOSS_KINDS = ("MSE", "MAE", "QLIKE")
MCS_LEVELS = (0.70, 0.75, 0.80, 0.85, 0.90, 0.95)
LOSS_FLOOR = 1e-300
MIN_DM_OBS = 10
MIN_MCS_OBS = 30
DEFAULT_BLOCK_LENGTH = 12
DEFAULT_BOOTSTRAP = 1000


def _check_kind(kind: str) -> str:
    if kind not in LOSS_KINDS:
        raise InvalidInput(f"unknown loss kind {kind!r}, expected one of {LOSS_KINDS}")
    return kind


def loss_series(truth, forecast, kind: str) -> np.ndarray:
    """Pointwise loss of variance forecasts h^2 against the target sigma^2."""
    _check_kind(kind)
    s2 = np.asarray(truth, dtype=float)
    h2 = np.asarray(forecast, dtype=float)
    if s2.shape != h2.shape:
        raise InvalidInput(f"truth and forecast shapes differ: {s2.shape} vs {h2.shape}")
    if kind == "MSE":
        return (s2 - h2) ** 2
    if kind == "MAE":
        return np.abs(s2 - h2)
    if np.any(h2 <= 0):
        raise InvalidInput("QLIKE needs strictly positive forecasts")
    if np.any(s2 <= 0):
        raise InvalidInput("QLIKE needs strictly positive targets")
    ratio = s2 / h2
    # rounding can leave tiny negatives near ratio 1
    return np.maximum(ratio - np.log(ratio) - 1.0, 0.0)


@dataclass
class LossPanel:
    losses: np.ndarray
    approach_names: List[str]
    loss_kind: str

    def __post_init__(self) -> None:
        self.losses = np.asarray(self.losses, dtype=float)
        _check_kind(self.loss_kind)
        if self.losses.ndim != 2 or self.losses.shape[1] != len(self.approach_names):
            raise InvalidInput("losses must be M x J with one column per approach")
        if not np.all(np.isfinite(self.losses)):
            raise InvalidInput("loss panel holds non-finite values")
        if self.loss_kind == "QLIKE" and np.any(self.losses < 0):
            raise InvalidInput("QLIKE losses must be nonnegative")

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, loss_kind: str) -> "LossPanel":
        return cls(frame.to_numpy(dtype=float), [str(c) for c in frame.columns], loss_kind)

    @property
    def ind(self) -> np.ndarray:
        return self.losses.mean(axis=0)


def avg_rel(ind_by_replication, reference: int) -> np.ndarray:
    """Geometric mean over replications of IND_j / IND_reference."""
    ind = np.asarray(ind_by_replication, dtype=float)
    if ind.ndim != 2 or not 0 <= reference < ind.shape[1]:
        raise InvalidInput("ind_by_replication must be Q x J and reference a column index")
    if np.any(ind < 0) or not np.all(np.isfinite(ind)):
        raise InvalidInput("average losses must be finite and nonnegative")
    floored = int(np.sum(ind < LOSS_FLOOR))
    if floored:
        logging.warning("Zero average losses floored for relative accuracy count=%s floor=%s", floored, LOSS_FLOOR)
    logs = np.log(np.maximum(ind, LOSS_FLOOR))
    return np.exp(np.mean(logs - logs[:, [reference]], axis=0))


@dataclass(frozen=True)
class DMResult:
    stat: float
    pvalue_raw: float
    pvalue_bonferroni: float


def dm_test(loss_a, loss_b, hac_lags: int, n_comparisons: int = 1) -> DMResult:
    """Diebold-Mariano test on d_t = loss_a - loss_b with a Bartlett long-run variance.

    A negative statistic means approach a has the lower expected loss.
    """
    a = np.asarray(loss_a, dtype=float).ravel()
    b = np.asarray(loss_b, dtype=float).ravel()
    if a.shape != b.shape:
        raise InvalidInput("loss series must have the same length")
    m = a.size
    if m < MIN_DM_OBS:
        raise InvalidInput(f"Diebold-Mariano test needs at least {MIN_DM_OBS} observations, got {m}")
    if hac_lags < 0 or n_comparisons < 1:
        raise InvalidInput("hac_lags must be >= 0 and n_comparisons >= 1")
    d = a - b
    if np.all(d == 0):
        raise DegenerateVariance("loss series are identical")
    mean = float(np.mean(d))
    lrv = float(np.squeeze(S_hac_simple(d - mean, nlags=hac_lags)))
    if not lrv > 0:
        raise DegenerateVariance(f"long-run variance of the loss differential is {lrv:.3e}")
    stat = mean / np.sqrt(lrv / m)
    p = float(2.0 * norm.sf(abs(stat)))
    return DMResult(float(stat), p, min(1.0, p * n_comparisons))


@dataclass
class DMMatrix:
    """Pairwise DM results; entry (i, j) tests approach i against j. Degenerate pairs are NaN."""

    stat: np.ndarray
    pvalue_raw: np.ndarray
    pvalue_bonferroni: np.ndarray
    approach_names: List[str]


def dm_matrix(panel: LossPanel, hac_lags: int) -> DMMatrix:
    j = panel.losses.shape[1]
    n_pairs = max(j * (j - 1) // 2, 1)
    stat = np.full((j, j), np.nan)
    raw = np.full((j, j), np.nan)
    bonferroni = np.full((j, j), np.nan)
    for i in range(j):
        for k in range(i + 1, j):
            try:
                result = dm_test(panel.losses[:, i], panel.losses[:, k], hac_lags, n_pairs)
            except DegenerateVariance:
                continue
            stat[i, k], stat[k, i] = result.stat, -result.stat
            raw[i, k] = raw[k, i] = result.pvalue_raw
            bonferroni[i, k] = bonferroni[k, i] = result.pvalue_bonferroni
    return DMMatrix(stat, raw, bonferroni, list(panel.approach_names))


def dm_wins(matrices: Sequence[DMMatrix], level: float = 0.05) -> np.ndarray:
    """Share of replications where the row approach significantly beats the column approach."""
    if not matrices:
        raise InvalidInput("no DM results to aggregate")
    wins = np.zeros_like(matrices[0].stat)
    for dm in matrices:
        with np.errstate(invalid="ignore"):
            wins += (dm.pvalue_bonferroni < level) & (dm.stat < 0)
    return wins / len(matrices)


@dataclass
class MCSResult:
    pvalues: np.ndarray
    included: Dict[float, np.ndarray]
    elimination_order: List[int] = field(default_factory=list)
    statistic: Optional[np.ndarray] = None


def mcs(
    panel: LossPanel,
    alpha_levels: Iterable[float] = MCS_LEVELS,
    n_bootstrap: int = DEFAULT_BOOTSTRAP,
    block_length: int = DEFAULT_BLOCK_LENGTH,
    seed: Optional[int] = None,
) -> MCSResult:
    """Model confidence set by sequential elimination with the range statistic.

    Standardized pairwise mean-loss differences are compared with their
    moving-block bootstrap distribution; the worst model of the current set is
    eliminated at each step. A model is in the set at confidence level L when
    its p-value is at least 1 - L.

    Follows arch.bootstrap.MCS with the range statistic, but a bootstrap draw
    equal to the observed statistic counts against elimination. arch's class
    is not called directly because identical approaches must keep p = 1.
    """
    losses = panel.losses
    m, k = losses.shape
    if k < 2:
        raise InvalidInput("model confidence set needs at least two approaches")
    if m < MIN_MCS_OBS:
        raise InvalidInput(f"model confidence set needs at least {MIN_MCS_OBS} dates, got {m}")
    levels = sorted(float(level) for level in alpha_levels)
    if any(not 0 < level < 1 for level in levels):
        raise InvalidInput("confidence levels must lie in (0, 1)")

    mean_losses = losses.mean(0)[:, None]
    loss_diffs = mean_losses - mean_losses.T
    bootstrap = MovingBlockBootstrap(block_length, np.arange(m), seed=seed)
    boot_diffs = np.empty((n_bootstrap, k, k))
    for b, data in enumerate(bootstrap.bootstrap(n_bootstrap)):
        index = np.asarray(data[0][0], dtype=int)
        star = losses[index].mean(0)[:, None]
        boot_diffs[b] = star - star.T
    boot_diffs -= loss_diffs
    variances = (boot_diffs**2).mean(0)
    scale = np.sqrt(np.maximum(variances, np.finfo(float).tiny))
    std_diffs = loss_diffs / scale
    std_boot = boot_diffs / scale

    included = np.ones(k, dtype=bool)
    eliminated: List[Tuple[int, float]] = []
    while included.sum() > 1:
        idx = np.flatnonzero(included)
        sub = std_diffs[np.ix_(idx, idx)]
        stat = float(np.max(sub))
        simulated = np.max(std_boot[:, idx[:, None], idx[None, :]], axis=(1, 2))
        # ties count against elimination, so identical models keep p = 1
        pvalue = float(np.mean(simulated >= stat))
        worst = idx[int(np.argmax(np.max(sub, axis=1)))]
        eliminated.append((int(worst), pvalue))
        included[worst] = False
    eliminated.append((int(np.flatnonzero(included)[0]), 1.0))

    pvalues = np.empty(k)
    running = 0.0
    for model, pvalue in eliminated:
        running = max(running, pvalue)
        pvalues[model] = running
    membership = {level: pvalues >= 1.0 - level for level in levels}
    return MCSResult(pvalues, membership, [model for model, _ in eliminated], std_diffs)


def mcs_inclusion_frequency(
    results: Sequence[MCSResult], approach_names: Sequence[str], levels: Iterable[float] = MCS_LEVELS
) -> pd.DataFrame:
    """Share of replications in which each approach belongs to the set, one column per level."""
    if not results:
        raise InvalidInput("no MCS results to aggregate")
    levels = [float(level) for level in levels]
    table = {
        f"{int(round(level * 100))}%": np.mean([r.included[level] for r in results], axis=0)
        for level in levels
    }
    return pd.DataFrame(table, index=list(approach_names))


def noisy_proxy(returns_t, true_cov_t, delta: float) -> np.ndarray:
    """delta r r' + (1 - delta) Sigma."""
    if not 0.0 <= delta <= 1.0:
        raise InvalidInput(f"delta must lie in [0, 1], got {delta}")
    r = np.asarray(returns_t, dtype=float).ravel()
    return delta * np.outer(r, r) + (1.0 - delta) * np.asarray(true_cov_t, dtype=float)


def noisy_proxy_path(returns, cov_path, delta: float) -> np.ndarray:
    if not 0.0 <= delta <= 1.0:
        raise InvalidInput(f"delta must lie in [0, 1], got {delta}")
    r = np.asarray(returns, dtype=float)
    return delta * (r[:, :, None] * r[:, None, :]) + (1.0 - delta) * np.asarray(cov_path, dtype=float)


def portfolio_variance(cov_path, weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float).ravel()
    return np.einsum("i,...ij,j->...", w, np.asarray(cov_path, dtype=float), w)
