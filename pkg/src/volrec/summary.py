"""Aggregate per-replication loss records into the comparison tables.

Blocks are (model, horizon, delta, loss_kind). Within a block every
replication contributes one M x J loss panel; the tables report IND,
relative accuracy against base and bu, Diebold-Mariano p-values and win
shares, and model confidence set p-values and inclusion frequencies.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .data import FLOAT_FORMAT
from .errors import InvalidInput
from .evaluation import (
    MIN_DM_OBS,
    MIN_MCS_OBS,
    DMMatrix,
    LossPanel,
    MCSResult,
    avg_rel,
    dm_matrix,
    dm_wins,
    mcs,
    mcs_inclusion_frequency,
)

BLOCK_KEYS = ["model", "horizon", "delta", "loss_kind"]
DGP_LABELS = ["model_class", "n_assets", "t_train", "weight_scheme"]
SUMMARY_FILE = "summary.csv"
DM_FILE = "dm_pvalues.csv"
POOLED_MCS_FILE = "pooled_mcs.csv"


@dataclass
class StudySummary:
    table: pd.DataFrame
    dm_pvalues: pd.DataFrame
    pooled_mcs: Optional[pd.DataFrame] = None

    def write(self, directory) -> None:
        out = Path(directory)
        options = {"index": False, "float_format": FLOAT_FORMAT, "lineterminator": "\n"}
        self.table.to_csv(out / SUMMARY_FILE, **options)
        self.dm_pvalues.to_csv(out / DM_FILE, **options)
        if self.pooled_mcs is not None:
            self.pooled_mcs.to_csv(out / POOLED_MCS_FILE, **options)


def block_seed(master_seed: int, replication: int, block: int) -> int:
    return int(np.random.SeedSequence([master_seed, replication, block]).generate_state(1)[0])


def _level_label(level: float) -> str:
    return f"mcs_{int(round(level * 100))}"


def _hac_lags(settings: Dict[str, Any], horizon: int) -> int:
    lags = settings.get("hac_lags")
    return int(horizon) - 1 if lags is None else int(lags)


def _median(values: List[float]) -> float:
    series = pd.Series(values, dtype=float)
    return float(series.median()) if series.notna().any() else float("nan")


def _panels(block: pd.DataFrame, approaches: List[str], kind: str) -> Dict[int, LossPanel]:
    wide = block.pivot(index=["replication", "date"], columns="approach", values="value")
    wide = wide.reindex(columns=approaches).dropna()
    panels = {}
    for replication, frame in wide.groupby(level=0, sort=True):
        panels[int(replication)] = LossPanel(frame.to_numpy(dtype=float), approaches, kind)
    return panels


def _rank_flags(score: np.ndarray) -> pd.DataFrame:
    ranks = pd.Series(score).rank(method="dense")
    return pd.DataFrame({"best": (ranks == 1).to_numpy(), "second_best": (ranks == 2).to_numpy()})


def _block_tables(
    key: tuple,
    panels: Dict[int, LossPanel],
    approaches: List[str],
    settings: Dict[str, Any],
    block_index: int,
):
    horizon = key[BLOCK_KEYS.index("horizon")]
    kind = key[BLOCK_KEYS.index("loss_kind")]
    j = len(approaches)
    ind = np.vstack([panel.ind for panel in panels.values()])
    dm_results: List[DMMatrix] = []
    mcs_results: List[MCSResult] = []
    levels = [float(level) for level in settings["mcs_levels"]]
    for replication, panel in panels.items():
        m = panel.losses.shape[0]
        if m >= MIN_DM_OBS and j >= 2:
            dm_results.append(dm_matrix(panel, _hac_lags(settings, horizon)))
        if m >= MIN_MCS_OBS and j >= 2:
            mcs_results.append(
                mcs(
                    panel,
                    levels,
                    n_bootstrap=int(settings["mcs_bootstrap"]),
                    block_length=int(settings["mcs_block_length"]),
                    seed=block_seed(int(settings["master_seed"]), replication, block_index),
                )
            )

    table = pd.DataFrame({"approach": approaches, "replications": len(panels), "ind": ind.mean(axis=0)})
    for reference in ("base", "bu"):
        if reference in approaches:
            table[f"avg_rel_{reference}"] = avg_rel(ind, approaches.index(reference))
        else:
            table[f"avg_rel_{reference}"] = np.nan
    for reference in ("base", "bu"):
        pvalues = np.full(j, np.nan)
        wins = np.full(j, np.nan)
        if reference in approaches and dm_results:
            col = approaches.index(reference)
            pvalues = np.array([_median([dm.pvalue_bonferroni[row, col] for dm in dm_results]) for row in range(j)])
            wins = dm_wins(dm_results)[:, col]
            wins[col] = np.nan
        table[f"dm_p_vs_{reference}"] = pvalues
        table[f"dm_wins_vs_{reference}"] = wins
    if mcs_results:
        table["mcs_pvalue"] = np.mean([r.pvalues for r in mcs_results], axis=0)
        inclusion = mcs_inclusion_frequency(mcs_results, approaches, levels)
        for level, column in zip(levels, inclusion.columns):
            table[_level_label(level)] = inclusion[column].to_numpy()
    else:
        table["mcs_pvalue"] = np.nan
        for level in levels:
            table[_level_label(level)] = np.nan
    # ranking by the geometric-mean ratio is independent of the reference column
    flags = _rank_flags(avg_rel(ind, 0))
    table["best"] = flags["best"].to_numpy()
    table["second_best"] = flags["second_best"].to_numpy()
    for name, value in zip(BLOCK_KEYS, key):
        table[name] = value

    pairs = []
    if dm_results:
        wins = dm_wins(dm_results)
        for row in range(j):
            for col in range(j):
                if row == col:
                    continue
                pairs.append(
                    {
                        **dict(zip(BLOCK_KEYS, key)),
                        "approach": approaches[row],
                        "versus": approaches[col],
                        "stat_median": _median([dm.stat[row, col] for dm in dm_results]),
                        "pvalue_raw_median": _median([dm.pvalue_raw[row, col] for dm in dm_results]),
                        "pvalue_bonferroni_median": _median([dm.pvalue_bonferroni[row, col] for dm in dm_results]),
                        "win_share": float(wins[row, col]),
                    }
                )
    return table, pairs


def _pooled_mcs(losses: pd.DataFrame, settings: Dict[str, Any]) -> pd.DataFrame:
    """One confidence set per (horizon, loss kind) over every (model, approach) column."""
    levels = [float(level) for level in settings["mcs_levels"]]
    rows = []
    for index, ((horizon, kind), block) in enumerate(losses.groupby(["horizon", "loss_kind"], sort=True)):
        wide = block.pivot(index="date", columns=["model", "approach"], values="value").dropna()
        names = [f"{model}:{approach}" for model, approach in wide.columns]
        if wide.shape[0] < MIN_MCS_OBS or len(names) < 2:
            logging.warning("Skipped pooled confidence set horizon=%s loss_kind=%s dates=%s", horizon, kind, wide.shape[0])
            continue
        result = mcs(
            LossPanel(wide.to_numpy(dtype=float), names, kind),
            levels,
            n_bootstrap=int(settings["mcs_bootstrap"]),
            block_length=int(settings["mcs_block_length"]),
            seed=block_seed(int(settings["master_seed"]), 0, 10_000 + index),
        )
        for col, name in enumerate(names):
            row = {"horizon": horizon, "loss_kind": kind, "column": name, "mcs_pvalue": result.pvalues[col]}
            for level in levels:
                row[_level_label(level)] = bool(result.included[level][col])
            rows.append(row)
    return pd.DataFrame(rows)


def summarize(store) -> StudySummary:
    """Summary tables recomputed from the store's loss records and manifest."""
    losses = store.losses
    if losses is None or losses.empty:
        raise InvalidInput("no loss records to summarize")
    settings = store.manifest["config"]
    approaches = [a for a in settings["approaches"] if a in set(losses["approach"])]
    tables, pairs = [], []
    grouped = losses.groupby(BLOCK_KEYS, dropna=False, sort=True)
    for block_index, (key, block) in enumerate(grouped):
        kind = key[BLOCK_KEYS.index("loss_kind")]
        panels = _panels(block, approaches, kind)
        if not panels:
            continue
        table, block_pairs = _block_tables(key, panels, approaches, settings, block_index)
        tables.append(table)
        pairs.extend(block_pairs)

    table = pd.concat(tables, ignore_index=True)
    dgp = settings.get("dgp")
    leading = list(BLOCK_KEYS)
    if dgp:
        for label in reversed(DGP_LABELS):
            table.insert(0, label, dgp[label])
        leading = DGP_LABELS + leading
    table = table[leading + [c for c in table.columns if c not in leading]]
    dm = pd.DataFrame(pairs)
    pooled = _pooled_mcs(losses, settings) if store.manifest.get("kind") == "realdata" else None
    logging.info("Summarized loss records blocks=%s approaches=%s", len(tables), len(approaches))
    return StudySummary(table, dm, pooled)


def read_summary(directory) -> pd.DataFrame:
    path = Path(directory) / SUMMARY_FILE
    if not path.is_file():
        raise InvalidInput(f"{path} does not exist")
    return pd.read_csv(path, float_precision="round_trip")


def format_table(table: pd.DataFrame, columns: Sequence[str] = ("approach", "ind", "avg_rel_base", "avg_rel_bu")) -> str:
    shown = [c for c in BLOCK_KEYS + list(columns) if c in table.columns]
    return table[shown].to_string(index=False, float_format=lambda x: f"{x:.4g}")
