import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import __version__
from .config import (
    load_realdata_config,
    load_study_config,
    read_config_file,
    resolve_output_dir,
)
from .data import ingest_returns, synthetic_dates, write_realized_cov, write_returns
from .dgp import DESIGNS, MODEL_CLASSES, WEIGHT_SCHEMES, DgpSpec, draw_params, make_rng, make_weights
from .errors import ConfigurationError, VolrecError
from .fitting import MODEL_FITTERS, fit_model, params_to_dict, run_filter
from .logging_setup import configure_logging
from .realdata import run_real_data
from .reconciliation import (
    OPTIONS,
    ErrorCovariance,
    algorithm1,
    make_base_forecasts,
    reconcile_approaches,
    shrink_cov,
)
from .simulation import simulate
from .study import MANIFEST_FILE, ResultStore, run_simulation_study
from .summary import format_table, summarize

DEFAULT_BURN_IN = 100
# "burn-in" is kept as an alias of "paper"
BURN_IN_SPLITS = ("paper", "burn-in")


def _write_json(path: Path, payload: Dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _cmd_simulate(args: argparse.Namespace) -> int:
    out = Path(resolve_output_dir(args.out, None))
    spec = DgpSpec(model_class=args.model, n_assets=args.n, weight_scheme=args.weights, seed=args.seed, design=args.design)
    rng = make_rng(args.seed)
    params = draw_params(spec, rng)
    weights = make_weights(args.weights, args.n, rng)
    burn_in = DEFAULT_BURN_IN if args.split in BURN_IN_SPLITS else 0
    returns, cov_path = simulate(params, burn_in + args.t, rng)
    dates = synthetic_dates(args.t)
    out.mkdir(parents=True, exist_ok=True)
    write_returns(out / "returns.csv", dates, returns[burn_in:])
    if args.dump_cov:
        write_realized_cov(out / "true_cov.csv", dates, cov_path[burn_in:])
    _write_json(
        out / MANIFEST_FILE,
        {
            "kind": "simulate",
            "version": __version__,
            "dgp": dataclasses.asdict(spec),
            "observations": args.t,
            "burn_in": burn_in,
            "weights": weights.tolist(),
            "params": params_to_dict(params),
        },
    )
    logging.info("Simulated returns model=%s n_assets=%s observations=%s out=%s", args.model, args.n, args.t, out)
    return 0


def _cmd_fit(args: argparse.Namespace) -> int:
    table = ingest_returns(args.returns, demean=not args.no_demean)
    data = table.values
    if args.model == "garch":
        weights = make_weights(args.weights, table.n_assets, make_rng(args.seed))
        data = data @ weights
    params = fit_model(args.model, data)
    out = run_filter(params, data, data.shape[0])
    payload = {"params": params_to_dict(params), "loglik": out.loglik, "observations": int(data.shape[0])}
    if args.out:
        _write_json(Path(args.out), payload)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _required(raw: Dict[str, Any], key: str) -> Any:
    if key not in raw:
        raise ConfigurationError("is required", field=key)
    return raw[key]


def _cmd_reconcile(args: argparse.Namespace) -> int:
    raw = read_config_file(args.input)
    weights = np.asarray(_required(raw, "weights"), dtype=float)
    base = make_base_forecasts(float(_required(raw, "sigma_p2_hat")), np.asarray(_required(raw, "sigma_hat"), dtype=float))
    if "omega" in raw:
        omega = ErrorCovariance(np.asarray(raw["omega"], dtype=float), float("nan"), 0)
    elif "errors" in raw:
        omega = shrink_cov(np.asarray(raw["errors"], dtype=float))
    else:
        raise ConfigurationError("provide either omega or errors", field="omega")
    option = raw.get("option", args.option)
    if option not in OPTIONS:
        raise ConfigurationError(f"must be one of {OPTIONS}", field="option")
    result = algorithm1(base, omega, weights, option)
    approaches = reconcile_approaches(base, omega, weights)
    payload = {
        "method_used": result.method_used,
        "correlation_ok": result.correlation_ok,
        "sigma_p2": result.sigma_p2,
        "sigma": result.sigma_tilde.tolist(),
        "approaches": {name: res.sigma_p2 for name, res in approaches.items()},
        "shrinkage_intensity": omega.shrinkage_intensity if "errors" in raw else None,
    }
    if args.out:
        _write_json(Path(args.out), payload)
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _finish(store: ResultStore, out: str) -> int:
    store.write(out)
    if store.summary is not None:
        print(format_table(store.summary.table))
    if store.failure_count:
        logging.warning("Run finished with failures count=%s", store.failure_count)
    return 0


def _cmd_study(args: argparse.Namespace) -> int:
    config = load_study_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, master_seed=args.seed)
    store = run_simulation_study(config, threads=args.threads)
    return _finish(store, resolve_output_dir(args.out, config.output_dir))


def _cmd_realdata(args: argparse.Namespace) -> int:
    config = load_realdata_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, master_seed=args.seed)
    store = run_real_data(config, threads=args.threads)
    return _finish(store, resolve_output_dir(args.out, config.output_dir))


def _cmd_summarize(args: argparse.Namespace) -> int:
    store = ResultStore.read(args.results)
    summary = summarize(store)
    summary.write(args.out or args.results)
    print(format_table(summary.table))
    return 0


def _cmd_version(args: argparse.Namespace) -> int:
    print(__version__)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volrec", description="Reconciled portfolio variance forecasts from univariate and multivariate GARCH"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simulate_cmd = sub.add_parser("simulate", help="simulate returns from a multivariate GARCH process")
    simulate_cmd.add_argument("--model", choices=MODEL_CLASSES, required=True)
    simulate_cmd.add_argument("--n", type=int, default=9, help="number of assets")
    simulate_cmd.add_argument("--t", type=int, default=850, help="observations written")
    simulate_cmd.add_argument("--seed", type=int, default=0)
    simulate_cmd.add_argument("--weights", choices=WEIGHT_SCHEMES, default="equal")
    simulate_cmd.add_argument("--design", choices=DESIGNS, default="auto")
    simulate_cmd.add_argument(
        "--split",
        choices=("none",) + BURN_IN_SPLITS,
        default="none",
        help="'paper' simulates and drops 100 leading draws",
    )
    simulate_cmd.add_argument("--dump-cov", action="store_true", help="also write the true covariance path")
    simulate_cmd.add_argument("--out", help="output directory")
    simulate_cmd.set_defaults(handler=_cmd_simulate)

    fit_cmd = sub.add_parser("fit", help="estimate a model on a returns CSV")
    fit_cmd.add_argument("--model", choices=sorted(MODEL_FITTERS), required=True)
    fit_cmd.add_argument("--returns", required=True, help="CSV with header date,asset_1,...")
    fit_cmd.add_argument("--weights", choices=WEIGHT_SCHEMES, default="equal", help="portfolio for the garch model")
    fit_cmd.add_argument("--seed", type=int, default=0)
    fit_cmd.add_argument("--no-demean", action="store_true")
    fit_cmd.add_argument("--out", help="JSON file (stdout when omitted)")
    fit_cmd.set_defaults(handler=_cmd_fit)

    reconcile_cmd = sub.add_parser("reconcile", help="reconcile one pair of base forecasts read from JSON")
    reconcile_cmd.add_argument("--input", required=True)
    reconcile_cmd.add_argument("--option", choices=OPTIONS, default="auto")
    reconcile_cmd.add_argument("--out", help="JSON file (stdout when omitted)")
    reconcile_cmd.set_defaults(handler=_cmd_reconcile)

    for name, handler, text in (
        ("study", _cmd_study, "run a replicated simulation study"),
        ("realdata", _cmd_realdata, "run the rolling-window real-data comparison"),
    ):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True, help="JSON config file")
        cmd.add_argument("--seed", type=int, help="overrides master_seed")
        cmd.add_argument("--threads", type=int, help="worker processes (default VOLREC_THREADS or 1)")
        cmd.add_argument("--out", help="results directory (default VOLREC_OUTPUT_DIR or ./results)")
        cmd.set_defaults(handler=handler)

    summarize_cmd = sub.add_parser("summarize", help="recompute summary tables from stored loss records")
    summarize_cmd.add_argument("--results", required=True)
    summarize_cmd.add_argument("--out", help="directory for the tables (default: the results directory)")
    summarize_cmd.set_defaults(handler=_cmd_summarize)

    version_cmd = sub.add_parser("version", help="print the package version")
    version_cmd.set_defaults(handler=_cmd_version)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except VolrecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
