"""Command-line front end.

Each subcommand reads and writes artifacts in ``--out``::

    collect  -> dataset.csv, nominal_run.csv
    train    -> weights.json, training_report.json     (reads dataset.csv)
    run      -> compensated_run.csv                    (reads weights.json, dataset.csv)
    predict  -> prediction.csv                         (reads dataset.csv)
    full     -> all of the above + metrics.json, fig4.svg, fig5.svg
    report   -> fig4.svg, fig5.svg                     (reads the three run/prediction CSVs)

Failures exit non-zero with one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import artifacts, esn, plotting
from .config import ConfigError, from_dict
from .experiment import (
    ExperimentConfig,
    collect_phase,
    compensated_phase,
    metrics,
    openloop_predict,
    train_phase,
    training_report,
)

logger = logging.getLogger("esnmpc")

DATASET = "dataset.csv"
NOMINAL_RUN = "nominal_run.csv"
WEIGHTS = "weights.json"
TRAIN_REPORT = "training_report.json"
COMPENSATED_RUN = "compensated_run.csv"
PREDICTION = "prediction.csv"
METRICS = "metrics.json"
FIG_TRAJECTORIES = "fig4.svg"
FIG_PREDICTION = "fig5.svg"

SUBCOMMANDS = ("collect", "train", "run", "predict", "full", "report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="esnmpc",
        description="Reservoir-compensated MPC on a spring-damper benchmark.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", type=Path, default=None,
                        help="YAML experiment config (defaults used when omitted)")
    parser.add_argument("--out", type=Path, default=Path("out"), help="artifact directory")
    parser.add_argument("--seed", type=int, default=None, help="override experiment.seed")
    parser.add_argument("--steps", type=int, default=None, help="override experiment.sim_steps")
    parser.add_argument("--washout", type=int, default=None, help="override esn.washout")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    raw: dict = {}
    if args.config is not None:
        if not args.config.is_file():
            raise FileNotFoundError(f"config file not found: {args.config}")
        try:
            raw = yaml.safe_load(args.config.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"cannot parse {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a mapping of sections")
    overrides = {
        ("experiment", "seed"): args.seed,
        ("experiment", "sim_steps"): args.steps,
        ("esn", "washout"): args.washout,
    }
    for (section, key), value in overrides.items():
        if value is not None:
            raw.setdefault(section, {})
            if raw[section] is None:
                raw[section] = {}
            raw[section][key] = value
    return from_dict(raw)


def _require(path: Path) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"missing artifact: {path}")
    return path


def _load_weights(config: ExperimentConfig, out: Path) -> esn.EsnWeights:
    weights = esn.load_weights(_require(out / WEIGHTS))
    if weights.config != config.esn_config:
        raise ValueError(f"{out / WEIGHTS} was trained with a different reservoir config or seed")
    return weights


def do_collect(config: ExperimentConfig, out: Path):
    dataset, log = collect_phase(config)
    artifacts.write_dataset(dataset, out / DATASET)
    artifacts.write_runlog(log, out / NOMINAL_RUN)
    return dataset, log


def do_train(config: ExperimentConfig, out: Path, dataset=None, base=None):
    if dataset is None:
        dataset = artifacts.read_dataset(_require(out / DATASET))
    weights = train_phase(config, dataset, base=base)
    esn.save_weights(weights, out / WEIGHTS)
    artifacts.write_json(training_report(config, weights, dataset), out / TRAIN_REPORT)
    return weights


def do_run(config: ExperimentConfig, out: Path, weights=None, dataset=None):
    if weights is None:
        weights = _load_weights(config, out)
    if dataset is None and config.retrain_every and (out / DATASET).is_file():
        dataset = artifacts.read_dataset(out / DATASET)
    log = compensated_phase(config, weights, dataset)
    artifacts.write_runlog(log, out / COMPENSATED_RUN)
    return log


def do_predict(config: ExperimentConfig, out: Path, dataset=None, base=None):
    if dataset is None:
        dataset = artifacts.read_dataset(_require(out / DATASET))
    if base is None:
        base = esn.init(config.esn_config)
    table = openloop_predict(config, base, dataset, config.predict_train_len, config.predict_horizon)
    artifacts.write_prediction(table, out / PREDICTION)
    return table


def do_report(config: ExperimentConfig, out: Path):
    nominal = artifacts.read_runlog(_require(out / NOMINAL_RUN))
    compensated = artifacts.read_runlog(_require(out / COMPENSATED_RUN))
    table = artifacts.read_prediction(_require(out / PREDICTION))
    plotting.trajectories(nominal, compensated, out / FIG_TRAJECTORIES, config.mpc.reference)
    plotting.prediction(table, out / FIG_PREDICTION)


def do_full(config: ExperimentConfig, out: Path) -> dict:
    dataset, nominal_log = do_collect(config, out)
    base = esn.init(config.esn_config)
    weights = do_train(config, out, dataset, base=base)
    compensated_log = do_run(config, out, weights, dataset)
    table = do_predict(config, out, dataset, base=base)
    summary = metrics(nominal_log, compensated_log)
    summary_out = dict(summary)
    summary_out["prediction_nrmse"] = [float(v) for v in table.nrmse()]
    artifacts.write_json(summary_out, out / METRICS)
    do_report(config, out)
    return summary_out


def run_subcommand(args: argparse.Namespace) -> int:
    config = load_config(args)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    if args.subcommand == "collect":
        do_collect(config, out)
    elif args.subcommand == "train":
        do_train(config, out)
    elif args.subcommand == "run":
        do_run(config, out)
    elif args.subcommand == "predict":
        do_predict(config, out)
    elif args.subcommand == "report":
        do_report(config, out)
    elif args.subcommand == "full":
        summary = do_full(config, out)
        print(json.dumps(summary, sort_keys=True))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run_subcommand(args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes one machine-readable line
        err = {"error": type(exc).__name__, "message": str(exc).replace("\n", " ")}
        if isinstance(exc, ConfigError):
            err["key"] = exc.key
        print(json.dumps(err), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
