"""
Command-line interface.

Each subcommand is a Command object; CommandHandler builds the argument
parser from them, routes to the chosen one and maps exceptions to exit codes
(0 success, 1 usage/config error, 2 numerical failure).
"""
import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from . import pca
from .autoenc import ArchitectureError, Architecture, random_init
from .bench import (
    AE_METHODS,
    PRESETS,
    ExperimentConfig,
    default_jobs,
    fit_trial,
    preset,
    run_experiment,
    write_aggregates,
)
from .config import AppConfig, ConfigError, dump_json, load_json_config
from .datagen import DatasetError, fit_transform, gen_power_surface, load_csv, save_csv
from .logger_setup import setup_logging
from .numlin import NumericalError, ShapeError
from .pca import PcaError
from .pcainit import pca_naive_init, pca_robust_init, verify_init

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2

_DEFAULT_TOL = {"robust": 1e-8, "naive": 1e-6, "random": 1e-8}


class Command:
    """Base command class."""
    name = ""
    help = ""

    def __init__(self, app_config: AppConfig):
        self.app_config = app_config

    def configure(self, parser: argparse.ArgumentParser) -> None:
        """Add this command's arguments."""

    def execute(self, args: argparse.Namespace) -> int:
        """Run the command. Returns the process exit code."""
        raise NotImplementedError


def _seed(text: str) -> int:
    """argparse type for seeds: a non-negative integer."""
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed '{text}'") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"seed must be >= 0, got {value}")
    return value


def _load_experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_json_config(args.config, ExperimentConfig)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return config


class SynthCommand(Command):
    name = "synth"
    help = "generate points on the surface x^n + y^n = z"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--count", type=int, default=1000)
        parser.add_argument("--exponent", type=float, default=4.0)
        parser.add_argument("--seed", type=_seed, default=0)
        parser.add_argument("--out", required=True, help="CSV file to write")

    def execute(self, args: argparse.Namespace) -> int:
        dataset = gen_power_surface(args.count, args.exponent, np.random.default_rng(args.seed))
        save_csv(dataset, args.out)
        print(f"Wrote {dataset.n_rows} rows to {args.out}")
        return EXIT_OK


class InitCheckCommand(Command):
    name = "init-check"
    help = "build an initialization and verify it against PCA"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--data", required=True, help="CSV file")
        parser.add_argument("--arch", required=True, help="layer widths, e.g. 3-20-3-2-3-20-3")
        parser.add_argument("--q", type=int, default=None, help="bottleneck width (checked against --arch)")
        parser.add_argument("--method", choices=sorted(_DEFAULT_TOL), default="robust")
        parser.add_argument("--seed", type=_seed, default=0)
        parser.add_argument("--tol", type=float, default=None)
        parser.add_argument("--scale", action="store_true", help="standardize columns")
        parser.add_argument("--independent-decoder", action="store_true")

    def execute(self, args: argparse.Namespace) -> int:
        arch = Architecture.parse(args.arch)
        if args.q is not None and args.q != arch.q:
            raise ConfigError(f"--q {args.q} does not match the bottleneck width {arch.q} of {arch}")
        if args.method != "random":
            arch.check_vase()
        dataset = load_csv(args.data)
        if dataset.n_cols != arch.n:
            raise ShapeError(f"{args.data} has {dataset.n_cols} columns, {arch} expects {arch.n}")

        transformed, _ = fit_transform(dataset, scale=args.scale)
        model = pca.fit(transformed.x, arch.q)
        rng = np.random.default_rng(args.seed)
        if args.method == "robust":
            params = pca_robust_init(transformed.x, arch, rng, independent_decoder=args.independent_decoder, model=model)
        elif args.method == "naive":
            params = pca_naive_init(transformed.x, arch, rng, model=model)
        else:
            params = random_init(arch, rng)

        tol = args.tol if args.tol is not None else _DEFAULT_TOL[args.method]
        report = verify_init(params, transformed.x, model, tol=tol)
        payload = {"method": args.method, "architecture": str(arch), "seed": args.seed, **report.to_dict()}
        print(dump_json(payload))
        return EXIT_OK if report.passed else EXIT_NUMERICAL


class TrainCommand(Command):
    name = "train"
    help = "train one autoencoder trial and save the model"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--config", required=True, help="experiment JSON config")
        parser.add_argument("--out", default="runs/train", help="output directory")
        parser.add_argument("--seed", type=_seed, default=None, help="override the config seed")

    def execute(self, args: argparse.Namespace) -> int:
        config = _load_experiment_config(args)
        methods = [m for m in config.methods if m in AE_METHODS]
        if not methods:
            raise ConfigError(f"train needs an autoencoder method among {list(AE_METHODS)}")
        method, size = methods[0], config.sample_sizes[0]
        logger.info(f"Training {method} on {size} samples ({config.architecture})")

        outcome = fit_trial(config, method, size, 0)
        if outcome.result.failed or outcome.params is None or outcome.history is None:
            logger.error("Training failed: every restart diverged")
            return EXIT_NUMERICAL

        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        extra = {
            "method": method,
            "sample_size": size,
            "seed": config.seed,
            "selected_restart": outcome.result.selected_restart,
            "test_error": outcome.result.test_error,
            "transform": outcome.transform.to_dict() if outcome.transform else None,
            "history": outcome.history.summary(),
        }
        model_path = out_dir / "model.json"
        model_path.write_text(dump_json(outcome.params.to_dict(extra)) + "\n", encoding="utf-8")

        history = outcome.history
        frame = pd.DataFrame({
            "epoch": np.arange(len(history.val_loss)),
            "train_loss": history.train_loss,
            "val_loss": history.val_loss,
        })
        history_path = out_dir / "history.csv"
        frame.to_csv(history_path, index=False, float_format="%.17g", lineterminator="\n")

        print(f"{method}: test error {outcome.result.test_error:.6g} after {history.epochs_trained} epochs")
        logger.info(f"Wrote {model_path} and {history_path}")
        return EXIT_OK


class ExperimentCommand(Command):
    name = "experiment"
    help = "run a full method x sample size x repetition grid"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--config", required=True, help="experiment JSON config")
        parser.add_argument("--out", default="runs/experiment", help="output directory")
        parser.add_argument("--seed", type=_seed, default=None, help="override the config seed")
        parser.add_argument("--jobs", type=int, default=None, help="worker processes")

    def execute(self, args: argparse.Namespace) -> int:
        config = _load_experiment_config(args)
        jobs = args.jobs or self.app_config.jobs or default_jobs()
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)

        outcome = run_experiment(config, jobs=jobs, results_path=out_dir / "results.csv", progress=sys.stderr.isatty())
        write_aggregates(outcome.stats, out_dir / "aggregates.csv")
        (out_dir / "splits.json").write_text(json.dumps(outcome.splits) + "\n", encoding="utf-8")

        print(outcome.stats.to_frame().to_string(index=False))
        logger.info(f"Wrote results to {out_dir}")
        if all(r.failed for r in outcome.results):
            logger.error("Every trial failed")
            return EXIT_NUMERICAL
        return EXIT_OK


class PrintDefaultConfigCommand(Command):
    name = "print-default-config"
    help = "print an experiment config with every default filled in"

    def configure(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--preset", choices=PRESETS, default=None)

    def execute(self, args: argparse.Namespace) -> int:
        config = preset(args.preset) if getattr(args, "preset", None) else ExperimentConfig()
        print(dump_json(config.to_dict()))
        return EXIT_OK


class CommandHandler:
    """Handles command routing and execution."""

    def __init__(self, app_config: Optional[AppConfig] = None):
        self.app_config = app_config or AppConfig.from_env()
        self.commands: Dict[str, Command] = {
            cmd.name: cmd
            for cmd in (
                SynthCommand(self.app_config),
                InitCheckCommand(self.app_config),
                TrainCommand(self.app_config),
                ExperimentCommand(self.app_config),
                PrintDefaultConfigCommand(self.app_config),
            )
        }

    def build_parser(self) -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(prog="pcaboost", description="PCA-boosted autoencoders")
        verbosity = parser.add_mutually_exclusive_group()
        verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
        verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
        parser.add_argument("--log-file", default=None)
        parser.add_argument("--print-default-config", action="store_true", help="print the default config and exit")
        sub = parser.add_subparsers(dest="command")
        for name, command in self.commands.items():
            command.configure(sub.add_parser(name, help=command.help))
        return parser

    def _setup_logging(self, args: argparse.Namespace) -> None:
        level = self.app_config.log_level
        if args.verbose:
            level = "DEBUG"
        elif args.quiet:
            level = "WARNING"
        setup_logging(
            log_level=level,
            log_file=args.log_file or self.app_config.log_file,
            max_bytes=self.app_config.max_log_size,
            backup_count=self.app_config.log_backup_count,
        )

    def execute(self, argv: Optional[List[str]] = None) -> int:
        """Parse ``argv`` and run the selected command."""
        parser = self.build_parser()
        try:
            args = parser.parse_args(argv)
        except SystemExit as e:
            return EXIT_OK if e.code in (0, None) else EXIT_USAGE

        self._setup_logging(args)
        if args.print_default_config:
            return self.commands["print-default-config"].execute(args)
        if not args.command:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE

        try:
            return self.commands[args.command].execute(args)
        except (ConfigError, ArchitectureError, DatasetError, PcaError, ShapeError, FileNotFoundError) as e:
            logger.critical(f"{args.command}: {e}")
            return EXIT_USAGE
        except NumericalError as e:
            logger.critical(f"{args.command}: numerical failure: {e}")
            return EXIT_NUMERICAL
        except OSError as e:
            logger.critical(f"{args.command}: {e}")
            return EXIT_USAGE


def main(argv: Optional[List[str]] = None) -> int:
    return CommandHandler().execute(argv)
