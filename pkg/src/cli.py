import argparse
import logging
import os
import sys
import time
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from src import __version__
from src.chanmodel import ChannelMatrix, CsiErrorModel, generate_channels, partition_svd, sample_csi_errors
from src.errors import ConfigError, DimensionError, NumericalValidityError, ParameterError
from src.output import config_from_file, write_bundle
from src.perturb import compute_moments, is_extrapolated, predict_naive_powers, simulate_naive
from src.simharness import ExperimentConfig, preset_config, run_scenario
from src.util import from_db, setup_logging, to_db
from src.validation import run_validation

THREADS_ENV = "WIRETAP_THREADS"


def _parse_list(text: str, cast):
    """Comma list or inclusive start:stop:step range."""
    values = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            pieces = part.split(":")
            if len(pieces) not in (2, 3):
                raise argparse.ArgumentTypeError(f"bad range {part!r}, use start:stop[:step]")
            start, stop = cast(pieces[0]), cast(pieces[1])
            step = cast(pieces[2]) if len(pieces) == 3 else cast(1)
            if step <= 0:
                raise argparse.ArgumentTypeError(f"range step must be positive in {part!r}")
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            values.extend(cast(start + i * step) for i in range(max(count, 0)))
        else:
            values.append(cast(part))
    if not values:
        raise argparse.ArgumentTypeError(f"empty list {text!r}")
    return values[0] if len(values) == 1 else values


def int_list(text: str):
    try:
        return _parse_list(text, int)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def float_list(text: str):
    try:
        return _parse_list(text, float)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def scheme_list(text: str) -> List[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def _add_experiment_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--na", type=int_list, help="Alice antennas, e.g. 5 or 2,5 or 2:8:2")
    parser.add_argument("--nb", type=int_list, help="Bob antennas (default: equal to --na)")
    parser.add_argument("--ne", type=int_list, help="Eve antennas (default: equal to --na)")
    parser.add_argument("--target-sinr-db", type=float_list, help="Bob's target SINR S in dB")
    parser.add_argument("--sigma-h-db", type=float_list, help="CSI error standard deviation in dB (use --sigma-h-db=-30:-10:5)")
    parser.add_argument("--gamma-ecsi", type=float, help="blend weight of the imperfect ECSI estimate")
    parser.add_argument("--trials", type=int, help="Monte Carlo trials per sweep point")
    parser.add_argument("--power-db", type=float, help="total transmit power P in dB")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--schemes", type=scheme_list, help="comma separated schemes")
    parser.add_argument("--threads", type=int, help=f"worker processes (falls back to ${THREADS_ENV})")
    parser.add_argument("--rho-policy", choices=["receiver", "transmitter"], help="who chooses the power fraction in the robust schemes")
    parser.add_argument("--secrecy-metric", choices=["proxy", "matrix"], help="secrecy capacity estimate")
    parser.add_argument("--strict-paper-eq38", action="store_true", default=None, help="propagate FDD interference through Alice's estimate")
    parser.add_argument("--out-dir", default="results", help="output directory")
    parser.add_argument("--format", choices=["csv", "json"], default="csv", help="results and table format")


def _add_logging_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    parser.add_argument("--quiet", action="store_true", help="warnings only, no progress bar")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wiretap",
        description="Secure MIMO beamforming with artificial noise under imperfect CSI",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a config file and/or flags")
    run.add_argument("--config", help="JSON config file or a previous manifest.json")
    run.add_argument(
        "--scenario",
        choices=["fig1_ne_sweep", "fig2_prediction", "fig3_sinr_vs_target", "fig4_secrecy", "fig5_sigma_sweep", "custom"],
    )
    _add_experiment_flags(run)
    _add_logging_flags(run)

    figure = sub.add_parser("figure", help="run a preset scenario")
    figure.add_argument("number", type=int, choices=[1, 2, 3, 4, 5])
    _add_experiment_flags(figure)
    _add_logging_flags(figure)

    predict = sub.add_parser("predict", help="closed-form naive SINR for one channel realization")
    predict.add_argument("--na", type=int, default=5)
    predict.add_argument("--nb", type=int)
    predict.add_argument("--sigma-h-db", type=float, default=-20.0)
    predict.add_argument("--target-sinr-db", type=float, default=20.0)
    predict.add_argument("--power-db", type=float, default=20.0)
    predict.add_argument("--seed", type=int, default=0)
    predict.add_argument("--trials", type=int, default=0, help="also measure the naive scheme over this many error draws")
    _add_logging_flags(predict)

    validate = sub.add_parser("validate", help="run the built-in consistency checks")
    validate.add_argument("--seed", type=int, default=0)
    _add_logging_flags(validate)
    return parser


def _threads(args) -> Optional[int]:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}")
    return None


def _overrides(args) -> dict:
    return dict(
        na=args.na,
        nb=args.nb,
        ne=args.ne,
        target_sinr_db=args.target_sinr_db,
        sigma_h_db=args.sigma_h_db,
        gamma_ecsi=args.gamma_ecsi,
        trials=args.trials,
        power_db=args.power_db,
        master_seed=args.seed,
        schemes=args.schemes,
        threads=_threads(args),
        rho_policy=args.rho_policy,
        secrecy_metric=args.secrecy_metric,
        interference_via_estimate=args.strict_paper_eq38,
    )


def config_from_args(args) -> ExperimentConfig:
    overrides = _overrides(args)
    if args.command == "figure":
        return preset_config(args.number, **overrides)
    overrides["scenario"] = args.scenario
    if args.config:
        return config_from_file(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def _run(args) -> int:
    cfg = config_from_args(args)
    started = time.perf_counter()
    result = run_scenario(cfg, progress=not args.quiet and sys.stderr.isatty())
    wall = time.perf_counter() - started
    bundle = write_bundle(result, args.out_dir, cfg.scenario, args.format, wall)
    for scheme, series in result.series.items():
        means = ", ".join(f"{x:.2f}" for x in series.sinr_b_db)
        logging.info(f"{scheme}: SINR_b [{means}] dB over {result.axis_name} {result.axis}")
    logging.info(f"Wrote {bundle.results}, {bundle.table} and {bundle.manifest} in {wall:.1f} s")
    return 0


def _predict(args) -> int:
    nb = args.nb if args.nb is not None else args.na
    target = from_db(args.target_sinr_db)
    chan = generate_channels(args.na, nb, args.na, rng_seed=args.seed, power_p=from_db(args.power_db))
    svd = partition_svd(chan.h_ba)
    err = CsiErrorModel.iid(from_db(args.sigma_h_db))
    if is_extrapolated(args.sigma_h_db):
        logging.warning(f"sigma_H = {args.sigma_h_db} dB lies beyond the accurate range of the expansion")
    moments = compute_moments(svd, err)
    signal, interference = predict_naive_powers(svd, moments, chan, target)
    print(f"sigma_1            {svd.sigma_1:.6f}")
    print(f"target SINR        {args.target_sinr_db:.3f} dB")
    print(f"predicted naive    {to_db(signal / interference):.3f} dB")
    if args.trials > 0:
        draws = sample_csi_errors(err, nb, args.na, args.trials, args.seed + 1)
        reports = [simulate_naive(chan, ChannelMatrix(entries=d), target, svd) for d in draws]
        measured = np.mean([r.bob_signal for r in reports]) / np.mean([r.bob_interference for r in reports])
        print(f"measured naive     {to_db(measured):.3f} dB ({args.trials} draws)")
    return 0


def _validate(args) -> int:
    results = run_validation(args.seed)
    failed = [r for r in results if not r.passed]
    if failed:
        logging.error(f"{len(failed)} of {len(results)} checks failed")
        return 2
    logging.info(f"All {len(results)} checks passed")
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        setup_logging(logging.DEBUG)
    elif args.quiet:
        setup_logging(logging.WARNING)
    else:
        setup_logging(logging.INFO)

    commands = {"run": _run, "figure": _run, "predict": _predict, "validate": _validate}
    try:
        return commands[args.command](args)
    except (ConfigError, ParameterError, DimensionError) as exc:
        logging.error(str(exc))
        return 1
    except ValidationError as exc:
        logging.error(f"invalid configuration:\n{exc}")
        return 1
    except OSError as exc:
        logging.error(f"file access failed: {exc}")
        return 1
    except NumericalValidityError as exc:
        logging.error(str(exc))
        return 2
    except np.linalg.LinAlgError as exc:
        logging.error(f"linear algebra failed: {exc}")
        return 2
