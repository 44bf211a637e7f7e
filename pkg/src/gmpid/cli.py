"""Command-line harness.

Subcommands:
  detect   generate one seeded instance and run one detector on it
  sweep    Monte Carlo sweep over an snr/iteration grid, CSV output
  regimes  three-regime convergence comparison table
  bench    per-iteration timing of the message-passing sweep across sizes
  analyze  convergence diagnostics for one seeded channel

Exit codes: 0 success; 2 invalid arguments; 3 the experiment finished but at
least one detector-trial errored (results are still written).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .analysis import AsymptoticParams, check_mean_convergence
from .detectors import DETECTOR_NAMES, DetectorConfig, mmse_detect, run_detector
from .harness import (
    ExperimentSpec,
    bench_iteration,
    regime_table,
    run_experiment,
)
from .model import Dimensions, generate_channel, make_instance

_INIT_CHOICES = ("prior", "paper", "infinite")


def _init_mode(value: str) -> str:
    # "paper" is accepted as an alias for the fully uninformative init.
    return "infinite" if value in ("paper", "infinite") else "prior"


def _add_common(parser: argparse.ArgumentParser, *, snr_append: bool) -> None:
    parser.add_argument("--users", "-K", type=int, help="number of users K")
    parser.add_argument("--antennas", "-M", type=int, help="number of antennas M")
    if snr_append:
        parser.add_argument("--snr", type=float, action="append",
                            help="linear snr sigma_x2/noise_var (repeatable)")
    else:
        parser.add_argument("--snr", type=float, help="linear snr sigma_x2/noise_var")
    parser.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    parser.add_argument("--sigma-x2", type=float, default=1.0, help="source variance (default 1)")


def _add_detector_opts(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--detector", action="append", choices=DETECTOR_NAMES,
                        help="detector to run (repeatable)")
    parser.add_argument("--w", type=float, default=None, help="override relaxation factor")
    parser.add_argument("--w-mode", choices=("exact", "mp"), default="mp",
                        help="how to derive the relaxation factor when --w is absent")
    parser.add_argument("--init", choices=_INIT_CHOICES, default="prior",
                        help="message init: source prior, or uninformative ('infinite'; "
                             "'paper' is an alias)")
    parser.add_argument("--tol", type=float, default=1e-10,
                        help="relative mean-change stopping tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmpid",
                                     description="Massive-MIMO iterative detection harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="run detectors on one seeded instance")
    _add_common(p, snr_append=False)
    _add_detector_opts(p)
    p.add_argument("--iters", type=int, default=1000, help="iteration budget")
    p.add_argument("--out", help="write the per-iteration trace CSV here (single detector only)")

    p = sub.add_parser("sweep", help="Monte Carlo sweep")
    _add_common(p, snr_append=True)
    _add_detector_opts(p)
    p.add_argument("--iters", type=int, action="append", help="iteration budget (repeatable)")
    p.add_argument("--trials", type=int, default=None, help="trials per cell (default 500)")
    p.add_argument("--config", help="JSON config file; explicit flags override it")
    p.add_argument("--out", help="write the aggregated CSV here")
    p.add_argument("--jobs", type=int, default=1, help="parallel trial workers")
    # Flags only override the config file when actually given, so the merge
    # must see None for everything the user did not type.
    p.set_defaults(seed=None, sigma_x2=None, tol=None, w_mode=None, init=None)

    p = sub.add_parser("regimes", help="three-regime convergence table")
    p.add_argument("--trials", type=int, default=50, help="trials per cell (default 50)")
    p.add_argument("--seed", type=int, default=2026, help="base seed")
    p.add_argument("--out", help="write the per-cell CSV here")
    p.add_argument("--jobs", type=int, default=1, help="parallel trial workers")

    p = sub.add_parser("bench", help="per-iteration timing across sizes")
    p.add_argument("--users", "-K", type=int, default=64, help="number of users K")
    p.add_argument("--antennas", "-M", type=int, action="append",
                   help="antenna count (repeatable; default 256 512 1024)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the timing CSV here")

    p = sub.add_parser("analyze", help="convergence diagnostics for one channel")
    _add_common(p, snr_append=False)
    p.add_argument("--out", help="append the report as one CSV row (with header) here")

    return parser


def _require(args, names) -> None:
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise SystemExit2(f"missing required arguments: {', '.join('--' + n for n in missing)}")


class SystemExit2(Exception):
    """Invalid-arguments error that maps to exit code 2."""


def _cmd_detect(args) -> int:
    _require(args, ("users", "antennas", "snr"))
    detectors = args.detector or ["gmpid"]
    if args.out and len(detectors) != 1:
        raise SystemExit2("--out with detect needs exactly one --detector")
    dims = Dimensions(args.users, args.antennas)
    noise_var = args.sigma_x2 / args.snr
    inst = make_instance(dims, noise_var, args.sigma_x2, args.seed)
    xm, _ = mmse_detect(inst)
    cfg = DetectorConfig(
        max_iters=args.iters, tol_mean=args.tol, init_mode=_init_mode(args.init),
        relaxation_w=args.w, w_mode=args.w_mode,
    )
    for name in detectors:
        res = run_detector(name, inst, cfg)
        mse = float(np.mean((res.estimates - inst.x) ** 2))
        dist = float(np.mean((res.estimates - xm) ** 2))
        print(f"detector: {name}")
        print(f"verdict: {res.verdict} after {res.iterations_run} iterations")
        print(f"mse_vs_truth: {mse:.12g}")
        print(f"dist_to_mmse: {dist:.12g}")
        print("estimates: " + " ".join(f"{v:.8g}" for v in res.estimates))
        if args.out:
            res.write_trace_csv(args.out)
            print(f"trace written to {args.out}")
    return 0


def _spec_from_args(args) -> ExperimentSpec:
    data = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise SystemExit2("config file must hold a JSON object")
    if args.users is not None:
        data["users"] = args.users
    if args.antennas is not None:
        data["antennas"] = args.antennas
    if args.snr:
        data["snr"] = args.snr
    if args.iters:
        data["iters"] = args.iters
    if args.trials is not None:
        data["trials"] = args.trials
    if args.detector:
        data["detectors"] = args.detector
    if args.seed is not None:
        data["seed"] = args.seed
    if args.sigma_x2 is not None:
        data["sigma_x2"] = args.sigma_x2
    if args.tol is not None:
        data["tol"] = args.tol
    if args.w is not None:
        data["w"] = args.w
    if args.w_mode is not None:
        data["w_mode"] = args.w_mode
    if args.init is not None:
        data["init"] = args.init
    if "init" in data:
        if data["init"] not in _INIT_CHOICES:
            raise SystemExit2(
                f"init must be one of {_INIT_CHOICES}, got {data['init']!r}")
        data["init"] = _init_mode(data["init"])
    try:
        return ExperimentSpec.from_dict(data)
    except (ValueError, TypeError) as exc:
        raise SystemExit2(str(exc)) from exc


def _cmd_sweep(args) -> int:
    spec = _spec_from_args(args)
    result = run_experiment(spec, n_jobs=args.jobs)
    csv_text = result.to_csv()
    if args.out:
        result.write_csv(args.out)
        print(f"wrote {len(result.rows)} rows to {args.out}")
    else:
        sys.stdout.write(csv_text)
    if result.n_error_total:
        print(f"warning: {result.n_error_total} detector-trial errors", file=sys.stderr)
        return 3
    return 0


def _cmd_regimes(args) -> int:
    table = regime_table(trials=args.trials, base_seed=args.seed, n_jobs=args.jobs)
    sys.stdout.write(table.to_text())
    if args.out:
        table.write_csv(args.out)
        print(f"per-cell results written to {args.out}")
    if table.n_error_total:
        print(f"warning: {table.n_error_total} detector-trial errors", file=sys.stderr)
        return 3
    return 0


def _cmd_bench(args) -> int:
    antennas = args.antennas or [256, 512, 1024]
    rows = bench_iteration([(args.users, m) for m in antennas], seed=args.seed)
    header = f"{'K':>6} {'M':>6} {'s/iter':>12} {'s/(K*M)':>12}"
    print(header)
    for r in rows:
        print(f"{r['num_users']:>6} {r['num_antennas']:>6} "
              f"{r['seconds_per_iter']:>12.3e} {r['seconds_per_element']:>12.3e}")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("num_users,num_antennas,seconds_per_iter,seconds_per_element\n")
            for r in rows:
                fh.write(f"{r['num_users']},{r['num_antennas']},"
                         f"{r['seconds_per_iter']:.12g},{r['seconds_per_element']:.12g}\n")
    return 0


def _cmd_analyze(args) -> int:
    _require(args, ("users", "antennas", "snr"))
    dims = Dimensions(args.users, args.antennas)
    if dims.load_factor >= 1.0:
        raise SystemExit2("analyze needs load K/M < 1")
    params = AsymptoticParams.from_snr(args.users, args.antennas, args.snr, args.sigma_x2)
    H = generate_channel(dims, args.seed)
    report = check_mean_convergence(H, params)
    sys.stdout.write(report.to_text())
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(report.csv_header() + "\n" + report.to_csv_row() + "\n")
    return 0


_COMMANDS = {
    "detect": _cmd_detect,
    "sweep": _cmd_sweep,
    "regimes": _cmd_regimes,
    "bench": _cmd_bench,
    "analyze": _cmd_analyze,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
