"""Command-line entry point: ``irscs {run,sweep-t,sweep-snr,verify}``."""
import argparse
import logging
import sys

from .experiments import PRESETS, ExperimentConfig, preset_config, run_sweep
from .verify import FAULTS, verify_suite


def _add_common(p):
    p.add_argument("--preset", default="paper", choices=sorted(PRESETS),
                   help="array and grid sizes (default: paper)")
    p.add_argument("--seed", type=int, default=None, help="master seed")
    p.add_argument("--trials", type=int, default=None, help="trials per cell")
    p.add_argument("--parallel", type=int, default=1, help="worker processes")
    p.add_argument("--out", default=None, help="output CSV path; aggregates go to <out>.json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irscs", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a sweep described by a JSON config or a preset")
    p.add_argument("--config", default=None, help="JSON config file; unknown keys are rejected")
    _add_common(p)
    for name, text in (("sweep-t", "NMSE/ARSPR vs number of pilots"),
                       ("sweep-snr", "NMSE/ARSPR vs SNR, including conventional LS")):
        _add_common(sub.add_parser(name, help=text))

    p = sub.add_parser("verify", help="check the implementation against brute-force references")
    p.add_argument("--fault", default=None, choices=[f for f in FAULTS if f],
                   help="inject a fault (negative control; checks should fail)")
    return parser


def _config(args) -> ExperimentConfig:
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.out is not None:
        overrides["output"] = args.out
    if args.command == "run" and args.config:
        data = ExperimentConfig.from_json(args.config).to_dict()
        return ExperimentConfig.from_dict({**data, **overrides})
    return preset_config(args.preset, args.command, **overrides)


def _report(result, out=print):
    for cell in result.aggregates:
        out(f"{cell['axis_name']}={cell['axis_value']!s:>6} {cell['algorithm']:<16} T={cell['t_pilots']:<5} "
            f"NMSE {cell['nmse_mean']:.4g} +- {cell['nmse_se']:.2g}  "
            f"ARSPR {cell['arspr_mean']:.4f} +- {cell['arspr_se']:.2g}  (n={cell['n']})")
    overhead = result.pilot_overhead()
    if overhead:
        out(f"pilot overhead conventional LS / CS: {overhead['t_ls']}/{overhead['t_cs']} "
            f"= {overhead['ratio']:.1f}x")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "verify":
        results = verify_suite(fault=args.fault)
        failed = [c for c in results if not c.passed]
        print(f"{len(results) - len(failed)}/{len(results)} checks passed")
        return 1 if failed else 0
    try:
        config = _config(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    def progress(done, total, row):
        if args.verbose:
            logging.info("%d/%d %s %s trial %d", done, total, row.metrics.algorithm, row.axis_value, row.trial)

    result = run_sweep(config, parallel=max(1, args.parallel), progress=progress)
    _report(result)
    if config.output:
        print(f"wrote {config.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
