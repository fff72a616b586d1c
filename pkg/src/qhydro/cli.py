"""Command-line entry point: ``qhydro run|verify|validate|list-scenarios``.

Exit status: 0 when every invariant passes, 1 when any fails, 2 for
configuration or usage errors.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import SCENARIOS, ConfigError, config_from_dict, config_to_dict, dump_config, load_config
from .scenarios import ScenarioError, run_scenario

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("qhydro")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qhydro", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, text in (("run", "run a scenario and export CSV/JSON artifacts"),
                       ("verify", "run a scenario and check invariants without exporting")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="YAML or JSON scenario config")
        p.add_argument("--seed", type=int, help="override bohm.seed and brownian.seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for trajectory ensembles (results do not depend on it)")
        if name == "run":
            p.add_argument("--output-dir", help="override output.directory")

    p = sub.add_parser("validate", help="parse a config and print it with defaults resolved")
    p.add_argument("config")
    sub.add_parser("list-scenarios", help="print the available scenario names")
    return parser


def _load(path, seed=None):
    config = load_config(path)
    if seed is not None:
        data = config_to_dict(config)
        data["bohm"]["seed"] = seed
        data["brownian"]["seed"] = seed
        config = config_from_dict(data)
    return config


def _print_report(report):
    for inv in report.invariants:
        status = "PASS" if inv.passed else "FAIL"
        if inv.relation == "~":
            bound = f"|value - {inv.target:.6g}| <= {inv.tolerance:.3g}"
        else:
            bound = f"{inv.relation} {inv.tolerance:.3g}"
        print(f"{status}  {inv.name:<36s} {inv.value:<24.10g} {bound}")
    total = len(report.invariants)
    failed = sum(not inv.passed for inv in report.invariants)
    print(f"{report.scenario}: {total - failed}/{total} invariants passed")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "list-scenarios":
        print("\n".join(SCENARIOS))
        return EXIT_OK
    try:
        if args.command == "validate":
            print(dump_config(load_config(args.config)))
            return EXIT_OK
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        config = _load(args.config, args.seed)
        out_dir = None
        if args.command == "run":
            out_dir = args.output_dir or config.output.directory
        log.info("running %s", config.scenario)
        report = run_scenario(config, out_dir=out_dir, workers=args.threads)
    except (ConfigError, ScenarioError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    _print_report(report)
    if out_dir is not None:
        print(f"artifacts written to {out_dir}")
    return EXIT_OK if report.passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
