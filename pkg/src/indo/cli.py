"""Command line entry point: ``indo run|reproduce|analyze``."""

import argparse
import json
import sys

from .config import ConfigParseError, parse_config
from .harness import (DatasetMissingError, analyze, preset, run_experiment,
                      with_output_dir)


def _cmd_run(args):
    config = parse_config(args.config)
    if args.output_dir:
        config = with_output_dir(config, args.output_dir)
    paths = run_experiment(config, log=None if args.quiet else print)
    if not args.quiet:
        print("wrote %d files to %s" % (len(paths), config.output_dir))


def _cmd_reproduce(args):
    config = preset(args.figure, output_dir=args.output_dir, iterations=args.iterations)
    paths = run_experiment(config, log=None if args.quiet else print)
    if not args.quiet:
        print("wrote %d files to %s" % (len(paths), config.output_dir))


def _cmd_analyze(args):
    config = parse_config(args.config)
    json.dump(analyze(config), sys.stdout, indent=2, sort_keys=True, allow_nan=False)
    sys.stdout.write("\n")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="indo",
        description="Distributed PMM with inexact Newton steps (INDO) and the ESOM baseline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute the runs of a configuration file")
    p.add_argument("config")
    p.add_argument("--output-dir", help="override output_dir from the file")
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("reproduce", help="run a figure preset (fig2-fig4 need $INDO_DATA_DIR)")
    p.add_argument("figure", choices=("fig1", "fig2", "fig3", "fig4"))
    p.add_argument("--output-dir")
    p.add_argument("--iterations", type=int, help="outer iterations per run")
    p.add_argument("-q", "--quiet", action="store_true")
    p.set_defaults(func=_cmd_reproduce)

    p = sub.add_parser("analyze", help="print the rate report of every run as JSON")
    p.add_argument("config")
    p.set_defaults(func=_cmd_analyze)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ConfigParseError, DatasetMissingError, FileNotFoundError) as exc:
        print("indo: error: %s" % exc, file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
