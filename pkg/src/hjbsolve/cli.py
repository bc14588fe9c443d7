"""Command-line front end.

Verbs:
    solve  --config PATH [--out DIR] [--threads N]
    suite  NAME [--out DIR] [--threads N] [--include-large] [--only NAMES]
    export RESULT_DIR --format {table,slice} [--slice axis=value] [--out PATH]

Exit codes: 0 success, 2 configuration error, 3 non-convergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys

from .bench import ConfigError, ExperimentConfig, export_field, run_experiment, run_suite

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_IO = 4


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="hjb-bench",
        description="Static Hamilton-Jacobi-Bellman solver benchmarks",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    solve = sub.add_parser("solve", help="run one experiment from a config file")
    solve.add_argument("--config", required=True, help="path to a key=value config file")
    solve.add_argument("--out", default=None, help="output directory")
    solve.add_argument("--threads", type=int, default=None,
                       help="worker threads for solver sweeps")

    suite = sub.add_parser("suite", help="run a named suite")
    suite.add_argument("name", choices=["invariants", "paper_tables", "rates"])
    suite.add_argument("--out", default="suite_results", help="output directory")
    suite.add_argument("--threads", type=int, default=1)
    suite.add_argument("--include-large", action="store_true",
                       help="also run rows above the desk-scale defaults")
    suite.add_argument("--only", default=None,
                       help="comma-separated problem names to restrict paper_tables")

    export = sub.add_parser("export", help="post-process a result directory")
    export.add_argument("result_dir")
    export.add_argument("--format", choices=["table", "slice"], default="table")
    export.add_argument("--slice", default=None, metavar="AXIS=VALUE",
                        help="slice plane, e.g. x4=0 or 3=0.5")
    export.add_argument("--out", default=None, help="output file path")

    return parser


def _parse_slice(text):
    if text is None or "=" not in text:
        raise ConfigError("--slice expects AXIS=VALUE, e.g. x4=0")
    axis_text, value_text = text.split("=", 1)
    axis_text = axis_text.strip().lower().lstrip("x")
    try:
        axis = int(axis_text) - 1 if axis_text else 0
        value = float(value_text)
    except ValueError:
        raise ConfigError(f"--slice: cannot parse {text!r}") from None
    return axis, value


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.verb == "solve":
            try:
                with open(args.config) as fh:
                    text = fh.read()
            except OSError as exc:
                print(f"cannot read config: {exc}", file=sys.stderr)
                return EXIT_IO
            config = ExperimentConfig.from_text(text)
            if args.threads is not None:
                config.workers = args.threads
                config.validate()
            out = args.out
            if out is None:
                size = "x".join(str(n) for n in config.fine_nodes)
                out = os.path.join("results", f"{config.problem}-{config.algorithm}-{size}")
            result = run_experiment(config, out_dir=out)
            rep = result.report
            print(
                f"{config.problem} {config.algorithm}: iterations={rep.outer_iterations} "
                f"node_updates={rep.node_updates} wall={rep.wall_time_seconds:.3f}s "
                f"converged={rep.converged}"
            )
            print(f"results written to {out}")
            return EXIT_OK if result.converged else EXIT_NOT_CONVERGED

        if args.verb == "suite":
            only = args.only.split(",") if args.only else None
            ok = run_suite(args.name, args.out, workers=args.threads,
                           include_large=args.include_large, only=only)
            print(f"suite {args.name}: {'ok' if ok else 'completed with failures'}")
            return EXIT_OK if ok else EXIT_NOT_CONVERGED

        if args.verb == "export":
            if args.format == "slice":
                axis, value = _parse_slice(args.slice)
            else:
                axis, value = None, None
            out = args.out or os.path.join(
                args.result_dir, "slice.txt" if args.format == "slice" else "field_export.txt"
            )
            path = export_field(args.result_dir, args.format, out,
                                slice_axis=axis, slice_value=value)
            print(f"exported {path}")
            return EXIT_OK

        parser.error(f"unknown verb {args.verb}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
