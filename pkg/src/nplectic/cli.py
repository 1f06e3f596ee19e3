"""Command-line front end for the verification suites.

Exit codes: 0 all checks pass, 1 some residual check fails, 2 usage error
(bad flags, unknown model or suite), 3 evaluation error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

from .catalog import BUILTINS, CatalogError, resolve
from .report import render_json, render_text
from .suites import SUITES, run_suite

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_EVAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nplectic", description="Verify bundle-valued multisymplectic identities on example models.")
    p.add_argument("--model", required=True,
                   help=f"builtin model ({', '.join(BUILTINS)}) or path to a JSON model file")
    p.add_argument("--suite", required=True, choices=SUITES + ("all",))
    p.add_argument("--points", type=int, default=200, help="random sample points per check (default 200)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--tol", type=float, default=1e-8, help="threshold for the primary residuals")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", help="write the report here instead of standard output")
    return p


@dataclass(frozen=True)
class SuiteSpec:
    """One verification request: a model name or file and a suite name."""

    model: str
    suite: str
    points: int = 200
    seed: int = 42
    tol: float = 1e-8


class UsageError(Exception):
    pass


def run(spec: SuiteSpec) -> tuple:
    """Run a suite and return ``(reports, exit_code)``.

    Raises UsageError for unknown models, suites or bad numeric options.
    Evaluation errors (including invalid model files) propagate.
    """
    if spec.points < 1 or not spec.tol > 0:
        raise UsageError("--points must be at least 1 and --tol positive")
    if spec.suite not in SUITES + ("all",):
        raise UsageError(f"unknown suite {spec.suite!r}")
    if spec.model not in BUILTINS and not Path(spec.model).exists():
        raise UsageError(f"unknown model {spec.model!r}")
    model = resolve(spec.model)
    reports = run_suite(model, spec.suite, spec.points, spec.seed, spec.tol)
    return reports, EXIT_PASS if all(r.passed for r in reports) else EXIT_FAIL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = SuiteSpec(args.model, args.suite, args.points, args.seed, args.tol)
    try:
        reports, code = run(spec)
    except UsageError as exc:
        print(f"nplectic: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CatalogError as exc:
        print(f"nplectic: invalid model: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except Exception as exc:  # any failure inside the numerics is an evaluation error
        print(f"nplectic: evaluation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_EVAL
    text = render_json(reports) if args.format == "json" else render_text(reports)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
