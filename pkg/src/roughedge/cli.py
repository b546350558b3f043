"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 validation failure, 4 numerical
failure, 5 fitted rate outside the configured band (only with ``--strict``).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__, kernels
from .config import ConfigError, ExperimentConfig
from .experiment import (InsufficientDataError, StageError, genericity_report, load_tables, preview_boundary,
                         probe_expsum, run_convergence, validate_profile)
from .geometry import ConvergenceError
from .perturbation import H3ViolationError

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_BAND = 0, 2, 3, 4, 5

log = logging.getLogger("roughedge")


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict({})
    if getattr(args, "out", None):
        cfg.output = str(args.out)
    return cfg


def cmd_precompute(args) -> int:
    cfg = _load(args)
    tables = load_tables(cfg)
    checks = kernels.verify_tables(tables)
    for k, v in sorted(checks.items()):
        print(f"{k}: {v:.3e}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args)
    rep = validate_profile(cfg, n_probes=args.probes)
    print(f"sup |H0| = {rep.sup_abs:.6g} (declared {rep.bound:.6g}); measured density {rep.measured_rho:.4g}")
    if not rep.passed:
        print(f"validation failed: {rep.violation}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"{len(rep.rows)} probes within the declared level-set density")
    return EXIT_OK


def cmd_preview(args) -> int:
    cfg = _load(args)
    exponent = args.exponent if args.exponent is not None else cfg.sweep.exponents[0]
    print(preview_boundary(cfg, exponent, samples=args.samples))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    rep = run_convergence(cfg)
    sys.stdout.write(rep.summary_text())
    if (args.strict or cfg.fit.strict) and not rep.degenerate and not rep.in_band:
        print(f"fitted rate outside band {list(rep.band)}", file=sys.stderr)
        return EXIT_BAND
    return EXIT_OK


def cmd_probe(args) -> int:
    cfg = _load(args)
    for p in probe_expsum(cfg):
        print(f"m={p.m} eps={p.eps:.6g} |W|={p.W:.4e} envelope={p.envelope:.4e}")
    return EXIT_OK


def cmd_genericity(args) -> int:
    cfg = _load(args)
    print(genericity_report(cfg).to_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="roughedge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", nargs="?", help="YAML configuration (defaults when omitted)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.set_defaults(func=fn)
        return p

    add("precompute-kernels", cmd_precompute, "build, verify and cache the kernel tables")
    p = add("validate-profile", cmd_validate, "bound and level-set density probes for the profile")
    p.add_argument("--probes", type=int, default=32)
    p = add("preview-boundary", cmd_preview, "polylines of the arc and its perturbation")
    p.add_argument("--exponent", type=int, help="eps = 2^-exponent (default: first sweep level)")
    p.add_argument("--samples", type=int, default=2001)
    p = add("run-convergence", cmd_run, "sweep eps, compare against DTB and fit the rate")
    p.add_argument("--strict", action="store_true", help="exit 5 when the fitted rate leaves the band")
    add("probe-expsum", cmd_probe, "exponential-sum magnitudes with their envelopes")
    add("genericity-report", cmd_genericity, "continued fractions and point conditions for x0")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except H3ViolationError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except kernels.TableBuildError as exc:
        print(f"kernel table check failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        if isinstance(exc.cause, H3ViolationError):
            return EXIT_VALIDATION
        return EXIT_NUMERICAL
    except (ArithmeticError, ConvergenceError, InsufficientDataError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
