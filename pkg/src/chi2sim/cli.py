"""Command-line interface: ``chi2sim run|wigner|converge|reproduce-paper``."""

from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from . import io
from .errors import ParseError, ResourceExceeded, ToleranceNotMet, ValidationError
from .validation import default_ladder


def _ladder(text: str) -> tuple[tuple[int, ...], ...]:
    """``"80,40;90,45;100,50"`` -> ((80, 40), (90, 45), (100, 50))."""
    try:
        rungs = tuple(tuple(int(c) for c in rung.split(",")) for rung in text.split(";") if rung.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad ladder {text!r}; expected e.g. '80,40;90,45;100,50'") from None
    if len(rungs) < 2:
        raise argparse.ArgumentTypeError("a ladder needs at least two rungs")
    return rungs


def _cutoffs(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(c) for c in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad cutoff list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chi2sim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="evolve a scenario and write the series and requested snapshots")
    p.add_argument("config")
    p.add_argument("-o", "--out-dir", default=None, help="directory for relative output paths (default: cwd)")
    p.add_argument("--print-config", action="store_true", help="echo the normalized config and exit")

    p = sub.add_parser("wigner", help="write only the Wigner snapshots requested by a config")
    p.add_argument("config")
    p.add_argument("-o", "--out-dir", default=None)

    p = sub.add_parser("converge", help="run a cutoff ladder and write a JSON convergence report")
    p.add_argument("config")
    p.add_argument("--ladder", type=_ladder, default=None, help="rungs separated by ';', cutoffs by ','")
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--tau", type=float, default=None, help="tau at which observables are compared (default: last)")
    p.add_argument("--report", default="convergence.json")
    p.add_argument("--no-wigner", action="store_true", help="skip the Wigner-grid stability check")

    p = sub.add_parser("reproduce-paper", help="run the built-in scenarios against the reference table")
    p.add_argument("--tolerance-scale", type=float, default=1.0)
    p.add_argument("--degenerate-cutoffs", type=_cutoffs, default=None)
    p.add_argument("--ndspdc-cutoff", type=int, default=None)
    p.add_argument("--dissipative-loss", type=float, default=None)
    p.add_argument("--only", nargs="+", choices=sorted(io.BUILTIN_CONFIGS), default=None)
    return ap


def _log(msg):
    print(msg, file=sys.stderr)


def _cmd_run(args) -> int:
    cfg = io.parse_config(args.config)
    if args.print_config:
        sys.stdout.write(io.serialize_config(cfg))
        return io.EXIT_OK
    return io.run(cfg, args.out_dir, _log)


def _cmd_wigner(args) -> int:
    cfg = io.parse_config(args.config)
    if not cfg.outputs.wigner:
        _log("config requests no Wigner snapshots")
        return io.EXIT_VALIDATION
    taus = sorted({w.tau for w in cfg.outputs.wigner})
    # evolve only up to the last snapshot, sampling just the snapshot times
    samples = tuple(t for t in cfg.scenario.tau_samples if any(abs(t - s) <= io.TAU_MATCH_TOL for s in taus))
    scenario = cfg.scenario.with_taus(samples)
    scratch = ".wigner_series.csv"
    outputs = replace(cfg.outputs, series=scratch, distributions=(), convergence=None)
    code = io.run(replace(cfg, scenario=scenario, outputs=outputs), args.out_dir, _log)
    (Path(args.out_dir or ".") / scratch).unlink(missing_ok=True)
    return code


def _cmd_converge(args) -> int:
    cfg = io.parse_config(args.config)
    ladder = args.ladder or default_ladder(cfg.scenario.process)
    try:
        report = io.converge(cfg, ladder, args.threshold, args.tau, wigner_modes=() if args.no_wigner else None)
    except ResourceExceeded as exc:
        partial = getattr(exc, "partial_report", None)
        if partial is not None:
            io.write_report(partial, args.report)
        raise
    io.write_report(report, args.report)
    for name, ok in report.verdict.items():
        _log(f"{name:<16} delta={report.deltas[name][-1]:.3e}  {'converged' if ok else 'NOT converged'}")
    for mode, ok in report.wigner_stable.items():
        _log(f"W_{mode:<14} delta={report.wigner_deltas[mode][-1]:.3e}  {'stable' if ok else 'NOT stable'}")
    return io.EXIT_OK if report.converged else io.EXIT_FAILED


def _cmd_reproduce(args) -> int:
    result = io.reproduce_paper(
        args.tolerance_scale,
        degenerate_cutoffs=args.degenerate_cutoffs,
        ndspdc_cutoff=args.ndspdc_cutoff,
        dissipative_loss=args.dissipative_loss,
        only=args.only,
        log=_log,
    )
    print(result.table())
    return io.EXIT_OK if result.all_passed else io.EXIT_FAILED


COMMANDS = {"run": _cmd_run, "wigner": _cmd_wigner, "converge": _cmd_converge, "reproduce-paper": _cmd_reproduce}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        return _dispatch(args)


def _dispatch(args) -> int:
    try:
        return COMMANDS[args.command](args)
    except ParseError as exc:
        _log(f"parse error: {exc}")
        return io.EXIT_PARSE
    except ValidationError as exc:
        _log(f"invalid config: {exc}")
        return io.EXIT_VALIDATION
    except ToleranceNotMet as exc:
        _log(f"tolerance not met: {exc}")
        return io.EXIT_TOLERANCE
    except ResourceExceeded as exc:
        _log(f"resource limit: {exc}")
        return io.EXIT_RESOURCE
    except FileNotFoundError as exc:
        _log(f"error: {exc}")
        return io.EXIT_PARSE

if __name__ == "__main__":
    sys.exit(main())
