"""Command-line front end.

Subcommands: solve, statics, transfers, whatif, simulate, check, and
estimate-gains.  Markets are read from the structured market file (or a
CSV table pair); reports are emitted as JSON with full-precision numbers
so they round-trip losslessly.

Exit codes: 0 success, 1 input error, 2 solver non-convergence,
3 invariant-check failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .choice import equilibrium_consistency
from .core import ScalingError
from .market_file import FORMAT_VERSION, MarketFile, ParseError, parse_market, parse_market_tables
from .solver import ConvergenceError, Equilibrium, IndexMap, SolverOptions, solve
from .statics import (
    StaticsReport,
    finite_difference_check,
    gains_sensitivity,
    marriage_elasticity,
    participation_analysis,
    statics_matrix,
    transfer_analysis,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NO_CONVERGENCE = 2
EXIT_CHECK_FAILED = 3


def _listify(array) -> object:
    """numpy -> plain JSON values; NaN becomes null."""
    if isinstance(array, np.ndarray):
        return _listify(array.tolist())
    if isinstance(array, list):
        return [_listify(item) for item in array]
    if isinstance(array, float) and not np.isfinite(array):
        return None
    if isinstance(array, (np.floating, np.integer)):
        return array.item()
    return array


def _add_input_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", metavar="PATH", help="structured market file")
    parser.add_argument("--gains-csv", metavar="PATH", help="gains table (CSV pair format)")
    parser.add_argument(
        "--populations-csv", metavar="PATH", help="population table (CSV pair format)"
    )
    parser.add_argument(
        "--gains-mode",
        choices=("pi", "Pi"),
        help="override the gains mode tag (Pi = raw gains, pi = log gains)",
    )
    parser.add_argument("--output", metavar="PATH", help="write the report here (default stdout)")
    parser.add_argument(
        "--tolerance", type=float, default=1e-10, help="relative gradient tolerance"
    )
    parser.add_argument("--max-iter", type=int, default=200, help="Newton iteration cap")


def _load_market(args) -> MarketFile:
    if args.input and (args.gains_csv or args.populations_csv):
        raise ParseError("give either --input or the --gains-csv/--populations-csv pair")
    if args.input:
        return parse_market(args.input, gains_mode_override=args.gains_mode)
    if args.gains_csv and args.populations_csv:
        return parse_market_tables(
            args.gains_csv, args.populations_csv, gains_mode=args.gains_mode or "Pi"
        )
    raise ParseError("no input given: use --input or --gains-csv with --populations-csv")


def _solver_options(args) -> SolverOptions:
    return SolverOptions(gradient_tolerance=args.tolerance, max_iterations=args.max_iter)


def _input_block(mf: MarketFile) -> dict:
    block = {
        "male_types": list(mf.male_types),
        "female_types": list(mf.female_types),
        "gains_mode": mf.gains_mode,
        "gains": _listify(mf.gains),
        "populations": _listify(mf.populations),
    }
    if mf.c_matrix is not None:
        block["c_matrix"] = _listify(mf.c_matrix)
    return block


def _equilibrium_block(eq: Equilibrium, index_map: IndexMap) -> dict:
    dist = index_map.embed_distribution(eq.distribution)
    beta = index_map.embed_amplitudes(eq.beta)
    block = {
        "beta": _listify(beta),
        "log_beta": _listify(index_map.embed_amplitudes(eq.log_beta)),
        "mu": _listify(dist.married),
        "single_men": _listify(dist.single_men),
        "single_women": _listify(dist.single_women),
        "residual_norm": eq.residual_norm,
        "iterations": eq.iterations,
        "objective_value": eq.objective_value,
    }
    if not index_map.identity:
        block["note"] = (
            "zero-population types were dropped before solving and re-embedded "
            "with zero singles and zero marriages"
        )
    return block


def _statics_blocks(eq: Equilibrium, report: StaticsReport, mf: MarketFile) -> dict:
    participation = participation_analysis(eq, report)
    sensitivity = gains_sensitivity(eq, report)
    return {
        "types": list(eq.market.gains.row_labels) + list(eq.market.gains.col_labels),
        "r_matrix": _listify(report.r_matrix),
        "d_beta": _listify(report.d_beta),
        "gains_sensitivity": _listify(sensitivity.d_beta),
        "marriage_elasticity": _listify(marriage_elasticity(eq, report)),
        "spectral_radius": report.spectral_radius,
        "spectral_pass": report.spectral_pass,
        "sign_check": {
            "mode": report.sign_check.mode,
            "cross_negative": report.sign_check.cross_negative,
            "diagonal_dominant": report.sign_check.diagonal_dominant,
            "cauchy_schwarz": report.sign_check.cauchy_schwarz,
            "failures": list(report.sign_check.failures),
        },
        "conjecture_probe": {
            "male_sums": _listify(report.conjecture.male_sums),
            "female_sums": _listify(report.conjecture.female_sums),
            "all_positive": report.conjecture.all_positive,
        },
        "participation": {
            "rate": _listify(participation.rate),
            "own_derivative": _listify(participation.own_derivative),
            "strict": participation.strict,
            "boundary": participation.boundary,
        },
    }


def _transfer_block(eq: Equilibrium, report: StaticsReport, mf: MarketFile) -> dict:
    c = None
    if mf.c_matrix is not None:
        # c is given for the full market; restrict to populated types.
        rows = [i for i, label in enumerate(mf.male_types) if label in eq.market.gains.row_labels]
        cols = [j for j, label in enumerate(mf.female_types) if label in eq.market.gains.col_labels]
        c = mf.c_matrix[np.ix_(rows, cols)]
    transfers = transfer_analysis(eq, report, c)
    block = {
        "transfer_index": _listify(transfers.transfer_index),
        "transfer_derivatives": _listify(transfers.transfer_derivatives),
    }
    if transfers.tau is not None:
        block["tau"] = _listify(transfers.tau)
    return block


def _base_report(mf: MarketFile, args, extra_settings: dict | None = None) -> dict:
    settings = {"tolerance": args.tolerance, "max_iterations": args.max_iter}
    if extra_settings:
        settings.update(extra_settings)
    return {
        "format_version": FORMAT_VERSION,
        "tool_version": __version__,
        "input": _input_block(mf),
        "settings": settings,
    }


def _emit(report: dict, args) -> None:
    text = json.dumps(report, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def _solve_market(mf: MarketFile, args) -> tuple[Equilibrium, IndexMap]:
    market, index_map = mf.to_market()
    return solve(market, _solver_options(args)), index_map


def cmd_solve(args) -> int:
    mf = _load_market(args)
    eq, index_map = _solve_market(mf, args)
    report = _base_report(mf, args)
    report["equilibrium"] = _equilibrium_block(eq, index_map)
    _emit(report, args)
    return EXIT_OK


def cmd_statics(args) -> int:
    mf = _load_market(args)
    eq, index_map = _solve_market(mf, args)
    statics = statics_matrix(eq)
    report = _base_report(mf, args)
    report["equilibrium"] = _equilibrium_block(eq, index_map)
    report["statics"] = _statics_blocks(eq, statics, mf)
    _emit(report, args)
    return EXIT_OK


def cmd_transfers(args) -> int:
    mf = _load_market(args)
    eq, index_map = _solve_market(mf, args)
    statics = statics_matrix(eq)
    report = _base_report(mf, args)
    report["equilibrium"] = _equilibrium_block(eq, index_map)
    report["transfers"] = _transfer_block(eq, statics, mf)
    _emit(report, args)
    return EXIT_OK


def _parse_shocks(args, mf: MarketFile) -> tuple[np.ndarray, np.ndarray]:
    populations = mf.populations.copy()
    gains = mf.pi_matrix.copy()
    labels = list(mf.male_types) + list(mf.female_types)
    for spec in args.shock_nu or []:
        try:
            label, delta = spec.split("=", 1)
            delta = float(delta)
        except ValueError:
            raise ParseError(f"bad --shock-nu {spec!r}; expected LABEL=DELTA") from None
        if label not in labels:
            raise ParseError(f"--shock-nu label {label!r} is not a declared type")
        populations[labels.index(label)] += delta
    for spec in args.shock_pi or []:
        try:
            address, delta = spec.split("=", 1)
            row, col = address.split(",")
            delta = float(delta)
        except ValueError:
            raise ParseError(f"bad --shock-pi {spec!r}; expected ROW,COL=DELTA") from None
        if row not in mf.male_types or col not in mf.female_types:
            raise ParseError(f"--shock-pi address {address!r} names unknown types")
        gains[mf.male_types.index(row), mf.female_types.index(col)] += delta
    if np.any(gains < 0):
        raise ParseError("a gains shock drove an entry negative")
    if np.any(populations < 0):
        raise ParseError("a population shock drove a count negative")
    return populations, gains


def cmd_whatif(args) -> int:
    mf = _load_market(args)
    populations, gains = _parse_shocks(args, mf)
    shocked_mf = MarketFile(
        format_version=mf.format_version,
        male_types=mf.male_types,
        female_types=mf.female_types,
        gains_mode="Pi",
        gains=gains,
        populations=populations,
        c_matrix=mf.c_matrix,
    )
    base_eq, base_map = _solve_market(mf, args)
    shocked_eq, shocked_map = _solve_market(shocked_mf, args)
    baseline = _equilibrium_block(base_eq, base_map)
    shocked = _equilibrium_block(shocked_eq, shocked_map)

    def diff(a, b):
        if isinstance(a, list):
            return [diff(x, y) for x, y in zip(a, b)]
        if isinstance(a, (int, float)) and isinstance(b, (int, float)):
            return b - a
        return None

    report = _base_report(
        mf,
        args,
        {"shock_nu": args.shock_nu or [], "shock_pi": args.shock_pi or []},
    )
    report["baseline"] = baseline
    report["shocked"] = shocked
    report["delta"] = {
        key: diff(baseline[key], shocked[key])
        for key in ("beta", "mu", "single_men", "single_women")
    }
    _emit(report, args)
    return EXIT_OK


def cmd_simulate(args) -> int:
    mf = _load_market(args)
    eq, index_map = _solve_market(mf, args)
    rng = np.random.default_rng(args.seed)
    record = equilibrium_consistency(eq, args.samples, rng, seed=args.seed)
    report = _base_report(mf, args, {"seed": args.seed, "samples": args.samples})
    report["equilibrium"] = _equilibrium_block(eq, index_map)
    report["simulation"] = {
        "male_divergence": _listify(record.male_divergence),
        "female_divergence": _listify(record.female_divergence),
        "max_divergence": record.max_divergence,
        "sample_count": record.sample_count,
        "seed": record.seed,
    }
    _emit(report, args)
    return EXIT_OK


def cmd_check(args) -> int:
    mf = _load_market(args)
    market, index_map = mf.to_market()
    opts = _solver_options(args)
    eq = solve(market, opts)
    statics = statics_matrix(eq)
    fd = finite_difference_check(market, step=args.fd_step, opts=opts)

    checks = {
        "clearing": eq.distribution.clears(market.population),
        "sign_pattern": statics.sign_check.passed,
        "spectral": statics.spectral_pass,
        "finite_difference": fd.max_error <= args.fd_tolerance,
    }
    report = _base_report(
        mf, args, {"fd_step": args.fd_step, "fd_tolerance": args.fd_tolerance}
    )
    report["equilibrium"] = _equilibrium_block(eq, index_map)
    report["check"] = {
        **checks,
        "sign_check_mode": statics.sign_check.mode,
        "sign_check_failures": list(statics.sign_check.failures),
        "spectral_radius": statics.spectral_radius,
        "finite_difference_errors": {
            "substitution": fd.substitution_error,
            "gains": fd.gains_error,
            "marriage": fd.marriage_error,
            "transfer": fd.transfer_error,
            "participation": fd.participation_error,
        },
        "passed": all(checks.values()),
    }
    _emit(report, args)
    return EXIT_OK if all(checks.values()) else EXIT_CHECK_FAILED


def cmd_estimate_gains(args) -> int:
    try:
        document = json.loads(Path(args.input).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{args.input}: not a valid report: {exc}") from None
    try:
        block = document["equilibrium"]
        mu = np.array(block["mu"], dtype=float)
        single_men = np.array(block["single_men"], dtype=float)
        single_women = np.array(block["single_women"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{args.input}: missing or malformed equilibrium block ({exc})") from None
    if np.any(single_men <= 0) or np.any(single_women <= 0):
        raise ParseError("estimate-gains requires strictly positive singles counts")
    geometric = np.sqrt(np.outer(single_men, single_women))
    gains = mu / geometric
    with np.errstate(divide="ignore"):
        log_gains = np.log(gains)
    report = {
        "format_version": FORMAT_VERSION,
        "tool_version": __version__,
        "estimated_gains": {
            "Pi": _listify(gains),
            "pi": _listify(log_gains),  # null where no marriages were observed
        },
    }
    _emit(report, args)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="choosiow",
        description="Solve marriage-matching markets and their comparative statics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, handler, helptext in (
        ("solve", cmd_solve, "compute the equilibrium marriage distribution"),
        ("statics", cmd_statics, "equilibrium plus substitution matrix and sensitivities"),
        ("transfers", cmd_transfers, "transfer index and derivatives (tau needs a [c] block)"),
        ("whatif", cmd_whatif, "re-solve under population or gains shocks"),
        ("simulate", cmd_simulate, "Monte Carlo consistency check of the choice model"),
        ("check", cmd_check, "run the full invariant suite; nonzero exit on failure"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_input_flags(p)
        p.set_defaults(handler=handler)

    sub.choices["whatif"].add_argument(
        "--shock-nu", action="append", metavar="LABEL=DELTA", help="population shock (repeatable)"
    )
    sub.choices["whatif"].add_argument(
        "--shock-pi", action="append", metavar="ROW,COL=DELTA", help="gains shock (repeatable)"
    )
    sub.choices["simulate"].add_argument("--seed", type=int, default=0)
    sub.choices["simulate"].add_argument("--samples", type=int, default=100_000)
    sub.choices["check"].add_argument("--fd-step", type=float, default=1e-5)
    sub.choices["check"].add_argument("--fd-tolerance", type=float, default=1e-3)

    estimate = sub.add_parser(
        "estimate-gains", help="recover gains from an observed distribution (a solve report)"
    )
    estimate.add_argument("--input", required=True, metavar="REPORT_JSON")
    estimate.add_argument("--output", metavar="PATH")
    estimate.set_defaults(handler=cmd_estimate_gains)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ParseError, ScalingError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConvergenceError as exc:
        print(
            json.dumps(
                {"error": {"kind": "no_convergence", "message": str(exc),
                           "residual_norm": exc.residual_norm}},
                indent=2,
            ),
            file=sys.stderr,
        )
        return EXIT_NO_CONVERGENCE


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
