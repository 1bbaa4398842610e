"""
Command-line front end.

    posi-bounds estimate --ensemble identity:p=10 --s 3 --reps 100000 --seed 1
    posi-bounds rip --ensemble equicorr:p=20,k=10,c=0.2 --s 5
    posi-bounds bounds --p 100 --s 5 --n 100 --delta 0.1
    posi-bounds lower --p 64 --k 32 --c 0.1 --s 4 --reps 10000
    posi-bounds scan grid.json --output scan.csv --resume
    posi-bounds bl --q 20 --r 10 --rho 1e30 --level 0.05
    posi-bounds cover --ensemble identity:p=5 --s 5 --k khat --reps 10000

Every command writes one JSON document that embeds the resolved configuration
and the package version. CSV written to ``--output FILE`` carries the same
document in a ``FILE.json`` sidecar. Failures print a single
``error: <ErrorClass>: <message>`` line on stderr and exit with 2 (validation),
3 (numeric) or 4 (I/O).
"""

import argparse
import logging
import math
import sys

import numpy as np

from . import __version__
from .bounds import (
    DEFAULT_GRID_SIZE,
    RHO_MODES,
    BellParams,
    H_eval,
    compute_bounds,
    corollary_design,
    empirical_lower_bound,
    lower_bound_expr,
    solve_B_ell,
    u_bar,
    u_sparse,
)
from .config import ScanGrid, build_run_config
from .design_core import (
    DEFAULT_ENUMERATION_CAP,
    ModelFamily,
    contrast_set,
    make_equicorr,
    parse_ensemble,
    split_ensemble,
)
from .distributions import format_dof, parse_dof
from .errors import EXIT_IO, EXIT_OK, ConfigError, DomainError, PosiError, TooFewRepsError
from .io import (
    RATE_COLUMNS,
    SCAN_COLUMNS,
    completed_rows,
    document,
    rate_row,
    render_csv,
    render_json,
    scan_row,
    write_sidecar,
    write_text,
)
from .logging_utils import configure_logging
from .posi_mc import MIN_REPS, coverage_sim, estimate_K, stream_gamma
from .rip import delta, delta_bound_from_kappa, delta_full, rip_report
from .rng import RngStream

logger = logging.getLogger(__name__)


# -------------------------------------------------------------------- helpers
def one_based(model):
    return [int(i) + 1 for i in model]


def parse_log_rho(text: str) -> float:
    """
    log(rho) from a decimal or scientific literal; "1e400" works although it
    overflows a double.
    """
    mantissa, sep, exponent = text.strip().lower().partition("e")
    try:
        value = float(mantissa)
        power = int(exponent) if sep else 0
    except ValueError as e:
        raise ConfigError(f"cannot parse rho {text!r}") from e
    if not value > 0 or math.isinf(value):
        raise DomainError(f"rho must be a finite number >= 1, got {text!r}")
    return math.log(value) + power * math.log(10.0)


def _render(args, command: str, config: dict, result: dict) -> str:
    if args.format == "csv":
        flat = _flatten(result)
        if args.output is not None:
            write_sidecar(command, config, list(flat), args.output)
        return render_csv([flat], list(flat))
    return render_json(document(command, config, result))


def _flatten(record: dict) -> dict:
    flat = {}
    for key, value in record.items():
        if isinstance(value, (list, tuple)) and not any(isinstance(v, (list, tuple)) for v in value):
            flat[key] = " ".join(str(v) for v in value)
        elif isinstance(value, dict):
            flat.update({f"{key}_{k}": v for k, v in _flatten(value).items()})
        else:
            flat[key] = value
    return flat


def _run_config(args, **extra):
    values = dict(
        design=getattr(args, "design", None),
        ensemble=getattr(args, "ensemble", None),
        s=getattr(args, "s", None),
        family_file=getattr(args, "family", None),
        alpha=getattr(args, "alpha", None),
        r=getattr(args, "r", None),
        reps=getattr(args, "reps", None),
        seed=getattr(args, "seed", None),
        format=args.format,
        grid_size=getattr(args, "grid", None),
        cap=getattr(args, "cap", None),
        workers=args.workers,
    )
    values.update(extra)
    return build_run_config(**values)


def _design_summary(X) -> dict:
    return {"provenance": X.provenance, "n": X.n, "p": X.p}


# ------------------------------------------------------------------- commands
def cmd_estimate(args) -> str:
    config = _run_config(args)
    X = config.load_design()
    family = config.load_family(X.p)
    on_rank_deficient = "skip" if args.skip_deficient else "raise"
    if args.stream:
        if config.reps < MIN_REPS:
            raise TooFewRepsError(f"need at least {MIN_REPS} replicates, got {config.reps}")
        streamed = stream_gamma(
            X, family, config.r, config.reps, config.seed, config.workers, on_rank_deficient=on_rank_deficient
        )
        estimate = streamed.draws.estimate(config.alpha)
        models, contrasts, skipped = streamed.models, streamed.contrasts, streamed.skipped
    else:
        contrast_rows = contrast_set(X, family, on_rank_deficient=on_rank_deficient, cap=config.cap)
        estimate = estimate_K(contrast_rows, config.alpha, config.r, config.reps, config.seed, config.workers)
        models, contrasts, skipped = len(contrast_rows.models), len(contrast_rows), contrast_rows.skipped
    logger.info("K_hat = %s from %s contrasts", estimate.k_hat, contrasts)
    result = {
        "design": _design_summary(X),
        "models": models,
        "contrasts": contrasts,
        "skipped_models": [one_based(m) for m in skipped],
        **estimate.to_record(),
    }
    return _render(args, "estimate", config.resolved(), result)


def cmd_rip(args) -> str:
    if args.s is None:
        raise ConfigError("rip needs a sparsity --s")
    config = _run_config(args, reps=None, alpha=None, r=None)
    X = config.load_design()
    report = rip_report(
        X, config.s, cap=config.cap, workers=config.workers, samples=args.samples, seed=config.seed
    )
    result = {
        "design": _design_summary(X),
        "s": report.s,
        "kappa": report.kappa,
        "delta": report.delta,
        "argmax_kappa": one_based(report.argmax_kappa),
        "argmax_delta": one_based(report.argmax_delta),
        "subsets_examined": report.subsets_examined,
        "exhaustive": report.exhaustive,
        "delta_bound_from_kappa": delta_bound_from_kappa(report.kappa, allow_vacuous=True),
        "delta_full": delta_full(X),
    }
    return _render(args, "rip", config.resolved(), result)


def cmd_bounds(args) -> str:
    config = _run_config(args, reps=None)
    has_design = config.design is not None or config.ensemble is not None
    if config.s is None:
        raise ConfigError("bounds needs a sparsity --s")

    if has_design:
        X = config.load_design()
        p, n = X.p, X.n
        if args.delta is None:
            extremum = delta(X, config.s, cap=config.cap, workers=config.workers)
            delta_value, delta_source = extremum.value, "exhaustive"
        else:
            delta_value, delta_source = args.delta, "override"
    else:
        if args.p is None or args.delta is None:
            raise ConfigError("bounds needs --p and --delta, or a design source")
        p, delta_value, delta_source = args.p, args.delta, "override"
        n = args.n if args.n is not None else p

    lower = None
    if args.A is not None:
        if args.k is None or args.c is None:
            raise ConfigError("the lower bound expression needs --k, --c and --A")
        lower = {"k": args.k, "c": args.c, "A": args.A}

    bounds = compute_bounds(
        p,
        config.s,
        n,
        delta_value,
        config.alpha,
        config.r,
        grid_size=config.grid_size,
        rho_mode=args.rho_mode,
        lower=lower,
    )
    if args.format == "csv":
        if args.output is not None:
            write_sidecar("bounds", config.resolved(), SCAN_COLUMNS, args.output)
        return render_csv([scan_row(bounds)], SCAN_COLUMNS)
    result = {"delta_source": delta_source, **bounds.as_record()}
    return render_json(document("bounds", config.resolved(), result))


def cmd_lower(args) -> str:
    config = _run_config(args)
    if config.s is None:
        raise ConfigError("lower needs a sparsity --s")
    if args.p is None:
        raise ConfigError("lower needs --p")
    if args.delta is not None:
        c, k = corollary_design(args.p, config.s, args.delta)
    elif args.k is not None and args.c is not None:
        c, k = args.c, args.k
    else:
        raise ConfigError("lower needs --k and --c, or a target --delta")

    X = make_equicorr(args.p, k, c)
    lower = empirical_lower_bound(
        args.p, k, c, config.s, config.alpha, config.reps, config.seed, config.workers
    )
    result = {
        "design": _design_summary(X),
        "k": k,
        "c": c,
        "delta_exact": c * math.sqrt(config.s - 1),
        "empirical_lower": lower.gauss_width_lower,
        "empirical_lower_se": lower.se,
        "k_lower": lower.k_lower,
        "lower_expr": lower_bound_expr(config.s, k, c, args.A) if args.A is not None else None,
    }
    if not args.no_mc:
        contrasts = contrast_set(X, ModelFamily.sparse(X.p, config.s), cap=config.cap)
        estimate = estimate_K(contrasts, config.alpha, config.r, config.reps, config.seed, config.workers)
        result.update(estimate.to_record())
    return _render(args, "lower", config.resolved(), result)


def cmd_bl(args) -> str:
    log_rho = parse_log_rho(args.rho)
    params = BellParams(args.q, parse_dof(args.r), log_rho, args.level, args.grid)
    value = solve_B_ell(params)
    config = {
        "q": args.q,
        "r": format_dof(params.r),
        "rho": args.rho,
        "log_rho": log_rho,
        "level": args.level,
        "grid_size": args.grid,
    }
    result = {"value": value, "residual": abs(H_eval(value, params) - args.level)}
    return _render(args, "bl", config, result)


def cmd_cover(args) -> str:
    config = _run_config(args)
    X = config.load_design()
    family = config.load_family(X.p)
    if not args.sigma > 0:
        raise DomainError(f"sigma must be positive, got {args.sigma}")

    if args.mu_seed is None:
        mu = np.zeros(X.n)
    else:
        beta = RngStream(args.mu_seed, 0).generator().standard_normal(X.p)
        mu = X.entries @ beta

    choice = args.k.strip().lower()
    k_source = choice
    if choice == "khat":
        contrasts = contrast_set(X, family, cap=config.cap)
        k_seed = args.k_seed if args.k_seed is not None else (config.seed + 1) % 2**64
        estimate = estimate_K(contrasts, config.alpha, config.r, max(config.reps, MIN_REPS), k_seed, config.workers)
        K = estimate.k_hat
    elif choice == "ubar-sparse":
        s = family.s if family.s is not None else max(len(m) for m in family.members)
        K = u_bar(u_sparse(X.p, s), config.alpha, config.r)
    else:
        try:
            K = float(choice)
        except ValueError as e:
            raise ConfigError(f"--k must be a number, 'khat' or 'ubar-sparse', got {args.k!r}") from e
        k_source = "value"

    cover = coverage_sim(
        X, mu, args.sigma, family, config.alpha, config.r, K, config.reps, config.seed, config.workers
    )
    result = {
        "design": _design_summary(X),
        "k_source": k_source,
        "K": K,
        "sigma": args.sigma,
        "mu_seed": args.mu_seed,
        "coverage": cover.coverage,
        "se": cover.se,
        "reps": cover.reps,
        "nominal": cover.nominal,
    }
    return _render(args, "cover", config.resolved(), result)


def cmd_scan(args):
    grid = ScanGrid.from_file(args.grid)
    if args.resume and args.output is None:
        raise ConfigError("--resume needs an --output file")
    columns = RATE_COLUMNS if grid.mode == "rates" else SCAN_COLUMNS
    done = completed_rows(args.output, columns) if args.resume else 0
    if args.output is not None:
        write_sidecar("scan", grid.model_dump(), columns, args.output)
    if done == 0:
        write_text(render_csv([], columns), args.output)
    else:
        logger.info("Resuming %s after %s completed rows", args.output, done)

    for index, cell in enumerate(grid.cells()):
        if index < done:
            continue
        logger.info("Scan row %s: %s", index, cell)
        row = _scan_cell(grid, cell, args.workers)
        write_text(render_csv([row], columns, header=False), args.output, append=args.output is not None)
    return None


def _scan_cell(grid: ScanGrid, cell: dict, workers: int) -> dict:
    if grid.mode == "rates":
        return rate_row(cell["p"], cell["s"], cell["delta"])

    if "ensemble" not in cell:
        bounds = compute_bounds(
            cell["p"],
            cell["s"],
            cell["n"],
            cell["delta"],
            cell["alpha"],
            cell["r"],
            grid_size=grid.grid_size,
            rho_mode=grid.rho_mode,
        )
        return scan_row(bounds)

    X = parse_ensemble(cell["ensemble"])
    s = cell["s"]
    delta_value = delta(X, s, workers=workers).value
    bounds = compute_bounds(
        X.p, s, X.n, delta_value, cell["alpha"], cell["r"], grid_size=grid.grid_size, rho_mode=grid.rho_mode
    )
    if not grid.reps:
        return scan_row(bounds)

    contrasts = contrast_set(X, ModelFamily.sparse(X.p, s))
    estimate = estimate_K(contrasts, cell["alpha"], cell["r"], grid.reps, grid.seed, workers)
    lower_emp = None
    name, fields = split_ensemble(cell["ensemble"])
    if name == "equicorr" and s <= fields["k"]:
        lower_emp = empirical_lower_bound(
            fields["p"], fields["k"], fields["c"], s, cell["alpha"], grid.reps, grid.seed, workers
        ).gauss_width_lower
    return scan_row(bounds, estimate, lower_emp)


# --------------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workers", type=int, default=1, help="Worker threads (results do not depend on it)")
    common.add_argument("--log-level", default="WARNING", help="Logging level on stderr")
    common.add_argument("--format", choices=("json", "csv"), default="json", help="Output format")
    common.add_argument("--output", default=None, help="Output file (default: stdout)")

    source = argparse.ArgumentParser(add_help=False)
    source.add_argument("--design", default=None, help="Design matrix CSV file")
    source.add_argument("--ensemble", default=None, help="Ensemble spec, e.g. gauss:n=200,p=40,seed=7")

    family = argparse.ArgumentParser(add_help=False)
    family.add_argument("--s", type=int, default=None, help="Sparsity of the family")
    family.add_argument("--family", default=None, help="File with one model per line (1-based)")
    family.add_argument("--cap", type=int, default=DEFAULT_ENUMERATION_CAP, help="Enumeration cap")

    sampling = argparse.ArgumentParser(add_help=False)
    sampling.add_argument("--alpha", type=float, default=0.05)
    sampling.add_argument("--r", default="inf", help='Degrees of freedom, an integer or "inf"')
    sampling.add_argument("--reps", type=int, default=10000)
    sampling.add_argument("--seed", type=int, default=0)

    parser = argparse.ArgumentParser(prog="posi-bounds", description="PoSI constants and RIP-based bounds")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    estimate = commands.add_parser(
        "estimate", parents=[common, source, family, sampling], help="Monte Carlo PoSI constant"
    )
    estimate.add_argument("--skip-deficient", action="store_true", help="Leave out rank-deficient models")
    estimate.add_argument(
        "--stream", action="store_true", help="Fold the family chunk by chunk instead of holding every contrast"
    )
    estimate.set_defaults(handler=cmd_estimate)

    rip = commands.add_parser("rip", parents=[common, source, family], help="Exhaustive RIP constants")
    rip.add_argument("--samples", type=int, default=None, help="Sample subsets above the cap")
    rip.add_argument("--seed", type=int, default=0)
    rip.set_defaults(handler=cmd_rip)

    bounds = commands.add_parser("bounds", parents=[common, source, family], help="Every bound of a configuration")
    bounds.add_argument("--p", type=int, default=None)
    bounds.add_argument("--n", type=int, default=None, help="Rows (default: p)")
    bounds.add_argument("--delta", type=float, default=None, help="RIP constant override")
    bounds.add_argument("--alpha", type=float, default=0.05)
    bounds.add_argument("--r", default="inf")
    bounds.add_argument("--grid", type=int, default=DEFAULT_GRID_SIZE, help="Grid size of B_l")
    bounds.add_argument("--rho-mode", choices=RHO_MODES, default="models")
    bounds.add_argument("--k", type=int, default=None)
    bounds.add_argument("--c", type=float, default=None)
    bounds.add_argument("--A", type=float, default=None, help="Constant of the lower bound expression")
    bounds.set_defaults(handler=cmd_bounds)

    lower = commands.add_parser("lower", parents=[common, sampling], help="Lower-bound experiment on Z^(c,k)")
    lower.add_argument("--p", type=int, default=None)
    lower.add_argument("--s", type=int, default=None)
    lower.add_argument("--k", type=int, default=None)
    lower.add_argument("--c", type=float, default=None)
    lower.add_argument("--delta", type=float, default=None, help="Target RIP constant instead of --k/--c")
    lower.add_argument("--A", type=float, default=None)
    lower.add_argument("--cap", type=int, default=DEFAULT_ENUMERATION_CAP)
    lower.add_argument("--no-mc", action="store_true", help="Skip the PoSI constant estimate")
    lower.set_defaults(handler=cmd_lower)

    scan = commands.add_parser("scan", parents=[common], help="Cartesian scan to CSV")
    scan.add_argument("grid", help="JSON grid file")
    scan.add_argument("--resume", action="store_true", help="Skip rows already in --output")
    scan.set_defaults(handler=cmd_scan)

    bl = commands.add_parser("bl", parents=[common], help="Solve B_l(q, r, rho) at one level")
    bl.add_argument("--q", type=int, required=True)
    bl.add_argument("--r", default="inf")
    bl.add_argument("--rho", default="1")
    bl.add_argument("--level", type=float, default=0.05)
    bl.add_argument("--grid", type=int, default=DEFAULT_GRID_SIZE)
    bl.set_defaults(handler=cmd_bl)

    cover = commands.add_parser("cover", parents=[common, source, family, sampling], help="Coverage simulation")
    cover.add_argument("--k", default="khat", help='A number, "khat" or "ubar-sparse"')
    cover.add_argument("--k-seed", type=int, default=None, help="Seed of the khat estimate (default: seed + 1)")
    cover.add_argument("--sigma", type=float, default=1.0)
    cover.add_argument("--mu-seed", type=int, default=None, help="Draw mu = X beta with this seed (default: mu = 0)")
    cover.set_defaults(handler=cmd_cover)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        if args.workers < 1:
            raise ConfigError(f"--workers must be >= 1, got {args.workers}")
        text = args.handler(args)
        if text is not None:
            write_text(text, args.output)
    except PosiError as e:
        print(f"error: {e.reason}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK
