#!/usr/bin/env python3
"""
CLI interface for the asymflat lab.

Commands:
- mass: flux mass along a radius ladder, with the extrapolated limit
- center: flux center of mass (and the mean-curvature center on half-spaces)
- deficit: isoperimetric deficits J32, J31, J21 (RelJ32 on half-spaces)
- foliate: leaf sweep, geometric center and nesting report
- spectrum: Jacobi and Laplacian spectra on leaves or coordinate spheres
- verify: identity reports for a named identity set
- local: small geodesic-sphere coefficients in S^3 and H^3

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""
import argparse
import sys
from enum import Enum
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from asymptotics import IDENTITY_SETS, run_identity_set
from config import get_config, set_config
from errors import NumericalFailure, UsageError
from foliation import Condition, SolverConfig, leaf_to_json, nominal_center, solve_leaf, sweep
from harmonics import build_grid
from invariants import (
    MIN_SAMPLES, SMALL_SPHERE_RADII, DeficitKind, ModelSpace, center_from_H, deficit, extrapolate,
    flux_center, flux_mass, small_sphere, sweep_series,
)
from metric import MetricSpec, load_spec
from results import write_csv, write_json
from stability import OperatorTag, assemble, fit_leaf_spectra, spectrum
from surface import GraphSurface

console = Console(stderr=True)


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


class RunConfig(BaseModel):
    """Fully resolved parameters of one CLI run; embedded in every output file."""

    command: str
    metric: Optional[str] = Field(default=None, description="Metric spec: inline JSON or a file path")
    radii: List[float] = Field(default_factory=list, description="Radius ladder")
    l_max: int = Field(default=8, ge=2)
    l_quad: int = Field(default=24, ge=4)
    tolerance: float = Field(default=1e-10, gt=0)
    out: str = Field(default="csv", description="Output format: csv or json")
    output: Optional[str] = Field(default=None, description="Output file; stdout when omitted")
    options: dict = Field(default_factory=dict, description="Subcommand-specific options")

    @field_validator("radii")
    @classmethod
    def _increasing(cls, value):
        if any(r <= 0 for r in value):
            raise ValueError("radii must be positive")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("radii must be strictly increasing")
        return value

    @field_validator("out")
    @classmethod
    def _known_format(cls, value):
        if value not in (OutputFormat.CSV, OutputFormat.JSON):
            raise ValueError(f"output format must be csv or json, got {value!r}")
        return value

    @property
    def output_path(self) -> Optional[Path]:
        return Path(self.output) if self.output else None


def parse_ladder(text: str) -> List[float]:
    """'10,20,40' or the geometric shorthand 'start:stop:xK' (both ends included)."""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, step = text.split(":")
            if not step.startswith("x"):
                raise ValueError(f"ladder step must look like x2, got {step!r}")
            start, stop, ratio = float(start), float(stop), float(step[1:])
            if start <= 0 or ratio <= 1 or stop < start:
                raise ValueError("ladder needs 0 < start <= stop and ratio > 1")
            radii = []
            r = start
            while r <= stop * (1.0 + 1e-12):
                radii.append(r)
                r *= ratio
            return radii
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise UsageError(f"bad radius ladder {text!r}: {e}") from e


def _resolve(args, **options) -> RunConfig:
    try:
        run = RunConfig(
            command=args.command,
            metric=getattr(args, "metric", None),
            radii=parse_ladder(args.radii) if getattr(args, "radii", None) else [],
            l_max=args.l_max or get_config().l_max,
            l_quad=args.l_quad or get_config().l_quad,
            tolerance=args.tolerance or get_config().tolerance,
            out=args.out,
            output=args.output,
            options=options,
        )
    except ValidationError as e:
        raise UsageError(str(e)) from e
    set_config(get_config().model_copy(update={
        "l_max": run.l_max, "l_quad": run.l_quad, "tolerance": run.tolerance,
    }))
    return run


def _spec(run: RunConfig) -> MetricSpec:
    if not run.metric:
        raise UsageError("--metric is required")
    return load_spec(run.metric)


def _emit(run: RunConfig, columns, rows, payload) -> None:
    if run.out == OutputFormat.JSON:
        write_json(run.output_path, payload, run)
    else:
        write_csv(run.output_path, columns, rows, run)


def _header(title: str, spec: Optional[MetricSpec] = None) -> None:
    body = f"[bold]{title}[/bold]"
    if spec is not None:
        body += f"\nfamily={spec.family.value} m={spec.m:g} c={tuple(spec.c)}"
    console.print(Panel(body, border_style="blue"))


def _fit(radii, series):
    if len(radii) < MIN_SAMPLES:
        console.print(f"[yellow]Fewer than {MIN_SAMPLES} radii: no extrapolation[/yellow]")
        return None
    return extrapolate(series)


# =============================================================================
# Commands
# =============================================================================

def cmd_mass(args):
    """Flux mass along the ladder."""
    run = _resolve(args)
    spec = _spec(run)
    _header("Flux mass", spec)
    series = sweep_series(lambda r: flux_mass(spec, r), run.radii)
    fit = _fit(run.radii, series)
    limit = fit.limit if fit else None
    rate = fit.rate if fit else None
    rows = [[r, v, limit, rate] for r, v in zip(run.radii, series.values)]
    _emit(run, ["r", "mass", "limit", "rate"], rows,
          {"radii": run.radii, "values": series.values, "fit": fit})
    if fit:
        console.print(f"[green]mass limit {fit.limit!r} (rate {fit.rate:.3f})[/green]")
    return 0


def cmd_center(args):
    """Flux center of mass; on half-spaces also the mean-curvature center."""
    run = _resolve(args)
    spec = _spec(run)
    _header("Center of mass", spec)
    series = sweep_series(lambda r: flux_center(spec, r), run.radii)
    fit = _fit(run.radii, series)
    dims = series.values.shape[1]
    columns = ["r"] + [f"C{k + 1}" for k in range(dims)]
    h_values = None
    if spec.is_half:
        h_values = np.asarray([center_from_H(spec, r) for r in run.radii])
        columns += [f"H{k + 1}" for k in range(dims)]
    rows = []
    for k, r in enumerate(run.radii):
        row = [r, *series.values[k]]
        if h_values is not None:
            row += list(h_values[k])
        rows.append(row)
    _emit(run, columns, rows, {
        "radii": run.radii, "values": series.values, "fit": fit,
        "center_from_H": h_values,
    })
    if fit:
        console.print(f"[green]center limit {np.round(fit.limit, 8).tolist()}[/green]")
    return 0


def cmd_deficit(args):
    """Isoperimetric deficits per kind, with extrapolated limits."""
    kinds = [DeficitKind(k.strip()) for k in args.kinds.split(",")]
    run = _resolve(args, kinds=[k.value for k in kinds], two_term=not args.single_term)
    spec = _spec(run)
    _header("Isoperimetric deficits", spec)
    table = Table(title="Deficit limits")
    table.add_column("Kind", style="cyan")
    table.add_column("Limit", style="green")
    table.add_column("Rate", style="magenta")
    rows, payload = [], {}
    for kind in kinds:
        series = sweep_series(lambda r: deficit(spec, r, kind), run.radii)
        fit = extrapolate(series, two_term=not args.single_term) if len(run.radii) >= MIN_SAMPLES else None
        for r, v in zip(run.radii, series.values):
            rows.append([kind.value, r, v, fit.limit if fit else None, fit.rate if fit else None])
        payload[kind.value] = {"values": series.values, "fit": fit}
        table.add_row(kind.value, f"{fit.limit:.6f}" if fit else "-", f"{fit.rate:.3f}" if fit else "-")
    _emit(run, ["kind", "r", "value", "limit", "rate"], rows, {"radii": run.radii, "kinds": payload})
    console.print(table)
    return 0


def cmd_foliate(args):
    """Leaf sweep, leaf files and the geometric center."""
    condition = Condition(args.condition)
    run = _resolve(args, condition=condition.value, leaf_dir=args.leaf_dir)
    spec = _spec(run)
    _header(f"Foliation ({condition.value})", spec)
    result = sweep(spec, run.radii, SolverConfig.from_config(condition))
    if args.leaf_dir:
        leaf_dir = Path(args.leaf_dir)
        for leaf in result.leaves:
            write_json(leaf_dir / f"leaf_{leaf.rho:g}.json", leaf_to_json(leaf), run)
    dims = result.centroids.shape[1]
    columns = ["rho", "residual", "iterations", "achieved"] + [f"centroid{k + 1}" for k in range(dims)]
    rows = [
        [leaf.rho, leaf.residual, leaf.iterations, leaf.achieved, *result.centroids[k]]
        for k, leaf in enumerate(result.leaves)
    ]
    _emit(run, columns, rows, {
        "leaves": [leaf_to_json(leaf) for leaf in result.leaves],
        "centroids": result.centroids,
        "geometric_center": result.geometric_center,
        "center_fit": result.center_fit,
        "nesting": result.nesting,
    })
    style = "green" if result.nesting.ok else "yellow"
    console.print(f"[{style}]geometric center {np.round(result.geometric_center, 8).tolist()}, "
                  f"nesting {'ok' if result.nesting.ok else 'VIOLATED'}[/{style}]")
    return 0


DEFAULT_CONDITIONS = {
    OperatorTag.CMC_JACOBI: Condition.CMC,
    OperatorTag.TILDE_K_JACOBI: Condition.CONST_TILDE_K,
    OperatorTag.LAPLACIAN: Condition.CMC,
    OperatorTag.ROBIN_LAPLACIAN: Condition.FREE_BOUNDARY_CMC,
}
LEADING_POWER = {
    OperatorTag.CMC_JACOBI: 2.0,
    OperatorTag.TILDE_K_JACOBI: 3.0,
    OperatorTag.LAPLACIAN: 2.0,
    OperatorTag.ROBIN_LAPLACIAN: 2.0,
}


def cmd_spectrum(args):
    """Spectra of an operator on leaves (or coordinate spheres) along the ladder."""
    tag = OperatorTag(args.operator)
    run = _resolve(args, operator=tag.value, k=args.k, coordinate=args.coordinate)
    spec = _spec(run)
    _header(f"Spectrum ({tag.value})", spec)
    condition = DEFAULT_CONDITIONS[tag]
    if spec.is_half and condition == Condition.CMC:
        condition = Condition.FREE_BOUNDARY_CMC
    cfg = SolverConfig.from_config(condition)
    grid = build_grid(run.l_quad, cfg.domain)

    def one(rho: float):
        if args.coordinate:
            surf = GraphSurface.round(nominal_center(spec), rho, cfg.domain, l_max=run.l_max)
        else:
            surf = solve_leaf(spec, rho, cfg).surface
        return spectrum(assemble(spec, surf, grid, tag, run.l_max), k=args.k)

    spectra = [one(rho) for rho in run.radii]
    lowest = [s.eigenvalues[0] for s in spectra]
    constrained = [s.constrained for s in spectra]
    fits = {}
    power = LEADING_POWER[tag]
    if len(run.radii) >= 2:
        fits["lowest"] = fit_leaf_spectra(run.radii, lowest, power)
        fits["constrained"] = fit_leaf_spectra(run.radii, constrained, power + 1.0)
    columns = ["rho"] + [f"lambda{k}" for k in range(args.k)] + ["constrained"]
    rows = [[rho, *s.eigenvalues, s.constrained] for rho, s in zip(run.radii, spectra)]
    _emit(run, columns, rows, {"radii": run.radii, "spectra": spectra, "fits": fits})
    for name, fit in fits.items():
        console.print(f"[green]{name}: coefficients {fit.coefficients} on powers {fit.powers}[/green]")
    return 0


def cmd_verify(args):
    """Identity reports for a named identity set."""
    run = _resolve(args, identity_set=args.set)
    spec = _spec(run) if args.set != "small-sphere" else None
    _header(f"Verify {args.set}", spec)
    reports = run_identity_set(args.set, spec, run.radii)
    table = Table(title="Identity reports")
    table.add_column("Identity", style="cyan")
    table.add_column("Exponent", style="magenta")
    table.add_column("Claimed")
    table.add_column("Result")
    rows = []
    for report in reports:
        verdict = "[green]pass[/green]" if report.passed else "[red]fail[/red]"
        table.add_row(report.tag, "exact" if report.exact else f"{report.exponent:.3f}", f"{report.claimed:g}", verdict)
        for r, v in zip(report.radii, report.residuals):
            rows.append([report.tag, r, v, report.exponent, report.claimed, report.passed])
    _emit(run, ["identity", "r", "residual", "exponent", "claimed", "passed"], rows, reports)
    console.print(table)
    return 0 if all(r.passed for r in reports) else 2


def cmd_local(args):
    """c_{k,h} coefficients of small geodesic spheres."""
    models = [ModelSpace(m.strip()) for m in args.models.split(",")]
    run = _resolve(args, models=[m.value for m in models])
    _header("Small geodesic spheres")
    radii = run.radii or list(SMALL_SPHERE_RADII)
    rows = []
    for model in models:
        for kind in ((3, 2), (3, 1), (2, 1)):
            rows.append([model.value, f"{kind[0]}{kind[1]}", small_sphere(model, kind, radii)])
    _emit(run, ["model", "kind", "coefficient"], rows,
          [{"model": m, "kind": k, "coefficient": c} for m, k, c in rows])
    return 0


# =============================================================================
# Entry point
# =============================================================================

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _common(parser: argparse.ArgumentParser, metric: bool = True, radii: bool = True) -> None:
    if metric:
        parser.add_argument("--metric", "-m", required=True, help="Metric spec JSON (inline or file path)")
    if radii:
        parser.add_argument("--radii", "-r", required=True, help="Radius ladder: 10,20,40 or 50:800:x2")
    parser.add_argument("--l-max", type=int, default=None, help="Harmonic cutoff (default: ASYMFLAT_L_MAX)")
    parser.add_argument("--l-quad", type=int, default=None, help="Quadrature degree (default: ASYMFLAT_L_QUAD)")
    parser.add_argument("--tolerance", type=float, default=None, help="Solver tolerance (default: ASYMFLAT_TOLERANCE)")
    parser.add_argument("--out", default="csv", help="Output format: csv or json")
    parser.add_argument("--output", "-o", default=None, help="Output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        description="asymflat lab - invariants, foliations and spectra of asymptotically flat 3-manifolds",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python cli.py mass --metric specs/flat.json --radii 10,20
  python cli.py deficit --metric specs/schwarzschild.json --kinds J32,J31,J21 --radii 50:800:x2
  python cli.py center --metric specs/half_schw_shift.json --radii 50:800:x2
  python cli.py foliate --metric specs/half_schw_shift.json --condition fb-cmc --radii 50,100,200
  python cli.py spectrum --metric specs/schwarzschild.json --operator tilde-k --radii 40:320:x2
  python cli.py verify --metric specs/schwarzschild.json --set h-expansion --radii 25:400:x2
  python cli.py local --models S3,H3

Environment:
  ASYMFLAT_THREADS caps parallelism; see .env.example for the rest.
        """,
    )
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    mass_parser = subparsers.add_parser("mass", help="Flux mass along a radius ladder")
    _common(mass_parser)

    center_parser = subparsers.add_parser("center", help="Flux center of mass")
    _common(center_parser)

    deficit_parser = subparsers.add_parser("deficit", help="Isoperimetric deficits")
    _common(deficit_parser)
    deficit_parser.add_argument("--kinds", default="J32,J31,J21", help="Comma-separated deficit kinds")
    deficit_parser.add_argument("--single-term", action="store_true", help="Fit L + C r^-a instead of L + C1 r^-a + C2 r^-(a+1)")

    foliate_parser = subparsers.add_parser("foliate", help="Solve a leaf sweep")
    _common(foliate_parser)
    foliate_parser.add_argument("--condition", default="cmc", choices=[c.value for c in Condition])
    foliate_parser.add_argument("--leaf-dir", default=None, help="Directory for per-leaf JSON files")

    spectrum_parser = subparsers.add_parser("spectrum", help="Operator spectra along a ladder")
    _common(spectrum_parser)
    spectrum_parser.add_argument("--operator", default="cmc", choices=[t.value for t in OperatorTag])
    spectrum_parser.add_argument("--k", type=int, default=6, help="Number of eigenvalues")
    spectrum_parser.add_argument("--coordinate", action="store_true", help="Use coordinate spheres instead of leaves")

    verify_parser = subparsers.add_parser("verify", help="Identity reports")
    _common(verify_parser, metric=False)
    verify_parser.add_argument("--metric", "-m", default=None, help="Metric spec JSON (inline or file path)")
    verify_parser.add_argument("--set", required=True, choices=sorted(IDENTITY_SETS))

    local_parser = subparsers.add_parser("local", help="Small geodesic-sphere coefficients")
    _common(local_parser, metric=False, radii=False)
    local_parser.add_argument("--models", default="S3,H3", help="Comma-separated model spaces")
    local_parser.add_argument("--radii", "-r", default=None, help="Small radii (default 0.01..0.08)")
    return parser


COMMANDS = {
    "mass": cmd_mass,
    "center": cmd_center,
    "deficit": cmd_deficit,
    "foliate": cmd_foliate,
    "spectrum": cmd_spectrum,
    "verify": cmd_verify,
    "local": cmd_local,
}


def run(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run one subcommand and map errors to exit codes."""
    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            build_parser().print_help(sys.stderr)
            return 1
        return COMMANDS[args.command](args)
    except NumericalFailure as e:
        console.print(f"[red]Numerical failure in {e.stage}: {e}[/red]")
        return 2
    except (UsageError, ValidationError, ValueError) as e:
        console.print(f"[red]Error: {e}[/red]")
        return 1


def main():
    return run()


if __name__ == "__main__":
    sys.exit(main())
