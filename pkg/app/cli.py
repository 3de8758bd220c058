"""
Command line entry point: pide-pricer {price,converge,weights,mc-check}.

Settings are layered: command-line flags override the JSON config file,
which overrides the preset defaults.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from app.config import configure_logging, settings
from app.errors import PricerError
from app.experiments import run_converge, run_mc_check, run_price, run_weights
from app.models import RunConfig
from app.presets import preset_names
from app.repository import ResultRepository

console = Console()


def print_header(text: str) -> None:
    console.print(Panel(f"[bold cyan]{text}[/bold cyan]", expand=False))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", choices=preset_names(), type=str.upper, help="named parameter set")
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--nx", type=int, help="spatial grid size N_x")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="Monte Carlo seed")
    common.add_argument("--threads", type=int, help="FFT and Monte Carlo worker threads")
    common.add_argument("--log-level", default=None, help="logging level (default from settings)")

    parser = argparse.ArgumentParser(prog="pide-pricer", description="Two-asset NTS Lévy PIDE option pricer")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("price", parents=[common], help="price surface, Greeks and the price table")
    converge = sub.add_parser("converge", parents=[common], help="total-error study and fitted order")
    converge.add_argument("--n-list", type=int, nargs="+", help="grid sizes to study")
    converge.add_argument("--n-ref", type=int, help="reference grid size")
    sub.add_parser("weights", parents=[common], help="quadrature weights and corrected coefficients")
    mc = sub.add_parser("mc-check", parents=[common], help="PIDE prices against the Monte Carlo oracle")
    mc.add_argument("--paths", type=int, help="number of Monte Carlo paths")
    mc.add_argument("--antithetic", action="store_true", help="use antithetic Brownian draws")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    """Merge flags over the config file over preset defaults."""
    data: Dict[str, Any] = {}
    if args.config is not None:
        data = json.loads(args.config.read_text(encoding="utf-8"))
    data.setdefault("out_dir", settings.out_dir)
    solver = dict(data.get("solver", {}))
    mc = dict(data.get("mc", {}))
    solver.setdefault("threads", settings.threads)
    mc.setdefault("threads", settings.threads)
    mc.setdefault("seed", settings.seed)

    if args.preset is not None:
        data["preset"] = args.preset
        data.pop("model", None)
    if args.nx is not None:
        data["n_x"] = args.nx
        data.pop("n_z", None)
        solver.pop("n_t", None)
    if args.out is not None:
        data["out_dir"] = str(args.out)
    if args.seed is not None:
        mc["seed"] = args.seed
    if args.threads is not None:
        solver["threads"] = args.threads
        mc["threads"] = args.threads
    if getattr(args, "antithetic", False):
        mc["antithetic"] = True
    data["solver"] = solver
    data["mc"] = mc
    return RunConfig.model_validate(data)


def _price(config: RunConfig, repository: ResultRepository) -> None:
    print_header(f"💰 Pricing {config.preset or config.resolved_model().name} at N_x={config.n_x}")
    console.print("⏳ Solving...")
    run = run_price(config, repository)
    table = Table(title="Put on the average")
    for column in ("x1", "x2", "price"):
        table.add_column(column, justify="right")
    for point in run.table:
        table.add_row(f"{point.x1:g}", f"{point.x2:g}", f"{point.price:.4f}")
    console.print(table)
    console.print(f"✅ Done in [cyan]{run.manifest.timings['total']:.1f}s[/cyan]")


def _converge(config: RunConfig, repository: ResultRepository, n_list: Optional[List[int]], n_ref: Optional[int]) -> None:
    print_header("📉 Convergence study")
    report = run_converge(config, n_list, n_ref, repository)
    table = Table(title=f"Total error against N_ref={report.n_ref}")
    table.add_column("N", justify="right")
    table.add_column("E(N)", justify="right")
    for n, error in zip(report.n_values, report.errors):
        table.add_row(str(n), f"{error:.3e}")
    console.print(table)
    console.print(f"✅ Fitted order [cyan]{report.order:.2f}[/cyan] (residual {report.residual:.2e})")


def _weights(config: RunConfig, repository: ResultRepository) -> None:
    print_header("⚖️  Quadrature weights")
    zgrid, partition, scheme = run_weights(config, repository)
    console.print(f"N_z = {zgrid.n_z}, h_z = {zgrid.h_z:.6g}")
    console.print(f"z_max = ({partition.z_max_I:.4g}, {partition.z_max_II:.4g}, {partition.z_max_III:.4g})")
    console.print(f"sum(omega) = {scheme.omega.sum():.6g}, r_w = {scheme.r_w:.6g}")
    console.print(f"✅ Wrote weights for {(2 * zgrid.n_z) ** 2} cells")


def _mc_check(config: RunConfig, repository: ResultRepository, n_paths: Optional[int]) -> None:
    print_header("🎲 Monte Carlo cross-check")
    rows = run_mc_check(config, n_paths=n_paths, repository=repository)
    table = Table()
    for column in ("x0", "PIDE", "MC", "s.e.", "z"):
        table.add_column(column, justify="right")
    for row in rows:
        z = f"{row.z_score:+.2f}"
        table.add_row(
            f"({row.x0[0]:g}, {row.x0[1]:g})", f"{row.pide_price:.4f}", f"{row.mc.price:.4f}",
            f"{row.mc.standard_error:.4f}", f"[red]{z}[/red]" if row.flagged else z,
        )
    console.print(table)
    flagged = sum(row.flagged for row in rows)
    if flagged:
        console.print(f"❌ {flagged} point(s) with |z| > 3")
    else:
        console.print("✅ All points within 3 standard errors")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = load_config(args)
        repository = ResultRepository(config.out_dir)
        if args.command == "price":
            _price(config, repository)
        elif args.command == "converge":
            _converge(config, repository, args.n_list, args.n_ref)
        elif args.command == "weights":
            _weights(config, repository)
        else:
            _mc_check(config, repository, args.paths)
    except (PricerError, ValidationError, ValueError, OSError) as exc:
        console.print(f"❌ [red]{exc}[/red]")
        return 1
    console.print(f"Results in [cyan]{repository.out_dir}[/cyan]")
    return 0


if __name__ == "__main__":
    sys.exit(main())
