#!/usr/bin/env python3
"""
Demo Script for the NTS PIDE Pricer
Walks through presets, weights, a small PIDE solve and a Monte Carlo cross-check
"""

import sys
import time

import numpy as np
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from app.config import configure_logging
from app.errors import PricerError
from app.experiments import prepare, run_mc_check, run_price
from app.levy_model import martingale_exponent, variance_of_L
from app.models import RunConfig
from app.presets import PRESETS

console = Console()

DEMO_PRESET = "VG1"
DEMO_NX = 32
DEMO_PATHS = 100_000


def print_header(text):
    """Print a styled header"""
    console.print(Panel(f"[bold cyan]{text}[/bold cyan]", expand=False))


def demo_presets():
    """Show the presets with the moments of their jump parts"""
    print_header("📚 Demo: Parameter sets")
    table = Table()
    for column in ("preset", "alpha", "std 1", "std 2", "corr", "kappa 1", "kappa 2"):
        table.add_column(column, justify="right")
    for name, model in PRESETS.items():
        cov = variance_of_L(model)
        std = np.sqrt(np.diag(cov))
        kappa = martingale_exponent(model)
        table.add_row(
            name, f"{model.alpha:g}", f"{std[0]:.4f}", f"{std[1]:.4f}",
            f"{cov[0, 1] / (std[0] * std[1]):.4f}", f"{kappa[0]:.4f}", f"{kappa[1]:.4f}",
        )
    console.print(table)
    console.print()


def demo_weights():
    """Build the quadrature weights on a small grid"""
    print_header("⚖️  Demo: Quadrature weights")
    setup = prepare(RunConfig(preset=DEMO_PRESET, n_x=DEMO_NX))
    console.print(f"N_z = [cyan]{setup.zgrid.n_z}[/cyan], h_z = {setup.zgrid.h_z:.5f}")
    console.print(f"sum(omega) = {setup.scheme.omega.sum():.5f}, r_w = {setup.scheme.r_w:.5f}")
    console.print(f"✅ Grid core fraction {setup.grid.core_fraction:.3f}\n")


def demo_price():
    """Solve the PIDE at a small N_x and print the price table"""
    print_header(f"💰 Demo: PIDE prices ({DEMO_PRESET}, N_x={DEMO_NX})")
    console.print("⏳ Solving...")
    started = time.perf_counter()
    run = run_price(RunConfig(preset=DEMO_PRESET, n_x=DEMO_NX))
    table = Table()
    for column in ("x1", "x2", "price"):
        table.add_column(column, justify="right")
    for point in run.table:
        table.add_row(f"{point.x1:g}", f"{point.x2:g}", f"{point.price:.4f}")
    console.print(table)
    console.print(f"✅ Solved in [cyan]{time.perf_counter() - started:.1f}s[/cyan]\n")


def demo_mc_check():
    """Compare the PIDE price with the Monte Carlo oracle at the money"""
    print_header("🎲 Demo: Monte Carlo cross-check")
    config = RunConfig(preset=DEMO_PRESET, n_x=DEMO_NX, points=[(100.0, 100.0)])
    row = run_mc_check(config, n_paths=DEMO_PATHS)[0]
    console.print(
        f"PIDE {row.pide_price:.4f} vs MC {row.mc.price:.4f} ± {row.mc.standard_error:.4f} "
        f"(z = {row.z_score:+.2f})"
    )
    console.print("✅ Done (coarse grid, so small deviations are expected)\n")


def main():
    configure_logging("WARNING")
    try:
        demo_presets()
        demo_weights()
        demo_price()
        demo_mc_check()
    except PricerError as exc:
        console.print(f"[red]❌ {exc}[/red]")
        sys.exit(1)
    console.print("[green]✅ Demo complete![/green]")


if __name__ == "__main__":
    main()
