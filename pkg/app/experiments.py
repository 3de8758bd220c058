"""
Experiment orchestration: one function per CLI subcommand.

Each run resolves the effective discretization from a RunConfig, calls the
numerical modules and hands the results to a ResultRepository when one is
given.
"""
import logging
import time
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.grids import SpatialGrid, build_spatial_grid
from app.levy_model import martingale_exponent
from app.mc_oracle import McResult, mc_price
from app.models import ConvergenceReport, NtsModel, PayoffSpec, PricePoint, RunConfig, RunManifest, SolverConfig, Vector2
from app.quadrature import QuadratureScheme, RegionPartition, ZGrid, precompute_scheme
from app.repository import ResultRepository
from app.spatial_ops import interpolate_points
from app.stepper import PideOperators, PriceSurface, greeks, price_at, solve

logger = logging.getLogger(__name__)

Z_SCORE_LIMIT = 3.0


@dataclass
class PricingSetup:
    """Everything resolved from a RunConfig for one N_x."""
    model: NtsModel
    payoff: PayoffSpec
    grid: SpatialGrid
    zgrid: ZGrid
    partition: RegionPartition
    scheme: QuadratureScheme
    solver: SolverConfig

    def operators(self) -> PideOperators:
        return PideOperators(self.grid, self.scheme, self.zgrid, workers=self.solver.threads)

    def derived(self, ops: Optional[PideOperators] = None) -> Dict[str, Any]:
        """Effective and derived discretization parameters for the manifest."""
        values: Dict[str, Any] = {
            "n_x": self.grid.n_x,
            "n_z": self.zgrid.n_z,
            "n_t": self.solver.n_t,
            "x_int": self.grid.x_int,
            "x_max": self.grid.x_max,
            "c": None if np.isinf(self.grid.c) else float(self.grid.c),
            "f_achieved": float(self.grid.core_fraction),
            "f_nodes": float(np.mean(self.grid.nodes <= self.grid.x_int)),
            "h_z": self.zgrid.h_z,
            "z_max_I": self.partition.z_max_I,
            "z_max_II": float(self.partition.z_max_II),
            "z_max_III": self.partition.z_max_III,
            "kappa_w": [float(k) for k in self.scheme.kappa_w],
            "r_w": self.scheme.r_w,
            "sigma_w_sq": self.scheme.sigma_w_sq.tolist(),
            "martingale_exponent": [float(k) for k in martingale_exponent(self.model)],
        }
        if ops is not None:
            values.update(
                ny_minus=ops.ygrids.ny_minus,
                ny_plus=ops.ygrids.ny_plus,
                ny_star=ops.ygrids.ny_star,
                sharp_in=ops.ygrids.sharp_in,
                sharp_out=ops.ygrids.sharp_out,
            )
        return values


@dataclass
class PriceRun:
    surface: PriceSurface
    table: List[PricePoint]
    manifest: RunManifest


@dataclass
class McCheckRow:
    x0: Vector2
    pide_price: float
    mc: McResult

    @property
    def z_score(self) -> float:
        if self.mc.standard_error == 0.0:
            return 0.0 if abs(self.mc.price - self.pide_price) < 1e-12 else float("inf")
        return (self.mc.price - self.pide_price) / self.mc.standard_error

    @property
    def flagged(self) -> bool:
        return abs(self.z_score) > Z_SCORE_LIMIT


def prepare(config: RunConfig, n_x: Optional[int] = None) -> PricingSetup:
    """Resolve model, grids and weights; n_x overrides config.n_x with the default couplings."""
    model = config.resolved_model()
    size = n_x or config.n_x
    grid = build_spatial_grid(size, config.effective_x_max(), config.effective_x_int(), config.effective_f_target())
    zgrid, partition, scheme = precompute_scheme(model, config.effective_n_z(n_x), config.truncation_level)
    solver = config.solver.model_copy(update={"n_t": config.effective_n_t(n_x)})
    return PricingSetup(
        model=model,
        payoff=PayoffSpec(K=model.K),
        grid=grid,
        zgrid=zgrid,
        partition=partition,
        scheme=scheme,
        solver=solver,
    )


def _diagnostics(surface: PriceSurface) -> Dict[str, Any]:
    stats = surface.stats
    if stats is None:
        return {}
    ratios = [
        history[k] / history[k - 1]
        for history in stats.fp_differences
        for k in range(1, len(history))
        if history[k - 1] > 0
    ]
    return {
        "fp_iterations": stats.fp_iterations,
        "linear_iterations": stats.linear_iterations,
        "fp_differences": stats.fp_differences,
        "max_contraction_ratio": max(ratios) if ratios else None,
        "min_price": float(surface.values.min()),
    }


def solve_setup(setup: PricingSetup, ops: Optional[PideOperators] = None) -> PriceSurface:
    return solve(setup.payoff, setup.model.T, setup.grid, setup.scheme, setup.zgrid, setup.solver, ops=ops)


def run_price(config: RunConfig, repository: Optional[ResultRepository] = None) -> PriceRun:
    """Price surface with Greeks, the price table at config.points and a manifest."""
    started = time.perf_counter()
    setup = prepare(config)
    ops = setup.operators()
    prepared = time.perf_counter() - started

    surface = greeks(solve_setup(setup, ops))
    table = [PricePoint(x1=p[0], x2=p[1], price=price_at(surface, p)) for p in config.points]

    timings = {"prepare": prepared}
    timings.update(surface.stats.timings if surface.stats else {})
    timings["total"] = time.perf_counter() - started
    manifest = RunManifest(
        command="price",
        config=config.model_dump(mode="json"),
        model=setup.model.model_dump(mode="json", by_alias=True),
        derived=setup.derived(ops),
        diagnostics=_diagnostics(surface),
        timings=timings,
    )
    if repository is not None:
        repository.write_surface(surface)
        repository.write_table(table)
        repository.write_manifest(manifest)
    return PriceRun(surface=surface, table=table, manifest=manifest)


def total_error(coarse: PriceSurface, reference: PriceSurface, box: float) -> float:
    """max over coarse nodes in [0, box]^2 of |coarse - reference interpolated to the node|."""
    nodes = coarse.grid.nodes
    inside = nodes[nodes <= box * (1.0 + 1e-12)]
    x1, x2 = np.meshgrid(inside, inside, indexing="ij")
    points = np.stack([x1.ravel(), x2.ravel()], axis=-1)
    mine = coarse.as_array()[: inside.size, : inside.size].ravel()
    theirs = interpolate_points(reference.grid.nodes, reference.as_array(), points)
    return float(np.max(np.abs(mine - theirs)))


def fit_order(n_values: Sequence[int], errors: Sequence[float]) -> Tuple[float, float]:
    """Least-squares slope of log E against log N, returned as (order, RMS residual)."""
    pairs = [(n, e) for n, e in zip(n_values, errors) if e > 0.0]
    if len(pairs) < 2:
        return float("nan"), float("nan")
    log_n = np.log([n for n, _ in pairs])
    log_e = np.log([e for _, e in pairs])
    coeffs = np.polyfit(log_n, log_e, 1)
    residual = log_e - np.polyval(coeffs, log_n)
    return float(-coeffs[0]), float(np.sqrt(np.mean(residual**2)))


def run_converge(
    config: RunConfig,
    n_list: Optional[Sequence[int]] = None,
    n_ref: Optional[int] = None,
    repository: Optional[ResultRepository] = None,
) -> ConvergenceReport:
    """
    Total error E(N) against a reference solved once at n_ref, and the fitted order.

    Raises:
        ValueError: if n_ref is below the largest N studied
    """
    n_list = list(n_list or config.n_list)
    n_ref = n_ref or config.n_ref
    if n_ref < max(n_list):
        raise ValueError(f"reference N={n_ref} must not be below max(N)={max(n_list)}")

    started = time.perf_counter()
    reference = solve_setup(prepare(config, n_ref))
    box = 3.0 * config.resolved_model().K
    errors = []
    for n in n_list:
        surface = reference if n == n_ref else solve_setup(prepare(config, n))
        errors.append(total_error(surface, reference, box))
        logger.info("E(%d) = %.3e", n, errors[-1])
    order, residual = fit_order(n_list, errors)
    report = ConvergenceReport(
        n_values=n_list,
        errors=errors,
        order=order,
        residual=residual,
        n_ref=n_ref,
        note=f"regression over N={n_list} against N_ref={n_ref}",
    )
    if repository is not None:
        repository.write_convergence(report)
        repository.write_manifest(
            RunManifest(
                command="converge",
                config=config.model_dump(mode="json"),
                model=config.resolved_model().model_dump(mode="json", by_alias=True),
                derived={"order": order, "residual": residual},
                timings={"total": time.perf_counter() - started},
            )
        )
    return report


def run_weights(
    config: RunConfig, repository: Optional[ResultRepository] = None
) -> Tuple[ZGrid, RegionPartition, QuadratureScheme]:
    """Weight matrix and corrected coefficients for the configured N_z."""
    started = time.perf_counter()
    setup = prepare(config)
    if repository is not None:
        repository.write_weights(setup.zgrid, setup.scheme)
        repository.write_scheme(setup.partition, setup.scheme)
        repository.write_manifest(
            RunManifest(
                command="weights",
                config=config.model_dump(mode="json"),
                model=setup.model.model_dump(mode="json", by_alias=True),
                derived=setup.derived(),
                timings={"total": time.perf_counter() - started},
            )
        )
    return setup.zgrid, setup.partition, setup.scheme


def run_mc_check(
    config: RunConfig,
    points: Optional[Sequence[Vector2]] = None,
    n_paths: Optional[int] = None,
    repository: Optional[ResultRepository] = None,
) -> List[McCheckRow]:
    """PIDE price against the Monte Carlo oracle at each point; |z| > 3 is flagged."""
    started = time.perf_counter()
    points = list(points or config.points)
    mc_config = config.mc if n_paths is None else config.mc.model_copy(update={"n_paths": n_paths})
    setup = prepare(config)
    surface = solve_setup(setup)

    rows = []
    for x0 in points:
        mc = mc_price(setup.model, setup.payoff, x0, mc_config)
        row = McCheckRow(x0=tuple(x0), pide_price=price_at(surface, x0), mc=mc)
        if row.flagged:
            logger.warning("|z| = %.2f at x0=%s", abs(row.z_score), x0)
        rows.append(row)

    if repository is not None:
        repository.write_mc_check(rows)
        repository.write_manifest(
            RunManifest(
                command="mc-check",
                config=config.model_dump(mode="json"),
                model=setup.model.model_dump(mode="json", by_alias=True),
                derived=setup.derived(),
                diagnostics={"flagged": [list(r.x0) for r in rows if r.flagged]},
                timings={"total": time.perf_counter() - started},
            )
        )
    return rows
