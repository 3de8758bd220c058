import csv
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, List, Sequence

import numpy as np

from app.models import ConvergenceReport, PricePoint, RunManifest
from app.quadrature import QuadratureScheme, RegionPartition, ZGrid
from app.stepper import PriceSurface

if TYPE_CHECKING:
    from app.experiments import McCheckRow

logger = logging.getLogger(__name__)

SURFACE_HEADER = ["x1", "x2", "price", "delta1", "delta2", "gamma1", "gamma2"]
TABLE_HEADER = ["x1", "x2", "price"]
CONVERGENCE_HEADER = ["n", "error"]
WEIGHTS_HEADER = ["l1", "l2", "z1", "z2", "region", "omega"]
SCHEME_HEADER = ["quantity", "value"]
MC_CHECK_HEADER = ["x0_1", "x0_2", "pide_price", "mc_price", "mc_se", "z_score"]


class ResultRepository:
    """
    File storage for run results.

    Every table is a comma-separated file with a header row and LF line
    endings; floats are written with full repr precision so reruns of a
    deterministic computation give identical bytes.
    """

    def __init__(self, out_dir: str | Path):
        """Initialize the repository, creating the output directory if needed."""
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.written: List[Path] = []

    def _write_rows(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        path = self.out_dir / name
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
        if path not in self.written:
            self.written.append(path)
        logger.info("wrote %s", path)
        return path

    def write_surface(self, surface: PriceSurface) -> Path:
        """
        Write the price surface with Delta and Gamma along each axis.

        Args:
            surface: solution with Greeks attached (see stepper.greeks)

        Returns:
            Path: location of surface.csv
        """
        if surface.delta is None or surface.gamma is None:
            raise ValueError("surface has no Greeks; call stepper.greeks first")
        nodes = surface.grid.nodes
        n = nodes.size
        m1 = np.tile(np.arange(n), n)
        m2 = np.repeat(np.arange(n), n)
        columns = zip(
            nodes[m1], nodes[m2], surface.values,
            surface.delta[0], surface.delta[1], surface.gamma[0], surface.gamma[1],
        )
        return self._write_rows("surface.csv", SURFACE_HEADER, columns)

    def write_table(self, table: Sequence[PricePoint]) -> Path:
        return self._write_rows("table.csv", TABLE_HEADER, ((p.x1, p.x2, p.price) for p in table))

    def write_convergence(self, report: ConvergenceReport) -> Path:
        return self._write_rows("convergence.csv", CONVERGENCE_HEADER, zip(report.n_values, report.errors))

    def write_weights(self, zgrid: ZGrid, scheme: QuadratureScheme) -> Path:
        """
        Write one row per z-cell.

        Args:
            zgrid: grid whose cell midpoints label the rows
            scheme: weights and region labels

        Returns:
            Path: location of weights.csv
        """
        centers = zgrid.centers
        size = 2 * zgrid.n_z
        rows = (
            (l1 - zgrid.n_z, l2 - zgrid.n_z, centers[l1, l2, 0], centers[l1, l2, 1],
             int(scheme.regions[l1, l2]), scheme.omega[l1, l2])
            for l2 in range(size)
            for l1 in range(size)
        )
        return self._write_rows("weights.csv", WEIGHTS_HEADER, rows)

    def write_scheme(self, partition: RegionPartition, scheme: QuadratureScheme) -> Path:
        rows = [
            ("kappa_w_1", scheme.kappa_w[0]),
            ("kappa_w_2", scheme.kappa_w[1]),
            ("r_w", scheme.r_w),
            ("sigma_w_sq_11", scheme.sigma_w_sq[0, 0]),
            ("sigma_w_sq_12", scheme.sigma_w_sq[0, 1]),
            ("sigma_w_sq_22", scheme.sigma_w_sq[1, 1]),
            ("z_max_I", partition.z_max_I),
            ("z_max_II", float(partition.z_max_II)),
            ("z_max_III", partition.z_max_III),
        ]
        return self._write_rows("scheme.csv", SCHEME_HEADER, rows)

    def write_mc_check(self, rows: Sequence["McCheckRow"]) -> Path:
        return self._write_rows(
            "mc_check.csv",
            MC_CHECK_HEADER,
            ((r.x0[0], r.x0[1], r.pide_price, r.mc.price, r.mc.standard_error, r.z_score) for r in rows),
        )

    def write_manifest(self, manifest: RunManifest) -> Path:
        """
        Write manifest.json, listing every file written so far.

        Returns:
            Path: location of manifest.json
        """
        path = self.out_dir / "manifest.json"
        manifest = manifest.model_copy(update={"outputs": [p.name for p in self.written] + [path.name]})
        path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.info("wrote %s", path)
        return path
