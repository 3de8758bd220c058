"""
Tests for the experiment runners, result files and the command line
"""

import csv
import json

import numpy as np
import pytest

from app import experiments
from app.cli import build_parser, load_config, main
from app.experiments import fit_order, run_converge, run_mc_check, run_price, run_weights
from app.models import McConfig, RunConfig, TABLE_POINTS
from app.repository import (
    CONVERGENCE_HEADER,
    MC_CHECK_HEADER,
    SURFACE_HEADER,
    TABLE_HEADER,
    WEIGHTS_HEADER,
    ResultRepository,
)


def _read(path):
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.reader(handle))


@pytest.fixture
def small_config(tmp_path):
    return RunConfig(preset="VG1", n_x=16, out_dir=str(tmp_path))


class TestRunConfig:
    """Test effective parameter couplings"""

    def test_reference_couplings(self):
        """Test N_z = 2 N_x, N_t = N_x / 2 and the preset truncation"""
        config = RunConfig(preset="VG0")
        assert config.effective_x_max() == pytest.approx(5700.0)
        assert config.effective_x_int() == pytest.approx(250.0)
        assert config.effective_n_z() == 400
        assert config.effective_n_t() == 100
        assert config.effective_f_target() == pytest.approx(0.65)

    def test_half_up_rounding(self):
        """Test N_t = 13 for N_x = 25"""
        assert RunConfig(preset="VG1").effective_n_t(25) == 13

    def test_overrides_apply_at_the_configured_size(self):
        """Test explicit N_z and N_t are used unless another N_x is requested"""
        config = RunConfig(preset="VG1", n_x=40, n_z=50, solver={"n_t": 7})
        assert config.effective_n_z() == 50
        assert config.effective_n_t() == 7
        assert config.effective_n_z(100) == 200
        assert config.effective_n_t(100) == 50

    def test_wide_core_raises_f_target(self):
        """Test f = max(0.65, x_int / x_max)"""
        assert RunConfig(preset="VG1", x_max=300.0).effective_f_target() == pytest.approx(250.0 / 300.0)

    def test_model_required(self):
        """Test a config without preset or model is rejected"""
        with pytest.raises(ValueError):
            RunConfig()


class TestRunPrice:
    """Test the price command end to end on a coarse grid"""

    def test_files_and_headers(self, small_config, tmp_path):
        """Test surface, table and manifest are written with their headers"""
        run_price(small_config, ResultRepository(tmp_path))
        surface = _read(tmp_path / "surface.csv")
        table = _read(tmp_path / "table.csv")
        assert surface[0] == SURFACE_HEADER
        assert len(surface) == 1 + 17 * 17
        assert table[0] == TABLE_HEADER
        assert len(table) == 1 + len(TABLE_POINTS)

        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "price"
        assert set(manifest["outputs"]) == {"surface.csv", "table.csv", "manifest.json"}
        assert manifest["derived"]["n_z"] == 32
        assert manifest["derived"]["n_t"] == 8
        assert manifest["derived"]["sharp_in"] >= manifest["derived"]["sharp_out"]

    def test_rerun_is_byte_identical(self, small_config, tmp_path):
        """Test a deterministic rerun writes the same surface bytes"""
        first, second = tmp_path / "a", tmp_path / "b"
        run_price(small_config, ResultRepository(first))
        run_price(small_config, ResultRepository(second))
        assert (first / "surface.csv").read_bytes() == (second / "surface.csv").read_bytes()
        assert (first / "table.csv").read_bytes() == (second / "table.csv").read_bytes()

    def test_without_repository(self, small_config):
        """Test results are returned without touching the disk"""
        run = run_price(small_config)
        assert len(run.table) == len(TABLE_POINTS)
        assert run.surface.delta is not None
        assert run.manifest.outputs == []


class TestRunWeights:
    """Test the weights command"""

    def test_one_row_per_cell(self, small_config, tmp_path):
        """Test (2 N_z)^2 rows, l1 running fastest"""
        zgrid, _, scheme = run_weights(small_config, ResultRepository(tmp_path))
        rows = _read(tmp_path / "weights.csv")
        assert rows[0] == WEIGHTS_HEADER
        assert len(rows) == 1 + (2 * zgrid.n_z) ** 2
        assert rows[1][:2] == [str(-zgrid.n_z), str(-zgrid.n_z)]
        assert rows[2][:2] == [str(-zgrid.n_z + 1), str(-zgrid.n_z)]
        assert float(rows[1][5]) == pytest.approx(scheme.omega[0, 0])
        assert (tmp_path / "scheme.csv").exists()


class TestConvergence:
    """Test the order fit and the convergence runner"""

    def test_fit_order_exact_power(self):
        """Test E = 3 N^-2 gives order 2 and zero residual"""
        n = [25, 50, 100]
        order, residual = fit_order(n, [3.0 * k**-2.0 for k in n])
        assert order == pytest.approx(2.0)
        assert residual == pytest.approx(0.0, abs=1e-12)

    def test_fit_order_needs_two_points(self):
        """Test zero errors are dropped before fitting"""
        order, _ = fit_order([8, 16], [1e-3, 0.0])
        assert np.isnan(order)

    def test_reference_in_list(self, small_config, tmp_path):
        """Test E(N_ref) = 0 when the reference grid is studied"""
        report = run_converge(small_config, [8, 16], 16, ResultRepository(tmp_path))
        assert report.errors[-1] == 0.0
        assert report.errors[0] > 0.0
        rows = _read(tmp_path / "convergence.csv")
        assert rows[0] == CONVERGENCE_HEADER
        assert [r[0] for r in rows[1:]] == ["8", "16"]

    def test_reference_too_coarse(self, small_config):
        """Test N_ref below max(N) is rejected"""
        with pytest.raises(ValueError):
            run_converge(small_config, [8, 16], 12)

    def test_manifest_without_extra_setup(self, small_config, tmp_path, monkeypatch):
        """Test only the studied grids are prepared and the manifest carries the resolved model"""
        prepared = []
        original = experiments.prepare

        def counting_prepare(config, n_x=None):
            prepared.append(n_x)
            return original(config, n_x)

        monkeypatch.setattr(experiments, "prepare", counting_prepare)
        run_converge(small_config, [8, 16], 16, ResultRepository(tmp_path))
        assert sorted(prepared) == [8, 16]
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "converge"
        assert manifest["model"]["lambda"] == pytest.approx(small_config.resolved_model().lam)
        assert set(manifest["outputs"]) == {"convergence.csv", "manifest.json"}


class TestMcCheck:
    """Test the Monte Carlo cross-check runner"""

    def test_rows_and_file(self, tmp_path):
        """Test one row per point with a finite z-score"""
        config = RunConfig(preset="VG1", n_x=16, mc=McConfig(n_paths=20_000, seed=1), out_dir=str(tmp_path))
        rows = run_mc_check(config, points=[(100.0, 100.0)], repository=ResultRepository(tmp_path))
        assert len(rows) == 1
        assert np.isfinite(rows[0].z_score)
        table = _read(tmp_path / "mc_check.csv")
        assert table[0] == MC_CHECK_HEADER
        assert len(table) == 2


class TestCli:
    """Test argument parsing and exit codes"""

    def test_flags_override_file(self, tmp_path):
        """Test --preset and --nx win over the config file, dropping its N_z and N_t"""
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"preset": "VG0", "n_x": 50, "n_z": 77, "solver": {"n_t": 9}}))
        args = build_parser().parse_args(["price", "--config", str(path), "--preset", "vg1", "--nx", "20"])
        config = load_config(args)
        assert config.preset == "VG1"
        assert config.n_x == 20
        assert config.n_z is None
        assert config.solver.n_t is None

    def test_file_values_kept_without_flags(self, tmp_path):
        """Test the config file overrides preset defaults"""
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"preset": "VG0", "n_x": 50, "n_z": 77}))
        config = load_config(build_parser().parse_args(["weights", "--config", str(path), "--seed", "5"]))
        assert config.n_z == 77
        assert config.mc.seed == 5

    def test_weights_command(self, tmp_path):
        """Test a successful run exits 0 and writes its files"""
        code = main(["weights", "--preset", "NIG1", "--nx", "8", "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "weights.csv").exists()
        assert (tmp_path / "manifest.json").exists()

    def test_missing_config_file(self, tmp_path):
        """Test an unreadable config exits 1"""
        assert main(["price", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1

    def test_invalid_grid_size(self, tmp_path):
        """Test a validation failure exits 1"""
        assert main(["weights", "--preset", "VG0", "--nx", "2", "--out", str(tmp_path)]) == 1

    def test_unknown_preset(self):
        """Test argparse rejects names outside the registry"""
        with pytest.raises(SystemExit):
            build_parser().parse_args(["price", "--preset", "XYZ"])
