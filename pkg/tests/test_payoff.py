"""
Tests for the put-on-the-average payoff and its cell averages
"""

import numpy as np
import pytest

from app.grids import build_spatial_grid
from app.models import PayoffSpec
from app.payoff import cell_average, initial_vector, kink_cells, payoff_eval

PUT = PayoffSpec(K=100.0)


class TestPayoffEval:
    """Test pointwise payoff evaluation"""

    @pytest.mark.parametrize("x, expected", [((90.0, 90.0), 10.0), ((110.0, 110.0), 0.0), ((80.0, 110.0), 5.0)])
    def test_values(self, x, expected):
        """Test max(K - (x1 + x2)/2, 0)"""
        assert payoff_eval(PUT, x) == pytest.approx(expected)

    def test_vectorized(self):
        """Test a batch of points"""
        values = payoff_eval(PUT, np.array([[0.0, 0.0], [200.0, 0.0], [300.0, 300.0]]))
        assert values.tolist() == [100.0, 0.0, 0.0]


class TestCellAverage:
    """Test exact cell averages"""

    def test_in_the_money_cell_is_centroid_value(self):
        """Test a cell below the kink averages to the centroid value"""
        assert cell_average(PUT, 10.0, 20.0, 30.0, 50.0) == pytest.approx(100.0 - 0.25 * (10 + 20 + 30 + 50))

    def test_out_of_the_money_cell_is_zero(self):
        """Test a cell above the kink averages to zero"""
        assert cell_average(PUT, 120.0, 130.0, 100.0, 110.0) == 0.0

    def test_straddling_cell_closed_form(self):
        """Test [95, 105]^2, where the kink is the cell diagonal: mean 5/6"""
        assert cell_average(PUT, 95.0, 105.0, 95.0, 105.0) == pytest.approx(5.0 / 6.0, rel=1e-13)

    def test_straddling_cell_against_midpoint_sum(self):
        """Test an asymmetric cell cut by the kink"""
        a1, b1, a2, b2 = 92.0, 107.0, 98.0, 104.0
        n = 2000
        t = (np.arange(n) + 0.5) / n
        x1, x2 = np.meshgrid(a1 + t * (b1 - a1), a2 + t * (b2 - a2), indexing="ij")
        midpoint = payoff_eval(PUT, np.stack([x1, x2], axis=-1)).mean()
        assert cell_average(PUT, a1, b1, a2, b2) == pytest.approx(midpoint, abs=1e-6)

    def test_broadcasts(self):
        """Test arrays of cells"""
        values = cell_average(PUT, np.array([10.0, 95.0]), np.array([20.0, 105.0]), np.array([10.0, 95.0]), np.array([20.0, 105.0]))
        assert values.shape == (2,)
        assert values[1] == pytest.approx(5.0 / 6.0)


class TestInitialVector:
    """Test the initial condition on the grid"""

    @pytest.fixture
    def grid(self):
        return build_spatial_grid(40, 500.0, 250.0, 0.65)

    def test_shape_and_sign(self, grid):
        """Test one nonnegative value per node"""
        v = initial_vector(PUT, grid)
        assert v.shape == (41 * 41,)
        assert np.all(v >= 0)

    def test_matches_payoff_away_from_kink(self, grid):
        """Test nodal values where the cell does not cross the kink"""
        v = initial_vector(PUT, grid).reshape(41, 41, order="F")
        mask = kink_cells(PUT, grid)
        x = grid.nodes
        exact = np.maximum(100.0 - 0.5 * (x[:, None] + x[None, :]), 0.0)
        assert mask.any()
        assert np.allclose(v[~mask], exact[~mask])

    def test_kink_cells_follow_the_diagonal(self, grid):
        """Test flagged cells straddle x1 + x2 = 2K"""
        mask = kink_cells(PUT, grid)
        m1, m2 = np.nonzero(mask)
        x = grid.nodes
        assert np.all(np.abs(x[m1] + x[m2] - 200.0) <= 2 * grid.widths.max())
