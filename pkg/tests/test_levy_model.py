"""
Tests for the NTS Lévy measure: special functions, density, moments,
characteristic exponent and truncation radius
"""

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import special

from app.errors import ModelDomainError
from app.levy_model import (
    _boundary_log_max,
    _square_boundary,
    bessel_k,
    bessel_k_quad,
    characteristic_exponent,
    density_of_L,
    find_truncation_radius,
    levy_density,
    log_levy_density,
    martingale_exponent,
    nts_phi,
    subordinator_mean,
    subordinator_variance,
    tail_constants,
    variance_of_L,
)
from app.models import NtsModel
from app.presets import PRESETS

# standard deviations and correlation of L(1), printed to four decimals
VARIANCE_TABLE = {
    "VG0": (0.3162, 0.4472, 0.5656),
    "VG1": (0.1080, 0.1707, 0.1807),
    "NIG0": (0.1958, 0.1830, 0.8417),
    "NIG1": (0.1943, 0.2352, 0.5975),
}


class TestBesselFunctions:
    """Test the modified Bessel function of the second kind"""

    @pytest.mark.parametrize("nu", [0.5, 1.0, 1.5, 2.3, 3.5])
    @pytest.mark.parametrize("tau", [0.1, 1.0, 10.0])
    def test_matches_integral_representation(self, nu, tau):
        """Test closed form / kve against the cosh integral"""
        expected = bessel_k_quad(nu, tau, scaled=True)
        assert bessel_k(nu, tau, scaled=True) == pytest.approx(expected, rel=1e-9)

    def test_half_order_closed_form(self):
        """Test K_1/2(t) = sqrt(pi / 2t) exp(-t)"""
        tau = np.array([0.01, 0.5, 3.0, 40.0])
        assert np.allclose(bessel_k(0.5, tau), np.sqrt(np.pi / (2 * tau)) * np.exp(-tau), rtol=1e-14)

    def test_half_integer_orders_agree_with_scipy(self):
        """Test the terminating series for orders 3/2 and 5/2"""
        tau = np.linspace(0.2, 30.0, 25)
        for nu in (1.5, 2.5):
            assert np.allclose(bessel_k(nu, tau, scaled=True), special.kve(nu, tau), rtol=1e-12)

    def test_scaled_stays_finite_for_large_argument(self):
        """Test scaled evaluation does not underflow"""
        value = bessel_k(1.5, 2000.0, scaled=True)
        assert np.isfinite(value) and value > 0

    @pytest.mark.parametrize("nu, tau", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, -2.0)])
    def test_domain_errors(self, nu, tau):
        """Test nonpositive order or argument is rejected"""
        with pytest.raises(ModelDomainError):
            bessel_k(nu, tau)


class TestLevyDensity:
    """Test the Lévy density and the Phi kernel"""

    @pytest.mark.parametrize("name", list(PRESETS))
    def test_density_is_delta_times_phi(self, name):
        """Test l(z) = delta Phi(z | alpha, 0)"""
        model = PRESETS[name]
        z = np.array([[0.05, -0.02], [-0.3, 0.1], [0.2, 0.2]])
        assert np.allclose(levy_density(model, z), model.delta * nts_phi(model, z, model.alpha, 0.0), rtol=1e-12)

    def test_density_positive(self):
        """Test density is positive away from the origin"""
        z = np.random.default_rng(0).normal(scale=0.3, size=(50, 2))
        for model in PRESETS.values():
            assert np.all(levy_density(model, z) > 0)

    def test_symmetric_without_drift(self):
        """Test l(z) = l(-z) when eta = 0"""
        model = PRESETS["VG1"].model_copy(update={"eta": (0.0, 0.0)})
        z = np.array([[0.1, -0.05], [0.02, 0.3]])
        assert np.allclose(levy_density(model, z), levy_density(model, -z), rtol=1e-13)

    def test_singular_at_origin(self):
        """Test the origin is rejected"""
        with pytest.raises(ModelDomainError):
            log_levy_density(PRESETS["VG0"], np.array([0.0, 0.0]))

    @pytest.mark.parametrize("name", list(PRESETS))
    @pytest.mark.parametrize("h", [0.1, 0.5, 1.0])
    def test_radial_tail_bound(self, name, h):
        """Test l(z) |z|_rho^(A+2) <= C(h) on |z|_rho <= h"""
        model = PRESETS[name]
        constants = tail_constants(model)
        rho = model.rho_matrix
        chol = np.linalg.cholesky(rho)
        rng = np.random.default_rng(1)
        directions = rng.normal(size=(400, 2))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        radii = h * rng.uniform(1e-3, 1.0, size=(400, 1))
        z = (radii * directions) @ chol.T
        tau = np.sqrt(np.einsum("pi,ij,pj->p", z, np.linalg.inv(rho), z))
        scaled = levy_density(model, z) * tau ** (constants.A_ell + 2.0)
        assert np.all(scaled <= constants.C_ell_of_h(h) * (1.0 + 1e-10))

    @pytest.mark.parametrize("name", ["VG1", "NIG1"])
    def test_exponential_tail_rate(self, name):
        """Test l(z) e^(B |z|_rho) |z|_rho^(nu + 1/2) stays bounded and B is sharp"""
        model = PRESETS[name]
        decay = tail_constants(model).B_ell
        power = 1.5 + model.alpha
        chol = np.linalg.cholesky(model.rho_matrix)
        angles = np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False)
        whitened = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
        eta_white = np.linalg.solve(chol, model.eta_vector)
        whitened = np.vstack([whitened, eta_white / np.linalg.norm(eta_white)])
        tau = np.linspace(5.0, 200.0, 80)
        for w in whitened:
            z = tau[:, None] * (chol @ w)[None, :]
            scaled = log_levy_density(model, z) + decay * tau + power * np.log(tau)
            assert scaled.max() <= scaled[0] + 1e-6
        steeper = scaled + 0.05 * decay * tau
        assert steeper[-1] > steeper[0]


class TestMoments:
    """Test subordinator and jump-part moments"""

    @pytest.mark.parametrize("name", list(VARIANCE_TABLE))
    def test_standard_deviation_and_correlation(self, name):
        """Test V[L(1)] against the printed table"""
        cov = variance_of_L(PRESETS[name], 1.0)
        std = np.sqrt(np.diag(cov))
        std1, std2, corr = VARIANCE_TABLE[name]
        assert std[0] == pytest.approx(std1, abs=1e-4)
        assert std[1] == pytest.approx(std2, abs=1e-4)
        assert cov[0, 1] / (std[0] * std[1]) == pytest.approx(corr, abs=1e-4)

    def test_variance_scales_with_time(self):
        """Test V[L(t)] = t V[L(1)]"""
        model = PRESETS["NIG1"]
        assert np.allclose(variance_of_L(model, 0.5), 0.5 * variance_of_L(model, 1.0))

    def test_negative_time_rejected(self):
        """Test t < 0 raises"""
        with pytest.raises(ModelDomainError):
            variance_of_L(PRESETS["VG0"], -1.0)

    def test_gamma_subordinator_moments(self):
        """Test Gamma clock mean delta/lambda and variance delta/lambda^2"""
        model = PRESETS["VG1"]
        assert subordinator_mean(model) == pytest.approx(model.delta / model.lam)
        assert subordinator_variance(model) == pytest.approx(model.delta / model.lam**2)

    def test_inverse_gaussian_subordinator_mean(self):
        """Test IG clock mean delta sqrt(pi / lambda)"""
        model = PRESETS["NIG1"]
        assert subordinator_mean(model, 2.0) == pytest.approx(2.0 * model.delta * np.sqrt(np.pi / model.lam))


class TestDensityOfL:
    """Test the closed-form density of L(t)"""

    @staticmethod
    def _cells(half_width: float, n: int):
        h = 2.0 * half_width / n
        axis = -half_width + (np.arange(n) + 0.5) * h
        x1, x2 = np.meshgrid(axis, axis, indexing="ij")
        return np.stack([x1, x2], axis=-1), h

    @pytest.mark.parametrize("name, half_width", [("VG1", 1.5), ("NIG1", 2.5)])
    def test_unit_mass_zero_mean_and_covariance(self, name, half_width):
        """Test f integrates to one with mean zero and covariance V[L(1)]"""
        model = PRESETS[name]
        x, h = self._cells(half_width, 500)
        f = density_of_L(model, x) * h**2
        assert f.sum() == pytest.approx(1.0, abs=1e-5)
        mean = np.einsum("abi,ab->i", x, f)
        assert np.allclose(mean, 0.0, atol=1e-5)
        cov = np.einsum("abi,abj,ab->ij", x, x, f)
        assert np.allclose(cov, variance_of_L(model), rtol=2e-3)

    @pytest.mark.parametrize("name", ["VG1", "NIG1"])
    def test_fourier_transform_matches_characteristic_exponent(self, name):
        """Test the transform of f at u equals exp(t psi_L(u)) for t = 0.5"""
        model = PRESETS[name]
        x, h = self._cells(2.0, 500)
        f = density_of_L(model, x, 0.5) * h**2
        for u in ([1.0, 2.0], [-3.0, 0.5]):
            transform = np.sum(f * np.exp(1j * x @ np.array(u)))
            expected = np.exp(0.5 * characteristic_exponent(model, np.array(u)))
            assert abs(transform - expected) < 1e-4

    def test_other_alpha_rejected(self):
        """Test alpha outside {0, 1/2} has no closed form"""
        model = PRESETS["NIG1"].model_copy(update={"alpha": 0.3})
        with pytest.raises(ModelDomainError):
            density_of_L(model, np.array([0.1, 0.1]))

    def test_nonpositive_time_rejected(self):
        """Test t = 0 raises"""
        with pytest.raises(ModelDomainError):
            density_of_L(PRESETS["VG1"], np.array([0.1, 0.1]), 0.0)


class TestCharacteristicExponent:
    """Test psi_L and the martingale correction"""

    @pytest.mark.parametrize("name", list(PRESETS))
    def test_zero_at_origin(self, name):
        """Test psi_L(0) = 0 exactly"""
        assert characteristic_exponent(PRESETS[name], np.zeros(2)) == 0.0

    @pytest.mark.parametrize("name", list(PRESETS))
    @pytest.mark.parametrize("k", [0, 1])
    def test_small_argument_is_quadratic(self, name, k):
        """Test psi_L(x) ~ -x^T V x / 2 for |x| = 1e-6 without cancellation"""
        model = PRESETS[name]
        x = np.eye(2)[k] * 1e-6
        psi = characteristic_exponent(model, x)
        assert psi.real == pytest.approx(-0.5 * x @ variance_of_L(model) @ x, rel=1e-5)
        assert abs(psi.imag) < 1e-3 * abs(psi.real)

    @pytest.mark.parametrize("name", list(PRESETS))
    def test_second_derivative_is_covariance(self, name):
        """Test -d^2 psi / dx^2 at 0 recovers V[L(1)]"""
        model = PRESETS[name]
        eps = 1e-3
        cov = variance_of_L(model)
        for k in range(2):
            e = np.eye(2)[k] * eps
            second = (
                characteristic_exponent(model, e) - 2 * characteristic_exponent(model, np.zeros(2))
                + characteristic_exponent(model, -e)
            ) / eps**2
            assert -second.real == pytest.approx(cov[k, k], rel=1e-5)

    def test_variance_gamma_martingale_exponent(self):
        """Test kappa_1 = -delta log(1 - (eta_1 + rho_11/2)/lambda) - c_1 for VG0"""
        model = PRESETS["VG0"]
        q = model.lam - model.eta[0] - 0.5 * model.rho[0][0]
        drift = model.delta / model.lam * model.eta[0]
        expected = -model.delta * np.log(q / model.lam) - drift
        assert martingale_exponent(model)[0] == pytest.approx(expected, rel=1e-13)

    def test_branch_cut_rejected(self):
        """Test an argument whose Laplace exponent hits the cut"""
        model = PRESETS["VG1"]
        with pytest.raises(ModelDomainError):
            characteristic_exponent(model, np.array([-1j * 100.0, 0.0]))


class TestTruncationRadius:
    """Test the truncation square"""

    def test_square_boundary_has_unit_sup_norm(self):
        """Test parametrized points lie on the unit square"""
        pts = _square_boundary(np.linspace(0.0, 8.0, 97))
        assert np.allclose(np.abs(pts).max(axis=-1), 1.0)

    @pytest.mark.parametrize("name", list(PRESETS))
    def test_boundary_maximum_hits_level(self, name):
        """Test max l on the square boundary equals the truncation level"""
        model = PRESETS[name]
        radius = find_truncation_radius(model, 1e-8)
        assert _boundary_log_max(model, radius) == pytest.approx(np.log(1e-8), abs=1e-8)

    def test_radius_grows_as_level_drops(self):
        """Test a lower level gives a larger square"""
        model = PRESETS["NIG1"]
        assert find_truncation_radius(model, 1e-10) > find_truncation_radius(model, 1e-6)

    @pytest.mark.parametrize("name", list(PRESETS))
    def test_density_below_level_outside_square(self, name):
        """Test l < level at sampled points beyond the truncation square"""
        model = PRESETS[name]
        level = 1e-8
        radius = find_truncation_radius(model, level)
        rng = np.random.default_rng(5)
        scale = rng.uniform(1.001, 3.0, size=(2000, 1))
        z = radius * scale * _square_boundary(rng.uniform(0.0, 8.0, size=2000))
        assert np.all(levy_density(model, z) <= level * (1.0 + 1e-6))

    def test_radius_grows_with_jump_intensity(self):
        """Test ten times delta widens the square"""
        model = PRESETS["VG0"]
        busier = model.model_copy(update={"delta": 10.0 * model.delta})
        assert find_truncation_radius(busier) > find_truncation_radius(model)


class TestModelValidation:
    """Test NtsModel validation"""

    def test_lambda_alias(self):
        """Test lambda is accepted by its alias"""
        model = NtsModel.model_validate(
            {"alpha": 0.0, "delta": 1.0, "lambda": 1.0, "eta": (0.0, 0.0),
             "rho": ((0.04, 0.0), (0.0, 0.04)), "T": 1.0, "K": 100.0}
        )
        assert model.lam == 1.0

    def test_asymmetric_rho_rejected(self):
        """Test asymmetric rho"""
        with pytest.raises(ValidationError):
            NtsModel(alpha=0.0, delta=1.0, lam=1.0, eta=(0, 0), rho=((0.04, 0.01), (0.0, 0.04)), T=1, K=100)

    def test_indefinite_rho_rejected(self):
        """Test rho without a Cholesky factor"""
        with pytest.raises(ValidationError):
            NtsModel(alpha=0.0, delta=1.0, lam=1.0, eta=(0, 0), rho=((0.04, 0.1), (0.1, 0.04)), T=1, K=100)

    def test_heavy_tails_rejected(self):
        """Test jump tails without second exponential moments"""
        with pytest.raises(ValidationError):
            NtsModel(alpha=0.0, delta=1.0, lam=0.01, eta=(0, 0), rho=((0.09, 0.0), (0.0, 0.09)), T=1, K=100)

    def test_alpha_range(self):
        """Test alpha must lie in [0, 1)"""
        with pytest.raises(ValidationError):
            NtsModel(alpha=1.0, delta=1.0, lam=1.0, eta=(0, 0), rho=((0.04, 0.0), (0.0, 0.04)), T=1, K=100)
