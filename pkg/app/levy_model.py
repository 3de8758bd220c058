"""
Normal Tempered Stable Lévy measure and the quantities derived from it.

The jump part L of the log-prices is Brownian motion with drift eta and
covariance rho, run on a tempered stable clock G with parameters
(alpha, delta, lambda) and centered so that E[L(t)] = 0.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from math import factorial
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

from app.errors import BracketError, ModelDomainError
from app.models import NtsModel

logger = logging.getLogger(__name__)

_BOUNDARY_SAMPLES = 128


@dataclass(frozen=True)
class RhoMetric:
    """Inner product <x, y>_rho = x^T rho^{-1} y."""
    rho_inverse: np.ndarray
    determinant: float

    @classmethod
    def from_model(cls, model: NtsModel) -> "RhoMetric":
        rho = model.rho_matrix
        return cls(np.linalg.inv(rho), float(np.linalg.det(rho)))

    def inner(self, x, y) -> np.ndarray:
        return np.einsum("...i,ij,...j->...", np.asarray(x), self.rho_inverse, np.asarray(y))

    def norm(self, x) -> np.ndarray:
        return np.sqrt(np.maximum(self.inner(x, x), 0.0))


@dataclass(frozen=True)
class TailConstants:
    """Radial bound l(z) <= C(h) |z|_rho^(-A-2) near 0 and exponential decay rate B."""
    A_ell: float
    B_ell: float
    C_ell_of_h: Callable[[float], float]


# --- special functions -------------------------------------------------------

def _half_integer_order(nu: float) -> int | None:
    twice = 2.0 * nu
    n = int(round(twice))
    if abs(twice - n) < 1e-14 and n % 2 == 1:
        return (n - 1) // 2
    return None


def _half_integer_kve(n: int, tau: np.ndarray) -> np.ndarray:
    # K_{n+1/2}(t) e^t = sqrt(pi/(2t)) * sum_k (n+k)!/(k!(n-k)!) (2t)^-k
    total = np.zeros_like(tau)
    for k in range(n + 1):
        total += factorial(n + k) / (factorial(k) * factorial(n - k)) * (2.0 * tau) ** (-k)
    return np.sqrt(np.pi / (2.0 * tau)) * total


def bessel_k(nu: float, tau, scaled: bool = False):
    """
    Modified Bessel function of the second kind K_nu(tau).

    Half-integer orders use the terminating closed form; other orders go through
    scipy's exponentially scaled kve.

    Args:
        nu: order, > 0
        tau: argument(s), > 0
        scaled: return e^tau K_nu(tau) instead, finite for large tau

    Raises:
        ModelDomainError: for nu <= 0 or any tau <= 0
    """
    if not nu > 0:
        raise ModelDomainError(f"Bessel order must be positive, got {nu}")
    tau = np.asarray(tau, dtype=float)
    if not np.all(tau > 0):
        raise ModelDomainError("Bessel argument must be positive")

    n = _half_integer_order(nu)
    value = _half_integer_kve(n, tau) if n is not None else special.kve(nu, tau)
    if not scaled:
        value = value * np.exp(-tau)
    return value if value.ndim else float(value)


def bessel_k_quad(nu: float, tau: float, scaled: bool = False) -> float:
    """K_nu(tau) from the integral of exp(-tau cosh t) cosh(nu t) over t >= 0.

    Independent of bessel_k; accurate to about 1e-13 relative for moderate tau.
    """
    if tau <= 0:
        raise ModelDomainError("Bessel argument must be positive")

    def integrand(t: float) -> float:
        with np.errstate(over="ignore"):
            exponent = -tau * (np.cosh(t) - 1.0) + abs(nu) * t
            return float(np.exp(exponent) * 0.5 * (1.0 + np.exp(-2.0 * abs(nu) * t)))

    value, _ = integrate.quad(integrand, 0.0, np.inf, epsabs=0.0, epsrel=1e-13, limit=400)
    return value if scaled else value * np.exp(-tau)


# --- density -------------------------------------------------------------------

def _tilt_constant(model: NtsModel, metric: RhoMetric) -> float:
    eta = model.eta_vector
    return float(np.sqrt(metric.inner(eta, eta) + 2.0 * model.lam))


def log_nts_phi(model: NtsModel, x, a: float, b: float) -> np.ndarray:
    """log Phi(x | a, b), the kernel shared by the NTS density formulas, for any dimension."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    metric = RhoMetric.from_model(model)
    c1_sq = _tilt_constant(model, metric) ** 2
    order = a + 0.5 * d
    radius = np.sqrt(metric.inner(x, x) + 2.0 * b)
    arg = np.sqrt(c1_sq) * radius
    kve = bessel_k(abs(order), arg, scaled=True) if order != 0 else special.kve(0, arg)
    log_value = (
        np.log(2.0)
        + 0.5 * (order * np.log(c1_sq) - d * np.log(2.0 * np.pi) - np.log(metric.determinant))
        + np.log(kve) - arg
        - order * np.log(radius)
        + metric.inner(x, model.eta_vector)
    )
    return log_value


def nts_phi(model: NtsModel, x, a: float, b: float) -> np.ndarray:
    return np.exp(log_nts_phi(model, x, a, b))


def log_levy_density(model: NtsModel, z) -> np.ndarray:
    """log l(z) for points z of shape (..., 2); all exponentials combined analytically."""
    z = np.asarray(z, dtype=float)
    metric = RhoMetric.from_model(model)
    tau = metric.norm(z)
    if np.any(tau == 0.0):
        raise ModelDomainError("Lévy density is singular at z = 0")

    nu = 1.0 + model.alpha
    c1 = _tilt_constant(model, metric)
    arg = c1 * tau
    log_prefactor = np.log(model.delta / np.pi) + nu * np.log(c1) - 0.5 * np.log(metric.determinant)
    return (
        log_prefactor
        + np.log(bessel_k(nu, arg, scaled=True)) - arg
        - nu * np.log(tau)
        + metric.inner(z, model.eta_vector)
    )


def levy_density(model: NtsModel, z):
    """Lévy density l(z) >= 0 of the NTS jump measure; z of shape (..., 2), z != 0."""
    value = np.exp(log_levy_density(model, z))
    return value if np.ndim(value) else float(value)


def tail_constants(model: NtsModel, dimension: int = 2) -> TailConstants:
    metric = RhoMetric.from_model(model)
    eta_norm = float(metric.norm(model.eta_vector))
    decay = float(np.sqrt(eta_norm**2 + 2.0 * model.lam) - eta_norm)
    scale = (
        2.0**model.alpha * model.delta * special.gamma(model.alpha + 0.5 * dimension)
        / np.sqrt(np.pi**dimension * metric.determinant)
    )

    def c_of_h(h: float) -> float:
        return float(scale * np.exp(h * eta_norm))

    return TailConstants(A_ell=2.0 * model.alpha, B_ell=decay, C_ell_of_h=c_of_h)


# --- moments and characteristic exponent ---------------------------------------

def subordinator_mean(model: NtsModel, t: float = 1.0) -> float:
    return t * model.delta * special.gamma(1.0 - model.alpha) / model.lam ** (1.0 - model.alpha)


def subordinator_variance(model: NtsModel, t: float = 1.0) -> float:
    return t * model.delta * special.gamma(2.0 - model.alpha) / model.lam ** (2.0 - model.alpha)


def centering_drift(model: NtsModel) -> np.ndarray:
    """c = E[B(G(1))], subtracted so that L is centered."""
    return subordinator_mean(model) * model.eta_vector


def variance_of_L(model: NtsModel, t: float = 1.0) -> np.ndarray:
    """Covariance matrix of L(t)."""
    if t < 0:
        raise ModelDomainError("time must be nonnegative")
    eta = model.eta_vector
    inner = model.rho_matrix * model.lam / (1.0 - model.alpha) + np.outer(eta, eta)
    return subordinator_variance(model, t) * inner


def density_of_L(model: NtsModel, x, t: float = 1.0) -> np.ndarray:
    """
    Density f_{L(t)}(x) for points x of shape (..., 2).

    Closed forms exist for the gamma clock (alpha = 0) and the inverse Gaussian
    clock (alpha = 1/2); both are Phi evaluated at the uncentered point x + c t.
    For the gamma clock with delta t < 1 the density is infinite at x = -c t.

    Raises:
        ModelDomainError: for t <= 0 or any other alpha
    """
    if not t > 0:
        raise ModelDomainError("time must be positive")
    shifted = np.asarray(x, dtype=float) + t * centering_drift(model)
    shape = model.delta * t
    if model.alpha == 0.0:
        log_scale = shape * np.log(model.lam) - special.gammaln(shape)
        log_value = log_scale + log_nts_phi(model, shifted, -shape, 0.0)
    elif model.alpha == 0.5:
        log_scale = np.log(shape) + 2.0 * shape * np.sqrt(model.lam * np.pi)
        log_value = log_scale + log_nts_phi(model, shifted, 0.5, shape**2 * np.pi)
    else:
        raise ModelDomainError(f"no closed-form density for alpha = {model.alpha}")
    value = np.exp(log_value)
    return value if np.ndim(value) else float(value)


def _complex_log1p(u: complex) -> complex:
    """log(1 + u) accurate for small |u|; numpy's complex log1p is not."""
    a, b = u.real, u.imag
    return complex(0.5 * np.log1p(2.0 * a + a * a + b * b), np.arctan2(b, 1.0 + a))


def _complex_expm1(w: complex) -> complex:
    """exp(w) - 1 accurate for small |w|."""
    c, d = w.real, w.imag
    real = np.expm1(c) * np.cos(d) - 2.0 * np.sin(0.5 * d) ** 2
    return complex(real, np.exp(c) * np.sin(d))


def characteristic_exponent(model: NtsModel, x) -> complex:
    """
    psi_L with E[exp(i x^T L(t))] = exp(t psi_L(x)), principal branch.

    Complex arguments are allowed; psi_L(-i e_k) gives the exponential moment of L_k.

    Raises:
        ModelDomainError: if lambda - i x^T eta + x^T rho x / 2 is on the branch cut
    """
    x = np.asarray(x, dtype=complex)
    # u = q / lambda - 1, formed without subtracting lambda
    u = (-1j * (x @ model.eta_vector) + 0.5 * (x @ model.rho_matrix @ x)) / model.lam
    q = model.lam * (1.0 + u)
    if q.imag == 0.0 and q.real <= 0.0:
        raise ModelDomainError(f"argument {q} lies on the logarithm branch cut")

    log_ratio = _complex_log1p(complex(u))
    if model.alpha == 0.0:
        psi = -model.delta * log_ratio
    else:
        scale = model.delta * special.gamma(-model.alpha) * model.lam**model.alpha
        psi = scale * _complex_expm1(model.alpha * log_ratio)
    return complex(psi - 1j * (x @ centering_drift(model)))


def martingale_exponent(model: NtsModel) -> np.ndarray:
    """kappa_k = log E[exp(L_k(1))], so exp(L_k(t) - kappa_k t) is a martingale."""
    return np.array([characteristic_exponent(model, -1j * e).real for e in np.eye(2)])


# --- truncation radius ---------------------------------------------------------

def _square_boundary(u) -> np.ndarray:
    """Points on the unit-sup-norm square, u in [0, 8) runs once around it."""
    u = np.mod(np.asarray(u, dtype=float), 8.0)
    side = np.floor(u / 2.0).astype(int)
    w = u - 2.0 * side - 1.0
    one = np.ones_like(w)
    pts = np.select(
        [side[..., None] == k for k in range(4)],
        [np.stack(p, axis=-1) for p in ((one, w), (-w, one), (-one, -w), (w, -one))],
    )
    return pts


def _boundary_log_max(model: NtsModel, s: float) -> float:
    u = np.linspace(0.0, 8.0, _BOUNDARY_SAMPLES, endpoint=False)
    values = log_levy_density(model, s * _square_boundary(u))
    k = int(np.argmax(values))
    step = 8.0 / _BOUNDARY_SAMPLES
    refined = optimize.minimize_scalar(
        lambda v: -float(log_levy_density(model, s * _square_boundary(v))),
        bounds=(u[k] - step, u[k] + step),
        method="bounded",
        options={"xatol": 1e-10},
    )
    return max(float(values[k]), -float(refined.fun))


@lru_cache(maxsize=64)
def find_truncation_radius(model: NtsModel, level: float = 1e-8) -> float:
    """
    Half-width s of the square {|z|_inf <= s} on whose boundary max l = level.

    Raises:
        BracketError: if no sign change is found (level above the density's reach)
    """
    target = np.log(level)

    def excess(s: float) -> float:
        return _boundary_log_max(model, s) - target

    lo = hi = 1.0
    if excess(hi) > 0:
        for _ in range(200):
            lo, hi = hi, 2.0 * hi
            if excess(hi) < 0:
                break
        else:
            raise BracketError(f"density stays above {level:g} out to |z| = {hi:g}")
    else:
        for _ in range(200):
            hi, lo = lo, 0.5 * lo
            if excess(lo) > 0:
                break
        else:
            raise BracketError(f"density stays below {level:g} down to |z| = {lo:g}")

    radius = optimize.brentq(excess, lo, hi, xtol=1e-15, rtol=1e-13, maxiter=200)
    logger.debug("truncation radius %.6g for level %.1e (%s)", radius, level, model.name)
    return float(radius)
