"""
Monte Carlo prices by exact simulation of the subordinated Brownian motion.

G(T) is drawn once per path and shared by both assets; given G the jump
part is Gaussian, L(T) = eta G + chol(rho) sqrt(G) W - c T. Exact
samplers exist for alpha = 0 (Gamma) and alpha = 1/2 (Inverse Gaussian).
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from app.errors import ModelDomainError
from app.levy_model import centering_drift, martingale_exponent
from app.models import McConfig, NtsModel, PayoffSpec
from app.payoff import payoff_eval

logger = logging.getLogger(__name__)

Statistic = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class McResult:
    price: float
    standard_error: float
    n_samples: int


def _check_supported(model: NtsModel) -> None:
    if model.alpha not in (0.0, 0.5):
        raise ModelDomainError(f"no exact subordinator sampler for alpha={model.alpha}")


def sample_subordinator(model: NtsModel, t: float, rng: np.random.Generator, size=None):
    """
    Draw G(t).

    alpha = 0: Gamma with shape delta t and rate lambda.
    alpha = 1/2: Inverse Gaussian with mean delta t sqrt(pi/lambda) and shape 2 pi delta^2 t^2.

    Raises:
        ModelDomainError: for any other alpha
    """
    _check_supported(model)
    if t <= 0:
        raise ModelDomainError("subordinator time must be positive")
    if model.alpha == 0.0:
        return rng.gamma(model.delta * t, 1.0 / model.lam, size=size)
    mean = model.delta * t * math.sqrt(math.pi / model.lam)
    shape = 2.0 * math.pi * (model.delta * t) ** 2
    return rng.wald(mean, shape, size=size)


def _terminal_from_draws(model: NtsModel, x0: np.ndarray, g: np.ndarray, w: np.ndarray, z: np.ndarray) -> np.ndarray:
    """X(T) for subordinator draws g (n,), jump normals w (n, 2) and diffusion normals z (n, 2)."""
    T = model.T
    chol = np.linalg.cholesky(model.rho_matrix)
    jumps = g[:, None] * model.eta_vector + np.sqrt(g)[:, None] * (w @ chol.T) - T * centering_drift(model)
    sigma = model.sigma_matrix
    diffusion = math.sqrt(T) * (z @ sigma.T) - 0.5 * T * np.sum(sigma**2, axis=1)
    drift = (model.r - martingale_exponent(model)) * T
    return x0 * np.exp(drift + jumps + diffusion)


def sample_terminal_assets(model: NtsModel, x0, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """
    Terminal asset prices with E[X_i(T)] = x0_i exp(rT); shape (2,) or (size, 2).

    Raises:
        ModelDomainError: for alpha outside {0, 1/2}
    """
    n = 1 if size is None else size
    g = np.atleast_1d(sample_subordinator(model, model.T, rng, size=n))
    w = rng.standard_normal((n, 2))
    z = rng.standard_normal((n, 2))
    x = _terminal_from_draws(model, np.asarray(x0, dtype=float), g, w, z)
    return x[0] if size is None else x


def _chunk_sums(
    model: NtsModel, x0: np.ndarray, statistic: Statistic, n: int, antithetic: bool, seed: np.random.SeedSequence
) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.Generator(np.random.Philox(seed))
    g = np.atleast_1d(sample_subordinator(model, model.T, rng, size=n))
    w = rng.standard_normal((n, 2))
    z = rng.standard_normal((n, 2))
    values = statistic(_terminal_from_draws(model, x0, g, w, z))
    if antithetic:
        values = 0.5 * (values + statistic(_terminal_from_draws(model, x0, g, -w, -z)))
    return values.sum(axis=0), (values**2).sum(axis=0)


def simulate_statistic(model: NtsModel, x0, statistic: Statistic, config: McConfig) -> List[McResult]:
    """
    Sample mean and standard error of statistic(X(T)) for each of its output columns.

    Paths are split into chunks with independent Philox substreams spawned
    from config.seed; chunk sums are combined in chunk order, so the result
    does not depend on the thread count.
    """
    _check_supported(model)
    x0 = np.asarray(x0, dtype=float)
    per_sample = 2 if config.antithetic else 1
    n_samples = max(2, config.n_paths // per_sample)
    sizes = [config.chunk_size] * (n_samples // config.chunk_size)
    if n_samples % config.chunk_size:
        sizes.append(n_samples % config.chunk_size)
    seeds = np.random.SeedSequence(config.seed).spawn(len(sizes))

    def run(args):
        size, seed = args
        return _chunk_sums(model, x0, statistic, size, config.antithetic, seed)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            sums = list(pool.map(run, zip(sizes, seeds)))
    else:
        sums = [run(item) for item in zip(sizes, seeds)]

    first = np.atleast_1d(sums[0][0])
    results = []
    for k in range(first.size):
        total = math.fsum(float(np.atleast_1d(s)[k]) for s, _ in sums)
        total_sq = math.fsum(float(np.atleast_1d(q)[k]) for _, q in sums)
        mean = total / n_samples
        variance = max(total_sq - n_samples * mean * mean, 0.0) / (n_samples - 1)
        results.append(McResult(mean, math.sqrt(variance / n_samples), n_samples))
    return results


def mc_price(model: NtsModel, payoff: PayoffSpec, x0, config: McConfig) -> McResult:
    """Discounted sample mean of the payoff at X(T) and its standard error."""
    discount = math.exp(-model.r * model.T)
    result = simulate_statistic(model, x0, lambda x: discount * payoff_eval(payoff, x), config)[0]
    logger.info(
        "MC price %.6f +/- %.6f at x0=%s (%d samples%s)",
        result.price, result.standard_error, tuple(np.asarray(x0, dtype=float)),
        result.n_samples, ", antithetic" if config.antithetic else "",
    )
    return result


def martingale_check(model: NtsModel, x0, config: McConfig) -> List[McResult]:
    """Sample means of X_i(T) exp(-rT); each should match x0_i."""
    discount = math.exp(-model.r * model.T)
    return simulate_statistic(model, x0, lambda x: discount * x, config)
