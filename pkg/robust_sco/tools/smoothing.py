# tools/smoothing.py
"""
Convolutional smoothing for nonsmooth losses.

f_s(w) = E_{u ~ U(ball radius s)} f(w + u) is convex, keeps the Lipschitz
constant L and is (L sqrt(d) / s)-smooth, with f <= f_s <= f + L s.
smooth_and_optimize perturbs every sample once, f_i -> f_i(. + u_i), and runs
the net-based robust PGD on the perturbed samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray

from ..errors import InvalidArgumentError
from ..log import get_logger
from .domain import FeasibleDomain
from .filtering import FilterConfig
from .optimizer import MAX_T, PGDResult, Samples, robust_net_pgd, sample_list
from .problems import SampleFunction
from .rng import SeedLike, make_rng

logger = get_logger(__name__)


@dataclass(frozen=True)
class SmoothingConfig:
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidArgumentError(f"smoothing radius s={self.radius} must be > 0")

    def smoothness(self, lipschitz: float, dim: int) -> float:
        return lipschitz * math.sqrt(dim) / self.radius

    @staticmethod
    def covariance_bound(sigma: float, lipschitz: float) -> float:
        return math.sqrt(sigma ** 2 + 4.0 * lipschitz ** 2)


def sample_uniform_ball(d: int, s: float, seed: SeedLike, size: Optional[int] = None) -> NDArray[np.float64]:
    """Uniform on the d-ball of radius s: Gaussian direction, radius s U^(1/d)."""
    if not s > 0:
        raise InvalidArgumentError(f"radius s={s} must be > 0")
    if d < 1:
        raise InvalidArgumentError(f"d={d} must be >= 1")
    rng = make_rng(seed)
    m = 1 if size is None else int(size)
    z = rng.standard_normal((m, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    r = s * rng.uniform(0.0, 1.0, size=m) ** (1.0 / d)
    out = z * r[:, None]
    return out[0] if size is None else out


def default_smoothing_radius(diameter: float, sigma: float, lipschitz: float, epsilon: float,
                             d: int, n: int, tau: float) -> float:
    """s = D (sigma / L + 1)(sqrt(eps) + sqrt(d log(1/tau) / n))."""
    return diameter * (sigma / lipschitz + 1.0) * (
        math.sqrt(epsilon) + math.sqrt(d * math.log(1.0 / tau) / n))


def smooth_and_optimize(samples: Samples, domain: FeasibleDomain, *, lipschitz: float, epsilon: float,
                        seed: SeedLike, sigma: Optional[float] = None, moment_bound: Optional[float] = None,
                        tau: float = 0.05, s: Optional[float] = None, T: Optional[int] = None,
                        filter_config: Optional[FilterConfig] = None, w0=None,
                        risk_fn: Optional[Callable] = None, w_star=None, t_max: int = MAX_T) -> PGDResult:
    """Run the net-based robust PGD on f_i(. + u_i), u_i ~ U(ball radius s).

    Either sigma (covariance bound) or moment_bound (noncentral second-moment
    bound G) must be given; G is used in place of sigma.
    """
    if lipschitz is None or not lipschitz > 0:
        raise InvalidArgumentError("smooth_and_optimize needs a finite lipschitz > 0")
    if moment_bound is not None:
        sigma = float(moment_bound)
    if sigma is None:
        raise InvalidArgumentError("supply sigma or moment_bound")
    functions = sample_list(samples)
    n, d, D = len(functions), domain.dim, domain.diameter()
    if s is None:
        s = default_smoothing_radius(D, sigma, lipschitz, epsilon, d, n, tau)
    cfg = SmoothingConfig(s)
    U = sample_uniform_ball(d, cfg.radius, seed, size=n)
    perturbed = tuple(f.shifted(u) for f, u in zip(functions, U))
    beta = cfg.smoothness(lipschitz, d)
    sigma_eff = cfg.covariance_bound(sigma, lipschitz)
    logger.debug("smoothing radius %.4g: beta=%.4g sigma=%.4g", cfg.radius, beta, sigma_eff)
    result = robust_net_pgd(perturbed, domain, sigma=sigma_eff, beta_bar=beta, epsilon=epsilon, tau=tau,
                            T=T, filter_config=filter_config, w0=w0, risk_fn=risk_fn, w_star=w_star,
                            t_max=t_max)
    result.info.update({"s": cfg.radius, "beta_smoothed": beta})
    return result


Smoothable = Union[SampleFunction, Callable]


def _values(f: Smoothable, points: NDArray[np.float64]) -> NDArray[np.float64]:
    if isinstance(f, SampleFunction):
        P = np.broadcast_to(f.params, (points.shape[0], f.params.shape[0]))
        W = points if f.shift is None else points + f.shift
        return f.kernel.values(P, W)
    return np.array([f(p) for p in points], dtype=float)


def _gradients(f: Smoothable, points: NDArray[np.float64]) -> NDArray[np.float64]:
    if isinstance(f, SampleFunction):
        P = np.broadcast_to(f.params, (points.shape[0], f.params.shape[0]))
        W = points if f.shift is None else points + f.shift
        return f.kernel.gradients(P, W)
    return np.stack([np.asarray(f(p), dtype=float) for p in points])


def smoothed_value_estimate(f: Smoothable, w, s: float, m: int, seed: SeedLike) -> Tuple[float, float]:
    """Monte Carlo f_s(w) and its standard error.

    f is a SampleFunction or a callable w -> value.
    """
    w = np.asarray(w, dtype=float)
    U = sample_uniform_ball(w.shape[0], s, seed, size=m)
    vals = _values(f, w + U)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(m))


def smoothed_gradient_estimate(f: Smoothable, w, s: float, m: int,
                               seed: SeedLike) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Monte Carlo grad f_s(w) with per-coordinate standard errors.

    f is a SampleFunction or a callable w -> gradient. Reusing the seed across
    points gives common random numbers.
    """
    w = np.asarray(w, dtype=float)
    U = sample_uniform_ball(w.shape[0], s, seed, size=m)
    G = _gradients(f, w + U)
    return G.mean(axis=0), G.std(axis=0, ddof=1) / math.sqrt(m)
