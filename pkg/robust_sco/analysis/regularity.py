"""
Checks that a FunctionDistribution's closed forms and declared constants
agree with its samples.
"""
from __future__ import annotations

import numpy as np
from scipy import linalg

from ..tools.problems import FunctionDistribution, gradient_matrix, sample_functions
from ..tools.rng import derive_seed, make_rng


class RegularityResult:
    def __init__(self, statistic: float, threshold: float, passed: bool, reason: str):
        self.statistic = statistic
        self.threshold = threshold
        self.passed = passed
        self.reason = reason


def _sample_points(dist: FunctionDistribution, n_points: int, rng) -> np.ndarray:
    """Uniform in the domain shrunk by 10% towards its center."""
    c = dist.domain.center
    return c + 0.9 * (dist.domain.sample(rng, n_points) - c)


def _fd_error(value, gradient, w, h_scale: float) -> float:
    h = h_scale * (1.0 + float(np.linalg.norm(w)))
    g = np.asarray(gradient(w), dtype=float)
    fd = np.array([(value(w + h * e) - value(w - h * e)) / (2 * h) for e in np.eye(w.shape[0])])
    return float(np.linalg.norm(fd - g) / max(1.0, np.linalg.norm(g)))


def check_finite_differences(dist: FunctionDistribution, n_points: int = 100, h_scale: float = 1e-5,
                             rtol: float = 1e-4, seed: int = 0) -> RegularityResult:
    """Central differences of the population risk against its gradient.

    The step at w is h_scale * (1 + ||w||).
    """
    W = _sample_points(dist, n_points, make_rng(seed))
    worst = max(_fd_error(dist.population_risk, dist.population_gradient, w, h_scale) for w in W)
    passed = worst <= rtol
    return RegularityResult(worst, rtol, passed, "OK" if passed else "gradient disagrees with risk")


def check_sample_finite_differences(dist: FunctionDistribution, n_points: int = 100, n_functions: int = 5,
                                    h_scale: float = 1e-5, rtol: float = 1e-4,
                                    seed: int = 0) -> RegularityResult:
    """Same check for drawn SampleFunctions: gradient(w) against differences of value(w)."""
    rng = make_rng(seed)
    functions = sample_functions(dist, n_functions, derive_seed(seed, 2))
    W = _sample_points(dist, n_points, rng)
    worst = max(_fd_error(f.value, f.gradient, w, h_scale) for w in W for f in functions)
    passed = worst <= rtol
    return RegularityResult(worst, rtol, passed, "OK" if passed else "sample gradient disagrees with value")


def check_covariance_bound(dist: FunctionDistribution, w, m: int = 20_000, seed: int = 0,
                           slack: float = 1.1) -> RegularityResult:
    """Top eigenvalue of the empirical gradient covariance at w <= slack sigma^2."""
    G = gradient_matrix(sample_functions(dist, m, seed), w)
    C = G - G.mean(axis=0)
    top = float(linalg.eigh(C.T @ C / m, eigvals_only=True)[-1])
    bound = slack * dist.sigma ** 2
    passed = top <= bound + 1e-12
    return RegularityResult(top, bound, passed, "OK" if passed else "covariance exceeds sigma^2")


def check_gradient_mean(dist: FunctionDistribution, w, m: int = 20_000, seed: int = 0,
                        z_max: float = 5.0) -> RegularityResult:
    """Sample-mean gradient at w within z_max standard errors of the closed form."""
    G = gradient_matrix(sample_functions(dist, m, derive_seed(seed, 1)), w)
    se = G.std(axis=0, ddof=1) / np.sqrt(m)
    target = dist.population_gradient(w)
    z = np.abs(G.mean(axis=0) - target) / (se + 1e-12 * (1.0 + np.abs(target)))
    worst = float(z.max())
    passed = worst <= z_max
    return RegularityResult(worst, z_max, passed, "OK" if passed else "sample mean far from closed form")
