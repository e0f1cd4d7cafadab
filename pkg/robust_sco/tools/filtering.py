# tools/filtering.py
"""
Robust mean estimation by iterative filtering.

filter_mean keeps a weight h(x) <= 1/n per point, and while the total mass is
at least 1 - 2 eps' it finds the top eigenvector v of the weighted
covariance, scores points by |v . (x - mu(h))|^2 and multiplicatively
downweights the eps'-mass tail of largest scores. The survivors' weighted
mean is the estimate.

eps' = c1 eps + c2 log(1/tau) / n, capped at the breakdown constant 1/6.

Also here: power iteration for the top eigenpair, the bucketed variant
(filter the means of k = floor(eps' n) random buckets) and the lower bound
on the unknown covariance scale sigma.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from ..errors import BreakdownError, InvalidArgumentError
from ..log import get_logger
from .rng import derive_seed, make_rng

logger = get_logger(__name__)

BREAKDOWN = 1.0 / 6.0
TRACE_COLUMNS = ["iter", "mass", "top_eig", "t", "m", "removed"]


@dataclass(frozen=True)
class FilterConfig:
    """Constants of the filter. Only ``epsilon`` is problem dependent."""
    epsilon: float = 0.0
    tau: float = 0.05
    c1: float = 2.0
    c2: float = 2.0
    breakdown: float = BREAKDOWN
    power_tol: float = 1e-8
    power_max_iter: int = 200
    degenerate_tol: float = 1e-12
    min_tail_score: float = 1e-15
    seed: int = 0
    epsilon_prime_override: Optional[float] = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise InvalidArgumentError(f"epsilon={self.epsilon} must be >= 0")
        if not 0.0 < self.tau < 1.0:
            raise InvalidArgumentError(f"tau={self.tau} must lie in (0, 1)")
        if self.power_max_iter < 1:
            raise InvalidArgumentError("power_max_iter must be >= 1")

    def epsilon_prime(self, n: int) -> float:
        if self.epsilon >= self.breakdown:
            raise BreakdownError(
                f"epsilon={self.epsilon} reaches the breakdown constant {self.breakdown:.4f}")
        if self.epsilon_prime_override is not None:
            return float(self.epsilon_prime_override)
        raw = self.c1 * self.epsilon + self.c2 * math.log(1.0 / self.tau) / n
        return min(raw, self.breakdown)


class TopEigenpair(NamedTuple):
    vector: NDArray[np.float64]
    value: float
    converged: bool
    iterations: int


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Filter weights; entries start at 1/n and only decrease."""
    weights: NDArray[np.float64]

    @classmethod
    def uniform(cls, n: int) -> "WeightVector":
        return cls(np.full(n, 1.0 / n))

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def downweighted(self, tail_scores: NDArray[np.float64], m: float) -> "WeightVector":
        return WeightVector(self.weights * (1.0 - tail_scores / m))


@dataclass(frozen=True, eq=False)
class FilterReport:
    estimate: NDArray[np.float64]
    weights: NDArray[np.float64]
    iterations: int
    top_eigenvalue: float
    trace: float
    exit_reason: str
    epsilon_prime: float
    history: List[dict] = field(default_factory=list)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def to_frame(self) -> pd.DataFrame:
        """One row per filter iteration."""
        return pd.DataFrame(self.history, columns=TRACE_COLUMNS)


def top_eigenvector(M, tol: float = 1e-8, max_iter: int = 200, seed: int = 0) -> TopEigenpair:
    """Power iteration from a seeded random start.

    Stops when the Rayleigh quotient moves by at most tol * trace(M). If
    max_iter runs out the best iterate comes back with converged=False.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-10 * scale):
        raise InvalidArgumentError("matrix is not symmetric")
    d = M.shape[0]
    v = make_rng(seed).standard_normal(d)
    v /= np.linalg.norm(v)
    tr = float(np.trace(M))
    value = float(v @ M @ v)
    if tr <= 0.0:
        return TopEigenpair(v, max(value, 0.0), True, 0)
    for k in range(1, max_iter + 1):
        u = M @ v
        norm = float(np.linalg.norm(u))
        if norm == 0.0:
            return TopEigenpair(v, 0.0, True, k)
        v = u / norm
        new_value = float(v @ M @ v)
        if abs(new_value - value) <= tol * tr:
            return TopEigenpair(v, new_value, True, k)
        value = new_value
    warnings.warn(f"power iteration did not converge in {max_iter} iterations", RuntimeWarning)
    return TopEigenpair(v, value, False, max_iter)


def weighted_moments(X: NDArray[np.float64], h: NDArray[np.float64]):
    """mu(h) and Sigma(h) normalised by the current mass.

    Moments are taken around the first point so that identical inputs give
    their common value exactly.
    """
    mass = float(h.sum())
    if not mass > 0.0:
        raise InvalidArgumentError(f"weights carry no mass (sum {mass})")
    anchor = X[0]
    Y = X - anchor
    shift = (h @ Y) / mass
    C = Y - shift
    sigma = (C * h[:, None]).T @ C / mass
    return anchor + shift, C, sigma


def _tail_threshold(scores: NDArray[np.float64], h: NDArray[np.float64], eps_prime: float) -> float:
    """Largest t with sum_{score >= t} h >= eps'."""
    order = np.argsort(-scores, kind="stable")
    cum = np.cumsum(h[order])
    j = int(np.searchsorted(cum, eps_prime, side="left"))
    j = min(j, scores.shape[0] - 1)
    return float(scores[order[j]])


def filter_mean(points, config: FilterConfig) -> FilterReport:
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n = X.shape[0]
    if n < 2:
        raise InvalidArgumentError(f"filter_mean needs at least 2 points, got {n}")
    eps_prime = config.epsilon_prime(n)
    floor = 1.0 - 2.0 * eps_prime
    w = WeightVector.uniform(n)
    history: List[dict] = []
    exit_reason = "mass"
    iterations = 0

    while w.mass >= floor:
        h = w.weights
        mu, C, sigma = weighted_moments(X, h)
        top = top_eigenvector(sigma, config.power_tol, config.power_max_iter, config.seed)
        if top.value <= config.degenerate_tol * (1.0 + float(mu @ mu)):
            exit_reason = "degenerate"
            break
        scores = (C @ top.vector) ** 2
        t = _tail_threshold(scores, h, eps_prime)
        tail = np.where(scores >= t, scores, 0.0)
        supported = h > 0
        m = float(tail[supported].max()) if supported.any() else 0.0
        if m <= config.min_tail_score:
            exit_reason = "degenerate"
            break
        mass_before = w.mass
        nxt = w.downweighted(tail, m)
        if not nxt.mass > 0.0:
            # every supported score ties at m
            exit_reason = "degenerate"
            break
        w = nxt
        iterations += 1
        history.append({"iter": iterations, "mass": mass_before, "top_eig": top.value,
                        "t": t, "m": m, "removed": mass_before - w.mass})
        if iterations >= n:
            exit_reason = "iteration_cap"
            break

    mu, _, sigma = weighted_moments(X, w.weights)
    top = top_eigenvector(sigma, config.power_tol, config.power_max_iter, config.seed)
    logger.debug("filter exit=%s after %d iterations, mass=%.4f, top_eig=%.4g",
                 exit_reason, iterations, w.mass, top.value)
    return FilterReport(mu, w.weights, iterations, float(top.value), float(np.trace(sigma)),
                        exit_reason, eps_prime, history)


def bucket_count(n: int, epsilon_prime: float) -> int:
    return int(math.floor(epsilon_prime * n + 1e-9))


def bucketed_filter_mean(points, epsilon: float, tau: float, config: FilterConfig) -> FilterReport:
    """Filter the means of k = floor(eps' n) random buckets of size floor(n/k).

    The ragged remainder is dropped. Each corrupted point spoils at most one
    bucket, so the inner filter runs at the breakdown constant.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n, d = X.shape
    outer = replace(config, epsilon=epsilon, tau=tau, epsilon_prime_override=None)
    k = bucket_count(n, outer.epsilon_prime(n))
    if k < 2:
        raise InvalidArgumentError(f"n={n} gives {k} bucket(s); need at least 2")
    size = n // k
    perm = make_rng(derive_seed(config.seed, 1)).permutation(n)
    Z = X[perm[:k * size]].reshape(k, size, d).mean(axis=1)
    inner = replace(outer, epsilon_prime_override=outer.breakdown)
    logger.debug("bucketed filter: %d buckets of %d", k, size)
    return filter_mean(Z, inner)


def sigma_inflation(epsilon: float, n: int, d: int, tau: float, c: float = 1.0,
                    epsilon_prime: Optional[float] = None) -> float:
    """sqrt(1 + c delta^2 / eps) with delta = sqrt(eps) + sqrt(d/n) + sqrt(log(1/tau)/n)."""
    delta = math.sqrt(epsilon) + math.sqrt(d / n) + math.sqrt(math.log(1.0 / tau) / n)
    eff = epsilon if epsilon > 0 else epsilon_prime
    if not eff:
        raise InvalidArgumentError("need epsilon > 0 or an epsilon_prime to normalise delta")
    return math.sqrt(1.0 + c * delta ** 2 / eff)


def estimate_sigma_lower_bound(points, epsilon: float, tau: float, config: FilterConfig,
                               c: float = 1.0) -> float:
    """sigma_hat = sqrt(||Sigma(h)||) / sqrt(1 + c delta^2 / eps) after filtering."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    report = filter_mean(X, replace(config, epsilon=epsilon, tau=tau))
    n, d = X.shape
    return math.sqrt(max(report.top_eigenvalue, 0.0)) / sigma_inflation(
        epsilon, n, d, tau, c, report.epsilon_prime)
