from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from ..errors import InvalidArgumentError
from ..tools.rng import make_rng


class GoodSetResult:
    def __init__(self, mean_dev: float, cov_norm: float, passed: bool, reason: str):
        self.mean_dev = mean_dev
        self.cov_norm = cov_norm
        self.passed = passed
        self.reason = reason

    def to_dict(self) -> dict:
        return {"mean_dev": self.mean_dev, "cov_norm": self.cov_norm,
                "passes": self.passed, "reason": self.reason}


class StabilityResult:
    def __init__(self, worst_mean_dev: float, worst_cov_dev: float, mean_margin: float,
                 cov_margin: float, n_checked: int):
        self.worst_mean_dev = worst_mean_dev
        self.worst_cov_dev = worst_cov_dev
        self.mean_margin = mean_margin
        self.cov_margin = cov_margin
        self.n_checked = n_checked
        self.mean_passed = mean_margin >= 0
        self.cov_passed = cov_margin >= 0
        self.passed = self.mean_passed and self.cov_passed

    def to_dict(self) -> dict:
        return dict(vars(self))


class DirectionalSweep:
    def __init__(self, max_projected_variance: float, spectral_norm: float, n_probes: int):
        self.max_projected_variance = max_projected_variance
        self.spectral_norm = spectral_norm
        self.n_probes = n_probes
        self.ratio = max_projected_variance / spectral_norm if spectral_norm > 0 else 1.0


def _as_matrix(points) -> NDArray[np.float64]:
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return X


def _spectral(M: NDArray[np.float64]) -> float:
    """Largest |eigenvalue| of a symmetric matrix."""
    vals = linalg.eigh(M, eigvals_only=True)
    return float(np.max(np.abs(vals)))


def _subset_index(subset: Optional[Sequence[int]], n: int) -> NDArray[np.intp]:
    idx = np.arange(n) if subset is None else np.asarray(sorted(set(int(i) for i in subset)), dtype=np.intp)
    if idx.size == 0 or idx.min() < 0 or idx.max() >= n:
        raise InvalidArgumentError("subset must be a non-empty set of valid indices")
    return idx


def check_good_set(grads, subset, pop_grad, sigma: float, epsilon: float,
                   c_mean: float = 4.0, c_cov: float = 4.0) -> GoodSetResult:
    """Does ``subset`` look like a good set at w?

    mean_dev = ||mean_S(g) - grad F||; cov_norm = ||(1/|S|) sum (g - grad F)(g - grad F)'||.
    Passes iff mean_dev <= c_mean sigma sqrt(eps) and cov_norm <= c_cov sigma^2.
    """
    G = _as_matrix(grads)
    n = G.shape[0]
    idx = _subset_index(subset, n)
    if idx.size < (1.0 - epsilon) * n - 1e-9:
        raise InvalidArgumentError(f"subset of size {idx.size} is smaller than (1 - eps) n = {(1 - epsilon) * n:.1f}")
    R = G[idx] - np.asarray(pop_grad, dtype=float)
    mean_dev = float(np.linalg.norm(R.mean(axis=0)))
    cov_norm = _spectral(R.T @ R / idx.size)
    mean_ok = mean_dev <= c_mean * sigma * math.sqrt(epsilon) + 1e-12
    cov_ok = cov_norm <= c_cov * sigma ** 2 + 1e-12
    if mean_ok and cov_ok:
        reason = "OK"
    elif not cov_ok:
        reason = "second moment exceeds c_cov sigma^2"
    else:
        reason = "mean deviation exceeds c_mean sigma sqrt(eps)"
    return GoodSetResult(mean_dev, cov_norm, mean_ok and cov_ok, reason)


def check_stability(points, subset, mu, sigma: float, epsilon: float, delta: float,
                    n_subsets: int = 200, seed: int = 0) -> StabilityResult:
    """Sampled (eps, delta)-stability check; not a certificate.

    Sub-subsets S' with |S'| >= (1 - eps)|S| are drawn at random, plus the
    removals that push hardest along the top eigenvector and by norm. For each
    S' the mean deviation ||mu_S' - mu|| is compared with sigma delta and
    ||Sigma_S' - sigma^2 I|| (second moment centred at mu) with
    sigma^2 delta^2 / eps. Margins are bound minus worst observed deviation.
    """
    if not 0.0 <= epsilon < 0.5:
        raise InvalidArgumentError(f"epsilon={epsilon} must lie in [0, 1/2)")
    if delta < epsilon:
        raise InvalidArgumentError(f"delta={delta} must be >= epsilon={epsilon}")
    X = _as_matrix(points)
    idx = _subset_index(subset, X.shape[0])
    Y = X[idx] - np.asarray(mu, dtype=float)
    size, d = Y.shape
    keep_min = int(math.ceil((1.0 - epsilon) * size - 1e-9))
    n_drop = size - keep_min
    rng = make_rng(seed)

    candidates = [np.arange(size)]
    for _ in range(n_subsets):
        k = int(rng.integers(0, n_drop + 1))
        candidates.append(rng.permutation(size)[k:])
    if n_drop > 0:
        _, vecs = linalg.eigh(Y.T @ Y / size)
        proj = Y @ vecs[:, -1]
        order = np.argsort(proj)
        norms = np.argsort(np.linalg.norm(Y, axis=1))
        candidates += [order[n_drop:], order[:-n_drop], norms[:-n_drop],
                       np.argsort(np.abs(proj))[:-n_drop]]

    eye = sigma ** 2 * np.eye(d)
    worst_mean, worst_cov = 0.0, 0.0
    for keep in candidates:
        Z = Y[keep]
        worst_mean = max(worst_mean, float(np.linalg.norm(Z.mean(axis=0))))
        worst_cov = max(worst_cov, _spectral(Z.T @ Z / Z.shape[0] - eye))
    cov_bound = math.inf if epsilon == 0 else sigma ** 2 * delta ** 2 / epsilon
    return StabilityResult(worst_mean, worst_cov, sigma * delta - worst_mean,
                           cov_bound - worst_cov, len(candidates))


def covariance_diagnostics(points) -> dict:
    """Spectral norm, trace and stable rank of the empirical covariance (1/n)."""
    X = _as_matrix(points)
    if X.shape[0] < 2:
        raise InvalidArgumentError("need at least 2 points")
    C = X - X.mean(axis=0)
    cov = C.T @ C / X.shape[0]
    vals = linalg.eigh(cov, eigvals_only=True)
    spectral = float(max(vals[-1], 0.0))
    trace = float(np.trace(cov))
    return {"spectral_norm": spectral, "trace": trace,
            "stable_rank": trace / spectral if spectral > 0 else 0.0}


def directional_variance_sweep(points, n_probes: int = 10_000, seed: int = 0) -> DirectionalSweep:
    """Max of the empirical E[(v . (g - mean))^2] over random unit v."""
    X = _as_matrix(points)
    C = X - X.mean(axis=0)
    cov = C.T @ C / X.shape[0]
    V = make_rng(seed).standard_normal((n_probes, X.shape[1]))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    projected = np.einsum("ij,jk,ik->i", V, cov, V)
    return DirectionalSweep(float(projected.max()), covariance_diagnostics(X)["spectral_norm"], n_probes)
