# tools/optimizer.py
"""
Projected (biased) gradient descent and its robust drivers.

- pgd_biased:      w_t = Proj(w_{t-1} - eta g_t) for any gradient oracle,
                   output the average of w_1..w_T
- robust_net_pgd:  gradients are filtered at the nearest point of an
                   implicit grid net (spacing xi / sqrt(d)); estimates are
                   memoised per net point
- robust_pgd:      same loop, filtered at w itself, smooth or Lipschitz
                   schedule
- naive_mean_pgd:  sample-mean gradient baseline on the same core

Step sizes: eta = 1/beta (smooth) or eta = D / ((L + B) sqrt(T)) (Lipschitz).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from ..errors import InvalidArgumentError
from ..log import get_logger
from .contamination import ContaminatedSampleSet
from .domain import FeasibleDomain
from .filtering import FilterConfig, FilterReport, bucketed_filter_mean, estimate_sigma_lower_bound, filter_mean
from .problems import GradientBatch, SampleFunction

logger = get_logger(__name__)

SCHEDULES = ("constant_smooth", "constant_lipschitz")
DEFAULT_T = 100
MAX_T = 10_000
XI_FLOOR = 1e-9
C_MEAN = 4.0

Samples = Union[ContaminatedSampleSet, Sequence[SampleFunction]]


def project(domain: FeasibleDomain, y) -> NDArray[np.float64]:
    """Exact Euclidean projection onto the domain."""
    return domain.project(y)


@dataclass(frozen=True)
class PGDConfig:
    schedule: str = "constant_smooth"
    T: int = DEFAULT_T
    beta: Optional[float] = None
    lipschitz: Optional[float] = None
    bias_bound: float = 0.0
    step: Optional[float] = None

    def __post_init__(self):
        if self.schedule not in SCHEDULES:
            raise InvalidArgumentError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if int(self.T) < 1:
            raise InvalidArgumentError(f"T={self.T} must be >= 1")
        if self.bias_bound < 0:
            raise InvalidArgumentError("bias_bound must be >= 0")

    def step_size(self, diameter: float) -> float:
        if self.step is not None:
            eta = float(self.step)
        elif self.schedule == "constant_smooth":
            if not self.beta or self.beta <= 0:
                raise InvalidArgumentError("constant_smooth schedule needs beta > 0")
            eta = 1.0 / self.beta
        else:
            if self.lipschitz is None or self.lipschitz + self.bias_bound <= 0:
                raise InvalidArgumentError("constant_lipschitz schedule needs L + B > 0")
            eta = diameter / ((self.lipschitz + self.bias_bound) * math.sqrt(self.T))
        if not eta > 0:
            raise InvalidArgumentError(f"step size {eta} must be > 0")
        return eta


@dataclass(frozen=True, eq=False)
class PGDResult:
    w_hat: NDArray[np.float64]
    iterates: NDArray[np.float64]
    history: List[dict] = field(default_factory=list)
    info: Dict[str, object] = field(default_factory=dict)

    @property
    def T(self) -> int:
        return int(self.iterates.shape[0])

    def trace_frame(self) -> pd.DataFrame:
        """One row per iteration: t, grad_norm, risk, dist_to_opt."""
        return pd.DataFrame(self.history, columns=["t", "grad_norm", "risk", "dist_to_opt"])


def pgd_biased(grad_oracle: Callable[[NDArray[np.float64]], NDArray[np.float64]],
               domain: FeasibleDomain, config: PGDConfig, w0=None, *,
               risk_fn: Optional[Callable] = None, w_star=None) -> PGDResult:
    """Projected gradient descent with an arbitrary (possibly biased) oracle.

    Args:
        grad_oracle: w -> gradient estimate
        domain: feasible set
        config: schedule, T and constants
        w0: start point, default the domain center
        risk_fn: optional closed-form risk recorded per iteration
        w_star: optional minimiser for the distance column
    Returns:
        PGDResult with w_hat the average of w_1..w_T
    """
    w = domain.center.copy() if w0 is None else np.asarray(w0, dtype=float).copy()
    if not domain.contains(w):
        raise InvalidArgumentError("w0 is not feasible")
    eta = config.step_size(domain.diameter())
    T = int(config.T)
    iterates = np.empty((T, domain.dim))
    history: List[dict] = []
    ws = None if w_star is None else np.asarray(w_star, dtype=float)
    for t in range(T):
        g = np.asarray(grad_oracle(w), dtype=float)
        w = domain.project(w - eta * g)
        if not domain.contains(w):
            raise RuntimeError(f"iterate {t + 1} left the feasible set")
        iterates[t] = w
        history.append({
            "t": t + 1,
            "grad_norm": float(np.linalg.norm(g)),
            "risk": float(risk_fn(w)) if risk_fn is not None else float("nan"),
            "dist_to_opt": float(np.linalg.norm(w - ws)) if ws is not None else float("nan"),
        })
    return PGDResult(iterates.mean(axis=0), iterates, history, {"eta": eta, "T": T})


@dataclass(frozen=True)
class NetConfig:
    """Implicit xi-net: the grid (xi / sqrt(d)) Z^d."""
    xi: float
    dim: int

    def __post_init__(self):
        if not self.xi > 0:
            raise InvalidArgumentError(f"xi={self.xi} must be > 0")
        if self.dim < 1:
            raise InvalidArgumentError(f"dim={self.dim} must be >= 1")

    @property
    def spacing(self) -> float:
        return self.xi / math.sqrt(self.dim)

    def key(self, w) -> Tuple[int, ...]:
        return tuple(np.round(np.asarray(w, dtype=float) / self.spacing).astype(np.int64).tolist())


def nearest_net_point(net: NetConfig, w) -> NDArray[np.float64]:
    """Scale, round, rescale. Within xi/2 of w."""
    w = np.asarray(w, dtype=float)
    if w.shape != (net.dim,):
        raise InvalidArgumentError(f"point has shape {w.shape}, net is {net.dim}-dimensional")
    return np.round(w / net.spacing) * net.spacing


def default_iterations(beta_bar: float, diameter: float, sigma: float, epsilon: float,
                       d: int, n: int, tau: float, t_max: int = MAX_T) -> int:
    """ceil(beta D / (sigma sqrt(eps) + sigma sqrt(d log(1/tau) / n)))."""
    denom = sigma * math.sqrt(epsilon) + sigma * math.sqrt(d * math.log(1.0 / tau) / n)
    if denom <= 0:
        return min(DEFAULT_T, t_max)
    T = int(math.ceil(beta_bar * diameter / denom))
    if T > t_max:
        warnings.warn(f"iteration count {T} clipped to {t_max}", RuntimeWarning)
        T = t_max
    return max(T, 1)


def sample_list(samples: Samples) -> Tuple[SampleFunction, ...]:
    if isinstance(samples, ContaminatedSampleSet):
        return samples.stripped()
    functions = tuple(samples)
    if not functions:
        raise InvalidArgumentError("no samples")
    return functions


class _FilterOracle:
    """Filtered mean of a gradient matrix; keeps the last FilterReport."""

    def __init__(self, epsilon: float, tau: float, filter_config: Optional[FilterConfig], bucketed: bool):
        self.config = replace(filter_config or FilterConfig(), epsilon=epsilon, tau=tau)
        self.config.epsilon_prime(2)  # breakdown check before any gradient work
        self.bucketed = bucketed
        self.last: Optional[FilterReport] = None

    def __call__(self, G: NDArray[np.float64]) -> NDArray[np.float64]:
        if self.bucketed:
            self.last = bucketed_filter_mean(G, self.config.epsilon, self.config.tau, self.config)
        else:
            self.last = filter_mean(G, self.config)
        return self.last.estimate

    def summary(self) -> Dict[str, object]:
        if self.last is None:
            return {}
        return {"filter_report": self.last, "filter_top_eig": self.last.top_eigenvalue,
                "filter_mass": self.last.mass}


def statistical_bias_bound(sigma: float, epsilon: float, d: int, n: int, tau: float,
                           c_mean: float = C_MEAN) -> float:
    """c sigma sqrt(eps) + c sigma sqrt(d log(1/tau) / n)."""
    return c_mean * sigma * (math.sqrt(epsilon) + math.sqrt(d * math.log(1.0 / tau) / n))


def _sigma_or_estimate(sigma, batch, domain, w0, epsilon, tau, filter_config) -> float:
    if sigma is not None:
        if sigma < 0:
            raise InvalidArgumentError(f"sigma={sigma} must be >= 0")
        return float(sigma)
    start = domain.center if w0 is None else np.asarray(w0, dtype=float)
    fc = filter_config or FilterConfig()
    sigma_hat = estimate_sigma_lower_bound(batch.gradients(start), epsilon, tau, fc)
    logger.debug("sigma unknown, using lower bound %.4g", sigma_hat)
    return sigma_hat


def robust_net_pgd(samples: Samples, domain: FeasibleDomain, *, sigma: Optional[float],
                   beta_bar: float, epsilon: float, tau: float = 0.05, T: Optional[int] = None,
                   filter_config: Optional[FilterConfig] = None, w0=None, bucketed: bool = False,
                   risk_fn: Optional[Callable] = None, w_star=None, t_max: int = MAX_T) -> PGDResult:
    """Net-based projected gradient descent with filtered gradients.

    sigma=None estimates a lower bound on sigma from the gradients at w0.
    With xi = sigma sqrt(eps) / beta_bar at or below 1e-9 D the net is skipped.
    """
    if beta_bar is None or not beta_bar > 0:
        raise InvalidArgumentError("robust_net_pgd needs a finite beta_bar > 0")
    functions = sample_list(samples)
    batch = GradientBatch(functions)
    n, d, D = len(functions), domain.dim, domain.diameter()
    sigma = _sigma_or_estimate(sigma, batch, domain, w0, epsilon, tau, filter_config)
    if T is None:
        T = default_iterations(beta_bar, D, sigma, epsilon, d, n, tau, t_max)

    if sigma == 0 and epsilon == 0:
        oracle = lambda w: batch.gradients(w).mean(axis=0)  # noqa: E731
        result = pgd_biased(oracle, domain, PGDConfig("constant_smooth", T, beta=beta_bar), w0,
                            risk_fn=risk_fn, w_star=w_star)
        result.info.update({"xi": 0.0, "net": False, "sigma": 0.0, "evaluations": T})
        return result

    estimate = _FilterOracle(epsilon, tau, filter_config, bucketed)
    xi = sigma * math.sqrt(epsilon) / beta_bar
    use_net = xi > XI_FLOOR * D
    net = NetConfig(xi, d) if use_net else None
    cache: Dict[Tuple[int, ...], NDArray[np.float64]] = {}
    calls = {"evaluations": 0}

    def oracle(w):
        if net is None:
            calls["evaluations"] += 1
            return estimate(batch.gradients(w))
        key = net.key(w)
        if key not in cache:
            calls["evaluations"] += 1
            cache[key] = estimate(batch.gradients(nearest_net_point(net, w)))
        return cache[key]

    result = pgd_biased(oracle, domain, PGDConfig("constant_smooth", T, beta=beta_bar), w0,
                        risk_fn=risk_fn, w_star=w_star)
    result.info.update({"xi": xi if use_net else 0.0, "net": use_net, "sigma": sigma,
                        "evaluations": calls["evaluations"]})
    result.info.update(estimate.summary())
    logger.debug("robust_net_pgd: T=%d xi=%.3g net=%s filter calls=%d",
                 T, xi, use_net, calls["evaluations"])
    return result


def _schedule(beta_bar, lipschitz, sigma, epsilon, d, n, D, tau, T, t_max) -> PGDConfig:
    if beta_bar is not None and beta_bar > 0:
        if T is None:
            T = default_iterations(beta_bar, D, sigma, epsilon, d, n, tau, t_max)
        return PGDConfig("constant_smooth", T, beta=beta_bar)
    if lipschitz is None:
        raise InvalidArgumentError("supply beta_bar > 0 or lipschitz")
    B = statistical_bias_bound(sigma, epsilon, d, n, tau)
    if T is None:
        # DL/sqrt(T) matched to the statistical bias BD
        T = DEFAULT_T if B <= 0 else int(math.ceil((lipschitz / B) ** 2))
        T = max(1, min(T, t_max))
    return PGDConfig("constant_lipschitz", T, lipschitz=lipschitz, bias_bound=B)


def robust_pgd(samples: Samples, domain: FeasibleDomain, *, sigma: Optional[float], epsilon: float,
               tau: float = 0.05, T: Optional[int] = None, beta_bar: Optional[float] = None,
               lipschitz: Optional[float] = None, filter_config: Optional[FilterConfig] = None,
               w0=None, bucketed: bool = False, risk_fn: Optional[Callable] = None, w_star=None,
               t_max: int = MAX_T) -> PGDResult:
    """Filtered gradients at w itself; beta_bar selects the smooth schedule,
    otherwise lipschitz selects the Lipschitz one."""
    functions = sample_list(samples)
    batch = GradientBatch(functions)
    n, d, D = len(functions), domain.dim, domain.diameter()
    sigma = _sigma_or_estimate(sigma, batch, domain, w0, epsilon, tau, filter_config)
    config = _schedule(beta_bar, lipschitz, sigma, epsilon, d, n, D, tau, T, t_max)
    estimate = None
    if sigma == 0 and epsilon == 0:
        oracle = lambda w: batch.gradients(w).mean(axis=0)  # noqa: E731
    else:
        estimate = _FilterOracle(epsilon, tau, filter_config, bucketed)
        oracle = lambda w: estimate(batch.gradients(w))  # noqa: E731
    result = pgd_biased(oracle, domain, config, w0, risk_fn=risk_fn, w_star=w_star)
    result.info.update({"sigma": sigma, "schedule": config.schedule, "bias_bound": config.bias_bound})
    if estimate is not None:
        result.info.update(estimate.summary())
    return result


def naive_mean_pgd(samples: Samples, domain: FeasibleDomain, *, sigma: float, epsilon: float,
                   tau: float = 0.05, T: Optional[int] = None, beta_bar: Optional[float] = None,
                   lipschitz: Optional[float] = None, w0=None, risk_fn: Optional[Callable] = None,
                   w_star=None, t_max: int = MAX_T) -> PGDResult:
    """Baseline: plain sample-mean gradients, same schedule rules as robust_pgd."""
    functions = sample_list(samples)
    batch = GradientBatch(functions)
    n, d, D = len(functions), domain.dim, domain.diameter()
    config = _schedule(beta_bar, lipschitz, sigma, epsilon, d, n, D, tau, T, t_max)
    result = pgd_biased(lambda w: batch.gradients(w).mean(axis=0), domain, config, w0,
                        risk_fn=risk_fn, w_star=w_star)
    result.info.update({"sigma": sigma, "schedule": config.schedule})
    return result
