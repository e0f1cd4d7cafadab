# tools/contamination.py
"""
Strong epsilon-contamination adversaries.

The adversary sees the whole clean sample list (never the algorithm's seed)
and replaces at most floor(eps * n) entries. Four canonical attacks:

- mean_shift       constant-gradient functions at mu_hat + R v
- tv_swap          sign flips that turn spike instance D1 into D1' (or back)
- worst_direction  mean_shift along the top eigenvector of the clean
                   gradient covariance at a probe point
- huber_mixture    a Bernoulli(eps) subset redrawn from a target distribution
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy import linalg

from ..errors import InvalidArgumentError
from ..log import get_logger
from .domain import FeasibleDomain
from .problems import SPIKE_AXIS, FunctionDistribution, LinearKernel, SampleFunction, gradient_matrix, sample_functions
from .rng import derive_seed, make_rng

logger = get_logger(__name__)

ADVERSARIES = ("none", "mean_shift", "tv_swap", "worst_direction", "huber_mixture")
TV_TARGETS = ("D1prime", "D1")
_CONSTANT_GRADIENT = LinearKernel()


@dataclass(frozen=True, eq=False)
class AdversarySpec:
    """Which attack to run and its knobs.

    magnitude: shift length R (mean_shift; worst_direction defaults to
        sqrt(lambda_max / eps)).
    direction: unit direction for mean_shift, default e_1.
    probe: point at which gradients are inspected, default the domain center.
    target: tv_swap direction, "D1prime" (flip negative spikes) or "D1"
        (flip half of the positive spikes).
    target_distribution: huber_mixture replacement law.
    """
    kind: str = "none"
    magnitude: Optional[float] = None
    direction: Optional[Tuple[float, ...]] = None
    probe: Optional[Tuple[float, ...]] = None
    target: str = "D1prime"
    target_distribution: Optional[FunctionDistribution] = None

    def __post_init__(self):
        if self.kind not in ADVERSARIES:
            raise InvalidArgumentError(f"unknown adversary {self.kind!r}; expected one of {ADVERSARIES}")
        if self.kind == "mean_shift" and self.magnitude is None:
            raise InvalidArgumentError("mean_shift needs a magnitude R")
        if self.magnitude is not None and self.magnitude < 0:
            raise InvalidArgumentError(f"magnitude={self.magnitude} must be >= 0")
        if self.kind == "tv_swap" and self.target not in TV_TARGETS:
            raise InvalidArgumentError(f"tv_swap target must be one of {TV_TARGETS}, got {self.target!r}")
        if self.kind == "huber_mixture" and self.target_distribution is None:
            raise InvalidArgumentError("huber_mixture needs a target_distribution")


@dataclass(frozen=True, eq=False)
class ContaminatedSampleSet:
    functions: Tuple[SampleFunction, ...]
    corruption_mask: NDArray[np.bool_]
    epsilon: float
    adversary: str
    seed: int

    @property
    def n(self) -> int:
        return len(self.functions)

    @property
    def n_corrupted(self) -> int:
        return int(self.corruption_mask.sum())

    def stripped(self) -> Tuple[SampleFunction, ...]:
        """What estimators receive: the functions without the mask."""
        return self.functions


def corruption_budget(n: int, epsilon: float) -> int:
    return int(math.floor(epsilon * n + 1e-9))


def _sample_dim(clean, adversary: AdversarySpec, domain: Optional[FeasibleDomain]) -> int:
    if domain is not None:
        return domain.dim
    if adversary.probe is not None:
        return len(adversary.probe)
    if clean[0].family == "scaled_quadratic":
        raise InvalidArgumentError("scaled_quadratic samples need a domain or probe to fix the dimension")
    return int(clean[0].params.shape[0])


def _probe_point(adversary: AdversarySpec, domain: Optional[FeasibleDomain], d: int) -> NDArray[np.float64]:
    if adversary.probe is not None:
        w = np.asarray(adversary.probe, dtype=float)
        if w.shape != (d,):
            raise InvalidArgumentError(f"probe has shape {w.shape}, samples are {d}-dimensional")
        return w
    if domain is not None:
        return domain.center.copy()
    return np.zeros(d)


def _constant_gradient(g: NDArray[np.float64]) -> SampleFunction:
    # grad of -<w, x> is -x, so x = -g
    params = np.array(-g, dtype=float)
    params.setflags(write=False)
    return SampleFunction("linear_loss", params, _CONSTANT_GRADIENT)


def _unit(direction, d: int) -> NDArray[np.float64]:
    if direction is None:
        v = np.zeros(d)
        v[0] = 1.0
        return v
    v = np.asarray(direction, dtype=float)
    if v.shape != (d,) or not np.linalg.norm(v) > 0:
        raise InvalidArgumentError(f"direction must be a nonzero {d}-vector")
    return v / np.linalg.norm(v)


def _spike_values(clean: Sequence[SampleFunction]) -> NDArray[np.float64]:
    if any(f.family != "spike_1d" for f in clean):
        raise InvalidArgumentError("tv_swap only applies to spike_1d samples")
    return np.array([f.params[SPIKE_AXIS] for f in clean])


def _flipped(f: SampleFunction) -> SampleFunction:
    params = np.array(f.params, copy=True)
    params[SPIKE_AXIS] = -params[SPIKE_AXIS]
    params.setflags(write=False)
    return SampleFunction(f.family, params, f.kernel)


def corrupt(clean: Sequence[SampleFunction], adversary: AdversarySpec, epsilon: float, seed: int,
            *, domain: Optional[FeasibleDomain] = None) -> ContaminatedSampleSet:
    """Replace at most floor(epsilon * n) of the clean samples.

    Uncorrupted indices keep the identical SampleFunction object. Which
    indices get replaced follows a seeded shuffle of 0..n-1.
    """
    if not 0.0 <= epsilon < 0.5:
        raise InvalidArgumentError(f"epsilon={epsilon} must lie in [0, 1/2) (breakdown point exceeded)")
    clean = tuple(clean)
    n = len(clean)
    if n == 0:
        raise InvalidArgumentError("no samples to corrupt")
    out = list(clean)
    mask = np.zeros(n, dtype=bool)
    budget = corruption_budget(n, epsilon)

    if adversary.kind != "none" and budget > 0:
        rng = make_rng(seed)
        order = rng.permutation(n)

        if adversary.kind in ("mean_shift", "worst_direction"):
            d = _sample_dim(clean, adversary, domain)
            w = _probe_point(adversary, domain, d)
            G = gradient_matrix(clean, w)
            mu_hat = G.mean(axis=0)
            if adversary.kind == "mean_shift":
                g = mu_hat + adversary.magnitude * _unit(adversary.direction, d)
            else:
                cov = np.cov(G, rowvar=False, bias=True).reshape(d, d)
                vals, vecs = linalg.eigh(cov)
                lam, v = float(max(vals[-1], 0.0)), vecs[:, -1]
                R = adversary.magnitude if adversary.magnitude is not None else math.sqrt(lam / epsilon)
                g = mu_hat + R * v
            bad = _constant_gradient(g)
            for i in order[:budget]:
                out[i] = bad
                mask[i] = True

        elif adversary.kind == "tv_swap":
            values = _spike_values(clean)
            if adversary.target == "D1prime":
                chosen = [i for i in order if values[i] < 0][:budget]
            else:
                positive = [i for i in order if values[i] > 0]
                chosen = positive[:min(len(positive) // 2, budget)]
            for i in chosen:
                out[i] = _flipped(clean[i])
                mask[i] = True

        else:  # huber_mixture
            u = rng.uniform(0.0, 1.0, size=n)
            chosen = [i for i in order if u[i] < epsilon][:budget]
            if chosen:
                draws = sample_functions(adversary.target_distribution, len(chosen),
                                         derive_seed(int(rng.integers(2 ** 63)), 1))
                for i, f in zip(chosen, draws):
                    out[i] = f
                    mask[i] = True

    logger.debug("%s replaced %d of %d samples (budget %d)", adversary.kind, int(mask.sum()), n, budget)
    mask.setflags(write=False)
    return ContaminatedSampleSet(tuple(out), mask, float(epsilon), adversary.kind, int(seed))


def adversary_from_config(table: dict, target_distribution: Optional[FunctionDistribution] = None) -> AdversarySpec:
    """AdversarySpec from an ``[adversary]`` table."""
    direction = table.get("direction")
    probe = table.get("probe")
    return AdversarySpec(
        kind=table.get("kind", "none"),
        magnitude=None if table.get("magnitude") is None else float(table["magnitude"]),
        direction=None if direction is None else tuple(float(x) for x in direction),
        probe=None if probe is None else tuple(float(x) for x in probe),
        target=table.get("target", "D1prime"),
        target_distribution=target_distribution,
    )
