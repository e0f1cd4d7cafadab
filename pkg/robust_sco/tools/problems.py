# tools/problems.py
"""
Function distributions for robust stochastic convex optimization.

A FunctionDistribution is a sampleable family of convex losses f_x(w) whose
population risk E[f_x(w)] and its gradient have closed forms, together with
the regularity constants the optimizers need:

- sigma:        bound on the spectral norm of the gradient covariance
- beta_bar:     smoothness of the population risk (None if nonsmooth)
- lipschitz:    Lipschitz constant of the population risk on the domain
- moment_bound: G with E[(v . grad f(w))^2] <= G^2 for unit v

Families:
- linear_loss        f_x(w) = -<w, x>,  x ~ N(mu, sigma^2 I)
- quadratic          f_x(w) = 1/2 w'Aw - <w, x> + c,  x ~ N(A w*, sigma^2 I)
- scaled_quadratic   f_x(w) = -1/2 x ||w||^2,  x ~ N(-kappa, s^2)
- abs_loss           f_x(w) = L ||w - x||,  x ~ N(c, rho^2 I)
- spike_1d           two-point lower-bound pair D1 / D1'
- product_hypercube  product of biased +-sigma coins

Usage:
    dist = make_quadratic(w_star=[0.2, 0.0], sigma=1.0, domain=FeasibleDomain.ball(2, 2.0))
    fs = sample_functions(dist, 1000, seed=7)
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy import special

from ..errors import InvalidArgumentError, UnsupportedFamilyError
from .domain import FeasibleDomain
from .rng import SeedLike, make_rng

FAMILIES = ("linear_loss", "quadratic", "scaled_quadratic", "abs_loss",
            "spike_1d", "product_hypercube")
SPIKE_AXIS = 0


# ---------------------------------------------------------------------------
# Per-sample loss kernels. P holds one parameter row per sample, W one
# evaluation point per row (already shifted).
# ---------------------------------------------------------------------------

class LinearKernel:
    """f_x(w) = -<w, x>."""
    name = "linear"

    def values(self, P, W):
        return -np.einsum("ij,ij->i", W, P)

    def gradients(self, P, W):
        return -np.broadcast_to(P, W.shape).astype(float, copy=True)


class QuadraticKernel:
    """f_x(w) = 1/2 w'Aw - <w, x> + offset with A = diag(spectrum)."""
    name = "quadratic"

    def __init__(self, spectrum: NDArray[np.float64], offset: float):
        self.spectrum = spectrum
        self.offset = float(offset)

    def values(self, P, W):
        return 0.5 * np.einsum("ij,j,ij->i", W, self.spectrum, W) - np.einsum("ij,ij->i", W, P) + self.offset

    def gradients(self, P, W):
        return W * self.spectrum - P


class ScaledQuadraticKernel:
    """f_x(w) = -1/2 x ||w||^2 with a scalar draw x."""
    name = "scaled_quadratic"

    def values(self, P, W):
        return -0.5 * P[:, 0] * np.einsum("ij,ij->i", W, W)

    def gradients(self, P, W):
        return -P[:, :1] * W


class AbsKernel:
    """f_x(w) = L ||w - x||; the subgradient at w = x is taken as 0."""
    name = "abs"

    def __init__(self, lipschitz: float):
        self.lipschitz = float(lipschitz)

    def values(self, P, W):
        return self.lipschitz * np.linalg.norm(W - P, axis=1)

    def gradients(self, P, W):
        diff = W - P
        norms = np.linalg.norm(diff, axis=1, keepdims=True)
        safe = np.where(norms > 0, norms, 1.0)
        return np.where(norms > 0, self.lipschitz * diff / safe, 0.0)


@dataclass(frozen=True, eq=False)
class SampleFunction:
    """One drawn loss f_x, optionally evaluated at a shifted point w + shift."""
    family: str
    params: NDArray[np.float64]
    kernel: Any = field(repr=False)
    shift: Optional[NDArray[np.float64]] = None

    def _point(self, w) -> NDArray[np.float64]:
        w = np.asarray(w, dtype=float).reshape(1, -1)
        return w if self.shift is None else w + self.shift

    def value(self, w) -> float:
        return float(self.kernel.values(self.params.reshape(1, -1), self._point(w))[0])

    def gradient(self, w) -> NDArray[np.float64]:
        return self.kernel.gradients(self.params.reshape(1, -1), self._point(w))[0]

    def shifted(self, u) -> "SampleFunction":
        """f(. + u)."""
        u = np.asarray(u, dtype=float)
        total = u if self.shift is None else self.shift + u
        total = np.array(total, copy=True)
        total.setflags(write=False)
        return SampleFunction(self.family, self.params, self.kernel, total)


class GradientBatch:
    """Stacked view of many SampleFunctions for vectorised gradient evaluation.

    Functions are grouped by kernel object; output rows keep the input order.
    """

    def __init__(self, functions: Sequence[SampleFunction]):
        if len(functions) == 0:
            raise InvalidArgumentError("no functions to stack")
        self.n = len(functions)
        groups: Dict[int, Tuple[Any, List[int]]] = {}
        for i, f in enumerate(functions):
            groups.setdefault(id(f.kernel), (f.kernel, []))[1].append(i)
        self._groups = []
        for kernel, idx in groups.values():
            index = np.asarray(idx, dtype=np.intp)
            P = np.stack([functions[i].params for i in idx])
            shifts = None
            if any(functions[i].shift is not None for i in idx):
                d = next(functions[i].shift.shape[0] for i in idx if functions[i].shift is not None)
                shifts = np.stack([functions[i].shift if functions[i].shift is not None else np.zeros(d)
                                   for i in idx])
            self._groups.append((kernel, index, P, shifts))

    def _points(self, w, m, shifts):
        W = np.broadcast_to(np.asarray(w, dtype=float), (m, np.asarray(w).shape[0]))
        return W + shifts if shifts is not None else W

    def gradients(self, w) -> NDArray[np.float64]:
        w = np.asarray(w, dtype=float)
        out = np.empty((self.n, w.shape[0]))
        for kernel, index, P, shifts in self._groups:
            out[index] = kernel.gradients(P, self._points(w, len(index), shifts))
        return out

    def values(self, w) -> NDArray[np.float64]:
        w = np.asarray(w, dtype=float)
        out = np.empty(self.n)
        for kernel, index, P, shifts in self._groups:
            out[index] = kernel.values(P, self._points(w, len(index), shifts))
        return out


def gradient_matrix(functions: Sequence[SampleFunction], w) -> NDArray[np.float64]:
    """Row i is grad f_i(w)."""
    return GradientBatch(functions).gradients(w)


# ---------------------------------------------------------------------------
# Family models: sampling, closed-form population risk and minimum.
# ---------------------------------------------------------------------------

def _linear_minimum(mean: NDArray[np.float64], domain: FeasibleDomain) -> float:
    """min over the domain of -<w, mean>."""
    if domain.kind == "ball":
        return float(-domain.center @ mean - domain.radius * np.linalg.norm(mean))
    return float(-domain.center @ mean - np.sum(domain.half_widths * np.abs(mean)))


class _LinearMeanModel:
    """Shared closed forms for f_x(w) = -<w, x>."""
    kernel = LinearKernel()
    mean: NDArray[np.float64]

    def risk(self, w):
        return float(-np.asarray(w, dtype=float) @ self.mean)

    def gradient(self, w):
        return -self.mean.copy()

    def minimum(self, domain):
        return _linear_minimum(self.mean, domain)


class _GaussianLinearModel(_LinearMeanModel):
    def __init__(self, mean, sigma):
        self.mean = np.asarray(mean, dtype=float)
        self.sigma = float(sigma)

    def draw(self, rng, n):
        d = self.mean.shape[0]
        if self.sigma == 0:
            return np.tile(self.mean, (n, 1))
        return self.mean + self.sigma * rng.standard_normal((n, d))


class _SpikeModel(_LinearMeanModel):
    def __init__(self, sigma, eps, variant, dim):
        self.sigma, self.eps, self.variant, self.dim = float(sigma), float(eps), variant, int(dim)
        self.height = self.sigma / math.sqrt(self.eps)
        self.mean = np.zeros(self.dim)
        if variant == "D1prime":
            self.mean[SPIKE_AXIS] = self.sigma * math.sqrt(self.eps)

    def draw(self, rng, n):
        u = rng.uniform(0.0, 1.0, size=n)
        x = np.zeros((n, self.dim))
        if self.variant == "D1":
            col = np.where(u < 0.5 * self.eps, self.height, np.where(u < self.eps, -self.height, 0.0))
        else:
            col = np.where(u < self.eps, self.height, 0.0)
        x[:, SPIKE_AXIS] = col
        return x

    def support(self) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Spike-coordinate values and their probabilities."""
        h = self.height
        if self.variant == "D1":
            return np.array([0.0, h, -h]), np.array([1.0 - self.eps, 0.5 * self.eps, 0.5 * self.eps])
        return np.array([0.0, h]), np.array([1.0 - self.eps, self.eps])

    def spike_variance(self) -> float:
        if self.variant == "D1":
            return self.sigma ** 2
        return self.sigma ** 2 - self.sigma ** 2 * self.eps


class _ProductModel(_LinearMeanModel):
    def __init__(self, sigma, deltas):
        self.sigma = float(sigma)
        self.deltas = np.asarray(deltas, dtype=float)
        self.mean = self.sigma * self.deltas

    def draw(self, rng, n):
        u = rng.uniform(0.0, 1.0, size=(n, self.deltas.shape[0]))
        return np.where(u < 0.5 * (1.0 + self.deltas), self.sigma, -self.sigma)


class _QuadraticModel:
    def __init__(self, w_star, spectrum, sigma):
        self.w_star = np.asarray(w_star, dtype=float)
        self.spectrum = np.asarray(spectrum, dtype=float)
        self.sigma = float(sigma)
        offset = 0.5 * float(self.w_star @ (self.spectrum * self.w_star))
        self.kernel = QuadraticKernel(self.spectrum, offset)

    def draw(self, rng, n):
        centre = self.spectrum * self.w_star
        if self.sigma == 0:
            return np.tile(centre, (n, 1))
        return centre + self.sigma * rng.standard_normal((n, centre.shape[0]))

    def risk(self, w):
        r = np.asarray(w, dtype=float) - self.w_star
        return float(0.5 * r @ (self.spectrum * r))

    def gradient(self, w):
        return self.spectrum * (np.asarray(w, dtype=float) - self.w_star)

    def minimizer(self, domain):
        if domain.contains(self.w_star, tol=0.0):
            return self.w_star.copy()
        if domain.kind == "box":
            # diagonal A separates over coordinates
            return domain.project(self.w_star)
        if np.allclose(self.spectrum, self.spectrum[0]):
            return domain.project(self.w_star)
        raise UnsupportedFamilyError(
            "quadratic with anisotropic spectrum has no closed-form minimum on a ball "
            "when w* lies outside it")

    def minimum(self, domain):
        return self.risk(self.minimizer(domain))


class _ScaledQuadraticModel:
    kernel = ScaledQuadraticKernel()

    def __init__(self, curvature, scale_std):
        self.curvature = float(curvature)
        self.scale_std = float(scale_std)

    def draw(self, rng, n):
        return (-self.curvature + self.scale_std * rng.standard_normal(n)).reshape(n, 1)

    def risk(self, w):
        w = np.asarray(w, dtype=float)
        return float(0.5 * self.curvature * (w @ w))

    def gradient(self, w):
        return self.curvature * np.asarray(w, dtype=float)

    def minimum(self, domain):
        return self.risk(domain.project(np.zeros(domain.dim)))


class _AbsModel:
    """E[L ||w - x||] for x ~ N(c, rho^2 I) via the noncentral chi mean."""

    def __init__(self, center, lipschitz, spread):
        self.center = np.asarray(center, dtype=float)
        self.lipschitz = float(lipschitz)
        self.spread = float(spread)
        self.kernel = AbsKernel(self.lipschitz)
        d = self.center.shape[0]
        self._k = math.exp(special.gammaln(0.5 * (d + 1)) - special.gammaln(0.5 * d))

    def draw(self, rng, n):
        d = self.center.shape[0]
        if self.spread == 0:
            return np.tile(self.center, (n, 1))
        return self.center + self.spread * rng.standard_normal((n, d))

    def risk(self, w):
        m = np.asarray(w, dtype=float) - self.center
        if self.spread == 0:
            return self.lipschitz * float(np.linalg.norm(m))
        d = m.shape[0]
        z = -float(m @ m) / (2.0 * self.spread ** 2)
        return float(self.lipschitz * self.spread * math.sqrt(2.0) * self._k
                     * special.hyp1f1(-0.5, 0.5 * d, z))

    def gradient(self, w):
        m = np.asarray(w, dtype=float) - self.center
        if self.spread == 0:
            norm = float(np.linalg.norm(m))
            return self.lipschitz * m / norm if norm > 0 else np.zeros_like(m)
        d = m.shape[0]
        z = -float(m @ m) / (2.0 * self.spread ** 2)
        coef = math.sqrt(2.0) * self._k / (self.spread * d) * special.hyp1f1(0.5, 0.5 * d + 1.0, z)
        return self.lipschitz * coef * m

    def minimum(self, domain):
        # the risk is increasing in ||w - c||
        return self.risk(domain.project(self.center))


# ---------------------------------------------------------------------------
# Public types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FunctionDistribution:
    family: str
    domain: FeasibleDomain
    sigma: float
    beta_bar: Optional[float]
    lipschitz: Optional[float]
    moment_bound: Optional[float]
    params: Dict[str, Any] = field(default_factory=dict)
    model: Any = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def kernel(self):
        return self.model.kernel

    def draw_params(self, rng: np.random.Generator, n: int) -> NDArray[np.float64]:
        return self.model.draw(rng, n)

    def population_risk(self, w) -> float:
        return self.model.risk(w)

    def population_gradient(self, w) -> NDArray[np.float64]:
        return self.model.gradient(w)

    def minimum_risk(self) -> float:
        return self.model.minimum(self.domain)

    def excess_risk(self, w) -> float:
        return self.population_risk(w) - self.minimum_risk()

    def smoothness_for_schedule(self) -> float:
        """beta_bar for the constant step 1/beta.

        Linear families are beta-smooth for every beta >= 0; they report
        beta_bar = 0 and get sigma / D, which keeps one step of an average
        gradient inside one domain diameter.
        """
        if self.beta_bar is None:
            raise InvalidArgumentError(f"{self.family} has no finite population smoothness")
        if self.beta_bar > 0:
            return float(self.beta_bar)
        if self.sigma <= 0:
            raise InvalidArgumentError(f"{self.family} with sigma = 0 has no usable smoothness scale")
        return self.sigma / self.domain.diameter()

    def describe(self) -> dict:
        return {
            "family": self.family,
            "dim": self.dim,
            "sigma": self.sigma,
            "beta_bar": self.beta_bar,
            "lipschitz": self.lipschitz,
            "moment_bound": self.moment_bound,
            "domain": self.domain.to_dict(),
        }


@dataclass(frozen=True)
class ProductInstanceParams:
    """Sign vector nu, bias magnitude p (delta_j = p nu_j / sqrt(d)) and scale sigma."""
    nu: Tuple[int, ...]
    p: float
    sigma: float

    def __post_init__(self):
        nu = tuple(int(v) for v in self.nu)
        if not nu or any(v not in (-1, 1) for v in nu):
            raise InvalidArgumentError("nu must be a non-empty vector of +-1 entries")
        object.__setattr__(self, "nu", nu)
        if self.sigma <= 0:
            raise InvalidArgumentError(f"sigma={self.sigma} must be > 0")
        if abs(self.p / math.sqrt(len(nu))) >= 1.0:
            raise InvalidArgumentError(
                f"|p/sqrt(d)| = {abs(self.p) / math.sqrt(len(nu)):.4f} must be < 1")

    @property
    def deltas(self) -> NDArray[np.float64]:
        return self.p * np.asarray(self.nu, dtype=float) / math.sqrt(len(self.nu))


def _check_dim(vec, domain: FeasibleDomain, what: str) -> NDArray[np.float64]:
    v = np.asarray(vec, dtype=float).reshape(-1)
    if v.shape[0] != domain.dim:
        raise InvalidArgumentError(f"{what} has dimension {v.shape[0]}, domain has {domain.dim}")
    return v


def make_linear_loss(mean: Sequence[float], sigma: float, domain: FeasibleDomain) -> FunctionDistribution:
    """Gaussian data x ~ N(mean, sigma^2 I); sigma = 0 gives a point mass."""
    mu = _check_dim(mean, domain, "mean")
    if sigma < 0:
        raise InvalidArgumentError(f"sigma={sigma} must be >= 0")
    norm = float(np.linalg.norm(mu))
    return FunctionDistribution(
        family="linear_loss", domain=domain, sigma=float(sigma), beta_bar=0.0,
        lipschitz=norm, moment_bound=math.sqrt(sigma ** 2 + norm ** 2),
        params={"mean": mu.tolist(), "sigma": float(sigma)},
        model=_GaussianLinearModel(mu, sigma))


def make_quadratic(w_star: Sequence[float], sigma: float, domain: FeasibleDomain,
                   spectrum: Optional[Sequence[float]] = None) -> FunctionDistribution:
    w = _check_dim(w_star, domain, "w_star")
    a = np.ones_like(w) if spectrum is None else _check_dim(spectrum, domain, "spectrum")
    if np.any(a < 0):
        raise InvalidArgumentError("spectrum must be nonnegative (convex population risk)")
    if sigma < 0:
        raise InvalidArgumentError(f"sigma={sigma} must be >= 0")
    beta = float(np.max(a))
    if domain.kind == "ball":
        reach = float(np.linalg.norm(w - domain.center)) + domain.radius
    else:
        reach = float(np.linalg.norm(np.abs(w - domain.center) + domain.half_widths))
    lip = beta * reach
    return FunctionDistribution(
        family="quadratic", domain=domain, sigma=float(sigma), beta_bar=beta,
        lipschitz=lip, moment_bound=math.sqrt(sigma ** 2 + lip ** 2),
        params={"w_star": w.tolist(), "spectrum": a.tolist(), "sigma": float(sigma)},
        model=_QuadraticModel(w, a, sigma))


def make_scaled_quadratic(curvature: float, scale_std: float, domain: FeasibleDomain) -> FunctionDistribution:
    """f_x(w) = -1/2 x ||w||^2 with x ~ N(-curvature, scale_std^2): unbounded
    per-sample smoothness, smooth and Lipschitz population risk."""
    if curvature <= 0:
        raise InvalidArgumentError(f"curvature={curvature} must be > 0 for a convex population risk")
    if scale_std < 0:
        raise InvalidArgumentError(f"scale_std={scale_std} must be >= 0")
    r = domain.max_norm()
    return FunctionDistribution(
        family="scaled_quadratic", domain=domain, sigma=float(scale_std) * r,
        beta_bar=float(curvature), lipschitz=float(curvature) * r,
        moment_bound=math.sqrt(scale_std ** 2 + curvature ** 2) * r,
        params={"curvature": float(curvature), "scale_std": float(scale_std)},
        model=_ScaledQuadraticModel(curvature, scale_std))


def make_abs_loss(center: Sequence[float], lipschitz: float, spread: float,
                  domain: FeasibleDomain) -> FunctionDistribution:
    """f_x(w) = L ||w - x||, x ~ N(center, spread^2 I); spread = 0 is the
    deterministic nonsmooth L ||w - center||."""
    c = _check_dim(center, domain, "center")
    if lipschitz <= 0:
        raise InvalidArgumentError(f"lipschitz={lipschitz} must be > 0")
    if spread < 0:
        raise InvalidArgumentError(f"spread={spread} must be >= 0")
    return FunctionDistribution(
        family="abs_loss", domain=domain, sigma=float(lipschitz), beta_bar=None,
        lipschitz=float(lipschitz), moment_bound=float(lipschitz),
        params={"center": c.tolist(), "lipschitz": float(lipschitz), "spread": float(spread)},
        model=_AbsModel(c, lipschitz, spread))


def make_spike_instance_1d(sigma: float, eps: float, D: float, variant: str = "D1",
                           dim: int = 1) -> FunctionDistribution:
    """Two-point lower-bound instances on the feasible set |w| <= D.

    D1:  x in {0, +-sigma/sqrt(eps)} with probabilities {1-eps, eps/2, eps/2}
    D1': x in {0, sigma/sqrt(eps)} with probabilities {1-eps, eps}
    The spike sits on the first coordinate; ``dim`` > 1 embeds it in R^dim
    with the remaining coordinates identically 0.
    """
    if not 0.0 < eps < 1.0:
        raise InvalidArgumentError(f"eps={eps} must lie in (0, 1)")
    if sigma <= 0 or D <= 0:
        raise InvalidArgumentError("sigma and D must be > 0")
    if variant not in ("D1", "D1prime"):
        raise InvalidArgumentError(f"variant must be 'D1' or 'D1prime', got {variant!r}")
    if dim < 1:
        raise InvalidArgumentError(f"dim={dim} must be >= 1")
    model = _SpikeModel(sigma, eps, variant, dim)
    domain = FeasibleDomain.ball_of_radius(dim, D)
    return FunctionDistribution(
        family="spike_1d", domain=domain, sigma=float(sigma), beta_bar=0.0,
        lipschitz=float(np.linalg.norm(model.mean)), moment_bound=float(sigma),
        params={"sigma": float(sigma), "eps": float(eps), "D": float(D),
                "variant": variant, "dim": int(dim)},
        model=model)


def make_product_instance(params: ProductInstanceParams, D: float) -> FunctionDistribution:
    """Independent +-sigma coordinates with P(+sigma) = (1 + delta_j)/2 and
    f_x(w) = -<w, x> on the ball of diameter D."""
    if D <= 0:
        raise InvalidArgumentError(f"D={D} must be > 0")
    deltas = params.deltas
    d = deltas.shape[0]
    return FunctionDistribution(
        family="product_hypercube", domain=FeasibleDomain.ball(d, D), sigma=params.sigma,
        beta_bar=0.0, lipschitz=float(params.sigma * np.linalg.norm(deltas)),
        moment_bound=float(params.sigma * math.sqrt(1.0 + deltas @ deltas)),
        params={"nu": list(params.nu), "p": float(params.p), "sigma": params.sigma, "D": float(D)},
        model=_ProductModel(params.sigma, deltas))


def sample_functions(dist: FunctionDistribution, n: int, seed: SeedLike) -> Tuple[SampleFunction, ...]:
    """n i.i.d. draws from dist; deterministic in (dist, n, seed)."""
    if int(n) < 1:
        raise InvalidArgumentError(f"n={n} must be >= 1")
    P = np.asarray(dist.draw_params(make_rng(seed), int(n)), dtype=float)
    P.setflags(write=False)
    kernel = dist.kernel
    return tuple(SampleFunction(dist.family, P[i], kernel) for i in range(P.shape[0]))


def population_risk(dist: FunctionDistribution, w) -> float:
    return dist.population_risk(w)


def population_gradient(dist: FunctionDistribution, w) -> NDArray[np.float64]:
    return dist.population_gradient(w)


# ---------------------------------------------------------------------------
# Construction from the harness config
# ---------------------------------------------------------------------------

def _domain_from_table(table: dict, dim: int) -> FeasibleDomain:
    shape = table.get("domain", "ball")
    D = float(table.get("D", 1.0))
    center = table.get("domain_center")
    if shape == "ball":
        return FeasibleDomain.ball(dim, D, center)
    if shape == "box":
        hw = np.full(dim, D / (2.0 * math.sqrt(dim)))  # diagonal equals D
        return FeasibleDomain.box(hw, center)
    raise InvalidArgumentError(f"unknown domain shape {shape!r}")


def _vector(table: dict, key: str, dim: int, default: float = 0.0) -> NDArray[np.float64]:
    """Scalar or list entry broadcast to length dim (extra coordinates default)."""
    raw = table.get(key, default)
    if np.isscalar(raw):
        return np.full(dim, float(raw))
    vec = np.full(dim, float(default))
    vals = np.asarray(raw, dtype=float)[:dim]
    vec[:vals.shape[0]] = vals
    return vec


def distribution_from_config(table: dict, dim: int, sigma: float,
                             epsilon: Optional[float] = None, n: Optional[int] = None) -> FunctionDistribution:
    """Build a distribution from a ``[distribution]`` table for one grid cell.

    Grid values (dim, sigma, epsilon, n) override table defaults; spike
    instances take their spike mass from the cell epsilon unless the table
    pins ``spike_eps``; product instances accept ``p = "sqrt_d_over_n"``.
    """
    family = table.get("family")
    if family not in FAMILIES:
        raise UnsupportedFamilyError(f"unknown family {family!r}; expected one of {FAMILIES}")
    if family == "spike_1d":
        eps = table.get("spike_eps", epsilon)
        if eps is None or not 0.0 < float(eps) < 1.0:
            raise InvalidArgumentError("spike_1d needs spike_eps in (0, 1) when the cell epsilon is 0")
        return make_spike_instance_1d(sigma, float(eps), float(table.get("D", 1.0)),
                                      table.get("variant", "D1"), dim)
    if family == "product_hypercube":
        p = table.get("p", 0.0)
        if p == "sqrt_d_over_n":
            if n is None:
                raise InvalidArgumentError("p = 'sqrt_d_over_n' needs the cell n")
            p = float(table.get("p_scale", 1.0)) * math.sqrt(dim / n)
        nu = table.get("nu")
        if nu is None:
            nu = [1] * dim
        nu = (list(nu) * dim)[:dim]
        return make_product_instance(ProductInstanceParams(tuple(nu), float(p), sigma),
                                     float(table.get("D", 1.0)))
    domain = _domain_from_table(table, dim)
    if family == "linear_loss":
        return make_linear_loss(_vector(table, "mean", dim), sigma, domain)
    if family == "quadratic":
        spectrum = table.get("spectrum")
        return make_quadratic(_vector(table, "w_star", dim), sigma, domain,
                              None if spectrum is None else _vector(table, "spectrum", dim, 1.0))
    if family == "scaled_quadratic":
        r = domain.max_norm()
        return make_scaled_quadratic(float(table.get("curvature", 1.0)), sigma / r, domain)
    return make_abs_loss(_vector(table, "center", dim), float(table.get("lipschitz", 1.0)),
                         float(table.get("spread", 0.0)), domain)
