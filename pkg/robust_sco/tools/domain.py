# tools/domain.py
"""Compact convex feasible sets with exact Euclidean projection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray

from ..errors import InvalidArgumentError


def _frozen(a, dtype=float) -> NDArray[np.float64]:
    arr = np.array(a, dtype=dtype, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FeasibleDomain:
    """An L2 ball (``radius``) or an axis-aligned box (``half_widths``)."""
    kind: str
    center: NDArray[np.float64]
    radius: Optional[float] = None
    half_widths: Optional[NDArray[np.float64]] = None

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen(self.center))
        if self.kind == "ball":
            if self.radius is None or not self.radius > 0:
                raise InvalidArgumentError(f"ball radius must be > 0, got {self.radius}")
            object.__setattr__(self, "radius", float(self.radius))
        elif self.kind == "box":
            if self.half_widths is None:
                raise InvalidArgumentError("box needs half_widths")
            hw = _frozen(self.half_widths)
            if hw.shape != self.center.shape:
                raise InvalidArgumentError(
                    f"half_widths shape {hw.shape} does not match center {self.center.shape}")
            if np.any(hw < 0) or not np.any(hw > 0):
                raise InvalidArgumentError("half_widths must be >= 0 with at least one > 0")
            object.__setattr__(self, "half_widths", hw)
        else:
            raise InvalidArgumentError(f"domain kind must be 'ball' or 'box', got {self.kind!r}")

    # constructors -------------------------------------------------------
    @classmethod
    def ball(cls, dim: int, diameter: float, center: Optional[Sequence[float]] = None) -> "FeasibleDomain":
        """Ball with sup ||w - w'|| = diameter, i.e. radius diameter/2."""
        c = np.zeros(dim) if center is None else center
        return cls("ball", c, radius=0.5 * float(diameter))

    @classmethod
    def ball_of_radius(cls, dim: int, radius: float, center: Optional[Sequence[float]] = None) -> "FeasibleDomain":
        c = np.zeros(dim) if center is None else center
        return cls("ball", c, radius=float(radius))

    @classmethod
    def box(cls, half_widths: Sequence[float], center: Optional[Sequence[float]] = None) -> "FeasibleDomain":
        hw = np.asarray(half_widths, dtype=float)
        c = np.zeros_like(hw) if center is None else center
        return cls("box", c, half_widths=hw)

    # geometry -----------------------------------------------------------
    @property
    def dim(self) -> int:
        return int(self.center.shape[0])

    def diameter(self) -> float:
        if self.kind == "ball":
            return 2.0 * self.radius
        return float(2.0 * np.linalg.norm(self.half_widths))

    def project(self, y) -> NDArray[np.float64]:
        y = np.asarray(y, dtype=float)
        if y.shape != self.center.shape:
            raise InvalidArgumentError(f"point has shape {y.shape}, domain is {self.dim}-dimensional")
        if self.kind == "ball":
            off = y - self.center
            norm = float(np.linalg.norm(off))
            if norm <= self.radius:
                return y.copy()
            return self.center + off * (self.radius / norm)
        return np.clip(y, self.center - self.half_widths, self.center + self.half_widths)

    def contains(self, w, tol: float = 1e-10) -> bool:
        w = np.asarray(w, dtype=float)
        if w.shape != self.center.shape:
            return False
        if self.kind == "ball":
            return float(np.linalg.norm(w - self.center)) <= self.radius * (1.0 + tol) + tol
        return bool(np.all(np.abs(w - self.center) <= self.half_widths * (1.0 + tol) + tol))

    def max_norm(self) -> float:
        """sup over the domain of ||w|| (distance from the origin)."""
        if self.kind == "ball":
            return float(np.linalg.norm(self.center)) + self.radius
        return float(np.linalg.norm(np.abs(self.center) + self.half_widths))

    def sample(self, rng: np.random.Generator, size: int) -> NDArray[np.float64]:
        """Uniform points in the domain, shape (size, d)."""
        d = self.dim
        if self.kind == "box":
            u = rng.uniform(-1.0, 1.0, size=(size, d))
            return self.center + u * self.half_widths
        z = rng.standard_normal((size, d))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        r = self.radius * rng.uniform(0.0, 1.0, size=size) ** (1.0 / d)
        return self.center + z * r[:, None]

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "center": self.center.tolist()}
        if self.kind == "ball":
            out["radius"] = self.radius
        else:
            out["half_widths"] = self.half_widths.tolist()
        return out
