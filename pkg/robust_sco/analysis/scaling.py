from __future__ import annotations

import math
from typing import Iterable, Union

import numpy as np
import pandas as pd
from scipy import stats

from ..errors import InvalidArgumentError

AXES = ("epsilon", "n")
CELL_COLUMNS = ("family", "adversary", "algorithm", "d", "n", "epsilon", "sigma")


class ScalingFit:
    def __init__(self, axis: str, exponent: float, prefactor: float, r_squared: float, n_points: int):
        self.axis = axis
        self.exponent = exponent
        self.prefactor = prefactor
        self.r_squared = r_squared
        self.n_points = n_points

    def to_dict(self) -> dict:
        return {"axis": self.axis, "exponent": self.exponent, "prefactor": self.prefactor,
                "r_squared": self.r_squared, "n_points": self.n_points}


def _frame(records) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        return records
    rows = [r.to_row() if hasattr(r, "to_row") else dict(r) for r in records]
    return pd.DataFrame(rows)


def fit_scaling(records: Union[pd.DataFrame, Iterable], axis: str) -> ScalingFit:
    """Least squares of log(mean excess risk) on log(axis value).

    excess ~ prefactor * axis ** exponent. All other cell parameters must
    be constant across the records.
    """
    if axis not in AXES:
        raise InvalidArgumentError(f"axis must be one of {AXES}, got {axis!r}")
    df = _frame(records)
    for col in (axis, "excess_risk"):
        if col not in df.columns:
            raise InvalidArgumentError(f"records have no {col!r} column")
    for col in CELL_COLUMNS:
        if col != axis and col in df.columns and df[col].nunique(dropna=False) > 1:
            raise InvalidArgumentError(f"{col!r} varies across records; fit one sweep at a time")
    means = df.groupby(axis, sort=True)["excess_risk"].mean()
    if len(means) < 3:
        raise InvalidArgumentError(f"need at least 3 distinct {axis} values, got {len(means)}")
    x = means.index.to_numpy(dtype=float)
    y = means.to_numpy(dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise InvalidArgumentError("axis values and mean excess risks must be positive for a log-log fit")
    fit = stats.linregress(np.log(x), np.log(y))
    return ScalingFit(axis, float(fit.slope), float(math.exp(fit.intercept)),
                      float(fit.rvalue ** 2), int(len(means)))


def smooth_excess_bound(beta: float, diameter: float, T: int, bias: float) -> float:
    """beta D^2 / (2T) + B D."""
    return beta * diameter ** 2 / (2.0 * T) + bias * diameter


def lipschitz_excess_bound(lipschitz: float, diameter: float, T: int, bias: float) -> float:
    """D L / sqrt(T) + (1/sqrt(T) + 1) B D."""
    root = math.sqrt(T)
    return diameter * lipschitz / root + (1.0 / root + 1.0) * bias * diameter
