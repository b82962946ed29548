"""Log-log rate fitting and constant fitting for convergence studies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    points_used: int

    @property
    def ok(self) -> bool:
        return self.points_used >= 2 and np.isfinite(self.slope)


def loglog_slope(x, y, floor: float = 0.0) -> SlopeFit:
    """Least-squares slope of log(y) against log(x), skipping y <= floor."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    keep = (x > 0) & (y > floor) & np.isfinite(y)
    if keep.sum() < 2:
        return SlopeFit(float("nan"), float("nan"), int(keep.sum()))
    slope, intercept = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return SlopeFit(float(slope), float(intercept), int(keep.sum()))


def fitted_constant(errors, bound_values) -> float:
    """Smallest C with errors <= C * bound_values on the grid."""
    errors = np.asarray(errors, float)
    bound_values = np.asarray(bound_values, float)
    if np.any(bound_values <= 0):
        raise ValueError("bound values must be positive")
    return float(np.max(errors / bound_values))


def geometric_grid(t_max: float, decades: float = 4.0, points: int = 20) -> np.ndarray:
    """Geometric grid from ``t_max`` down to ``t_max * 10**-decades``."""
    return np.geomspace(t_max, t_max * 10.0 ** (-decades), points)


def refine_grid(grid: np.ndarray, factor: int = 4) -> np.ndarray:
    """Geometric grid over the same range with ``factor`` times the points."""
    grid = np.asarray(grid, float)
    n = (len(grid) - 1) * factor + 1
    return np.geomspace(grid[0], grid[-1], n)
