"""Quantile representation of probability measures on the line.

A measure is stored as ``n`` nondecreasing positions, the quantiles at the
mass midpoints ``(i + 1/2) / n``.  Each position carries mass ``1/n``.  In
this representation optimal transport is linear: the 2-Wasserstein distance
is the (mass-weighted) Euclidean distance between the arrays and geodesics
are convex combinations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MeasureError(ValueError):
    """Base class for invalid measure data."""


class NormalizationError(MeasureError):
    pass


class DomainError(MeasureError):
    pass


class DegenerateMeasureError(MeasureError):
    """Raised when an absolutely continuous density is requested from atoms."""


class ResolutionError(MeasureError):
    """Raised when two quantile measures of different size are combined."""


class ParameterError(MeasureError):
    pass


def mass_levels(n: int) -> np.ndarray:
    """Midpoint mass levels ``(i + 1/2)/n``."""
    return (np.arange(n) + 0.5) / n


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class QuantileMeasure:
    """Equal-weight atoms at nondecreasing positions ``x``.

    ``x[i]`` approximates the quantile function at ``(i + 1/2)/n``.  Ties are
    allowed (atoms), strictness is only required where a density is needed.
    """

    x: np.ndarray

    def __post_init__(self):
        x = _frozen(self.x)
        if x.ndim != 1 or x.size < 1:
            raise MeasureError("quantile array must be one-dimensional and non-empty")
        if not np.all(np.isfinite(x)):
            raise MeasureError("quantile values must be finite")
        if np.any(np.diff(x) < 0):
            raise MeasureError("quantile values must be nondecreasing")
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def spans(self) -> np.ndarray:
        return np.diff(self.x)

    @property
    def is_strict(self) -> bool:
        return bool(self.n >= 2 and np.all(np.diff(self.x) > 0))

    def second_moment(self) -> float:
        return float(np.mean(self.x**2))

    def mean(self) -> float:
        return float(np.mean(self.x))

    def shifted(self, c: float) -> "QuantileMeasure":
        return QuantileMeasure(self.x + c)

    def scaled(self, s: float) -> "QuantileMeasure":
        if s <= 0:
            raise ParameterError("dilation factor must be positive")
        return QuantileMeasure(self.x * s)

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        return isinstance(other, QuantileMeasure) and np.array_equal(self.x, other.x)

    def __hash__(self) -> int:
        return hash(self.x.tobytes())

    # Constructors for common reference laws.

    @classmethod
    def uniform(cls, a: float, b: float, n: int) -> "QuantileMeasure":
        if not b > a:
            raise ParameterError("uniform law needs a < b")
        return cls(a + (b - a) * mass_levels(n))

    @classmethod
    def gaussian(cls, mean: float, std: float, n: int) -> "QuantileMeasure":
        from scipy.special import ndtri

        if std <= 0:
            raise ParameterError("standard deviation must be positive")
        return cls(mean + std * ndtri(mass_levels(n)))

    @classmethod
    def dirac(cls, at: float, n: int) -> "QuantileMeasure":
        return cls(np.full(n, float(at)))


@dataclass(frozen=True)
class DensityView:
    """Density samples on a strictly increasing spatial grid."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = _frozen(self.grid)
        values = _frozen(self.values)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise MeasureError("grid and values must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(grid) <= 0):
            raise MeasureError("grid must be strictly increasing")
        if not (np.all(np.isfinite(grid)) and np.all(np.isfinite(values))):
            raise MeasureError("density view must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def mass(self) -> float:
        return float(np.trapezoid(self.values, self.grid))

    def l1_distance(self, other: "DensityView") -> float:
        if not np.array_equal(self.grid, other.grid):
            raise ResolutionError("density views live on different grids")
        return float(np.trapezoid(np.abs(self.values - other.values), self.grid))


@dataclass(frozen=True)
class EmpiricalAtoms:
    """Equal-weight sample points, possibly repeated."""

    points: np.ndarray = field()

    def __post_init__(self):
        pts = _frozen(np.atleast_1d(self.points))
        if pts.ndim != 1 or pts.size < 1:
            raise MeasureError("need at least one atom")
        if not np.all(np.isfinite(pts)):
            raise MeasureError("atoms must be finite")
        object.__setattr__(self, "points", pts)


def quantile_from_density(view: DensityView, n: int, tol: float = 1e-6) -> QuantileMeasure:
    """Invert the piecewise-linear CDF of ``view`` at the midpoint mass levels.

    The CDF is the cumulative trapezoid rule on the view's grid.  Flat parts of
    the CDF are resolved with the right-continuous pseudo-inverse
    ``sup{x : F(x) <= s}``.
    """
    if n < 2:
        raise ParameterError("need n >= 2")
    if np.any(view.values < 0):
        raise DomainError("density values must be nonnegative")
    mass = view.mass()
    if abs(mass - 1.0) > tol:
        raise NormalizationError(f"density integrates to {mass!r}, not 1")

    grid, rho = view.grid, view.values
    cdf = np.concatenate(([0.0], np.cumsum(0.5 * (rho[1:] + rho[:-1]) * np.diff(grid))))
    cdf /= cdf[-1]
    s = mass_levels(n)
    # k is the last knot with F <= s; interpolate on the segment [k, k+1]
    k = np.clip(np.searchsorted(cdf, s, side="right") - 1, 0, grid.size - 2)
    lo, hi = cdf[k], cdf[k + 1]
    frac = np.where(hi > lo, (s - lo) / np.where(hi > lo, hi - lo, 1.0), 1.0)
    x = grid[k] + np.clip(frac, 0.0, 1.0) * (grid[k + 1] - grid[k])
    return QuantileMeasure(np.maximum.accumulate(x))


def reconstruction_cdf_knots(q: QuantileMeasure) -> tuple[np.ndarray, np.ndarray]:
    """Knots of the piecewise-linear CDF of the piecewise-uniform density.

    Mass ``1/n`` lies between consecutive atoms; the outer half-cells extend by
    half of the neighbouring span, so the support is
    ``[x_0 - d_0/2, x_{n-1} + d_{n-2}/2]``.
    """
    if not q.is_strict:
        raise DegenerateMeasureError(
            "coincident quantiles: the measure has atoms and no density"
        )
    x, n = q.x, q.n
    d = np.diff(x)
    knots = np.concatenate(([x[0] - 0.5 * d[0]], x, [x[-1] + 0.5 * d[-1]]))
    levels = np.concatenate(([0.0], mass_levels(n), [1.0]))
    return knots, levels


def density_from_quantile(q: QuantileMeasure, grid) -> DensityView:
    """Sample the piecewise-uniform density of ``q`` on ``grid``.

    Each sample is the average density over the node's trapezoid dual cell,
    so that ``np.trapezoid(values, grid)`` reproduces the mass inside the grid
    exactly (to rounding).  Inside a constant piece this is the point value
    ``1 / (n * (x[i+1] - x[i]))``.
    """
    grid = np.asarray(grid, dtype=float)
    knots, levels = reconstruction_cdf_knots(q)
    half = 0.5 * np.diff(grid)
    left = np.concatenate(([grid[0]], grid[1:] - half))
    right = np.concatenate((grid[:-1] + half, [grid[-1]]))
    cdf = lambda y: np.interp(y, knots, levels, left=0.0, right=1.0)  # noqa: E731
    values = (cdf(right) - cdf(left)) / (right - left)
    return DensityView(grid, values)


def density_on_cells(q: QuantileMeasure) -> tuple[np.ndarray, np.ndarray]:
    """Breakpoints and constant values of the piecewise-uniform density."""
    knots, levels = reconstruction_cdf_knots(q)
    return knots, np.diff(levels) / np.diff(knots)


def _require_same_size(a: QuantileMeasure, b: QuantileMeasure):
    if a.n != b.n:
        raise ResolutionError(f"resolution mismatch: {a.n} vs {b.n} cells; re-grid first")


def wasserstein2(a: QuantileMeasure, b: QuantileMeasure) -> float:
    """Exact W2 distance between two equal-weight measures of the same size."""
    _require_same_size(a, b)
    return float(np.sqrt(np.mean((a.x - b.x) ** 2)))


def displacement_interpolate(a: QuantileMeasure, b: QuantileMeasure, t: float) -> QuantileMeasure:
    """Point at fraction ``t`` along the W2 geodesic from ``a`` to ``b``."""
    _require_same_size(a, b)
    if not 0.0 <= t <= 1.0:
        raise ParameterError(f"interpolation parameter must lie in [0, 1], got {t}")
    if t == 0.0:
        return a
    if t == 1.0:
        return b
    x = (1.0 - t) * a.x + t * b.x
    # rounding can break ties by one ulp in the wrong direction
    return QuantileMeasure(np.maximum.accumulate(x))


def isotonic_project(v) -> np.ndarray:
    """Euclidean projection onto nondecreasing arrays (pool adjacent violators)."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise MeasureError("isotonic projection needs finite input")
    n = v.size
    means = np.empty(n)
    weights = np.empty(n, dtype=np.int64)
    top = -1
    for value in v:
        top += 1
        means[top] = value
        weights[top] = 1
        while top > 0 and means[top - 1] > means[top]:
            w = weights[top - 1] + weights[top]
            means[top - 1] = (weights[top - 1] * means[top - 1] + weights[top] * means[top]) / w
            weights[top - 1] = w
            top -= 1
    return np.repeat(means[: top + 1], weights[: top + 1])


def atoms_to_quantile(e: EmpiricalAtoms, n: int) -> QuantileMeasure:
    """Resample the empirical measure at the midpoint mass levels."""
    if n < 1:
        raise ParameterError("need n >= 1")
    pts = np.sort(e.points)
    k = pts.size
    # empirical quantile: smallest atom whose cumulative mass exceeds s
    idx = np.minimum(np.floor(mass_levels(n) * k).astype(int), k - 1)
    return QuantileMeasure(pts[idx])
