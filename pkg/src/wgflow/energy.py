"""Free energy ``kappa * U + alpha * V + W`` on quantile measures.

Discretization (all terms are exact functionals of the piecewise-uniform
reconstruction, except the off-diagonal interaction which is a midpoint rule):

* entropy ``U``: the density on span ``[x_s, x_{s+1}]`` is ``1/(n d_s)``; the
  two outer half cells inherit the density of their neighbouring span, so the
  first and last spans carry weight ``3/(2n)`` and the others ``1/n``.
* confinement ``V = (1/2n) sum x_i^2``.
* interaction ``W = (lambda_w / 2n^2) sum_{i != j} w(x_i - x_j)`` plus, for every
  atom, the exact self-energy of a uniform cell of width ``h_i`` carrying mass
  ``1/n``.  ``h_i = (x_{i+1} - x_{i-1})/2`` inside and the adjacent span at the ends.

Every term is convex in ``x`` on the cone of increasing arrays, and ``V`` is
``(1/n)``-strongly convex, which is the discrete form of alpha-convexity along
generalized geodesics.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .measures import QuantileMeasure

SATURATED = math.inf
"""Value of any energy outside its domain (atoms, coincident cells)."""


def is_saturated(value: float) -> bool:
    return value == SATURATED


class EnergyRangeError(ValueError):
    """Parameter or bound requested outside its range of validity."""


class KernelKind(str, enum.Enum):
    LOG = "log"
    POWER = "power"


@dataclass(frozen=True)
class InteractionKernel:
    """Repulsive kernel ``-gamma log|x|`` or ``|x|^-beta`` scaled by ``lambda_w``."""

    kind: KernelKind = KernelKind.LOG
    gamma: float = 1.0 / math.pi
    beta: float = 0.5
    lambda_w: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if self.lambda_w < 0:
            raise EnergyRangeError("lambda_w must be nonnegative")
        if self.kind is KernelKind.LOG and not self.gamma > 0:
            raise EnergyRangeError("log kernel strength gamma must be positive")
        if self.kind is KernelKind.POWER and not 0.0 < self.beta < 1.0:
            raise EnergyRangeError(
                f"power-law exponent beta={self.beta} outside (0, 1): for beta >= 1 the "
                "interaction energy is infinite on every nonzero density"
            )

    @classmethod
    def log(cls, gamma: float = 1.0 / math.pi, lambda_w: float = 1.0) -> "InteractionKernel":
        return cls(KernelKind.LOG, gamma=gamma, lambda_w=lambda_w)

    @classmethod
    def power(cls, beta: float, lambda_w: float = 1.0) -> "InteractionKernel":
        return cls(KernelKind.POWER, beta=beta, lambda_w=lambda_w)

    @property
    def active(self) -> bool:
        return self.lambda_w > 0

    # Pair potential and its first two derivatives, for d > 0.
    def w(self, d):
        if self.kind is KernelKind.LOG:
            return -self.gamma * np.log(d)
        return d ** (-self.beta)

    def dw(self, d):
        if self.kind is KernelKind.LOG:
            return -self.gamma / d
        return -self.beta * d ** (-self.beta - 1.0)

    def d2w(self, d):
        if self.kind is KernelKind.LOG:
            return self.gamma / d**2
        return self.beta * (self.beta + 1.0) * d ** (-self.beta - 2.0)

    # Self-energy of a uniform unit-mass cell of width h: the double integral
    # of w over [0,h]^2 divided by h^2.
    def cell(self, h):
        if self.kind is KernelKind.LOG:
            return self.gamma * (1.5 - np.log(h))
        b = self.beta
        return 2.0 / ((1.0 - b) * (2.0 - b)) * h ** (-b)

    def dcell(self, h):
        if self.kind is KernelKind.LOG:
            return -self.gamma / h
        b = self.beta
        return -2.0 * b / ((1.0 - b) * (2.0 - b)) * h ** (-b - 1.0)

    def d2cell(self, h):
        if self.kind is KernelKind.LOG:
            return self.gamma / h**2
        b = self.beta
        return 2.0 * b * (b + 1.0) / ((1.0 - b) * (2.0 - b)) * h ** (-b - 2.0)


@dataclass(frozen=True)
class EnergyParams:
    kappa: float = 0.0
    alpha: float = 1.0
    kernel: InteractionKernel = InteractionKernel()

    def __post_init__(self):
        if self.kappa < 0 or self.alpha < 0:
            raise EnergyRangeError("kappa and alpha must be nonnegative")

    @property
    def has_barrier(self) -> bool:
        """True when the energy is infinite on measures with ties."""
        return self.kappa > 0 or self.kernel.active

    def with_(self, **changes) -> "EnergyParams":
        from dataclasses import replace

        return replace(self, **changes)


# ---------------------------------------------------------------------------
# Energies


def _entropy_weights(n: int) -> np.ndarray:
    w = np.full(n - 1, 1.0 / n)
    w[0] += 0.5 / n
    w[-1] += 0.5 / n
    return w


def _entropy_array(x: np.ndarray) -> float:
    n = x.size
    return float(-np.dot(_entropy_weights(n), np.log(n * np.diff(x))))


def entropy(q: QuantileMeasure) -> float:
    """``int rho log rho`` of the piecewise-uniform reconstruction."""
    if not q.is_strict:
        return SATURATED
    return _entropy_array(q.x)


def confinement(q: QuantileMeasure) -> float:
    return float(0.5 * np.mean(q.x**2))


def _cell_widths(x: np.ndarray) -> np.ndarray:
    h = np.empty_like(x)
    h[0] = x[1] - x[0]
    h[-1] = x[-1] - x[-2]
    h[1:-1] = 0.5 * (x[2:] - x[:-2])
    return h


def _pair_gaps(x: np.ndarray) -> np.ndarray:
    """Gaps ``x_j - x_i`` for ``i < j`` in a fixed row-major order."""
    iu = np.triu_indices(x.size, k=1)
    return x[iu[1]] - x[iu[0]]


def _interaction_array(x: np.ndarray, k: InteractionKernel) -> float:
    n = x.size
    pairs = np.sum(k.w(_pair_gaps(x)))
    cells = np.sum(k.cell(_cell_widths(x)))
    return float(k.lambda_w / n**2 * (pairs + 0.5 * cells))


def interaction(q: QuantileMeasure, k: InteractionKernel) -> float:
    if not k.active:
        return 0.0
    if not q.is_strict:
        return SATURATED
    return _interaction_array(q.x, k)


def energy_array(x: np.ndarray, p: EnergyParams) -> float:
    """``free_energy`` of a raw array; saturated unless strictly increasing
    (when a barrier term is present) or nondecreasing (otherwise)."""
    d = np.diff(x)
    if p.has_barrier:
        if x.size < 2 or not np.all(d > 0):
            return SATURATED
    elif np.any(d < 0):
        return SATURATED
    total = 0.0
    if p.kappa > 0:
        total += p.kappa * _entropy_array(x)
    if p.kernel.active:
        total += _interaction_array(x, p.kernel)
    if p.alpha > 0:
        total += p.alpha * 0.5 * float(np.mean(x**2))
    return float(total)


def free_energy(q: QuantileMeasure, p: EnergyParams) -> float:
    return energy_array(q.x, p)


def energy_parts(q: QuantileMeasure, p: EnergyParams) -> dict:
    return {
        "entropy": entropy(q) if p.kappa > 0 else 0.0,
        "confinement": confinement(q),
        "interaction": interaction(q, p.kernel),
        "total": free_energy(q, p),
    }


# ---------------------------------------------------------------------------
# Derivatives with respect to the quantile values


def gradient_array(x: np.ndarray, p: EnergyParams) -> np.ndarray:
    n = x.size
    g = p.alpha * x / n
    if p.kappa > 0:
        c = p.kappa * _entropy_weights(n) / np.diff(x)
        g[:-1] += c
        g[1:] -= c
    k = p.kernel
    if k.active:
        diff = x[:, None] - x[None, :]
        np.fill_diagonal(diff, 1.0)
        dw = np.sign(diff) * k.dw(np.abs(diff))
        np.fill_diagonal(dw, 0.0)
        g += k.lambda_w / n**2 * dw.sum(axis=1)
        # self-cells: d/dx of 0.5 * sum cell(h_i)
        dc = 0.5 * k.lambda_w / n**2 * k.dcell(_cell_widths(x))
        g[0] -= dc[0]
        g[1] += dc[0]
        g[-1] += dc[-1]
        g[-2] -= dc[-1]
        g[2:] += 0.5 * dc[1:-1]
        g[:-2] -= 0.5 * dc[1:-1]
    return g


def energy_gradient(q: QuantileMeasure, p: EnergyParams) -> np.ndarray:
    """Exact partial derivatives of ``free_energy`` with respect to ``q.x``.

    Raises ``EnergyRangeError`` when the energy is saturated at ``q``.
    """
    if p.has_barrier and not q.is_strict:
        raise EnergyRangeError("gradient undefined: energy is saturated at this measure")
    return gradient_array(np.array(q.x), p)


def hessian_array(x: np.ndarray, p: EnergyParams) -> np.ndarray:
    n = x.size
    H = np.diag(np.full(n, p.alpha / n))
    if p.kappa > 0:
        c = p.kappa * _entropy_weights(n) / np.diff(x) ** 2
        idx = np.arange(n - 1)
        H[idx, idx] += c
        H[idx + 1, idx + 1] += c
        H[idx, idx + 1] -= c
        H[idx + 1, idx] -= c
    k = p.kernel
    if k.active:
        diff = np.abs(x[:, None] - x[None, :])
        np.fill_diagonal(diff, 1.0)
        d2 = k.d2w(diff)
        np.fill_diagonal(d2, 0.0)
        H -= k.lambda_w / n**2 * d2
        H[np.diag_indices(n)] += k.lambda_w / n**2 * d2.sum(axis=1)
        c2 = 0.5 * k.lambda_w / n**2 * k.d2cell(_cell_widths(x))
        # h_i = x[hi_i] - x[lo_i] scaled by s_i; adds c2_i s_i^2 (e e^T) on {lo_i, hi_i}
        lo, hi, s = _cell_stencil(n)
        c = c2 * s**2
        np.add.at(H, (lo, lo), c)
        np.add.at(H, (hi, hi), c)
        np.add.at(H, (lo, hi), -c)
        np.add.at(H, (hi, lo), -c)
    return H


def _cell_stencil(n: int):
    idx = np.arange(n)
    lo = np.clip(idx - 1, 0, n - 2)
    hi = np.clip(idx + 1, 1, n - 1)
    s = np.full(n, 0.5)
    s[0] = s[-1] = 1.0
    return lo, hi, s


def energy_hessian(q: QuantileMeasure, p: EnergyParams) -> np.ndarray:
    if p.has_barrier and not q.is_strict:
        raise EnergyRangeError("Hessian undefined: energy is saturated at this measure")
    return hessian_array(np.array(q.x), p)


# ---------------------------------------------------------------------------
# Analytic lower bounds


def log_equilibrium_energy(alpha: float, strength: float) -> float:
    """Minimum of ``alpha V + W`` over all measures for ``W`` with kernel ``-strength log``.

    The minimizer is the semicircle of radius ``sqrt(2 strength / alpha)``.
    """
    if alpha <= 0 or strength <= 0:
        raise EnergyRangeError("closed-form log-gas minimum needs alpha > 0 and strength > 0")
    return strength * (0.375 + 0.25 * math.log(2.0) - 0.25 * math.log(strength / alpha))


@dataclass(frozen=True)
class LowerBounds:
    """Analytic lower bounds; ``None`` marks a bound outside its validity range.

    positivity   -- on E_{0,1} (log kernel), the constant 1/2 log(e/2)
    split        -- on the interaction plus half the confinement, E_{0,alpha/2}
    gaussian     -- on kappa U + (alpha/2) V, attained by a centered Gaussian
    composite    -- split + gaussian, a bound on the full energy
    """

    positivity: float | None = None
    split: float | None = None
    gaussian: float | None = None
    composite: float | None = None

    def applicable(self) -> dict[str, float]:
        return {k: v for k, v in self.__dict__.items() if v is not None}

    @property
    def best(self) -> float | None:
        """Largest bound on the full energy, if any."""
        cands = [b for b in (self.positivity, self.composite) if b is not None]
        return max(cands) if cands else None


POSITIVITY_BOUND = 0.5 * math.log(math.e / 2.0)


def _positivity(p: EnergyParams) -> float:
    k = p.kernel
    if not (p.kappa == 0 and p.alpha == 1 and k.kind is KernelKind.LOG and k.active):
        raise EnergyRangeError("positivity bound applies to E_{0,1} with a log kernel only")
    if log_equilibrium_energy(1.0, k.lambda_w * k.gamma) < POSITIVITY_BOUND:
        raise EnergyRangeError(
            f"positivity bound is not valid for kernel strength {k.lambda_w * k.gamma}"
        )
    return POSITIVITY_BOUND


def _split(p: EnergyParams) -> float:
    if p.alpha <= 0:
        raise EnergyRangeError("split bound needs alpha > 0")
    k = p.kernel
    if not k.active or k.kind is KernelKind.POWER:
        return 0.0  # both pieces are nonnegative
    value = -0.5 * math.log(4.0 / (p.alpha * math.e))
    # stated for the unit log kernel; accept it only below the exact infimum
    if value > log_equilibrium_energy(p.alpha / 2.0, k.lambda_w * k.gamma):
        raise EnergyRangeError(
            f"split bound {value:.6g} exceeds the infimum for alpha={p.alpha}, "
            f"strength={k.lambda_w * k.gamma}"
        )
    return value


def _gaussian(p: EnergyParams) -> float:
    if p.kappa <= 0 or p.alpha <= 0:
        raise EnergyRangeError("Gaussian bound needs kappa > 0 and alpha > 0")
    return -0.5 * p.kappa * math.log(4.0 * math.pi * p.kappa / p.alpha)


def lower_bound(p: EnergyParams, name: str) -> float:
    """A single named bound; raises ``EnergyRangeError`` outside its validity range."""
    fns = {"positivity": _positivity, "split": _split, "gaussian": _gaussian}
    if name == "composite":
        return _split(p) + (_gaussian(p) if p.kappa > 0 else 0.0)
    if name not in fns:
        raise KeyError(name)
    return fns[name](p)


def lower_bounds(p: EnergyParams) -> LowerBounds:
    found = {}
    for name in ("positivity", "split", "gaussian", "composite"):
        try:
            found[name] = lower_bound(p, name)
        except EnergyRangeError:
            pass
    return LowerBounds(**found)
