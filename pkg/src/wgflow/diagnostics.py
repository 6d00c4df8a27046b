"""Equilibria, convergence-rate fits, inviscid-limit sweeps and weak residuals."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .energy import (
    EnergyParams,
    EnergyRangeError,
    InteractionKernel,
    KernelKind,
    confinement,
    energy_array,
    free_energy,
    gradient_array,
    hessian_array,
    interaction,
    log_equilibrium_energy,
    lower_bounds,
)
from .jko import ConvergenceError, FlowTrajectory, JkoConfig, newton_minimize, run_flow, velocity_norm
from .measures import (
    MeasureError,
    QuantileMeasure,
    density_on_cells,
    mass_levels,
    wasserstein2,
)

# ---------------------------------------------------------------------------
# Semicircle law


def semicircle_cdf(x, gamma: float):
    """CDF of ``(1/(pi gamma)) sqrt(2 gamma - x^2)_+``."""
    r2 = 2.0 * gamma
    R = math.sqrt(r2)
    x = np.clip(np.asarray(x, dtype=float), -R, R)
    # (R - x)(R + x) avoids the cancellation in R^2 - x^2 at the edges
    body = x * np.sqrt((R - x) * (R + x)) + r2 * np.arcsin(x / R)
    return np.clip(0.5 + body / (2.0 * math.pi * gamma), 0.0, 1.0)


def semicircle_density(x, gamma: float):
    x = np.asarray(x, dtype=float)
    return np.sqrt(np.maximum(2.0 * gamma - x * x, 0.0)) / (math.pi * gamma)


def semicircle_quantiles(n: int, gamma: float) -> QuantileMeasure:
    """Equilibrium of ``V + W`` for the kernel ``-gamma log|x|``, at midpoint levels.

    The CDF is inverted by bisection to 1e-12 on the support ``[-R, R]``,
    ``R = sqrt(2 gamma)``; the lower half is mirrored so the array is exactly
    antisymmetric.
    """
    if n < 2:
        raise MeasureError("need n >= 2")
    if not gamma > 0:
        raise EnergyRangeError("gamma must be positive")
    R = math.sqrt(2.0 * gamma)
    s = mass_levels(n)
    lo = np.full(n, -R)
    hi = np.full(n, R)
    while np.max(hi - lo) > 1e-12 * max(R, 1.0):
        mid = 0.5 * (lo + hi)
        below = semicircle_cdf(mid, gamma) <= s
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    x = 0.5 * (lo + hi)
    half = n // 2
    x[n - half :] = -x[:half][::-1]
    if n % 2:
        x[half] = 0.0
    return QuantileMeasure(x)


# ---------------------------------------------------------------------------
# Minimizers


class EquilibriumKind(str, enum.Enum):
    SEMICIRCLE = "semicircle_closed_form"
    NUMERICAL = "numerical_minimizer"


@dataclass(frozen=True)
class EquilibriumSpec:
    kind: EquilibriumKind
    params: EnergyParams
    theta: float
    state: QuantileMeasure
    grad_norm: float = 0.0
    converged: bool = True
    spread: float = 0.0  # max pairwise d2 between minimizers from different starts
    starts: tuple[QuantileMeasure, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind is EquilibriumKind.SEMICIRCLE:
            k = self.params.kernel
            if self.params.kappa != 0 or k.kind is not KernelKind.LOG:
                raise EnergyRangeError("closed-form semicircle needs kappa = 0 and a log kernel")


def closed_form_equilibrium(p: EnergyParams, n: int) -> EquilibriumSpec:
    """Semicircle minimizer of ``alpha V + W`` (log kernel, no diffusion)."""
    k = p.kernel
    if p.kappa != 0 or k.kind is not KernelKind.LOG or not k.active or p.alpha <= 0:
        raise EnergyRangeError("closed-form semicircle needs kappa = 0, alpha > 0 and a log kernel")
    g = k.lambda_w * k.gamma
    q = semicircle_quantiles(n, g / p.alpha)
    return EquilibriumSpec(EquilibriumKind.SEMICIRCLE, p, log_equilibrium_energy(p.alpha, g), q)


def default_starts(n: int, seed: int = 0) -> list[QuantileMeasure]:
    """Three distinct initializations: symmetric, shifted Gaussian, random skewed."""
    rng = np.random.default_rng(seed)
    gaps = rng.exponential(size=n - 1) + 0.1
    skew = np.concatenate(([0.0], np.cumsum(gaps)))
    skew = 2.0 * skew / skew[-1] + 0.5
    return [
        QuantileMeasure.uniform(-1.0, 1.0, n),
        QuantileMeasure.gaussian(-0.7, 0.4, n),
        QuantileMeasure(skew),
    ]


def _minimize_from(start: QuantileMeasure, p: EnergyParams, cfg: JkoConfig, warmup: int):
    q = start
    if warmup:
        q = run_flow(start, warmup, cfg.with_(tau=max(cfg.tau, 1.0)), p).final
    x, info = newton_minimize(
        q.x,
        lambda x: energy_array(x, p),
        lambda x: gradient_array(x, p),
        lambda x: hessian_array(x, p),
        cfg,
    )
    return QuantileMeasure(x), info


def minimize_energy(
    p: EnergyParams,
    n: int,
    cfg: JkoConfig = JkoConfig(),
    starts: Sequence[QuantileMeasure] | None = None,
    warmup: int = 3,
    seed: int = 0,
) -> EquilibriumSpec:
    """Unique minimizer of ``E_{kappa,alpha}`` for ``alpha > 0``.

    A few large-step JKO steps from each start, then Newton on the energy
    itself.  The spread between the results probes uniqueness.
    """
    if not p.alpha > 0:
        raise EnergyRangeError("minimize_energy needs alpha > 0 (no minimizer otherwise)")
    if starts is None:
        starts = default_starts(n, seed)
    results = []
    for s in starts:
        if s.n != n:
            raise MeasureError("start resolution differs from n")
        results.append(_minimize_from(s, p, cfg, warmup))
    best_q, best_info = min(results, key=lambda r: r[1].objective)
    spread = max(
        (wasserstein2(a[0], b[0]) for i, a in enumerate(results) for b in results[i + 1 :]),
        default=0.0,
    )
    return EquilibriumSpec(
        EquilibriumKind.NUMERICAL,
        p,
        free_energy(best_q, p),
        best_q,
        grad_norm=best_info.grad_norm,
        converged=all(r[1].converged for r in results),
        spread=spread,
        starts=tuple(r[0] for r in results),
    )


# ---------------------------------------------------------------------------
# Euler-Lagrange characterization of the log-gas minimizer


def log_potential(q: QuantileMeasure, points) -> np.ndarray:
    """``int log|x - y| rho(y) dy`` for the piecewise-uniform density of ``q``."""
    knots, dens = density_on_cells(q)
    pts = np.asarray(points, dtype=float)[:, None]

    def prim(u):  # antiderivative of log|u|
        au = np.abs(u)
        return np.where(au > 0, u * np.log(np.where(au > 0, au, 1.0)) - u, 0.0)

    a, b = knots[:-1][None, :], knots[1:][None, :]
    return np.sum(dens[None, :] * (prim(pts - a) - prim(pts - b)), axis=1)


@dataclass(frozen=True)
class CharacterizationRecord:
    support_spread: float  # max - min of the potential over support samples
    support_constant: float
    off_support_margin: float  # min over off-support samples minus the constant
    off_support_points: tuple[float, ...]
    off_support_values: tuple[float, ...]
    candidate_constants: dict


def characterization_residual(
    rho_bar: QuantileMeasure, gamma: float, alpha: float = 1.0, offsets=(0.25, 0.5, 1.0)
) -> CharacterizationRecord:
    """Check ``alpha x^2/2 - gamma int log|x-y| rho(y) dy`` is flat on the support.

    Support samples are the atoms; off-support points sit beyond each end of the
    support at ``offsets`` times the equilibrium radius ``sqrt(2 gamma / alpha)``
    (the half-width of the atoms when ``alpha == 0``).
    """
    if not rho_bar.is_strict:
        raise MeasureError("characterization needs a strictly increasing measure")
    phi = lambda pts: 0.5 * alpha * np.asarray(pts) ** 2 - gamma * log_potential(rho_bar, pts)  # noqa: E731
    on = phi(rho_bar.x)
    const = float(np.mean(on))
    lo, hi = float(rho_bar.x[0]), float(rho_bar.x[-1])
    half = math.sqrt(2.0 * gamma / alpha) if alpha > 0 else 0.5 * (hi - lo)
    off_pts = [hi + f * half for f in offsets] + [lo - f * half for f in offsets]
    off = phi(off_pts)
    v = alpha * confinement(rho_bar)
    w_gamma = interaction(rho_bar, InteractionKernel.log(gamma))
    w_default = interaction(rho_bar, InteractionKernel.log())
    candidates = {
        # 2 * theta - V with theta evaluated for the kernel strength used here
        "kernel_gamma": 2.0 * (v + w_gamma) - v,
        # same formula with the default 1/pi strength in theta
        "default_inverse_pi": 2.0 * (v + w_default) - v,
    }
    return CharacterizationRecord(
        float(np.max(on) - np.min(on)),
        const,
        float(np.min(off) - const),
        tuple(off_pts),
        tuple(float(o) for o in off),
        candidates,
    )


# ---------------------------------------------------------------------------
# Exponential rate fits


@dataclass(frozen=True)
class RateFit:
    rate: float
    intercept: float
    residual: float
    window: tuple[int, int]  # half-open index range into the inputs

    def __post_init__(self):
        if self.window[1] <= self.window[0]:
            raise ValueError("empty fit window")


class FitError(ValueError):
    pass


def fit_decay_rate(
    times,
    values,
    floor: float = 0.0,
    trim_start: float = 0.2,
    trim_end: float = 0.05,
    min_gap: float = 0.0,
) -> RateFit:
    """Least-squares fit of ``log(values - floor) = intercept - rate * t``.

    Samples after the gap first drops to ``min_gap`` are treated as floor noise
    and cut; the remaining series is trimmed by ``trim_start`` / ``trim_end``.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float) - floor
    if t.shape != v.shape:
        raise FitError("times and values differ in length")
    if np.any(np.diff(t) <= 0):
        raise FitError("times must be strictly increasing")
    above = v > min_gap
    end = t.size if np.all(above) else int(np.argmin(above))
    i0 = int(math.floor(trim_start * end))
    i1 = end - int(math.floor(trim_end * end))
    if i1 - i0 < 3:
        raise FitError(f"fit window has {max(i1 - i0, 0)} points; need at least 3")
    tw, lv = t[i0:i1], np.log(v[i0:i1])
    slope, intercept = np.polyfit(tw, lv, 1)
    resid = float(np.sqrt(np.mean((lv - (intercept + slope * tw)) ** 2)))
    return RateFit(float(-slope), float(intercept), resid, (i0, i1))


# ---------------------------------------------------------------------------
# Inviscid limit


@dataclass(frozen=True)
class SweepRow:
    kappa: float
    sup_distance: float
    at_time: float


@dataclass(frozen=True)
class SweepTable:
    rows: tuple[SweepRow, ...]
    reference: FlowTrajectory = field(repr=False)
    trajectories: tuple[FlowTrajectory, ...] = field(default=(), repr=False)

    def distances(self) -> np.ndarray:
        return np.array([r.sup_distance for r in self.rows])

    def is_monotone(self, slack: float = 0.1) -> bool:
        d = self.distances()
        return bool(np.all(d[1:] <= d[:-1] * (1.0 + slack)))

    def shrink_factor(self) -> float:
        d = self.distances()
        return float(d[0] / d[-1]) if d[-1] > 0 else math.inf


def inviscid_sweep(
    initial: QuantileMeasure,
    kappas: Sequence[float],
    t_final: float,
    cfg: JkoConfig,
    p_base: EnergyParams,
) -> SweepTable:
    """Sup-in-time W2 distance between the ``kappa`` flows and the ``kappa = 0`` flow."""
    if not initial.is_strict:
        raise MeasureError("inviscid sweep needs a strictly increasing initial datum")
    ks = [float(k) for k in kappas]
    if not ks or any(k <= 0 for k in ks):
        raise ValueError("kappas must be positive")
    if any(b > a for a, b in zip(ks, ks[1:])):
        raise ValueError("kappas must be sorted in descending order")
    steps = max(1, int(round(t_final / cfg.tau)))
    ref = run_flow(initial, steps, cfg, p_base.with_(kappa=0.0))
    rows, trajs = [], []
    for k in ks:
        traj = run_flow(initial, steps, cfg, p_base.with_(kappa=k))
        d = [wasserstein2(a, b) for a, b in zip(traj.states, ref.states)]
        j = int(np.argmax(d))
        rows.append(SweepRow(k, float(d[j]), traj.times[j]))
        trajs.append(traj)
    return SweepTable(tuple(rows), ref, tuple(trajs))


# ---------------------------------------------------------------------------
# Weak (distributional) residual


@dataclass(frozen=True)
class Bump:
    """Smooth compactly supported test function ``exp(1 - 1/(1 - u^2))``, ``u = (x-c)/w``."""

    center: float
    width: float

    def _parts(self, x):
        u = (np.asarray(x, dtype=float) - self.center) / self.width
        inside = np.abs(u) < 1
        uu = np.where(inside, u, 0.0)
        s = 1.0 - uu * uu
        f = np.where(inside, np.exp(1.0 - 1.0 / s), 0.0)
        return uu, s, f, inside

    def phi(self, x):
        return self._parts(x)[2]

    def dphi(self, x):
        u, s, f, inside = self._parts(x)
        return np.where(inside, f * (-2.0 * u / s**2), 0.0) / self.width

    def d2phi(self, x):
        u, s, f, inside = self._parts(x)
        a = -2.0 * u / s**2
        da = (-2.0 * s**2 - 8.0 * u * u * s) / s**4
        return np.where(inside, f * (a * a + da), 0.0) / self.width**2


@dataclass(frozen=True)
class Constant:
    value: float = 1.0

    def phi(self, x):
        return np.full(np.shape(x), self.value)

    def dphi(self, x):
        return np.zeros(np.shape(x))

    def d2phi(self, x):
        return np.zeros(np.shape(x))


def bump_family(lo: float, hi: float, count: int = 5, overlap: float = 1.5) -> list[Bump]:
    centers = np.linspace(lo, hi, count)
    width = overlap * (hi - lo) / max(count - 1, 1)
    return [Bump(float(c), float(width)) for c in centers]


@dataclass(frozen=True)
class WeakResidual:
    residual: float  # max over test functions of the normalized residual
    per_function: tuple[float, ...]
    scales: tuple[float, ...]


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def reconstruction_mean(q: QuantileMeasure, f) -> float:
    """``int f d rho`` for the piecewise-uniform reconstruction of ``q``.

    Eight-point Gauss-Legendre on every span and on the two outer half-cells.
    Sampling ``f`` at the quantile points alone is too coarse for steep test
    functions in the sparse tails.
    """
    x, n = q.x, q.n
    if n < 2:
        return float(np.asarray(f(x))[0])
    d = np.diff(x)
    a = np.concatenate(([x[0] - 0.5 * d[0]], x))
    b = np.concatenate((x, [x[-1] + 0.5 * d[-1]]))
    w = np.full(n + 1, 1.0 / n)
    w[0] = w[-1] = 0.5 / n
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    return float(np.sum(w[:, None] * (0.5 * _GL_WEIGHTS)[None, :] * f(pts)))


def weak_rhs(q: QuantileMeasure, p: EnergyParams, fn) -> tuple[float, float, float]:
    """Diffusion, confinement and interaction terms of ``d/dt int phi d rho``."""
    x, n = q.x, q.n
    diff = p.kappa * reconstruction_mean(q, fn.d2phi) if p.kappa else 0.0
    conf = -p.alpha * reconstruction_mean(q, lambda y: y * fn.dphi(y)) if p.alpha else 0.0
    inter = 0.0
    k = p.kernel
    if k.active:
        d1 = fn.dphi(x)
        d2 = fn.d2phi(x)
        gaps = x[:, None] - x[None, :]
        np.fill_diagonal(gaps, 1.0)
        slope = -np.sign(gaps) * k.dw(np.abs(gaps))  # -w'(d), odd in d
        pair = (d1[:, None] - d1[None, :]) * slope
        np.fill_diagonal(pair, 0.0)
        if k.kind is KernelKind.LOG:
            diag = k.gamma * d2
        else:
            from .energy import _cell_widths

            diag = k.beta * k.cell(_cell_widths(x)) * d2
        inter = k.lambda_w / (2.0 * n * n) * float(pair.sum() + diag.sum())
    return diff, conf, inter


def default_test_functions(t: FlowTrajectory, count: int = 5, overlap: float = 1.5, level: float = 0.02) -> list[Bump]:
    """Bumps whose supports stay inside the ``[level, 1 - level]`` quantile band of every state."""
    k = int(math.floor(level * (len(t.final.x))))
    a = max(float(s.x[k]) for s in t.states)
    b = min(float(s.x[-1 - k]) for s in t.states)
    if not b > a:
        raise ValueError("trajectory has no common bulk to place test functions in")
    span = (b - a) / (1.0 + 2.0 * overlap / max(count - 1, 1))
    margin = 0.5 * (b - a - span)
    return bump_family(a + margin, b - margin, count, overlap)


def weak_residual(t: FlowTrajectory, p: EnergyParams, test_fns: Sequence | None = None) -> WeakResidual:
    """Normalized mismatch between ``d/dt int phi`` and the weak right-hand side.

    The time derivative is a centred difference at interior indices.  Each test
    function's residual is divided by the largest total magnitude of its three
    right-hand-side terms along the trajectory.
    """
    if len(t) < 3:
        raise ValueError("weak residual needs at least 3 states")
    if test_fns is None:
        test_fns = default_test_functions(t)
    times = np.asarray(t.times)
    per, scales = [], []
    for fn in test_fns:
        mom = np.array([reconstruction_mean(s, fn.phi) for s in t.states])
        lhs = (mom[2:] - mom[:-2]) / (times[2:] - times[:-2])
        terms = np.array([weak_rhs(s, p, fn) for s in t.states[1:-1]])
        rhs = terms.sum(axis=1)
        scale = float(np.max(np.abs(terms).sum(axis=1)))
        err = float(np.max(np.abs(lhs - rhs)))
        per.append(err / scale if scale > 0 else err)
        scales.append(scale)
    return WeakResidual(max(per), tuple(per), tuple(scales))


# ---------------------------------------------------------------------------
# Bound checks


def bound_violations(energies: Sequence[float], p: EnergyParams, slack: float = 0.0) -> list[int]:
    """Indices of energies below the best applicable analytic lower bound."""
    best = lower_bounds(p).best
    if best is None:
        return []
    return [i for i, e in enumerate(energies) if e < best - slack]


__all__ = [
    "Bump",
    "CharacterizationRecord",
    "Constant",
    "ConvergenceError",
    "EquilibriumKind",
    "EquilibriumSpec",
    "FitError",
    "RateFit",
    "SweepRow",
    "SweepTable",
    "WeakResidual",
    "bound_violations",
    "bump_family",
    "characterization_residual",
    "closed_form_equilibrium",
    "default_starts",
    "fit_decay_rate",
    "inviscid_sweep",
    "log_potential",
    "minimize_energy",
    "semicircle_cdf",
    "semicircle_density",
    "semicircle_quantiles",
    "velocity_norm",
    "weak_residual",
    "weak_rhs",
    "reconstruction_mean",
    "default_test_functions",
]
