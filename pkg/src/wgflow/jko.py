"""Minimizing-movement (JKO) time stepping in quantile coordinates.

One step minimizes ``d2(prev, x)^2 / (2 tau) + E[x]``.  In quantile coordinates
the metric term is ``|x - x_prev|^2 / (2 n tau)``, so the step is a strongly
convex problem in ``R^n``.  It is solved with damped Newton iterations.  When a
barrier term is present (entropy or singular interaction) infeasible trials
evaluate to ``SATURATED`` and are rejected by the line search, so iterates stay
strictly increasing.  Without a barrier the objective is an isotropic quadratic
and the constrained minimizer is an isotonic projection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .energy import (
    SATURATED,
    EnergyParams,
    energy_array,
    free_energy,
    gradient_array,
    hessian_array,
    is_saturated,
)
from .measures import QuantileMeasure, ResolutionError, isotonic_project, wasserstein2

log = logging.getLogger(__name__)

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class JkoConfig:
    tau: float = 1e-2
    max_inner_iters: int = 5000
    grad_tol: float = 1e-8
    obj_tol: float = 1e-12
    shrink: float = 0.5
    armijo: float = 1e-4

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not (self.grad_tol > 0 and self.obj_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink factor must lie in (0, 1)")
        if not 0 < self.armijo < 1:
            raise ValueError("sufficient-decrease constant must lie in (0, 1)")
        if self.max_inner_iters < 1:
            raise ValueError("max_inner_iters must be >= 1")

    def with_(self, **changes) -> "JkoConfig":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class SolveInfo:
    iterations: int
    grad_norm: float
    objective: float
    converged: bool
    perturbation: float = 0.0


class ConvergenceError(RuntimeError):
    """Inner solver ran out of iterations; carries the best iterate."""

    def __init__(self, message: str, best: QuantileMeasure, info: SolveInfo):
        super().__init__(message)
        self.best = best
        self.info = info


def velocity_norm(g: np.ndarray) -> float:
    """L2(rho) norm of the velocity ``n * g`` for an array gradient ``g``."""
    return float(math.sqrt(g.size) * np.linalg.norm(g))


def newton_minimize(x0, value, grad, hess, cfg: JkoConfig) -> tuple[np.ndarray, SolveInfo]:
    """Damped Newton with Armijo backtracking for a smooth strictly convex objective.

    ``value`` returns ``SATURATED`` outside the feasible set; ``x0`` must be
    feasible.  Converges when the velocity norm of the gradient drops below
    ``cfg.grad_tol``.
    """
    x = np.array(x0, dtype=float)
    f = value(x)
    if is_saturated(f):
        raise ValueError("starting point is outside the domain of the objective")
    g = grad(x)
    gn = velocity_norm(g)
    it = 0
    while gn > cfg.grad_tol:
        if it >= cfg.max_inner_iters:
            info = SolveInfo(it, gn, f, False)
            raise ConvergenceError(
                f"inner solver did not reach grad_tol={cfg.grad_tol} in {it} iterations "
                f"(gradient norm {gn:.3e})",
                QuantileMeasure(np.maximum.accumulate(x)),
                info,
            )
        it += 1
        H = hess(x)
        try:
            d = -linalg.cho_solve(linalg.cho_factor(H, lower=True, check_finite=False), g)
        except linalg.LinAlgError:
            d = -g / np.max(np.abs(np.diag(H)))
        slope = float(g @ d)
        if slope >= 0:
            d, slope = -g, -float(g @ g)
        # rounding allowance so that steps at machine precision are not rejected
        slack = 16 * _EPS * (abs(f) + 1.0)
        t = 1.0
        while True:
            trial = x + t * d
            ft = value(trial)
            if not is_saturated(ft) and ft <= f + cfg.armijo * t * slope + slack:
                break
            t *= cfg.shrink
            if t < 1e-14:
                break
        if t < 1e-14:
            # no representable decrease left along the Newton direction
            log.debug("line search stalled at gradient norm %.3e", gn)
            break
        x, f = trial, ft
        g = grad(x)
        gn_new = velocity_norm(g)
        if abs(t - 1.0) == 0 and gn_new >= gn and abs(slope) <= cfg.obj_tol * (abs(f) + 1.0):
            gn = gn_new
            break
        gn = gn_new
    return x, SolveInfo(it, gn, f, gn <= cfg.grad_tol)


def jko_objective(candidate: QuantileMeasure, prev: QuantileMeasure, tau: float, p: EnergyParams) -> float:
    """``d2(prev, candidate)^2 / (2 tau) + E[candidate]``."""
    if candidate.n != prev.n:
        raise ResolutionError("candidate and previous iterate differ in size")
    if not tau > 0:
        raise ValueError("tau must be positive")
    e = free_energy(candidate, p)
    if is_saturated(e):
        return SATURATED
    return wasserstein2(candidate, prev) ** 2 / (2.0 * tau) + e


def _perturbation(prev: np.ndarray, tau: float) -> tuple[np.ndarray, float]:
    """Feasible start for a barrier problem whose previous iterate has ties."""
    n = prev.size
    eps = 1e-4 * math.sqrt(tau) * max(1.0, float(np.ptp(prev)))
    return prev + eps * (np.arange(n) - 0.5 * (n - 1)) / n, eps


def jko_step_info(prev: QuantileMeasure, cfg: JkoConfig, p: EnergyParams) -> tuple[QuantileMeasure, SolveInfo]:
    n, tau = prev.n, cfg.tau
    xp = np.array(prev.x)

    if not p.has_barrier:
        # quadratic: minimizer of |x - xp|^2/(2 tau) + alpha |x|^2/2 over the cone
        x = isotonic_project(xp / (1.0 + p.alpha * tau))
        e = energy_array(x, p)
        obj = float(np.mean((x - xp) ** 2)) / (2 * tau) + e
        g = (x - xp) / (n * tau) + p.alpha * x / n
        return QuantileMeasure(x), SolveInfo(0, velocity_norm(g), obj, True)

    eye = np.eye(n) / (n * tau)

    def value(x):
        e = energy_array(x, p)
        if is_saturated(e):
            return SATURATED
        return float(np.dot(x - xp, x - xp)) / (2 * n * tau) + e

    def grad(x):
        return (x - xp) / (n * tau) + gradient_array(x, p)

    def hess(x):
        return eye + hessian_array(x, p)

    x0, eps = xp, 0.0
    if n < 2 or not np.all(np.diff(xp) > 0):
        if n < 2:
            raise ValueError("a single atom cannot carry a finite entropy or interaction energy")
        x0, eps = _perturbation(xp, tau)
    try:
        x, info = newton_minimize(x0, value, grad, hess, cfg)
    except ConvergenceError as exc:
        exc.info = SolveInfo(exc.info.iterations, exc.info.grad_norm, exc.info.objective, False, eps)
        raise
    return QuantileMeasure(x), SolveInfo(info.iterations, info.grad_norm, info.objective, info.converged, eps)


def jko_step(prev: QuantileMeasure, cfg: JkoConfig, p: EnergyParams) -> QuantileMeasure:
    """One minimizing-movement step from ``prev``."""
    return jko_step_info(prev, cfg, p)[0]


@dataclass
class FlowTrajectory:
    """Discrete JKO curve with its energy-dissipation ledger."""

    tau: float
    times: list[float] = field(default_factory=list)
    states: list[QuantileMeasure] = field(default_factory=list)
    energies: list[float] = field(default_factory=list)
    step_distances: list[float] = field(default_factory=list)
    dissipation_sums: list[float] = field(default_factory=list)
    iterations: list[int] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    perturbation: float = 0.0

    def __len__(self) -> int:
        return len(self.states)

    @property
    def final(self) -> QuantileMeasure:
        return self.states[-1]

    def append(self, t: float, q: QuantileMeasure, energy: float, info: SolveInfo | None = None):
        if self.states:
            d = wasserstein2(self.states[-1], q)
            self.step_distances.append(d)
            self.dissipation_sums.append(self.dissipation_sums[-1] + d * d / (2 * self.tau))
        else:
            self.step_distances.append(0.0)
            self.dissipation_sums.append(0.0)
        self.times.append(float(t))
        self.states.append(q)
        self.energies.append(float(energy))
        self.iterations.append(info.iterations if info else 0)
        self.grad_norms.append(info.grad_norm if info else 0.0)

    def state_at(self, t: float) -> QuantileMeasure:
        """Geodesic interpolation between the two steps bracketing ``t``."""
        from .measures import displacement_interpolate

        times = np.asarray(self.times)
        if not times[0] <= t <= times[-1] * (1 + 1e-12):
            raise ValueError(f"time {t} outside trajectory range [{times[0]}, {times[-1]}]")
        k = int(np.searchsorted(times, t, side="right")) - 1
        if k >= len(times) - 1:
            return self.states[-1]
        s = (t - times[k]) / (times[k + 1] - times[k])
        return displacement_interpolate(self.states[k], self.states[k + 1], min(max(s, 0.0), 1.0))

    def energy_monotone(self, tol: float = 1e-12) -> bool:
        e = np.asarray(self.energies)
        return bool(np.all(e[1:] <= e[:-1] + tol * (1.0 + np.abs(e[:-1]))))

    def step_inequality_violations(self, tol: float = 1e-9) -> list[int]:
        """Steps where ``d^2/(2 tau) + E[new] <= E[old]`` fails by more than ``tol``."""
        bad = []
        for k in range(1, len(self.states)):
            d = self.step_distances[k]
            if d * d / (2 * self.tau) + self.energies[k] > self.energies[k - 1] + tol:
                bad.append(k)
        return bad


class FlowError(RuntimeError):
    def __init__(self, message: str, partial: FlowTrajectory):
        super().__init__(message)
        self.partial = partial


def run_flow(initial: QuantileMeasure, steps: int, cfg: JkoConfig, p: EnergyParams, t0: float = 0.0) -> FlowTrajectory:
    """Run ``steps`` JKO steps; index 0 holds ``initial``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    traj = FlowTrajectory(tau=cfg.tau)
    traj.append(t0, initial, free_energy(initial, p))
    q = initial
    for m in range(1, steps + 1):
        try:
            q, info = jko_step_info(q, cfg, p)
        except ConvergenceError as exc:
            raise FlowError(f"step {m}: {exc}", traj) from exc
        if m == 1:
            traj.perturbation = info.perturbation
        traj.append(t0 + m * cfg.tau, q, free_energy(q, p), info)
    return traj


@dataclass(frozen=True)
class DissipationReport:
    energy_drop: float
    dissipation: float
    ratio: float
    half_dissipation: float


def dissipation_report(t: FlowTrajectory) -> DissipationReport:
    """Energy drop against the metric dissipation ``sum d^2 / tau``.

    Summing one-step minimality gives ``sum d^2/(2 tau) <= drop``; for smooth
    flows ``sum d^2 / tau / drop -> 1`` as ``tau -> 0``.
    """
    if len(t) < 2:
        raise ValueError("need at least two states")
    if not all(math.isfinite(e) for e in t.energies):
        raise ValueError("trajectory contains saturated energies")
    drop = t.energies[0] - t.energies[-1]
    diss = 2.0 * t.dissipation_sums[-1]
    if drop == 0.0:
        ratio = 1.0 if diss == 0.0 else math.inf
    else:
        ratio = diss / drop
    return DissipationReport(drop, diss, ratio, t.dissipation_sums[-1])
