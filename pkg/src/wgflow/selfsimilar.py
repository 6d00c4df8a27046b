"""Change of variables between the spreading flow and its rescaled relaxation.

``y = x / sqrt(1 + 2t)`` and ``s = log(1 + 2t) / 2``.  The flow of ``E_{kappa,0}``
in ``(x, t)`` becomes the flow of ``E_{kappa,1}`` in ``(y, s)``.  On quantiles the
transform is a plain dilation, hence an exact push-forward.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .energy import EnergyParams, free_energy
from .jko import FlowTrajectory, JkoConfig, run_flow
from .measures import DomainError, QuantileMeasure


class Frame(str, enum.Enum):
    ORIGINAL = "original"
    RESCALED = "rescaled"


@dataclass(frozen=True)
class FrameTag:
    frame: Frame
    time: float

    def __post_init__(self):
        object.__setattr__(self, "frame", Frame(self.frame))
        if self.time < 0:
            raise DomainError("frame time must be nonnegative")


def rescaled_time(t: float) -> float:
    return 0.5 * math.log1p(2.0 * t)


def original_time(s: float) -> float:
    return 0.5 * math.expm1(2.0 * s)


def to_selfsimilar(q: QuantileMeasure, t: float) -> tuple[QuantileMeasure, float]:
    if t < 0:
        raise DomainError(f"original-frame time must be >= 0, got {t}")
    if t == 0:
        return q, 0.0
    return QuantileMeasure(q.x / math.sqrt(1.0 + 2.0 * t)), rescaled_time(t)


def from_selfsimilar(q: QuantileMeasure, tau: float) -> tuple[QuantileMeasure, float]:
    if tau < 0:
        raise DomainError(f"rescaled time must be >= 0, got {tau}")
    if tau == 0:
        return q, 0.0
    return QuantileMeasure(q.x * math.exp(tau)), original_time(tau)


class FrameMisuseError(ValueError):
    pass


def original_frame_flow(
    initial: QuantileMeasure, t_final: float, cfg: JkoConfig, p_base: EnergyParams
) -> FlowTrajectory:
    """Flow of ``E_{kappa,0}`` computed through the rescaled ``alpha = 1`` flow.

    ``cfg.tau`` is the step in rescaled time; the returned trajectory carries
    original-frame times and states, and energies of ``p_base``.  Its
    ``tau`` and dissipation ledger refer to the rescaled run.
    """
    if p_base.alpha != 0:
        raise FrameMisuseError("original-frame flow has no confinement: p_base.alpha must be 0")
    if t_final < 0:
        raise DomainError("t_final must be >= 0")
    out = FlowTrajectory(tau=cfg.tau)
    if t_final == 0:
        out.append(0.0, initial, free_energy(initial, p_base))
        return out
    s_final = rescaled_time(t_final)
    steps = int(math.ceil(s_final / cfg.tau - 1e-9))
    rescaled = run_flow(initial, steps, cfg, p_base.with_(alpha=1.0))
    for s, q, it, gn in zip(rescaled.times, rescaled.states, rescaled.iterations, rescaled.grad_norms):
        x, t = from_selfsimilar(q, s)
        out.times.append(t)
        out.states.append(x)
        out.energies.append(free_energy(x, p_base))
        out.iterations.append(it)
        out.grad_norms.append(gn)
    out.step_distances = list(rescaled.step_distances)
    out.dissipation_sums = list(rescaled.dissipation_sums)
    out.perturbation = rescaled.perturbation
    return out


def self_similar_profile(profile: QuantileMeasure, times) -> list[QuantileMeasure]:
    """Spreading solution generated by a stationary rescaled profile."""
    return [QuantileMeasure(profile.x * math.sqrt(1.0 + 2.0 * t)) for t in np.atleast_1d(times)]
