"""Wasserstein gradient flows on the line in quantile coordinates.

The free energy combines entropy, quadratic confinement and a repulsive
interaction (logarithmic or power law).  Flows are computed with the
minimizing-movement scheme; diagnostics cover equilibria, decay rates,
the inviscid limit and weak-form consistency.
"""

from .measures import (
    DegenerateMeasureError,
    DensityView,
    DomainError,
    EmpiricalAtoms,
    MeasureError,
    NormalizationError,
    ParameterError,
    QuantileMeasure,
    ResolutionError,
    atoms_to_quantile,
    density_from_quantile,
    density_on_cells,
    displacement_interpolate,
    isotonic_project,
    mass_levels,
    quantile_from_density,
    wasserstein2,
)
from .energy import (
    POSITIVITY_BOUND,
    SATURATED,
    EnergyParams,
    EnergyRangeError,
    InteractionKernel,
    KernelKind,
    LowerBounds,
    confinement,
    energy_gradient,
    energy_hessian,
    energy_parts,
    entropy,
    free_energy,
    interaction,
    is_saturated,
    log_equilibrium_energy,
    lower_bound,
    lower_bounds,
)
from .jko import (
    ConvergenceError,
    DissipationReport,
    FlowError,
    FlowTrajectory,
    JkoConfig,
    dissipation_report,
    jko_objective,
    jko_step,
    run_flow,
)
from .selfsimilar import (
    Frame,
    FrameMisuseError,
    FrameTag,
    from_selfsimilar,
    original_frame_flow,
    self_similar_profile,
    to_selfsimilar,
)
from .diagnostics import (
    Bump,
    EquilibriumKind,
    EquilibriumSpec,
    FitError,
    SweepTable,
    bound_violations,
    bump_family,
    characterization_residual,
    closed_form_equilibrium,
    fit_decay_rate,
    inviscid_sweep,
    minimize_energy,
    semicircle_quantiles,
    weak_residual,
)
from .runner import ConfigError, ExperimentConfig, RunReport, execute, load_config, parse_config

__version__ = "0.1.0"
