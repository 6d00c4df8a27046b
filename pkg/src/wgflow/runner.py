"""Experiment configuration, orchestration and deterministic result files.

A run is described by one JSON document.  Outputs go to a directory:
``config.json`` (normalized echo), ``trajectory.csv``, ``report.json`` and,
written last, ``manifest.json`` with SHA-256 digests of everything else.
Floats are printed with 17 significant digits so identical runs produce
identical bytes.  Wall-clock timings are logged, never written, for the same
reason.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import (
    bound_violations,
    bump_family,
    closed_form_equilibrium,
    default_starts,
    default_test_functions,
    fit_decay_rate,
    inviscid_sweep,
    minimize_energy,
    semicircle_quantiles,
    weak_residual,
    FitError,
)
from .energy import (
    EnergyParams,
    EnergyRangeError,
    InteractionKernel,
    KernelKind,
    free_energy,
    lower_bounds,
)
from .jko import FlowError, FlowTrajectory, JkoConfig, dissipation_report, run_flow
from .measures import EmpiricalAtoms, MeasureError, QuantileMeasure, atoms_to_quantile, wasserstein2

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class Command(str, enum.Enum):
    FLOW = "flow"
    MINIMIZE = "minimize"
    SWEEP = "sweep-kappa"
    COMPARE = "compare-equilibrium"
    WEAK = "weak-residual"


_COMMAND_ALIASES = {
    "flow": Command.FLOW,
    "minimize": Command.MINIMIZE,
    "sweep-kappa": Command.SWEEP,
    "inviscidsweep": Command.SWEEP,
    "inviscid_sweep": Command.SWEEP,
    "compare-equilibrium": Command.COMPARE,
    "compareequilibrium": Command.COMPARE,
    "compare_equilibrium": Command.COMPARE,
    "weak-residual": Command.WEAK,
    "weakresidual": Command.WEAK,
    "weak_residual": Command.WEAK,
}

PRESETS = {
    "gaussian": {"mean": 0.0, "std": 1.0},
    "uniform": {"a": -1.0, "b": 1.0},
    "semicircle": {"gamma": 1.0},
    "atoms": {"points": None},
}

_TOP_KEYS = {
    "command", "energy", "jko", "n", "initial", "initial_file", "steps", "t_final",
    "output", "seed", "emit_states", "kappas", "reference", "test_functions", "tolerances",
}
_ENERGY_KEYS = {"kappa", "alpha", "kernel"}
_KERNEL_KEYS = {"kind", "gamma", "beta", "lambda_w"}
_JKO_KEYS = {"tau", "max_inner_iters", "grad_tol", "obj_tol", "shrink", "armijo"}
_TEST_FN_KEYS = {"count", "lo", "hi", "overlap"}

DEFAULT_TOLERANCES = {
    "equilibrium_d2": 2e-2,
    "uniqueness_d2": 3e-2,
    "theta_abs": 5e-3,
    "weak_residual": 5e-2,
    "sweep_slack": 0.1,
    "sweep_shrink": 2.0,
    "step_slack": 1e-9,
    "monotone_rel": 1e-12,
    "inner_grad": 1e-5,
}


@dataclass(frozen=True)
class InitialSpec:
    preset: str | None = None
    params: dict = field(default_factory=dict)
    file: str | None = None

    def build(self, n: int) -> QuantileMeasure:
        if self.file is not None:
            pts = np.loadtxt(self.file, dtype=float, ndmin=1)
            return atoms_to_quantile(EmpiricalAtoms(pts), n)
        pr = {**PRESETS[self.preset], **self.params}
        if self.preset == "gaussian":
            return QuantileMeasure.gaussian(pr["mean"], pr["std"], n)
        if self.preset == "uniform":
            return QuantileMeasure.uniform(pr["a"], pr["b"], n)
        if self.preset == "semicircle":
            return semicircle_quantiles(n, pr["gamma"])
        return atoms_to_quantile(EmpiricalAtoms(pr["points"]), n)

    def echo(self) -> dict:
        if self.file is not None:
            return {"file": self.file}
        return {"preset": self.preset, **{**PRESETS[self.preset], **self.params}}


@dataclass(frozen=True)
class ExperimentConfig:
    command: Command
    energy: EnergyParams
    jko: JkoConfig
    n: int
    initial: InitialSpec
    steps: int | None = None
    t_final: float | None = None
    output: str | None = None
    seed: int = 0
    emit_states: bool = False
    kappas: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    reference: str = "auto"
    test_functions: dict = field(default_factory=lambda: {"count": 5, "overlap": 1.5})
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    def num_steps(self) -> int:
        if self.steps is not None:
            return self.steps
        if self.t_final is not None:
            return max(1, int(round(self.t_final / self.jko.tau)))
        return 100

    def echo(self) -> dict:
        k = self.energy.kernel
        kernel = {"kind": k.kind.value, "lambda_w": k.lambda_w}
        if k.kind is KernelKind.LOG:
            kernel["gamma"] = k.gamma
        else:
            kernel["beta"] = k.beta
        j = self.jko
        return {
            "command": self.command.value,
            "energy": {"kappa": self.energy.kappa, "alpha": self.energy.alpha, "kernel": kernel},
            "jko": {
                "tau": j.tau, "max_inner_iters": j.max_inner_iters, "grad_tol": j.grad_tol,
                "obj_tol": j.obj_tol, "shrink": j.shrink, "armijo": j.armijo,
            },
            "n": self.n,
            "initial": self.initial.echo(),
            "steps": self.num_steps(),
            "seed": self.seed,
            "emit_states": self.emit_states,
            "kappas": list(self.kappas),
            "reference": self.reference,
            "test_functions": dict(self.test_functions),
            "tolerances": dict(self.tolerances),
        }


def _check_keys(section: str, got: dict, allowed: set):
    if not isinstance(got, dict):
        raise ConfigError(f"'{section}' must be an object")
    unknown = sorted(set(got) - allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {', '.join(unknown)}")


def _number(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{name}' must be a number")
    if not math.isfinite(value):
        raise ConfigError(f"'{name}' must be finite")
    return float(value)


def _parse_kernel(d: dict) -> InteractionKernel:
    _check_keys("energy.kernel", d, _KERNEL_KEYS)
    kind = str(d.get("kind", "log")).lower()
    if kind in ("power", "powerlaw", "power_law"):
        kind = KernelKind.POWER
    elif kind == "log":
        kind = KernelKind.LOG
    else:
        raise ConfigError(f"unknown kernel kind {d['kind']!r}; expected 'log' or 'power'")
    lam = _number(d.get("lambda_w", 1.0), "lambda_w")
    if kind is KernelKind.POWER:
        if "gamma" in d:
            raise ConfigError("'gamma' applies to the log kernel only")
        if "beta" not in d:
            raise ConfigError("power-law kernel needs 'beta'")
        beta = _number(d["beta"], "beta")
        if not 0.0 < beta < 1.0:
            raise ConfigError(
                f"beta={beta} violates 0 < beta < 1: for beta >= 1 the interaction energy "
                "is infinite on every nonzero density and the flow is trivial"
            )
        return InteractionKernel.power(beta, lambda_w=lam)
    if "beta" in d:
        raise ConfigError("'beta' applies to the power-law kernel only")
    gamma = _number(d.get("gamma", 1.0 / math.pi), "gamma")
    try:
        return InteractionKernel.log(gamma, lambda_w=lam)
    except EnergyRangeError as exc:
        raise ConfigError(str(exc)) from None


def _parse_initial(doc: dict, base: Path | None) -> InitialSpec:
    has_preset = "initial" in doc
    has_file = "initial_file" in doc
    init = doc.get("initial")
    if has_preset and isinstance(init, dict) and "file" in init:
        if "preset" in init or has_file:
            raise ConfigError("exactly one initial-datum source is allowed (got several)")
        has_file, doc = True, {**doc, "initial_file": init["file"]}
        has_preset = False
    if has_preset and has_file:
        raise ConfigError("exactly one initial-datum source is allowed: 'initial' and 'initial_file' both given")
    if not (has_preset or has_file):
        raise ConfigError("missing initial datum: give 'initial' (preset) or 'initial_file'")
    if has_file:
        path = Path(doc["initial_file"])
        if base is not None and not path.is_absolute():
            path = base / path
        if not path.is_file():
            raise ConfigError(f"initial file does not exist: {path}")
        return InitialSpec(file=str(path))
    if isinstance(init, str):
        init = {"preset": init}
    if not isinstance(init, dict) or "preset" not in init:
        raise ConfigError("'initial' must name a preset")
    name = str(init["preset"]).lower()
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}")
    params = {k: v for k, v in init.items() if k != "preset"}
    _check_keys(f"initial ({name})", params, set(PRESETS[name]))
    if name == "atoms":
        pts = params.get("points")
        if not isinstance(pts, list) or not pts:
            raise ConfigError("atoms preset needs a non-empty 'points' list")
        params["points"] = [_number(p, "points[]") for p in pts]
    else:
        params = {k: _number(v, k) for k, v in params.items()}
    if name == "gaussian" and params.get("std", 1.0) <= 0:
        raise ConfigError("gaussian std must be positive")
    if name == "uniform" and not params.get("b", 1.0) > params.get("a", -1.0):
        raise ConfigError("uniform preset needs a < b")
    if name == "semicircle" and params.get("gamma", 1.0) <= 0:
        raise ConfigError("semicircle gamma must be positive")
    return InitialSpec(preset=name, params=params)


def parse_config(text: str, base_dir: str | Path | None = None) -> ExperimentConfig:
    """Validate a JSON experiment document and fill in defaults."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    _check_keys("config", doc, _TOP_KEYS)
    if "command" not in doc:
        raise ConfigError("missing 'command'")
    cmd = _COMMAND_ALIASES.get(str(doc["command"]).lower())
    if cmd is None:
        raise ConfigError(f"unknown command {doc['command']!r}")

    energy = doc.get("energy", {})
    _check_keys("energy", energy, _ENERGY_KEYS)
    kappa = _number(energy.get("kappa", 0.0), "kappa")
    alpha = _number(energy.get("alpha", 1.0), "alpha")
    if kappa < 0 or alpha < 0:
        raise ConfigError("kappa and alpha must be nonnegative")
    params = EnergyParams(kappa, alpha, _parse_kernel(energy.get("kernel", {})))

    jd = doc.get("jko", {})
    _check_keys("jko", jd, _JKO_KEYS)
    try:
        jko = JkoConfig(**{k: (int(v) if k == "max_inner_iters" else _number(v, k)) for k, v in jd.items()})
    except ValueError as exc:
        raise ConfigError(f"jko: {exc}") from None

    n = doc.get("n", 256)
    if isinstance(n, bool) or not isinstance(n, int) or n < 2:
        raise ConfigError("'n' must be an integer >= 2")

    initial = _parse_initial(doc, Path(base_dir) if base_dir else None)

    steps = doc.get("steps")
    t_final = doc.get("t_final")
    if steps is not None and t_final is not None:
        raise ConfigError("give either 'steps' or 't_final', not both")
    if steps is not None and (isinstance(steps, bool) or not isinstance(steps, int) or steps < 1):
        raise ConfigError("'steps' must be a positive integer")
    if t_final is not None:
        t_final = _number(t_final, "t_final")
        if t_final <= 0:
            raise ConfigError("'t_final' must be positive")

    kappas = tuple(_number(k, "kappas[]") for k in doc.get("kappas", (0.2, 0.1, 0.05, 0.025)))
    if not kappas or any(k <= 0 for k in kappas) or any(b > a for a, b in zip(kappas, kappas[1:])):
        raise ConfigError("'kappas' must be positive and sorted in descending order")

    reference = doc.get("reference", "auto")
    if reference not in ("auto", "semicircle", "minimizer", "none"):
        raise ConfigError("'reference' must be one of auto, semicircle, minimizer, none")

    tf = doc.get("test_functions", {})
    _check_keys("test_functions", tf, _TEST_FN_KEYS)
    tfs = {"count": 5, "overlap": 1.5, **tf}

    tol = doc.get("tolerances", {})
    _check_keys("tolerances", tol, set(DEFAULT_TOLERANCES))
    tolerances = {**DEFAULT_TOLERANCES, **{k: _number(v, k) for k, v in tol.items()}}

    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("'seed' must be a nonnegative integer")

    if cmd in (Command.MINIMIZE, Command.COMPARE) and alpha <= 0:
        raise ConfigError(f"{cmd.value} needs alpha > 0")
    if cmd is Command.COMPARE and (kappa != 0 or params.kernel.kind is not KernelKind.LOG):
        raise ConfigError("compare-equilibrium needs kappa = 0 and a log kernel")

    return ExperimentConfig(
        command=cmd,
        energy=params,
        jko=jko,
        n=n,
        initial=initial,
        steps=steps,
        t_final=t_final,
        output=doc.get("output"),
        seed=seed,
        emit_states=bool(doc.get("emit_states", False)),
        kappas=kappas,
        reference=reference,
        test_functions=tfs,
        tolerances=tolerances,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


# ---------------------------------------------------------------------------
# Deterministic serialization


def fmt(x: float) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return f"{x:.17g}"


def dumps(obj, indent: int = 0) -> str:
    """JSON text with every float printed to 17 significant digits."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_, int, float, np.integer, np.floating)):
        return fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(fmt(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


TRAJECTORY_COLUMNS = ("step", "time", "energy", "step_distance", "d2_to_reference")


def trajectory_csv(traj: FlowTrajectory, reference: QuantileMeasure | FlowTrajectory | None) -> str:
    """Time series; ``reference`` is a fixed state or a trajectory compared step by step."""
    lines = [",".join(TRAJECTORY_COLUMNS)]
    for k, (t, q, e, d) in enumerate(zip(traj.times, traj.states, traj.energies, traj.step_distances)):
        if reference is None:
            ref = math.nan
        elif isinstance(reference, FlowTrajectory):
            ref = wasserstein2(q, reference.states[k])
        else:
            ref = wasserstein2(q, reference)
        lines.append(",".join((str(k), fmt(t), fmt(e), fmt(d), fmt(ref))))
    return "\n".join(lines) + "\n"


def states_csv(traj: FlowTrajectory) -> str:
    lines = []
    for k, (t, q) in enumerate(zip(traj.times, traj.states)):
        lines.append(",".join([str(k), fmt(t)] + [fmt(v) for v in q.x]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Execution


@dataclass
class RunReport:
    config: dict
    summary: dict = field(default_factory=dict)
    rates: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    iterations: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    partial: bool = False
    error: str | None = None
    files: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.partial and all(self.checks.values())

    @property
    def exit_status(self) -> int:
        return 0 if self.ok else 1

    def as_json(self) -> dict:
        return {
            "config": self.config,
            "status": "ok" if self.ok else ("partial" if self.partial else "failed"),
            "error": self.error,
            "summary": self.summary,
            "rates": self.rates,
            "bounds": self.bounds,
            "checks": self.checks,
            "iterations": self.iterations,
        }


def _reference(cfg: ExperimentConfig) -> QuantileMeasure | None:
    p = cfg.energy
    choice = cfg.reference
    if choice == "none" or p.alpha <= 0:
        return None
    closed = p.kappa == 0 and p.kernel.kind is KernelKind.LOG and p.kernel.active
    if choice == "semicircle" or (choice == "auto" and closed):
        if not closed:
            raise ConfigError("semicircle reference needs kappa = 0 and a log kernel")
        return closed_form_equilibrium(p, cfg.n).state
    return minimize_energy(p, cfg.n, cfg.jko, seed=cfg.seed).state


def _flow_checks(report: RunReport, traj: FlowTrajectory, p: EnergyParams, tol: dict):
    finite = [e for e in traj.energies if math.isfinite(e)]
    report.checks["energy_nonincreasing"] = traj.energy_monotone(tol["monotone_rel"])
    report.checks["step_inequality"] = not traj.step_inequality_violations(tol["step_slack"])
    report.checks["lower_bounds"] = not bound_violations(finite, p)
    report.checks["inner_converged"] = max(traj.grad_norms) <= tol["inner_grad"]
    report.iterations["max_grad_norm"] = max(traj.grad_norms)
    report.iterations["inner_total"] = int(sum(traj.iterations))
    report.iterations["inner_max"] = int(max(traj.iterations))
    report.summary["initial_energy"] = traj.energies[0]
    report.summary["final_energy"] = traj.energies[-1]
    report.summary["steps"] = len(traj) - 1
    report.summary["final_time"] = traj.times[-1]
    report.summary["perturbation"] = traj.perturbation
    if all(math.isfinite(e) for e in traj.energies):
        d = dissipation_report(traj)
        report.summary["dissipation"] = {
            "energy_drop": d.energy_drop, "dissipation": d.dissipation, "ratio": d.ratio,
        }


def _bounds_record(p: EnergyParams) -> dict:
    return lower_bounds(p).applicable()


def execute(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> RunReport:
    """Run the experiment, write result files, and return the report."""
    out = Path(out_dir or cfg.output or "out")
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(config=cfg.echo())
    report.bounds = _bounds_record(cfg.energy)
    files: dict[str, str] = {}

    def write(name: str, text: str):
        path = out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        files[name] = text

    write("config.json", dumps(report.config) + "\n")
    start = time.perf_counter()
    tol = cfg.tolerances
    try:
        _dispatch(cfg, report, write, tol)
    except FlowError as exc:
        report.partial = True
        report.error = f"{cfg.command.value}: {exc}"
        write("trajectory.csv", trajectory_csv(exc.partial, None))
    except (MeasureError, EnergyRangeError, FitError, ConfigError) as exc:
        report.partial = True
        report.error = f"{cfg.command.value}: {type(exc).__name__}: {exc}"
    report.timings["total_seconds"] = time.perf_counter() - start
    log.info("%s finished in %.3f s", cfg.command.value, report.timings["total_seconds"])

    write("report.json", dumps(report.as_json()) + "\n")
    manifest = {
        "status": report.as_json()["status"],
        "partial": report.partial,
        "files": [
            {"name": name, "sha256": hashlib.sha256(text.encode()).hexdigest()}
            for name, text in sorted(files.items())
        ],
    }
    (out / "manifest.json").write_text(dumps(manifest) + "\n")
    report.files = sorted(files) + ["manifest.json"]
    return report


def _dispatch(cfg: ExperimentConfig, report: RunReport, write, tol: dict):
    p, n = cfg.energy, cfg.n
    if cfg.command is Command.FLOW:
        initial = cfg.initial.build(n)
        traj = run_flow(initial, cfg.num_steps(), cfg.jko, p)
        ref = _reference(cfg)
        _flow_checks(report, traj, p, tol)
        if ref is not None:
            report.summary["final_d2_to_reference"] = wasserstein2(traj.final, ref)
            theta = free_energy(ref, p)
            try:
                fit = fit_decay_rate(traj.times, traj.energies, theta, min_gap=1e-10)
                report.rates["energy_gap"] = {
                    "rate": fit.rate, "intercept": fit.intercept,
                    "residual": fit.residual, "window": list(fit.window),
                }
            except FitError as exc:
                report.rates["energy_gap"] = {"error": str(exc)}
        write("trajectory.csv", trajectory_csv(traj, ref))
        if cfg.emit_states:
            write("states.csv", states_csv(traj))

    elif cfg.command is Command.MINIMIZE:
        eq = minimize_energy(p, n, cfg.jko, starts=_starts(cfg), seed=cfg.seed)
        report.summary.update(theta=eq.theta, grad_norm=eq.grad_norm, spread=eq.spread)
        report.checks["converged"] = eq.converged
        report.checks["uniqueness"] = eq.spread <= tol["uniqueness_d2"]
        report.checks["lower_bounds"] = not bound_violations([eq.theta], p)
        if cfg.emit_states:
            write("states.csv", ",".join(fmt(v) for v in eq.state.x) + "\n")

    elif cfg.command is Command.COMPARE:
        eq = minimize_energy(p, n, cfg.jko, starts=_starts(cfg), seed=cfg.seed)
        closed = closed_form_equilibrium(p, n)
        d2 = wasserstein2(eq.state, closed.state)
        report.summary.update(
            d2_to_semicircle=d2,
            theta_numerical=eq.theta,
            theta_closed_form=closed.theta,
            energy_of_closed_form=free_energy(closed.state, p),
            theta_error=abs(eq.theta - closed.theta),
            spread=eq.spread,
        )
        report.checks["converged"] = eq.converged
        report.checks["d2_to_semicircle"] = d2 <= tol["equilibrium_d2"]
        report.checks["theta_vs_closed_form"] = abs(eq.theta - closed.theta) <= tol["theta_abs"]
        report.checks["uniqueness"] = eq.spread <= tol["uniqueness_d2"]
        report.checks["lower_bounds"] = not bound_violations([eq.theta], p)

    elif cfg.command is Command.SWEEP:
        initial = cfg.initial.build(n)
        t_final = cfg.t_final if cfg.t_final is not None else cfg.num_steps() * cfg.jko.tau
        table = inviscid_sweep(initial, cfg.kappas, t_final, cfg.jko, p)
        rows = [{"kappa": r.kappa, "sup_distance": r.sup_distance, "at_time": r.at_time} for r in table.rows]
        report.summary["sweep"] = rows
        report.summary["shrink_factor"] = table.shrink_factor()
        report.checks["monotone_in_kappa"] = table.is_monotone(tol["sweep_slack"])
        report.checks["shrink_factor"] = table.shrink_factor() >= tol["sweep_shrink"]
        lines = ["kappa,sup_distance,at_time"] + [
            f"{fmt(r.kappa)},{fmt(r.sup_distance)},{fmt(r.at_time)}" for r in table.rows
        ]
        write("sweep.csv", "\n".join(lines) + "\n")
        # one subdirectory per sweep cell; distances are to the kappa = 0 run
        write("cells/00_kappa_0/trajectory.csv", trajectory_csv(table.reference, None))
        for i, (row, traj) in enumerate(zip(table.rows, table.trajectories), start=1):
            write(f"cells/{i:02d}_kappa_{row.kappa:.6g}/trajectory.csv", trajectory_csv(traj, table.reference))

    elif cfg.command is Command.WEAK:
        initial = cfg.initial.build(n)
        traj = run_flow(initial, cfg.num_steps(), cfg.jko, p)
        _flow_checks(report, traj, p, tol)
        tf = cfg.test_functions
        if "lo" in tf and "hi" in tf:
            fns = bump_family(tf["lo"], tf["hi"], int(tf["count"]), tf["overlap"])
        else:
            fns = default_test_functions(traj, int(tf["count"]), tf["overlap"])
        res = weak_residual(traj, p, fns)
        report.summary["weak_residual"] = res.residual
        report.summary["weak_residual_per_function"] = list(res.per_function)
        report.checks["weak_residual"] = res.residual < tol["weak_residual"]
        write("trajectory.csv", trajectory_csv(traj, None))


def _starts(cfg: ExperimentConfig):
    starts = default_starts(cfg.n, cfg.seed)
    return [cfg.initial.build(cfg.n)] + starts[1:]
