import math

import numpy as np
import pytest
from scipy import optimize

from wgflow import (
    ConvergenceError,
    EnergyParams,
    FlowError,
    FlowTrajectory,
    InteractionKernel,
    JkoConfig,
    QuantileMeasure,
    ResolutionError,
    SATURATED,
    dissipation_report,
    free_energy,
    jko_objective,
    jko_step,
    run_flow,
    wasserstein2,
)
from wgflow.jko import jko_step_info, newton_minimize, velocity_norm

from conftest import random_strict

NO_KERNEL = InteractionKernel.log(lambda_w=0.0)


class TestConfig:
    @pytest.mark.parametrize(
        "bad", [dict(tau=0.0), dict(grad_tol=0.0), dict(shrink=1.0), dict(armijo=0.0), dict(max_inner_iters=0)]
    )
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            JkoConfig(**bad)

    def test_with(self):
        assert JkoConfig().with_(tau=0.5).tau == 0.5


class TestClosedFormSteps:
    def test_pure_confinement(self, rng):
        for alpha, tau in [(1.0, 1e-2), (2.5, 0.3)]:
            q = random_strict(rng, 50)
            p = EnergyParams(0.0, alpha, NO_KERNEL)
            out = jko_step(q, JkoConfig(tau=tau), p)
            np.testing.assert_allclose(out.x, q.x / (1 + alpha * tau), atol=1e-8)

    def test_pure_metric_is_identity(self, rng):
        q = random_strict(rng, 50)
        out = jko_step(q, JkoConfig(tau=0.1), EnergyParams(0.0, 0.0, NO_KERNEL))
        np.testing.assert_array_equal(out.x, q.x)

    def test_atoms_allowed_without_barrier(self):
        q = QuantileMeasure([0.0, 0.0, 2.0])
        out = jko_step(q, JkoConfig(tau=1.0), EnergyParams(0.0, 1.0, NO_KERNEL))
        np.testing.assert_allclose(out.x, [0.0, 0.0, 1.0])


class TestBarrierSteps:
    @pytest.mark.parametrize(
        "p",
        [
            EnergyParams(0.5, 1.0, NO_KERNEL),
            EnergyParams(0.0, 1.0, InteractionKernel.log(1.0)),
            EnergyParams(0.1, 0.0, InteractionKernel.power(0.5)),
        ],
    )
    def test_matches_general_purpose_optimizer(self, rng, p):
        q = random_strict(rng, 12)
        cfg = JkoConfig(tau=0.2)
        out = jko_step(q, cfg, p)
        # unconstrained BFGS on log-gaps, which keeps the ordering built in
        def unpack(z):
            return np.concatenate(([z[0]], z[0] + np.cumsum(np.exp(z[1:]))))

        def obj(z):
            return jko_objective(QuantileMeasure(unpack(z)), q, cfg.tau, p)

        z0 = np.concatenate(([q.x[0]], np.log(np.diff(q.x))))
        res = optimize.minimize(obj, z0, method="BFGS", options={"gtol": 1e-11, "maxiter": 10000})
        assert jko_objective(out, q, cfg.tau, p) <= res.fun + 1e-10
        np.testing.assert_allclose(out.x, unpack(res.x), atol=2e-5)

    def test_first_order_conditions(self, rng):
        from wgflow import energy_gradient

        q = random_strict(rng, 40)
        p = EnergyParams(0.3, 1.0, InteractionKernel.log(1.0))
        cfg = JkoConfig(tau=0.05)
        out, info = jko_step_info(q, cfg, p)
        assert info.converged
        g = (out.x - q.x) / (out.n * cfg.tau) + energy_gradient(out, p)
        assert velocity_norm(g) <= cfg.grad_tol

    def test_stays_strictly_increasing(self, rng):
        q = random_strict(rng, 64, lo_gap=1e-3)
        p = EnergyParams(0.0, 1.0, InteractionKernel.log(1.0))
        out = jko_step(q, JkoConfig(tau=10.0), p)
        assert out.is_strict

    def test_ties_get_a_recorded_perturbation(self):
        q = QuantileMeasure.dirac(0.0, 32)
        p = EnergyParams(0.2, 1.0, InteractionKernel.log(1.0))
        out, info = jko_step_info(q, JkoConfig(tau=0.01), p)
        assert out.is_strict and info.perturbation > 0
        t = run_flow(q, 3, JkoConfig(tau=0.01), p)
        assert t.perturbation == info.perturbation
        assert math.isinf(t.energies[0]) and math.isfinite(t.energies[1])

    def test_single_atom_with_barrier(self):
        with pytest.raises(ValueError):
            jko_step(QuantileMeasure([0.0]), JkoConfig(), EnergyParams(0.1, 1.0, NO_KERNEL))

    def test_iteration_cap(self, rng):
        q = random_strict(rng, 30)
        p = EnergyParams(0.0, 1.0, InteractionKernel.log(1.0))
        with pytest.raises(ConvergenceError) as exc:
            jko_step(q, JkoConfig(tau=10.0, max_inner_iters=1, grad_tol=1e-14), p)
        assert exc.value.best.n == 30
        assert not exc.value.info.converged

    def test_flow_error_keeps_partial_trajectory(self, rng):
        q = random_strict(rng, 30)
        p = EnergyParams(0.0, 1.0, InteractionKernel.log(1.0))
        with pytest.raises(FlowError) as exc:
            run_flow(q, 5, JkoConfig(tau=10.0, max_inner_iters=1, grad_tol=1e-14), p)
        assert len(exc.value.partial) == 1


class TestNewton:
    def test_quadratic_in_one_step(self):
        A = np.array([[3.0, 1.0], [1.0, 2.0]])
        b = np.array([1.0, -1.0])
        x, info = newton_minimize(
            np.zeros(2), lambda x: 0.5 * x @ A @ x - b @ x, lambda x: A @ x - b, lambda x: A, JkoConfig()
        )
        np.testing.assert_allclose(x, np.linalg.solve(A, b), atol=1e-12)
        assert info.iterations == 1 and info.converged

    def test_infeasible_start(self):
        with pytest.raises(ValueError):
            newton_minimize(np.zeros(2), lambda x: SATURATED, None, None, JkoConfig())


class TestObjective:
    def test_value(self, rng):
        a, b = random_strict(rng, 10), random_strict(rng, 10)
        p = EnergyParams(0.1, 1.0, InteractionKernel.log())
        want = wasserstein2(a, b) ** 2 / 0.2 + free_energy(b, p)
        assert jko_objective(b, a, 0.1, p) == pytest.approx(want)

    def test_errors(self):
        p = EnergyParams()
        with pytest.raises(ResolutionError):
            jko_objective(QuantileMeasure([0.0, 1.0]), QuantileMeasure([0.0]), 0.1, p)
        with pytest.raises(ValueError):
            jko_objective(QuantileMeasure([0.0, 1.0]), QuantileMeasure([0.0, 1.0]), 0.0, p)
        assert jko_objective(QuantileMeasure([0.0, 0.0]), QuantileMeasure([0.0, 1.0]), 0.1, p) == SATURATED


class TestFlow:
    @pytest.fixture
    def traj(self):
        p = EnergyParams(0.05, 1.0, InteractionKernel.log(1.0))
        return run_flow(QuantileMeasure.uniform(-1, 1, 64), 40, JkoConfig(tau=0.05), p), p

    def test_bookkeeping(self, traj):
        t, _ = traj
        assert len(t) == 41 and len(t.energies) == len(t.times) == len(t.step_distances) == 41
        assert t.times[-1] == pytest.approx(2.0)
        assert t.step_distances[0] == 0.0
        assert t.dissipation_sums[-1] == pytest.approx(sum(d * d for d in t.step_distances) / 0.1)

    def test_energy_and_step_inequality(self, traj):
        t, _ = traj
        assert t.energy_monotone()
        assert t.step_inequality_violations() == []

    def test_dissipation_bound(self, traj):
        t, _ = traj
        rep = dissipation_report(t)
        assert rep.half_dissipation <= rep.energy_drop + 1e-9
        assert rep.ratio == pytest.approx(rep.dissipation / rep.energy_drop)
        assert 0.5 < rep.ratio < 1.5

    def test_state_at(self, traj):
        t, _ = traj
        assert t.state_at(0.0) == t.states[0]
        assert t.state_at(2.0) == t.final
        mid = t.state_at(0.075)
        np.testing.assert_allclose(mid.x, 0.5 * (t.states[1].x + t.states[2].x), atol=1e-14)
        with pytest.raises(ValueError):
            t.state_at(5.0)

    def test_contraction(self, rng):
        p = EnergyParams(0.0, 1.0, InteractionKernel.log(1.0))
        cfg = JkoConfig(tau=0.05)
        a = run_flow(QuantileMeasure.uniform(-1, 1, 64), 20, cfg, p)
        b = run_flow(QuantileMeasure.gaussian(0.5, 0.3, 64), 20, cfg, p)
        d0 = wasserstein2(a.states[0], b.states[0])
        for m in range(21):
            assert wasserstein2(a.states[m], b.states[m]) <= d0 * (1 + cfg.tau) ** (-m) * (1 + 1e-9)

    def test_validation(self):
        with pytest.raises(ValueError):
            run_flow(QuantileMeasure([0.0, 1.0]), 0, JkoConfig(), EnergyParams())

    def test_dissipation_report_edge_cases(self):
        t = FlowTrajectory(tau=0.1)
        with pytest.raises(ValueError):
            dissipation_report(t)
        q = QuantileMeasure([0.0, 1.0])
        t.append(0.0, q, 1.0)
        t.append(0.1, q, 1.0)
        assert dissipation_report(t).ratio == 1.0
        t.energies[0] = math.inf
        with pytest.raises(ValueError):
            dissipation_report(t)
