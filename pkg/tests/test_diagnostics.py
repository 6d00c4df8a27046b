import math

import numpy as np
import pytest
from scipy import integrate

from wgflow import (
    Bump,
    EnergyParams,
    EnergyRangeError,
    EquilibriumKind,
    FitError,
    InteractionKernel,
    JkoConfig,
    MeasureError,
    QuantileMeasure,
    bound_violations,
    bump_family,
    characterization_residual,
    closed_form_equilibrium,
    fit_decay_rate,
    free_energy,
    inviscid_sweep,
    log_equilibrium_energy,
    minimize_energy,
    run_flow,
    semicircle_quantiles,
    wasserstein2,
    weak_residual,
)
from wgflow.diagnostics import (
    Constant,
    default_starts,
    default_test_functions,
    log_potential,
    reconstruction_mean,
    semicircle_cdf,
    semicircle_density,
)


class TestSemicircle:
    def test_density_integrates_to_one(self):
        for g in (0.2, 1.0, 3.0):
            R = math.sqrt(2 * g)
            mass, _ = integrate.quad(lambda x: float(semicircle_density(x, g)), -R, R)
            assert mass == pytest.approx(1.0, abs=1e-10)
            assert semicircle_cdf(-R, g) == pytest.approx(0.0, abs=1e-15)
            assert semicircle_cdf(R, g) == pytest.approx(1.0, abs=1e-15)

    def test_quantiles_invert_cdf(self):
        q = semicircle_quantiles(101, 0.7)
        np.testing.assert_allclose(semicircle_cdf(q.x, 0.7), (np.arange(101) + 0.5) / 101, atol=1e-10)
        np.testing.assert_array_equal(q.x, -q.x[::-1])

    def test_variance(self):
        # variance of a semicircle of radius R is R^2/4
        q = semicircle_quantiles(4000, 1.0)
        assert q.second_moment() == pytest.approx(0.5, abs=1e-3)

    def test_errors(self):
        with pytest.raises(MeasureError):
            semicircle_quantiles(1, 1.0)
        with pytest.raises(EnergyRangeError):
            semicircle_quantiles(4, 0.0)


class TestEquilibria:
    def test_closed_form(self):
        p = EnergyParams(0.0, 2.0, InteractionKernel.log(1.0, lambda_w=1.5))
        eq = closed_form_equilibrium(p, 64)
        assert eq.kind is EquilibriumKind.SEMICIRCLE
        assert eq.theta == pytest.approx(log_equilibrium_energy(2.0, 1.5))
        assert eq.state.x[-1] < math.sqrt(2 * 1.5 / 2.0)

    def test_closed_form_range(self):
        with pytest.raises(EnergyRangeError):
            closed_form_equilibrium(EnergyParams(0.1, 1.0), 16)
        with pytest.raises(EnergyRangeError):
            closed_form_equilibrium(EnergyParams(0.0, 1.0, InteractionKernel.power(0.5)), 16)

    def test_minimizer_matches_semicircle(self):
        p = EnergyParams(0.0, 1.0, InteractionKernel.log(1.0))
        eq = minimize_energy(p, 128)
        assert eq.converged
        assert wasserstein2(eq.state, semicircle_quantiles(128, 1.0)) < 5e-3
        assert eq.theta == pytest.approx(log_equilibrium_energy(1.0, 1.0), abs=5e-3)
        assert eq.spread < 1e-6
        assert len(eq.starts) == 3

    def test_minimizer_is_global(self, rng):
        p = EnergyParams(0.2, 1.0, InteractionKernel.power(0.5))
        eq = minimize_energy(p, 48)
        for _ in range(10):
            noise = np.sort(eq.state.x + 0.01 * rng.normal(size=48))
            assert free_energy(QuantileMeasure(noise), p) >= eq.theta

    def test_gaussian_equilibrium(self):
        # without interaction the minimizer is a Gaussian with variance kappa/alpha
        p = EnergyParams(0.5, 2.0, InteractionKernel.log(lambda_w=0.0))
        eq = minimize_energy(p, 256)
        assert wasserstein2(eq.state, QuantileMeasure.gaussian(0.0, 0.5, 256)) < 1e-2

    def test_requires_confinement(self):
        with pytest.raises(EnergyRangeError):
            minimize_energy(EnergyParams(0.0, 0.0), 16)

    def test_default_starts(self):
        s = default_starts(32, seed=3)
        assert len(s) == 3 and all(q.is_strict and q.n == 32 for q in s)
        assert default_starts(32, seed=3)[2] == s[2]

    def test_start_resolution_mismatch(self):
        with pytest.raises(MeasureError):
            minimize_energy(EnergyParams(), 16, starts=[QuantileMeasure.uniform(0, 1, 8)])


class TestCharacterization:
    def test_log_potential_matches_quadrature(self, rng):
        q = QuantileMeasure(np.sort(rng.normal(size=12)) + np.arange(12) * 1e-3)
        from wgflow import density_on_cells

        knots, vals = density_on_cells(q)
        for x in (q.x[3], 0.123, q.x[-1] + 2.0):
            want = sum(
                v * integrate.quad(lambda y: math.log(abs(x - y)), a, b, points=[x] if a < x < b else None)[0]
                for a, b, v in zip(knots[:-1], knots[1:], vals)
            )
            assert log_potential(q, [x])[0] == pytest.approx(want, abs=1e-9)

    def test_semicircle_potential_is_flat(self):
        rec = characterization_residual(semicircle_quantiles(512, 1.0), 1.0)
        assert rec.support_spread < 2e-2
        assert rec.support_constant == pytest.approx(0.5 + 0.5 * math.log(2.0), abs=2e-2)
        assert rec.off_support_margin > 0
        assert rec.candidate_constants["kernel_gamma"] == pytest.approx(rec.support_constant, abs=2e-2)
        assert set(rec.candidate_constants) == {"kernel_gamma", "default_inverse_pi"}

    def test_non_equilibrium_is_not_flat(self):
        rec = characterization_residual(QuantileMeasure.uniform(-1, 1, 256), 1.0)
        assert rec.support_spread > 0.1

    def test_needs_density(self):
        with pytest.raises(MeasureError):
            characterization_residual(QuantileMeasure([0.0, 0.0]), 1.0)


class TestRateFit:
    def test_exact_exponential(self):
        t = np.linspace(0, 5, 200)
        fit = fit_decay_rate(t, 3.0 + 0.7 * np.exp(-2.0 * t), floor=3.0)
        assert fit.rate == pytest.approx(2.0, rel=1e-10)
        assert fit.intercept == pytest.approx(math.log(0.7), abs=1e-10)
        assert fit.residual < 1e-10
        assert fit.window == (40, 190)

    def test_noise_floor_is_cut(self):
        t = np.linspace(0, 20, 400)
        v = np.maximum(np.exp(-3.0 * t), 1e-13)
        fit = fit_decay_rate(t, v, min_gap=1e-10)
        assert fit.rate == pytest.approx(3.0, rel=1e-6)

    def test_errors(self):
        with pytest.raises(FitError):
            fit_decay_rate([0, 1], [1, 0.5])
        with pytest.raises(FitError):
            fit_decay_rate([0, 0, 1, 2, 3], np.ones(5))
        with pytest.raises(FitError):
            fit_decay_rate([0, 1, 2], [1, 2])


class TestSweep:
    def test_distances_shrink_with_kappa(self):
        p = EnergyParams(0.0, 1.0, InteractionKernel.log(1.0))
        table = inviscid_sweep(QuantileMeasure.gaussian(0, 0.5, 48), [0.2, 0.05], 0.5, JkoConfig(tau=0.05), p)
        assert [r.kappa for r in table.rows] == [0.2, 0.05]
        assert table.is_monotone()
        assert table.shrink_factor() > 2
        assert len(table.reference) == 11

    def test_validation(self):
        p = EnergyParams()
        q = QuantileMeasure.uniform(0, 1, 8)
        with pytest.raises(ValueError):
            inviscid_sweep(q, [0.1, 0.2], 1.0, JkoConfig(), p)
        with pytest.raises(ValueError):
            inviscid_sweep(q, [0.1, -0.2], 1.0, JkoConfig(), p)
        with pytest.raises(MeasureError):
            inviscid_sweep(QuantileMeasure([0.0, 0.0]), [0.1], 1.0, JkoConfig(), p)


class TestWeakForm:
    def test_bump_derivatives(self):
        b = Bump(0.3, 0.8)
        x = np.linspace(-0.4, 1.0, 29)
        h = 1e-6
        np.testing.assert_allclose(b.dphi(x), (b.phi(x + h) - b.phi(x - h)) / (2 * h), atol=1e-7)
        np.testing.assert_allclose(b.d2phi(x), (b.dphi(x + h) - b.dphi(x - h)) / (2 * h), atol=1e-6)
        assert b.phi(np.array([0.3]))[0] == pytest.approx(1.0)
        assert b.phi(np.array([1.2]))[0] == 0.0

    def test_bump_family(self):
        fam = bump_family(-1, 1, 5, 1.5)
        assert [f.center for f in fam] == pytest.approx([-1, -0.5, 0, 0.5, 1])
        assert all(f.width == pytest.approx(0.75) for f in fam)

    def test_reconstruction_mean(self, rng):
        q = QuantileMeasure.uniform(-1, 1, 10)
        # uniform reconstruction on [-1, 1]
        assert reconstruction_mean(q, lambda y: y**2) == pytest.approx(1 / 3, abs=1e-14)
        assert reconstruction_mean(q, np.ones_like) == pytest.approx(1.0, abs=1e-14)

    def test_constant_test_function_has_no_residual(self):
        p = EnergyParams(0.3, 1.0, InteractionKernel.log(1.0))
        t = run_flow(QuantileMeasure.uniform(-1, 1, 32), 5, JkoConfig(tau=0.01), p)
        res = weak_residual(t, p, [Constant()])
        assert res.residual == 0.0

    def test_ou_flow(self):
        p = EnergyParams(1.0, 1.0, InteractionKernel.log(lambda_w=0.0))
        t = run_flow(QuantileMeasure.gaussian(0.5, 0.6, 256), 100, JkoConfig(tau=1e-3), p)
        assert weak_residual(t, p).residual < 1e-2

    def test_power_law_flow(self):
        p = EnergyParams(0.0, 1.0, InteractionKernel.power(0.5))
        t = run_flow(QuantileMeasure.uniform(-1, 1, 128), 100, JkoConfig(tau=1e-3), p)
        assert weak_residual(t, p).residual < 5e-2

    def test_default_functions_stay_in_bulk(self):
        p = EnergyParams(1.0, 1.0, InteractionKernel.log(lambda_w=0.0))
        t = run_flow(QuantileMeasure.gaussian(0, 1, 100), 3, JkoConfig(tau=1e-3), p)
        fns = default_test_functions(t)
        assert len(fns) == 5
        assert fns[0].center - fns[0].width >= t.states[0].x[2] - 1e-12
        assert fns[-1].center + fns[-1].width <= t.states[0].x[-3] + 1e-12

    def test_needs_three_states(self):
        p = EnergyParams()
        t = run_flow(QuantileMeasure.uniform(-1, 1, 8), 1, JkoConfig(), p)
        with pytest.raises(ValueError):
            weak_residual(t, p)


def test_bound_violations():
    p = EnergyParams(0.0, 1.0, InteractionKernel.log())
    assert bound_violations([0.2, 0.1, 0.5], p) == [1]
    assert bound_violations([-5.0], EnergyParams(0.0, 0.0)) == []
