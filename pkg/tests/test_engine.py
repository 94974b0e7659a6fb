"""Continuity-path engine: residuals, ladder, Newton, certificates, sweeps."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from twistk import (
    HermitianFormField,
    KahlerStructure,
    KrylovConfig,
    R_to_t,
    SolverConfig,
    build_approximate_solution,
    continuity_sweep,
    estimate_R_threshold,
    ift_certificate,
    newton_solve,
    perturb_twist,
    proportional_seed_potential,
    t_to_R,
    trivial_twist,
    twisted_residual,
    volume_average,
)
from twistk.errors import (
    IterationLimitError,
    PreconditionError,
    UnsupportedOrderError,
)
from twistk.grid import sup_norm
from twistk.oracles import order_fit

from conftest import EYE1, EYE2, seed_structure, trig_terms

FAST = SolverConfig(newton_tol=1e-9, max_newton=20,
                    krylov=KrylovConfig(tol=1e-10, maxiter=400))


def product_seed(grid):
    """Structure from 0.3 cos(x) cos(y) with its own metric form as twist."""
    K = seed_structure(grid, [(0.15, (1, 1), 0.0), (0.15, (1, -1), 0.0)])
    alpha = HermitianFormField(grid, K.metric, base_matrix=K.g0,
                               potential=K.potential)
    return K, alpha


class TestPathMaps:
    def test_midpoint_and_endpoint(self):
        assert t_to_R(0.5) == 1.0
        assert t_to_R(1.0) == 0.0
        assert R_to_t(1.0) == 0.5
        assert R_to_t(0.0) == 1.0

    @given(t=st.floats(0.01, 1.0))
    def test_round_trip(self, t):
        assert abs(R_to_t(t_to_R(t)) - t) <= 1e-12

    def test_domain_errors(self):
        with pytest.raises(PreconditionError):
            t_to_R(0.0)
        with pytest.raises(PreconditionError):
            t_to_R(1.5)
        with pytest.raises(PreconditionError):
            R_to_t(-2.0)


class TestTwistedResidual:
    def test_flat_solves_exactly_n1(self, flat32, alpha_flat32):
        residual, const = twisted_residual(flat32, alpha_flat32, 7.0)
        assert sup_norm(residual.values) <= 1e-12
        assert abs(const - (-7.0)) <= 1e-12

    def test_flat_solves_exactly_n2(self, grid8x4):
        K = KahlerStructure(grid8x4, EYE2, np.zeros(grid8x4.shape))
        alpha = HermitianFormField.from_potential(grid8x4, EYE2)
        residual, const = twisted_residual(K, alpha, 7.0)
        assert sup_norm(residual.values) <= 1e-12
        assert abs(const - (-14.0)) <= 1e-12

    def test_zero_weight_returns_centred_curvature(self, grid32):
        K = seed_structure(grid32, [(0.3, (1, 0), 0.0)])
        alpha = HermitianFormField.from_potential(grid32, EYE1, K.potential)
        residual, const = twisted_residual(K, alpha, 0.0)
        assert sup_norm(residual.values - K.scalar()) <= 1e-8 * sup_norm(K.scalar())

    @given(terms=trig_terms(2, 0.05))
    def test_residual_has_volume_mean_zero(self, terms):
        from twistk import PeriodicGrid
        grid = PeriodicGrid(1, (16, 16))
        K = seed_structure(grid, terms)
        alpha = HermitianFormField.from_potential(grid, EYE1, K.potential)
        residual, const = twisted_residual(K, alpha, 11.0)
        mean = volume_average(K, residual)
        # round-off allowance: the constant subtraction cancels to machine
        # precision even when the residual itself is at round-off scale
        assert abs(mean) <= 1e-9 * sup_norm(residual.values) + 1e-13 * (1.0 + abs(const))


class TestTrivialTwist:
    def test_flat_input_is_returned_unchanged(self, flat32, alpha_flat32):
        twisted, report = trivial_twist(flat32, alpha_flat32, 100.0)
        assert np.array_equal(twisted.comps, alpha_flat32.comps)
        assert report.positive

    def test_nonpositive_weight_is_rejected(self, flat32, alpha_flat32):
        with pytest.raises(PreconditionError):
            trivial_twist(flat32, alpha_flat32, 0.0)

    def test_residual_is_absorbed_at_large_weight(self, grid16):
        K = seed_structure(grid16, [(0.3, (1, 0), 0.0)])
        alpha = HermitianFormField.from_potential(grid16, EYE1)
        twisted, report = trivial_twist(K, alpha, 50.0)
        residual, _ = twisted_residual(K, twisted, 50.0)
        assert sup_norm(residual.values) <= 1e-8
        assert report.positive
        assert report.min_eigenvalue > 0.0

    def test_positivity_fails_at_tiny_weight(self, grid16):
        K = seed_structure(grid16, [(0.3, (1, 0), 0.0)])
        alpha = HermitianFormField.from_potential(grid16, EYE1)
        _, report = trivial_twist(K, alpha, 1e-3)
        assert not report.positive
        assert report.min_eigenvalue <= 0.0


class TestLadder:
    def test_flat_seed_needs_no_corrections(self, flat32, alpha_flat32):
        sol = build_approximate_solution(flat32, alpha_flat32, 100.0, 3)
        assert len(sol.corrections) == 3
        assert all(sup_norm(c.values) == 0.0 for c in sol.corrections)
        assert sol.residual_sups[-1] <= 1e-14

    def test_non_proportional_twist_is_rejected(self, flat32, grid32):
        x, _ = grid32.coordinates()
        pot = 0.2 * np.cos(x) + np.zeros(grid32.shape)
        alpha = HermitianFormField.from_potential(grid32, EYE1, pot)
        with pytest.raises(PreconditionError):
            build_approximate_solution(flat32, alpha, 100.0, 2)

    def test_order_validation(self, flat32, alpha_flat32):
        for bad in (-1, 9, 2.5):
            with pytest.raises(UnsupportedOrderError):
                build_approximate_solution(flat32, alpha_flat32, 100.0, bad)
        with pytest.raises(PreconditionError):
            build_approximate_solution(flat32, alpha_flat32, 0.0, 2)

    def test_recorded_residuals_match_recomputation(self, grid32):
        K, alpha = product_seed(grid32)
        sol = build_approximate_solution(K, alpha, 100.0, 2, FAST)
        residual, const = twisted_residual(sol.structure, alpha, 100.0)
        recomputed = sup_norm(residual.values)
        assert abs(sol.residual_sups[-1] - recomputed) <= 1e-12 * max(recomputed, 1e-30)
        assert abs(sol.constant - const) <= 1e-12 * max(abs(const), 1e-30)
        assert len(sol.residual_sups) == 3

    def test_single_rung_gains_one_power(self, grid32):
        K, alpha = product_seed(grid32)
        Rs = (50.0, 100.0, 200.0)
        sups = [build_approximate_solution(K, alpha, R, 1, FAST).residual_sups[-1]
                for R in Rs]
        fit = order_fit(Rs, [s / R for s, R in zip(sups, Rs)])
        assert abs(fit.exponent - (-2.0)) <= 0.15

    def test_three_rungs_beat_one_by_thirty(self, grid32):
        K, alpha = product_seed(grid32)
        sup1 = build_approximate_solution(K, alpha, 100.0, 1, FAST).residual_sups[-1]
        sup3 = build_approximate_solution(K, alpha, 100.0, 3, FAST).residual_sups[-1]
        assert sup1 / sup3 >= 10.0 ** 1.5


class TestNewtonSolve:
    def test_flat_small_init_converges_to_zero_potential(self, grid32):
        x, _ = grid32.coordinates()
        K0 = KahlerStructure(grid32, EYE1,
                             1e-3 * np.cos(x) + np.zeros(grid32.shape))
        alpha = HermitianFormField.from_potential(grid32, EYE1)
        report = newton_solve(K0, alpha, 100.0, FAST)
        assert report.converged
        assert report.iterations <= 5
        assert report.residual_sup <= 1e-9
        assert sup_norm(report.structure.potential) <= 1e-7

    def test_budget_exhaustion_raises(self, grid32):
        K, alpha = product_seed(grid32)
        cfg = SolverConfig(newton_tol=1e-15, max_newton=1,
                           krylov=KrylovConfig(tol=1e-10, maxiter=400))
        with pytest.raises(IterationLimitError):
            newton_solve(K, alpha, 100.0, cfg)

    def test_failure_can_be_reported_instead(self, grid32):
        K, alpha = product_seed(grid32)
        cfg = SolverConfig(newton_tol=1e-15, max_newton=1,
                           krylov=KrylovConfig(tol=1e-10, maxiter=400))
        report = newton_solve(K, alpha, 100.0, cfg, raise_on_failure=False)
        assert not report.converged
        assert report.iterations == 1
        assert report.message != ""


class TestIFTCertificate:
    def test_flat_solution_is_certified(self, flat32, alpha_flat32):
        cert = ift_certificate(flat32, alpha_flat32, 100.0, FAST)
        assert cert.certified
        assert cert.verdict == "certified"
        assert cert.defect < cert.ball_radius
        assert cert.lipschitz_quotient <= 0.5 / cert.inverse_norm
        assert cert.ball_radius == cert.lipschitz_radius / (2.0 * cert.inverse_norm)

    def test_defect_shrinks_with_ladder_order(self, grid32):
        K, alpha = product_seed(grid32)
        defects = []
        for order in (1, 3):
            sol = build_approximate_solution(K, alpha, 200.0, order, FAST)
            cert = ift_certificate(sol.structure, alpha, 200.0, FAST)
            defects.append(cert.defect)
        assert defects[1] < defects[0]
        final = ift_certificate(
            build_approximate_solution(K, alpha, 200.0, 3, FAST).structure,
            alpha, 200.0, FAST)
        assert final.certified


class TestPerturbTwist:
    def test_identity_perturbation_needs_no_iterations(self, flat32, alpha_flat32):
        reports = perturb_twist(flat32, alpha_flat32, alpha_flat32, 100.0, FAST)
        assert len(reports) == 1
        assert reports[0].converged
        assert reports[0].iterations == 0

    def test_unsolved_base_is_rejected(self, grid32):
        K, alpha = product_seed(grid32)
        with pytest.raises(PreconditionError):
            perturb_twist(K, alpha, alpha, 100.0, FAST)

    def test_step_count_is_validated(self, flat32, alpha_flat32):
        with pytest.raises(PreconditionError):
            perturb_twist(flat32, alpha_flat32, alpha_flat32, 100.0, FAST,
                          steps=0)


class TestContinuitySweep:
    def test_t_values_must_increase(self, grid16, alpha16):
        with pytest.raises(PreconditionError):
            continuity_sweep(grid16, EYE1, alpha16, (0.7, 0.3), FAST)
        with pytest.raises(PreconditionError):
            continuity_sweep(grid16, EYE1, alpha16, (), FAST)

    def test_flat_path_reaches_endpoint(self, grid16, alpha16):
        report = continuity_sweep(grid16, EYE1, alpha16, (0.5, 1.0), FAST)
        assert report.success
        assert len(report.steps) == 2
        assert report.steps[0].warm_source == "ladder[2]"
        assert report.steps[1].warm_source == "previous-step"
        assert all(s.converged for s in report.steps)
        assert sup_norm(report.structure.potential) <= 1e-7
        assert report.smallest_converged_R == 0.0
        assert abs(report.steps[1].lambda1 - (-0.0625)) <= 1e-6

    def test_eigen_estimation_can_be_skipped(self, grid16, alpha16):
        report = continuity_sweep(grid16, EYE1, alpha16, (0.5,), FAST,
                                  ladder_order=0, compute_eigen=False)
        assert report.steps[0].warm_source == "flat"
        assert math.isnan(report.steps[0].lambda1)


class TestThresholdEstimate:
    def test_flat_threshold_is_zero(self, grid16, alpha16):
        estimate = estimate_R_threshold(grid16, EYE1, alpha16, R_start=8.0,
                                        floor=0.05, bisect_steps=4, cfg=FAST)
        assert estimate.threshold == 0.0
        assert estimate.bracket == (0.0, 0.0)
        assert all(a["converged"] for a in estimate.attempts)

    def test_parameters_are_validated(self, grid16, alpha16):
        for kwargs in ({"R_start": 0.0}, {"shrink": 1.2}, {"floor": 0.0}):
            with pytest.raises(PreconditionError):
                estimate_R_threshold(grid16, EYE1, alpha16, cfg=FAST, **kwargs)


class TestProportionalSeed:
    def test_scaled_class_recovers_potential(self, grid32):
        x, _ = grid32.coordinates()
        pot = 0.4 * np.cos(x) + np.zeros(grid32.shape)
        alpha = HermitianFormField.from_potential(grid32, 2.0 * EYE1, pot)
        psi = proportional_seed_potential(grid32, EYE1, alpha)
        assert psi is not None
        assert sup_norm(psi - pot / 2.0) <= 1e-12

    def test_non_proportional_class_returns_none(self, grid8x4):
        alpha = HermitianFormField.from_potential(
            grid8x4, np.diag([2.0, 3.0]).astype(complex),
            np.zeros(grid8x4.shape))
        assert proportional_seed_potential(grid8x4, EYE2, alpha) is None

    def test_unknown_potential_returns_none(self, grid32, alpha_flat32):
        assert proportional_seed_potential(grid32, EYE1, alpha_flat32) is None
