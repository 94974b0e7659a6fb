"""Grid construction, transforms and spectral derivatives."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given

from twistk import PeriodicGrid, ScalarField
from twistk.errors import (
    DomainError,
    ShapeError,
    SolvabilityError,
    UnsupportedOrderError,
)
from twistk.grid import (
    complex_derivative,
    flat_laplacian_symbol,
    flat_poisson_solve,
    forward_transform,
    inverse_transform,
    make_trig_field,
    rms_norm,
    sobolev_norm,
    sup_norm,
)
from twistk.oracles import fd_complex_derivative

from conftest import EYE1, trig_terms


class TestConstruction:
    def test_axis_count_must_match_dimension(self):
        with pytest.raises(ShapeError):
            PeriodicGrid(1, (16, 16, 16))
        with pytest.raises(ShapeError):
            PeriodicGrid(2, (16, 16))

    def test_sizes_must_be_even_and_at_least_four(self):
        with pytest.raises(DomainError):
            PeriodicGrid(1, (15, 16))
        with pytest.raises(DomainError):
            PeriodicGrid(1, (2, 16))

    def test_dimension_must_be_one_or_two(self):
        with pytest.raises(DomainError):
            PeriodicGrid(3, (8,) * 6)

    def test_point_count_and_spacings(self):
        grid = PeriodicGrid(2, (8, 4, 6, 4))
        assert grid.npoints == 8 * 4 * 6 * 4
        assert grid.spacings() == tuple(2.0 * np.pi / s for s in grid.sizes)

    def test_nyquist_mask_counts_unresolved_modes(self):
        grid = PeriodicGrid(2, (6, 4, 8, 4))
        mask = grid.nyquist_mask()
        resolved = np.prod([s - 1 for s in grid.sizes])
        assert int((~mask).sum()) == resolved


class TestTransforms:
    def test_constant_field_maps_to_unit_coefficient(self, grid32):
        coeffs = grid32.fft(np.ones(grid32.shape))
        assert abs(coeffs[0, 0] - 1.0) <= 1e-14
        rest = coeffs.copy()
        rest[0, 0] = 0.0
        assert np.abs(rest).max() <= 1e-14

    def test_cosine_splits_into_conjugate_modes(self, grid32):
        x, _ = grid32.coordinates()
        coeffs = grid32.fft(np.cos(x) + np.zeros(grid32.shape))
        assert abs(coeffs[1, 0] - 0.5) <= 1e-14
        assert abs(coeffs[-1, 0] - 0.5) <= 1e-14

    def test_shape_mismatch_is_rejected(self, grid32):
        with pytest.raises(ShapeError):
            grid32.fft(np.zeros((16, 16)))
        with pytest.raises(ShapeError):
            grid32.ifft(np.zeros((16, 16), dtype=complex))

    @given(terms=trig_terms(2, 1.0))
    def test_round_trip_recovers_field(self, terms):
        grid = PeriodicGrid(1, (16, 16))
        f = make_trig_field(grid, terms)
        back = inverse_transform(forward_transform(f))
        scale = max(sup_norm(f.values), 1e-30)
        assert sup_norm(back.values - f.values) <= 1e-12 * scale

    @given(terms=trig_terms(2, 1.0))
    def test_parseval_identity(self, terms):
        grid = PeriodicGrid(1, (16, 16))
        f = make_trig_field(grid, terms)
        coeff_l2 = float(np.sqrt(np.sum(np.abs(grid.fft(f.values)) ** 2)))
        assert abs(coeff_l2 - rms_norm(f.values)) <= 1e-12 * max(coeff_l2, 1e-30)

    def test_sobolev_norm_at_zero_is_rms(self, grid32):
        rng = np.random.default_rng(3)
        f = ScalarField(grid32, rng.standard_normal(grid32.shape))
        assert abs(sobolev_norm(f, 0.0) - rms_norm(f.values)) <= 1e-12


class TestDerivatives:
    def test_mixed_second_derivative_of_cosine(self, grid32):
        x, _ = grid32.coordinates()
        f = ScalarField(grid32, np.cos(x) + np.zeros(grid32.shape))
        out = complex_derivative(f, (1,), (1,))
        assert sup_norm(out.real + 0.25 * np.cos(x) + np.zeros(grid32.shape)) <= 1e-12
        assert sup_norm(out.imag) <= 1e-12

    def test_derivative_of_constant_vanishes(self, grid32):
        f = ScalarField(grid32, np.full(grid32.shape, 2.5))
        assert sup_norm(complex_derivative(f, (1,), (1,))) <= 1e-13

    def test_mixed_pair_matches_finite_differences(self):
        # n=2 cross derivative d/dz1 d/dzbar2 of cos(x1)cos(y2); budget is
        # the 8th-order stencil truncation, far above round-off
        grid = PeriodicGrid(2, (16, 16, 16, 16))
        x1, _y1, _x2, y2 = grid.coordinates()
        values = np.cos(x1) * np.cos(y2) + np.zeros(grid.shape)
        f = ScalarField(grid, values)
        spectral = complex_derivative(f, (1, 0), (0, 1))
        fd = fd_complex_derivative(grid, values, (1, 0), (0, 1))
        assert np.abs(spectral - fd).max() <= 1e-6

    def test_cross_derivatives_are_conjugate_for_real_fields(self):
        grid = PeriodicGrid(2, (8, 8, 8, 8))
        rng = np.random.default_rng(5)
        f = ScalarField(grid, rng.standard_normal(grid.shape))
        one_two = complex_derivative(f, (1, 0), (0, 1))
        two_one = complex_derivative(f, (0, 1), (1, 0))
        assert np.abs(one_two - np.conj(two_one)).max() <= 1e-12

    def test_total_order_above_cap_is_rejected(self, grid16):
        f = ScalarField(grid16, np.zeros(grid16.shape))
        with pytest.raises(UnsupportedOrderError):
            complex_derivative(f, (3,), (2,))

    def test_multi_index_length_must_match(self, grid16):
        f = ScalarField(grid16, np.zeros(grid16.shape))
        with pytest.raises(ShapeError):
            complex_derivative(f, (1, 0), (0, 0))


class TestFlatPoisson:
    def test_cosine_mode(self, grid32):
        x, _ = grid32.coordinates()
        f = ScalarField(grid32, np.cos(x) + np.zeros(grid32.shape))
        u = flat_poisson_solve(f, EYE1)
        assert sup_norm(u.values + 4.0 * np.cos(x) + np.zeros(grid32.shape)) <= 1e-12

    def test_zero_maps_to_zero(self, grid32):
        u = flat_poisson_solve(ScalarField(grid32, np.zeros(grid32.shape)), EYE1)
        assert sup_norm(u.values) == 0.0

    def test_reapplication_inverts_solve(self):
        grid = PeriodicGrid(2, (8, 8, 8, 8))
        g0 = np.diag([2.0, 3.0]).astype(complex)
        rng = np.random.default_rng(11)
        f_values = rng.standard_normal(grid.shape)
        f_values -= f_values.mean()
        u = flat_poisson_solve(ScalarField(grid, f_values), g0)
        symbol = flat_laplacian_symbol(grid, g0)
        back = grid.ifft(symbol * grid.fft(u.values)).real
        assert sup_norm(back - f_values) <= 1e-10 * sup_norm(f_values)

    def test_mean_zero_is_required(self, grid32):
        with pytest.raises(SolvabilityError):
            flat_poisson_solve(ScalarField(grid32, np.ones(grid32.shape)), EYE1)

    def test_reference_matrix_must_be_positive(self, grid32):
        f = ScalarField(grid32, np.zeros(grid32.shape))
        with pytest.raises(DomainError):
            flat_poisson_solve(f, np.array([[-1.0 + 0.0j]]))


class TestFieldTypes:
    def test_non_finite_samples_are_rejected(self, grid16):
        values = np.zeros(grid16.shape)
        values[0, 0] = np.nan
        with pytest.raises(DomainError):
            ScalarField(grid16, values)

    def test_trig_field_matches_direct_evaluation(self):
        grid = PeriodicGrid(1, (16, 16))
        x, y = grid.coordinates()
        f = make_trig_field(grid, [(0.5, (1, -1), 0.3)])
        expected = 0.5 * np.cos(x - y + 0.3)
        assert sup_norm(f.values - expected) <= 1e-14

    def test_trig_field_rejects_short_wavevector(self, grid8x4):
        with pytest.raises(ShapeError):
            make_trig_field(grid8x4, [(1.0, (1, 0), 0.0)])
