"""Shared fixtures and deterministic hypothesis settings."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from twistk import HermitianFormField, KahlerStructure, PeriodicGrid
from twistk.grid import euclid_mean_zero, make_trig_field, random_smooth_field

settings.register_profile(
    "suite",
    max_examples=25,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("suite")

EYE1 = np.eye(1, dtype=complex)
EYE2 = np.eye(2, dtype=complex)


@pytest.fixture(scope="session")
def grid32() -> PeriodicGrid:
    return PeriodicGrid(1, (32, 32))


@pytest.fixture(scope="session")
def grid16() -> PeriodicGrid:
    return PeriodicGrid(1, (16, 16))


@pytest.fixture(scope="session")
def grid64() -> PeriodicGrid:
    return PeriodicGrid(1, (64, 64))


@pytest.fixture(scope="session")
def grid8x4() -> PeriodicGrid:
    return PeriodicGrid(2, (8, 8, 8, 8))


@pytest.fixture(scope="session")
def flat32(grid32) -> KahlerStructure:
    return KahlerStructure(grid32, EYE1, np.zeros(grid32.shape))


@pytest.fixture(scope="session")
def alpha_flat32(grid32) -> HermitianFormField:
    return HermitianFormField.from_potential(grid32, EYE1)


@pytest.fixture(scope="session")
def alpha16(grid16) -> HermitianFormField:
    return HermitianFormField.from_potential(grid16, EYE1)


def seed_structure(grid: PeriodicGrid, terms) -> KahlerStructure:
    """Non-flat structure from trig seed terms on the identity class."""
    g0 = np.eye(grid.n, dtype=complex)
    pot = make_trig_field(grid, terms)
    return KahlerStructure(grid, g0, euclid_mean_zero(pot.values))


def random_pair(grid: PeriodicGrid, rng: np.random.Generator, *,
                pot_amp: float = 0.05, alpha_amp: float = 0.03,
                kmax: int = 1) -> tuple[KahlerStructure, HermitianFormField]:
    """Random non-flat metric and closed positive twist on one grid."""
    n = grid.n
    g0 = np.eye(n, dtype=complex)
    pot = random_smooth_field(grid, rng, amplitude=pot_amp, kmax=kmax)
    K = KahlerStructure(grid, g0, euclid_mean_zero(pot.values))
    base = np.eye(n, dtype=complex) * (1.0 + 0.2 * rng.uniform())
    if n == 2:
        off = 0.1 * (rng.normal() + 1j * rng.normal())
        base[0, 1] += off
        base[1, 0] += np.conj(off)
    apot = random_smooth_field(grid, rng, amplitude=alpha_amp, kmax=kmax)
    alpha = HermitianFormField.from_potential(grid, base, apot.values)
    assert alpha.min_eigenvalue() > 0.0
    return K, alpha


# strategies shared by the property tests: short mean-free trig sums that
# stay far from metric degeneracy at the amplitudes used

def wavevectors(naxes: int):
    return st.tuples(*([st.integers(min_value=-2, max_value=2)] * naxes)).filter(any)


def trig_terms(naxes: int, max_amplitude: float):
    term = st.tuples(
        st.floats(min_value=-max_amplitude, max_value=max_amplitude,
                  allow_nan=False, allow_infinity=False),
        wavevectors(naxes),
        st.floats(min_value=0.0, max_value=6.28, allow_nan=False),
    )
    return st.lists(term, min_size=1, max_size=4)
