"""Uniform periodic grids on [0, 2*pi)^(2n) and spectral differentiation.

The torus carries complex coordinates z_j = x_j + i*y_j; real axes are
ordered (x_1, y_1, ..., x_n, y_n), so axis 2j is x_{j+1} and axis 2j+1
is y_{j+1}.  Holomorphic derivatives follow the convention

    d/dz_j    = (d/dx_j - i*d/dy_j) / 2,
    d/dzbar_j = (d/dx_j + i*d/dy_j) / 2,

realised as exact Fourier multipliers on integer wavenumbers.  For a
factor of odd order along a complex coordinate the Nyquist wavenumber is
zeroed (the standard choice for real-output spectral differentiation);
even-order factors keep the full wavenumber so that second-order
contractions such as the flat Laplacian have kernel exactly the
constants on the grid.

Transforms are normalised so that a constant field has coefficient 1 at
wavevector zero, which makes the coefficient l2 norm equal to the grid
root-mean-square norm (discrete Parseval).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import DomainError, ShapeError, SolvabilityError, UnsupportedOrderError

_WORKERS = 1

MAX_DERIVATIVE_ORDER = 4


def set_fft_workers(count: int) -> None:
    """Set the worker count used by all FFTs in this process."""
    global _WORKERS
    if int(count) < 1:
        raise DomainError(f"fft worker count must be >= 1, got {count}")
    _WORKERS = int(count)


def fft_workers() -> int:
    return _WORKERS


def _axis_shape(length: int, axis: int, ndim: int) -> tuple[int, ...]:
    shape = [1] * ndim
    shape[axis] = length
    return tuple(shape)


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid over [0, 2*pi)^(2n) with cached wavenumber tables.

    Parameters
    ----------
    n:
        Complex dimension, 1 or 2.
    sizes:
        Points per real axis, one entry per axis in the order
        (x_1, y_1, ..., x_n, y_n).  Each size must be even and >= 4.
    dealias:
        When True every spectral-derivative output is truncated by the
        2/3 rule.  Off by default; products of smooth well-resolved
        fields keep aliasing at the round-off floor without it.
    """

    n: int
    sizes: tuple[int, ...]
    dealias: bool = False
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.n not in (1, 2):
            raise DomainError(f"complex dimension must be 1 or 2, got {self.n}")
        sizes = tuple(int(s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        if len(sizes) != 2 * self.n:
            raise ShapeError(
                f"expected {2 * self.n} axis sizes for n={self.n}, got {len(sizes)}"
            )
        for s in sizes:
            if s < 4 or s % 2 != 0:
                raise DomainError(f"axis sizes must be even and >= 4, got {s}")

    # -- basic geometry -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.sizes

    @property
    def npoints(self) -> int:
        return int(np.prod(self.sizes))

    def spacings(self) -> tuple[float, ...]:
        return tuple(2.0 * math.pi / s for s in self.sizes)

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays, one per real axis."""
        ndim = len(self.sizes)
        out = []
        for a, s in enumerate(self.sizes):
            x = np.arange(s) * (2.0 * math.pi / s)
            out.append(x.reshape(_axis_shape(s, a, ndim)))
        return tuple(out)

    # -- wavenumber tables ----------------------------------------------

    def _axis_k(self, axis: int, odd: bool) -> np.ndarray:
        key = ("k", axis, odd)
        if key not in self._cache:
            s = self.sizes[axis]
            k = np.fft.fftfreq(s, d=1.0 / s)
            if odd:
                k = k.copy()
                k[s // 2] = 0.0
            self._cache[key] = k.reshape(_axis_shape(s, axis, len(self.sizes)))
        return self._cache[key]

    def _holo_factor(self, j: int, conjugate: bool, odd: bool) -> np.ndarray:
        """Multiplier for d/dz_j (or d/dzbar_j when conjugate=True)."""
        key = ("holo", j, conjugate, odd)
        if key not in self._cache:
            kx = self._axis_k(2 * j, odd)
            ky = self._axis_k(2 * j + 1, odd)
            sign = -1.0 if conjugate else 1.0
            self._cache[key] = 0.5 * (1j * kx + sign * ky)
        return self._cache[key]

    def wavenumber_square(self) -> np.ndarray:
        """Full-shape array of |k|^2 summed over all real axes."""
        if "ksq" not in self._cache:
            ksq = np.zeros(self.shape)
            for a in range(len(self.sizes)):
                ksq = ksq + self._axis_k(a, odd=False) ** 2
            self._cache["ksq"] = ksq
        return self._cache["ksq"]

    def dealias_mask(self) -> np.ndarray:
        """Boolean mask keeping modes inside the 2/3 ball per axis."""
        if "mask" not in self._cache:
            mask = np.ones(self.shape, dtype=bool)
            for a, s in enumerate(self.sizes):
                cut = s // 3
                mask &= np.abs(self._axis_k(a, odd=False)) <= cut
            self._cache["mask"] = mask
        return self._cache["mask"]

    def nyquist_mask(self) -> np.ndarray:
        """Boolean mask of modes with any axis at its Nyquist wavenumber.

        These are the modes on which first-order spectral derivatives
        cannot act with exact odd symmetry; operators built from
        summation by parts treat them separately.
        """
        if "nyquist" not in self._cache:
            mask = np.zeros(self.shape, dtype=bool)
            for a, s in enumerate(self.sizes):
                mask |= np.abs(self._axis_k(a, odd=False)) == s // 2
            self._cache["nyquist"] = mask
        return self._cache["nyquist"]

    def hessian_multiplier(self, j: int, k: int) -> np.ndarray:
        """Multiplier of d/dz_j d/dzbar_k (full wavenumbers, order 2)."""
        key = ("hess", j, k)
        if key not in self._cache:
            self._cache[key] = self._holo_factor(j, False, odd=False) * self._holo_factor(
                k, True, odd=False
            )
        return self._cache[key]

    def derivative_multiplier(self, dz: tuple[int, ...], dzbar: tuple[int, ...]) -> np.ndarray:
        """Multiplier of prod_j (d/dz_j)^dz[j] (d/dzbar_j)^dzbar[j].

        Along each complex coordinate the Nyquist wavenumber is zeroed
        when the combined order dz[j] + dzbar[j] is odd.
        """
        if len(dz) != self.n or len(dzbar) != self.n:
            raise ShapeError(f"multi-indices must have length n={self.n}")
        total = sum(dz) + sum(dzbar)
        if total > MAX_DERIVATIVE_ORDER:
            raise UnsupportedOrderError(
                f"total derivative order {total} exceeds cap {MAX_DERIVATIVE_ORDER}"
            )
        if min(dz) < 0 or min(dzbar) < 0:
            raise DomainError("derivative orders must be non-negative")
        mult = np.ones(self.shape, dtype=complex)
        for j in range(self.n):
            odd = (dz[j] + dzbar[j]) % 2 == 1
            if dz[j]:
                mult = mult * self._holo_factor(j, False, odd) ** dz[j]
            if dzbar[j]:
                mult = mult * self._holo_factor(j, True, odd) ** dzbar[j]
        return mult

    # -- transforms ------------------------------------------------------

    def fft(self, values: np.ndarray) -> np.ndarray:
        if values.shape != self.shape:
            raise ShapeError(f"field shape {values.shape} does not match grid {self.shape}")
        return scipy.fft.fftn(values, workers=_WORKERS) / self.npoints

    def ifft(self, coeffs: np.ndarray) -> np.ndarray:
        if coeffs.shape != self.shape:
            raise ShapeError(f"coefficient shape {coeffs.shape} does not match grid {self.shape}")
        return scipy.fft.ifftn(coeffs * self.npoints, workers=_WORKERS)

    def apply_multiplier(self, values: np.ndarray, mult: np.ndarray) -> np.ndarray:
        """Inverse transform of mult * fft(values), dealiased if enabled."""
        coeffs = self.fft(values)
        coeffs = coeffs * mult
        if self.dealias:
            coeffs = np.where(self.dealias_mask(), coeffs, 0.0)
        return self.ifft(coeffs)


@dataclass(frozen=True)
class ScalarField:
    """Real scalar samples on a periodic grid."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ShapeError(
                f"field shape {values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("field contains non-finite samples")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class SpectralCoeffs:
    """Complex Fourier coefficients on integer wavevectors."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != self.grid.shape:
            raise ShapeError(
                f"coefficient shape {values.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "values", values)


def forward_transform(f: ScalarField) -> SpectralCoeffs:
    """FFT normalised so a constant field maps to coefficient 1 at k=0."""
    return SpectralCoeffs(f.grid, f.grid.fft(f.values))


def inverse_transform(c: SpectralCoeffs) -> ScalarField:
    """Inverse FFT; the (round-off sized) imaginary residue is dropped."""
    return ScalarField(c.grid, c.grid.ifft(c.values).real)


def complex_derivative(f: ScalarField, dz: tuple[int, ...], dzbar: tuple[int, ...]) -> np.ndarray:
    """Spectral derivative prod_j (d/dz_j)^dz[j] (d/dzbar_j)^dzbar[j].

    Returns the complex sample array; for multi-indices with dz == dzbar
    the multiplier is real and the result is real up to round-off.
    """
    mult = f.grid.derivative_multiplier(tuple(dz), tuple(dzbar))
    return f.grid.apply_multiplier(f.values, mult)


def hessian(grid: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    """Complex Hessian H[j, k] = d/dz_j d/dzbar_k applied to values.

    Output has shape (n, n) + grid.shape and is pointwise Hermitian for
    real input.
    """
    coeffs = grid.fft(values)
    if grid.dealias:
        coeffs = np.where(grid.dealias_mask(), coeffs, 0.0)
    out = np.empty((grid.n, grid.n) + grid.shape, dtype=complex)
    for j in range(grid.n):
        for k in range(j, grid.n):
            block = grid.ifft(coeffs * grid.hessian_multiplier(j, k))
            out[j, k] = block
            if k != j:
                out[k, j] = np.conj(block)
    return out


def holo_gradient(grid: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    """Components d/dz_j of values (Nyquist zeroed), shape (n,) + grid.shape."""
    coeffs = grid.fft(values)
    if grid.dealias:
        coeffs = np.where(grid.dealias_mask(), coeffs, 0.0)
    out = np.empty((grid.n,) + grid.shape, dtype=complex)
    for j in range(grid.n):
        out[j] = grid.ifft(coeffs * grid._holo_factor(j, False, odd=True))
    return out


def _check_hermitian_matrix(g0: np.ndarray, n: int, what: str) -> np.ndarray:
    g0 = np.asarray(g0, dtype=complex)
    if g0.shape != (n, n):
        raise ShapeError(f"{what} must be {n}x{n}, got shape {g0.shape}")
    if not np.allclose(g0, g0.conj().T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(g0).max())):
        raise DomainError(f"{what} must be Hermitian")
    eigs = np.linalg.eigvalsh(g0)
    if eigs.min() <= 0.0:
        raise DomainError(f"{what} must be positive definite, eigenvalues {eigs}")
    return g0


def flat_laplacian_symbol(grid: PeriodicGrid, g0: np.ndarray) -> np.ndarray:
    """Fourier symbol of the constant-coefficient Laplacian sum g0^{jk} d_j d_kbar.

    Real, zero only at k = 0, strictly negative elsewhere.
    """
    g0 = _check_hermitian_matrix(g0, grid.n, "reference matrix g0")
    g0inv = np.linalg.inv(g0)
    sym = np.zeros(grid.shape, dtype=complex)
    for j in range(grid.n):
        for k in range(grid.n):
            sym = sym + g0inv[k, j] * grid.hessian_multiplier(j, k)
    return sym.real


def flat_poisson_solve(f: ScalarField, g0: np.ndarray) -> ScalarField:
    """Solve sum g0^{jk} d_j d_kbar u = f for mean-zero u on the grid modes.

    The right-hand side must have Euclidean grid mean zero (relative to
    its sup-norm); the k = 0 mode of the solution is set to zero.
    """
    sup = float(np.abs(f.values).max())
    mean = float(f.values.mean())
    if abs(mean) > 1e-12 * max(sup, 1e-300):
        raise SolvabilityError(
            f"flat Poisson right-hand side must be mean-zero, got mean {mean:.3e} vs sup {sup:.3e}"
        )
    sym = flat_laplacian_symbol(f.grid, g0)
    coeffs = f.grid.fft(f.values)
    out = np.zeros_like(coeffs)
    nonzero = sym != 0.0
    out[nonzero] = coeffs[nonzero] / sym[nonzero]
    return ScalarField(f.grid, f.grid.ifft(out).real)


def sobolev_norm(f: ScalarField | SpectralCoeffs, s: float) -> float:
    """Spectral proxy norm: sqrt(sum (1+|k|^2)^s |f_k|^2).

    At s = 0 this is the grid root-mean-square norm by Parseval.
    """
    if isinstance(f, ScalarField):
        coeffs = f.grid.fft(f.values)
    else:
        coeffs = f.values
    weight = (1.0 + f.grid.wavenumber_square()) ** s
    return float(np.sqrt(np.sum(weight * np.abs(coeffs) ** 2)))


def rms_norm(values: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.abs(values) ** 2)))


def sup_norm(values: np.ndarray) -> float:
    return float(np.abs(values).max())


def euclid_mean_zero(values: np.ndarray) -> np.ndarray:
    return values - values.mean()


def spectral_truncate(f: ScalarField) -> ScalarField:
    """Drop all modes outside the 2/3 ball (explicit dealias helper)."""
    coeffs = f.grid.fft(f.values)
    coeffs = np.where(f.grid.dealias_mask(), coeffs, 0.0)
    return ScalarField(f.grid, f.grid.ifft(coeffs).real)


def make_trig_field(grid: PeriodicGrid, terms) -> ScalarField:
    """Build sum_i a_i cos(k_i . x + phase_i) from (a, k, phase) terms.

    Each term is (amplitude, wavevector, phase) with the wavevector an
    integer tuple over the 2n real axes.  This is the seed format shared
    by configs, tests and refinement oracles: the same terms can be
    evaluated on any resolution.
    """
    coords = grid.coordinates()
    values = np.zeros(grid.shape)
    for amplitude, wavevector, phase in terms:
        wavevector = tuple(int(w) for w in wavevector)
        if len(wavevector) != len(grid.sizes):
            raise ShapeError(
                f"wavevector {wavevector} must have {len(grid.sizes)} components"
            )
        arg = np.zeros(grid.shape)
        for a, w in enumerate(wavevector):
            if w:
                arg = arg + w * coords[a]
        values = values + float(amplitude) * np.cos(arg + float(phase))
    return ScalarField(grid, values)


def random_trig_terms(rng: np.random.Generator, naxes: int, *, amplitude: float,
                      kmax: int = 2, nterms: int = 6) -> list[tuple[float, tuple[int, ...], float]]:
    """Random smooth-field seed terms with |k_a| <= kmax per axis.

    Amplitudes are scaled so the summed field has sup-norm of order
    `amplitude`.  Wavevectors avoid zero so every term is mean-free.
    """
    terms = []
    for _ in range(nterms):
        while True:
            k = tuple(int(v) for v in rng.integers(-kmax, kmax + 1, size=naxes))
            if any(k):
                break
        a = float(rng.normal()) * amplitude / nterms
        phase = float(rng.uniform(0.0, 2.0 * math.pi))
        terms.append((a, k, phase))
    return terms


def random_smooth_field(grid: PeriodicGrid, rng: np.random.Generator, *,
                        amplitude: float = 1.0, kmax: int = 2,
                        nterms: int = 6) -> ScalarField:
    """Deterministic (seeded) smooth random field: a short trig sum."""
    terms = random_trig_terms(rng, len(grid.sizes), amplitude=amplitude,
                              kmax=kmax, nterms=nterms)
    return make_trig_field(grid, terms)
