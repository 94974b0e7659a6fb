"""Matrix-free linear operators attached to a Kahler structure.

Four kinds are provided, all acting on real potentials:

* ``twist``: phi -> (alpha, i d dbar phi) + Re(d tr(alpha), dbar phi),
  the second-order operator controlling twist corrections; self-adjoint
  with negative quadratic form and kernel exactly the constants.
* ``lichnerowicz``: phi -> Lap^2 phi + (Ric, i d dbar phi) + Re(d S, dbar phi),
  the fourth-order operator whose quadratic form is the squared norm of
  dbar grad^{1,0} phi.
* ``full_linearization``: the exact directional derivative of
  phi -> S(omega_phi) - R tr_{omega_phi}(alpha), namely
  -Lap^2 psi - (Ric, i d dbar psi) + R (alpha, i d dbar psi).
* ``shifted``: -lichnerowicz + R * twist, the self-adjoint model of the
  full linearization used for eigenvalue bounds and inner solves; the
  two agree up to gradient terms that vanish at exact solutions.

The twist kind is realised through its defining quadratic form

    sum_x psi * F(phi) * det(g) = -sum_x det(g) * alpha(xi_phi, conj xi_psi),

with xi_phi the (1,0)-gradient of phi, assembled so that discrete
summation by parts is exact: first-order multipliers are zeroed on every
mode that touches a Nyquist wavenumber, and those modes (which sit below
the resolution of the discretisation) are closed with the frozen
constant-coefficient symbol instead.  This makes the dense matrix of F
self-adjoint in the volume-weighted inner product to round-off, keeps
its kernel exactly the constants, and leaves the symbol of the flat
operator exact on every mode.  The fourth-order kinds use the direct
pointwise contractions; their departures from exact symmetry live on
the same unresolved modes and stay at the level of the coefficient
tails, which Krylov solves never see on resolved data.

Operators are realised as handles that precompute all pointwise
coefficient tensors once; each application then costs a handful of
FFTs.  Handles optionally project their output to volume mean zero so
Krylov iterations stay on the subspace where the operators are
definite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, RefusalError
from .geometry import HermitianFormField, KahlerStructure, volume_mean_zero
from .grid import ScalarField, PeriodicGrid

DENSE_POINT_CAP = 4096

KINDS = ("twist", "lichnerowicz", "full_linearization", "shifted")


def _hess_blocks(grid: PeriodicGrid, coeffs: np.ndarray) -> np.ndarray:
    out = np.empty((grid.n, grid.n) + grid.shape, dtype=complex)
    for j in range(grid.n):
        for k in range(j, grid.n):
            block = grid.ifft(coeffs * grid.hessian_multiplier(j, k))
            out[j, k] = block
            if k != j:
                out[k, j] = np.conj(block)
    return out


def _holo_blocks(grid: PeriodicGrid, coeffs: np.ndarray) -> np.ndarray:
    out = np.empty((grid.n,) + grid.shape, dtype=complex)
    for j in range(grid.n):
        out[j] = grid.ifft(coeffs * grid._holo_factor(j, False, odd=True))
    return out


def _masked_fft(grid: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    coeffs = grid.fft(values)
    if grid.dealias:
        coeffs = np.where(grid.dealias_mask(), coeffs, 0.0)
    return coeffs


def _laplacian_values(K: KahlerStructure, values: np.ndarray) -> np.ndarray:
    H = _hess_blocks(K.grid, _masked_fft(K.grid, values))
    return np.einsum("kj...,jk...->...", K.inverse, H).real


def _base_twist_matrix(alpha: HermitianFormField) -> np.ndarray:
    """Constant Hermitian matrix representing the twist class."""
    if alpha.base_matrix is not None:
        base = np.asarray(alpha.base_matrix, dtype=complex)
    else:
        axes = tuple(range(2, alpha.comps.ndim))
        base = alpha.comps.mean(axis=axes)
    return 0.5 * (base + base.conj().T)


def _closure_multiplier(grid: PeriodicGrid, g0: np.ndarray,
                        alpha: HermitianFormField) -> np.ndarray:
    """Frozen-coefficient twist symbol on Nyquist-touching modes.

    First-order multipliers vanish there by construction, so the weak
    form alone would put every such mode in the kernel; the constant
    coefficient symbol restores a strictly negative action on them.
    A twist class that fails to be positive falls back to the metric
    class, which only changes the operator on these unresolved modes.
    """
    a0 = _base_twist_matrix(alpha)
    scale = float(np.max(np.abs(a0)))
    if scale == 0.0:
        return np.zeros(grid.shape)
    if float(np.linalg.eigvalsh(a0)[0]) <= 1e-12 * scale:
        a0 = np.asarray(g0, dtype=complex)
    p0 = np.linalg.inv(np.asarray(g0, dtype=complex))
    pap0 = p0 @ a0 @ p0
    symbol = np.zeros(grid.shape, dtype=complex)
    for l in range(grid.n):
        for m in range(grid.n):
            symbol = symbol + pap0[l, m] * grid.hessian_multiplier(m, l)
    return np.where(grid.nyquist_mask(), symbol.real, 0.0)


@dataclass(frozen=True)
class LinearOperatorHandle:
    """Reusable matrix-free operator at a fixed (K, alpha, R).

    ``alpha`` is ignored by the lichnerowicz kind; ``R`` is ignored by
    the twist and lichnerowicz kinds.  With ``mean_zero`` set, outputs
    are projected to mean zero against the volume form of K (inputs are
    untouched: every kind annihilates constants exactly).
    """

    kind: str
    K: KahlerStructure
    alpha: HermitianFormField | None = None
    R: float = 0.0
    mean_zero: bool = False
    _ctx: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown operator kind {self.kind!r}; expected one of {KINDS}")
        if self.kind != "lichnerowicz" and self.alpha is None:
            raise DomainError(f"operator kind {self.kind!r} requires a twist form")
        K = self.K
        P = K.inverse
        grid = K.grid

        def grad_coeff(f_values: np.ndarray) -> np.ndarray:
            u = _holo_blocks(grid, _masked_fft(grid, f_values))
            return np.einsum("kj...,j...->k...", P, u)

        second = None
        grad = None
        bilap = 0.0
        weak = 0.0
        if self.kind in ("lichnerowicz", "full_linearization", "shifted"):
            pricp = np.einsum("lj...,jk...,km...->lm...", P, K.ricci(), P)

        if self.kind == "twist":
            weak = 1.0
        elif self.kind == "lichnerowicz":
            bilap = 1.0
            second = pricp
            grad = grad_coeff(K.scalar())
        elif self.kind == "full_linearization":
            pap = np.einsum("lj...,jk...,km...->lm...", P, self.alpha.comps, P)
            bilap = -1.0
            second = self.R * pap - pricp
        else:  # shifted
            bilap = -1.0
            second = -pricp
            grad = grad_coeff(-K.scalar())
            weak = self.R

        self._ctx["second"] = second
        self._ctx["grad"] = grad
        self._ctx["bilap"] = bilap
        self._ctx["weak"] = weak
        if weak:
            resolved = ~grid.nyquist_mask()
            n = grid.n
            self._ctx["tau"] = [
                grid._holo_factor(l, True, odd=False) * resolved for l in range(n)
            ]
            self._ctx["sigma"] = [
                grid._holo_factor(l, False, odd=False) * resolved for l in range(n)
            ]
            self._ctx["conj_inverse"] = np.conj(P)
            self._ctx["closure"] = _closure_multiplier(grid, K.g0, self.alpha)

    @property
    def grid(self) -> PeriodicGrid:
        return self.K.grid

    @property
    def weight(self) -> np.ndarray:
        return self.K.weight

    def _weak_twist(self, coeffs: np.ndarray) -> np.ndarray:
        """Twist action from its quadratic form; see the module docstring.

        With G_l = det(g) * sum_k alpha(xi, .)_k conj(g^{l kbar}), the
        output is (1/det g) * Re sum_l d_{z_l} G_l plus the closure term;
        summation by parts against the masked multipliers is exact, so
        the induced bilinear form is symmetric to round-off.
        """
        grid = self.grid
        P = self.K.inverse
        grads = np.empty((grid.n,) + grid.shape, dtype=complex)
        for l in range(grid.n):
            grads[l] = grid.ifft(coeffs * self._ctx["tau"][l])
        xi = np.einsum("lj...,l...->j...", P, grads)
        paired = np.einsum("jk...,j...->k...", self.alpha.comps, xi)
        flux = self.weight * np.einsum("k...,lk...->l...", paired, self._ctx["conj_inverse"])
        out_hat = self._ctx["closure"] * coeffs
        for l in range(grid.n):
            out_hat = out_hat + self._ctx["sigma"][l] * grid.fft(flux[l])
        if grid.dealias:
            out_hat = np.where(grid.dealias_mask(), out_hat, 0.0)
        return grid.ifft(out_hat).real / self.weight

    def apply(self, values: np.ndarray) -> np.ndarray:
        grid = self.grid
        coeffs = _masked_fft(grid, np.asarray(values, dtype=float))
        out = np.zeros(grid.shape)
        second = self._ctx["second"]
        bilap = self._ctx["bilap"]
        if second is not None or bilap:
            H = _hess_blocks(grid, coeffs)
            if second is not None:
                out = out + np.einsum("lm...,ml...->...", second, H).real
            if bilap:
                lap = np.einsum("kj...,jk...->...", self.K.inverse, H).real
                out = out + bilap * _laplacian_values(self.K, lap)
        grad = self._ctx["grad"]
        if grad is not None:
            g = _holo_blocks(grid, coeffs)
            out = out + np.einsum("k...,k...->...", grad, np.conj(g)).real
        weak = self._ctx["weak"]
        if weak:
            out = out + weak * self._weak_twist(coeffs)
        if self.mean_zero:
            out = volume_mean_zero(self.K, out)
        return out

    def quadratic_form(self, u: np.ndarray, v: np.ndarray | None = None) -> float:
        """Volume-weighted bilinear form sum u * apply(v) * det g."""
        if v is None:
            v = u
        w = self.weight
        return float(np.sum(u * self.apply(v) * w) / np.sum(w))


def apply_F(K: KahlerStructure, alpha: HermitianFormField, phi: ScalarField) -> ScalarField:
    """Twist operator (alpha, i d dbar phi) + Re(d tr(alpha), dbar phi)."""
    handle = LinearOperatorHandle("twist", K, alpha)
    return ScalarField(K.grid, handle.apply(phi.values))


def apply_lichnerowicz(K: KahlerStructure, phi: ScalarField) -> ScalarField:
    """Fourth-order operator Lap^2 + (Ric, i d dbar .) + Re(d S, dbar .)."""
    handle = LinearOperatorHandle("lichnerowicz", K)
    return ScalarField(K.grid, handle.apply(phi.values))


def apply_full_linearization(K: KahlerStructure, alpha: HermitianFormField, R: float,
                             psi: ScalarField) -> ScalarField:
    """Directional derivative of phi -> S(omega_phi) - R tr_{omega_phi} alpha.

    Equals -Lap^2 psi - (Ric, i d dbar psi) + R (alpha, i d dbar psi);
    the first-order gradient terms of the expanded form cancel exactly.
    At an exact solution this coincides with -lichnerowicz + R * twist.
    """
    handle = LinearOperatorHandle("full_linearization", K, alpha, R)
    return ScalarField(K.grid, handle.apply(psi.values))


def apply_shifted(K: KahlerStructure, alpha: HermitianFormField, R: float,
                  psi: ScalarField) -> ScalarField:
    """Self-adjoint operator -lichnerowicz + R * twist."""
    handle = LinearOperatorHandle("shifted", K, alpha, R)
    return ScalarField(K.grid, handle.apply(psi.values))


def dense_assemble(handle: LinearOperatorHandle) -> np.ndarray:
    """Dense matrix of the handle in the point basis (small grids only)."""
    npts = handle.grid.npoints
    if npts > DENSE_POINT_CAP:
        raise RefusalError(
            f"dense assembly refused: {npts} grid points exceeds cap {DENSE_POINT_CAP}"
        )
    shape = handle.grid.shape
    mat = np.empty((npts, npts))
    basis = np.zeros(npts)
    for p in range(npts):
        basis[p] = 1.0
        mat[:, p] = handle.apply(basis.reshape(shape)).ravel()
        basis[p] = 0.0
    return mat
