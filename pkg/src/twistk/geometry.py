"""Kahler structures on flat tori: metrics, curvature and pairings.

A Kahler structure in the class of a constant Hermitian matrix g0 is
stored through its real potential phi:

    g_{j kbar} = g0_{j kbar} + d/dz_j d/dzbar_k phi.

Index conventions: for a Hermitian matrix field G the inverse tensor is
g^{j kbar} = (G^{-1})[k, j], so the Laplacian g^{jk} f_{jk} is the
pointwise trace tr(G^{-1} Hess f), the trace of a (1,1)-form alpha is
tr(G^{-1} A), and the form pairing (alpha, beta) is tr(P A P B) with
P = G^{-1}.  With these choices (omega, i d dbar phi) equals the
Laplacian of phi identically.

Gradient pairings (d f, dbar h) take the real part of the Hermitian
contraction g^{jk} (d_j f)(d_kbar h); the operator identities consumed
downstream are exactly the real parts of their complex counterparts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateMetricError, DomainError, ShapeError
from .grid import (
    PeriodicGrid,
    ScalarField,
    _check_hermitian_matrix,
    hessian,
    holo_gradient,
)


def _hermitian_min_eigenvalue(comps: np.ndarray) -> np.ndarray:
    """Pointwise smallest eigenvalue of a (n,n)+shape Hermitian field."""
    n = comps.shape[0]
    if n == 1:
        return comps[0, 0].real
    tr = (comps[0, 0] + comps[1, 1]).real
    det = (comps[0, 0] * comps[1, 1] - comps[0, 1] * comps[1, 0]).real
    disc = np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0))
    return 0.5 * (tr - disc)


def _hermitian_det(comps: np.ndarray) -> np.ndarray:
    n = comps.shape[0]
    if n == 1:
        return comps[0, 0].real
    return (comps[0, 0] * comps[1, 1] - comps[0, 1] * comps[1, 0]).real


def _hermitian_inv(comps: np.ndarray, det: np.ndarray) -> np.ndarray:
    n = comps.shape[0]
    inv = np.empty_like(comps)
    if n == 1:
        inv[0, 0] = 1.0 / det
        return inv
    inv[0, 0] = comps[1, 1] / det
    inv[1, 1] = comps[0, 0] / det
    inv[0, 1] = -comps[0, 1] / det
    inv[1, 0] = -comps[1, 0] / det
    return inv


@dataclass(frozen=True)
class HermitianFormField:
    """Pointwise Hermitian (1,1)-form with optional closed provenance.

    Forms built by `from_potential` record the constant matrix and the
    real potential generating them; such forms are closed by
    construction and stay closed under the potential bookkeeping used
    throughout the solvers.
    """

    grid: PeriodicGrid
    comps: np.ndarray
    base_matrix: np.ndarray | None = None
    potential: np.ndarray | None = None

    def __post_init__(self):
        comps = np.asarray(self.comps, dtype=complex)
        n = self.grid.n
        if comps.shape != (n, n) + self.grid.shape:
            raise ShapeError(
                f"form components must have shape {(n, n) + self.grid.shape}, got {comps.shape}"
            )
        scale = max(float(np.abs(comps).max()), 1.0)
        for j in range(n):
            for k in range(j, n):
                if not np.allclose(comps[j, k], np.conj(comps[k, j]), rtol=0.0, atol=1e-10 * scale):
                    raise DomainError(f"form components ({j},{k}) are not Hermitian")
        object.__setattr__(self, "comps", comps)

    @classmethod
    def from_potential(cls, grid: PeriodicGrid, matrix: np.ndarray,
                       potential: np.ndarray | None = None) -> "HermitianFormField":
        """Closed form: constant matrix plus the complex Hessian of a potential."""
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.shape != (grid.n, grid.n):
            raise ShapeError(f"constant matrix must be {grid.n}x{grid.n}")
        comps = np.broadcast_to(
            matrix.reshape((grid.n, grid.n) + (1,) * len(grid.sizes)),
            (grid.n, grid.n) + grid.shape,
        ).copy()
        if potential is not None:
            pot = np.asarray(potential, dtype=float)
            comps = comps + hessian(grid, pot)
        else:
            pot = None
        return cls(grid, comps, base_matrix=matrix, potential=pot)

    @property
    def is_closed(self) -> bool:
        return self.base_matrix is not None

    def min_eigenvalue(self) -> float:
        return float(_hermitian_min_eigenvalue(self.comps).min())


@dataclass(frozen=True)
class KahlerStructure:
    """Metric g0 + Hess(potential) with eagerly cached pointwise algebra.

    Construction fails with the offending grid point if the candidate
    metric is not positive definite everywhere.
    """

    grid: PeriodicGrid
    g0: np.ndarray
    potential: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        g0 = _check_hermitian_matrix(self.g0, self.grid.n, "class matrix g0")
        object.__setattr__(self, "g0", g0)
        pot = np.asarray(self.potential, dtype=float)
        if pot.shape != self.grid.shape:
            raise ShapeError(
                f"potential shape {pot.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "potential", pot)

        comps = np.broadcast_to(
            g0.reshape((self.grid.n, self.grid.n) + (1,) * len(self.grid.sizes)),
            (self.grid.n, self.grid.n) + self.grid.shape,
        ) + hessian(self.grid, pot)
        mineig = _hermitian_min_eigenvalue(comps)
        worst = float(mineig.min())
        if worst <= 0.0:
            point = tuple(int(i) for i in np.unravel_index(int(mineig.argmin()), self.grid.shape))
            raise DegenerateMetricError(
                f"metric is not positive definite: eigenvalue {worst:.6e} at grid point {point}",
                point=point,
                eigenvalue=worst,
            )
        det = _hermitian_det(comps)
        self._cache["comps"] = comps
        self._cache["det"] = det
        self._cache["inv"] = _hermitian_inv(comps, det)
        self._cache["mineig"] = worst

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def metric(self) -> np.ndarray:
        return self._cache["comps"]

    @property
    def inverse(self) -> np.ndarray:
        return self._cache["inv"]

    @property
    def det(self) -> np.ndarray:
        return self._cache["det"]

    @property
    def weight(self) -> np.ndarray:
        """Volume weight per grid point (uniform quadrature times det g)."""
        return self._cache["det"]

    @property
    def min_eigenvalue(self) -> float:
        return self._cache["mineig"]

    def metric_form(self) -> HermitianFormField:
        return HermitianFormField.from_potential(self.grid, self.g0, self.potential)

    def log_det(self) -> np.ndarray:
        if "logdet" not in self._cache:
            self._cache["logdet"] = np.log(self.det)
        return self._cache["logdet"]

    def ricci(self) -> np.ndarray:
        """Ricci components -Hess(log det g), shape (n,n)+grid.shape."""
        if "ricci" not in self._cache:
            self._cache["ricci"] = -hessian(self.grid, self.log_det())
        return self._cache["ricci"]

    def scalar(self) -> np.ndarray:
        if "scalar" not in self._cache:
            self._cache["scalar"] = np.einsum(
                "kj...,jk...->...", self.inverse, self.ricci()
            ).real
        return self._cache["scalar"]


def metric_from_potential(grid: PeriodicGrid, g0: np.ndarray, phi: ScalarField) -> KahlerStructure:
    """Kahler structure for g0 + Hess(phi); errors on degeneracy."""
    if phi.grid is not grid and phi.grid != grid:
        raise ShapeError("potential lives on a different grid")
    return KahlerStructure(grid, g0, phi.values)


def ricci_form(K: KahlerStructure) -> HermitianFormField:
    """Ricci form of the metric; i d dbar-exact on the torus.

    Returned with closed provenance: zero constant matrix and potential
    -log det g, so each component has exact grid mean zero.
    """
    return HermitianFormField.from_potential(
        K.grid, np.zeros((K.n, K.n)), -K.log_det()
    )


def scalar_curvature(K: KahlerStructure) -> ScalarField:
    return ScalarField(K.grid, K.scalar())


def trace_form(K: KahlerStructure, alpha: HermitianFormField) -> ScalarField:
    """Metric trace g^{jk} alpha_{jk} (real for Hermitian alpha)."""
    vals = np.einsum("kj...,jk...->...", K.inverse, alpha.comps).real
    return ScalarField(K.grid, vals)


def laplacian(K: KahlerStructure, f: ScalarField) -> ScalarField:
    """Complex Laplacian g^{jk} d_j d_kbar f."""
    H = hessian(K.grid, f.values)
    vals = np.einsum("kj...,jk...->...", K.inverse, H).real
    return ScalarField(K.grid, vals)


def form_pairing(K: KahlerStructure, alpha: HermitianFormField,
                 beta: HermitianFormField) -> ScalarField:
    """Pointwise pairing (alpha, beta) = tr(P A P B), P the inverse metric.

    Real for Hermitian arguments; with alpha = omega it reduces to the
    metric trace of beta.
    """
    vals = np.einsum(
        "lj...,jk...,km...,ml...->...", K.inverse, alpha.comps, K.inverse, beta.comps
    ).real
    return ScalarField(K.grid, vals)


def gradient_pairing(K: KahlerStructure, f: ScalarField, h: ScalarField) -> ScalarField:
    """Real part of g^{jk} (d/dz_j f)(d/dzbar_k h)."""
    return ScalarField(K.grid, _gradient_pairing_values(K, f.values, h.values))


def _gradient_pairing_values(K: KahlerStructure, f: np.ndarray, h: np.ndarray) -> np.ndarray:
    u = holo_gradient(K.grid, f)
    v = holo_gradient(K.grid, h)
    return np.einsum("kj...,j...,k...->...", K.inverse, u, np.conj(v)).real


def volume_average(K: KahlerStructure, f: ScalarField | np.ndarray) -> float:
    """Average of f against the volume form of K (uniform weights times det g)."""
    vals = f.values if isinstance(f, ScalarField) else np.asarray(f)
    w = K.weight
    return float(np.sum(vals * w) / np.sum(w))


def volume_mean_zero(K: KahlerStructure, f: ScalarField | np.ndarray) -> np.ndarray:
    """Project to mean zero with respect to the volume form of K."""
    vals = f.values if isinstance(f, ScalarField) else np.asarray(f)
    return vals - volume_average(K, vals)


@dataclass(frozen=True)
class CohomologyData:
    """Class-level invariants of the pair ([omega], [alpha]) on the torus.

    The mean scalar curvature is zero (flat torus classes) and the
    twist constant c is the trace of the constant representative of
    alpha against the constant representative of omega; the solved
    equation's right-hand side constant is sbar - R * c.
    """

    sbar: float
    c: float

    @classmethod
    def of_classes(cls, g0_omega: np.ndarray, g0_alpha: np.ndarray) -> "CohomologyData":
        n = np.asarray(g0_omega).shape[0]
        g0 = _check_hermitian_matrix(g0_omega, n, "class matrix g0_omega")
        a0 = np.asarray(g0_alpha, dtype=complex)
        if a0.shape != (n, n):
            raise ShapeError(f"class matrix g0_alpha must be {n}x{n}")
        if not np.allclose(a0, a0.conj().T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(a0).max())):
            raise DomainError("class matrix g0_alpha must be Hermitian")
        c = float(np.trace(a0 @ np.linalg.inv(g0)).real)
        return cls(sbar=0.0, c=c)
