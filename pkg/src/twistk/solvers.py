"""Matrix-free elliptic solves, eigenvalue and operator-norm estimates.

All variable-coefficient solves run on the subspace of fields with mean
zero against the volume form of the ambient Kahler structure, where the
relevant operators are definite.  Symmetric solves use conjugate
gradients in the volume-weighted inner product with a flat spectral
preconditioner (composed with 1/det g so it stays self-adjoint in that
inner product).  The non-symmetric Newton linearization is solved with
restarted GMRES.

Preconditioner symbols come from freezing coefficients at the constant
class representatives: the flat Laplacian for second-order solves and
the flat biLaplacian-shift L0^2 - R*L0 for the fourth-order shifted
operator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg

from .errors import IterationLimitError, PreconditionError, SolvabilityError
from .geometry import (
    HermitianFormField,
    KahlerStructure,
    trace_form,
    volume_average,
)
from .grid import ScalarField, flat_laplacian_symbol
from .operators import LinearOperatorHandle


@dataclass(frozen=True)
class KrylovConfig:
    """Shared knobs for the iterative solves.

    tol is the relative residual target in the volume-weighted RMS norm,
    maxiter caps total operator applications, restart is the GMRES
    restart length.  preconditioner is one of "auto",
    "flat-laplacian", "flat-bilaplacian-shift", "none".
    """

    tol: float = 1e-10
    maxiter: int = 2000
    restart: int = 50
    preconditioner: str = "auto"


@dataclass(frozen=True)
class EigenEstimate:
    """Eigenvalue estimate with its certified residual."""

    value: float
    residual: float
    iterations: int
    vector: ScalarField


def _weighted_rms(values: np.ndarray, w: np.ndarray, wsum: float) -> float:
    return math.sqrt(float(np.sum(values * values * w)) / wsum)


def _flat_inverse_multiplier(symbol: np.ndarray) -> np.ndarray:
    inv = np.zeros_like(symbol)
    nonzero = symbol != 0.0
    inv[nonzero] = 1.0 / symbol[nonzero]
    return inv


def _spd_preconditioner(K: KahlerStructure, kind: str, R: float):
    """Approximate inverse of the negated operator, self-adjoint in the
    volume-weighted inner product (flat spectral solve composed with
    division by det g)."""
    grid = K.grid
    if kind == "none":
        inv_mult = None
    else:
        L0 = flat_laplacian_symbol(grid, K.g0)
        if kind == "flat-laplacian":
            symbol = -L0
        elif kind == "flat-bilaplacian-shift":
            symbol = L0 * L0 - R * L0
        else:
            raise PreconditionError(f"unknown preconditioner kind {kind!r}")
        inv_mult = _flat_inverse_multiplier(symbol)
    w = K.weight
    wsum = float(np.sum(w))

    def project(v: np.ndarray) -> np.ndarray:
        return v - float(np.sum(v * w)) / wsum

    def apply(r: np.ndarray) -> np.ndarray:
        if inv_mult is None:
            return project(r / w)
        z = grid.ifft(grid.fft(r) * inv_mult).real
        return project(z / w)

    return apply, project


def _pcg(apply_A, b: np.ndarray, K: KahlerStructure, cfg: KrylovConfig,
         precond_kind: str, R: float = 0.0, what: str = "solve"):
    """Preconditioned CG in the volume-weighted inner product.

    apply_A must be self-adjoint positive definite on the volume-mean-zero
    subspace with respect to <u, v> = sum(u v det g).
    """
    w = K.weight
    wsum = float(np.sum(w))
    apply_M, project = _spd_preconditioner(K, precond_kind, R)

    def dot(u, v):
        return float(np.sum(u * v * w))

    b = project(b)
    bnorm = _weighted_rms(b, w, wsum)
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x, {"iterations": 0, "residual": 0.0, "history": []}
    r = b.copy()
    z = apply_M(r)
    p = z.copy()
    rz = dot(r, z)
    history: list[float] = []
    for i in range(1, cfg.maxiter + 1):
        Ap = apply_A(p)
        pAp = dot(p, Ap)
        if pAp <= 0.0:
            raise IterationLimitError(
                f"{what}: conjugate gradients met a non-positive curvature direction "
                f"(operator not positive definite on the subspace)", history)
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        if i % 50 == 0:
            r = project(b - apply_A(x))
        res = _weighted_rms(r, w, wsum) / bnorm
        history.append(res)
        if res <= cfg.tol:
            true_res = _weighted_rms(project(b - apply_A(x)), w, wsum) / bnorm
            if true_res <= 10.0 * cfg.tol:
                return project(x), {"iterations": i, "residual": true_res, "history": history}
            r = project(b - apply_A(x))
        z = apply_M(r)
        rz_new = dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise IterationLimitError(
        f"{what}: no convergence within {cfg.maxiter} iterations "
        f"(last relative residual {history[-1]:.3e})", history)


def _require_volume_mean_zero(K: KahlerStructure, f: ScalarField, what: str) -> None:
    mean = volume_average(K, f)
    sup = float(np.abs(f.values).max())
    if abs(mean) > 1e-9 * max(sup, 1e-300):
        raise SolvabilityError(
            f"{what}: right-hand side must have volume mean zero "
            f"(mean {mean:.3e} vs sup {sup:.3e})")


def green_solve(K: KahlerStructure, f: ScalarField, cfg: KrylovConfig = KrylovConfig()):
    """Solve Lap_omega G = f for the volume-mean-zero potential G.

    Returns (G, info) with iteration count, final relative residual and
    residual history.
    """
    _require_volume_mean_zero(K, f, "green_solve")
    kind = "flat-laplacian" if cfg.preconditioner == "auto" else cfg.preconditioner
    from .operators import _laplacian_values

    def apply_A(v):
        return -_laplacian_values(K, v)

    x, info = _pcg(apply_A, -f.values, K, cfg, kind, what="green_solve")
    return ScalarField(K.grid, x), info


def solve_F(K: KahlerStructure, alpha: HermitianFormField, f: ScalarField,
            cfg: KrylovConfig = KrylovConfig()):
    """Solve the twist-operator equation F(phi) = f for mean-zero phi.

    Requires the trace of alpha to be constant on the grid (the
    hypothesis under which F is the solvable model operator) and f to
    have volume mean zero.
    """
    tr = trace_form(K, alpha)
    c = volume_average(K, tr)
    dev = float(np.abs(tr.values - c).max())
    if dev > 1e-8 * max(1.0, abs(c)):
        raise PreconditionError(
            f"solve_F: trace of alpha deviates from constant by {dev:.3e}")
    _require_volume_mean_zero(K, f, "solve_F")
    handle = LinearOperatorHandle("twist", K, alpha, mean_zero=True)
    kind = "flat-laplacian" if cfg.preconditioner == "auto" else cfg.preconditioner

    def apply_A(v):
        return -handle.apply(v)

    x, info = _pcg(apply_A, -f.values, K, cfg, kind, what="solve_F")
    return ScalarField(K.grid, x), info


def solve_shifted(K: KahlerStructure, alpha: HermitianFormField, R: float,
                  f: ScalarField, cfg: KrylovConfig = KrylovConfig()):
    """Solve (-lichnerowicz + R * twist)(phi) = f on mean-zero fields.

    The operator is negative definite there for R >= 0; the solve runs
    conjugate gradients on its negation with the flat biLaplacian-shift
    preconditioner.
    """
    if R < 0.0:
        raise PreconditionError(f"solve_shifted requires R >= 0, got {R}")
    _require_volume_mean_zero(K, f, "solve_shifted")
    handle = LinearOperatorHandle("shifted", K, alpha, R, mean_zero=True)
    kind = "flat-bilaplacian-shift" if cfg.preconditioner == "auto" else cfg.preconditioner

    def apply_A(v):
        return -handle.apply(v)

    x, info = _pcg(apply_A, -f.values, K, cfg, kind, R=R, what="solve_shifted")
    return ScalarField(K.grid, x), info


def newton_linear_solve(K: KahlerStructure, alpha: HermitianFormField, R: float,
                        rhs: np.ndarray, cfg: KrylovConfig = KrylovConfig()):
    """Solve full_linearization(delta) = rhs with restarted GMRES.

    The full linearization is not self-adjoint away from solutions, so
    a generalized-residual method is used; input and output live on the
    volume-mean-zero subspace.
    """
    handle = LinearOperatorHandle("full_linearization", K, alpha, R, mean_zero=True)
    grid = K.grid
    w = K.weight
    wsum = float(np.sum(w))
    apply_M, project = _spd_preconditioner(K, "flat-bilaplacian-shift", R)
    b = project(np.asarray(rhs, dtype=float))
    bnorm = _weighted_rms(b, w, wsum)
    if bnorm == 0.0:
        return np.zeros_like(b), {"iterations": 0, "residual": 0.0, "history": []}

    shape = grid.shape
    npts = grid.npoints

    def matvec(v):
        return handle.apply(v.reshape(shape)).ravel()

    def mvec(v):
        # sign: the flat model of the linearization is the negated
        # biLaplacian-shift symbol, so the approximate inverse is negated
        return -apply_M(v.reshape(shape)).ravel()

    A = scipy.sparse.linalg.LinearOperator((npts, npts), matvec=matvec)
    M = scipy.sparse.linalg.LinearOperator((npts, npts), matvec=mvec)
    history: list[float] = []

    def callback(pr_norm):
        history.append(float(pr_norm))

    outer = max(1, math.ceil(cfg.maxiter / max(1, cfg.restart)))
    x, code = scipy.sparse.linalg.gmres(
        A, b.ravel(), rtol=cfg.tol / 10.0, atol=0.0, restart=cfg.restart,
        maxiter=outer, M=M, callback=callback, callback_type="pr_norm")
    x = project(x.reshape(shape))
    true_res = _weighted_rms(project(b - handle.apply(x)), w, wsum) / bnorm
    if code != 0 or true_res > 10.0 * cfg.tol:
        raise IterationLimitError(
            f"newton_linear_solve: GMRES stopped with code {code}, "
            f"relative residual {true_res:.3e}", history)
    return x, {"iterations": len(history), "residual": true_res, "history": history}


def extreme_eigenvalue(K: KahlerStructure, alpha: HermitianFormField, R: float,
                       cfg: KrylovConfig = KrylovConfig(), *, seed: int = 0,
                       residual_tol: float = 1e-8, maxiter: int = 100) -> EigenEstimate:
    """Eigenvalue of -lichnerowicz + R * twist closest to zero.

    Lanczos iteration on the inverse of the negated operator, conjugated
    by sqrt(det g) so that Euclidean symmetry matches symmetry in the
    volume-weighted inner product.  Each matrix action is one
    preconditioned CG solve; the Krylov subspace resolves the
    near-degenerate leading cluster that plain inverse iteration stalls
    on.  All eigenvalues are negative on the mean-zero subspace; the
    returned one is the largest, certified by the weighted-RMS residual
    ||L v - lambda v|| <= residual_tol * max(1, |lambda|).  maxiter caps
    Lanczos restart cycles.
    """
    handle = LinearOperatorHandle("shifted", K, alpha, R, mean_zero=True)
    grid = K.grid
    w = K.weight
    wsum = float(np.sum(w))
    root = np.sqrt(w)
    shape = grid.shape
    inner = KrylovConfig(tol=min(cfg.tol, 1e-11), maxiter=cfg.maxiter,
                         restart=cfg.restart, preconditioner=cfg.preconditioner)
    solves = 0

    def matvec(vec: np.ndarray) -> np.ndarray:
        nonlocal solves
        solves += 1
        rhs = vec.reshape(shape) / root
        rhs = rhs - float(np.sum(rhs * w)) / wsum
        sol, _ = solve_shifted(K, alpha, R, ScalarField(grid, rhs), inner)
        return (-root * sol.values).ravel()

    op = scipy.sparse.linalg.LinearOperator((grid.npoints, grid.npoints),
                                            matvec=matvec, dtype=float)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(grid.npoints)
    try:
        vals, vecs = scipy.sparse.linalg.eigsh(op, k=1, which="LA", v0=v0,
                                               tol=1e-12, maxiter=maxiter)
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        raise IterationLimitError(
            f"extreme_eigenvalue: Lanczos did not converge within {maxiter} "
            f"restart cycles ({solves} inner solves)", []) from exc
    mu = float(vals[0])
    if mu <= 0.0:
        raise IterationLimitError(
            f"extreme_eigenvalue: inverse operator produced a non-positive "
            f"Rayleigh value {mu:.3e} (operator not negative definite?)", [])
    v = vecs[:, 0].reshape(shape) / root
    v = v - float(np.sum(v * w)) / wsum
    v = v / _weighted_rms(v, w, wsum)
    Lv = handle.apply(v)
    value = float(np.sum(v * Lv * w) / np.sum(v * v * w))
    residual = _weighted_rms(Lv - value * v, w, wsum)
    if residual > residual_tol * max(1.0, abs(value)):
        raise IterationLimitError(
            f"extreme_eigenvalue: eigenpair residual {residual:.3e} above "
            f"{residual_tol:.1e} * max(1, |lambda|)", [residual])
    return EigenEstimate(value=value, residual=residual, iterations=solves,
                         vector=ScalarField(grid, v))


def inverse_norm_estimate(K: KahlerStructure, alpha: HermitianFormField, R: float,
                          cfg: KrylovConfig = KrylovConfig(), *, s: float = 4.0,
                          iterations: int = 12, seed: int = 0) -> float:
    """Proxy operator norm of the inverse shifted operator, L2 -> H^s.

    Power iteration for the composition f -> L^{-1} S_s L^{-1} f where
    S_s multiplies coefficients by (1+|k|^2)^s; the square root of the
    Rayleigh quotient estimates sup ||L^{-1} f||_s / ||f||_0.
    """
    grid = K.grid
    w = K.weight
    wsum = float(np.sum(w))
    weight_s = (1.0 + grid.wavenumber_square()) ** s
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(grid.shape)

    def project(v):
        return v - float(np.sum(v * w)) / wsum

    def solve(v):
        out, _ = solve_shifted(K, alpha, R, ScalarField(grid, project(v)), cfg)
        return out.values

    sigma = 0.0
    u = project(u)
    u /= math.sqrt(float(np.mean(u * u)))
    for _ in range(iterations):
        mid = solve(u)
        smooth = grid.ifft(grid.fft(mid) * weight_s).real
        cu = solve(smooth)
        rayleigh = float(np.mean(cu * u)) / float(np.mean(u * u))
        sigma = math.sqrt(max(rayleigh, 0.0))
        norm = math.sqrt(float(np.mean(cu * cu)))
        if norm == 0.0:
            break
        u = cu / norm
    return sigma
