"""Nonlinear layer: residuals, approximate-solution ladder, damped Newton,
continuation in the twist weight, and existence certificates.

The nonlinear problem solved throughout is

    S(omega_phi) - R * trace_{omega_phi}(alpha) = sbar - R * c

on a flat torus, with sbar and c the volume averages of the scalar
curvature and the trace (both cohomological, so the right-hand side is
known before solving).  The residual therefore always has volume mean
zero, which is what the linear solvers require.

The continuity-path parameter t in (0, 1] and the twist weight R are
related by R = (1 - t) / t; t = 1 is the untwisted equation.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateMetricError,
    IterationLimitError,
    PreconditionError,
    StagnationError,
    TwistkError,
    UnsupportedOrderError,
)
from .geometry import (
    HermitianFormField,
    KahlerStructure,
    scalar_curvature,
    trace_form,
    volume_average,
    volume_mean_zero,
)
from .grid import (
    PeriodicGrid,
    ScalarField,
    euclid_mean_zero,
    hessian,
    random_smooth_field,
    rms_norm,
    sobolev_norm,
    sup_norm,
)
from .operators import LinearOperatorHandle
from .solvers import (
    KrylovConfig,
    extreme_eigenvalue,
    green_solve,
    inverse_norm_estimate,
    newton_linear_solve,
    solve_F,
)

MAX_LADDER_ORDER = 8


@dataclass(frozen=True)
class SolverConfig:
    """Newton-stage knobs; Krylov settings ride along for inner solves."""

    newton_tol: float = 1e-9
    max_newton: int = 40
    min_step: float = 2.0 ** -20
    armijo: float = 0.25
    krylov: KrylovConfig = KrylovConfig()


def t_to_R(t: float) -> float:
    """Continuity-path parameter to twist weight; t = 1 maps to R = 0."""
    if not 0.0 < t <= 1.0:
        raise PreconditionError(f"path parameter must lie in (0, 1], got {t}")
    return (1.0 - t) / t


def R_to_t(R: float) -> float:
    if R < 0.0:
        raise PreconditionError(f"twist weight must be >= 0, got {R}")
    return 1.0 / (1.0 + R)


def twisted_residual(K: KahlerStructure, alpha: HermitianFormField,
                     R: float) -> tuple[ScalarField, float]:
    """Residual field of the twisted equation and the constant used.

    Returns (S - R * trace(alpha) - const, const) with
    const = sbar - R * c fixed by volume averages; the field has volume
    mean zero up to quadrature exactness.
    """
    S = scalar_curvature(K)
    tr = trace_form(K, alpha)
    sbar = volume_average(K, S)
    c = volume_average(K, tr)
    const = sbar - R * c
    values = S.values - R * tr.values - const
    return ScalarField(K.grid, values), const


@dataclass(frozen=True)
class PositivityReport:
    """Minimum pointwise eigenvalue of a form and whether it stayed positive."""

    positive: bool
    min_eigenvalue: float


def trivial_twist(K: KahlerStructure, alpha: HermitianFormField, R: float,
                  cfg: SolverConfig = SolverConfig(),
                  ) -> tuple[HermitianFormField, PositivityReport]:
    """Cohomologous twist that the given metric solves exactly at weight R.

    Solves Lap G = (S - sbar) - R*(trace(alpha) - c) and returns
    alpha + Hess(G) / R, which keeps the class of alpha while absorbing
    the whole residual: S - R * trace(alpha') is then the constant
    sbar - R*c.  The correction scales like 1/R, so positivity of the
    result degrades as R decreases; losing it is reported, not raised,
    since the construction only promises positivity for large R.
    """
    if R <= 0.0:
        raise PreconditionError(f"trivial_twist requires R > 0, got {R}")
    S = scalar_curvature(K)
    tr = trace_form(K, alpha)
    sbar = volume_average(K, S)
    c = volume_average(K, tr)
    # mean zero against the volume form holds as an identity; project so
    # round-off in the near-cancelling differences cannot obscure it
    rhs = ScalarField(K.grid, volume_mean_zero(K, (S.values - sbar) - R * (tr.values - c)))
    G, _ = green_solve(K, rhs, cfg.krylov)
    correction = G.values / R
    comps = alpha.comps + hessian(K.grid, correction)
    potential = None
    if alpha.potential is not None:
        potential = alpha.potential + correction
    twisted = HermitianFormField(K.grid, comps, base_matrix=alpha.base_matrix,
                                 potential=potential)
    worst = twisted.min_eigenvalue()
    return twisted, PositivityReport(positive=worst > 0.0, min_eigenvalue=worst)


@dataclass(frozen=True)
class ApproximateSolution:
    """Result of the order-by-order correction ladder."""

    structure: KahlerStructure
    corrections: tuple[ScalarField, ...]
    residual_sups: tuple[float, ...]
    constant: float
    R: float
    order: int


def build_approximate_solution(base: KahlerStructure, alpha: HermitianFormField,
                               R: float, order: int,
                               cfg: SolverConfig = SolverConfig()) -> ApproximateSolution:
    """Order-m approximate solution by repeated model-operator solves.

    Requires trace_{base}(alpha) constant: then the leading O(R) term of
    the residual vanishes at the seed and each solve of the frozen twist
    operator F against the current residual gains one power of 1/R.
    The i-th potential increment is delta_i / R with delta_i = O(R^{1-i}),
    so after m rungs the residual is O(R^{-m}).
    """
    if not isinstance(order, int) or order < 0 or order > MAX_LADDER_ORDER:
        raise UnsupportedOrderError(
            f"ladder order must be an integer in [0, {MAX_LADDER_ORDER}], got {order}")
    if R <= 0.0:
        raise PreconditionError(f"ladder requires R > 0, got {R}")
    tr = trace_form(base, alpha)
    c = volume_average(base, tr)
    dev = float(np.abs(tr.values - c).max())
    if dev > 1e-8 * max(1.0, abs(c)):
        raise PreconditionError(
            "ladder seed needs trace_{base}(alpha) constant "
            f"(deviation {dev:.3e}); pick the base metric proportional to alpha")

    grid = base.grid
    K = base
    psi = np.zeros(grid.shape)
    corrections: list[ScalarField] = []
    sups: list[float] = []
    residual, const = twisted_residual(K, alpha, R)
    sups.append(sup_norm(residual.values))
    for _ in range(order):
        # solvability at the frozen base: the equation's free constant
        # absorbs the residual mean taken against the base volume form
        rhs = volume_mean_zero(base, residual.values)
        delta, _ = solve_F(base, alpha, ScalarField(grid, -rhs), cfg.krylov)
        step = delta.values / R
        corrections.append(ScalarField(grid, step))
        psi = euclid_mean_zero(psi + step)
        K = KahlerStructure(grid, base.g0, euclid_mean_zero(base.potential + psi))
        residual, const = twisted_residual(K, alpha, R)
        sups.append(sup_norm(residual.values))
    return ApproximateSolution(structure=K, corrections=tuple(corrections),
                               residual_sups=tuple(sups), constant=const,
                               R=R, order=order)


@dataclass(frozen=True)
class NewtonReport:
    """Outcome of a damped Newton run.

    contraction is the last observed ratio of successive residual
    sup-norms (nan with fewer than two accepted steps).
    """

    converged: bool
    iterations: int
    residual_sup: float
    residual_l2: float
    constant: float
    structure: KahlerStructure
    history: tuple[dict, ...] = ()
    contraction: float = math.nan
    message: str = ""


def newton_solve(K0: KahlerStructure, alpha: HermitianFormField, R: float,
                 cfg: SolverConfig = SolverConfig(), *,
                 raise_on_failure: bool = True) -> NewtonReport:
    """Damped Newton iteration on the potential, warm-started at K0.

    Each step solves the full linearization with GMRES and backtracks on
    the sup-norm of the residual, halving the step until the decrease
    condition holds; steps that degenerate the metric are rejected the
    same way.  A step scale below cfg.min_step raises StagnationError
    (or reports failure when raise_on_failure is false).
    """
    grid = K0.grid
    K = K0
    phi = euclid_mean_zero(K0.potential)
    residual, const = twisted_residual(K, alpha, R)
    rsup = sup_norm(residual.values)
    history: list[dict] = []

    def report(converged: bool, message: str = "") -> NewtonReport:
        contraction = math.nan
        if len(history) >= 2 and history[-2]["residual_sup"] > 0.0:
            contraction = history[-1]["residual_sup"] / history[-2]["residual_sup"]
        return NewtonReport(converged=converged, iterations=len(history),
                            residual_sup=rsup, residual_l2=rms_norm(residual.values),
                            constant=const, structure=K, history=tuple(history),
                            contraction=contraction, message=message)

    try:
        for it in range(1, cfg.max_newton + 1):
            if rsup <= cfg.newton_tol:
                return report(True)
            delta, lin_info = newton_linear_solve(K, alpha, R, -residual.values,
                                                  cfg.krylov)
            scale = 1.0
            while True:
                if scale < cfg.min_step:
                    raise StagnationError(
                        f"newton_solve: line search stalled below {cfg.min_step:g} "
                        f"at residual {rsup:.3e}", [h["residual_sup"] for h in history])
                try:
                    K_new = KahlerStructure(grid, K0.g0,
                                            euclid_mean_zero(phi + scale * delta))
                except DegenerateMetricError:
                    scale *= 0.5
                    continue
                res_new, const_new = twisted_residual(K_new, alpha, R)
                sup_new = sup_norm(res_new.values)
                if sup_new <= (1.0 - cfg.armijo * scale) * rsup:
                    break
                scale *= 0.5
            phi = K_new.potential
            K = K_new
            residual, const = res_new, const_new
            rsup = sup_new
            history.append({"iteration": it, "residual_sup": rsup,
                            "step": scale, "linear_iterations": lin_info["iterations"]})
        if rsup <= cfg.newton_tol:
            return report(True)
        raise IterationLimitError(
            f"newton_solve: residual {rsup:.3e} above {cfg.newton_tol:g} after "
            f"{cfg.max_newton} iterations", [h["residual_sup"] for h in history])
    except (StagnationError, IterationLimitError, DegenerateMetricError) as err:
        if raise_on_failure:
            raise
        return report(False, message=str(err))


@dataclass(frozen=True)
class IFTCertificate:
    """Quantitative existence certificate around an approximate solution.

    If the sampled Lipschitz quotient of the linearization remainder
    stays below 1 / (2 * inverse_norm) on the H4 ball of radius
    lipschitz_radius, and the defect (L2 proxy norm of the residual) is
    below ball_radius = lipschitz_radius / (2 * inverse_norm), the
    Newton-type fixed point map is a contraction and an exact solution
    exists within the ball.  The Lipschitz bound is sampled, not proved,
    and the verdict says so: "certified", "not_certified" (inequality
    checked and false), or "inconclusive" (sampling budget exhausted
    before a usable radius was found).
    """

    defect: float
    inverse_norm: float
    lipschitz_quotient: float
    lipschitz_radius: float
    ball_radius: float
    verdict: str
    samples: int
    seed: int

    @property
    def certified(self) -> bool:
        return self.verdict == "certified"


def ift_certificate(K: KahlerStructure, alpha: HermitianFormField, R: float,
                    cfg: SolverConfig = SolverConfig(), *, radius: float = 0.5,
                    samples: int = 6, seed: int = 0,
                    max_halvings: int = 30) -> IFTCertificate:
    """Check the quantitative inverse-function-theorem inequality at K."""
    grid = K.grid
    residual, _ = twisted_residual(K, alpha, R)
    defect = sobolev_norm(residual, 0.0)
    inverse_norm = inverse_norm_estimate(K, alpha, R, cfg.krylov, seed=seed)
    handle = LinearOperatorHandle("full_linearization", K, alpha, R, mean_zero=True)
    base_values = residual.values

    def remainder(phi: np.ndarray) -> np.ndarray:
        K_phi = KahlerStructure(grid, K.g0, euclid_mean_zero(K.potential + phi))
        res_phi, _ = twisted_residual(K_phi, alpha, R)
        return res_phi.values - base_values - handle.apply(phi)

    rng = np.random.default_rng(seed)
    raw = [random_smooth_field(grid, rng, amplitude=1.0).values
           for _ in range(samples)]
    fractions = rng.uniform(0.3, 1.0, size=samples)
    target = 0.5 / inverse_norm

    r = radius
    lipschitz = math.inf
    for _ in range(max_halvings):
        fields = []
        for u, frac in zip(raw, fractions):
            h4 = sobolev_norm(ScalarField(grid, u), 4.0)
            fields.append(u * (r * frac / h4))
        try:
            values = [remainder(phi) for phi in fields]
            zero = np.zeros(grid.shape)
            pairs = [(phi, zero, q) for phi, q in zip(fields, values)]
            for i in range(len(fields) - 1):
                pairs.append((fields[i], fields[i + 1], values[i] - values[i + 1]))
            lipschitz = 0.0
            for phi_a, phi_b, diff in pairs:
                gap = sobolev_norm(ScalarField(grid, phi_a - phi_b), 4.0)
                if gap > 0.0:
                    lipschitz = max(lipschitz, rms_norm(diff) / gap)
        except DegenerateMetricError:
            r *= 0.5
            continue
        if lipschitz <= target:
            ball = r / (2.0 * inverse_norm)
            verdict = "certified" if defect < ball else "not_certified"
            return IFTCertificate(defect=defect, inverse_norm=inverse_norm,
                                  lipschitz_quotient=lipschitz,
                                  lipschitz_radius=r, ball_radius=ball,
                                  verdict=verdict, samples=samples, seed=seed)
        r *= 0.5
    return IFTCertificate(defect=defect, inverse_norm=inverse_norm,
                          lipschitz_quotient=lipschitz, lipschitz_radius=r,
                          ball_radius=r / (2.0 * inverse_norm),
                          verdict="inconclusive", samples=samples, seed=seed)


def perturb_twist(K: KahlerStructure, alpha_old: HermitianFormField,
                  alpha_new: HermitianFormField, R: float,
                  cfg: SolverConfig = SolverConfig(), *,
                  steps: int = 1, base_tol: float = 1e-8) -> tuple[NewtonReport, ...]:
    """Continue a solved metric to a perturbed twist at fixed weight.

    Requires K to solve the equation for alpha_old (residual sup below
    base_tol).  The twist is moved along the convex combination in
    `steps` increments, re-solving with Newton at each stage; convexity
    keeps every intermediate form positive when the endpoints are.
    Returns one report per attempted stage; continuation stops at the
    first non-converged stage, so the tuple length records progress.
    """
    residual, _ = twisted_residual(K, alpha_old, R)
    base_sup = sup_norm(residual.values)
    if base_sup > base_tol:
        raise PreconditionError(
            f"perturb_twist: base residual {base_sup:.3e} above {base_tol:g}; "
            "solve the base problem first")
    if steps < 1:
        raise PreconditionError(f"perturb_twist needs steps >= 1, got {steps}")
    reports: list[NewtonReport] = []
    current = K
    for j in range(1, steps + 1):
        s = j / steps
        comps = (1.0 - s) * alpha_old.comps + s * alpha_new.comps
        base_matrix = None
        potential = None
        if alpha_old.base_matrix is not None and alpha_new.base_matrix is not None:
            base_matrix = (1.0 - s) * alpha_old.base_matrix + s * alpha_new.base_matrix
        if alpha_old.potential is not None and alpha_new.potential is not None:
            potential = (1.0 - s) * alpha_old.potential + s * alpha_new.potential
        alpha_s = HermitianFormField(K.grid, comps, base_matrix=base_matrix,
                                     potential=potential)
        report = newton_solve(current, alpha_s, R, cfg, raise_on_failure=False)
        reports.append(report)
        if not report.converged:
            break
        current = report.structure
    return tuple(reports)


@dataclass(frozen=True)
class SweepStep:
    """One continuation step; wall_ms is measured, everything else is math."""

    step: int
    t: float
    R: float
    converged: bool
    residual_sup: float
    residual_l2: float
    lambda1: float
    newton_iters: int
    wall_ms: float
    warm_source: str


@dataclass(frozen=True)
class ContinuationReport:
    """Path record: per-step data, overall success, last converged metric.

    smallest_converged_R is the failure frontier summary (0.0 when the
    whole path through t = 1 converged, nan when nothing did).
    """

    steps: tuple[SweepStep, ...]
    success: bool
    structure: KahlerStructure | None
    smallest_converged_R: float = math.nan


def proportional_seed_potential(grid: PeriodicGrid, g0: np.ndarray,
                                alpha: HermitianFormField) -> np.ndarray | None:
    """Potential psi with alpha proportional to g0 + Hess(psi), if one exists.

    When alpha = s * (g0 + Hess(psi)) pointwise the trace of alpha in
    that metric is the constant s*n, which is exactly the ladder seed
    condition.  Returns None when alpha is not of this shape.
    """
    if alpha.base_matrix is None or alpha.potential is None:
        return None
    n = grid.n
    g0 = np.asarray(g0, dtype=complex)
    s = float(np.trace(alpha.base_matrix @ np.linalg.inv(g0)).real) / n
    if s <= 0.0:
        return None
    if not np.allclose(alpha.base_matrix, s * g0, rtol=0.0,
                       atol=1e-10 * max(1.0, float(np.abs(g0).max()))):
        return None
    return np.asarray(alpha.potential, dtype=float) / s


def continuity_sweep(grid: PeriodicGrid, g0: np.ndarray,
                     alpha: HermitianFormField, t_values,
                     cfg: SolverConfig = SolverConfig(), *,
                     ladder_order: int = 2, compute_eigen: bool = True,
                     eigen_seed: int = 0) -> ContinuationReport:
    """March the continuity path over increasing t with warm starts.

    The first step is seeded by the correction ladder when alpha is
    proportional to a metric in the ambient class (otherwise from the
    flat representative); each later step reuses the previous potential.
    Records residual norms, the extreme eigenvalue of the shifted
    operator and Newton statistics per step; non-converged steps are
    recorded and the sweep keeps marching from the last good potential,
    so the report maps the failure frontier.
    """
    t_list = [float(t) for t in t_values]
    if not t_list or any(b <= a for a, b in zip(t_list, t_list[1:])):
        raise PreconditionError("t_values must be strictly increasing and non-empty")
    seed_pot = proportional_seed_potential(grid, g0, alpha)
    warm = np.zeros(grid.shape) if seed_pot is None else euclid_mean_zero(seed_pot)
    warm_source = "flat" if seed_pot is None else "proportional-seed"

    steps: list[SweepStep] = []
    success = True
    structure = None
    smallest_R = math.nan
    for idx, t in enumerate(t_list):
        R = t_to_R(t)
        started = time.perf_counter()
        source = warm_source
        K_init = KahlerStructure(grid, g0, warm)
        if idx == 0 and ladder_order > 0 and R > 0.0:
            try:
                ladder = build_approximate_solution(K_init, alpha, R,
                                                    ladder_order, cfg)
                K_init = ladder.structure
                source = f"ladder[{ladder_order}]"
            except PreconditionError:
                pass
        report = newton_solve(K_init, alpha, R, cfg, raise_on_failure=False)
        lambda1 = math.nan
        if report.converged and compute_eigen:
            try:
                lambda1 = extreme_eigenvalue(report.structure, alpha, R,
                                             cfg.krylov, seed=eigen_seed).value
            except TwistkError:
                pass
        wall_ms = (time.perf_counter() - started) * 1000.0
        steps.append(SweepStep(step=idx, t=t, R=R, converged=report.converged,
                               residual_sup=report.residual_sup,
                               residual_l2=report.residual_l2, lambda1=lambda1,
                               newton_iters=report.iterations, wall_ms=wall_ms,
                               warm_source=source))
        if report.converged:
            warm = euclid_mean_zero(report.structure.potential)
            warm_source = "previous-step"
            structure = report.structure
            smallest_R = R if math.isnan(smallest_R) else min(smallest_R, R)
        else:
            # keep marching from the last good potential to map the frontier
            success = False
    return ContinuationReport(steps=tuple(steps), success=success,
                              structure=structure,
                              smallest_converged_R=smallest_R)


@dataclass(frozen=True)
class ThresholdEstimate:
    """Smallest-weight solvability estimate with a failure bracket.

    bracket = (largest failing R seen, smallest verified R); when every
    attempted weight down to and including R = 0 solves, both entries
    and the threshold are 0.0.
    """

    threshold: float
    bracket: tuple[float, float]
    attempts: tuple[dict, ...]


def estimate_R_threshold(grid: PeriodicGrid, g0: np.ndarray,
                         alpha: HermitianFormField, *, R_start: float = 8.0,
                         floor: float = 0.05, shrink: float = 0.5,
                         bisect_steps: int = 10,
                         cfg: SolverConfig = SolverConfig(),
                         ladder_order: int = 2) -> ThresholdEstimate:
    """Descend the twist weight geometrically and bracket the first failure.

    Warm starts carry the last solved potential downward.  If every
    weight down to `floor` and then R = 0 itself converge, the estimate
    is 0.0 with the degenerate bracket (0.0, 0.0); otherwise the failing
    interval is bisected geometrically for `bisect_steps` rounds.
    """
    if R_start <= 0.0 or not 0.0 < shrink < 1.0 or floor <= 0.0:
        raise PreconditionError("estimate_R_threshold: need R_start > 0, "
                                "0 < shrink < 1 and floor > 0")
    attempts: list[dict] = []

    def attempt(R: float, warm: np.ndarray, use_ladder: bool) -> NewtonReport:
        K_init = KahlerStructure(grid, g0, warm)
        if use_ladder and ladder_order > 0 and R > 0.0:
            try:
                ladder = build_approximate_solution(K_init, alpha, R,
                                                    ladder_order, cfg)
                K_init = ladder.structure
            except PreconditionError:
                pass
        report = newton_solve(K_init, alpha, R, cfg, raise_on_failure=False)
        attempts.append({"R": R, "converged": report.converged,
                         "residual_sup": report.residual_sup,
                         "newton_iters": report.iterations})
        return report

    seed_pot = proportional_seed_potential(grid, g0, alpha)
    warm = np.zeros(grid.shape) if seed_pot is None else euclid_mean_zero(seed_pot)
    report = attempt(R_start, warm, use_ladder=True)
    if not report.converged:
        return ThresholdEstimate(threshold=R_start,
                                 bracket=(R_start, math.inf),
                                 attempts=tuple(attempts))
    warm = euclid_mean_zero(report.structure.potential)

    R_ok = R_start
    warm_ok = warm
    R = R_start * shrink
    failed_at = None
    while R > floor:
        report = attempt(R, warm_ok, use_ladder=False)
        if report.converged:
            R_ok = R
            warm_ok = euclid_mean_zero(report.structure.potential)
        else:
            failed_at = R
            break
        R *= shrink
    if failed_at is None:
        report = attempt(0.0, warm_ok, use_ladder=False)
        if report.converged:
            return ThresholdEstimate(threshold=0.0, bracket=(0.0, 0.0),
                                     attempts=tuple(attempts))
        failed_at = 0.0
    lo, hi = failed_at, R_ok
    for _ in range(bisect_steps):
        mid = math.sqrt(lo * hi) if lo > 0.0 else 0.5 * hi
        report = attempt(mid, warm_ok, use_ladder=False)
        if report.converged:
            hi = mid
            warm_ok = euclid_mean_zero(report.structure.potential)
        else:
            lo = mid
    return ThresholdEstimate(threshold=hi, bracket=(lo, hi),
                             attempts=tuple(attempts))
