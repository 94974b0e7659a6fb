"""Run configuration: JSON schema, validation diagnostics, canonical form.

A config is a single JSON object.  Matrices are nested lists whose
entries are numbers or [re, im] pairs; potential seeds are lists of
{"amplitude": a, "wavevector": [k1, ...], "phase": p} terms evaluated
as a * cos(k . x + p) on any grid resolution.  Exactly one of
"t_schedule" (strictly increasing, in (0, 1]) and "R_schedule"
(positive, strictly monotone) may be given; scenarios fill a default
otherwise.

parse_config never repairs input: every problem becomes a diagnostic
with the key path and a best-effort line number, and all diagnostics
are reported together.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

from .errors import ConfigError

SCENARIOS = (
    "single_solve",
    "ladder_study",
    "continuity_sweep",
    "threshold",
    "twist_perturbation",
    "verify_suite",
)

_KNOWN_KEYS = {
    "scenario", "n", "sizes", "g0_omega", "g0_alpha", "omega_potential",
    "alpha_potential", "t_schedule", "R_schedule", "order", "newton_tol",
    "krylov_tol", "perturbation", "perturbation_steps", "seed", "out",
}

Term = tuple[float, tuple[int, ...], float]


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    n: int = 1
    sizes: tuple[int, ...] = (32, 32)
    g0_omega: tuple[tuple[complex, ...], ...] = ((1.0 + 0.0j,),)
    g0_alpha: tuple[tuple[complex, ...], ...] = ((1.0 + 0.0j,),)
    omega_potential: tuple[Term, ...] = ()
    alpha_potential: tuple[Term, ...] = ()
    t_schedule: tuple[float, ...] | None = None
    R_schedule: tuple[float, ...] | None = None
    order: int = 2
    newton_tol: float = 1e-9
    krylov_tol: float = 1e-10
    perturbation: Term | None = None
    perturbation_steps: int = 10
    seed: int = 0
    out: str = "runs/out"


def default_t_schedule(points: int = 20) -> tuple[float, ...]:
    """Evenly spaced path parameters ending exactly at t = 1."""
    step = (1.0 - 0.05) / (points - 1)
    values = tuple(0.05 + i * step for i in range(points - 1)) + (1.0,)
    return values


def default_config(scenario: str) -> RunConfig:
    """Filled-in defaults per scenario on the flat n=1 torus."""
    base = RunConfig(scenario=scenario, out=f"runs/{scenario}")
    if scenario == "single_solve":
        return replace(base, R_schedule=(100.0,),
                       alpha_potential=((0.2, (1, 0), 0.0),))
    if scenario == "ladder_study":
        # 0.3 cos(x) cos(y) as mean-free trig terms, with alpha the metric
        # form of the seed itself so the ladder hypothesis holds exactly
        product_seed = ((0.15, (1, 1), 0.0), (0.15, (1, -1), 0.0))
        return replace(base, R_schedule=(50.0, 100.0, 200.0, 400.0, 800.0),
                       order=3, omega_potential=product_seed,
                       alpha_potential=product_seed)
    if scenario == "continuity_sweep":
        return replace(base, t_schedule=default_t_schedule(),
                       alpha_potential=((0.2, (1, 0), 0.0),))
    if scenario == "threshold":
        return replace(base, R_schedule=(8.0,),
                       alpha_potential=((0.2, (1, 0), 0.0),))
    if scenario == "twist_perturbation":
        return replace(base, R_schedule=(100.0,),
                       perturbation=(0.2, (1, 0), 0.0))
    if scenario == "verify_suite":
        return base
    raise ConfigError([f"scenario: unknown scenario {scenario!r}"])


def _line_of(text: str, key: str) -> str:
    for lineno, line in enumerate(text.splitlines(), start=1):
        if f'"{key}"' in line:
            return f" (line {lineno})"
    return ""


def _as_complex(entry, where: str, diags: list[str], text: str) -> complex:
    if isinstance(entry, (int, float)) and not isinstance(entry, bool):
        return complex(float(entry), 0.0)
    if (isinstance(entry, list) and len(entry) == 2
            and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                    for v in entry)):
        return complex(float(entry[0]), float(entry[1]))
    diags.append(f"{where}: matrix entries must be numbers or [re, im] pairs"
                 f"{_line_of(text, where.split('[')[0])}")
    return complex(math.nan)


def _parse_matrix(data, key: str, n: int, diags: list[str],
                  text: str) -> tuple[tuple[complex, ...], ...]:
    if (not isinstance(data, list) or len(data) != n
            or any(not isinstance(row, list) or len(row) != n for row in data)):
        diags.append(f"{key}: must be an {n}x{n} matrix{_line_of(text, key)}")
        return tuple((complex(1.0),) * n for _ in range(n))
    rows = tuple(
        tuple(_as_complex(entry, f"{key}[{i}][{j}]", diags, text)
              for j, entry in enumerate(row))
        for i, row in enumerate(data)
    )
    for i in range(n):
        for j in range(n):
            if not (math.isfinite(rows[i][j].real) and math.isfinite(rows[i][j].imag)):
                return rows
            if abs(rows[i][j] - rows[j][i].conjugate()) > 1e-12:
                diags.append(f"{key}: not Hermitian at ({i},{j}){_line_of(text, key)}")
                return rows
    if n == 1:
        pd = rows[0][0].real > 0.0
    else:
        tr = rows[0][0].real + rows[1][1].real
        det = (rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]).real
        pd = tr > 0.0 and det > 0.0
    if not pd:
        diags.append(f"{key}: matrix must be positive definite{_line_of(text, key)}")
    return rows


def _parse_terms(data, key: str, naxes: int, diags: list[str],
                 text: str) -> tuple[Term, ...]:
    if not isinstance(data, list):
        diags.append(f"{key}: must be a list of terms{_line_of(text, key)}")
        return ()
    terms: list[Term] = []
    for idx, item in enumerate(data):
        where = f"{key}[{idx}]"
        if not isinstance(item, dict):
            diags.append(f"{where}: term must be an object{_line_of(text, key)}")
            continue
        unknown = set(item) - {"amplitude", "wavevector", "phase"}
        if unknown:
            diags.append(f"{where}: unknown term keys {sorted(unknown)}"
                         f"{_line_of(text, key)}")
        amp = item.get("amplitude")
        wav = item.get("wavevector")
        phase = item.get("phase", 0.0)
        ok = True
        if not isinstance(amp, (int, float)) or isinstance(amp, bool) \
                or not math.isfinite(float(amp)):
            diags.append(f"{where}.amplitude: must be a finite number"
                         f"{_line_of(text, key)}")
            ok = False
        if (not isinstance(wav, list) or len(wav) != naxes
                or any(not isinstance(w, int) or isinstance(w, bool) for w in wav)):
            diags.append(f"{where}.wavevector: must be {naxes} integers"
                         f"{_line_of(text, key)}")
            ok = False
        if not isinstance(phase, (int, float)) or isinstance(phase, bool) \
                or not math.isfinite(float(phase)):
            diags.append(f"{where}.phase: must be a finite number"
                         f"{_line_of(text, key)}")
            ok = False
        if ok:
            terms.append((float(amp), tuple(int(w) for w in wav), float(phase)))
    return tuple(terms)


def _parse_schedule(data, key: str, diags: list[str], text: str,
                    *, increasing_unit: bool) -> tuple[float, ...] | None:
    if not isinstance(data, list) or not data \
            or any(not isinstance(v, (int, float)) or isinstance(v, bool)
                   or not math.isfinite(float(v)) for v in data):
        diags.append(f"{key}: must be a non-empty list of finite numbers"
                     f"{_line_of(text, key)}")
        return None
    values = tuple(float(v) for v in data)
    if increasing_unit:
        if any(not 0.0 < v <= 1.0 for v in values):
            diags.append(f"{key}: entries must lie in (0, 1]{_line_of(text, key)}")
        if any(b <= a for a, b in zip(values, values[1:])):
            diags.append(f"{key}: must be strictly increasing{_line_of(text, key)}")
    else:
        if any(v <= 0.0 for v in values):
            diags.append(f"{key}: entries must be positive{_line_of(text, key)}")
        ups = [b > a for a, b in zip(values, values[1:])]
        if ups and any(ups) and not all(ups):
            diags.append(f"{key}: must be strictly monotone{_line_of(text, key)}")
    return values


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON config; raises ConfigError with all
    field-level diagnostics at once."""
    diags: list[str] = []
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError([f"json: {err.msg} (line {err.lineno})"]) from err
    if not isinstance(data, dict):
        raise ConfigError(["json: top level must be an object"])

    for key in sorted(set(data) - _KNOWN_KEYS):
        diags.append(f"{key}: unknown key{_line_of(text, key)}")

    scenario = data.get("scenario")
    if scenario not in SCENARIOS:
        diags.append(f"scenario: must be one of {', '.join(SCENARIOS)}"
                     f"{_line_of(text, 'scenario')}")
        raise ConfigError(diags)
    cfg = default_config(scenario)

    n = data.get("n", cfg.n)
    if n not in (1, 2):
        diags.append(f"n: must be 1 or 2{_line_of(text, 'n')}")
        n = 1
    naxes = 2 * n

    sizes = data.get("sizes")
    if sizes is None:
        sizes = (32,) * naxes if n == 1 else (12,) * naxes
    elif (not isinstance(sizes, list) or len(sizes) != naxes
            or any(not isinstance(s, int) or isinstance(s, bool) for s in sizes)):
        diags.append(f"sizes: must be {naxes} integers{_line_of(text, 'sizes')}")
        sizes = (32,) * naxes if n == 1 else (12,) * naxes
    else:
        sizes = tuple(int(s) for s in sizes)
        if any(s < 4 or s % 2 for s in sizes):
            diags.append(f"sizes: each size must be even and >= 4{_line_of(text, 'sizes')}")

    g0_omega = (_parse_matrix(data["g0_omega"], "g0_omega", n, diags, text)
                if "g0_omega" in data else tuple(
                    tuple(1.0 + 0.0j if i == j else 0.0j for j in range(n))
                    for i in range(n)))
    g0_alpha = (_parse_matrix(data["g0_alpha"], "g0_alpha", n, diags, text)
                if "g0_alpha" in data else g0_omega)

    omega_potential = (_parse_terms(data["omega_potential"], "omega_potential",
                                    naxes, diags, text)
                       if "omega_potential" in data else
                       tuple((a, k[:naxes] + (0,) * (naxes - len(k)), p)
                             for a, k, p in cfg.omega_potential))
    alpha_potential = (_parse_terms(data["alpha_potential"], "alpha_potential",
                                    naxes, diags, text)
                       if "alpha_potential" in data else
                       tuple((a, k[:naxes] + (0,) * (naxes - len(k)), p)
                             for a, k, p in cfg.alpha_potential))

    t_schedule = cfg.t_schedule
    R_schedule = cfg.R_schedule
    if "t_schedule" in data and "R_schedule" in data:
        diags.append("t_schedule: give either t_schedule or R_schedule, not both"
                     f"{_line_of(text, 't_schedule')}")
    elif "t_schedule" in data:
        t_schedule = _parse_schedule(data["t_schedule"], "t_schedule", diags,
                                     text, increasing_unit=True)
        R_schedule = None
    elif "R_schedule" in data:
        R_schedule = _parse_schedule(data["R_schedule"], "R_schedule", diags,
                                     text, increasing_unit=False)
        t_schedule = None

    order = data.get("order", cfg.order)
    if not isinstance(order, int) or isinstance(order, bool) or not 0 <= order <= 8:
        diags.append(f"order: must be an integer in [0, 8]{_line_of(text, 'order')}")
        order = cfg.order

    newton_tol = data.get("newton_tol", cfg.newton_tol)
    krylov_tol = data.get("krylov_tol", cfg.krylov_tol)
    for key, value in (("newton_tol", newton_tol), ("krylov_tol", krylov_tol)):
        if not isinstance(value, (int, float)) or isinstance(value, bool) \
                or not 0.0 < float(value) < 1.0:
            diags.append(f"{key}: must be a number in (0, 1){_line_of(text, key)}")

    perturbation = cfg.perturbation
    if "perturbation" in data:
        parsed = _parse_terms([data["perturbation"]], "perturbation", naxes,
                              diags, text)
        perturbation = parsed[0] if parsed else None

    steps = data.get("perturbation_steps", cfg.perturbation_steps)
    if not isinstance(steps, int) or isinstance(steps, bool) or steps < 1:
        diags.append("perturbation_steps: must be a positive integer"
                     f"{_line_of(text, 'perturbation_steps')}")
        steps = cfg.perturbation_steps

    seed = data.get("seed", cfg.seed)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        diags.append(f"seed: must be a non-negative integer{_line_of(text, 'seed')}")
        seed = cfg.seed

    out = data.get("out", cfg.out)
    if not isinstance(out, str) or not out:
        diags.append(f"out: must be a non-empty path string{_line_of(text, 'out')}")
        out = cfg.out

    if diags:
        raise ConfigError(diags)
    return RunConfig(scenario=scenario, n=n, sizes=sizes, g0_omega=g0_omega,
                     g0_alpha=g0_alpha, omega_potential=omega_potential,
                     alpha_potential=alpha_potential, t_schedule=t_schedule,
                     R_schedule=R_schedule, order=order,
                     newton_tol=float(newton_tol), krylov_tol=float(krylov_tol),
                     perturbation=perturbation, perturbation_steps=steps,
                     seed=seed, out=out)


def _matrix_to_json(matrix: tuple[tuple[complex, ...], ...]) -> list:
    return [[[entry.real, entry.imag] for entry in row] for row in matrix]


def _terms_to_json(terms) -> list:
    return [{"amplitude": a, "wavevector": list(k), "phase": p}
            for a, k, p in terms]


def config_to_dict(cfg: RunConfig) -> dict:
    """JSON-ready dict in canonical entry forms (matrices as [re, im])."""
    out: dict = {
        "scenario": cfg.scenario,
        "n": cfg.n,
        "sizes": list(cfg.sizes),
        "g0_omega": _matrix_to_json(cfg.g0_omega),
        "g0_alpha": _matrix_to_json(cfg.g0_alpha),
        "omega_potential": _terms_to_json(cfg.omega_potential),
        "alpha_potential": _terms_to_json(cfg.alpha_potential),
        "order": cfg.order,
        "newton_tol": cfg.newton_tol,
        "krylov_tol": cfg.krylov_tol,
        "perturbation_steps": cfg.perturbation_steps,
        "seed": cfg.seed,
        "out": cfg.out,
    }
    if cfg.t_schedule is not None:
        out["t_schedule"] = list(cfg.t_schedule)
    if cfg.R_schedule is not None:
        out["R_schedule"] = list(cfg.R_schedule)
    if cfg.perturbation is not None:
        out["perturbation"] = _terms_to_json([cfg.perturbation])[0]
    return out


def canonical_form(cfg: RunConfig) -> str:
    """Stable text form: parse(canonical_form(cfg)) == cfg."""
    return json.dumps(config_to_dict(cfg), sort_keys=True, indent=2) + "\n"
