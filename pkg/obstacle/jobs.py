"""
obstacle/jobs.py — Scénarios et suite de vérification

Gère :
  - ScenarioConfig : lecture / validation d'un fichier JSON de scénario
  - run_scenario   : champ (résolu ou échantillonné) → analyses → rapports
  - verify_suite   : critères d'acceptation, niveau fast ou full
Codes de sortie : 0 tout passe, 1 échec numérique, 2 configuration invalide.
"""
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from obstacle.errors import ConfigError, LabError
from obstacle.frequency import FREQ_TOLERANCE, MONOTONE_SLACK
from obstacle.geometry import LAMBDA_WINDOW
from obstacle.solver import SolveParams

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

MODES          = ("solve", "sample")
ANALYSIS_TYPES = ("frequency", "identities", "blowup", "geometry")
LEVELS         = {"fast": 1 / 128, "full": 1 / 256}
LEVELS_3D      = {"fast": 1 / 32, "full": 1 / 64}
MAX_FB_CENTERS = 16

VERIFY_OMEGA = 1.95

# amplitude de h_{3+s} ajoutée à la trace Ψ_1 du scénario de blow-up en n=2
BLOWUP_CORRECTION = 0.4


# ─────────────────────────────────────────────
# CONFIGURATION
# ─────────────────────────────────────────────

@dataclass(frozen=True)
class ScenarioConfig:
    name:       str
    grid:       object
    boundary:   dict
    mode:       str = "solve"
    solver:     SolveParams = field(default_factory=SolveParams)
    analyses:   tuple = ()
    tolerances: dict = field(default_factory=dict)
    output:     Optional[str] = None
    write_dump: bool = True

    @classmethod
    def from_dict(cls, raw: dict, base_dir: str = "") -> "ScenarioConfig":
        from obstacle.weighted_grid import make_grid

        if not isinstance(raw, dict):
            raise ConfigError("Le scénario doit être un objet JSON")
        name = str(raw.get("name") or "scenario")

        g = _section(raw, "grid")
        try:
            grid = make_grid(g["ambient_dim"], g.get("half_width", 1.0), g["spacing"], g.get("a", 0.0))
        except KeyError as e:
            raise ConfigError(f"grid : champ manquant {e}") from e
        except (LabError, TypeError) as e:
            raise ConfigError(f"grid invalide : {e}") from e

        mode = raw.get("mode", "solve")
        if mode not in MODES:
            raise ConfigError(f"mode inconnu : {mode} (attendu {MODES})")

        boundary = _parse_boundary(_section(raw, "boundary"), grid, base_dir)

        s = raw.get("solver") or {}
        try:
            solver = SolveParams(
                relaxation_factor=float(s.get("relaxation_factor", SolveParams.relaxation_factor)),
                tolerance=float(s.get("tolerance", SolveParams.tolerance)),
                max_sweeps=s.get("max_sweeps"),
                sweep_order=s.get("sweep_order", "red-black"),
                init=s.get("init", "zero"),
            )
        except (LabError, TypeError) as e:
            raise ConfigError(f"solver invalide : {e}") from e

        tolerances = _parse_tolerances(raw.get("tolerances") or {})

        analyses = raw.get("analyses") or []
        if not isinstance(analyses, list):
            raise ConfigError("analyses doit être une liste")
        for i, item in enumerate(analyses):
            _check_analysis(i, item)

        output = raw.get("output")
        if output and base_dir and not os.path.isabs(output):
            output = os.path.join(base_dir, output)
        return cls(
            name=name,
            grid=grid,
            boundary=boundary,
            mode=mode,
            solver=solver,
            analyses=tuple(analyses),
            tolerances=tolerances,
            output=output,
            write_dump=bool(raw.get("write_dump", True)),
        )

    def restricted(self, types) -> "ScenarioConfig":
        """Même scénario, analyses limitées aux types donnés."""
        return replace(self, analyses=tuple(a for a in self.analyses if a["type"] in types))

    def to_dict(self) -> dict:
        boundary = dict(self.boundary)
        if "profile" in boundary:
            boundary["profile"] = boundary["profile"].to_dict()
        return {
            "name":       self.name,
            "grid":       self.grid.to_dict(),
            "boundary":   boundary,
            "mode":       self.mode,
            "solver":     self.solver.to_dict(),
            "analyses":   list(self.analyses),
            "tolerances": dict(self.tolerances),
        }


def _section(raw: dict, key: str) -> dict:
    value = raw.get(key)
    if not isinstance(value, dict):
        raise ConfigError(f"Section « {key} » manquante ou invalide")
    return value


def _parse_boundary(b: dict, grid, base_dir: str) -> dict:
    from obstacle.homogeneous import HomogeneousProfile, classify_lambda

    if "dump" in b:
        path = b["dump"]
        if base_dir and not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        if not os.path.isfile(path):
            raise ConfigError(f"Dump introuvable : {path}")
        return {"dump": path}

    family, m = b.get("profile"), b.get("m")
    if family is None and "lambda" in b:
        entry = classify_lambda(float(b["lambda"]), grid.s, 1e-9)
        if entry is None:
            raise ConfigError(f"λ = {b['lambda']} n'est pas une fréquence admissible (s = {grid.s})")
        family, m = entry["family"], entry["m"]
    if family is None or m is None:
        raise ConfigError("boundary : « profile » + « m », « lambda » ou « dump » attendu")
    direction = b.get("direction")
    if direction is None:
        direction = [1.0] + [0.0] * (grid.n - 1)
    elif "angle_deg" in b:
        raise ConfigError("boundary : direction et angle_deg sont exclusifs")
    if "angle_deg" in b:
        angle = math.radians(float(b["angle_deg"]))
        direction = [math.cos(angle), math.sin(angle)][: grid.n]
    try:
        profile = HomogeneousProfile(
            family=family, m=int(m), s=grid.s, direction=tuple(direction),
            amplitude=float(b.get("amplitude", 1.0)),
        )
        profile.thin_direction(grid.n)
    except (LabError, TypeError, ValueError) as e:
        raise ConfigError(f"boundary invalide : {e}") from e
    return {"profile": profile}


def _parse_tolerances(t: dict) -> dict:
    out = {
        "contact":         t.get("contact"),
        "grad":            t.get("grad"),
        "frequency":       t.get("frequency", FREQ_TOLERANCE),
        "monotone_slack":  t.get("monotone_slack", MONOTONE_SLACK),
        "lambda_window":   t.get("lambda_window", LAMBDA_WINDOW),
        "complementarity": t.get("complementarity", 1e-6),
    }
    for key, value in out.items():
        if value is None:
            continue
        try:
            value = float(value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Tolérance {key} non numérique : {value!r}") from e
        if not (value > 0 and math.isfinite(value)):
            raise ConfigError(f"Tolérance {key} doit être > 0 (reçu {value})")
        out[key] = value
    return out


def _check_analysis(i: int, item: dict):
    if not isinstance(item, dict) or item.get("type") not in ANALYSIS_TYPES:
        raise ConfigError(f"analyses[{i}] : type inconnu (attendu {ANALYSIS_TYPES})")
    kind = item["type"]
    if kind == "frequency":
        if "radii" not in item:
            raise ConfigError(f"analyses[{i}] : radii manquant")
    elif kind == "blowup":
        if not item.get("radii"):
            raise ConfigError(f"analyses[{i}] : radii manquant")
    elif kind == "identities":
        if "r" not in item:
            raise ConfigError(f"analyses[{i}] : r manquant")
    for key in ("tolerance", "lambda_tolerance", "max_residual", "max_rel"):
        if key in item and not (isinstance(item[key], (int, float)) and item[key] > 0):
            raise ConfigError(f"analyses[{i}] : {key} doit être > 0")


def load_scenario(path: str) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"Scénario introuvable : {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} : JSON invalide ({e})") from e
    return ScenarioConfig.from_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)))


# ─────────────────────────────────────────────
# RUN
# ─────────────────────────────────────────────

def _check(name: str, passed: bool, value=None, threshold=None, **extra) -> dict:
    out = {"name": name, "passed": bool(passed), "value": value, "threshold": threshold}
    out.update(extra)
    return out


def build_field(config: ScenarioConfig) -> tuple:
    """(champ, rapport du solveur ou None)."""
    from obstacle.homogeneous import embed_profile
    from obstacle.solver import psor_solve
    from obstacle.weighted_grid import read_field_dump

    spec = config.grid
    if "dump" in config.boundary:
        loaded = read_field_dump(config.boundary["dump"])
        if loaded.spec != spec:
            raise ConfigError(f"Le dump est sur la grille {loaded.spec}, le scénario sur {spec}")
        if config.mode == "sample":
            return loaded, None
        return psor_solve(spec, loaded, config.solver)
    profile = config.boundary["profile"]
    if config.mode == "sample":
        return embed_profile(profile, spec), None
    return psor_solve(spec, profile.evaluator(spec.n), config.solver)


class _Context:
    """Champ courant et ensembles extraits (calculés une seule fois)."""

    def __init__(self, config: ScenarioConfig, fld):
        self.config = config
        self.field  = fld
        self._sets  = None

    @property
    def sets(self):
        if self._sets is None:
            from obstacle.geometry import extract_sets
            tol = self.config.tolerances
            self._sets = extract_sets(self.field, tol.get("contact"), tol.get("grad"))
        return self._sets

    def center(self, spec_value):
        """Centre explicite ou « nearest_free_boundary »."""
        if spec_value in (None, "nearest_free_boundary"):
            pts = self.sets.free_boundary_points()
            if len(pts) == 0:
                raise LabError("Aucun point de frontière libre détecté")
            return pts[int(np.argmin(np.linalg.norm(pts, axis=1)))]
        return np.asarray(spec_value, dtype=float)


def _run_frequency(ctx: _Context, i: int, item: dict, out: dict) -> list:
    from core.reports import frequency_rows
    from obstacle.frequency import frequency_curve

    spec  = ctx.field.spec
    tol   = ctx.config.tolerances
    radii = [float(r) for r in item["radii"]]
    centers = item.get("centers", [[0.0] * spec.n])
    if centers == "free_boundary":
        limit = spec.half_width - spec.spacing
        pts = ctx.sets.free_boundary_points()
        pts = [p for p in pts if float(np.max(np.abs(p))) + max(radii) <= limit + 1e-12]
        if len(pts) > MAX_FB_CENTERS:
            idx = np.linspace(0, len(pts) - 1, MAX_FB_CENTERS).round().astype(int)
            pts = [pts[k] for k in idx]
        centers = pts
        if not centers:
            return [_check(f"frequency[{i}].centers", False, 0, 1, error="aucun centre admissible")]

    curves, checks = [], []
    for j, c in enumerate(centers):
        curve = frequency_curve(ctx.field, c, radii, slack=tol["monotone_slack"])
        curves.append(curve.to_dict())
        out["csv"][f"frequency_{i}_{j}"] = frequency_rows(curve)

        if "expected_lambda" in item:
            threshold = float(item.get("tolerance", tol["frequency"]))
            gap = max(abs(v - float(item["expected_lambda"])) for v in curve.I)
            checks.append(_check(f"frequency[{i}][{j}].lambda", gap <= threshold, gap, threshold))
        if item.get("monotone"):
            drop = max([v["drop"] for v in curve.violations], default=0.0)
            checks.append(_check(f"frequency[{i}][{j}].monotone", curve.monotone, drop,
                                 tol["monotone_slack"]))
        if "lower_bound" in item:
            lb = float(item["lower_bound"])
            checks.append(_check(f"frequency[{i}][{j}].lower_bound", curve.I[0] >= lb, curve.I[0], lb))
    out["analyses"].append({"type": "frequency", "curves": curves})
    return checks


def _run_identities(ctx: _Context, i: int, item: dict, out: dict) -> list:
    from obstacle.frequency import h_doubling_exponent, verify_frequency_identities

    spec = ctx.field.spec
    c    = item.get("center", [0.0] * spec.n)
    r    = float(item["r"])
    dr   = float(item.get("dr", 1e-3))
    res  = verify_frequency_identities(ctx.field, c, r, dr)
    max_rel = float(item.get("max_rel", 0.02))
    checks = [
        _check(f"identities[{i}].h_prime", res["h_identity_rel"] <= max_rel, res["h_identity_rel"], max_rel),
        _check(f"identities[{i}].d_prime", res["d_identity_rel"] <= max_rel, res["d_identity_rel"], max_rel),
    ]
    if "expected_lambda" in item:
        exponent = h_doubling_exponent(ctx.field, c, r)
        target = spec.n + spec.a + 2 * float(item["expected_lambda"])
        rel = abs(exponent - target) / target
        res["h_doubling_exponent"] = exponent
        checks.append(_check(f"identities[{i}].h_doubling", rel <= 0.03, rel, 0.03))
    out["analyses"].append({"type": "identities", **res})
    return checks


def _run_blowup(ctx: _Context, i: int, item: dict, out: dict) -> list:
    from obstacle.geometry import blowup_fit

    tol = ctx.config.tolerances
    c   = ctx.center(item.get("center"))
    fit = blowup_fit(ctx.field, c, item["radii"], ctx.sets, window=tol["lambda_window"])
    out["analyses"].append({"type": "blowup", **fit.to_dict()})
    out["csv"][f"blowup_{i}"] = (["r", "residual"], [[row["r"], row["residual"]] for row in fit.residuals])

    checks = []
    if "expected_lambda" in item:
        threshold = float(item.get("lambda_tolerance", 0.05))
        gap = abs(fit.lambda_estimate - float(item["expected_lambda"]))
        checks.append(_check(f"blowup[{i}].lambda", gap <= threshold, gap, threshold))
    if "max_residual" in item:
        threshold = float(item["max_residual"])
        value = fit.residual if fit.residual is not None else float("inf")
        checks.append(_check(f"blowup[{i}].residual", value <= threshold, value, threshold))
    if "expected_direction" in item:
        threshold = float(item.get("direction_tolerance_deg", 5.0))
        angle = _angle_deg(fit.direction, item["expected_direction"])
        checks.append(_check(f"blowup[{i}].direction", angle <= threshold, angle, threshold))
    return checks


def _angle_deg(u, v) -> float:
    if not len(u):
        return float("inf")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    cos = float(np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v)))
    return math.degrees(math.acos(max(-1.0, min(1.0, cos))))


def _run_geometry(ctx: _Context, i: int, item: dict, out: dict) -> list:
    from obstacle.geometry import jones_square, beta_profile, measure_from_fb, minkowski_profile, spine_and_stratum

    spec = ctx.field.spec
    fb   = ctx.sets
    window = item.get("window") or {"center": [0.0] * spec.n, "radius": 0.5}
    result = {"type": "geometry", "counts": fb.counts()}
    checks = []

    radii = item.get("minkowski_radii")
    if radii:
        rows = minkowski_profile(fb, (window["center"], window["radius"]), radii)
        result["minkowski"] = rows
        out["csv"][f"minkowski_{i}"] = (["r", "volume", "ratio"], [[w["r"], w["volume"], w["ratio"]] for w in rows])
        if "minkowski_bounds" in item:
            lo, hi = (float(v) for v in item["minkowski_bounds"])
            ratios = [w["ratio"] for w in rows]
            ok = all(lo <= v <= hi for v in ratios)
            checks.append(_check(f"geometry[{i}].minkowski", ok, max(ratios), hi, lower=lo))

    scales = item.get("scales")
    if scales:
        mu = measure_from_fb(fb)
        x = item.get("beta_center", window["center"])
        betas = beta_profile(mu, x, scales)
        result["beta_sq"] = betas
        result["jones"] = float(sum(betas))
        out["csv"][f"beta_{i}"] = (["r", "beta_sq"], [[r, b] for r, b in zip(scales, betas)])
        if "max_jones" in item:
            threshold = float(item["max_jones"])
            value = jones_square(mu, x, scales)
            checks.append(_check(f"geometry[{i}].jones", value <= threshold, value, threshold))

    if "stratum_center" in item or "expected_stratum" in item:
        c = ctx.center(item.get("stratum_center"))
        info = spine_and_stratum(ctx.field, fb, c)
        result["stratum"] = info
        if "expected_stratum" in item:
            checks.append(_check(f"geometry[{i}].stratum", info["stratum"] == item["expected_stratum"],
                                 info["stratum"], item["expected_stratum"]))
        if "expected_spine_dim" in item:
            checks.append(_check(f"geometry[{i}].spine_dim",
                                 info["spine_dim_estimate"] == int(item["expected_spine_dim"]),
                                 info["spine_dim_estimate"], int(item["expected_spine_dim"])))
    out["analyses"].append(result)
    return checks


_RUNNERS = {
    "frequency":  _run_frequency,
    "identities": _run_identities,
    "blowup":     _run_blowup,
    "geometry":   _run_geometry,
}


def run_scenario(config: ScenarioConfig, out_dir: str = None) -> dict:
    """
    Exécute le scénario et écrit les rapports. Renvoie le résumé
    (avec exit_code : 0 si tous les checks passent, 1 sinon, 2 si la configuration est invalide).
    """
    from core.reports import REPORT_DIR, emit_report

    out_dir = out_dir or config.output or os.path.join(REPORT_DIR, config.name)
    out = {"analyses": [], "csv": {}, "json": {}, "fields": {}}
    checks = []
    summary = {"scenario": config.name, "config": config.to_dict()}

    log.info(f"[Scénario] {config.name} : grille {config.grid.shape}, mode {config.mode}")
    try:
        fld, report = build_field(config)
    except ConfigError as e:
        log.error(f"[Scénario] {config.name} : {e}")
        summary.update({"checks": [_check("config", False, error=str(e))], "passed": False,
                        "exit_code": EXIT_USAGE})
        emit_report({"summary": summary}, out_dir)
        return summary
    except LabError as e:
        log.error(f"[Scénario] {config.name} : champ impossible à construire : {e}")
        summary.update({"checks": [_check("field", False, error=str(e))], "passed": False,
                        "exit_code": EXIT_FAIL})
        emit_report({"summary": summary}, out_dir)
        return summary

    if report is not None:
        summary["solve"] = report.to_dict()
        summary["solve"].pop("energy_history")
        out["csv"]["energy"] = (["sweep", "energy"], list(enumerate(report.energy_history)))
        worst = max(report.complementarity.values()) if report.complementarity else 0.0
        threshold = config.tolerances["complementarity"]
        checks.append(_check("solve.converged", report.converged, report.final_update, config.solver.tolerance))
        checks.append(_check("solve.complementarity", worst <= threshold, worst, threshold))
    if config.write_dump:
        out["fields"]["field"] = fld

    ctx = _Context(config, fld)
    for i, item in enumerate(config.analyses):
        try:
            checks.extend(_RUNNERS[item["type"]](ctx, i, item, out))
        except LabError as e:
            log.error(f"[Scénario] {item['type']}[{i}] en échec : {e}")
            checks.append(_check(f"{item['type']}[{i}]", False, error=str(e)))

    if ctx._sets is not None:
        out["json"]["thin_sets"] = ctx.sets.to_dict()
        tolerances = dict(config.tolerances)
        tolerances["contact_used"] = ctx.sets.contact_tol
        tolerances["grad_used"] = ctx.sets.grad_tol
        summary["config"]["tolerances"] = tolerances

    passed = all(c["passed"] for c in checks)
    summary.update({
        "analyses":  out["analyses"],
        "checks":    checks,
        "passed":    passed,
        "exit_code": EXIT_OK if passed else EXIT_FAIL,
    })
    for c in checks:
        if not c["passed"]:
            log.warning(f"[Scénario] Check en échec : {c['name']} (valeur {c.get('value')}, seuil {c.get('threshold')})")
    emit_report({"summary": summary, "csv": out["csv"], "json": out["json"], "fields": out["fields"]}, out_dir)
    return summary


# ─────────────────────────────────────────────
# SUITE DE VÉRIFICATION
# ─────────────────────────────────────────────

class _Suite:
    """Contexte partagé entre critères (champs résolus mis en cache)."""

    def __init__(self, level: str, beta_fn):
        from obstacle.geometry import beta_number

        self.level   = level
        self.h       = LEVELS[level]
        self.h3      = LEVELS_3D[level]
        self.beta_fn = beta_fn or beta_number
        self.cache   = {}

    def cached(self, key, build):
        if key not in self.cache:
            self.cache[key] = build()
        return self.cache[key]

    def psi1_solved_2d(self):
        """Ψ_1 comme donnée de bord, n=1, a=0, h=1/128."""
        from obstacle.homogeneous import HomogeneousProfile
        from obstacle.solver import psor_solve
        from obstacle.weighted_grid import make_grid

        def build():
            spec = make_grid(2, 1.0, 1 / 128, 0.0)
            profile = HomogeneousProfile("Psi", 1, 0.5)
            params = SolveParams(relaxation_factor=VERIFY_OMEGA, tolerance=1e-11, init="harmonic")
            return psor_solve(spec, profile.evaluator(1), params), profile
        return self.cached("psi1_2d", build)

    def psi1_solved_3d(self):
        """
        Trace h_{1+s} + BLOWUP_CORRECTION·h_{3+s}, tournée de 30° dans le plan,
        n=2, a=0. Solution exacte, de blow-up Ψ_1 en 0.
        """
        from obstacle.homogeneous import HomogeneousProfile
        from obstacle.solver import psor_solve
        from obstacle.weighted_grid import make_grid

        def build():
            spec = make_grid(3, 1.0, self.h3, 0.0)
            angle = math.radians(30.0)
            e = (math.cos(angle), math.sin(angle))
            profile    = HomogeneousProfile("Psi", 1, 0.5, direction=e)
            correction = HomogeneousProfile("Psi", 3, 0.5, direction=e).evaluator(2)
            leading    = profile.evaluator(2)

            def trace(points):
                return leading(points) + BLOWUP_CORRECTION * correction(points)

            params = SolveParams(relaxation_factor=VERIFY_OMEGA, tolerance=1e-9)
            return psor_solve(spec, trace, params), profile
        return self.cached("psi1_3d", build)


def _pochhammer_exact(q: Fraction, l: int) -> Fraction:
    out = Fraction(1)
    for i in range(l):
        out *= q + i
    return out


def _criterion_special_functions(suite: _Suite) -> list:
    from obstacle.homogeneous import family_eval, family_lambda, polar_jet
    from obstacle.special_functions import (
        HypergeometricParams, gamma_real, hyp2f1, pochhammer, polar_residual, polar_trace,
    )

    checks = []
    gap = abs(gamma_real(0.5) - math.sqrt(math.pi))
    checks.append(_check("special.gamma_half", gap <= 1e-10, gap, 1e-10))

    rng = np.random.default_rng(2024)
    worst_poch, worst_series = 0.0, 0.0
    for _ in range(50):
        k    = int(rng.integers(0, 7))
        beta = Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 5)))
        gam  = Fraction(int(rng.integers(1, 12)), int(rng.integers(1, 5)))
        z    = Fraction(int(rng.integers(-8, 9)), 8)
        terms = [
            _pochhammer_exact(Fraction(-k), j) * _pochhammer_exact(beta, j)
            / (_pochhammer_exact(gam, j) * math.factorial(j)) * z ** j
            for j in range(k + 1)
        ]
        exact = float(sum(terms))
        scale = max(1.0, float(sum(abs(t) for t in terms)))
        value = hyp2f1(HypergeometricParams(float(-k), float(beta), float(gam), float(z)))
        worst_series = max(worst_series, abs(value - exact) / scale)
        poch = float(_pochhammer_exact(beta, k))
        worst_poch = max(worst_poch, abs(pochhammer(float(beta), k) - poch) / max(1.0, abs(poch)))
    checks.append(_check("special.pochhammer", worst_poch <= 1e-12, worst_poch, 1e-12))
    checks.append(_check("special.hyp2f1", worst_series <= 1e-12, worst_series, 1e-12))

    worst_exact, worst_fd = 0.0, 0.0
    for s in (0.3, 0.5, 0.75):
        a = 1.0 - 2.0 * s
        for family, m in (("Phi", 2), ("Psi", 1), ("Pi", 2), ("Psi", 3), ("Phi", 4), ("PsiReflected", 1)):
            lam = family_lambda(family, m, s)

            def F(x1, x2, family=family, m=m, s=s):
                return float(family_eval(family, m, x1, x2, s))

            for theta in np.linspace(0.3, math.pi - 0.3, 20):
                theta = float(theta)
                y, dy, d2y = polar_jet(family, m, theta, s)
                scale = max(1.0, abs(d2y), abs(lam * (lam + a) * y))
                worst_exact = max(worst_exact, abs(polar_residual(y, dy, d2y, theta, a, lam)) / scale)
                y, dy, d2y = polar_trace(F, theta, step=1e-4)
                worst_fd = max(worst_fd, abs(polar_residual(y, dy, d2y, theta, a, lam)) / scale)
    checks.append(_check("special.polar_ode", worst_exact <= 1e-9, worst_exact, 1e-9))
    checks.append(_check("special.polar_ode_fd", worst_fd <= 1e-5, worst_fd, 1e-5))
    return checks


def _criterion_pde_residual(suite: _Suite) -> list:
    from obstacle.homogeneous import HomogeneousProfile
    from obstacle.weighted_grid import interior_slice, make_grid, sample, weighted_divergence_residual

    steps = (1 / 64, 1 / 128, 1 / 256) if suite.level == "full" else (1 / 32, 1 / 64, 1 / 128)
    checks = []
    for family, m in (("Phi", 2), ("Psi", 1), ("Pi", 0)):
        for s in (0.3, 0.5, 0.75):
            profile = HomogeneousProfile(family, m, s, normalized=False)
            errors = []
            for h in steps:
                spec = make_grid(2, 1.0, h, 1.0 - 2.0 * s)
                fld = sample(spec, profile.evaluator(1))
                res = weighted_divergence_residual(fld)
                pts = spec.coordinates()[interior_slice(spec)]
                away = (pts[..., -1] >= 0.25) & (np.abs(pts[..., 0]) <= 0.75)
                errors.append(float(np.max(np.abs(res[away]))))
            if errors[0] <= 1e-10:
                order = float("inf")
            else:
                order = min(math.log2(e0 / max(e1, 1e-300)) for e0, e1 in zip(errors, errors[1:]))
            checks.append(_check(f"pde.{family}{m}.s{s}", order >= 1.7, order, 1.7, errors=errors))
    return checks


def _criterion_frequency_constancy(suite: _Suite) -> list:
    from obstacle.frequency import frequency_components
    from obstacle.homogeneous import HomogeneousProfile, embed_profile
    from obstacle.weighted_grid import make_grid

    checks = []
    for a in (-0.4, 0.0, 0.5):
        s = (1.0 - a) / 2.0
        spec = make_grid(2, 1.0, suite.h, a)
        for family, m in (("Psi", 1), ("Phi", 2), ("Pi", 2)):
            profile = HomogeneousProfile(family, m, s)
            fld = embed_profile(profile, spec)
            gap = max(abs(frequency_components(fld, [0.0], r)["I"] - profile.lam) for r in (0.1, 0.2, 0.4))
            checks.append(_check(f"frequency.{family}{m}.a{a}", gap <= FREQ_TOLERANCE, gap, FREQ_TOLERANCE))
    return checks


def _criterion_monotonicity(suite: _Suite) -> list:
    from obstacle.frequency import frequency_curve
    from obstacle.geometry import extract_sets

    (fld, _), _ = suite.psi1_solved_2d()
    fb = extract_sets(fld)
    radii = [0.05, 0.1, 0.2, 0.4]
    limit = fld.spec.half_width - fld.spec.spacing
    centers = [p for p in fb.free_boundary_points() if abs(p[0]) + radii[-1] <= limit]
    if not centers:
        return [_check("monotone.free_boundary", False, 0, 1, error="aucun point de Γ")]
    worst_drop, lowest = 0.0, float("inf")
    for c in centers:
        curve = frequency_curve(fld, c, radii)
        worst_drop = max([worst_drop] + [v["drop"] for v in curve.violations])
        lowest = min(lowest, curve.I[0])
    return [
        _check("monotone.dyadic", worst_drop <= MONOTONE_SLACK, worst_drop, MONOTONE_SLACK),
        _check("monotone.lower_bound", lowest >= 1.45, lowest, 1.45),
    ]


def _criterion_identities(suite: _Suite) -> list:
    from obstacle.frequency import h_doubling_exponent, verify_frequency_identities
    from obstacle.homogeneous import HomogeneousProfile, embed_profile
    from obstacle.weighted_grid import make_grid

    spec = make_grid(2, 1.0, suite.h, 0.0)
    checks = []
    for family, m in (("Psi", 1), ("Phi", 2), ("Pi", 2)):
        profile = HomogeneousProfile(family, m, 0.5)
        fld = embed_profile(profile, spec)
        res = verify_frequency_identities(fld, [0.0], 0.25, 1e-3)
        worst = max(res["h_identity_rel"], res["d_identity_rel"])
        checks.append(_check(f"identities.{family}{m}", worst <= 0.02, worst, 0.02))
        target = spec.n + spec.a + 2 * profile.lam
        rel = abs(h_doubling_exponent(fld, [0.0], 0.25) - target) / target
        checks.append(_check(f"identities.{family}{m}.doubling", rel <= 0.03, rel, 0.03))
    return checks


def _criterion_solver(suite: _Suite) -> list:
    from obstacle.homogeneous import embed_profile
    from obstacle.solver import psor_solve

    (fld, report), profile = suite.psi1_solved_2d()
    exact = embed_profile(profile, fld.spec)
    err = float(np.max(np.abs(fld.values - exact.values)))
    history = np.asarray(report.energy_history)
    rises = np.diff(history)
    worst_rise = float(max(0.0, np.max(rises))) if rises.size else 0.0
    slack = 1e-12 * max(1.0, float(history[0]))
    worst_comp = max(report.complementarity.values())
    params = SolveParams(relaxation_factor=VERIFY_OMEGA, tolerance=1e-11, init="zero")
    other, _ = psor_solve(fld.spec, profile.evaluator(1), params)
    agree = float(np.max(np.abs(other.values - fld.values)))
    return [
        _check("solver.max_error", err <= 0.02, err, 0.02),
        _check("solver.energy_monotone", worst_rise <= slack, worst_rise, slack),
        _check("solver.converged", report.converged, report.final_update, 1e-11),
        _check("solver.complementarity", worst_comp <= 1e-6, worst_comp, 1e-6),
        _check("solver.init_agreement", agree <= 1e-6, agree, 1e-6),
    ]


def _criterion_beta(suite: _Suite) -> list:
    from obstacle.geometry import DiscreteMeasure, brute_force_beta

    beta_fn = suite.beta_fn
    line = DiscreteMeasure([[0.1 * i, 0.2 * i, 0.0] for i in range(-4, 5)], np.ones(9))
    collinear = beta_fn(line, [0.0, 0.0, 0.0], 1.0, 1).beta
    fixture = DiscreteMeasure([[0, 0, 0], [1, 0, 0], [0, 1, 0]], np.ones(3))
    three = beta_fn(fixture, [0.0, 0.0, 0.0], 2.0, 1).beta
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10):
        count = int(rng.integers(3, 12))
        pts = np.hstack([rng.uniform(-0.5, 0.5, size=(count, 2)), np.zeros((count, 1))])
        mu = DiscreteMeasure(pts, rng.uniform(0.1, 1.0, size=count))
        worst = max(worst, abs(beta_fn(mu, [0.0, 0.0, 0.0], 1.0, 1).beta - brute_force_beta(mu, [0.0, 0.0, 0.0], 1.0, 1)))
    target = math.sqrt(1.0 / 24.0)
    return [
        _check("beta.collinear", collinear <= 1e-10, collinear, 1e-10),
        _check("beta.three_points", abs(three - target) <= 1e-6, three, target),
        _check("beta.brute_force", worst <= 1e-6, worst, 1e-6),
    ]


def _criterion_minkowski(suite: _Suite) -> list:
    from obstacle.geometry import extract_sets, minkowski_profile
    from obstacle.homogeneous import HomogeneousProfile, embed_profile
    from obstacle.weighted_grid import make_grid

    # fenêtre de rayon 0.5 + tube 1/8 : la boîte [-0.75, 0.75]³ suffit
    spec = make_grid(3, 0.75, suite.h, 0.0)
    fb = extract_sets(embed_profile(HomogeneousProfile("Psi", 1, 0.5, direction=(1.0, 0.0)), spec))
    rows = minkowski_profile(fb, ((0.0, 0.0), 0.5), [1 / 8, 1 / 16, 1 / 32])
    ratios = [w["ratio"] for w in rows]
    ok = all(2.5 <= v <= 3.8 for v in ratios)
    return [_check("minkowski.segment", ok, max(ratios), 3.8, lower=2.5, ratios=ratios)]


def _criterion_blowup(suite: _Suite) -> list:
    from obstacle.geometry import blowup_fit, extract_sets

    (fld, _), profile = suite.psi1_solved_3d()
    fb = extract_sets(fld)
    pts = fb.free_boundary_points()
    if len(pts) == 0:
        return [_check("blowup.free_boundary", False, 0, 1, error="aucun point de Γ")]
    center = pts[int(np.argmin(np.linalg.norm(pts, axis=1)))]
    fit = blowup_fit(fld, center, [0.5, 0.25], fb)
    angle = _angle_deg(fit.direction, profile.direction)
    residual = fit.residual if fit.residual is not None else float("inf")
    by_r = {row["r"]: row["residual"] for row in fit.residuals}
    decreasing = 0.25 in by_r and 0.5 in by_r and by_r[0.25] < by_r[0.5]
    return [
        _check("blowup.lambda", abs(fit.lambda_estimate - 1.5) <= 0.05, fit.lambda_estimate, 1.5),
        _check("blowup.direction", angle <= 5.0, angle, 5.0),
        _check("blowup.residual", residual <= 0.05, residual, 0.05),
        _check("blowup.residual_decreasing", decreasing, by_r.get(0.25), by_r.get(0.5)),
    ]


def _criterion_jones(suite: _Suite) -> list:
    from obstacle.geometry import beta_profile, beta_trend, extract_sets, jones_square, measure_from_fb
    from obstacle.homogeneous import HomogeneousProfile, profile_point_set
    from obstacle.weighted_grid import make_grid

    spec = make_grid(3, 1.0, suite.h3, 0.0)
    straight = measure_from_fb(profile_point_set(HomogeneousProfile("Psi", 1, 0.5, direction=(1.0, 0.0)), spec))
    scales = [0.4, 0.2, 0.1, 0.05]
    flat = jones_square(straight, [0.0, 0.0], scales)

    (fld, _), _ = suite.psi1_solved_3d()
    mu = measure_from_fb(extract_sets(fld))
    pts = mu.points
    center = pts[int(np.argmin(np.linalg.norm(pts, axis=1)))] if len(pts) else np.zeros(3)
    generic = beta_profile(mu, center, [0.4, 0.2, 0.1])
    finite = all(math.isfinite(b) for b in generic)
    trend = beta_trend(mu, center, [0.4, 0.2, 0.1], fld.spec.spacing)
    excess = [row["excess"] for row in trend["scales"]]
    return [
        _check("jones.straight", flat <= 1e-10, flat, 1e-10),
        _check("jones.solved", finite and max(generic) <= 0.05, max(generic), 0.05, per_scale=generic),
        _check("jones.solved_decay", trend["decaying"], excess, None, per_scale=trend["scales"]),
    ]


def _criterion_mean_flatness(suite: _Suite) -> list:
    from obstacle.geometry import extract_sets, mean_flatness_check, measure_from_fb
    from obstacle.homogeneous import HomogeneousProfile, embed_profile
    from obstacle.weighted_grid import make_grid

    checks = []
    scenarios = (
        ("Psi1.n1", make_grid(2, 1.0, suite.h, 0.0), HomogeneousProfile("Psi", 1, 0.5)),
        ("Phi2.n2", make_grid(3, 1.0, suite.h3, 0.0), HomogeneousProfile("Phi", 2, 0.5, direction=(1.0, 0.0))),
    )
    for name, spec, profile in scenarios:
        fld = embed_profile(profile, spec)
        mu = measure_from_fb(extract_sets(fld))
        p = mu.points[int(np.argmin(np.linalg.norm(mu.points, axis=1)))]
        res = mean_flatness_check(fld, mu, p, 0.05, 6.0)
        vacuous = res["freq_integral"] > 0.05 * res["mass"]
        ok = vacuous or res["beta_sq"] <= 1e-6
        checks.append(_check(f"mean_flatness.{name}", ok, res["beta_sq"], 1e-6, freq_integral=res["freq_integral"]))

    (fld, _), _ = suite.psi1_solved_3d()
    mu = measure_from_fb(extract_sets(fld))
    if len(mu.points):
        p = mu.points[int(np.argmin(np.linalg.norm(mu.points, axis=1)))]
        res = mean_flatness_check(fld, mu, p, 0.05, 6.0)
        log.info(f"[Vérification] C empirique (Ψ_1 résolu, n=2) : {res['empirical_C']}")
        checks.append(_check("mean_flatness.solved_empirical_C", True, res["empirical_C"], None))
    return checks


def _hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    if len(a) == 0 and len(b) == 0:
        return 0.0
    if len(a) == 0 or len(b) == 0:
        return float("inf")
    da, _ = cKDTree(b).query(a)
    db, _ = cKDTree(a).query(b)
    return float(max(da.max(), db.max()))


def _criterion_strata(suite: _Suite) -> list:
    from obstacle.geometry import extract_sets, spine_and_stratum
    from obstacle.homogeneous import HomogeneousProfile, embed_profile, profile_point_set
    from obstacle.weighted_grid import make_grid

    expected = {("Psi", 1): "regular", ("Phi", 2): "singular", ("Pi", 2): "other",
                ("Psi", 3): "other", ("Phi", 4): "singular", ("Pi", 4): "other"}
    checks = []
    for s in (0.3, 0.5, 0.75):
        spec = make_grid(2, 1.0, suite.h, 1.0 - 2.0 * s)
        cell = spec.spacing * (1 + 1e-9)
        for (family, m), stratum in expected.items():
            profile = HomogeneousProfile(family, m, s)
            fld = embed_profile(profile, spec)
            found = extract_sets(fld, contact_tol=1e-12 * float(np.max(np.abs(fld.values))))
            table = profile_point_set(profile, spec)
            dist = max(
                _hausdorff(found.points(found.contact), table.points(table.contact)),
                _hausdorff(found.free_boundary_points(), table.free_boundary_points()),
                _hausdorff(found.points(found.nodal), table.points(table.nodal)),
            )
            info = spine_and_stratum(fld, found, [0.0])
            name = f"strata.{family}{m}.s{s}"
            checks.append(_check(f"{name}.sets", dist <= cell, dist, cell))
            checks.append(_check(f"{name}.stratum", info["stratum"] == stratum, info["stratum"], stratum))
    return checks


CRITERIA = (
    ("special_functions",    _criterion_special_functions),
    ("pde_residual",         _criterion_pde_residual),
    ("frequency_constancy",  _criterion_frequency_constancy),
    ("monotonicity",         _criterion_monotonicity),
    ("identities",           _criterion_identities),
    ("solver",               _criterion_solver),
    ("beta_numbers",         _criterion_beta),
    ("minkowski",            _criterion_minkowski),
    ("blowup",               _criterion_blowup),
    ("jones",                _criterion_jones),
    ("mean_flatness",        _criterion_mean_flatness),
    ("strata",               _criterion_strata),
)


def verify_suite(level: str = "fast", beta_fn=None, only=None) -> dict:
    """
    Exécute les critères d'acceptation (tous, ou ceux nommés dans only).
    beta_fn remplace beta_number (contrôle négatif par mutation).
    """
    if level not in LEVELS:
        raise ConfigError(f"Niveau inconnu : {level} (attendu {tuple(LEVELS)})")
    names = [name for name, _ in CRITERIA]
    if only:
        unknown = sorted(set(only) - set(names))
        if unknown:
            raise ConfigError(f"Critères inconnus : {unknown}")
    suite = _Suite(level, beta_fn)
    criteria = []
    for name, func in CRITERIA:
        if only and name not in only:
            continue
        started = time.monotonic()
        try:
            checks = func(suite)
        except LabError as e:
            log.error(f"[Vérification] {name} : {e}")
            checks = [_check(name, False, error=str(e))]
        passed = all(c["passed"] for c in checks)
        criteria.append({"name": name, "passed": passed, "checks": checks})
        log.info(f"[Vérification] {name} : {'OK' if passed else 'ÉCHEC'} ({time.monotonic() - started:.1f} s)")
    passed = all(c["passed"] for c in criteria)
    return {
        "level":     level,
        "h":         suite.h,
        "h_3d":      suite.h3,
        "criteria":  criteria,
        "passed":    passed,
        "exit_code": EXIT_OK if passed else EXIT_FAIL,
    }
