"""
obstacle/frequency.py — Fonction de fréquence à cutoff et quantités associées

Avec φ(t) = 1 sur [0,½], 2(1-t) sur (½,1], 0 au-delà, et ρ = |x - x0| :
  D = ∫ φ(ρ/r) |∇u|² |x_{n+1}|^a
  H = ∫ -φ'(ρ/r) u²/ρ |x_{n+1}|^a              (-φ' = 2 sur (r/2, r))
  E = ∫ -φ'(ρ/r) (ρ/r²) (∇u·x̂)² |x_{n+1}|^a
  I = r D / H
Quadrature en coquilles sphériques autour de x0 :
  - rayon : Gauss-Legendre sur [0, r/2] et [r/2, r]
  - angle polaire : Gauss-Jacobi (absorbe |x_{n+1}|^a)
  - azimut (n = 2) : trapèzes uniformes
Facteur 2 pour la symétrie paire (seul le demi-espace t ≥ 0 est évalué).
"""
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from obstacle.errors import FrequencyError
from obstacle.weighted_grid import ScalarField, evaluate

log = logging.getLogger(__name__)

FREQ_TOLERANCE = float(os.getenv("FREQ_TOLERANCE", 0.03))
MONOTONE_SLACK = float(os.getenv("MONOTONE_SLACK", 1e-3))
H_FLOOR        = 1e-300


# ─────────────────────────────────────────────
# TYPES
# ─────────────────────────────────────────────

@dataclass
class FrequencyCurve:
    center:     tuple
    radii:      list = field(default_factory=list)
    H:          list = field(default_factory=list)
    D:          list = field(default_factory=list)
    E:          list = field(default_factory=list)
    I:          list = field(default_factory=list)
    D_flux:     list = field(default_factory=list)
    violations: list = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        return not self.violations

    def rows(self) -> list:
        out = []
        for k, r in enumerate(self.radii):
            out.append({"center": list(self.center), "r": r, "H": self.H[k], "D": self.D[k],
                        "E": self.E[k], "I": self.I[k]})
        return out

    def to_dict(self) -> dict:
        return {
            "center":     list(self.center),
            "radii":      list(self.radii),
            "H":          list(self.H),
            "D":          list(self.D),
            "E":          list(self.E),
            "I":          list(self.I),
            "D_flux":     list(self.D_flux),
            "violations": list(self.violations),
            "monotone":   self.monotone,
        }


@dataclass(frozen=True)
class OscillationRecord:
    point: tuple
    rho:   float
    r:     float
    delta: float
    slack: float = MONOTONE_SLACK

    @property
    def monotone(self) -> bool:
        return self.delta >= -self.slack

    def to_dict(self) -> dict:
        return {"point": list(self.point), "rho": self.rho, "r": self.r,
                "delta": self.delta, "monotone": self.monotone}


# ─────────────────────────────────────────────
# CUTOFF
# ─────────────────────────────────────────────

def phi_cutoff(t: float) -> float:
    if t < 0:
        raise FrequencyError(f"φ(t) défini pour t ≥ 0 (reçu {t})")
    if t <= 0.5:
        return 1.0
    if t <= 1.0:
        return 2.0 * (1.0 - t)
    return 0.0


def _phi_array(t: np.ndarray) -> np.ndarray:
    return np.where(t <= 0.5, 1.0, np.where(t <= 1.0, 2.0 * (1.0 - t), 0.0))


def _minus_dphi_array(t: np.ndarray) -> np.ndarray:
    return np.where((t > 0.5) & (t <= 1.0), 2.0, 0.0)


# ─────────────────────────────────────────────
# QUADRATURE
# ─────────────────────────────────────────────

def thin_center(field: ScalarField, x0) -> np.ndarray:
    """x0 complété en point (x0', 0) du plan mince."""
    n  = field.spec.n
    x0 = np.asarray(x0, dtype=float).ravel()
    if len(x0) == n + 1:
        if abs(x0[-1]) > 1e-12:
            raise FrequencyError(f"Le centre {x0.tolist()} n'est pas sur le plan mince")
        x0 = x0[:n]
    if len(x0) != n:
        raise FrequencyError(f"Centre de dimension {len(x0)} pour n = {n}")
    return np.concatenate([x0, [0.0]])


def check_admissible(field: ScalarField, x0, r: float) -> np.ndarray:
    """B_r(x0) dans la boîte avec une cellule de marge."""
    spec = field.spec
    c = thin_center(field, x0)
    if r <= 0:
        raise FrequencyError(f"Rayon ≤ 0 : {r}")
    limit = spec.half_width - spec.spacing
    reach = max(float(np.max(np.abs(c[:-1]))) + r, r)
    if reach > limit + 1e-12:
        raise FrequencyError(
            f"B_{r:g}({c[:-1].tolist()}) sort de la boîte (marge d'une cellule, R={spec.half_width})"
        )
    return c


def default_nodes(field: ScalarField, r: float) -> tuple:
    """Nombres de nœuds (radial par demi-intervalle, polaire, azimutal)."""
    cells = r / field.spec.spacing
    if field.spec.n == 1:
        return max(16, math.ceil(cells)), max(48, math.ceil(4 * cells)), 1
    return max(12, math.ceil(cells / 2)), max(12, math.ceil(cells)), max(24, 2 * math.ceil(cells))


def _shell_quadrature(field: ScalarField, c: np.ndarray, r: float, nodes: tuple) -> tuple:
    """Points du demi-espace, poids (×2 symétrie, poids |t|^a inclus), ρ et directions."""
    spec = field.spec
    n, a = spec.n, spec.a
    n_rad, n_pol, n_azi = nodes

    x, w = roots_legendre(n_rad)
    rho = np.concatenate([(x + 1) * r / 4, (x + 3) * r / 4])
    w_rho = np.concatenate([w, w]) * r / 4

    if n == 1:
        xj, wj = roots_jacobi(n_pol, (a - 1) / 2, (a - 1) / 2)
        theta = np.arccos(xj)
        dirs = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        w_dir = wj
    else:
        xj, wj = roots_jacobi(n_pol, 0.0, a)
        cpol = (1 + xj) / 2
        spol = np.sqrt(np.clip(1 - cpol ** 2, 0.0, None))
        phi = 2 * math.pi * (np.arange(n_azi) + 0.5) / n_azi
        dirs = np.stack([
            np.outer(spol, np.cos(phi)).ravel(),
            np.outer(spol, np.sin(phi)).ravel(),
            np.repeat(cpol, n_azi),
        ], axis=-1)
        w_dir = np.repeat(wj * 2.0 ** (-a - 1), n_azi) * (2 * math.pi / n_azi)

    radial = w_rho * rho ** (n + a)
    points = c[None, None, :] + rho[:, None, None] * dirs[None, :, :]
    weights = 2.0 * radial[:, None] * w_dir[None, :]
    rhos = np.broadcast_to(rho[:, None], weights.shape)
    omegas = np.broadcast_to(dirs[None, :, :], points.shape)
    return (points.reshape(-1, n + 1), weights.ravel(), rhos.ravel(), omegas.reshape(-1, n + 1))


def _integrals(field: ScalarField, c: np.ndarray, r: float, nodes: tuple) -> dict:
    points, weights, rho, omega = _shell_quadrature(field, c, r, nodes)
    u, grad = evaluate(field, points)
    radial = np.sum(grad * omega, axis=1)
    t = rho / r
    phi = _phi_array(t)
    mdphi = _minus_dphi_array(t)
    return {
        "H":      float(np.sum(weights * mdphi * u * u / rho)),
        "D":      float(np.sum(weights * phi * np.sum(grad * grad, axis=1))),
        "E":      float(np.sum(weights * mdphi * rho / r ** 2 * radial ** 2)),
        "D_flux": float(np.sum(weights * mdphi * u * radial) / r),
        "L2":     float(np.sum(weights * u * u)),
    }


# ─────────────────────────────────────────────
# FRÉQUENCE
# ─────────────────────────────────────────────

def frequency_components(field: ScalarField, x0, r: float, nodes: tuple = None) -> dict:
    """H, D, E, I (et D_flux, forme intégrée par parties) de u en (x0, r)."""
    c = check_admissible(field, x0, r)
    comps = _integrals(field, c, r, nodes or default_nodes(field, r))
    if comps["H"] < H_FLOOR:
        raise FrequencyError(f"H = {comps['H']:.3e} en x0 = {c[:-1].tolist()}, r = {r} : champ nul")
    return {
        "H":      comps["H"],
        "D":      comps["D"],
        "E":      comps["E"],
        "I":      r * comps["D"] / comps["H"],
        "D_flux": comps["D_flux"],
    }


def ball_quadrature(field: ScalarField, x0, r: float, nodes: tuple = None) -> tuple:
    """(points, weights) : ∫_{B_r(x0)} f |x_{n+1}|^a ≈ Σ w f(points)."""
    c = check_admissible(field, x0, r)
    points, weights, _, _ = _shell_quadrature(field, c, r, nodes or default_nodes(field, r))
    return points, weights


def l2_ball(field: ScalarField, x0, r: float, nodes: tuple = None) -> float:
    """∫_{B_r(x0)} u² |x_{n+1}|^a (boule pleine)."""
    c = check_admissible(field, x0, r)
    return _integrals(field, c, r, nodes or default_nodes(field, r))["L2"]


def frequency_curve(field: ScalarField, x0, radii, slack: float = None) -> FrequencyCurve:
    radii = [float(r) for r in radii]
    if any(r1 <= r0 for r0, r1 in zip(radii, radii[1:])):
        raise FrequencyError(f"Les rayons doivent être strictement croissants : {radii}")
    slack = MONOTONE_SLACK if slack is None else slack
    c = thin_center(field, x0)
    curve = FrequencyCurve(center=tuple(float(v) for v in c[:-1]))
    for r in radii:
        comps = frequency_components(field, c, r)
        curve.radii.append(r)
        for key in ("H", "D", "E", "I", "D_flux"):
            getattr(curve, key).append(comps[key])
    for k in range(1, len(curve.I)):
        if curve.I[k] < curve.I[k - 1] - slack:
            curve.violations.append({"r0": curve.radii[k - 1], "r1": curve.radii[k],
                                     "drop": curve.I[k - 1] - curve.I[k]})
    if curve.violations:
        log.warning(f"[Fréquence] Monotonie violée en {curve.center} : {curve.violations}")
    return curve


def verify_frequency_identities(field: ScalarField, x0, r: float, dr: float) -> dict:
    """
    Différences centrées de H et D comparées à
      H' = (n+a)/r H + 2D,  D' = (n+a-1)/r D + 2E,
    plus D = D_flux, défaut de Cauchy-Schwarz H·E - D_flux² et I' = (2r/H²)(HE - D²).
    """
    if dr <= 0 or dr >= r:
        raise FrequencyError(f"dr doit être dans (0, r) (r={r}, dr={dr})")
    spec  = field.spec
    c     = check_admissible(field, x0, r + dr)
    nodes = default_nodes(field, r + dr)
    lo  = frequency_components(field, c, r - dr, nodes)
    mid = frequency_components(field, c, r, nodes)
    hi  = frequency_components(field, c, r + dr, nodes)
    na  = spec.n + spec.a

    dH = (hi["H"] - lo["H"]) / (2 * dr)
    dD = (hi["D"] - lo["D"]) / (2 * dr)
    dI = (hi["I"] - lo["I"]) / (2 * dr)
    rhs_H      = na / r * mid["H"] + 2 * mid["D"]
    rhs_H_flux = na / r * mid["H"] + 2 * mid["D_flux"]
    rhs_D      = (na - 1) / r * mid["D"] + 2 * mid["E"]
    defect     = mid["H"] * mid["E"] - mid["D_flux"] ** 2

    def rel(x, y):
        return abs(x - y) / max(abs(y), 1e-300)

    return {
        "r": r, "dr": dr,
        "H": mid["H"], "D": mid["D"], "D_flux": mid["D_flux"], "E": mid["E"], "I": mid["I"],
        "dH": dH, "dD": dD, "dI": dI,
        "h_identity_rel":          rel(dH, rhs_H),
        "h_identity_flux_rel":     rel(dH, rhs_H_flux),
        "d_identity_rel":          rel(dD, rhs_D),
        "integration_by_parts_rel": rel(mid["D"], mid["D_flux"]),
        "cauchy_schwarz_defect":   defect,
        "cauchy_schwarz_rel":      defect / max(mid["H"] * mid["E"], 1e-300),
        "i_prime_formula":         2 * r * (mid["H"] * mid["E"] - mid["D"] ** 2) / mid["H"] ** 2,
    }


def h_doubling_exponent(field: ScalarField, x0, r: float) -> float:
    """log₂(H(x0, 2r) / H(x0, r))."""
    c = check_admissible(field, x0, 2 * r)
    h1 = frequency_components(field, c, r)["H"]
    h2 = frequency_components(field, c, 2 * r)["H"]
    return math.log(h2 / h1) / math.log(2.0)


def h_scaling_check(field: ScalarField, x0, r: float) -> float:
    """log₂(H(2r)/H(r)) - (n+a) - 2·I(x0, r) ; nul pour un champ homogène."""
    spec = field.spec
    exponent = h_doubling_exponent(field, x0, r)
    return exponent - (spec.n + spec.a) - 2 * frequency_components(field, x0, r)["I"]


def h_scaling_bracket(field: ScalarField, x0, r: float, lower: float = None, upper: float = None) -> bool:
    """
    Si λ_min ≤ I ≤ λ_max sur [r, 2r] alors
    2^{n+a+2λ_min} ≤ H(2r)/H(r) ≤ 2^{n+a+2λ_max}.
    """
    spec = field.spec
    exponent = h_doubling_exponent(field, x0, r) - (spec.n + spec.a)
    ok = True
    if lower is not None:
        ok &= exponent >= 2 * lower - 2 * FREQ_TOLERANCE
    if upper is not None:
        ok &= exponent <= 2 * upper + 2 * FREQ_TOLERANCE
    return bool(ok)


# ─────────────────────────────────────────────
# OSCILLATIONS
# ─────────────────────────────────────────────

def delta_osc(field: ScalarField, x, rho: float, r: float) -> OscillationRecord:
    """Δ^r_ρ(x) = I(x, r) - I(x, ρ)."""
    if not (0 < rho <= r):
        raise FrequencyError(f"Il faut 0 < ρ ≤ r (ρ={rho}, r={r})")
    c = check_admissible(field, x, r)
    if rho == r:
        frequency_components(field, c, r)
        delta = 0.0
    else:
        delta = frequency_components(field, c, r)["I"] - frequency_components(field, c, rho)["I"]
    return OscillationRecord(point=tuple(float(v) for v in c[:-1]), rho=rho, r=r, delta=delta)


def theta_max(field: ScalarField, x, rho: float, fb) -> Optional[float]:
    """Θ(x, ρ) = max des I(y, ρ) pour y point de Γ dans la boule fermée B_ρ(x)."""
    c = thin_center(field, x)
    pts = fb.free_boundary_points()
    if len(pts) == 0:
        return None
    inside = pts[np.linalg.norm(pts - c[None, :-1], axis=1) <= rho + 1e-12]
    if len(inside) == 0:
        return None
    for y in inside:
        check_admissible(field, y, rho)
    return max(frequency_components(field, y, rho)["I"] for y in inside)


def classify_almost_homogeneous(field: ScalarField, eta: float, fb=None, center=None) -> bool:
    """0 ∈ Γ(u) (après translation au centre) et I(1) - I(½) ≤ η."""
    from obstacle.geometry import extract_sets

    spec   = field.spec
    c      = thin_center(field, center if center is not None else np.zeros(spec.n))
    fb     = fb if fb is not None else extract_sets(field)
    if not fb.is_free_boundary(c[:-1]):
        log.info(f"[Fréquence] {c[:-1].tolist()} n'est pas un point de Γ : non presque homogène")
        return False
    record = delta_osc(field, c, 0.5, 1.0)
    return record.delta <= eta


def spatial_osc_check(field: ScalarField, x1, x2, rho: float, R: float) -> dict:
    """
    |I(x1, Rρ) - I(x2, Rρ)| et les deux termes (Δ^{2(R+2)ρ}_{(R-4)ρ/2}(x_i))^{1/2}.
    Aucune constante n'est supposée.
    """
    if R <= 6:
        raise FrequencyError(f"Il faut R > 6 (reçu {R})")
    lhs = abs(frequency_components(field, x1, R * rho)["I"] - frequency_components(field, x2, R * rho)["I"])
    deltas = [delta_osc(field, x, (R - 4) * rho / 2, 2 * (R + 2) * rho).delta for x in (x1, x2)]
    return {
        "lhs":       lhs,
        "deltas":    deltas,
        "rhs_terms": [math.sqrt(max(d, 0.0)) for d in deltas],
    }
