"""
obstacle/geometry.py — Ensembles de contact, blow-ups et diagnostics géométriques

Gère :
  - extraction de Λ (contact), Γ (frontière libre), 𝒩 (ensemble nodal)
  - renormalisation u_{x0,r} et ajustement des profils homogènes
  - contenu de Minkowski du tube autour de Γ
  - nombres β, fonction carrée de Jones, oscillation dyadique Osc
  - épine et strate d'un point de Γ
"""
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree

from obstacle.errors import FrequencyError, GeometryError
from obstacle.frequency import ball_quadrature, delta_osc, frequency_components
from obstacle.homogeneous import PolynomialND, classify_lambda, family_eval, family_norm, pi_eval
from obstacle.weighted_grid import GridSpec, ScalarField, evaluate, make_grid, plane_flux

log = logging.getLogger(__name__)

LAMBDA_WINDOW        = float(os.getenv("LAMBDA_WINDOW", 0.1))
SPINE_TOLERANCE      = float(os.getenv("SPINE_TOLERANCE", 0.05))
SPINE_MAX_CANDIDATES = int(os.getenv("SPINE_MAX_CANDIDATES", 48))
JACOBI_MAX_SWEEPS    = 30

FIT_NODES = {1: (16, 64, 1), 2: (10, 16, 48)}


# ─────────────────────────────────────────────
# ENSEMBLES DU PLAN MINCE
# ─────────────────────────────────────────────

def thin_mesh(spec: GridSpec) -> np.ndarray:
    """Coordonnées x' des nœuds du plan mince, forme (2k+1,)*n + (n,)."""
    axes = [spec.axis(d) for d in range(spec.n)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def free_boundary_mask(contact: np.ndarray) -> np.ndarray:
    """Nœuds de contact ayant un voisin (2n-adjacence) hors contact."""
    outside = np.zeros(contact.shape, dtype=bool)
    for d in range(contact.ndim):
        lo = [slice(None)] * contact.ndim
        hi = [slice(None)] * contact.ndim
        lo[d] = slice(0, -1)
        hi[d] = slice(1, None)
        outside[tuple(lo)] |= ~contact[tuple(hi)]
        outside[tuple(hi)] |= ~contact[tuple(lo)]
    return contact & outside


def flux_valleys(flux: np.ndarray) -> np.ndarray:
    """
    Nœuds où |flux| est un minimum local le long d'au moins un axe :
    ≤ aux deux voisins et < à l'un d'eux. Un nœud de bord est son propre voisin.
    """
    padded = np.pad(flux, 1, mode="edge")
    center = tuple(slice(1, -1) for _ in range(flux.ndim))
    valley = np.zeros(flux.shape, dtype=bool)
    for d in range(flux.ndim):
        lo = list(center)
        hi = list(center)
        lo[d] = slice(0, -2)
        hi[d] = slice(2, None)
        before, after = padded[tuple(lo)], padded[tuple(hi)]
        valley |= (flux <= before) & (flux <= after) & ((flux < before) | (flux < after))
    return valley


@dataclass(frozen=True, eq=False)
class ThinPointSet:
    spec:          GridSpec
    contact:       np.ndarray
    free_boundary: np.ndarray
    nodal:         np.ndarray
    contact_tol:   float
    grad_tol:      float

    def points(self, mask: np.ndarray) -> np.ndarray:
        return thin_mesh(self.spec)[mask]

    def free_boundary_points(self) -> np.ndarray:
        return self.points(self.free_boundary)

    def is_free_boundary(self, x) -> bool:
        x = np.asarray(x, dtype=float)[: self.spec.n]
        idx = self.spec.thin_index(x)
        node = thin_mesh(self.spec)[idx]
        if np.max(np.abs(node - x)) > 0.5 * self.spec.spacing * (1 + 1e-9):
            return False
        return bool(self.free_boundary[idx])

    def counts(self) -> dict:
        return {
            "contact":       int(np.sum(self.contact)),
            "free_boundary": int(np.sum(self.free_boundary)),
            "nodal":         int(np.sum(self.nodal)),
        }

    def to_dict(self) -> dict:
        flagged = self.contact | self.free_boundary | self.nodal
        nodes = []
        for idx in zip(*np.nonzero(flagged)):
            nodes.append({
                "index":         [int(i) for i in idx],
                "contact":       bool(self.contact[idx]),
                "free_boundary": bool(self.free_boundary[idx]),
                "nodal":         bool(self.nodal[idx]),
            })
        return {
            "grid":        self.spec.to_dict(),
            "contact_tol": self.contact_tol,
            "grad_tol":    self.grad_tol,
            "counts":      self.counts(),
            "nodes":       nodes,
        }


def extract_sets(field: ScalarField, contact_tol: float = None, grad_tol: float = None) -> ThinPointSet:
    """
    contact = {|u| ≤ contact_tol} sur le plan mince
    Γ       = nœuds de contact ayant un voisin hors contact
    𝒩       = (contact, |∇_τ u| ≤ grad_tol, |flux| ≤ grad_tol, |flux| en creux) ∪ Γ
    Défauts : contact_tol = 1e-6·max|u|, grad_tol = 1e-3·max|∇u|.

    Hors Γ, seuls les creux de |flux| comptent (Π_m : flux en |x·e|^m près de l'épine).
    """
    spec = field.spec
    h, n = spec.spacing, spec.n
    if contact_tol is None:
        contact_tol = 1e-6 * float(np.max(np.abs(field.values)))
    elif contact_tol <= 0:
        raise GeometryError(f"contact_tol doit être > 0 (reçu {contact_tol})")
    grads = np.gradient(field.values, h)
    if grad_tol is None:
        grad_tol = 1e-3 * float(np.max(np.sqrt(sum(g * g for g in grads))))
    elif grad_tol <= 0:
        raise GeometryError(f"grad_tol doit être > 0 (reçu {grad_tol})")

    trace   = field.plane
    contact = np.abs(trace) <= contact_tol
    fb      = free_boundary_mask(contact)
    tangential = np.sqrt(sum(g[..., 0] ** 2 for g in grads[:n]))
    raw  = np.abs(plane_flux(field))
    flux = np.pad(raw, 1, constant_values=np.inf)
    dips = np.pad(flux_valleys(raw), 1, constant_values=False)
    nodal = (contact & (tangential <= grad_tol) & (flux <= grad_tol) & dips) | fb

    result = ThinPointSet(spec, contact, fb, nodal, float(contact_tol), float(grad_tol))
    log.info(f"[Ensembles] {result.counts()} (contact_tol={contact_tol:.3e}, grad_tol={grad_tol:.3e})")
    return result


# ─────────────────────────────────────────────
# BLOW-UPS
# ─────────────────────────────────────────────

@dataclass
class BlowupFit:
    center:          tuple
    lambda_estimate: float
    classified:      Optional[float] = None
    family:          Optional[str] = None
    degree:          Optional[int] = None
    direction:       tuple = ()
    amplitude:       Optional[float] = None
    residual:        Optional[float] = None
    poly_residual:   Optional[float] = None
    residuals:       list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "center":          list(self.center),
            "lambda_estimate": self.lambda_estimate,
            "classified":      self.classified,
            "family":          self.family,
            "m":               self.degree,
            "direction":       list(self.direction),
            "amplitude":       self.amplitude,
            "residual":        self.residual,
            "poly_residual":   self.poly_residual,
            "residuals":       list(self.residuals),
        }


def rescale_field(field: ScalarField, x0, r: float) -> ScalarField:
    """
    u_{x0,r}(y) = r^{(n+a)/2} u(x0 + r y) / H(x0,r)^{1/2}, rééchantillonné sur
    une grille de pas 1/k (k = max(8, r/h)) et de demi-largeur 1 + 2/k.
    """
    spec = field.spec
    n, a = spec.n, spec.a
    c = np.zeros(n + 1)
    c[:n] = np.asarray(x0, dtype=float).ravel()[:n]
    try:
        H = frequency_components(field, c, r)["H"]
    except FrequencyError as e:
        raise GeometryError(f"Renormalisation impossible en {c[:n].tolist()}, r = {r} : {e}") from e

    k = max(8, int(round(r / spec.spacing)))
    target = make_grid(spec.ambient_dim, 1.0 + 2.0 / k, 1.0 / k, a)
    if float(np.max(np.abs(c[:n]))) + r * target.half_width > spec.half_width + 1e-12 \
            or r * target.half_width > spec.half_width + 1e-12:
        raise GeometryError(f"L'image de la grille renormalisée (r = {r}) sort de la boîte")

    coords = target.coordinates().reshape(-1, n + 1)
    values, _ = evaluate(field, c[None, :] + r * coords)
    scaled = r ** ((n + a) / 2) * values / math.sqrt(H)
    return ScalarField(target, scaled.reshape(target.shape))


def _direction(alpha: float, n: int) -> np.ndarray:
    if n == 1:
        return np.array([1.0 if math.cos(alpha) >= 0 else -1.0])
    return np.array([math.cos(alpha), math.sin(alpha)])


def _fit_profile(v: ScalarField, entry: dict) -> dict:
    """Ajuste c·h_λ(y·e(α), t) sur B_1 : recherche en α puis raffinement."""
    spec = v.spec
    n, s = spec.n, spec.s
    points, weights = ball_quadrature(v, np.zeros(n), 1.0, FIT_NODES[n])
    vals, _ = evaluate(v, points)
    vv = float(np.sum(weights * vals * vals))
    sign = -1.0 if entry["family"] == "Pi" else 1.0
    norm = sign * family_norm(entry["family"], entry["m"], s)

    def stats(alpha):
        e  = _direction(alpha, n)
        mv = norm * family_eval(entry["family"], entry["m"], points[:, :n] @ e, points[:, n], s)
        mm = float(np.sum(weights * mv * mv))
        vm = float(np.sum(weights * vals * mv))
        return mm, vm

    def misfit(alpha):
        mm, vm = stats(alpha)
        if mm <= 0 or vv <= 0:
            return 1.0
        return max(0.0, 1.0 - vm * vm / (vv * mm))

    if n == 1:
        candidates = [0.0, math.pi]
        best = min(candidates, key=misfit)
    else:
        grid = np.radians(np.arange(0.0, 360.0, 1.0))
        scores = [misfit(alpha) for alpha in grid]
        start = float(grid[int(np.argmin(scores))])
        step = math.radians(1.0)
        opt = minimize_scalar(misfit, bounds=(start - step, start + step), method="bounded",
                              options={"xatol": 1e-7})
        best = float(opt.x) if opt.fun <= misfit(start) else start
    mm, vm = stats(best)
    return {
        "alpha":     best % (2 * math.pi),
        "direction": tuple(float(c) for c in _direction(best, n)),
        "amplitude": vm / mm if mm > 0 else 0.0,
        "residual":  math.sqrt(misfit(best)),
    }


def _fit_pi_polynomial(v: ScalarField, degree: int) -> float:
    """Résidu relatif du meilleur Π_p, p homogène quelconque de degré donné."""
    spec = v.spec
    n, s = spec.n, spec.s
    points, weights = ball_quadrature(v, np.zeros(n), 1.0, FIT_NODES[n])
    vals, _ = evaluate(v, points)
    if n == 1:
        exponents = [(degree,)]
    else:
        exponents = [(i, degree - i) for i in range(degree + 1)]
    basis = np.stack([
        pi_eval(degree, PolynomialND.monomial(e), points[:, :n], points[:, n], s) for e in exponents
    ], axis=1)
    sw = np.sqrt(weights)
    coef, *_ = np.linalg.lstsq(basis * sw[:, None], vals * sw, rcond=None)
    misfit = vals - basis @ coef
    return math.sqrt(float(np.sum(weights * misfit ** 2)) / max(float(np.sum(weights * vals ** 2)), 1e-300))


def blowup_fit(field: ScalarField, x0, radii, fb: ThinPointSet = None, window: float = None) -> BlowupFit:
    """
    λ estimé = I(x0, r_min), classé si à moins de LAMBDA_WINDOW d'une valeur
    admissible ; ajustement de c·h_λ sur u_{x0,r} pour chaque rayon.
    """
    from obstacle.frequency import thin_center

    radii = sorted((float(r) for r in radii), reverse=True)
    if not radii:
        raise GeometryError("Liste de rayons vide")
    spec = field.spec
    c = thin_center(field, x0)
    fb = fb if fb is not None else extract_sets(field)
    if not fb.is_free_boundary(c[:-1]):
        raise GeometryError(f"{c[:-1].tolist()} n'est pas un point de la frontière libre détectée")

    r_min = radii[-1]
    try:
        lam = frequency_components(field, c, r_min)["I"]
    except FrequencyError as e:
        raise GeometryError(f"Blow-up impossible en {c[:-1].tolist()} : {e}") from e
    entry = classify_lambda(lam, spec.s, LAMBDA_WINDOW if window is None else window)
    fit = BlowupFit(center=tuple(float(v) for v in c[:-1]), lambda_estimate=lam)
    if entry is None:
        log.info(f"[Blow-up] λ = {lam:.4f} en {fit.center} : non classé")
        return fit

    fit.classified = entry["lambda"]
    fit.family     = entry["family"]
    fit.degree     = entry["m"]
    for r in radii:
        result = _fit_profile(rescale_field(field, c, r), entry)
        fit.residuals.append({"r": r, "residual": result["residual"]})
        if r == r_min:
            fit.direction = result["direction"]
            fit.amplitude = result["amplitude"]
            fit.residual  = result["residual"]
    if entry["family"] == "Pi":
        fit.poly_residual = _fit_pi_polynomial(rescale_field(field, c, r_min), entry["m"])
        log.warning(f"[Blow-up] Fréquence 2m+2s (λ ≈ {entry['lambda']:.4f}) détectée en {fit.center}")
    log.info(
        f"[Blow-up] {fit.center} : λ = {lam:.4f} → {entry['family']}_{entry['m']} "
        f"(λ = {entry['lambda']:.4f}), e = {fit.direction}, résidu = {fit.residual:.3e}"
    )
    return fit


# ─────────────────────────────────────────────
# CONTENU DE MINKOWSKI
# ─────────────────────────────────────────────

def minkowski_profile(fb: ThinPointSet, window: tuple, radii) -> list:
    """
    Volume du r-tube (cellules de ℝ^{n+1}, réflexion comprise) autour de Γ ∩ K,
    K = boule fermée window = (centre x', rayon). Renvoie [{r, volume, ratio = volume/r²}].
    """
    spec = fb.spec
    n, h, R = spec.n, spec.spacing, spec.half_width
    center, wr = np.asarray(window[0], dtype=float)[:n], float(window[1])
    pts = fb.free_boundary_points()
    if len(pts):
        pts = pts[np.linalg.norm(pts - center[None, :], axis=1) <= wr + 1e-12]

    out = []
    for r in radii:
        r = float(r)
        if r < 2 * h - 1e-12:
            raise GeometryError(f"Rayon {r} < 2h = {2 * h}")
        if len(pts) == 0:
            out.append({"r": r, "volume": 0.0, "ratio": 0.0})
            continue
        tree = cKDTree(np.hstack([pts, np.zeros((len(pts), 1))]))
        axes = []
        for d in range(n):
            centres = -R + (np.arange(2 * spec.cells) + 0.5) * h
            keep = (centres >= pts[:, d].min() - r) & (centres <= pts[:, d].max() + r)
            axes.append(centres[keep])
        vertical = (np.arange(spec.cells) + 0.5) * h
        axes.append(vertical[vertical <= r])
        cells = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n + 1)
        dist, _ = tree.query(cells, k=1, distance_upper_bound=r)
        count = int(np.sum(dist <= r))
        volume = 2.0 * count * h ** (n + 1)
        out.append({"r": r, "volume": volume, "ratio": volume / r ** 2})
    log.info(f"[Minkowski] {len(pts)} points de Γ, ratios {[round(row['ratio'], 4) for row in out]}")
    return out


# ─────────────────────────────────────────────
# MESURES ET NOMBRES β
# ─────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        ms  = np.asarray(self.masses, dtype=float).ravel()
        if pts.ndim != 2:
            raise GeometryError(f"Points de forme (K, d) attendus (reçu {pts.shape})")
        if len(pts) != len(ms):
            raise GeometryError(f"{len(pts)} points pour {len(ms)} masses")
        if np.any(ms < 0) or not np.all(np.isfinite(ms)):
            raise GeometryError("Masses négatives ou non finies")
        if len(pts) and np.any(np.abs(pts[:, -1]) > 1e-12):
            raise GeometryError("Les points de la mesure doivent être sur le plan x_{n+1} = 0")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", ms)

    @property
    def dim(self) -> int:
        return self.points.shape[-1]

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.masses))

    def restrict(self, x0, r: float) -> "DiscreteMeasure":
        """Restriction à la boule fermée B_r(x0)."""
        if len(self.points) == 0:
            return self
        inside = np.linalg.norm(self.points - x0[None, :], axis=1) <= r * (1 + 1e-12)
        return DiscreteMeasure(self.points[inside], self.masses[inside])


@dataclass
class BetaStats:
    center:      tuple
    radius:      float
    k:           int
    mass:        float = 0.0
    barycenter:  tuple = ()
    eigenvalues: list = field(default_factory=list)
    plane_basis: list = field(default_factory=list)
    beta:        float = 0.0

    def to_dict(self) -> dict:
        return {
            "center":      list(self.center),
            "radius":      self.radius,
            "k":           self.k,
            "mass":        self.mass,
            "barycenter":  list(self.barycenter),
            "eigenvalues": list(self.eigenvalues),
            "plane_basis": [list(v) for v in self.plane_basis],
            "beta":        self.beta,
        }


def measure_from_fb(fb: ThinPointSet) -> DiscreteMeasure:
    """Masse h^{n-1} par nœud de Γ."""
    spec = fb.spec
    pts = fb.free_boundary_points()
    pts = np.hstack([pts, np.zeros((len(pts), 1))])
    return DiscreteMeasure(pts, np.full(len(pts), spec.spacing ** (spec.n - 1)))


def jacobi_eigh(matrix, max_sweeps: int = JACOBI_MAX_SWEEPS, tol: float = 1e-15) -> tuple:
    """
    Valeurs/vecteurs propres d'une petite matrice symétrique par rotations
    de Jacobi cycliques. Valeurs triées par ordre décroissant, vecteurs en colonnes.
    """
    A = np.array(matrix, dtype=float)
    size = A.shape[0]
    if A.shape != (size, size) or not np.allclose(A, A.T, atol=1e-12 * max(1.0, np.max(np.abs(A)))):
        raise GeometryError("jacobi_eigh : matrice carrée symétrique attendue")
    A = 0.5 * (A + A.T)
    V = np.eye(size)
    scale = max(float(np.max(np.abs(A))), 1e-300)
    for _ in range(max_sweeps):
        off = math.sqrt(sum(A[p, q] ** 2 for p in range(size) for q in range(p + 1, size)))
        if off <= tol * scale:
            break
        for p in range(size - 1):
            for q in range(p + 1, size):
                if A[p, q] == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * c
                J = np.eye(size)
                J[p, p] = J[q, q] = c
                J[p, q] = sn
                J[q, p] = -sn
                A = J.T @ A @ J
                V = V @ J
    values = np.diag(A).copy()
    order = np.argsort(-values, kind="stable")
    return values[order], V[:, order]


def _ambient_point(mu: DiscreteMeasure, x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float).ravel()
    if len(x0) == mu.dim - 1:
        x0 = np.concatenate([x0, [0.0]])
    if len(x0) != mu.dim:
        raise GeometryError(f"Point de dimension {len(x0)} pour une mesure en dimension {mu.dim}")
    return x0


def beta_number(mu: DiscreteMeasure, x0, r: float, k: int) -> BetaStats:
    """β_k(x0, r)² = r^{-(k+2)} Σ_{l>k} λ_l (valeurs propres de la covariance de μ⌞B_r)."""
    if r <= 0:
        raise GeometryError(f"Rayon ≤ 0 : {r}")
    x0 = _ambient_point(mu, x0)
    if not (0 <= k <= mu.dim - 1):
        raise GeometryError(f"k = {k} hors de [0, {mu.dim - 1}]")
    stats = BetaStats(center=tuple(float(v) for v in x0), radius=float(r), k=int(k))
    local = mu.restrict(x0, r)
    mass = local.total_mass
    if mass <= 0:
        return stats
    bary = (local.masses[:, None] * local.points).sum(axis=0) / mass
    dev  = local.points - bary[None, :]
    cov  = (local.masses[:, None, None] * dev[:, :, None] * dev[:, None, :]).sum(axis=0)
    values, vectors = jacobi_eigh(cov)
    values = np.maximum(values, 0.0)
    stats.mass        = mass
    stats.barycenter  = tuple(float(v) for v in bary)
    stats.eigenvalues = [float(v) for v in values]
    stats.plane_basis = [tuple(float(c) for c in vectors[:, i]) for i in range(k)]
    stats.beta        = math.sqrt(max(0.0, float(np.sum(values[k:])) / r ** (k + 2)))
    return stats


def brute_force_beta(mu: DiscreteMeasure, x0, r: float, k: int = None) -> float:
    """
    inf sur les k-plans affines de (r^{-(k+2)} ∫ dist² dμ)^{1/2}, par balayage
    des directions (pas de 0.1° puis raffinement) ; k ∈ {0, 1}, mesure dans un plan.
    """
    x0 = _ambient_point(mu, x0)
    k = mu.dim - 2 if k is None else k
    local = mu.restrict(x0, r)
    mass = local.total_mass
    if mass <= 0:
        return 0.0
    bary = (local.masses[:, None] * local.points).sum(axis=0) / mass
    dev  = (local.points - bary[None, :])[:, :-1]
    if k == 0:
        return math.sqrt(float(np.sum(local.masses * np.sum(dev * dev, axis=1))) / r ** 2)
    if k != 1 or dev.shape[1] != 2:
        raise GeometryError(f"Balayage disponible pour k ∈ {{0,1}} dans un plan (k={k}, dim={mu.dim})")

    def cost(angle):
        normal = np.array([-math.sin(angle), math.cos(angle)])
        return float(np.sum(local.masses * (dev @ normal) ** 2))

    grid = np.radians(np.arange(0.0, 180.0, 0.1))
    start = float(grid[int(np.argmin([cost(a) for a in grid]))])
    step = math.radians(0.1)
    opt = minimize_scalar(cost, bounds=(start - step, start + step), method="bounded",
                          options={"xatol": 1e-12})
    return math.sqrt(max(0.0, min(opt.fun, cost(start))) / r ** 3)


def _check_geometric(scales) -> list:
    scales = [float(x) for x in scales]
    if any(x <= 0 for x in scales):
        raise GeometryError("Échelles strictement positives attendues")
    if len(scales) >= 2:
        ratio = scales[1] / scales[0]
        if not (0 < ratio < 1) or any(
            abs(b / a - ratio) > 1e-9 * ratio for a, b in zip(scales, scales[1:])
        ):
            raise GeometryError(f"Échelles non géométriques décroissantes : {scales}")
    return scales


def beta_profile(mu: DiscreteMeasure, x, scales) -> list:
    """β²(x, r_q) pour chaque échelle, avec k = n-1."""
    scales = _check_geometric(scales)
    k = max(mu.dim - 2, 0)
    return [beta_number(mu, x, r, k).beta ** 2 for r in scales]


def jones_square(mu: DiscreteMeasure, x, scales) -> float:
    """Σ_q β²(x, λ^q r0)."""
    return float(sum(beta_profile(mu, x, scales)))


def beta_trend(mu: DiscreteMeasure, x, scales, spacing: float) -> dict:
    """
    β² par échelle comparé au plancher du réseau μ(B_r)·h²/r^{k+2}
    (points à moins d'une maille d'un plan). excess = max(0, β² - plancher)
    doit décroître avec r.
    """
    if spacing <= 0:
        raise GeometryError(f"Pas du réseau ≤ 0 : {spacing}")
    scales = _check_geometric(scales)
    k = max(mu.dim - 2, 0)
    rows = []
    for r in scales:
        stats = beta_number(mu, x, r, k)
        floor = stats.mass * spacing ** 2 / r ** (k + 2)
        rows.append({
            "r":       r,
            "beta_sq": stats.beta ** 2,
            "floor":   floor,
            "excess":  max(0.0, stats.beta ** 2 - floor),
        })
    excess = [row["excess"] for row in rows]
    decaying = all(e1 <= e0 for e0, e1 in zip(excess, excess[1:]))
    if not decaying:
        log.warning(f"[Jones] β² au-dessus du plancher croît quand r décroît : {excess}")
    return {"scales": rows, "decaying": decaying}


def osc_lambda(mu: DiscreteMeasure, w, varrho: float, lam: float) -> float:
    """
    ∫_{B_ϱ(w)} Σ_j β²(y, λ^j ϱ) dμ(y), tronquée quand λ^j ϱ < d_min / 10
    (d_min : plus petite distance entre deux points distincts de μ).
    """
    if not (0.0 < lam < 1.0):
        raise GeometryError(f"λ doit être dans (0,1) (reçu {lam})")
    w = _ambient_point(mu, w)
    support = mu.points[mu.masses > 0]
    if len(support) < 2:
        return 0.0
    tree = cKDTree(support)
    dist, _ = tree.query(support, k=2)
    positive = dist[:, 1][dist[:, 1] > 0]
    if positive.size == 0:
        return 0.0
    cutoff = float(positive.min()) / 10.0
    k = max(mu.dim - 2, 0)
    local = mu.restrict(w, varrho)
    total = 0.0
    for y, m in zip(local.points, local.masses):
        radius = varrho
        while radius >= cutoff:
            total += m * beta_number(mu, y, radius, k).beta ** 2
            radius *= lam
    return total


def mean_flatness_check(field: ScalarField, mu: DiscreteMeasure, p, r: float, R: float) -> dict:
    """β²(p, r) (k = n-1) et r^{-(n-1)} ∫_{B_r(p)} Δ^{(2R+4)r}_{(R-5)r/2} dμ ; aucune constante supposée."""
    if R <= 5:
        raise GeometryError(f"Il faut R > 5 (reçu {R})")
    n = field.spec.n
    p = _ambient_point(mu, p)
    beta_sq = beta_number(mu, p, r, max(n - 1, 0)).beta ** 2
    local = mu.restrict(p, r)
    integral = 0.0
    try:
        for y, m in zip(local.points, local.masses):
            integral += m * delta_osc(field, y[:n], (R - 5) * r / 2, (2 * R + 4) * r).delta
    except FrequencyError as e:
        raise GeometryError(f"Rayons non admissibles pour mean_flatness_check : {e}") from e
    freq_integral = integral / r ** (n - 1)
    return {
        "beta_sq":       beta_sq,
        "freq_integral": freq_integral,
        "mass":          local.total_mass,
        "empirical_C":   beta_sq / freq_integral if freq_integral > 0 else None,
    }


# ─────────────────────────────────────────────
# ÉPINE ET STRATE
# ─────────────────────────────────────────────

def stratum_of(lam: float, s: float, window: float = LAMBDA_WINDOW) -> tuple:
    """(strate, entrée classée) : 1+s régulier, 2m singulier, 2m-1+s (m ≥ 2) / 2m+2s autre."""
    entry = classify_lambda(lam, s, window)
    if entry is None:
        return "unclassified", None
    if entry["kind"] == "odd_plus_s" and entry["m"] == 1:
        return "regular", entry
    if entry["kind"] == "even":
        return "singular", entry
    if entry["kind"] == "even_plus_2s":
        log.warning(f"[Strates] Fréquence 2m+2s détectée (λ = {lam:.4f} ≈ {entry['lambda']:.4f})")
    return "other", entry


def spine_and_stratum(field: ScalarField, fb: ThinPointSet, x0, r_min: float = None) -> dict:
    """
    Épine : nœuds y de 𝒩 ∪ Γ avec |I(y, r_min) - I(x0, r_min)| ≤ SPINE_TOLERANCE ;
    dimension = rang de leur covariance ; strate d'après I(x0, r_min).
    """
    from obstacle.frequency import thin_center

    spec = field.spec
    n = spec.n
    c = thin_center(field, x0)
    limit = spec.half_width - spec.spacing
    if r_min is None:
        r_min = 0.25 * (limit - float(np.max(np.abs(c[:-1]))))
    lam0 = frequency_components(field, c, r_min)["I"]

    cand = fb.points(fb.nodal | fb.free_boundary)
    if len(cand):
        cand = cand[np.max(np.abs(cand), axis=1) + r_min <= limit + 1e-12]
    if len(cand) > SPINE_MAX_CANDIDATES:
        cand = cand[np.linspace(0, len(cand) - 1, SPINE_MAX_CANDIDATES).round().astype(int)]

    spine = [tuple(float(v) for v in c[:-1])]
    for y in cand:
        if np.allclose(y, c[:-1], atol=1e-12):
            continue
        try:
            lam_y = frequency_components(field, y, r_min)["I"]
        except FrequencyError:
            continue
        if abs(lam_y - lam0) <= SPINE_TOLERANCE:
            spine.append(tuple(float(v) for v in y))

    pts = np.array(spine)
    if len(pts) < 2:
        dim = 0
    else:
        dev = pts - pts.mean(axis=0)
        values, _ = jacobi_eigh(dev.T @ dev)
        dim = int(np.sum(values > 1e-6 * max(float(values[0]), 1e-300))) if values[0] > 0 else 0

    stratum, entry = stratum_of(lam0, spec.s)
    log.info(f"[Strates] {c[:-1].tolist()} : λ = {lam0:.4f}, strate {stratum}, dim épine {dim}")
    return {
        "lambda_estimate":    lam0,
        "classified":         entry["lambda"] if entry else None,
        "spine_points":       [list(p) for p in spine],
        "spine_dim_estimate": dim,
        "stratum":            stratum,
        "r_min":              r_min,
    }
