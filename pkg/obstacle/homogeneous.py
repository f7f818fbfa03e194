"""
obstacle/homogeneous.py — Solutions homogènes Φ_m, Ψ_m, Π_m et h_λ

Familles à deux variables (x1 = x·e dans le plan mince, x2 = x_{n+1}) :
  Φ_m = Σ α_k x1^{m-2k} x2^{2k}                        (λ = m)
  Ψ_m = (ρ+x1)^s Σ β_k (ρ-x1)^k ρ^{m-k}                 (λ = m+s)
  Π_m = |x2|^{2s} Σ γ_k x2^{2k} (d/dx1)^{2k} x1^m       (λ = m+2s)

Solutions du problème d'obstacle à épine maximale (c > 0) :
  λ = 2m      → c·h_λ, multiple positif de Φ_{2m}
  λ = 2m-1+s  → c·h_λ, multiple positif de Ψ_{2m-1}
  λ = 2m+2s   → c·h_λ, multiple NÉGATIF de Π_{2m}   (flux ≤ 0 sur Λ)
h_λ est normalisée par H(0,1) = 1 dans ℝ².
"""
import logging
import math
import threading
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.integrate import quad

from obstacle.errors import ProfileError
from obstacle.special_functions import pochhammer
from obstacle.weighted_grid import GridSpec, ScalarField, sample

log = logging.getLogger(__name__)

FAMILIES = ("Phi", "Psi", "PsiReflected", "Pi")

_norm_cache: dict = {}
_norm_lock = threading.Lock()


# ─────────────────────────────────────────────
# POLYNÔMES HOMOGÈNES
# ─────────────────────────────────────────────

@dataclass(frozen=True)
class PolynomialND:
    """Polynôme homogène : {multi-indice: coefficient}."""
    nvars:  int
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for idx, c in self.coeffs.items():
            idx = tuple(int(i) for i in idx)
            if len(idx) != self.nvars or any(i < 0 for i in idx):
                raise ProfileError(f"Multi-indice {idx} invalide pour {self.nvars} variable(s)")
            if c != 0:
                clean[idx] = clean.get(idx, 0.0) + float(c)
        degrees = {sum(idx) for idx in clean}
        if len(degrees) > 1:
            raise ProfileError(f"Polynôme non homogène (degrés {sorted(degrees)})")
        object.__setattr__(self, "coeffs", clean)

    @classmethod
    def constant(cls, nvars: int, value: float = 1.0) -> "PolynomialND":
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def monomial(cls, exponents, value: float = 1.0) -> "PolynomialND":
        exponents = tuple(exponents)
        return cls(len(exponents), {exponents: value})

    @property
    def degree(self):
        """Degré d'homogénéité (None pour le polynôme nul)."""
        if not self.coeffs:
            return None
        return sum(next(iter(self.coeffs)))

    def is_zero(self) -> bool:
        return not self.coeffs

    def partial(self, i: int, order: int = 1) -> "PolynomialND":
        out = {}
        for idx, c in self.coeffs.items():
            if idx[i] < order:
                continue
            factor = 1
            for j in range(order):
                factor *= idx[i] - j
            new = list(idx)
            new[i] -= order
            out[tuple(new)] = out.get(tuple(new), 0.0) + c * factor
        return PolynomialND(self.nvars, out)

    def laplacian(self, power: int = 1) -> "PolynomialND":
        p = self
        for _ in range(power):
            total = {}
            for i in range(self.nvars):
                for idx, c in p.partial(i, 2).coeffs.items():
                    total[idx] = total.get(idx, 0.0) + c
            p = PolynomialND(self.nvars, total)
        return p

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.nvars:
            raise ProfileError(f"Point de dimension {x.shape[-1]}, polynôme à {self.nvars} variable(s)")
        out = np.zeros(x.shape[:-1])
        for idx, c in self.coeffs.items():
            term = np.full(x.shape[:-1], c)
            for i, e in enumerate(idx):
                if e:
                    term = term * x[..., i] ** e
            out = out + term
        return out

    def to_dict(self) -> dict:
        return {"nvars": self.nvars,
                "terms": [{"exponents": list(k), "coeff": v} for k, v in sorted(self.coeffs.items())]}


# ─────────────────────────────────────────────
# COEFFICIENTS
# ─────────────────────────────────────────────

def _exact(s: float):
    """s en rationnel exact quand il en est un (à la précision machine)."""
    frac = Fraction(s).limit_denominator(10_000)
    return frac if abs(float(frac) - s) <= 1e-15 else float(s)


def phi_coefficients(m: int, s: float) -> list:
    s = _exact(s)
    coeffs = [Fraction(1) if isinstance(s, Fraction) else 1.0]
    for k in range(m // 2):
        coeffs.append(-coeffs[-1] * (m - 2 * k) * (m - 2 * k - 1) / (4 * (k + 1) * (k + 1 - s)))
    return [float(c) for c in coeffs]


def psi_coefficients(m: int, s: float) -> list:
    s = _exact(s)
    coeffs = []
    for k in range(m + 1):
        num = pochhammer(m + 1, k) * pochhammer(-m, k)
        if isinstance(s, Fraction):
            den = Fraction(2 ** k * math.factorial(k))
            for i in range(k):
                den *= 1 - s + i
            coeffs.append(float(Fraction(int(round(num))) / den))
        else:
            coeffs.append(num / (2 ** k * math.factorial(k) * pochhammer(1 - s, k)))
    return coeffs


def pi_coefficients(kmax: int, s: float) -> list:
    """γ_k = (-1)^k / (4^k k! (1+s)_k)."""
    s = _exact(s)
    coeffs = []
    for k in range(kmax + 1):
        if isinstance(s, Fraction):
            den = Fraction(4 ** k * math.factorial(k))
            for i in range(k):
                den *= 1 + s + i
            coeffs.append(float((-1) ** k / den))
        else:
            coeffs.append((-1) ** k / (4 ** k * math.factorial(k) * pochhammer(1 + s, k)))
    return coeffs


# ─────────────────────────────────────────────
# FAMILLES EN 2D
# ─────────────────────────────────────────────

def phi_eval(m: int, x1, x2, s: float):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    out = np.zeros(np.broadcast(x1, x2).shape)
    for k, alpha in enumerate(phi_coefficients(m, s)):
        out = out + alpha * x1 ** (m - 2 * k) * x2 ** (2 * k)
    return out


def psi_eval(m: int, x1, x2, s: float):
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    rho = np.hypot(x1, x2)
    with np.errstate(divide="ignore", invalid="ignore"):
        # ρ ± x1 sans annulation
        plus  = np.where(x1 >= 0, rho + x1, x2 * x2 / (rho - x1))
        minus = np.where(x1 <= 0, rho - x1, x2 * x2 / (rho + x1))
    plus  = np.where(rho > 0, np.maximum(plus, 0.0), 0.0)
    minus = np.where(rho > 0, np.maximum(minus, 0.0), 0.0)
    total = np.zeros(rho.shape)
    for k, beta in enumerate(psi_coefficients(m, s)):
        total = total + beta * minus ** k * rho ** (m - k)
    return plus ** s * total


def pi_eval(m: int, p: PolynomialND, xprime, t, s: float):
    """|t|^{2s} Σ_k γ_k t^{2k} (Δ^k p)(x')."""
    if p.degree is not None and p.degree != m:
        raise ProfileError(f"Polynôme de degré {p.degree}, attendu {m}")
    t = np.asarray(t, dtype=float)
    out = np.zeros(np.broadcast(np.asarray(xprime, dtype=float)[..., 0], t).shape)
    lap = p
    for k, gamma_k in enumerate(pi_coefficients(m // 2, s)):
        if lap.is_zero():
            break
        out = out + gamma_k * t ** (2 * k) * lap.evaluate(xprime)
        lap = lap.laplacian()
    return np.abs(t) ** (2 * s) * out


def pi2d_eval(m: int, x1, x2, s: float):
    """Π_m du plan : p = x1^m."""
    x1 = np.asarray(x1, dtype=float)
    return pi_eval(m, PolynomialND.monomial((m,)), x1[..., None], x2, s)


def family_lambda(family: str, m: int, s: float) -> float:
    if family == "Phi":
        return float(m)
    if family in ("Psi", "PsiReflected"):
        return m + s
    if family == "Pi":
        return m + 2 * s
    raise ProfileError(f"Famille inconnue : {family}")


def family_eval(family: str, m: int, x1, x2, s: float):
    if family == "Phi":
        return phi_eval(m, x1, x2, s)
    if family == "Psi":
        return psi_eval(m, x1, x2, s)
    if family == "PsiReflected":
        return psi_eval(m, -np.asarray(x1, dtype=float), x2, s)
    if family == "Pi":
        return pi2d_eval(m, x1, x2, s)
    raise ProfileError(f"Famille inconnue : {family}")


# ─────────────────────────────────────────────
# TRACES POLAIRES EXACTES
# ─────────────────────────────────────────────

def _plane_polynomial(family: str, m: int, s: float) -> PolynomialND:
    """Partie polynomiale en (x1, x2) de Φ_m, ou de Π_m / |x2|^{2s}."""
    if family == "Phi":
        return PolynomialND(2, {(m - 2 * k, 2 * k): alpha for k, alpha in enumerate(phi_coefficients(m, s))})
    coeffs = {}
    lap = PolynomialND.monomial((m,))
    for k, gamma_k in enumerate(pi_coefficients(m // 2, s)):
        if lap.is_zero():
            break
        (idx, c), = lap.coeffs.items()
        coeffs[(idx[0], 2 * k)] = gamma_k * c
        lap = lap.laplacian()
    return PolynomialND(2, coeffs)


def _psi_polar_jet(m: int, theta: float, s: float) -> tuple:
    # y = w^s q(u), w = 1 + cos θ, u = 1 - cos θ
    sn, cs = math.sin(theta), math.cos(theta)
    w, u = 1.0 + cs, 1.0 - cs
    q = np.polynomial.Polynomial(psi_coefficients(m, s))
    q0, q1, q2 = float(q(u)), float(q.deriv(1)(u)), float(q.deriv(2)(u))
    C  = -s * q0 + w * q1
    dC = sn * (w * q2 - (s + 1) * q1)
    y   = w ** s * q0
    dy  = sn * w ** (s - 1) * C
    d2y = cs * w ** (s - 1) * C - (s - 1) * w ** (s - 2) * sn * sn * C + sn * w ** (s - 1) * dC
    return y, dy, d2y


def polar_jet(family: str, m: int, theta: float, s: float) -> tuple:
    """
    y, y', y'' exacts de y(θ) = F(cos θ, sin θ) pour le membre brut F
    de la famille, θ ∈ (0, π).
    """
    if not (0.0 < theta < math.pi):
        raise ProfileError(f"θ doit être dans (0,π) (reçu {theta})")
    if family == "PsiReflected":
        y, dy, d2y = _psi_polar_jet(m, math.pi - theta, s)
        return y, -dy, d2y
    if family == "Psi":
        return _psi_polar_jet(m, theta, s)
    if family not in ("Phi", "Pi"):
        raise ProfileError(f"Famille inconnue : {family}")

    sn, cs = math.sin(theta), math.cos(theta)
    P = _plane_polynomial(family, m, s)
    at = np.array([[cs, sn]])

    def d(i, j):
        q = P
        if i:
            q = q.partial(0, i)
        if j:
            q = q.partial(1, j)
        return float(q.evaluate(at)[0])

    F, Fx, Ft, Fxx, Fxt, Ftt = d(0, 0), d(1, 0), d(0, 1), d(2, 0), d(1, 1), d(0, 2)
    if family == "Pi":
        # F = t^{2s} P
        T0, T1, T2 = sn ** (2 * s), 2 * s * sn ** (2 * s - 1), 2 * s * (2 * s - 1) * sn ** (2 * s - 2)
        F, Fx, Ft, Fxx, Fxt, Ftt = (
            T0 * F, T0 * Fx, T1 * F + T0 * Ft, T0 * Fxx, T1 * Fx + T0 * Fxt, T2 * F + 2 * T1 * Ft + T0 * Ftt,
        )
    dy  = -sn * Fx + cs * Ft
    d2y = sn * sn * Fxx - 2 * sn * cs * Fxt + cs * cs * Ftt - cs * Fx - sn * Ft
    return F, dy, d2y


# ─────────────────────────────────────────────
# NORMALISATION ET CLASSIFICATION DE λ
# ─────────────────────────────────────────────

def _sin_ratio(theta):
    """sin θ / (θ(π-θ)), prolongé par 1/π aux bords."""
    if theta <= 1e-12 or math.pi - theta <= 1e-12:
        return 1.0 / math.pi
    return math.sin(theta) / (theta * (math.pi - theta))


def _raw_h(family: str, m: int, s: float) -> float:
    """H(0,1) dans ℝ² du membre brut de la famille."""
    lam = family_lambda(family, m, s)
    a   = 1.0 - 2.0 * s

    def integrand(theta):
        y = float(family_eval(family, m, math.cos(theta), math.sin(theta), s))
        return y * y * _sin_ratio(theta) ** a

    angular, _ = quad(integrand, 0.0, math.pi, weight="alg", wvar=(a, a), limit=200)
    radial = 2.0 * (1.0 - 2.0 ** (-(2 * lam + a + 1))) / (2 * lam + a + 1)
    return radial * 2.0 * angular


def family_norm(family: str, m: int, s: float) -> float:
    """Facteur rendant H(0,1) = 1 ; calculé une fois par (famille, m, s)."""
    key = ("Psi" if family == "PsiReflected" else family, int(m), round(float(s), 15))
    cached = _norm_cache.get(key)
    if cached is not None:
        return cached
    with _norm_lock:
        if key not in _norm_cache:
            raw = _raw_h(key[0], key[1], key[2])
            if raw <= 0:
                raise ProfileError(f"Normalisation dégénérée pour {key}")
            _norm_cache[key] = 1.0 / math.sqrt(raw)
            log.debug(f"[Profils] Constante de normalisation {key} = {_norm_cache[key]:.12g}")
        return _norm_cache[key]


def admissible_lambdas(s: float, up_to: float) -> list:
    """Fréquences admissibles ≤ up_to : 2m, 2m-1+s, 2m+2s (m ≥ 1)."""
    out = []
    m = 1
    while 2 * m - 1 + s <= up_to:
        for value, family, degree, kind in (
            (2.0 * m,        "Phi", 2 * m,     "even"),
            (2 * m - 1 + s,  "Psi", 2 * m - 1, "odd_plus_s"),
            (2 * m + 2 * s,  "Pi",  2 * m,     "even_plus_2s"),
        ):
            if value <= up_to:
                out.append({"lambda": value, "family": family, "m": degree, "kind": kind})
        m += 1
    return sorted(out, key=lambda d: d["lambda"])


def classify_lambda(lam: float, s: float, window: float = 0.1):
    """Fréquence admissible la plus proche de lam si elle est à moins de window."""
    best = None
    for entry in admissible_lambdas(s, lam + window + 1.0):
        gap = abs(entry["lambda"] - lam)
        if gap <= window and (best is None or gap < abs(best["lambda"] - lam)):
            best = entry
    return best


def _exact_family(lam: float, s: float) -> dict:
    entry = classify_lambda(lam, s, window=1e-9)
    if entry is None:
        raise ProfileError(f"λ = {lam} hors de {{2m, 2m-1+s, 2m+2s : m ≥ 1}} (s={s})")
    return entry


def normalization_constant(lam: float, s: float) -> float:
    """Constante signée c_λ telle que h_λ = c_λ · F_m (négative pour Π)."""
    entry = _exact_family(lam, s)
    sign  = -1.0 if entry["family"] == "Pi" else 1.0
    return sign * family_norm(entry["family"], entry["m"], s)


def h_lambda_eval(lam: float, x1, x2, s: float):
    entry = _exact_family(lam, s)
    return normalization_constant(lam, s) * family_eval(entry["family"], entry["m"], x1, x2, s)


# ─────────────────────────────────────────────
# PROFILS EMBARQUÉS DANS ℝ^{n+1}
# ─────────────────────────────────────────────

@dataclass(frozen=True)
class HomogeneousProfile:
    family:     str
    m:          int
    s:          float
    direction:  tuple = (1.0,)
    amplitude:  float = 1.0
    normalized: bool = True

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ProfileError(f"Famille inconnue : {self.family}")
        if int(self.m) != self.m or self.m < 0:
            raise ProfileError(f"m doit être un entier ≥ 0 (reçu {self.m})")
        if not (0.0 < self.s < 1.0):
            raise ProfileError(f"s doit être dans (0,1) (reçu {self.s})")
        e = np.asarray(self.direction, dtype=float).ravel()
        if not np.isclose(np.linalg.norm(e), 1.0, atol=1e-9):
            raise ProfileError(f"Direction non unitaire : {e.tolist()}")
        object.__setattr__(self, "direction", tuple(float(c) for c in e))
        object.__setattr__(self, "m", int(self.m))

    @property
    def lam(self) -> float:
        return family_lambda(self.family, self.m, self.s)

    @property
    def admissible(self) -> bool:
        """Cas d'obstacle à épine maximale (m pair pour Φ/Π, impair pour Ψ, c > 0)."""
        if self.amplitude <= 0:
            return False
        if self.family in ("Phi", "Pi"):
            return self.m >= 2 and self.m % 2 == 0
        return self.m % 2 == 1

    @property
    def scale(self) -> float:
        if not self.normalized:
            return self.amplitude
        sign = -1.0 if self.family == "Pi" else 1.0
        return sign * self.amplitude * family_norm(self.family, self.m, self.s)

    def thin_direction(self, n: int) -> np.ndarray:
        e = np.asarray(self.direction)
        if len(e) == n + 1:
            if abs(e[-1]) > 1e-12:
                raise ProfileError("La direction doit être dans le plan mince")
            e = e[:-1]
        if len(e) != n:
            raise ProfileError(f"Direction de dimension {len(e)} pour n = {n}")
        return e

    def evaluator(self, n: int):
        e = self.thin_direction(n)
        scale = self.scale

        def f(points):
            points = np.asarray(points, dtype=float)
            x1 = points[..., :n] @ e
            return scale * family_eval(self.family, self.m, x1, points[..., n], self.s)

        return f

    def to_dict(self) -> dict:
        return {
            "family":     self.family,
            "m":          self.m,
            "s":          self.s,
            "lambda":     self.lam,
            "direction":  list(self.direction),
            "amplitude":  self.amplitude,
            "normalized": self.normalized,
        }


def embed_profile(profile: HomogeneousProfile, spec: GridSpec) -> ScalarField:
    """Champ échantillonné de c·h_λ(x·e, x_{n+1})."""
    if abs(profile.s - spec.s) > 1e-12:
        raise ProfileError(f"s du profil ({profile.s}) ≠ s de la grille ({spec.s})")
    return sample(spec, profile.evaluator(spec.n))


# ─────────────────────────────────────────────
# ENSEMBLES Λ, Γ, 𝒩, S
# ─────────────────────────────────────────────

@dataclass(frozen=True)
class ThinSetShape:
    """
    Sous-ensemble analytique du plan mince :
      empty | spine {x·e = 0} | half {σ x·e ≤ 0} | plane {tout le plan}
    """
    kind:        str
    direction:   tuple
    orientation: float = 1.0

    def contains(self, xprime, tol: float = 1e-12) -> np.ndarray:
        xprime = np.asarray(xprime, dtype=float)
        proj = xprime @ np.asarray(self.direction)[: xprime.shape[-1]]
        if self.kind == "empty":
            return np.zeros(proj.shape, dtype=bool)
        if self.kind == "plane":
            return np.ones(proj.shape, dtype=bool)
        if self.kind == "spine":
            return np.abs(proj) <= tol
        return self.orientation * proj <= tol

    def describe(self) -> str:
        e = [round(c, 6) for c in self.direction]
        return {
            "empty": "∅",
            "plane": "{x_{n+1} = 0}",
            "spine": f"{{x·e = 0, x_{{n+1}} = 0}}, e = {e}",
            "half":  f"{{{'' if self.orientation > 0 else '-'}x·e ≤ 0, x_{{n+1}} = 0}}, e = {e}",
        }[self.kind]


def profile_sets(profile: HomogeneousProfile) -> dict:
    """Λ (contact), Γ (free_boundary), 𝒩 (nodal), S (spine) d'un profil admissible."""
    if not profile.admissible:
        raise ProfileError(
            f"Profil non admissible : {profile.family}_{profile.m}, c = {profile.amplitude}"
        )
    e = profile.direction
    line = ThinSetShape("spine", e)
    if profile.family == "Phi":
        return {"contact": line, "free_boundary": line, "nodal": line, "spine": line}
    if profile.family in ("Psi", "PsiReflected"):
        orientation = 1.0 if profile.family == "Psi" else -1.0
        return {
            "contact":       ThinSetShape("half", e, orientation),
            "free_boundary": line,
            "nodal":         line,
            "spine":         line,
        }
    return {
        "contact":       ThinSetShape("plane", e),
        "free_boundary": ThinSetShape("empty", e),
        "nodal":         line,
        "spine":         line,
    }


def profile_point_set(profile: HomogeneousProfile, spec: GridSpec):
    """
    Rastérise profile_sets sur les nœuds du plan mince (bande |x·e| ≤ h/2
    pour les droites), sans échantillonner le champ volumique.
    """
    from obstacle.geometry import ThinPointSet, free_boundary_mask

    sets = profile_sets(profile)
    e = profile.thin_direction(spec.n)
    mesh = np.stack(np.meshgrid(*[spec.axis(d) for d in range(spec.n)], indexing="ij"), axis=-1)
    band = 0.5 * spec.spacing * (1 + 1e-9)
    if sets["contact"].kind == "spine":
        contact = np.abs(mesh @ e) <= band
    else:
        contact = sets["contact"].contains(mesh, tol=1e-9 * spec.spacing)
    fb    = free_boundary_mask(contact)
    spine = np.abs(mesh @ e) <= band
    return ThinPointSet(
        spec=spec,
        contact=contact,
        free_boundary=fb,
        nodal=fb | (spine & contact),
        contact_tol=0.0,
        grad_tol=0.0,
    )


# ─────────────────────────────────────────────
# SUPERPOSITIONS ET RÉSIDU PONCTUEL
# ─────────────────────────────────────────────

def _orthonormal_complement(e: np.ndarray) -> np.ndarray:
    """Base (n-1, n) de e^⊥ dans le plan mince."""
    n = len(e)
    if n == 1:
        return np.zeros((0, 1))
    if n == 2:
        return np.array([[-e[1], e[0]]])
    raise ProfileError(f"n = {n} non pris en charge")


def superpose_general(terms: list, s: float, direction=(1.0,)):
    """
    u(x) = Σ p_k(x'') F_{m-k}(x·e, x_{n+1}), x'' ∈ e^⊥ (plan mince).
    terms : liste de (PolynomialND p_k, famille, degré de F). Chaque p_k doit
    être harmonique et homogène. Renvoie un évaluateur ponctuel.
    """
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    basis = _orthonormal_complement(e)
    n = len(e)
    for p, family, degree in terms:
        if family not in FAMILIES:
            raise ProfileError(f"Famille inconnue : {family}")
        if p.nvars != n - 1:
            raise ProfileError(f"p_k à {p.nvars} variable(s), attendu {n - 1}")
        lap = p.laplacian()
        if not lap.is_zero():
            idx = next(iter(lap.coeffs))
            raise ProfileError(f"p_k non harmonique : Δp a le terme {idx} (coefficient {lap.coeffs[idx]})")
        if int(degree) != degree or degree < 0:
            raise ProfileError(f"Degré de famille invalide : {degree}")

    def f(points):
        points = np.asarray(points, dtype=float)
        x1 = points[..., :n] @ e
        xs = points[..., :n] @ basis.T
        t  = points[..., n]
        out = np.zeros(x1.shape)
        for p, family, degree in terms:
            out = out + p.evaluate(xs) * family_eval(family, degree, x1, t, s)
        return out

    return f


def pde_residual(evaluator, points, a: float, step: float = 1e-3) -> np.ndarray:
    """
    div(|x_{n+1}|^a ∇u) aux points (..., n+1) par différences de flux centrées :
    Σ_d [w⁺(u(x+δe_d) - u(x)) - w⁻(u(x) - u(x-δe_d))] / δ².
    """
    points = np.asarray(points, dtype=float)
    dim = points.shape[-1]
    u0 = evaluator(points)
    out = np.zeros(u0.shape)
    for d in range(dim):
        shift = np.zeros(dim)
        shift[d] = step
        up, down = evaluator(points + shift), evaluator(points - shift)
        if d == dim - 1:
            w_up   = np.abs(points[..., d] + step / 2) ** a
            w_down = np.abs(points[..., d] - step / 2) ** a
        else:
            w_up = w_down = np.abs(points[..., -1]) ** a
        out = out + (w_up * (up - u0) - w_down * (u0 - down)) / step ** 2
    return out
