"""
obstacle/special_functions.py — Pochhammer, Gamma, ₂F₁, Legendre P_ν^{±s}

Utilisé pour les familles homogènes et pour vérifier les équations
différentielles polaire (ℒ_{a,λ}) et de Legendre associée.
"""
import logging
import math
from dataclasses import dataclass

from scipy.special import gamma as _gamma
from scipy.special import rgamma as _rgamma

from obstacle.errors import SpecialFunctionError

log = logging.getLogger(__name__)

SERIES_RTOL     = 1e-13
SERIES_MAX_TERM = 100_000
FD_STEP         = 1e-4


def _is_nonpositive_integer(x: float) -> bool:
    return x <= 0 and abs(x - round(x)) < 1e-12


# ─────────────────────────────────────────────
# POCHHAMMER / GAMMA
# ─────────────────────────────────────────────

def pochhammer(q: float, l: int) -> float:
    """(q)_l = q(q+1)···(q+l-1), (q)_0 = 1."""
    if int(l) != l or l < 0:
        raise SpecialFunctionError(f"pochhammer : l doit être un entier ≥ 0 (reçu {l})")
    out = 1.0
    for i in range(int(l)):
        out *= q + i
    return out


def gamma_real(x: float) -> float:
    if _is_nonpositive_integer(x):
        raise SpecialFunctionError(f"Γ a un pôle en {x}")
    return float(_gamma(x))


def recip_gamma(x: float) -> float:
    """1/Γ(x), nul aux pôles x = 0, -1, -2, ..."""
    if _is_nonpositive_integer(x):
        return 0.0
    return float(_rgamma(x))


# ─────────────────────────────────────────────
# HYPERGÉOMÉTRIQUE
# ─────────────────────────────────────────────

@dataclass(frozen=True)
class HypergeometricParams:
    alpha:       float
    beta:        float
    gamma_param: float
    z:           float

    def __post_init__(self):
        if _is_nonpositive_integer(self.gamma_param):
            raise SpecialFunctionError(f"₂F₁ : γ = {self.gamma_param} est un entier ≤ 0")
        if not self.terminating and abs(self.z) >= 1:
            raise SpecialFunctionError(
                f"₂F₁ non terminante avec |z| = {abs(self.z)} ≥ 1 "
                f"(α={self.alpha}, β={self.beta}, γ={self.gamma_param})"
            )

    @property
    def degree(self):
        """Degré du polynôme en z si la série termine, sinon None."""
        degrees = [int(round(-p)) for p in (self.alpha, self.beta) if _is_nonpositive_integer(p)]
        return min(degrees) if degrees else None

    @property
    def terminating(self) -> bool:
        return self.degree is not None


def hyp2f1(p: HypergeometricParams) -> float:
    """Σ_k (α)_k(β)_k / ((γ)_k k!) z^k, somme finie si la série termine."""
    if p.z == 0:
        return 1.0
    terms = [1.0]
    term  = 1.0
    total = 1.0
    limit = p.degree if p.terminating else SERIES_MAX_TERM
    for k in range(limit):
        term *= (p.alpha + k) * (p.beta + k) / ((p.gamma_param + k) * (k + 1)) * p.z
        terms.append(term)
        total += term
        if not math.isfinite(term):
            break
        if not p.terminating and k > 2 and abs(term) <= SERIES_RTOL * abs(total):
            return math.fsum(terms)
    if p.terminating:
        return math.fsum(terms)
    raise SpecialFunctionError(
        f"₂F₁ : série non convergée après {SERIES_MAX_TERM} termes (z={p.z})"
    )


# ─────────────────────────────────────────────
# LEGENDRE P_ν^{±s}
# ─────────────────────────────────────────────

def _legendre_params(nu: float, sign: int, s: float, x: float, form: str) -> HypergeometricParams:
    z = (1.0 - x) / 2.0
    c = 1.0 - sign * s
    if form == "direct":
        return HypergeometricParams(nu + 1.0, -nu, c, z)
    return HypergeometricParams(c - nu - 1.0, c + nu, c, z)


def legendre_p(nu: float, order_sign: int, s: float, x: float, form: str = "auto") -> float:
    """
    P_ν^{±s}(x) = [1/Γ(1∓s)] ((1+x)/(1-x))^{±s/2} ₂F₁(ν+1, -ν, 1∓s, (1-x)/2).

    form = "direct" : la série ci-dessus
    form = "euler"  : ₂F₁(a,b;c;z) = (1-z)^{c-a-b} ₂F₁(c-a, c-b; c; z),
                      terminante quand ν ± s est entier
    form = "auto"   : la première forme terminante, sinon erreur
    """
    if order_sign not in (1, -1):
        raise SpecialFunctionError(f"order_sign doit valoir ±1 (reçu {order_sign})")
    if not (0.0 < s < 1.0):
        raise SpecialFunctionError(f"s doit être dans (0,1) (reçu {s})")
    if not (-1.0 < x < 1.0):
        raise SpecialFunctionError(f"x doit être dans (-1,1) (reçu {x})")
    if form not in ("auto", "direct", "euler"):
        raise SpecialFunctionError(f"Forme inconnue : {form}")

    if form == "auto":
        for candidate in ("direct", "euler"):
            params = _legendre_params(nu, order_sign, s, x, candidate)
            if params.terminating:
                form = candidate
                break
        else:
            raise SpecialFunctionError(
                f"P_ν^{{±s}} non terminante (ν={nu}, s={s}) : ni ν, ni ν±s entier"
            )
    params = _legendre_params(nu, order_sign, s, x, form)

    c      = 1.0 - order_sign * s
    prefac = recip_gamma(c) * ((1.0 + x) / (1.0 - x)) ** (order_sign * s / 2.0)
    if form == "euler":
        prefac *= ((1.0 + x) / 2.0) ** (-order_sign * s)
    return prefac * hyp2f1(params)


# ─────────────────────────────────────────────
# ÉQUATIONS DIFFÉRENTIELLES
# ─────────────────────────────────────────────

def polar_residual(y: float, dy: float, d2y: float, theta: float, a: float, lam: float) -> float:
    """ℒ_{a,λ}[y] = y'' + a cot θ y' + λ(λ+a) y."""
    if not (0.0 < theta < math.pi):
        raise SpecialFunctionError(f"θ doit être dans (0,π) (reçu {theta})")
    return d2y + a * math.cos(theta) / math.sin(theta) * dy + lam * (lam + a) * y


def associated_residual(hv: float, dh: float, d2h: float, x: float, s: float, nu: float) -> float:
    """(1-x²)h'' - 2xh' + (ν²+ν - s²/(1-x²))h."""
    if not (-1.0 < x < 1.0):
        raise SpecialFunctionError(f"x doit être dans (-1,1) (reçu {x})")
    return (1 - x * x) * d2h - 2 * x * dh + (nu * nu + nu - s * s / (1 - x * x)) * hv


def polar_to_associated(y: float, dy: float, d2y: float, theta: float, s: float) -> tuple:
    """(h, h_x, h_xx) en x = cos θ pour y(θ) = sin^s θ · h(cos θ)."""
    sn, cs = math.sin(theta), math.cos(theta)
    S0 = sn ** (-s)
    S1 = sn ** (-s - 1)
    S2 = sn ** (-s - 2)
    hv      = y * S0
    h_t     = dy * S0 - s * y * cs * S1
    h_tt    = d2y * S0 - 2 * s * dy * cs * S1 + s * y * (S0 + (s + 1) * cs * cs * S2)
    h_x     = -h_t / sn
    h_xx    = h_tt / sn ** 2 - h_t * cs / sn ** 3
    return hv, h_x, h_xx


def ode_residuals(y: float, dy: float, d2y: float, theta: float, a: float, lam: float) -> tuple:
    """
    (résidu polaire, résidu de Legendre associé) pour la même fonction :
    h(x) = sin^{-s} θ · y(θ), x = cos θ, ν = λ - s, s = (1-a)/2.
    Le second vaut sin^{-s} θ fois le premier.
    """
    polar = polar_residual(y, dy, d2y, theta, a, lam)
    s     = (1.0 - a) / 2.0
    hv, h_x, h_xx = polar_to_associated(y, dy, d2y, theta, s)
    assoc = associated_residual(hv, h_x, h_xx, math.cos(theta), s, lam - s)
    return polar, assoc


# stencils centrés (dérivée première, dérivée seconde) par demi-largeur
_STENCILS = {
    3: ((-1, 0, 1), (-0.5, 0.0, 0.5), (1.0, -2.0, 1.0)),
    7: (
        (-3, -2, -1, 0, 1, 2, 3),
        (-1 / 60, 9 / 60, -45 / 60, 0.0, 45 / 60, -9 / 60, 1 / 60),
        (2 / 180, -27 / 180, 270 / 180, -490 / 180, 270 / 180, -27 / 180, 2 / 180),
    ),
}


def polar_trace(F, theta: float, step: float = FD_STEP, points: int = 3) -> tuple:
    """
    y, y', y'' de y(θ) = F(cos θ, sin θ) par différences centrées
    à 3 points (ordre 2) ou 7 points (ordre 6).
    """
    if points not in _STENCILS:
        raise SpecialFunctionError(f"Stencil à {points} points indisponible (3 ou 7)")
    offsets, w1, w2 = _STENCILS[points]
    ys = [F(math.cos(theta + k * step), math.sin(theta + k * step)) for k in offsets]
    y0 = ys[offsets.index(0)]
    dy  = math.fsum(w * y for w, y in zip(w1, ys)) / step
    d2y = math.fsum(w * y for w, y in zip(w2, ys)) / step ** 2
    return float(y0), float(dy), float(d2y)
