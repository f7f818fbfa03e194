"""
obstacle/weighted_grid.py — Grilles demi-boîte et poids dégénéré |x_{n+1}|^a

Conventions :
  - boîte [-R,R]^n × [0,R], nœuds aux multiples entiers de h (plan mince inclus)
  - le dernier axe est x_{n+1} ; les valeurs pour x_{n+1} < 0 viennent de la
    réflexion paire u(x', -t) = u(x', t) et ne sont jamais stockées
  - poids d'une couche de cellules [jh, (j+1)h] : moyenne exacte de t^a
  - un seul stencil (coefficients d'arêtes) sert au résidu, à l'énergie
    et au solveur
"""
import logging
import struct
from dataclasses import dataclass
from functools import cached_property, lru_cache
from itertools import product

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from obstacle.errors import GridError

log = logging.getLogger(__name__)

DUMP_MAGIC = b"TFB1"


# ─────────────────────────────────────────────
# TYPES
# ─────────────────────────────────────────────

@dataclass(frozen=True)
class GridSpec:
    ambient_dim:     int
    half_width:      float
    spacing:         float
    weight_exponent: float

    def __post_init__(self):
        if self.ambient_dim not in (2, 3):
            raise GridError(f"ambient_dim doit valoir 2 ou 3 (reçu {self.ambient_dim})")
        if not (-1.0 < self.weight_exponent < 1.0):
            raise GridError(f"a doit être dans (-1,1) (reçu {self.weight_exponent})")
        if self.half_width <= 0 or self.spacing <= 0:
            raise GridError("R et h doivent être strictement positifs")
        ratio = self.half_width / self.spacing
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise GridError(f"R/h doit être entier (R={self.half_width}, h={self.spacing})")

    @property
    def n(self) -> int:
        return self.ambient_dim - 1

    @property
    def a(self) -> float:
        return self.weight_exponent

    @property
    def s(self) -> float:
        return (1.0 - self.weight_exponent) / 2.0

    @property
    def cells(self) -> int:
        """Nombre de cellules sur une demi-largeur (R/h)."""
        return int(round(self.half_width / self.spacing))

    @property
    def shape(self) -> tuple:
        k = self.cells
        return (2 * k + 1,) * self.n + (k + 1,)

    @property
    def cell_shape(self) -> tuple:
        return tuple(size - 1 for size in self.shape)

    def axis(self, d: int) -> np.ndarray:
        """Coordonnées des nœuds le long de l'axe d."""
        k = self.cells
        if d == self.n:
            return np.arange(k + 1) * self.spacing
        return (np.arange(2 * k + 1) - k) * self.spacing

    def axes(self) -> tuple:
        return tuple(self.axis(d) for d in range(self.ambient_dim))

    def coordinates(self) -> np.ndarray:
        """Coordonnées de tous les nœuds, forme shape + (n+1,)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def node_point(self, index) -> np.ndarray:
        return np.array([self.axis(d)[i] for d, i in enumerate(index)])

    def thin_index(self, point) -> tuple:
        """Indice du nœud du plan mince le plus proche d'un point x'."""
        k = self.cells
        idx = []
        for c in np.asarray(point, dtype=float)[: self.n]:
            i = int(round(c / self.spacing)) + k
            idx.append(min(max(i, 0), 2 * k))
        return tuple(idx)

    def to_dict(self) -> dict:
        return {
            "ambient_dim":     self.ambient_dim,
            "half_width":      self.half_width,
            "spacing":         self.spacing,
            "weight_exponent": self.weight_exponent,
        }


@dataclass(frozen=True, eq=False)
class ScalarField:
    spec:   GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.spec.shape:
            raise GridError(f"Forme {values.shape} incompatible avec la grille {self.spec.shape}")
        if not np.all(np.isfinite(values)):
            bad = tuple(int(i) for i in np.argwhere(~np.isfinite(values))[0])
            raise GridError(f"Valeur non finie au nœud {bad}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def plane(self) -> np.ndarray:
        """Trace sur le plan mince x_{n+1} = 0."""
        return self.values[..., 0]

    @cached_property
    def interpolator(self) -> RegularGridInterpolator:
        return RegularGridInterpolator(self.spec.axes(), self.values, method="linear")

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.spec, values)


# ─────────────────────────────────────────────
# CONSTRUCTION
# ─────────────────────────────────────────────

def make_grid(ambient_dim: int, half_width: float, spacing: float, a: float) -> GridSpec:
    return GridSpec(int(ambient_dim), float(half_width), float(spacing), float(a))


def sample(spec: GridSpec, f) -> ScalarField:
    """
    Échantillonne f aux nœuds. f reçoit un tableau de points (..., n+1)
    et renvoie un tableau de même forme préfixe (ou un scalaire).
    """
    points = spec.coordinates()
    with np.errstate(all="ignore"):
        values = np.asarray(f(points), dtype=float)
    values = np.array(np.broadcast_to(values, spec.shape))
    finite = np.isfinite(values)
    if not np.all(finite):
        bad = tuple(int(i) for i in np.argwhere(~finite)[0])
        raise GridError(f"Évaluation non finie au nœud {bad} (x = {points[bad].tolist()})")
    return ScalarField(spec, values)


# ─────────────────────────────────────────────
# INTERPOLATION
# ─────────────────────────────────────────────

def _reflect_and_check(spec: GridSpec, points) -> tuple:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != spec.ambient_dim:
        raise GridError(f"Points de dimension {pts.shape[-1]} pour une grille en dimension {spec.ambient_dim}")
    sign = np.where(pts[:, -1] < 0, -1.0, 1.0)
    pts = pts.copy()
    pts[:, -1] = np.abs(pts[:, -1])
    R   = spec.half_width
    eps = 1e-9 * R
    if np.any(np.abs(pts) > R + eps):
        worst = pts[np.argmax(np.max(np.abs(pts), axis=1))]
        raise GridError(f"Point hors de la boîte : {worst.tolist()} (R={R})")
    return np.clip(pts, -R, R), sign


def interpolate_many(field: ScalarField, points) -> np.ndarray:
    pts, _ = _reflect_and_check(field.spec, points)
    return field.interpolator(pts)


def interpolate(field: ScalarField, p) -> float:
    """Interpolation multilinéaire (réflexion paire si p_{n+1} < 0)."""
    return float(interpolate_many(field, np.asarray(p, dtype=float)[None, :])[0])


def evaluate(field: ScalarField, points) -> tuple:
    """
    Valeurs et gradients aux points donnés.
    Multilinéaire partout, sauf dans la première couche (t < h) où le profil
    vertical est τ^{2s} : c'est la solution a-harmonique à une variable.
    Renvoie (values (P,), gradients (P, n+1)).
    """
    spec = field.spec
    pts, sign = _reflect_and_check(spec, points)
    n, h, R = spec.n, spec.spacing, spec.half_width
    shape = spec.shape

    base, frac = [], []
    for d in range(n + 1):
        loc = pts[:, d] / h if d == n else (pts[:, d] + R) / h
        i0  = np.minimum(np.floor(loc).astype(int), shape[d] - 2)
        base.append(i0)
        frac.append(loc - i0)

    # facteurs 1D (poids du coin haut) et leurs dérivées
    up, dup = [], []
    for d in range(n + 1):
        f = frac[d]
        if d == n and abs(spec.s - 0.5) > 1e-15:
            first = base[d] == 0
            tau   = np.clip(f, 0.0, 1.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                psi  = np.where(first, tau ** (2 * spec.s), f)
                dpsi = np.where(first & (tau > 0), 2 * spec.s * tau ** (2 * spec.s - 1), 1.0)
            dpsi = np.where(first & (tau <= 0), 0.0, dpsi)
            up.append(psi)
            dup.append(dpsi / h)
        else:
            up.append(f)
            dup.append(np.full_like(f, 1.0 / h))

    values = np.zeros(len(pts))
    grads  = np.zeros((len(pts), n + 1))
    for corner in product((0, 1), repeat=n + 1):
        node = field.values[tuple(base[d] + corner[d] for d in range(n + 1))]
        factors  = [up[d] if corner[d] else 1.0 - up[d] for d in range(n + 1)]
        dfactors = [dup[d] if corner[d] else -dup[d] for d in range(n + 1)]
        values += node * np.prod(factors, axis=0)
        for k in range(n + 1):
            term = dfactors[k]
            for d in range(n + 1):
                if d != k:
                    term = term * factors[d]
            grads[:, k] += node * term
    grads[:, n] *= sign
    return values, grads


# ─────────────────────────────────────────────
# POIDS ET STENCIL
# ─────────────────────────────────────────────

def integrated_weight(t0, t1, a: float):
    """∫_{t0}^{t1} t^a dt pour 0 ≤ t0 ≤ t1."""
    return (np.power(t1, 1.0 + a) - np.power(t0, 1.0 + a)) / (1.0 + a)


def layer_weights(spec: GridSpec) -> np.ndarray:
    """Moyenne exacte de t^a sur chaque couche de cellules."""
    j = np.arange(spec.cells, dtype=float)
    h = spec.spacing
    return integrated_weight(j * h, (j + 1) * h, spec.a) / h


def _shift_average(arr: np.ndarray, axis: int) -> np.ndarray:
    pad = [(0, 0)] * arr.ndim
    pad[axis] = (1, 1)
    padded = np.pad(arr, pad)
    lo = [slice(None)] * arr.ndim
    hi = [slice(None)] * arr.ndim
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    return 0.5 * (padded[tuple(lo)] + padded[tuple(hi)])


@lru_cache(maxsize=32)
def stencil(spec: GridSpec) -> tuple:
    """
    Coefficients d'arêtes κ_d, un tableau par axe (forme des nœuds avec
    l'axe d réduit de 1) : κ = 2 h^{n-1} · Σ_{cellules adjacentes} W / 2^n.
    L'énergie discrète vaut Σ_d Σ κ_d (Δ_d u)².
    """
    n = spec.n
    cell_w = np.broadcast_to(layer_weights(spec), spec.cell_shape)
    kappas = []
    for d in range(n + 1):
        acc = np.array(cell_w, dtype=float)
        for e in range(n + 1):
            if e != d:
                acc = _shift_average(acc, e)
        k = 2.0 * spec.spacing ** (n - 1) * acc
        k.flags.writeable = False
        kappas.append(k)
    return tuple(kappas)


def _edge_slices(ndim: int, d: int) -> tuple:
    lo = [slice(None)] * ndim
    hi = [slice(None)] * ndim
    lo[d] = slice(0, -1)
    hi[d] = slice(1, None)
    return tuple(lo), tuple(hi)


def apply_operator(spec: GridSpec, values: np.ndarray) -> np.ndarray:
    """A(u)_i = Σ_{arêtes ij} κ_ij (u_j - u_i) sur tous les nœuds."""
    out = np.zeros(spec.shape)
    for d, kappa in enumerate(stencil(spec)):
        lo, hi = _edge_slices(len(spec.shape), d)
        flux = kappa * np.diff(values, axis=d)
        out[lo] += flux
        out[hi] -= flux
    return out


def diagonal(spec: GridSpec) -> np.ndarray:
    """Σ des coefficients d'arêtes incidentes à chaque nœud."""
    out = np.zeros(spec.shape)
    for d, kappa in enumerate(stencil(spec)):
        lo, hi = _edge_slices(len(spec.shape), d)
        out[lo] += kappa
        out[hi] += kappa
    return out


def interior_slice(spec: GridSpec) -> tuple:
    return tuple(slice(1, -1) for _ in spec.shape)


def weighted_divergence_residual(field: ScalarField) -> np.ndarray:
    """
    Résidu de div(|x_{n+1}|^a ∇u) aux nœuds intérieurs (t > 0),
    forme flux : Σ κ (u_voisin - u) / (2 h^{n+1}).
    """
    spec = field.spec
    out  = apply_operator(spec, field.values)
    return out[interior_slice(spec)] / (2.0 * spec.spacing ** (spec.n + 1))


def plane_flux(field: ScalarField) -> np.ndarray:
    """
    Flux normal pondéré discret aux nœuds intérieurs du plan mince :
    Σ κ (u_voisin - u) / (2 h^n). Négatif ou nul pour une solution.
    """
    spec = field.spec
    out  = apply_operator(spec, field.values)[..., 0]
    inner = tuple(slice(1, -1) for _ in range(spec.n))
    return out[inner] / (2.0 * spec.spacing ** spec.n)


def dirichlet_mask(spec: GridSpec) -> np.ndarray:
    """Nœuds imposés : une coordonnée mince à ±R, ou t = R."""
    mask = np.zeros(spec.shape, dtype=bool)
    for d in range(spec.n):
        lo = [slice(None)] * (spec.n + 1)
        hi = [slice(None)] * (spec.n + 1)
        lo[d] = 0
        hi[d] = -1
        mask[tuple(lo)] = True
        mask[tuple(hi)] = True
    mask[..., -1] = True
    return mask


def discrete_energy(field: ScalarField) -> float:
    total = 0.0
    for d, kappa in enumerate(stencil(field.spec)):
        total += float(np.sum(kappa * np.diff(field.values, axis=d) ** 2))
    return total


# ─────────────────────────────────────────────
# DUMP BINAIRE
# ─────────────────────────────────────────────

def write_field_dump(field: ScalarField, path: str) -> None:
    spec = field.spec
    header = DUMP_MAGIC + struct.pack("<I", spec.ambient_dim)
    header += struct.pack(f"<{spec.ambient_dim}I", *spec.shape)
    header += struct.pack("<dd", spec.spacing, spec.a)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes(order="C"))
    log.info(f"[Grille] Dump écrit : {path} ({field.values.size} valeurs)")


def read_field_dump(path: str) -> ScalarField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != DUMP_MAGIC:
        raise GridError(f"{path} : en-tête invalide ({raw[:4]!r})")
    (dim,) = struct.unpack_from("<I", raw, 4)
    if dim not in (2, 3):
        raise GridError(f"{path} : ambient_dim invalide ({dim})")
    offset = 8
    shape = struct.unpack_from(f"<{dim}I", raw, offset)
    offset += 4 * dim
    spacing, a = struct.unpack_from("<dd", raw, offset)
    offset += 16
    k = shape[-1] - 1
    if any(size != 2 * k + 1 for size in shape[:-1]):
        raise GridError(f"{path} : nombres de nœuds incohérents {shape}")
    spec = make_grid(dim, k * spacing, spacing, a)
    count = int(np.prod(shape))
    if len(raw) - offset != 8 * count:
        raise GridError(f"{path} : {len(raw) - offset} octets pour {count} valeurs")
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
    return ScalarField(spec, values.astype(float))
