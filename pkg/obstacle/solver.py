"""
obstacle/solver.py — Problème d'obstacle mince discret (PSOR)

Minimise l'énergie pondérée discrète Σ κ (Δu)² sur les champs :
  - égaux à g sur le bord de Dirichlet (|x_i| = R ou x_{n+1} = R)
  - de trace ≥ 0 sur le plan mince
Gauss-Seidel sur-relaxé avec projection max(·, 0) aux nœuds du plan.
"""
import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve

from obstacle.errors import SolverError
from obstacle.weighted_grid import (
    GridSpec, ScalarField, apply_operator, diagonal, dirichlet_mask,
    discrete_energy, plane_flux, sample, stencil,
)

log = logging.getLogger(__name__)

PSOR_OMEGA           = float(os.getenv("PSOR_OMEGA", 1.5))
PSOR_TOLERANCE       = float(os.getenv("PSOR_TOLERANCE", 1e-8))
PSOR_SWEEPS_PER_NODE = int(os.getenv("PSOR_SWEEPS_PER_NODE", 200))
PSOR_LOG_EVERY       = int(os.getenv("PSOR_LOG_EVERY", 500))

SWEEP_ORDERS = ("red-black", "lexicographic")
INIT_MODES   = ("zero", "harmonic")


# ─────────────────────────────────────────────
# PARAMÈTRES / RAPPORT
# ─────────────────────────────────────────────

@dataclass(frozen=True)
class SolveParams:
    relaxation_factor: float = PSOR_OMEGA
    tolerance:         float = PSOR_TOLERANCE
    max_sweeps:        Optional[int] = None
    sweep_order:       str = "red-black"
    init:              str = "zero"

    def __post_init__(self):
        if not (0.0 < self.relaxation_factor < 2.0):
            raise SolverError(f"ω doit être dans (0,2) (reçu {self.relaxation_factor})")
        if self.tolerance <= 0:
            raise SolverError(f"Tolérance ≤ 0 : {self.tolerance}")
        if self.max_sweeps is not None and self.max_sweeps < 1:
            raise SolverError(f"max_sweeps doit être ≥ 1 (reçu {self.max_sweeps})")
        if self.sweep_order not in SWEEP_ORDERS:
            raise SolverError(f"Ordre de balayage inconnu : {self.sweep_order}")
        if self.init not in INIT_MODES:
            raise SolverError(f"Initialisation inconnue : {self.init}")

    def sweeps_for(self, spec: GridSpec) -> int:
        if self.max_sweeps is not None:
            return self.max_sweeps
        return PSOR_SWEEPS_PER_NODE * max(spec.shape)

    def to_dict(self) -> dict:
        return {
            "relaxation_factor": self.relaxation_factor,
            "tolerance":         self.tolerance,
            "max_sweeps":        self.max_sweeps,
            "sweep_order":       self.sweep_order,
            "init":              self.init,
        }


@dataclass
class SolveReport:
    sweeps_used:     int = 0
    final_update:    float = float("inf")
    energy_history:  list = field(default_factory=list)
    converged:       bool = False
    complementarity: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "sweeps_used":     self.sweeps_used,
            "final_update":    self.final_update,
            "converged":       self.converged,
            "energy_initial":  self.energy_history[0] if self.energy_history else None,
            "energy_final":    self.energy_history[-1] if self.energy_history else None,
            "energy_history":  list(self.energy_history),
            "complementarity": dict(self.complementarity),
        }


# ─────────────────────────────────────────────
# ÉNERGIE / COMPLÉMENTARITÉ
# ─────────────────────────────────────────────

def energy(field: ScalarField) -> float:
    """2 ∫_{t>0} |∇u|² t^a, version discrète (même stencil que le solveur)."""
    return discrete_energy(field)


def complementarity_report(field: ScalarField) -> dict:
    """Pires violations de u ≥ 0, flux ≤ 0 et u·flux = 0 sur les nœuds intérieurs du plan."""
    n = field.spec.n
    inner = tuple(slice(1, -1) for _ in range(n))
    trace = field.plane[inner]
    flux  = plane_flux(field)
    if trace.size == 0:
        return {"max_negative_trace": 0.0, "max_positive_flux": 0.0, "max_product": 0.0}
    return {
        "max_negative_trace": float(max(0.0, -np.min(trace))),
        "max_positive_flux":  float(max(0.0, np.max(flux))),
        "max_product":        float(np.max(np.abs(trace * flux))),
    }


# ─────────────────────────────────────────────
# INITIALISATION
# ─────────────────────────────────────────────

def _boundary_values(spec: GridSpec, g) -> np.ndarray:
    if isinstance(g, ScalarField):
        if g.spec != spec:
            raise SolverError(f"Donnée de bord sur une autre grille ({g.spec} ≠ {spec})")
        return np.array(g.values)
    return np.array(sample(spec, g).values)


def harmonic_extension(spec: GridSpec, boundary: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Solution de A u = 0 aux nœuds libres, u = g sur le bord (solveur creux direct)."""
    size  = int(np.prod(spec.shape))
    index = np.arange(size).reshape(spec.shape)
    rows, cols, vals = [], [], []
    for d, kappa in enumerate(stencil(spec)):
        lo = [slice(None)] * len(spec.shape)
        hi = [slice(None)] * len(spec.shape)
        lo[d] = slice(0, -1)
        hi[d] = slice(1, None)
        i = index[tuple(lo)].ravel()
        j = index[tuple(hi)].ravel()
        k = kappa.ravel()
        rows += [i, j, i, j]
        cols += [i, j, j, i]
        vals += [k, k, -k, -k]
    K = coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    ).tocsr()
    free  = ~mask.ravel()
    fixed = mask.ravel()
    g     = boundary.ravel()
    u     = g.copy()
    rhs   = -K[free][:, fixed] @ g[fixed]
    u[free] = spsolve(K[free][:, free].tocsc(), rhs)
    return u.reshape(spec.shape)


# ─────────────────────────────────────────────
# BALAYAGES
# ─────────────────────────────────────────────

def _red_black_sweep(spec, u, diag, free_colors, plane_free, omega) -> float:
    change = 0.0
    for color_mask in free_colors:
        neighbour_sum = apply_operator(spec, u) + diag * u
        gs  = neighbour_sum[color_mask] / diag[color_mask]
        old = u[color_mask]
        new = (1.0 - omega) * old + omega * gs
        new = np.where(plane_free[color_mask], np.maximum(new, 0.0), new)
        u[color_mask] = new
        if new.size:
            change = max(change, float(np.max(np.abs(new - old))))
    return change


def _neighbour_lists(spec: GridSpec, free: np.ndarray) -> list:
    """[(nœud, [voisins], [κ])] pour les nœuds libres, ordre lexicographique."""
    shape = spec.shape
    kappas = stencil(spec)
    out = []
    for idx in zip(*np.nonzero(free)):
        nbs, ks = [], []
        for d, kappa in enumerate(kappas):
            if idx[d] > 0:
                lower = list(idx)
                lower[d] -= 1
                nbs.append(np.ravel_multi_index(lower, shape))
                ks.append(kappa[tuple(lower)])
            if idx[d] < shape[d] - 1:
                upper = list(idx)
                upper[d] += 1
                nbs.append(np.ravel_multi_index(upper, shape))
                ks.append(kappa[idx])
        out.append((np.ravel_multi_index(idx, shape), idx[-1] == 0,
                    np.array(nbs), np.array(ks), float(np.sum(ks))))
    return out


def _lexicographic_sweep(u_flat, neighbours, omega) -> float:
    change = 0.0
    for node, on_plane, nbs, ks, total in neighbours:
        old = u_flat[node]
        new = (1.0 - omega) * old + omega * float(np.dot(ks, u_flat[nbs])) / total
        if on_plane:
            new = max(new, 0.0)
        u_flat[node] = new
        change = max(change, abs(new - old))
    return change


# ─────────────────────────────────────────────
# SOLVEUR
# ─────────────────────────────────────────────

def psor_solve(spec: GridSpec, g, params: SolveParams = None) -> tuple:
    """
    Résout le problème d'obstacle mince discret de donnée de bord g
    (évaluateur ponctuel ou ScalarField). Renvoie (ScalarField, SolveReport).
    La non-convergence n'est pas une erreur : converged = False.
    """
    params = params or SolveParams()
    mask   = dirichlet_mask(spec)
    bvals  = _boundary_values(spec, g)

    plane_boundary = bvals[..., 0][mask[..., 0]]
    if plane_boundary.size and np.min(plane_boundary) < 0:
        raise SolverError(
            f"Trace de bord négative sur le plan mince (min = {np.min(plane_boundary):.3e})"
        )

    if params.init == "harmonic":
        u = harmonic_extension(spec, bvals, mask)
        u[..., 0] = np.maximum(u[..., 0], 0.0)
        u[mask] = bvals[mask]
    else:
        u = np.where(mask, bvals, 0.0)

    free       = ~mask
    plane_free = np.zeros(spec.shape, dtype=bool)
    plane_free[..., 0] = free[..., 0]
    omega      = params.relaxation_factor
    max_sweeps = params.sweeps_for(spec)
    report     = SolveReport(energy_history=[discrete_energy(ScalarField(spec, u))])

    if params.sweep_order == "red-black":
        diag   = diagonal(spec)
        parity = np.indices(spec.shape).sum(axis=0) % 2
        colors = [free & (parity == 0), free & (parity == 1)]
    else:
        neighbours = _neighbour_lists(spec, free)
        u_flat = u.ravel()

    log.info(
        f"[PSOR] Grille {spec.shape}, a={spec.a:.3f}, ω={omega}, tol={params.tolerance:.1e}, "
        f"ordre={params.sweep_order}, init={params.init}, max {max_sweeps} balayages"
    )
    for sweep in range(1, max_sweeps + 1):
        if params.sweep_order == "red-black":
            change = _red_black_sweep(spec, u, diag, colors, plane_free, omega)
        else:
            change = _lexicographic_sweep(u_flat, neighbours, omega)
        report.energy_history.append(discrete_energy(ScalarField(spec, u)))
        report.sweeps_used  = sweep
        report.final_update = change
        if PSOR_LOG_EVERY and sweep % PSOR_LOG_EVERY == 0:
            log.debug(f"[PSOR] balayage {sweep} : Δ = {change:.3e}, E = {report.energy_history[-1]:.12g}")
        if change <= params.tolerance:
            report.converged = True
            break

    result = ScalarField(spec, u)
    report.complementarity = complementarity_report(result)
    if report.converged:
        log.info(
            f"[PSOR] Convergé en {report.sweeps_used} balayages, "
            f"E = {report.energy_history[-1]:.12g}"
        )
    else:
        log.warning(
            f"[PSOR] Non convergé après {report.sweeps_used} balayages "
            f"(Δ = {report.final_update:.3e} > {params.tolerance:.1e})"
        )
    return result, report
