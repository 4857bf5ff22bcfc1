"""
Quadrature grids and real spherical harmonics on S^2 and the upper hemisphere.

Implements:
1. SphereGrid / build_grid - Gauss-Legendre nodes in cos(theta) times uniform
   phi nodes, with an extra ring of equator nodes on hemisphere grids
2. HarmonicTable - real orthonormal harmonics and their angular derivatives
   (up to second order) tabulated on a grid, cached per (L_quad, domain, L_max)
3. project / synthesize - coefficient transforms; hemisphere projection uses
   the even reflection so only l + |m| even harmonics carry weight

Coefficients always live on the full index set (l, m), |m| <= l, ordered by
index(l, m) = l^2 + l + m.
"""
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import List, Tuple

import numpy as np
from scipy import special

from errors import UsageError


MIN_L_QUAD = 4  # below this the grid cannot resolve the curvature terms of a graph


class Domain(str, Enum):
    FULL_SPHERE = "full"
    UPPER_HEMISPHERE = "hemisphere"


def index(l: int, m: int) -> int:
    return l * l + l + m


def basis_size(l_max: int) -> int:
    return (l_max + 1) ** 2


def degrees(l_max: int) -> List[Tuple[int, int]]:
    """All (l, m) pairs up to l_max in coefficient order."""
    return [(l, m) for l in range(l_max + 1) for m in range(-l, l + 1)]


def reflection_even(l: int, m: int) -> bool:
    """Harmonic is even under x3 -> -x3."""
    return (l + abs(m)) % 2 == 0


def domain_indices(l_max: int, domain: Domain) -> np.ndarray:
    """Coefficient indices admissible on the domain (all, or reflection-even)."""
    if domain == Domain.FULL_SPHERE:
        return np.arange(basis_size(l_max))
    return np.array([index(l, m) for l, m in degrees(l_max) if reflection_even(l, m)])


def odd_mask(l_max: int) -> np.ndarray:
    return np.array([not reflection_even(l, m) for l, m in degrees(l_max)])


@dataclass(frozen=True)
class SphereGrid:
    """Product quadrature on S^2 or on the upper hemisphere.

    Nodes are flattened theta-major. Hemisphere grids also carry a ring of
    equator nodes (theta = pi/2) with uniform arc weights summing to 2 pi.
    """
    domain: Domain
    l_quad: int
    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    equator_phi: np.ndarray
    equator_weights: np.ndarray

    @property
    def size(self) -> int:
        return self.theta.shape[0]

    @property
    def is_half(self) -> bool:
        return self.domain == Domain.UPPER_HEMISPHERE

    def integrate(self, values: np.ndarray) -> float:
        """Integral over the unit sphere/hemisphere (values at nodes, last axis)."""
        return np.sum(values * self.weights, axis=-1)

    def integrate_equator(self, values: np.ndarray) -> float:
        return np.sum(values * self.equator_weights, axis=-1)

    def unit_vectors(self) -> np.ndarray:
        return _unit(self.theta, self.phi)


def _unit(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


@lru_cache(maxsize=32)
def build_grid(l_quad: int, domain: Domain = Domain.FULL_SPHERE) -> SphereGrid:
    """Grid integrating products of harmonics of degree <= l_quad exactly."""
    if l_quad < MIN_L_QUAD:
        raise UsageError(f"quadrature degree {l_quad} is below the minimum {MIN_L_QUAD}")
    domain = Domain(domain)
    n_theta = l_quad + 1
    n_phi = 2 * l_quad + 2
    z, w = special.roots_legendre(n_theta)
    if domain == Domain.UPPER_HEMISPHERE:
        z = 0.5 * (z + 1.0)
        w = 0.5 * w
    order = np.argsort(-z)  # north pole first
    z, w = z[order], w[order]
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    dphi = 2.0 * np.pi / n_phi
    theta_nodes = np.repeat(np.arccos(z), n_phi)
    phi_nodes = np.tile(phi, n_theta)
    weights = np.repeat(w, n_phi) * dphi
    if domain == Domain.UPPER_HEMISPHERE:
        equator_phi = phi.copy()
        equator_weights = np.full(n_phi, dphi)
    else:
        equator_phi = np.zeros(0)
        equator_weights = np.zeros(0)
    for arr in (theta_nodes, phi_nodes, weights, equator_phi, equator_weights):
        arr.setflags(write=False)
    return SphereGrid(domain, l_quad, theta_nodes, phi_nodes, weights, equator_phi, equator_weights)


# =============================================================================
# Harmonic tables
# =============================================================================

@dataclass(frozen=True)
class HarmonicTable:
    """Basis values and angular derivatives, each of shape (basis_size, n_nodes)."""
    values: np.ndarray
    d_theta: np.ndarray
    d_phi: np.ndarray
    d_theta_theta: np.ndarray
    d_theta_phi: np.ndarray
    d_phi_phi: np.ndarray

    def synthesize(self, coeffs: np.ndarray) -> Tuple[np.ndarray, ...]:
        """(f, f_t, f_p, f_tt, f_tp, f_pp) at the nodes."""
        n = coeffs.shape[0]
        return tuple(coeffs @ arr[:n] for arr in (
            self.values, self.d_theta, self.d_phi, self.d_theta_theta, self.d_theta_phi, self.d_phi_phi
        ))


def evaluate(l_max: int, theta: np.ndarray, phi: np.ndarray) -> HarmonicTable:
    """Real orthonormal harmonics Y_lm with theta/phi derivatives at given angles.

    Y_l0 = P_l^0, Y_lm = sqrt(2) (-1)^m P_l^m cos(m phi) for m > 0 and
    sqrt(2) (-1)^m P_l^|m| sin(|m| phi) for m < 0, with P the orthonormalized
    associated Legendre functions of cos(theta).
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    shape = (basis_size(l_max), theta.shape[0])
    out = {name: np.zeros(shape) for name in ("v", "t", "p", "tt", "tp", "pp")}
    for l in range(l_max + 1):
        for m in range(l + 1):
            p, p_t, p_tt = np.asarray(special.sph_legendre_p(l, m, theta, diff_n=2))
            if m == 0:
                k = index(l, 0)
                out["v"][k], out["t"][k], out["tt"][k] = p, p_t, p_tt
                continue
            s = np.sqrt(2.0) * (-1.0) ** m
            cos_m, sin_m = np.cos(m * phi), np.sin(m * phi)
            k = index(l, m)
            out["v"][k] = s * p * cos_m
            out["t"][k] = s * p_t * cos_m
            out["tt"][k] = s * p_tt * cos_m
            out["p"][k] = -m * s * p * sin_m
            out["tp"][k] = -m * s * p_t * sin_m
            out["pp"][k] = -m * m * s * p * cos_m
            k = index(l, -m)
            out["v"][k] = s * p * sin_m
            out["t"][k] = s * p_t * sin_m
            out["tt"][k] = s * p_tt * sin_m
            out["p"][k] = m * s * p * cos_m
            out["tp"][k] = m * s * p_t * cos_m
            out["pp"][k] = -m * m * s * p * sin_m
    for arr in out.values():
        arr.setflags(write=False)
    return HarmonicTable(out["v"], out["t"], out["p"], out["tt"], out["tp"], out["pp"])


@lru_cache(maxsize=32)
def grid_table(l_quad: int, domain: Domain, l_max: int) -> HarmonicTable:
    grid = build_grid(l_quad, domain)
    return evaluate(l_max, grid.theta, grid.phi)


@lru_cache(maxsize=32)
def equator_table(l_quad: int, l_max: int) -> HarmonicTable:
    grid = build_grid(l_quad, Domain.UPPER_HEMISPHERE)
    return evaluate(l_max, np.full(grid.equator_phi.shape, 0.5 * np.pi), grid.equator_phi)


def table_for(grid: SphereGrid, l_max: int) -> HarmonicTable:
    return grid_table(grid.l_quad, grid.domain, l_max)


# =============================================================================
# Transforms
# =============================================================================

def project(grid: SphereGrid, values: np.ndarray, l_max: int) -> np.ndarray:
    """Harmonic coefficients of nodal values, up to degree l_max.

    On a hemisphere grid the values are extended evenly across the equator,
    so odd coefficients vanish and even ones are twice the hemisphere integral.
    """
    table = table_for(grid, l_max)
    coeffs = table.values @ (values * grid.weights)
    if grid.is_half:
        coeffs = 2.0 * coeffs
        coeffs[odd_mask(l_max)] = 0.0
    return coeffs


def synthesize(grid: SphereGrid, coeffs: np.ndarray) -> np.ndarray:
    l_max = int(round(np.sqrt(coeffs.shape[0]))) - 1
    return coeffs @ table_for(grid, l_max).values


def l_max_of(coeffs: np.ndarray) -> int:
    l_max = int(round(np.sqrt(coeffs.shape[0]))) - 1
    if basis_size(l_max) != coeffs.shape[0]:
        raise UsageError(f"coefficient vector of length {coeffs.shape[0]} is not a full (l, m) set")
    return l_max
