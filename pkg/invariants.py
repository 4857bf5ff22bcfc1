"""
Asymptotic invariants: flux mass and center, isoperimetric deficits, limits.

Implements:
1. flux_mass / flux_center - flux integrals of e = g - delta over centered
   coordinate spheres (hemispheres plus the equator correction on half-spaces)
2. deficit - J32, J31, J21 on spheres and the relative RelJ32 on hemispheres
3. extrapolate - v(r) = L + C r^-alpha (optionally + C2 r^-(alpha+1)) by
   variable projection followed by a nonlinear least-squares polish
4. small_sphere - small geodesic-sphere expansion coefficients in S^3 and H^3
5. center_from_H - center from the first moments of the mean curvature
6. sweep_series / fit_expansion - radius sweeps and inverse-power fits
"""
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from rich.console import Console
from scipy import optimize

from config import get_config, parallel_map
from errors import NumericalFailure, UsageError
from harmonics import Domain, build_grid
from metric import MetricSpec, Reference, deviation_jet
from surface import GraphSurface, Measures, extrinsic, measures

console = Console(stderr=True)


# =============================================================================
# Constants
# =============================================================================

MIN_SAMPLES = 4  # extrapolation needs at least this many radii
ALPHA_BOUNDS = (0.05, 8.0)  # decay exponents scanned by the fit
ALPHA_SCAN = 161  # log-spaced scan points before the local refinement
DEGENERATE_SPREAD = 1e-14  # series flatter than this (relative) have no rate
SMALL_SPHERE_RADII = tuple(0.01 * k for k in range(1, 9))


class DeficitKind(str, Enum):
    J32 = "J32"
    J31 = "J31"
    J21 = "J21"
    REL_J32 = "RelJ32"


class ModelSpace(str, Enum):
    ROUND_S3 = "S3"
    HYPERBOLIC_3 = "H3"


def _log(message: str) -> None:
    if get_config().verbose:
        console.print(f"[dim]{message}[/dim]")


# =============================================================================
# Series and extrapolation
# =============================================================================

@dataclass
class ConvergenceSeries:
    """(radius, value) samples; values may be scalars or vectors."""
    radii: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.radii.ndim != 1 or self.values.shape[0] != self.radii.shape[0]:
            raise UsageError("series needs one value per radius")
        if np.any(np.diff(self.radii) <= 0):
            raise UsageError("series radii must be strictly increasing")


@dataclass
class ExtrapolationResult:
    """Fitted limit, decay exponent and residual; vectors fit per component."""
    limit: Union[float, np.ndarray]
    rate: Union[float, np.ndarray]
    residual: Union[float, np.ndarray]
    monotone_tail: Union[bool, List[bool]]
    coefficients: list = field(default_factory=list)
    two_term: bool = True

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("limit", "rate", "residual"):
            value = getattr(self, key)
            out[key] = value.tolist() if isinstance(value, np.ndarray) else float(value)
        return out


def _basis(radii: np.ndarray, alpha: float, two_term: bool) -> np.ndarray:
    cols = [np.ones_like(radii), radii**-alpha]
    if two_term:
        cols.append(radii ** -(alpha + 1.0))
    return np.stack(cols, axis=-1)


def _projected_residual(alpha: float, radii: np.ndarray, values: np.ndarray, two_term: bool) -> float:
    design = _basis(radii, alpha, two_term)
    coef, *_ = np.linalg.lstsq(design, values, rcond=None)
    return float(np.sum((design @ coef - values) ** 2))


def _fit_scalar(radii: np.ndarray, values: np.ndarray, two_term: bool) -> ExtrapolationResult:
    tail = np.diff(values[-3:])
    monotone = bool(np.all(tail > 0) or np.all(tail < 0) or np.all(tail == 0))
    scale = max(1.0, float(np.max(np.abs(values))))
    if float(np.max(np.abs(values - values[-1]))) <= DEGENERATE_SPREAD * scale:
        return ExtrapolationResult(float(values[-1]), float("nan"), 0.0, monotone, [float(values[-1])], two_term)

    # scale radii so the basis stays well conditioned
    unit = float(radii[0])
    x = radii / unit
    grid = np.geomspace(*ALPHA_BOUNDS, ALPHA_SCAN)
    scan = np.array([_projected_residual(a, x, values, two_term) for a in grid])
    k = int(np.argmin(scan))
    if 0 < k < len(grid) - 1 and scan[k] < scan[k - 1] and scan[k] < scan[k + 1]:
        best = optimize.minimize_scalar(
            _projected_residual, bracket=(grid[k - 1], grid[k], grid[k + 1]),
            args=(x, values, two_term), method="brent", tol=1e-12,
        )
    else:
        best = optimize.minimize_scalar(
            _projected_residual, bounds=ALPHA_BOUNDS, args=(x, values, two_term),
            method="bounded", options={"xatol": 1e-14},
        )
    alpha = float(np.clip(best.x, *ALPHA_BOUNDS))
    coef, *_ = np.linalg.lstsq(_basis(x, alpha, two_term), values, rcond=None)

    def model(params):
        a = params[-1]
        return _basis(x, a, two_term) @ params[:-1] - values

    start = np.append(coef, alpha)
    if len(values) >= len(start):
        polished = optimize.least_squares(model, start, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if polished.success and np.all(np.isfinite(polished.x)):
            start = polished.x
    coef, alpha = start[:-1], float(start[-1])
    residual = float(np.sqrt(np.mean(model(start) ** 2)))
    # coefficients in the unscaled radius
    physical = [float(coef[0]), float(coef[1] * unit**alpha)]
    if two_term:
        physical.append(float(coef[2] * unit ** (alpha + 1.0)))
    return ExtrapolationResult(float(coef[0]), alpha, residual, monotone, physical, two_term)


def extrapolate(series: ConvergenceSeries, two_term: bool = True) -> ExtrapolationResult:
    """Fit L + C r^-alpha + C2 r^-(alpha+1) and report the limit.

    The second power absorbs the r^-2 terms that the volume reference radius
    and the conformal factor put into deficits and flux integrals; pass
    two_term=False for the single-power model L + C r^-alpha.

    A non-monotone tail is flagged in the result, never raised. A constant
    series returns its value with rate NaN.
    """
    if series.radii.shape[0] < MIN_SAMPLES:
        raise UsageError(f"extrapolation needs at least {MIN_SAMPLES} samples, got {series.radii.shape[0]}")
    values = series.values
    if values.ndim == 1:
        result = _fit_scalar(series.radii, values, two_term)
        if not result.monotone_tail:
            _log(f"non-monotone tail in series ending at r={series.radii[-1]:g}")
        return result
    parts = [_fit_scalar(series.radii, values[:, k], two_term) for k in range(values.shape[1])]
    return ExtrapolationResult(
        limit=np.array([p.limit for p in parts]),
        rate=np.array([p.rate for p in parts]),
        residual=np.array([p.residual for p in parts]),
        monotone_tail=[p.monotone_tail for p in parts],
        coefficients=[p.coefficients for p in parts],
        two_term=two_term,
    )


def sweep_series(fn: Callable[[float], Union[float, np.ndarray]], radii: Sequence[float]) -> ConvergenceSeries:
    """Evaluate fn at every radius (concurrently, order preserved)."""
    radii = [float(r) for r in radii]
    return ConvergenceSeries(np.asarray(radii), np.asarray(parallel_map(fn, radii)))


@dataclass
class ExpansionFit:
    powers: List[float]
    coefficients: List[float]
    residual: float

    def to_dict(self) -> dict:
        return asdict(self)


def fit_expansion(radii: Sequence[float], values: Sequence[float], powers: Sequence[float]) -> ExpansionFit:
    """Least-squares coefficients of values ~ sum_k a_k r^-p_k."""
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(radii) < len(powers):
        raise UsageError(f"need at least {len(powers)} radii to fit {len(powers)} powers")
    design = np.stack([radii ** -float(p) for p in powers], axis=-1)
    # column scaling keeps the normal equations balanced across powers
    scale = np.max(np.abs(design), axis=0)
    coef, *_ = np.linalg.lstsq(design / scale, values, rcond=None)
    coef = coef / scale
    residual = float(np.sqrt(np.mean((design @ coef - values) ** 2)))
    return ExpansionFit([float(p) for p in powers], [float(c) for c in coef], residual)


# =============================================================================
# Flux integrals
# =============================================================================

def _check_radius(spec: MetricSpec, r: float) -> None:
    if r < 2.0 * spec.r_min:
        raise UsageError(f"radius {r} is below twice r_min ({2.0 * spec.r_min})")


def _flux_terms(spec: MetricSpec, r: float, l_quad: int):
    """Nodal U(1, e)(nu), e, tr e and nu on the coordinate sphere |x| = r."""
    grid = build_grid(l_quad, Domain.UPPER_HEMISPHERE if spec.is_half else Domain.FULL_SPHERE)
    nu = grid.unit_vectors()
    jet = deviation_jet(spec, r * nu, Reference.FLAT)
    div = np.einsum("njij->ni", jet.dg)
    dtr = np.einsum("nkjj->nk", jet.dg)
    flux = np.einsum("ni,ni->n", div - dtr, nu)
    return grid, nu, jet.g, np.trace(jet.g, axis1=1, axis2=2), flux


def _equator_terms(spec: MetricSpec, r: float, grid):
    """e(x/r, vartheta) on the equator circle, vartheta = -e3."""
    phi = grid.equator_phi
    omega = np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], axis=-1)
    e = deviation_jet(spec, r * omega, Reference.FLAT).g
    return omega, -np.einsum("ni,ni->n", e[:, :, 2], omega)


def flux_mass(spec: MetricSpec, r: float, l_quad: Optional[int] = None) -> float:
    """(1/16 pi) of the mass flux through the centered coordinate sphere (hemisphere) of radius r."""
    _check_radius(spec, r)
    l_quad = l_quad or get_config().l_quad
    grid, _, _, _, flux = _flux_terms(spec, r, l_quad)
    total = r**2 * grid.integrate(flux)
    if spec.is_half:
        _, boundary = _equator_terms(spec, r, grid)
        total -= r * grid.integrate_equator(boundary)
    return float(total / (16.0 * np.pi))


def flux_center(spec: MetricSpec, r: float, l_quad: Optional[int] = None) -> np.ndarray:
    """x_i-weighted flux integrals; a 3-vector, or the tangential 2-vector on half-spaces."""
    if spec.m == 0.0:
        raise UsageError("center of mass needs a nonzero mass parameter")
    _check_radius(spec, r)
    l_quad = l_quad or get_config().l_quad
    grid, nu, e, tr, flux = _flux_terms(spec, r, l_quad)
    x = r * nu
    # U(x_a, e)(nu) = x_a (div e - d tr e)(nu) - e(e_a, nu) + tr e nu_a
    integrand = x * flux[:, None] - np.einsum("nai,ni->na", e, nu) + tr[:, None] * nu
    total = r**2 * np.einsum("na,n->a", integrand, grid.weights)
    if spec.is_half:
        omega, boundary = _equator_terms(spec, r, grid)
        total -= r * np.einsum("na,n->a", r * omega * boundary[:, None], grid.equator_weights)
        total = total[:2]
    return total / (16.0 * np.pi * spec.flux_mass)


def center_from_H(spec: MetricSpec, r: float, l_quad: Optional[int] = None) -> np.ndarray:
    """-(1/8 pi m_b) times the flat-area first moments of H over the centered hemisphere."""
    if not spec.is_half:
        raise UsageError("center_from_H is defined for half-space specs")
    if spec.m == 0.0:
        raise UsageError("center of mass needs a nonzero mass parameter")
    _check_radius(spec, r)
    l_quad = l_quad or get_config().l_quad
    grid = build_grid(l_quad, Domain.UPPER_HEMISPHERE)
    data = extrinsic(spec, GraphSurface.round((0.0, 0.0, 0.0), r, Domain.UPPER_HEMISPHERE, l_max=0), grid)
    moments = r**2 * np.einsum("na,n->a", data.points[:, :2] * data.mean[:, None], grid.weights)
    return -moments / (8.0 * np.pi * spec.flux_mass)


# =============================================================================
# Isoperimetric deficits
# =============================================================================

def coordinate_measures(spec: MetricSpec, r: float, l_quad: Optional[int] = None, r0: Optional[float] = None) -> Measures:
    """Measures of the centered coordinate sphere (hemisphere on half-spaces)."""
    l_quad = l_quad or get_config().l_quad
    domain = Domain.UPPER_HEMISPHERE if spec.is_half else Domain.FULL_SPHERE
    surf = GraphSurface.round((0.0, 0.0, 0.0), r, domain, l_max=0)
    return measures(spec, surf, build_grid(l_quad, domain), r0=r0)


def deficit_from_measures(kind: DeficitKind, r: float, m: Measures) -> float:
    kind = DeficitKind(kind)
    area, volume, total = m.area, m.volume, m.total_mean_curvature
    if kind == DeficitKind.J32:
        return 2.0 / area * (volume - area**1.5 / (6.0 * np.sqrt(np.pi)))
    if kind == DeficitKind.REL_J32:
        return (volume - area**1.5 / (3.0 * np.sqrt(2.0 * np.pi))) / area
    if total <= 0.0:
        raise NumericalFailure("deficit", f"total mean curvature {total:.3g} is not positive at r={r}")
    if kind == DeficitKind.J31:
        return 4.0 / (3.0 * r * total) * (volume - total**3 / (3.0 * 2**7 * np.pi**2))
    return (area - total**2 / (16.0 * np.pi)) / total


def deficit(spec: MetricSpec, r: float, kind: DeficitKind, l_quad: Optional[int] = None,
            r0: Optional[float] = None) -> float:
    """Isoperimetric deficit of the centered coordinate sphere or hemisphere of radius r."""
    kind = DeficitKind(kind)
    if (kind == DeficitKind.REL_J32) != spec.is_half:
        raise UsageError(f"deficit {kind.value} does not apply to the {spec.family.value} family")
    _check_radius(spec, r)
    value = deficit_from_measures(kind, r, coordinate_measures(spec, r, l_quad, r0))
    _log(f"{kind.value}(r={r:g}) = {value!r}")
    return value


# =============================================================================
# Small geodesic spheres in model spaces
# =============================================================================

EUCLIDEAN_QUOTIENTS = {
    (3, 2): 6.0 * np.sqrt(np.pi),
    (3, 1): 3.0 * 2**7 * np.pi**2,
    (2, 1): 16.0 * np.pi,
}


def geodesic_sphere(model: ModelSpace, r: float):
    """(A, V, M) of the geodesic sphere of radius r in S^3 or H^3."""
    if ModelSpace(model) == ModelSpace.ROUND_S3:
        return 4.0 * np.pi * np.sin(r) ** 2, np.pi * (2.0 * r - np.sin(2.0 * r)), 8.0 * np.pi * np.sin(r) * np.cos(r)
    return 4.0 * np.pi * np.sinh(r) ** 2, np.pi * (np.sinh(2.0 * r) - 2.0 * r), 8.0 * np.pi * np.sinh(r) * np.cosh(r)


def isoperimetric_quotient(kind, area: float, volume: float, total: float) -> float:
    """A^(3/2)/V, M^3/V or M^2/A."""
    kind = tuple(kind)
    if kind == (3, 2):
        return area**1.5 / volume
    if kind == (3, 1):
        return total**3 / volume
    if kind == (2, 1):
        return total**2 / area
    raise UsageError(f"unknown quotient kind {kind}")


def small_sphere(model: ModelSpace, kind, radii: Sequence[float] = SMALL_SPHERE_RADII) -> float:
    """Coefficient c with 1 - I_r/I = c R r^2 + O(r^4), R = +6 (S^3) or -6 (H^3)."""
    kind = tuple(kind)
    if kind not in EUCLIDEAN_QUOTIENTS:
        raise UsageError(f"small-sphere kind must be one of {sorted(EUCLIDEAN_QUOTIENTS)}, got {kind}")
    radii = np.asarray(radii, dtype=float)
    scaled = []
    for r in radii:
        ratio = isoperimetric_quotient(kind, *geodesic_sphere(model, r)) / EUCLIDEAN_QUOTIENTS[kind]
        scaled.append((1.0 - ratio) / r**2)
    c1, c0 = np.polyfit(radii**2, np.asarray(scaled), 1)
    if not np.isfinite(c0):
        raise NumericalFailure("small_sphere", f"quadratic fit failed for {model} {kind}")
    scalar_curvature = 6.0 if ModelSpace(model) == ModelSpace.ROUND_S3 else -6.0
    return float(c0 / scalar_curvature)
