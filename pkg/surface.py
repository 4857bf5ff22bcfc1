"""
Radial graph surfaces over coordinate spheres and hemispheres.

Implements:
1. GraphSurface - x = a + (rho + rho^-theta phi(x_hat)) x_hat, phi stored as
   real harmonic coefficients; JSON round trip
2. extrinsic - normal, fundamental forms, shape operator, H, K, Newton tensor,
   Gaussian curvature and modified Gauss-Kronecker curvature at every node,
   plus equator data (conormal, contact angle, geodesic curvature) on hemispheres
3. measures - area, enclosed volume (flat inner ball + radial quadrature),
   total mean curvature, boundary length
4. free_boundary_defect - worst contact-angle deviation along the equator
5. centroid - Euclidean area-weighted position average
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from errors import NumericalFailure, UsageError
from harmonics import (
    Domain,
    HarmonicTable,
    SphereGrid,
    basis_size,
    build_grid,
    equator_table,
    index,
    l_max_of,
    odd_mask,
    table_for,
)
from metric import (
    CurvatureData,
    MetricSpec,
    boundary_second_fundamental_form,
    curvature_from_jet,
    eval_jet,
    eval_metric,
)

__all__ = [
    "Domain",
    "SphereGrid",
    "build_grid",
    "GraphSurface",
    "ExtrinsicData",
    "BoundaryData",
    "Measures",
    "extrinsic",
    "measures",
    "free_boundary_defect",
    "centroid",
    "positions",
]


# =============================================================================
# Constants
# =============================================================================

DEFAULT_THETA_EXP = 0.5
EMBEDDING_FRACTION = 0.5  # graph amplitude must stay below this fraction of rho
VOLUME_PANEL_NODES = 16  # Gauss-Legendre nodes per geometric radial panel
INNER_RADIUS_MASS_FACTOR = 8.0  # r0 = max(2 r_min, 8 |m|)


class EmbeddingError(NumericalFailure):
    """Radial graph left the embedded regime."""

    def __init__(self, message: str, detail: Optional[dict] = None):
        super().__init__("surface", message, detail)


# =============================================================================
# Graph surfaces
# =============================================================================

@dataclass(frozen=True)
class GraphSurface:
    """Radial graph over the sphere (or upper hemisphere) of radius rho about center."""
    center: np.ndarray
    rho: float
    coeffs: np.ndarray
    theta_exp: float = DEFAULT_THETA_EXP
    domain: Domain = Domain.FULL_SPHERE
    enforce_parity: bool = field(default=True, compare=False)

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float)
        if center.shape == (2,):
            center = np.append(center, 0.0)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))
        object.__setattr__(self, "domain", Domain(self.domain))
        l_max_of(self.coeffs)
        if self.rho <= 0:
            raise UsageError(f"base radius must be positive, got {self.rho}")
        if not 0.0 < self.theta_exp < 1.0:
            raise UsageError(f"graph exponent must lie in (0, 1), got {self.theta_exp}")
        if self.domain == Domain.UPPER_HEMISPHERE:
            if center[2] != 0.0:
                raise UsageError("hemisphere center must lie on the boundary plane")
            if self.enforce_parity and np.any(self.coeffs[odd_mask(self.l_max)] != 0.0):
                raise UsageError("hemisphere graphs only carry reflection-even harmonics")

    @classmethod
    def round(cls, center, rho: float, domain: Domain = Domain.FULL_SPHERE, l_max: int = 8,
              theta_exp: float = DEFAULT_THETA_EXP) -> "GraphSurface":
        return cls(np.asarray(center, dtype=float), rho, np.zeros(basis_size(l_max)), theta_exp, domain)

    @property
    def l_max(self) -> int:
        return l_max_of(self.coeffs)

    @property
    def is_half(self) -> bool:
        return self.domain == Domain.UPPER_HEMISPHERE

    def with_coeffs(self, coeffs: np.ndarray, center=None) -> "GraphSurface":
        return GraphSurface(
            self.center if center is None else center,
            self.rho, coeffs, self.theta_exp, self.domain, self.enforce_parity,
        )

    def displaced(self, f: np.ndarray, t: float) -> "GraphSurface":
        """Radial variation: radius R + t f with f given by harmonic coefficients."""
        n = max(self.coeffs.shape[0], f.shape[0])
        coeffs = np.zeros(n)
        coeffs[: self.coeffs.shape[0]] += self.coeffs
        coeffs[: f.shape[0]] += t * self.rho**self.theta_exp * f
        return self.with_coeffs(coeffs)

    def to_dict(self) -> dict:
        terms = []
        for l in range(self.l_max + 1):
            for m in range(-l, l + 1):
                value = float(self.coeffs[index(l, m)])
                if value != 0.0:
                    terms.append([l, m, value])
        return {
            "center": [float(v) for v in self.center],
            "rho": float(self.rho),
            "theta_exp": float(self.theta_exp),
            "domain": self.domain.value,
            "l_max": self.l_max,
            "coefficients": terms,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GraphSurface":
        try:
            coeffs = np.zeros(basis_size(int(data["l_max"])))
            for l, m, value in data["coefficients"]:
                coeffs[index(int(l), int(m))] = float(value)
            return cls(np.asarray(data["center"], dtype=float), float(data["rho"]), coeffs,
                       float(data.get("theta_exp", DEFAULT_THETA_EXP)), Domain(data.get("domain", "full")))
        except (KeyError, TypeError, ValueError) as e:
            raise UsageError(f"malformed surface record: {e}") from e


# =============================================================================
# Geometry
# =============================================================================

@dataclass(frozen=True)
class RadialFrame:
    """Parameterization X(theta, phi) and its derivatives at a set of angles."""
    radius: np.ndarray
    graph: np.ndarray  # rho^-theta phi, the radial offset from rho
    unit: np.ndarray
    points: np.ndarray
    tangents: np.ndarray  # [n, a, i] with a = theta, phi
    second: np.ndarray  # [n, a, b, i]
    sin_theta: np.ndarray


def _frame(surf: GraphSurface, theta: np.ndarray, phi: np.ndarray, table: HarmonicTable) -> RadialFrame:
    f, f_t, f_p, f_tt, f_tp, f_pp = table.synthesize(surf.coeffs)
    scale = surf.rho ** (-surf.theta_exp)
    r = surf.rho + scale * f
    r_t, r_p, r_tt, r_tp, r_pp = (scale * v for v in (f_t, f_p, f_tt, f_tp, f_pp))

    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    zero = np.zeros_like(theta)
    e = np.stack([st * cp, st * sp, ct], axis=-1)
    e_t = np.stack([ct * cp, ct * sp, -st], axis=-1)
    e_p = np.stack([-st * sp, st * cp, zero], axis=-1)
    e_tp = np.stack([-ct * sp, ct * cp, zero], axis=-1)
    e_pp = np.stack([-st * cp, -st * sp, zero], axis=-1)

    def col(v):
        return v[:, None]

    x_t = col(r_t) * e + col(r) * e_t
    x_p = col(r_p) * e + col(r) * e_p
    x_tt = col(r_tt) * e + 2.0 * col(r_t) * e_t - col(r) * e
    x_tp = col(r_tp) * e + col(r_t) * e_p + col(r_p) * e_t + col(r) * e_tp
    x_pp = col(r_pp) * e + 2.0 * col(r_p) * e_p + col(r) * e_pp

    tangents = np.stack([x_t, x_p], axis=1)
    second = np.stack([np.stack([x_tt, x_tp], axis=1), np.stack([x_tp, x_pp], axis=1)], axis=1)
    return RadialFrame(r, scale * f, e, surf.center + col(r) * e, tangents, second, st)


@dataclass(frozen=True)
class BoundaryData:
    """Equator quantities of a hemisphere graph, one entry per equator node."""
    phi: np.ndarray
    points: np.ndarray
    speed: np.ndarray  # |gamma'| for gamma(phi) = X(pi/2, phi)
    speed_derivative: np.ndarray  # d|gamma'|/dphi
    arc_weights: np.ndarray
    conormal: np.ndarray  # outward conormal mu as an ambient vector
    conormal_param: np.ndarray  # mu^a in (theta, phi) coordinates
    normal: np.ndarray
    contact: np.ndarray  # g(nu, N) with N the unit normal of {x3 = 0}
    geodesic_curvature: np.ndarray
    kappa: np.ndarray  # B(nu, nu)
    radial_conormal: np.ndarray  # g(x_hat, mu)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values * self.arc_weights))

    @property
    def length(self) -> float:
        return float(np.sum(self.arc_weights))


@dataclass(frozen=True)
class ExtrinsicData:
    """Per-node geometry of a graph surface.

    Mixed tensors (shape operator, Newton tensor) are stored as W[n, a, b] =
    W^a_b in (theta, phi) coordinates; area_weights integrate against dS.
    """
    points: np.ndarray
    unit: np.ndarray
    radius: np.ndarray
    graph: np.ndarray
    tangents: np.ndarray
    normal: np.ndarray
    normal_cov: np.ndarray
    induced: np.ndarray
    induced_inv: np.ndarray
    area_weights: np.ndarray
    second_form: np.ndarray
    shape: np.ndarray
    mean: np.ndarray
    gauss_kronecker: np.ndarray
    shape_norm2: np.ndarray
    newton: np.ndarray
    newton_upper: np.ndarray
    ricci_nu: np.ndarray
    scalar: np.ndarray
    gaussian: np.ndarray
    tilde_k: np.ndarray
    riem_nu: np.ndarray  # Riem(X_a, nu, X_b, nu)
    intrinsic_christoffel: np.ndarray  # [n, c, a, b]
    radial_speed: np.ndarray  # g(x_hat, nu)
    grad_ricci_nu: Optional[np.ndarray] = None
    boundary: Optional[BoundaryData] = None

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values * self.area_weights))

    @property
    def newton_min_eigenvalue(self) -> np.ndarray:
        disc = np.maximum(0.25 * self.mean**2 - self.gauss_kronecker, 0.0)
        return 0.5 * self.mean - np.sqrt(disc)


@dataclass
class _Core:
    curv: CurvatureData
    h: np.ndarray
    h_inv: np.ndarray
    det_h: np.ndarray
    nu: np.ndarray
    nu_cov: np.ndarray
    accel: np.ndarray


def _core(spec: MetricSpec, frame: RadialFrame, order: int) -> _Core:
    curv = curvature_from_jet(eval_jet(spec, frame.points, order=order))
    g = curv.metric
    t = frame.tangents
    h = np.einsum("nai,nij,nbj->nab", t, g, t)
    n_cov = np.cross(t[:, 0], t[:, 1])
    norm = np.sqrt(np.einsum("ni,nij,nj->n", n_cov, curv.inverse, n_cov))
    nu_cov = n_cov / norm[:, None]
    nu = np.einsum("nij,nj->ni", curv.inverse, nu_cov)
    accel = frame.second + np.einsum("njkl,nak,nbl->nabj", curv.christoffel, t, t)
    return _Core(curv, h, np.linalg.inv(h), np.linalg.det(h), nu, nu_cov, accel)


def _check_embedding(surf: GraphSurface, frame: RadialFrame) -> None:
    amplitude = float(np.max(np.abs(frame.graph))) if frame.graph.size else 0.0
    if amplitude >= EMBEDDING_FRACTION * surf.rho:
        raise EmbeddingError(
            f"graph amplitude {amplitude:.3g} reaches half the base radius {surf.rho:.3g}",
            {"amplitude": amplitude, "rho": surf.rho},
        )


def _boundary(spec: MetricSpec, surf: GraphSurface, grid: SphereGrid) -> BoundaryData:
    phi = grid.equator_phi
    theta = np.full(phi.shape, 0.5 * np.pi)
    frame = _frame(surf, theta, phi, equator_table(grid.l_quad, surf.l_max))
    core = _core(spec, frame, order=2)
    g = core.curv.metric
    x_p = frame.tangents[:, 1]
    speed = np.sqrt(core.h[:, 1, 1])

    mu_param = core.h_inv[:, :, 0] / np.sqrt(core.h_inv[:, 0, 0])[:, None]
    mu = np.einsum("na,nai->ni", mu_param, frame.tangents)
    accel = core.accel[:, 1, 1]
    geodesic = -np.einsum("ni,nij,nj->n", accel, g, mu) / speed**2
    speed_derivative = np.einsum("ni,nij,nj->n", accel, g, x_p) / speed

    inv = core.curv.inverse
    boundary_normal = -inv[:, :, 2] / np.sqrt(inv[:, 2, 2])[:, None]
    contact = np.einsum("ni,ni->n", core.nu_cov, boundary_normal)
    form = boundary_second_fundamental_form(spec, frame.points)
    kappa = np.einsum("nab,na,nb->n", form, core.nu[:, :2], core.nu[:, :2])
    radial_conormal = np.einsum("ni,nij,nj->n", frame.unit, g, mu)

    return BoundaryData(
        phi=phi,
        points=frame.points,
        speed=speed,
        speed_derivative=speed_derivative,
        arc_weights=grid.equator_weights * speed,
        conormal=mu,
        conormal_param=mu_param,
        normal=core.nu,
        contact=contact,
        geodesic_curvature=geodesic,
        kappa=kappa,
        radial_conormal=radial_conormal,
    )


def extrinsic(spec: MetricSpec, surf: GraphSurface, grid: SphereGrid, with_gradient: bool = False) -> ExtrinsicData:
    """Exact discrete geometry of the graph at the grid nodes."""
    if grid.domain != surf.domain:
        raise UsageError(f"grid domain {grid.domain.value} does not match surface domain {surf.domain.value}")
    frame = _frame(surf, grid.theta, grid.phi, table_for(grid, surf.l_max))
    _check_embedding(surf, frame)
    core = _core(spec, frame, order=3 if with_gradient else 2)
    curv, h, h_inv = core.curv, core.h, core.h_inv
    g = curv.metric
    t = frame.tangents

    second_form = -np.einsum("nj,nabj->nab", core.nu_cov, core.accel)
    shape = np.einsum("nac,ncb->nab", h_inv, second_form)
    mean = np.trace(shape, axis1=1, axis2=2)
    gauss_kronecker = np.linalg.det(second_form) / core.det_h
    shape_norm2 = np.einsum("nab,nba->n", shape, shape)
    eye = np.eye(2)[None]
    newton = mean[:, None, None] * eye - shape
    newton_upper = np.einsum("nac,ncb->nab", newton, h_inv)

    ricci_nu = curv.ricci_nu(core.nu)
    riem_tangent = np.einsum("nil,nai,nbl->nab", curv.riem_nu(core.nu), t, t)
    lowered = np.einsum("nabj,nji,ndi->nabd", core.accel, g, t)
    intrinsic_christoffel = np.einsum("ncd,nabd->ncab", h_inv, lowered)

    boundary = _boundary(spec, surf, grid) if surf.is_half else None
    return ExtrinsicData(
        points=frame.points,
        unit=frame.unit,
        radius=frame.radius,
        graph=frame.graph,
        tangents=t,
        normal=core.nu,
        normal_cov=core.nu_cov,
        induced=h,
        induced_inv=h_inv,
        area_weights=grid.weights * np.sqrt(core.det_h) / frame.sin_theta,
        second_form=second_form,
        shape=shape,
        mean=mean,
        gauss_kronecker=gauss_kronecker,
        shape_norm2=shape_norm2,
        newton=newton,
        newton_upper=newton_upper,
        ricci_nu=ricci_nu,
        scalar=curv.scalar,
        gaussian=gauss_kronecker + 0.5 * curv.scalar - ricci_nu,
        tilde_k=gauss_kronecker - 0.5 * ricci_nu,
        riem_nu=riem_tangent,
        intrinsic_christoffel=intrinsic_christoffel,
        radial_speed=np.einsum("ni,ni->n", frame.unit, core.nu_cov),
        grad_ricci_nu=curv.grad_ricci_nu(core.nu) if with_gradient else None,
        boundary=boundary,
    )


# =============================================================================
# Global measures
# =============================================================================

@dataclass(frozen=True)
class Measures:
    area: float
    volume: float
    total_mean_curvature: float
    boundary_length: Optional[float]
    r0: float
    volume_convention: str

    def to_dict(self) -> dict:
        return {
            "area": self.area,
            "volume": self.volume,
            "total_mean_curvature": self.total_mean_curvature,
            "boundary_length": self.boundary_length,
            "r0": self.r0,
            "volume_convention": self.volume_convention,
        }


def default_inner_radius(spec: MetricSpec) -> float:
    return max(2.0 * spec.r_min, INNER_RADIUS_MASS_FACTOR * abs(spec.m))


def enclosed_volume(spec: MetricSpec, surf: GraphSurface, grid: SphereGrid, r0: Optional[float] = None) -> float:
    """Flat volume of the r0-ball about the center plus sqrt(det g) over r0 <= s <= R(omega).

    The radial integral uses Gauss-Legendre panels [r0 2^k, r0 2^(k+1)] clipped
    at the surface, so the rule stays accurate at every radius.
    """
    r0 = default_inner_radius(spec) if r0 is None else float(r0)
    frame = _frame(surf, grid.theta, grid.phi, table_for(grid, surf.l_max))
    radius = frame.radius
    if r0 >= float(np.min(radius)):
        raise UsageError(f"inner reference radius {r0} does not fit inside the surface")
    n_panels = int(np.ceil(np.log2(np.max(radius) / r0)))
    z, w = special.roots_legendre(VOLUME_PANEL_NODES)
    radial = np.zeros(grid.size)
    for k in range(n_panels):
        lo = np.minimum(r0 * 2.0**k, radius)
        hi = np.minimum(r0 * 2.0 ** (k + 1), radius)
        half = 0.5 * (hi - lo)
        active = half > 0
        if not np.any(active):
            break
        s = 0.5 * (hi + lo)[active, None] + half[active, None] * z[None, :]
        pts = surf.center + s[..., None] * frame.unit[active, None, :]
        dens = np.sqrt(np.linalg.det(eval_metric(spec, pts.reshape(-1, 3)))).reshape(s.shape)
        radial[active] += half[active] * np.sum(w * dens * s**2, axis=-1)
    ball = (2.0 if surf.is_half else 4.0) * np.pi * r0**3 / 3.0
    return ball + float(np.sum(grid.weights * radial))


def measures(spec: MetricSpec, surf: GraphSurface, grid: SphereGrid, r0: Optional[float] = None) -> Measures:
    """A, V, M (and the equator length on hemispheres) of a graph surface."""
    data = extrinsic(spec, surf, grid)
    r0 = default_inner_radius(spec) if r0 is None else float(r0)
    return Measures(
        area=data.integrate(np.ones_like(data.mean)),
        volume=enclosed_volume(spec, surf, grid, r0),
        total_mean_curvature=data.integrate(data.mean),
        boundary_length=data.boundary.length if data.boundary is not None else None,
        r0=r0,
        volume_convention=f"flat ball of radius {r0!r} about the surface center",
    )


def free_boundary_defect(spec: MetricSpec, surf: GraphSurface, grid: SphereGrid) -> float:
    """sup over the equator of |contact angle - pi/2|."""
    if not surf.is_half:
        raise UsageError("free boundary defect needs a hemisphere surface")
    boundary = _boundary(spec, surf, grid)
    return float(np.max(np.abs(np.arcsin(np.clip(boundary.contact, -1.0, 1.0)))))


def positions(surf: GraphSurface, grid: SphereGrid) -> np.ndarray:
    return _frame(surf, grid.theta, grid.phi, table_for(grid, surf.l_max)).points


def centroid(surf: GraphSurface, grid: SphereGrid) -> np.ndarray:
    """Euclidean area-weighted average of surface positions."""
    frame = _frame(surf, grid.theta, grid.phi, table_for(grid, surf.l_max))
    t = frame.tangents
    weights = grid.weights * np.linalg.norm(np.cross(t[:, 0], t[:, 1]), axis=-1) / frame.sin_theta
    return np.sum(frame.points * weights[:, None], axis=0) / np.sum(weights)
