"""
Verification harness for the asymptotic expansions and integral identities.

Each check evaluates both sides of a relation along a radius ladder and fits
the decay (or growth) exponent of the residual against the claimed order.

Implements:
1. h_expansion_residual - mean curvature of S_rho(a) against its expansion,
   with an ablation switch (drop_terms)
2. kh_relation_residual - 2 rho K against H times the bracket series, and the
   almost-conformal defect of the radial field X = x - a
3. moment_identity - first moments of the G term against -8 pi m C
4. cmc_integration_identity - integration by parts on flat hemispheres
5. volume_area_relations - volume, area and total mean curvature of large
   coordinate spheres (and hemispheres)
6. leaf_expansion_residual / small_sphere_report
"""
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from rich.console import Console

from config import get_config, parallel_map
from errors import UsageError
from harmonics import Domain, build_grid
from invariants import (
    EUCLIDEAN_QUOTIENTS, SMALL_SPHERE_RADII, ConvergenceSeries, ModelSpace, coordinate_measures,
    extrapolate, flux_center, geodesic_sphere, isoperimetric_quotient, small_sphere, sweep_series,
)
from metric import MetricFamily, MetricSpec, Reference, conformal_reference, deviation_jet, eval_jet
from surface import GraphSurface, extrinsic

console = Console(stderr=True)


# =============================================================================
# Constants
# =============================================================================

EXPONENT_SLACK = 0.3  # band around a claimed decay order
GROWTH_BOUND = 1.2  # volume/area remainders must grow no faster than r^1.2
EXACT_FLOOR = 1e-11  # residuals below this (relative) count as exact zeros
IDENTITY_GAP = 1e-9  # identities exact for every tensor must close to this
SMALL_SPHERE_COEFFICIENTS = {(3, 2): 1.0 / 20.0, (3, 1): 3.0 / 10.0, (2, 1): 1.0 / 6.0}
H_EXPANSION_TERMS = ("quadratic", "offset", "perturbation")


class ReportMode(str, Enum):
    DECAY = "decay"  # residual ~ r^p with p <= claimed + slack
    GROWTH = "growth"  # first differences ~ r^p with p <= claimed
    VANISHING = "vanishing"  # small radii: residual ~ r^p with p >= claimed - slack
    EXACT = "exact"  # every residual below a fixed gap


@dataclass
class IdentityReport:
    tag: str
    radii: List[float]
    residuals: List[float]
    exponent: float
    fit_residual: float
    claimed: float
    mode: ReportMode
    passed: bool
    exact: bool = False
    notes: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mode"] = self.mode.value
        return out


def _log(message: str) -> None:
    if get_config().verbose:
        console.print(f"[dim]{message}[/dim]")


def fit_exponent(radii: Sequence[float], values: Sequence[float]) -> Tuple[float, float]:
    """Log-log least-squares slope of |values| against radii, with its RMS residual."""
    radii = np.asarray(radii, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    keep = values > 0.0
    if np.count_nonzero(keep) < 2:
        return float("nan"), float("nan")
    x, y = np.log(radii[keep]), np.log(values[keep])
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(np.sqrt(np.mean((slope * x + intercept - y) ** 2)))


def _report(tag: str, radii: Sequence[float], residuals: Sequence[float], claimed: float,
            mode: ReportMode, scale: float, notes: Optional[dict] = None,
            signed: Optional[Sequence[float]] = None) -> IdentityReport:
    radii = [float(r) for r in radii]
    residuals = [abs(float(v)) for v in residuals]
    notes = dict(notes or {})
    if max(residuals) <= EXACT_FLOOR * scale:
        report = IdentityReport(tag, radii, residuals, float("nan"), float("nan"), claimed, mode, True, True, notes)
    elif mode == ReportMode.GROWTH:
        diffs = np.diff(np.asarray(signed if signed is not None else residuals, dtype=float))
        exponent, fit = fit_exponent(radii[:-1], diffs)
        report = IdentityReport(tag, radii, residuals, exponent, fit, claimed, mode, exponent <= claimed, False, notes)
    else:
        exponent, fit = fit_exponent(radii, residuals)
        if mode == ReportMode.VANISHING:
            passed = exponent >= claimed - EXPONENT_SLACK
        else:
            passed = exponent <= claimed + EXPONENT_SLACK
        report = IdentityReport(tag, radii, residuals, exponent, fit, claimed, mode, bool(passed), False, notes)
    _log(f"{tag}: exponent {report.exponent:.3f} (claimed {claimed:g}) {'ok' if report.passed else 'FAIL'}")
    return report


def _check_ladder(radii: Sequence[float], minimum: int = 2) -> List[float]:
    radii = [float(r) for r in radii]
    if len(radii) < minimum or any(b <= a for a, b in zip(radii, radii[1:])):
        raise UsageError(f"radius ladder needs at least {minimum} increasing values")
    return radii


def _domain(spec: MetricSpec) -> Domain:
    return Domain.UPPER_HEMISPHERE if spec.is_half else Domain.FULL_SPHERE


def _center(spec: MetricSpec, center) -> np.ndarray:
    a = np.zeros(3) if center is None else np.pad(np.asarray(center, dtype=float), (0, 3 - len(center)))
    if spec.is_half and a[2] != 0.0:
        raise UsageError("hemisphere centers must lie on the boundary plane")
    return a


def _coordinate_sphere(spec: MetricSpec, a: np.ndarray, rho: float):
    grid = build_grid(get_config().l_quad, _domain(spec))
    surf = GraphSurface.round(a, rho, _domain(spec), l_max=0)
    return grid, extrinsic(spec, surf, grid)


# =============================================================================
# Mean curvature expansion
# =============================================================================

def g_term(spec: MetricSpec, x: np.ndarray, a: np.ndarray, rho: float) -> np.ndarray:
    """G(x) built from p = g - (1 + 2m/r) delta and r_hat = (x - a)/rho."""
    p = deviation_jet(spec, x, Reference.CONFORMAL_SCHWARZSCHILD)
    rr = (x - a) / rho
    dp = p.dg  # [n, k, i, j] = p_ij,k
    cubic = np.einsum("nkij,ni,nj,nk->n", dp, rr, rr, rr)
    quad = np.einsum("nij,ni,nj->n", p.g, rr, rr)
    div = np.einsum("niij,nj->n", dp, rr)
    trace = np.trace(p.g, axis1=1, axis2=2)
    dtrace = np.einsum("njii,nj->n", dp, rr)
    return 0.5 * cubic + 2.0 * quad / rho - div - trace / rho + 0.5 * dtrace


def _h_model(spec: MetricSpec, x: np.ndarray, a: np.ndarray, rho: float, drop: Sequence[str]) -> np.ndarray:
    m = spec.m
    model = np.full(x.shape[0], 2.0 / rho - 4.0 * m / rho**2)
    if "quadratic" not in drop:
        model += 9.0 * m**2 / rho**3
    if "offset" not in drop:
        model += 6.0 * m * ((x - a) @ a) / rho**4
    if "perturbation" not in drop:
        model += g_term(spec, x, a, rho)
    return model


def h_expansion_residual(spec: MetricSpec, radii: Sequence[float], center=None,
                         drop_terms: Sequence[str] = ()) -> IdentityReport:
    """sup |H - (2/rho - 4m/rho^2 + 9m^2/rho^3 + 6m (x-a).a/rho^4 + G)| on S_rho(a)."""
    radii = _check_ladder(radii)
    unknown = set(drop_terms) - set(H_EXPANSION_TERMS)
    if unknown:
        raise UsageError(f"unknown expansion terms {sorted(unknown)}; choose from {H_EXPANSION_TERMS}")
    a = _center(spec, center)

    def residual(rho: float) -> float:
        _, data = _coordinate_sphere(spec, a, rho)
        return float(np.max(np.abs(data.mean - _h_model(spec, data.points, a, rho, drop_terms))))

    residuals = parallel_map(residual, radii)
    return _report(
        "h-expansion", radii, residuals, -4.0, ReportMode.DECAY, scale=2.0 / radii[-1],
        notes={"center": a.tolist(), "dropped": list(drop_terms)},
    )


# =============================================================================
# K in terms of H, and the almost-conformal field
# =============================================================================

def _declared_epsilon(spec: MetricSpec) -> float:
    if spec.family == MetricFamily.FLAT:
        return math.inf
    if spec.epsilon is None:
        raise UsageError(f"the {spec.family.value} spec does not declare epsilon")
    return float(spec.epsilon)


def conformal_defect(spec: MetricSpec, x: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Per-point Frobenius norm of L_X g - 2 xi g for X = x - a."""
    jet = eval_jet(spec, x)
    X = x - a
    lie = np.einsum("ni,nijk->njk", X, jet.dg) + 2.0 * jet.g
    f = conformal_reference(spec, x)
    xi = (f.value + 0.5 * np.einsum("nk,nk->n", f.grad, X)) / f.value
    return np.linalg.norm(lie - 2.0 * xi[:, None, None] * jet.g, axis=(1, 2))


def kh_relation_residual(spec: MetricSpec, radii: Sequence[float], center=None) -> List[IdentityReport]:
    """Two tracks: |2 rho K - H * bracket| and sup |L_X g - 2 xi g| on S_rho(a)."""
    radii = _check_ladder(radii)
    eps = _declared_epsilon(spec)
    a = _center(spec, center)
    c = np.asarray(spec.c, dtype=float)
    m, g1, g2 = spec.m, spec.gamma1, spec.gamma2

    def tracks(rho: float) -> Tuple[float, float]:
        _, data = _coordinate_sphere(spec, a, rho)
        x = data.points
        bracket = (
            1.0 - 2.0 * m / rho + (9.0 * m**2 - 3.0 * g2) / (2.0 * rho**2)
            + 3.0 * m * (x @ a) / rho**3 - 1.5 * g1 * (x @ c) / rho**3
        )
        relation = float(np.max(np.abs(2.0 * rho * data.gauss_kronecker - data.mean * bracket)))
        return relation, float(np.max(conformal_defect(spec, x, a)))

    values = np.asarray(parallel_map(tracks, radii))
    relation_order = max(-3.0 - eps, -5.0)
    defect_order = -2.0 - eps if math.isfinite(eps) else -5.0
    notes = {"epsilon": None if math.isinf(eps) else eps, "candidate_orders": [-3.0 - eps, -5.0]}
    return [
        _report("kh-relation", radii, values[:, 0], relation_order, ReportMode.DECAY,
                scale=2.0 / radii[-1], notes=notes),
        _report("almost-conformal", radii, values[:, 1], defect_order, ReportMode.DECAY,
                scale=1.0, notes={"epsilon": notes["epsilon"]}),
    ]


# =============================================================================
# Center of mass moments
# =============================================================================

def g_moments(spec: MetricSpec, rho: float, center=None) -> np.ndarray:
    """Flat-area first moments of G over S_rho(a) (tangential components on half-spaces)."""
    a = _center(spec, center)
    grid = build_grid(get_config().l_quad, _domain(spec))
    x = a + rho * grid.unit_vectors()
    g = g_term(spec, x, a, rho)
    moments = rho**2 * np.einsum("na,n->a", (x - a) * g[:, None], grid.weights)
    return moments[:2] if spec.is_half else moments


def moment_identity(spec: MetricSpec, radii: Sequence[float], center=None,
                    center_of_mass: Optional[Sequence[float]] = None) -> IdentityReport:
    """|moments of G + 8 pi m C| along the ladder; C from the flux center unless given."""
    radii = _check_ladder(radii)
    if spec.m == 0.0:
        raise UsageError("the moment identity needs a nonzero mass parameter")
    if center_of_mass is None:
        series = sweep_series(lambda r: flux_center(spec, r), radii)
        center_of_mass = extrapolate(series).limit
    com = np.asarray(center_of_mass, dtype=float)
    target = -8.0 * np.pi * spec.flux_mass * com
    moments = np.asarray(parallel_map(lambda r: g_moments(spec, r, center), radii))
    residuals = np.linalg.norm(moments - target, axis=1)
    notes = {"center_of_mass": com.tolist(), "target": target.tolist(), "moments": moments.tolist()}
    if len(radii) >= 4:
        notes["limit"] = np.atleast_1d(extrapolate(ConvergenceSeries(np.asarray(radii), moments)).limit).tolist()
    scale = max(8.0 * np.pi * abs(spec.flux_mass), 1.0)
    return _report("moment", radii, residuals, -1.0, ReportMode.DECAY, scale=scale, notes=notes)


# =============================================================================
# Integration by parts on flat free boundary hemispheres
# =============================================================================

@dataclass
class IntegrationGap:
    rho: float
    lhs: List[float]
    rhs: List[float]
    gap: float
    terms: Dict[str, List[float]]

    def to_dict(self) -> dict:
        return asdict(self)


def cmc_integration_identity(spec: MetricSpec, rho: float, b=(0.0, 0.0)) -> IntegrationGap:
    """Both sides of the flat hemisphere identity for Y = (x_a - b_a) e(r_hat, .), e = g - delta.

    1/2 int (x_a-b_a) e_ij,k r_i r_j r_k
        = 1/2 int (x_a-b_a) e_ij,j r_i - 2 int (x_a-b_a) e_ij r_i r_j / rho
          + 1/2 int (e_ii r_a + e_ia r_i) + 1/2 oint (x_a-b_a) e_i3 r_i

    Derivation: take W_k = (x_a-b_a) e_ik r_i with r = (x-b)/rho. On the
    hemisphere div_S W = div W - r_j r_k W_k,j and div_S W = div_S W^T + (2/rho) W.r.
    The divergence theorem gives int div_S W^T = oint W.mu with outward
    conormal mu = -e_3, so the equator enters as -oint W.mu = +oint (x_a-b_a) e_i3 r_i.
    """
    if not spec.is_half:
        raise UsageError("the hemisphere integration identity needs a half-space spec")
    center = _center(spec, b)
    grid = build_grid(get_config().l_quad, Domain.UPPER_HEMISPHERE)
    rr = grid.unit_vectors()
    x = center + rho * rr
    e = deviation_jet(spec, x, Reference.FLAT)
    xa = (x - center)[:, :2]
    area = rho**2 * grid.weights

    cubic = 0.5 * xa * np.einsum("nkij,ni,nj,nk->n", e.dg, rr, rr, rr)[:, None]
    divergence = 0.5 * xa * np.einsum("njij,ni->n", e.dg, rr)[:, None]
    normal = -2.0 * xa * np.einsum("nij,ni,nj->n", e.g, rr, rr)[:, None] / rho
    trace = 0.5 * (np.trace(e.g, axis1=1, axis2=2)[:, None] * rr[:, :2] + np.einsum("nia,ni->na", e.g, rr)[:, :2])

    phi = grid.equator_phi
    omega = np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], axis=-1)
    e_edge = deviation_jet(spec, center + rho * omega, Reference.FLAT).g
    edge = 0.5 * rho * omega[:, :2] * np.einsum("ni,ni->n", e_edge[:, :, 2], omega)[:, None]
    arc = rho * grid.equator_weights

    def total(values, weights):
        return np.einsum("na,n->a", values, weights)

    terms = {
        "cubic": total(cubic, area),
        "divergence": total(divergence, area),
        "normal": total(normal, area),
        "trace": total(trace, area),
        "boundary": total(edge, arc),
    }
    scale = sum(float(np.sum(total(np.abs(v), w))) for v, w in (
        (cubic, area), (divergence, area), (normal, area), (trace, area), (edge, arc)))
    lhs = terms["cubic"]
    rhs = terms["divergence"] + terms["normal"] + terms["trace"] + terms["boundary"]
    gap = float(np.max(np.abs(lhs - rhs)) / scale) if scale > 0.0 else 0.0
    return IntegrationGap(float(rho), lhs.tolist(), rhs.tolist(), gap, {k: v.tolist() for k, v in terms.items()})


def integration_identity_report(spec: MetricSpec, radii: Sequence[float], b=(0.0, 0.0)) -> IdentityReport:
    radii = _check_ladder(radii, minimum=1)
    gaps = parallel_map(lambda r: cmc_integration_identity(spec, r, b), radii)
    residuals = [g.gap for g in gaps]
    return IdentityReport(
        "integration", radii, residuals, float("nan"), float("nan"), IDENTITY_GAP, ReportMode.EXACT,
        all(v <= IDENTITY_GAP for v in residuals), False, {"b": list(b)},
    )


# =============================================================================
# Volume / area / total mean curvature of large coordinate spheres
# =============================================================================

VOLUME_AREA_RELATIONS = ("volume-area", "mean-area", "volume-mean", "boundary-volume-area")


def _relation_residuals(name: str, r: float, area: float, volume: float, total: float, m: float) -> float:
    if name == "volume-area":
        return volume - (0.5 * r * area - 2.0 * np.pi / 3.0 * r**3 + 2.0 * np.pi * m * r**2)
    if name == "mean-area":
        return 0.5 * r**2 * total - (0.5 * r * area + 2.0 * np.pi * r**3 - 4.0 * np.pi * m * r**2)
    if name == "volume-mean":
        return volume - (0.5 * r**2 * total - 8.0 * np.pi / 3.0 * r**3 + 6.0 * np.pi * m * r**2)
    return volume - (0.5 * r * area - np.pi / 3.0 * r**3 + 2.0 * np.pi * m * r**2)


def volume_area_relations(spec: MetricSpec, radii: Sequence[float],
                          relations: Optional[Sequence[str]] = None) -> List[IdentityReport]:
    """Remainders of the large-sphere relations between V, A and M; each must be o(r^2)."""
    radii = _check_ladder(radii, minimum=3)
    boundary = ("boundary-volume-area",)
    if relations is None:
        relations = boundary if spec.is_half else VOLUME_AREA_RELATIONS[:3]
    for name in relations:
        if name not in VOLUME_AREA_RELATIONS:
            raise UsageError(f"unknown relation {name!r}; choose from {VOLUME_AREA_RELATIONS}")
        if (name in boundary) != spec.is_half:
            raise UsageError(f"relation {name!r} does not apply to the {spec.family.value} family")

    samples = parallel_map(lambda r: coordinate_measures(spec, r), radii)
    reports = []
    for name in relations:
        signed = [
            _relation_residuals(name, r, s.area, s.volume, s.total_mean_curvature, spec.flux_mass)
            for r, s in zip(radii, samples)
        ]
        reports.append(_report(
            name, radii, signed, GROWTH_BOUND, ReportMode.GROWTH, scale=radii[-1] ** 3,
            notes={"r0": samples[0].r0}, signed=signed,
        ))
    return reports


# =============================================================================
# Leaf quantities and small spheres
# =============================================================================

def leaf_expansion_residual(spec: MetricSpec, radii: Sequence[float], center=None) -> List[IdentityReport]:
    """K, |W|^2, K_G and the Newton tensor of S_rho(a) against their two-term expansions."""
    radii = _check_ladder(radii)
    a = spec.origin if center is None else _center(spec, center)
    m = spec.m

    def residuals(rho: float) -> List[float]:
        _, data = _coordinate_sphere(spec, a, rho)
        kappa = 1.0 / rho - 2.0 * m / rho**2
        newton = data.newton - kappa * np.eye(2)
        return [
            float(np.max(np.abs(data.gauss_kronecker - (rho**-2 - 4.0 * m / rho**3)))),
            float(np.max(np.abs(data.shape_norm2 - (2.0 / rho**2 - 8.0 * m / rho**3)))),
            float(np.max(np.abs(data.gaussian - (rho**-2 - 2.0 * m / rho**3)))),
            float(np.max(np.abs(newton))),
        ]

    values = np.asarray(parallel_map(residuals, radii))
    tags = (("leaf-K", -4.0, 2), ("leaf-W2", -4.0, 2), ("leaf-KG", -4.0, 2), ("leaf-Pi", -3.0, 1))
    return [
        _report(tag, radii, values[:, k], claimed, ReportMode.DECAY, scale=radii[-1] ** -power)
        for k, (tag, claimed, power) in enumerate(tags)
    ]


def small_sphere_report(model: ModelSpace, kind, radii: Sequence[float] = SMALL_SPHERE_RADII) -> IdentityReport:
    """|1 - I_r/I - c R r^2| for geodesic spheres; the remainder vanishes like r^4."""
    kind = tuple(kind)
    radii = _check_ladder(radii, minimum=3)
    coefficient = SMALL_SPHERE_COEFFICIENTS.get(kind)
    if coefficient is None:
        raise UsageError(f"small-sphere kind must be one of {sorted(SMALL_SPHERE_COEFFICIENTS)}, got {kind}")
    curvature = 6.0 if ModelSpace(model) == ModelSpace.ROUND_S3 else -6.0
    residuals = []
    for r in radii:
        ratio = isoperimetric_quotient(kind, *geodesic_sphere(model, r)) / EUCLIDEAN_QUOTIENTS[kind]
        residuals.append(1.0 - ratio - coefficient * curvature * r**2)
    fitted = small_sphere(model, kind, radii)
    return _report(
        f"small-sphere-{ModelSpace(model).value}-{kind[0]}{kind[1]}", radii, residuals, 4.0,
        ReportMode.VANISHING, scale=1e-30,
        notes={"coefficient": coefficient, "fitted": fitted},
    )


# =============================================================================
# Named identity sets
# =============================================================================

def _small_sphere_set(spec: MetricSpec, radii: Sequence[float]) -> List[IdentityReport]:
    return [small_sphere_report(model, kind) for model in ModelSpace for kind in sorted(SMALL_SPHERE_COEFFICIENTS)]


IDENTITY_SETS: Dict[str, Callable[[MetricSpec, Sequence[float]], List[IdentityReport]]] = {
    "h-expansion": lambda spec, radii: [h_expansion_residual(spec, radii)],
    "kh-relation": kh_relation_residual,
    "moment": lambda spec, radii: [moment_identity(spec, radii)],
    "integration": lambda spec, radii: [integration_identity_report(spec, radii)],
    "volume-area": volume_area_relations,
    "leaf": leaf_expansion_residual,
    "small-sphere": _small_sphere_set,
}


def run_identity_set(name: str, spec: MetricSpec, radii: Sequence[float]) -> List[IdentityReport]:
    if name not in IDENTITY_SETS:
        raise UsageError(f"unknown identity set {name!r}; choose from {sorted(IDENTITY_SETS)}")
    return IDENTITY_SETS[name](spec, radii)
