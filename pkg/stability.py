"""
Jacobi operators, their spectra, and numerical checks of the variational formulas.

Implements:
1. assemble - Galerkin stiffness and mass matrices in the real harmonic basis
   for the CMC Jacobi operator, the K~ Jacobi operator and the (Robin) Laplacian
2. spectrum - generalized symmetric eigenproblem, plus the first eigenvalue on
   functions with zero mean in the induced metric
3. variation_check - finite differences of A, total mean curvature and
   A - H0 V under radial variations against their closed forms
4. reilly_check - two-sided evaluation of the two-dimensional Reilly identity
   on hemispheres
5. lichnerowicz_check / fit_leaf_spectra
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np
from rich.console import Console
from scipy import linalg

from config import get_config
from errors import NumericalFailure, UsageError
from harmonics import Domain, SphereGrid, domain_indices, equator_table, index, project, table_for
from invariants import ExpansionFit, fit_expansion
from metric import MetricSpec
from surface import ExtrinsicData, GraphSurface, enclosed_volume, extrinsic

console = Console(stderr=True)


SYMMETRY_TOLERANCE = 1e-9
NOISE_FLOOR = 1e-10  # relative level below which both sides of an identity count as zero
MIN_STEP = 1e-12  # steps below this (relative to rho) underflow the differences


class OperatorTag(str, Enum):
    CMC_JACOBI = "cmc"
    TILDE_K_JACOBI = "tilde-k"
    ROBIN_LAPLACIAN = "robin-laplacian"
    LAPLACIAN = "laplacian"


class BoundaryCondition(str, Enum):
    NONE = "none"
    ROBIN = "robin"


@dataclass
class OperatorMatrix:
    """Galerkin matrices of a self-adjoint operator in the domain's harmonic basis."""
    tag: OperatorTag
    boundary: BoundaryCondition
    stiffness: np.ndarray
    mass: np.ndarray
    basis: np.ndarray  # coefficient indices (l^2 + l + m) of the basis functions
    symmetry_defect: float
    constant: np.ndarray  # coordinates of the constant function 1


@dataclass
class SpectrumResult:
    tag: OperatorTag
    eigenvalues: np.ndarray
    constrained: float
    vectors: np.ndarray
    basis: np.ndarray

    def to_dict(self) -> dict:
        return {
            "tag": self.tag.value,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "constrained": float(self.constrained),
        }


# =============================================================================
# Assembly
# =============================================================================

def _basis_derivatives(grid: SphereGrid, l_max: int, basis: np.ndarray):
    table = table_for(grid, l_max)
    values = table.values[basis]
    grads = np.stack([table.d_theta[basis], table.d_phi[basis]], axis=-1)
    return values, grads


def assemble(spec: MetricSpec, surf: GraphSurface, grid: SphereGrid, tag: OperatorTag,
             l_max: Optional[int] = None, data: Optional[ExtrinsicData] = None) -> OperatorMatrix:
    """Stiffness matrix of the operator's quadratic form and the Gram (mass) matrix."""
    tag = OperatorTag(tag)
    l_max = l_max or get_config().l_max
    half = surf.is_half
    if tag == OperatorTag.ROBIN_LAPLACIAN and not half:
        raise UsageError("Robin boundary data needs a hemisphere surface")
    if tag == OperatorTag.TILDE_K_JACOBI and half:
        raise UsageError("the K~ Jacobi operator is assembled on closed spheres")
    if data is None:
        data = extrinsic(spec, surf, grid, with_gradient=tag == OperatorTag.TILDE_K_JACOBI)

    basis = domain_indices(l_max, surf.domain)
    values, grads = _basis_derivatives(grid, l_max, basis)
    w = data.area_weights

    if tag == OperatorTag.TILDE_K_JACOBI:
        floor = float(np.min(data.newton_min_eigenvalue))
        if floor <= 0.0:
            raise NumericalFailure("assemble", f"Newton tensor lost ellipticity (min eigenvalue {floor:.3e})")
        if data.grad_ricci_nu is None:
            data = extrinsic(spec, surf, grid, with_gradient=True)
        principal = data.newton_upper
        trace_riem = np.einsum("nab,nab->n", data.newton_upper, data.riem_nu)
        potential = -(data.mean * data.gauss_kronecker + 0.5 * data.grad_ricci_nu + trace_riem)
    else:
        principal = data.induced_inv
        if tag == OperatorTag.CMC_JACOBI:
            potential = -(data.shape_norm2 + data.ricci_nu)
        else:
            potential = np.zeros_like(w)

    stiffness = np.einsum("jna,nab,knb,n->jk", grads, principal, grads, w)
    stiffness += np.einsum("jn,kn,n->jk", values, values, potential * w)
    mass = np.einsum("jn,kn,n->jk", values, values, w)

    boundary = BoundaryCondition.NONE
    if half and tag in (OperatorTag.CMC_JACOBI, OperatorTag.ROBIN_LAPLACIAN):
        boundary = BoundaryCondition.ROBIN
        bdata = data.boundary
        edge = equator_table(grid.l_quad, l_max).values[basis]
        stiffness -= np.einsum("jn,kn,n->jk", edge, edge, bdata.kappa * bdata.arc_weights)

    scale = max(float(np.max(np.abs(stiffness))), np.finfo(float).tiny)
    defect = float(np.max(np.abs(stiffness - stiffness.T))) / scale
    if defect > SYMMETRY_TOLERANCE:
        raise NumericalFailure("assemble", f"operator symmetry defect {defect:.2e}")
    stiffness = 0.5 * (stiffness + stiffness.T)
    mass = 0.5 * (mass + mass.T)

    constant = np.zeros(len(basis))
    constant[list(basis).index(index(0, 0))] = np.sqrt(4.0 * np.pi)
    return OperatorMatrix(tag, boundary, stiffness, mass, basis, defect, constant)


def spectrum(op: OperatorMatrix, k: int = 10) -> SpectrumResult:
    """Lowest k eigenpairs of A v = lambda B v, and the lowest on {int f dS = 0}."""
    n = op.stiffness.shape[0]
    if not 1 <= k <= n:
        raise UsageError(f"k must lie in [1, {n}], got {k}")
    try:
        values, vectors = linalg.eigh(op.stiffness, op.mass)
        constraint = (op.mass @ op.constant)[None, :]
        complement = linalg.null_space(constraint)
        reduced = linalg.eigh(
            complement.T @ op.stiffness @ complement,
            complement.T @ op.mass @ complement,
            eigvals_only=True,
        )
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalFailure("spectrum", f"generalized eigensolve failed: {e}") from e
    return SpectrumResult(op.tag, values[:k], float(reduced[0]), vectors[:, :k], op.basis)


@dataclass
class LichnerowiczReport:
    first_nonzero: float
    bound: float
    ok: bool


def lichnerowicz_check(spec: MetricSpec, surf: GraphSurface, grid: SphereGrid,
                       l_max: Optional[int] = None, tolerance: float = 1e-8) -> LichnerowiczReport:
    """First nonzero eigenvalue of -Delta_S against 2 inf K_G on a closed leaf."""
    if surf.is_half:
        raise UsageError("the Lichnerowicz comparison is made on closed spheres")
    data = extrinsic(spec, surf, grid)
    result = spectrum(assemble(spec, surf, grid, OperatorTag.LAPLACIAN, l_max, data), k=1)
    bound = 2.0 * float(np.min(data.gaussian))
    scale = max(abs(bound), abs(result.constrained))
    return LichnerowiczReport(result.constrained, bound, result.constrained >= bound - tolerance * scale)


def fit_leaf_spectra(rhos: Sequence[float], values: Sequence[float], leading_power: float) -> ExpansionFit:
    """a rho^-p + b rho^-(p+1) fit of an eigenvalue along a sweep."""
    return fit_expansion(rhos, values, (leading_power, leading_power + 1.0))


# =============================================================================
# Variational checks
# =============================================================================

@dataclass
class VariationCheck:
    name: str
    analytic: float
    estimates: List[float]
    refined: float
    residual: float
    order: float

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "analytic": self.analytic,
            "estimates": list(self.estimates),
            "refined": self.refined,
            "residual": self.residual,
            "order": self.order,
        }


def richardson_extrapolate(base_values: Sequence[float], p: int, r: float = 2.0) -> float:
    """Eliminate the h^p, h^2p, ... error terms of a sequence with steps shrinking by r."""
    vals = [float(v) for v in base_values]
    n = len(vals)
    if n < 2:
        raise UsageError("richardson_extrapolate requires at least two base values")
    for j in range(1, n):
        factor = r ** (p * j)
        for k in range(n - 1, j - 1, -1):
            vals[k] = (factor * vals[k] - vals[k - 1]) / (factor - 1.0)
    return vals[-1]


def observed_order(steps: Sequence[float], errors: Sequence[float], floor: float) -> float:
    """Log-log slope of the errors that sit above the noise floor."""
    pairs = [(h, e) for h, e in zip(steps, errors) if e > floor]
    if len(pairs) < 2:
        return float("nan")
    h, e = np.log(np.array(pairs)).T
    return float(np.polyfit(h, e, 1)[0])


def _nodal_gradient(grid: SphereGrid, values: np.ndarray) -> np.ndarray:
    """(f_theta, f_phi) at the nodes of a smooth nodal function, through its harmonic expansion."""
    l_proj = grid.l_quad // 2
    coeffs = project(grid, values, l_proj)
    table = table_for(grid, l_proj)
    return np.stack([coeffs @ table.d_theta, coeffs @ table.d_phi], axis=-1)


def _check_steps(surf: GraphSurface, steps: Sequence[float]) -> List[float]:
    steps = [float(s) for s in steps]
    if len(steps) < 2 or any(b >= a for a, b in zip(steps, steps[1:])):
        raise UsageError("steps must be a decreasing list of at least two values")
    if steps[-1] <= MIN_STEP * surf.rho:
        raise UsageError(f"step {steps[-1]:g} underflows the finite differences at rho={surf.rho:g}")
    return steps


def _compare(name: str, analytic: float, scale: float, estimates: List[float], steps: List[float]) -> VariationCheck:
    ratio = steps[0] / steps[1]
    refined = richardson_extrapolate(estimates, p=2, r=ratio)
    denom = max(abs(analytic), scale, np.finfo(float).tiny)
    errors = [abs(e - analytic) for e in estimates]
    return VariationCheck(
        name=name,
        analytic=analytic,
        estimates=estimates,
        refined=refined,
        residual=abs(refined - analytic) / denom,
        order=observed_order(steps, errors, NOISE_FLOOR * denom),
    )


def variation_check(spec: MetricSpec, surf: GraphSurface, grid: SphereGrid, f: np.ndarray,
                    steps: Sequence[float]) -> List[VariationCheck]:
    """Centered differences along R + t f against the variational formulas.

    Checks: first variation of area; derivative of the total mean curvature
    against 2 int K~ u (closed spheres); second derivative of A - H0 V against
    the Jacobi quadratic form (exact at CMC and free boundary CMC surfaces).
    """
    steps = _check_steps(surf, steps)
    f = np.asarray(f, dtype=float)
    data = extrinsic(spec, surf, grid)
    l_f = int(round(np.sqrt(f.shape[0]))) - 1
    f_nodes = f @ table_for(grid, l_f).values
    u = f_nodes * data.radial_speed
    area0 = data.integrate(np.ones_like(u))
    h0 = data.integrate(data.mean) / area0

    def functionals(t: float):
        moved = surf.displaced(f, t)
        d = extrinsic(spec, moved, grid)
        area = d.integrate(np.ones_like(d.mean))
        volume = enclosed_volume(spec, moved, grid)
        return area, d.integrate(d.mean), area - h0 * volume

    base = functionals(0.0)
    samples = [(functionals(t), functionals(-t)) for t in steps]

    checks = []
    first = data.integrate(data.mean * u)
    first_scale = data.integrate(np.abs(data.mean * u))
    if surf.is_half:
        bdata = data.boundary
        f_edge = f @ equator_table(grid.l_quad, l_f).values
        first += bdata.integrate(f_edge * bdata.radial_conormal)
        first_scale += bdata.integrate(np.abs(f_edge * bdata.radial_conormal))
    checks.append(_compare(
        "first_variation_area", first, first_scale,
        [(plus[0] - minus[0]) / (2.0 * t) for t, (plus, minus) in zip(steps, samples)], steps,
    ))

    if not surf.is_half:
        integrand = 2.0 * data.tilde_k * u
        checks.append(_compare(
            "total_mean_curvature", data.integrate(integrand), data.integrate(np.abs(integrand)),
            [(plus[1] - minus[1]) / (2.0 * t) for t, (plus, minus) in zip(steps, samples)], steps,
        ))

    grad_u = _nodal_gradient(grid, u)
    gradient = np.einsum("na,nab,nb->n", grad_u, data.induced_inv, grad_u)
    potential = (data.shape_norm2 + data.ricci_nu) * u**2
    quadratic = data.integrate(gradient - potential)
    quadratic_scale = data.integrate(gradient + np.abs(potential))
    if surf.is_half:
        bdata = data.boundary
        u_edge = project(grid, u, grid.l_quad // 2) @ equator_table(grid.l_quad, grid.l_quad // 2).values
        quadratic -= bdata.integrate(bdata.kappa * u_edge**2)
        quadratic_scale += bdata.integrate(np.abs(bdata.kappa) * u_edge**2)
    checks.append(_compare(
        "second_variation", quadratic, quadratic_scale,
        [(plus[2] - 2.0 * base[2] + minus[2]) / t**2 for t, (plus, minus) in zip(steps, samples)], steps,
    ))
    if get_config().verbose:
        for check in checks:
            console.print(f"[dim]{check.name}: residual {check.residual:.2e}, order {check.order:.2f}[/dim]")
    return checks


# =============================================================================
# Reilly identity
# =============================================================================

@dataclass
class ReillyReport:
    lhs: float
    rhs: float
    gap: float
    degenerate: bool = False
    terms: dict = field(default_factory=dict)


def reilly_check(spec: MetricSpec, surf: GraphSurface, grid: SphereGrid, f: np.ndarray,
                 allow_degenerate: bool = False) -> ReillyReport:
    """Both sides of int (Delta f)^2 - |Hess f|^2 = boundary terms + int K_G |grad f|^2."""
    if not surf.is_half:
        raise UsageError("the Reilly check runs on hemisphere surfaces")
    f = np.asarray(f, dtype=float)
    l_f = int(round(np.sqrt(f.shape[0]))) - 1
    data = extrinsic(spec, surf, grid)
    table = table_for(grid, l_f)
    grad = np.stack([f @ table.d_theta, f @ table.d_phi], axis=-1)
    second = np.stack([
        np.stack([f @ table.d_theta_theta, f @ table.d_theta_phi], axis=-1),
        np.stack([f @ table.d_theta_phi, f @ table.d_phi_phi], axis=-1),
    ], axis=-2)
    hess = second - np.einsum("ncab,nc->nab", data.intrinsic_christoffel, grad)
    h_inv = data.induced_inv
    laplacian = np.einsum("nab,nab->n", h_inv, hess)
    hess_norm2 = np.einsum("nac,nbd,nab,ncd->n", h_inv, h_inv, hess, hess)
    grad_norm2 = np.einsum("na,nab,nb->n", grad, h_inv, grad)

    bdata = data.boundary
    edge = equator_table(grid.l_quad, l_f)
    f_t, f_p, f_pp = f @ edge.d_theta, f @ edge.d_phi, f @ edge.d_phi_phi
    f_mu = bdata.conormal_param[:, 0] * f_t + bdata.conormal_param[:, 1] * f_p
    lap_edge = f_pp / bdata.speed**2 - f_p * bdata.speed_derivative / bdata.speed**3
    tangential2 = f_p**2 / bdata.speed**2

    terms = {
        "interior": data.integrate(laplacian**2 - hess_norm2),
        "boundary_laplacian": 2.0 * bdata.integrate(f_mu * lap_edge),
        "boundary_curvature": bdata.integrate(bdata.geodesic_curvature * (f_mu**2 + tangential2)),
        "gaussian": data.integrate(data.gaussian * grad_norm2),
    }
    lhs = terms["interior"]
    rhs = terms["boundary_laplacian"] + terms["boundary_curvature"] + terms["gaussian"]
    scale = data.integrate(laplacian**2 + hess_norm2 + np.abs(data.gaussian) * grad_norm2)
    if scale <= NOISE_FLOOR * surf.rho ** -4 * data.integrate(np.ones_like(laplacian)):
        if not allow_degenerate:
            raise UsageError("degenerate test function: both sides of the identity vanish")
        return ReillyReport(lhs, rhs, 0.0, True, terms)
    return ReillyReport(lhs, rhs, abs(lhs - rhs) / scale, False, terms)
