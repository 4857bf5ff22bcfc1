"""
Spectral fixed-point solver for foliation leaves.

Implements:
1. poisson_solve - (Delta + 2) psi = F on spherical-harmonic coefficients,
   rejecting right-hand sides with a degree-1 (kernel) component
2. solve_leaf - CMC, constant K~, K~ = gamma H and free boundary CMC leaves
   as radial graphs, with a damped center update that kills the degree-1
   part of the curvature defect
3. sweep - leaves over a radius list, geometric center of the foliation and
   a discrete nesting check
4. leaf_to_json / leaf_from_json - leaf records for the CLI
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, field_validator
from rich.console import Console

from config import get_config, parallel_map
from errors import NumericalFailure, UsageError
from harmonics import Domain, basis_size, build_grid, degrees, domain_indices, index, project
from invariants import ConvergenceSeries, ExtrapolationResult, MIN_SAMPLES, extrapolate
from metric import MetricFamily, MetricSpec
from surface import ExtrinsicData, GraphSurface, centroid, extrinsic, free_boundary_defect, positions

console = Console(stderr=True)


# =============================================================================
# Constants
# =============================================================================

SOLVER_FLOOR_FACTOR = 20.0  # rho >= 20 max(1, |m|); empirical
KERNEL_TOLERANCE = 1e-8  # relative size of an l = 1 component poisson_solve refuses
STAGNATION_WINDOW = 25  # iterations without a 0.1% residual drop before giving up


class Condition(str, Enum):
    CMC = "cmc"
    CONST_TILDE_K = "const-tilde-k"
    TILDE_K_RATIO = "tilde-k-ratio"
    FREE_BOUNDARY_CMC = "fb-cmc"


class SolverConfig(BaseModel):
    """Leaf solver settings."""

    condition: Condition = Field(default=Condition.CMC, description="Curvature condition of the leaves")
    l_max: int = Field(default=8, ge=2, description="Harmonic cutoff of the graph")
    l_quad: int = Field(default=24, ge=4, description="Quadrature exactness degree")
    theta_exp: float = Field(default=0.5, description="Graph exponent theta in rho^-theta phi")
    tolerance: float = Field(default=1e-10, gt=0, description="Sup-norm tolerance on the curvature defect")
    max_iterations: int = Field(default=200, ge=1, description="Iteration cap")
    damping: float = Field(default=0.5, gt=0, le=1, description="Center update damping")

    @field_validator("theta_exp")
    @classmethod
    def _open_unit_interval(cls, value):
        if not 0.0 < value < 1.0:
            raise ValueError("theta_exp must lie in (0, 1)")
        return value

    @classmethod
    def from_config(cls, condition: Condition = Condition.CMC, **overrides) -> "SolverConfig":
        """Defaults from the global configuration, with explicit overrides."""
        config = get_config()
        values = {
            "condition": condition,
            "l_max": config.l_max,
            "l_quad": config.l_quad,
            "tolerance": config.tolerance,
            "max_iterations": config.max_iterations,
        }
        values.update(overrides)
        return cls(**values)

    @property
    def domain(self) -> Domain:
        return Domain.UPPER_HEMISPHERE if self.condition == Condition.FREE_BOUNDARY_CMC else Domain.FULL_SPHERE


@dataclass
class LeafResult:
    surface: GraphSurface
    condition: Condition
    target: float
    achieved: float
    residual: float
    iterations: int
    gamma: Optional[float] = None
    free_boundary_defect: Optional[float] = None

    @property
    def center(self) -> np.ndarray:
        return self.surface.center

    @property
    def rho(self) -> float:
        return self.surface.rho


# =============================================================================
# Linear solve
# =============================================================================

def poisson_solve(rhs: np.ndarray, domain: Domain = Domain.FULL_SPHERE,
                  kernel_tol: float = KERNEL_TOLERANCE) -> np.ndarray:
    """Solve (Delta_1 + 2) psi = F coefficient-wise; l = 1 outputs are zero.

    Raises NumericalFailure when F has a kernel component above
    kernel_tol * max(1, |F|).
    """
    rhs = np.asarray(rhs, dtype=float)
    l_max = int(round(np.sqrt(rhs.shape[0]))) - 1
    kernel = [index(1, m) for m in (-1, 0, 1) if l_max >= 1 and index(1, m) in set(domain_indices(l_max, domain))]
    size = float(np.max(np.abs(rhs))) if rhs.size else 0.0
    if kernel and float(np.max(np.abs(rhs[kernel]))) > kernel_tol * max(1.0, size):
        raise NumericalFailure(
            "poisson_solve",
            "right-hand side has a degree-1 component; the center update did not remove the cokernel",
            {"kernel_component": float(np.max(np.abs(rhs[kernel])))},
        )
    out = np.zeros_like(rhs)
    for l, m in degrees(l_max):
        if l == 1:
            continue
        k = index(l, m)
        out[k] = rhs[k] / (2.0 - l * (l + 1))
    if domain == Domain.UPPER_HEMISPHERE:
        keep = np.zeros(rhs.shape[0], dtype=bool)
        keep[domain_indices(l_max, domain)] = True
        out[~keep] = 0.0
    return out


# =============================================================================
# Leaf solver
# =============================================================================

def _targets(spec: MetricSpec, rho: float, condition: Condition):
    """(target constant, gamma, linearization scale, center gain)."""
    m = spec.m
    if condition in (Condition.CMC, Condition.FREE_BOUNDARY_CMC):
        gain = (8.0 if condition == Condition.CMC else 4.0) * np.pi * m / rho**3
        return 2.0 / rho - 4.0 * m / rho**2, None, rho**2, gain
    if condition == Condition.CONST_TILDE_K:
        return 1.0 / rho**2 - 3.0 * m / rho**3, None, rho**3, 8.0 * np.pi * m / rho**4
    gamma = 1.0 / (2.0 * rho) - m / (2.0 * rho**2)
    return 0.0, gamma, rho**3 / (1.0 - gamma * rho), 4.0 * np.pi * m / rho**4


def _quantity(data: ExtrinsicData, condition: Condition, gamma: Optional[float]) -> np.ndarray:
    if condition in (Condition.CMC, Condition.FREE_BOUNDARY_CMC):
        return data.mean
    if condition == Condition.CONST_TILDE_K:
        return data.tilde_k
    return data.tilde_k - gamma * data.mean


def nominal_center(spec: MetricSpec) -> np.ndarray:
    """c for EpsAS and the Schwarzschild families, the origin for Flat."""
    if spec.family == MetricFamily.FLAT:
        return np.zeros(3)
    return np.asarray(spec.c, dtype=float)


def solver_floor(spec: MetricSpec) -> float:
    return SOLVER_FLOOR_FACTOR * max(1.0, abs(spec.m))


def _check_compatible(spec: MetricSpec, rho: float, cfg: SolverConfig) -> None:
    if rho < solver_floor(spec):
        raise UsageError(f"rho={rho} is below the solver floor {solver_floor(spec)}")
    if (cfg.condition == Condition.FREE_BOUNDARY_CMC) != spec.is_half:
        raise UsageError(f"condition {cfg.condition.value} does not apply to the {spec.family.value} family")


def _moment(grid, unit: np.ndarray, defect: np.ndarray, half: bool) -> np.ndarray:
    moment = np.einsum("ni,n->i", unit * defect[:, None], grid.weights)
    if half:
        moment[2] = 0.0
    return moment


def solve_leaf(spec: MetricSpec, rho: float, cfg: Optional[SolverConfig] = None,
               seed: Optional[LeafResult] = None) -> LeafResult:
    """Fixed-point construction of one leaf at base radius rho."""
    cfg = cfg or SolverConfig.from_config()
    _check_compatible(spec, rho, cfg)
    domain = cfg.domain
    half = domain == Domain.UPPER_HEMISPHERE
    grid = build_grid(cfg.l_quad, domain)
    unit = grid.unit_vectors()
    target, gamma, scale, gain = _targets(spec, rho, cfg.condition)

    coeffs = np.zeros(basis_size(cfg.l_max))
    center = nominal_center(spec)
    if seed is not None:
        n = min(seed.surface.coeffs.shape[0], coeffs.shape[0])
        coeffs[:n] = seed.surface.coeffs[:n] * (rho / seed.rho) ** cfg.theta_exp
        center = seed.center.copy()
    if half:
        center[2] = 0.0

    best, stalled = np.inf, 0
    for iterations in range(cfg.max_iterations + 1):
        surf = GraphSurface(center, rho, coeffs, cfg.theta_exp, domain)
        data = extrinsic(spec, surf, grid)
        quantity = _quantity(data, cfg.condition, gamma)
        defect = quantity - target
        residual = float(np.max(np.abs(defect)))
        if residual <= cfg.tolerance:
            achieved = data.integrate(quantity) / data.integrate(np.ones_like(quantity))
            fb = free_boundary_defect(spec, surf, grid) if half else None
            if get_config().verbose:
                console.print(f"[dim]leaf rho={rho:g} converged in {iterations} iterations, residual {residual:.2e}[/dim]")
            return LeafResult(surf, cfg.condition, target, achieved, residual, iterations, gamma, fb)
        if iterations == cfg.max_iterations:
            break

        if residual < 0.999 * best:
            best, stalled = residual, 0
        else:
            stalled += 1
            if stalled >= STAGNATION_WINDOW:
                raise NumericalFailure(
                    "solve_leaf", f"residual stagnated at {residual:.3e} for rho={rho}",
                    {"rho": rho, "residual": residual, "iterations": iterations},
                )

        update = project(grid, scale * defect, cfg.l_max)
        if spec.m != 0.0:
            # the center step takes the degree-1 part of the defect; without
            # mass it reaches poisson_solve, which refuses it
            center = center - cfg.damping * _moment(grid, unit, defect, half) / gain
            update[[index(1, m) for m in (-1, 0, 1)]] = 0.0
        coeffs = coeffs + rho**cfg.theta_exp * poisson_solve(update, domain)

    raise NumericalFailure(
        "solve_leaf", f"no convergence within {cfg.max_iterations} iterations at rho={rho}",
        {"rho": rho, "residual": residual},
    )


# =============================================================================
# Sweeps
# =============================================================================

@dataclass
class NestingReport:
    ok: bool
    violations: List[dict] = field(default_factory=list)


@dataclass
class SweepResult:
    leaves: List[LeafResult]
    centroids: np.ndarray
    geometric_center: np.ndarray
    center_fit: Optional[ExtrapolationResult]
    nesting: NestingReport


def nesting_report(leaves: Sequence[LeafResult], reference: np.ndarray, l_quad: int) -> NestingReport:
    """Leaf k+1 must lie strictly outside leaf k in distance from the reference point."""
    extents = []
    for leaf in leaves:
        grid = build_grid(l_quad, leaf.surface.domain)
        dist = np.linalg.norm(positions(leaf.surface, grid) - reference, axis=-1)
        extents.append((float(np.min(dist)), float(np.max(dist))))
    violations = []
    for k in range(len(leaves) - 1):
        inner_max, outer_min = extents[k][1], extents[k + 1][0]
        if outer_min <= inner_max:
            violations.append({
                "inner_rho": leaves[k].rho, "outer_rho": leaves[k + 1].rho,
                "inner_max": inner_max, "outer_min": outer_min,
            })
    return NestingReport(not violations, violations)


def sweep(spec: MetricSpec, rhos: Sequence[float], cfg: Optional[SolverConfig] = None) -> SweepResult:
    """Solve leaves over an increasing radius list and locate the foliation's center."""
    cfg = cfg or SolverConfig.from_config()
    rhos = [float(r) for r in rhos]
    if any(b <= a for a, b in zip(rhos, rhos[1:])):
        raise UsageError("sweep radii must be strictly increasing")
    for rho in rhos:
        _check_compatible(spec, rho, cfg)

    leaves = parallel_map(lambda rho: solve_leaf(spec, rho, cfg), rhos)
    dims = 2 if spec.is_half else 3
    centroids = np.array([centroid(leaf.surface, build_grid(cfg.l_quad, cfg.domain))[:dims] for leaf in leaves])
    fit = None
    geometric_center = centroids[-1]
    if len(leaves) >= MIN_SAMPLES:
        fit = extrapolate(ConvergenceSeries(np.asarray(rhos), centroids), two_term=False)
        geometric_center = np.asarray(fit.limit)
    nesting = nesting_report(leaves, nominal_center(spec), cfg.l_quad)
    return SweepResult(leaves, centroids, geometric_center, fit, nesting)


# =============================================================================
# Serialization
# =============================================================================

def leaf_to_json(leaf: LeafResult) -> dict:
    return {
        "surface": leaf.surface.to_dict(),
        "metadata": {
            "condition": leaf.condition.value,
            "target": leaf.target,
            "achieved": leaf.achieved,
            "gamma": leaf.gamma,
            "residual": leaf.residual,
            "iterations": leaf.iterations,
            "free_boundary_defect": leaf.free_boundary_defect,
        },
    }


def leaf_from_json(data: dict) -> LeafResult:
    try:
        meta = data["metadata"]
        return LeafResult(
            surface=GraphSurface.from_dict(data["surface"]),
            condition=Condition(meta["condition"]),
            target=float(meta["target"]),
            achieved=float(meta["achieved"]),
            residual=float(meta["residual"]),
            iterations=int(meta["iterations"]),
            gamma=meta.get("gamma"),
            free_boundary_defect=meta.get("free_boundary_defect"),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise UsageError(f"malformed leaf record: {e}") from e
