"""
Closed-form asymptotically flat metric families and their curvature.

Implements:
1. MetricSpec - a member of the Flat / Schwarzschild / EpsAS / HalfSchwarzschild
   families, optionally carrying structured perturbation terms; JSON in and out
2. eval_jet - analytic g, dg, ddg (dddg on request) at exterior points
3. curvature - Christoffel symbols, Riemann, Ricci, scalar curvature, and the
   covariant derivative of Ricci when third derivatives are requested
4. deviation_jet - e = g - delta, or p = g - (1 + 2m/r) delta
5. conformal_reference - the conformal factor f = 1 + 2m/r + g1 c.x/r^3 + g2/r^2
6. boundary_second_fundamental_form - second fundamental form of {x3 = 0}

Every derivative is hand-coded from closed forms. Nothing in this module
differentiates numerically.
"""
import json
import math
from dataclasses import dataclass
from enum import Enum
from itertools import product
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from errors import UsageError


# =============================================================================
# Constants
# =============================================================================

R_MIN_FACTOR = 4.0  # default r_min = R_MIN_FACTOR * |m| (outside the isotropic horizon region)
R_MIN_FLOOR = 1.0  # r_min never drops below this, so massless specs stay well defined
DOMAIN_SLACK = 1e-12  # relative slack on domain checks (r_min, x3 >= 0)


class MetricFamily(str, Enum):
    FLAT = "flat"
    SCHWARZSCHILD = "schwarzschild"
    EPS_AS = "eps_as"
    HALF_SCHWARZSCHILD = "half_schwarzschild"


class Reference(str, Enum):
    """Background subtracted by deviation_jet."""
    FLAT = "flat"
    CONFORMAL_SCHWARZSCHILD = "conformal_schwarzschild"


class PointInsideRMinError(UsageError):
    """Evaluation point closer to the metric center than r_min."""


class PointBelowBoundaryError(UsageError):
    """Half-space metric evaluated below the boundary plane x3 = 0."""


# =============================================================================
# Spec models
# =============================================================================

class PerturbationTerm(BaseModel):
    """
    One structured term T_ij * (y/r)^alpha * r^(-decay), y = x - origin, r = |y|.

    The angular part is a monomial in the unit vector y/r, so every derivative
    of the term is a closed form.
    """
    model_config = ConfigDict(frozen=True)

    tensor: Tuple[Tuple[float, float, float], Tuple[float, float, float], Tuple[float, float, float]]
    monomial: Tuple[int, int, int] = (0, 0, 0)
    decay: float = Field(ge=0, description="Decay order k of the term")

    @field_validator("tensor")
    @classmethod
    def _symmetric(cls, value):
        t = np.asarray(value, dtype=float)
        if not np.allclose(t, t.T, rtol=0, atol=1e-14):
            raise ValueError("perturbation tensor must be symmetric")
        return value

    @field_validator("monomial")
    @classmethod
    def _nonnegative(cls, value):
        if any(a < 0 for a in value):
            raise ValueError("monomial exponents must be nonnegative")
        return value

    @property
    def degree(self) -> int:
        return sum(self.monomial)

    def reflection_compatible(self) -> bool:
        """True when the term is even under x3 -> -x3 as a symmetric tensor."""
        t = np.asarray(self.tensor)
        odd_in_x3 = self.monomial[2] % 2 == 1
        for i, j in product(range(3), repeat=2):
            if t[i, j] == 0.0:
                continue
            mixed = (i == 2) != (j == 2)
            if mixed != odd_in_x3:
                return False
        return True


class MetricSpec(BaseModel):
    """A closed-form metric family member with declared decay data."""
    model_config = ConfigDict(frozen=True)

    family: MetricFamily
    m: float = Field(default=0.0, description="Mass parameter")
    c: Tuple[float, float, float] = Field(default=(0.0, 0.0, 0.0), description="Center (Schwarzschild) or dipole vector (EpsAS)")
    gamma1: float = Field(default=0.0, description="Dipole coefficient of the conformal factor")
    gamma2: float = Field(default=0.0, description="1/r^2 coefficient of the conformal factor")
    epsilon: Optional[float] = Field(default=None, ge=0, description="Declared extra decay of g - f delta")
    perturbation: Tuple[PerturbationTerm, ...] = ()
    tau: float = Field(default=1.0, gt=0.5, description="Declared decay exponent of g - delta")
    sigma: float = Field(default=1.0, gt=0, description="Declared extra decay of the scalar curvature")
    r_min: float = Field(default=R_MIN_FLOOR, gt=0, description="Inner radius of validity")

    @model_validator(mode="before")
    @classmethod
    def _fill_defaults(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        family = MetricFamily(data.get("family"))
        m = float(data.get("m", 0.0))
        c = list(data.get("c", (0.0, 0.0, 0.0)))
        if len(c) == 2:
            c.append(0.0)
        data["c"] = tuple(c)
        if data.get("r_min") is None:
            data["r_min"] = max(R_MIN_FACTOR * abs(m), R_MIN_FLOOR)
        if family in (MetricFamily.SCHWARZSCHILD, MetricFamily.HALF_SCHWARZSCHILD):
            # natural eps-aS data: (1 + m/2|x-c|)^4 = f delta + O(r^-3)
            data.setdefault("gamma1", 2.0 * m)
            data.setdefault("gamma2", 1.5 * m * m)
            if data.get("epsilon") is None:
                data["epsilon"] = 1.0
        return data

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.family == MetricFamily.FLAT and self.m != 0.0:
            raise ValueError("flat family requires m = 0")
        if self.family in (MetricFamily.EPS_AS, MetricFamily.HALF_SCHWARZSCHILD):
            for term in self.perturbation:
                if term.decay < 2.0:
                    raise ValueError(f"{self.family.value} perturbation terms need decay >= 2, got {term.decay}")
        if self.family == MetricFamily.HALF_SCHWARZSCHILD:
            if self.c[2] != 0.0:
                raise ValueError("half-space center must lie on the boundary (c3 = 0)")
            for term in self.perturbation:
                if not term.reflection_compatible():
                    raise ValueError("half-space perturbation terms must be even under x3 -> -x3")
        return self

    # -------------------------------------------------------------------------
    # Factories
    # -------------------------------------------------------------------------

    @classmethod
    def flat(cls, **kwargs) -> "MetricSpec":
        return cls(family=MetricFamily.FLAT, **kwargs)

    @classmethod
    def schwarzschild(cls, m: float, c=(0.0, 0.0, 0.0), **kwargs) -> "MetricSpec":
        return cls(family=MetricFamily.SCHWARZSCHILD, m=m, c=tuple(c), **kwargs)

    @classmethod
    def half_schwarzschild(cls, m: float, c=(0.0, 0.0), **kwargs) -> "MetricSpec":
        return cls(family=MetricFamily.HALF_SCHWARZSCHILD, m=m, c=tuple(c), **kwargs)

    @classmethod
    def eps_as(cls, m: float, c=(0.0, 0.0, 0.0), gamma1: float = 0.0, gamma2: float = 0.0,
               epsilon: Optional[float] = None, perturbation=(), **kwargs) -> "MetricSpec":
        return cls(family=MetricFamily.EPS_AS, m=m, c=tuple(c), gamma1=gamma1, gamma2=gamma2,
                   epsilon=epsilon, perturbation=tuple(perturbation), **kwargs)

    # -------------------------------------------------------------------------
    # Derived data
    # -------------------------------------------------------------------------

    @property
    def is_half(self) -> bool:
        return self.family == MetricFamily.HALF_SCHWARZSCHILD

    @property
    def origin(self) -> np.ndarray:
        """Point the family and its perturbation terms are centered on."""
        if self.family in (MetricFamily.SCHWARZSCHILD, MetricFamily.HALF_SCHWARZSCHILD):
            return np.asarray(self.c, dtype=float)
        return np.zeros(3)

    @property
    def flux_mass(self) -> float:
        """Mass normalizing center-of-mass fluxes: m, or m/2 on a half-space."""
        return 0.5 * self.m if self.is_half else self.m

    def translated(self, shift) -> "MetricSpec":
        """The same metric moved by `shift` (Schwarzschild families only)."""
        if self.family not in (MetricFamily.SCHWARZSCHILD, MetricFamily.HALF_SCHWARZSCHILD):
            raise UsageError(f"cannot translate a {self.family.value} spec")
        shift = np.pad(np.asarray(shift, dtype=float), (0, 3 - len(shift)))
        data = self.model_dump()
        data["c"] = tuple(float(v) for v in self.origin + shift)
        return MetricSpec.model_validate(data)


def load_spec(source: Union[str, Path]) -> MetricSpec:
    """Parse a spec from inline JSON or from a JSON file path."""
    text = str(source).strip()
    try:
        if not text.startswith("{"):
            path = Path(text)
            if not path.exists():
                raise UsageError(f"metric spec file not found: {path}")
            text = path.read_text()
        return MetricSpec.model_validate(json.loads(text))
    except ValidationError as e:
        raise UsageError(f"malformed metric spec: {e}") from e
    except json.JSONDecodeError as e:
        raise UsageError(f"metric spec is not valid JSON: {e}") from e


# =============================================================================
# Jets
# =============================================================================

@dataclass(frozen=True)
class ScalarJet:
    """A scalar field and its derivatives up to third order, batched over points."""
    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    third: Optional[np.ndarray] = None

    def __add__(self, other: "ScalarJet") -> "ScalarJet":
        third = None
        if self.third is not None and other.third is not None:
            third = self.third + other.third
        return ScalarJet(self.value + other.value, self.grad + other.grad, self.hess + other.hess, third)

    def scaled(self, factor: float) -> "ScalarJet":
        third = None if self.third is None else factor * self.third
        return ScalarJet(factor * self.value, factor * self.grad, factor * self.hess, third)


@dataclass(frozen=True)
class MetricJet:
    """g_ij, d_k g_ij, d_k d_l g_ij (and d_k d_l d_n g_ij) at one or many points.

    Index layout: g[..., i, j], dg[..., k, i, j], ddg[..., k, l, i, j],
    dddg[..., k, l, n, i, j].
    """
    g: np.ndarray
    dg: np.ndarray
    ddg: np.ndarray
    dddg: Optional[np.ndarray] = None

    def squeezed(self) -> "MetricJet":
        return MetricJet(self.g[0], self.dg[0], self.ddg[0], None if self.dddg is None else self.dddg[0])


def _constant_jet(n: int, value: float, order: int) -> ScalarJet:
    return ScalarJet(
        np.full(n, value),
        np.zeros((n, 3)),
        np.zeros((n, 3, 3)),
        np.zeros((n, 3, 3, 3)) if order >= 3 else None,
    )


def _radial_jet(y: np.ndarray, derivs: Callable[[np.ndarray], Tuple[np.ndarray, ...]], order: int) -> ScalarJet:
    """Jet of h(|y|) from the radial derivatives (h, h', h'', h''')."""
    s = np.linalg.norm(y, axis=-1)
    n = y / s[:, None]
    h0, h1, h2, h3 = derivs(s)
    proj = np.eye(3)[None] - np.einsum("pi,pj->pij", n, n)
    grad = h1[:, None] * n
    hess = h2[:, None, None] * np.einsum("pi,pj->pij", n, n) + (h1 / s)[:, None, None] * proj
    third = None
    if order >= 3:
        mixed = (h2 / s - h1 / s**2)[:, None, None, None]
        sym = (
            np.einsum("pik,pj->pijk", proj, n)
            + np.einsum("pjk,pi->pijk", proj, n)
            + np.einsum("pij,pk->pijk", proj, n)
        )
        third = h3[:, None, None, None] * np.einsum("pi,pj,pk->pijk", n, n, n) + mixed * sym
    return ScalarJet(h0, grad, hess, third)


def _power_derivs(p: float) -> Callable[[np.ndarray], Tuple[np.ndarray, ...]]:
    def derivs(s):
        return (
            s**-p,
            -p * s ** (-p - 1),
            p * (p + 1) * s ** (-p - 2),
            -p * (p + 1) * (p + 2) * s ** (-p - 3),
        )
    return derivs


def _schwarzschild_derivs(m: float) -> Callable[[np.ndarray], Tuple[np.ndarray, ...]]:
    """Radial derivatives of (1 + m/2s)^4."""
    def derivs(s):
        psi = 1.0 + m / (2.0 * s)
        p1 = -m / (2.0 * s**2)
        p2 = m / s**3
        p3 = -3.0 * m / s**4
        return (
            psi**4,
            4.0 * psi**3 * p1,
            12.0 * psi**2 * p1**2 + 4.0 * psi**3 * p2,
            24.0 * psi * p1**3 + 36.0 * psi**2 * p1 * p2 + 4.0 * psi**3 * p3,
        )
    return derivs


def _monomial_part(y: np.ndarray, alpha: Tuple[int, int, int], counts: Tuple[int, int, int]) -> np.ndarray:
    out = np.ones(y.shape[0])
    for axis in range(3):
        a, d = alpha[axis], counts[axis]
        if d > a:
            return np.zeros(y.shape[0])
        out = out * math.perm(a, d) * y[:, axis] ** (a - d)
    return out


def _monomial_jet(y: np.ndarray, alpha: Tuple[int, int, int], order: int) -> ScalarJet:
    def counts(*axes):
        c = [0, 0, 0]
        for a in axes:
            c[a] += 1
        return tuple(c)

    n = y.shape[0]
    value = _monomial_part(y, alpha, (0, 0, 0))
    grad = np.stack([_monomial_part(y, alpha, counts(i)) for i in range(3)], axis=-1)
    hess = np.zeros((n, 3, 3))
    for i, j in product(range(3), repeat=2):
        hess[:, i, j] = _monomial_part(y, alpha, counts(i, j))
    third = None
    if order >= 3:
        third = np.zeros((n, 3, 3, 3))
        for i, j, k in product(range(3), repeat=3):
            third[:, i, j, k] = _monomial_part(y, alpha, counts(i, j, k))
    return ScalarJet(value, grad, hess, third)


def _product(a: ScalarJet, b: ScalarJet, order: int) -> ScalarJet:
    """Leibniz rule for the jet of a*b."""
    value = a.value * b.value
    grad = a.grad * b.value[:, None] + a.value[:, None] * b.grad
    hess = (
        a.hess * b.value[:, None, None]
        + np.einsum("pi,pj->pij", a.grad, b.grad)
        + np.einsum("pj,pi->pij", a.grad, b.grad)
        + a.value[:, None, None] * b.hess
    )
    third = None
    if order >= 3:
        third = (
            a.third * b.value[:, None, None, None]
            + np.einsum("pij,pk->pijk", a.hess, b.grad)
            + np.einsum("pik,pj->pijk", a.hess, b.grad)
            + np.einsum("pjk,pi->pijk", a.hess, b.grad)
            + np.einsum("pi,pjk->pijk", a.grad, b.hess)
            + np.einsum("pj,pik->pijk", a.grad, b.hess)
            + np.einsum("pk,pij->pijk", a.grad, b.hess)
            + a.value[:, None, None, None] * b.third
        )
    return ScalarJet(value, grad, hess, third)


def _term_jet(term: PerturbationTerm, y: np.ndarray, order: int) -> ScalarJet:
    angular = _monomial_jet(y, term.monomial, order)
    radial = _radial_jet(y, _power_derivs(term.decay + term.degree), order)
    return _product(angular, radial, order)


def _conformal_factor(spec: MetricSpec, x: np.ndarray, order: int) -> ScalarJet:
    n = x.shape[0]
    if spec.family == MetricFamily.FLAT:
        return _constant_jet(n, 1.0, order)
    if spec.family in (MetricFamily.SCHWARZSCHILD, MetricFamily.HALF_SCHWARZSCHILD):
        return _radial_jet(x - spec.origin, _schwarzschild_derivs(spec.m), order)
    return _reference_factor(spec.m, spec.gamma1, spec.gamma2, np.asarray(spec.c, dtype=float), x, order)


def _reference_factor(m: float, gamma1: float, gamma2: float, c: np.ndarray, x: np.ndarray, order: int) -> ScalarJet:
    """1 + 2m/r + gamma1 c.x/r^3 + gamma2/r^2 with r = |x|."""
    jet = _constant_jet(x.shape[0], 1.0, order)
    if m != 0.0:
        jet = jet + _radial_jet(x, _power_derivs(1.0), order).scaled(2.0 * m)
    if gamma2 != 0.0:
        jet = jet + _radial_jet(x, _power_derivs(2.0), order).scaled(gamma2)
    if gamma1 != 0.0:
        cube = _radial_jet(x, _power_derivs(3.0), order)
        for axis in range(3):
            if c[axis] == 0.0:
                continue
            alpha = tuple(1 if a == axis else 0 for a in range(3))
            jet = jet + _product(_monomial_jet(x, alpha, order), cube, order).scaled(gamma1 * c[axis])
    return jet


def _as_points(x) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def _check_domain(spec: MetricSpec, x: np.ndarray) -> None:
    dist = np.linalg.norm(x - spec.origin, axis=-1)
    inside = dist < spec.r_min * (1.0 - DOMAIN_SLACK)
    if np.any(inside):
        bad = x[np.argmax(inside)]
        raise PointInsideRMinError(
            f"point {bad.tolist()} lies within r_min={spec.r_min} of the metric center"
        )
    if spec.is_half:
        below = x[:, 2] < -DOMAIN_SLACK * np.maximum(1.0, np.linalg.norm(x, axis=-1))
        if np.any(below):
            bad = x[np.argmax(below)]
            raise PointBelowBoundaryError(f"point {bad.tolist()} lies below the boundary x3 = 0")


def _assemble(factor: ScalarJet, terms: List[Tuple[np.ndarray, ScalarJet]], order: int) -> MetricJet:
    eye = np.eye(3)
    g = factor.value[:, None, None] * eye
    dg = np.einsum("pk,ij->pkij", factor.grad, eye)
    ddg = np.einsum("pkl,ij->pklij", factor.hess, eye)
    dddg = np.einsum("pkln,ij->pklnij", factor.third, eye) if order >= 3 else None
    for tensor, jet in terms:
        g = g + jet.value[:, None, None] * tensor
        dg = dg + np.einsum("pk,ij->pkij", jet.grad, tensor)
        ddg = ddg + np.einsum("pkl,ij->pklij", jet.hess, tensor)
        if order >= 3:
            dddg = dddg + np.einsum("pkln,ij->pklnij", jet.third, tensor)
    return MetricJet(g, dg, ddg, dddg)


def eval_jet(spec: MetricSpec, x, order: int = 2) -> MetricJet:
    """Analytic metric jet at x (a 3-vector or an (N, 3) array of points)."""
    points, single = _as_points(x)
    _check_domain(spec, points)
    factor = _conformal_factor(spec, points, order)
    y = points - spec.origin
    terms = [(np.asarray(t.tensor, dtype=float), _term_jet(t, y, order)) for t in spec.perturbation]
    jet = _assemble(factor, terms, order)
    return jet.squeezed() if single else jet


def eval_metric(spec: MetricSpec, x) -> np.ndarray:
    """g_ij only, for large point batches (volume quadrature)."""
    points, single = _as_points(x)
    _check_domain(spec, points)
    y = points - spec.origin
    s = np.linalg.norm(y, axis=-1)
    if spec.family == MetricFamily.FLAT:
        factor = np.ones_like(s)
    elif spec.family in (MetricFamily.SCHWARZSCHILD, MetricFamily.HALF_SCHWARZSCHILD):
        factor = (1.0 + spec.m / (2.0 * s)) ** 4
    else:
        r = np.linalg.norm(points, axis=-1)
        factor = (
            1.0 + 2.0 * spec.m / r + spec.gamma2 / r**2
            + spec.gamma1 * (points @ np.asarray(spec.c, dtype=float)) / r**3
        )
    g = factor[:, None, None] * np.eye(3)
    for term in spec.perturbation:
        angular = _monomial_part(y / s[:, None], term.monomial, (0, 0, 0))
        g = g + (angular * s**-term.decay)[:, None, None] * np.asarray(term.tensor, dtype=float)
    return g[0] if single else g


def conformal_reference(spec: MetricSpec, x, order: int = 2) -> ScalarJet:
    """Jet of the reference conformal factor built from (m, gamma1, gamma2, c)."""
    points, _ = _as_points(x)
    return _reference_factor(spec.m, spec.gamma1, spec.gamma2, np.asarray(spec.c, dtype=float), points, order)


def deviation_jet(spec: MetricSpec, x, reference: Reference = Reference.FLAT) -> MetricJet:
    """e = g - delta (Flat) or p = g - (1 + 2m/r) delta (ConformalSchwarzschild)."""
    points, single = _as_points(x)
    jet = eval_jet(spec, points)
    eye = np.eye(3)
    g = jet.g - eye
    dg, ddg = jet.dg, jet.ddg
    if reference == Reference.CONFORMAL_SCHWARZSCHILD and spec.m != 0.0:
        bg = _radial_jet(points, _power_derivs(1.0), 2).scaled(2.0 * spec.m)
        g = g - bg.value[:, None, None] * eye
        dg = dg - np.einsum("pk,ij->pkij", bg.grad, eye)
        ddg = ddg - np.einsum("pkl,ij->pklij", bg.hess, eye)
    out = MetricJet(g, dg, ddg)
    return out.squeezed() if single else out


# =============================================================================
# Curvature
# =============================================================================

@dataclass(frozen=True)
class CurvatureData:
    """Curvature of g at one or many points.

    christoffel[..., j, k, l] = Gamma^j_kl; riemann[..., i, k, l, m] is fully
    covariant with Ric_km = g^il R_iklm, so sectional curvatures are
    R(X, Y, X, Y) / |X ^ Y|^2. grad_ricci[..., a, b, c] = (nabla_a Ric)_bc.
    """
    metric: np.ndarray
    inverse: np.ndarray
    christoffel: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    grad_ricci: Optional[np.ndarray] = None

    def riem_nu(self, nu: np.ndarray) -> np.ndarray:
        """Covariant 2-tensor X, Y -> Riem(X, nu, Y, nu)."""
        return np.einsum("...iklm,...k,...m->...il", self.riemann, nu, nu)

    def ricci_nu(self, nu: np.ndarray) -> np.ndarray:
        return np.einsum("...km,...k,...m->...", self.ricci, nu, nu)

    def grad_ricci_nu(self, nu: np.ndarray) -> np.ndarray:
        if self.grad_ricci is None:
            raise UsageError("curvature was computed without third derivatives")
        return np.einsum("...abc,...a,...b,...c->...", self.grad_ricci, nu, nu, nu)


def curvature_from_jet(jet: MetricJet) -> CurvatureData:
    """Curvature quantities of a batched jet; adds grad Ric when dddg is present."""
    g, dg, ddg = jet.g, jet.dg, jet.ddg
    ginv = np.linalg.inv(g)
    # Gamma_{n,kl} = 1/2 (d_l g_nk + d_k g_nl - d_n g_kl)
    low = 0.5 * (
        np.einsum("...lnk->...nkl", dg) + np.einsum("...knl->...nkl", dg) - dg
    )
    up = np.einsum("...jn,...nkl->...jkl", ginv, low)

    second = 0.5 * (
        np.einsum("...klim->...iklm", ddg)
        + np.einsum("...imkl->...iklm", ddg)
        - np.einsum("...kmil->...iklm", ddg)
        - np.einsum("...ilkm->...iklm", ddg)
    )
    quad = np.einsum("...pkl,...pim->...iklm", low, up) - np.einsum("...pkm,...pil->...iklm", low, up)
    riem = second + quad
    ric = np.einsum("...il,...iklm->...km", ginv, riem)
    scalar = np.einsum("...km,...km->...", ginv, ric)

    grad_ric = None
    if jet.dddg is not None:
        dddg = jet.dddg
        dlow = 0.5 * (
            np.einsum("...alnk->...ankl", ddg) + np.einsum("...aknl->...ankl", ddg) - ddg
        )
        dginv = -np.einsum("...jp,...apq,...qn->...ajn", ginv, dg, ginv)
        dup = np.einsum("...ajn,...nkl->...ajkl", dginv, low) + np.einsum("...jn,...ankl->...ajkl", ginv, dlow)
        dsecond = 0.5 * (
            np.einsum("...aklim->...aiklm", dddg)
            + np.einsum("...aimkl->...aiklm", dddg)
            - np.einsum("...akmil->...aiklm", dddg)
            - np.einsum("...ailkm->...aiklm", dddg)
        )
        dquad = (
            np.einsum("...apkl,...pim->...aiklm", dlow, up)
            + np.einsum("...pkl,...apim->...aiklm", low, dup)
            - np.einsum("...apkm,...pil->...aiklm", dlow, up)
            - np.einsum("...pkm,...apil->...aiklm", low, dup)
        )
        driem = dsecond + dquad
        dric = np.einsum("...ail,...iklm->...akm", dginv, riem) + np.einsum("...il,...aiklm->...akm", ginv, driem)
        grad_ric = (
            dric
            - np.einsum("...dab,...dc->...abc", up, ric)
            - np.einsum("...dac,...bd->...abc", up, ric)
        )

    return CurvatureData(g, ginv, up, riem, ric, scalar, grad_ric)


def curvature(spec: MetricSpec, x, with_gradient: bool = False) -> CurvatureData:
    """Curvature of the metric at x from the analytic jet."""
    points, single = _as_points(x)
    data = curvature_from_jet(eval_jet(spec, points, order=3 if with_gradient else 2))
    if not single:
        return data
    return CurvatureData(*(None if v is None else v[0] for v in (
        data.metric, data.inverse, data.christoffel, data.riemann, data.ricci, data.scalar, data.grad_ricci
    )))


def boundary_second_fundamental_form(spec: MetricSpec, x) -> np.ndarray:
    """B_ab (a, b in {1, 2}) of the plane x3 = 0 with outward normal on the -e3 side."""
    points, single = _as_points(x)
    data = curvature_from_jet(eval_jet(spec, points))
    scale = 1.0 / np.sqrt(data.inverse[:, 2, 2])
    form = data.christoffel[:, 2, :2, :2] * scale[:, None, None]
    return form[0] if single else form
