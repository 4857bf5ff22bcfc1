import numpy as np
import pytest

from asymptotics import (
    IDENTITY_SETS, ReportMode, cmc_integration_identity, fit_exponent, g_moments, h_expansion_residual,
    integration_identity_report, kh_relation_residual, leaf_expansion_residual, moment_identity,
    run_identity_set, small_sphere_report, volume_area_relations,
)
from errors import UsageError
from invariants import ModelSpace
from metric import MetricFamily, MetricSpec, PerturbationTerm

LADDER = [25.0, 50.0, 100.0, 200.0, 400.0]


def test_fit_exponent_of_power_law():
    radii = [10.0, 20.0, 40.0]
    slope, residual = fit_exponent(radii, [3.0 * r**-2.5 for r in radii])
    assert slope == pytest.approx(-2.5)
    assert residual < 1e-12
    assert np.isnan(fit_exponent(radii, [0.0, 0.0, 1.0])[0])


def test_h_expansion_exact_in_flat_space(flat):
    report = h_expansion_residual(flat, LADDER, center=(2.0, 0.0, -1.0))
    assert report.exact
    assert report.passed


def test_h_expansion_schwarzschild_decays_at_fourth_order(schwarzschild):
    report = h_expansion_residual(schwarzschild, LADDER)
    assert report.passed
    assert report.exponent == pytest.approx(-4.0, abs=0.3)


def test_dropping_the_offset_term_breaks_the_expansion(schwarzschild):
    center = (3.0, -2.0, 1.0)
    assert h_expansion_residual(schwarzschild, LADDER, center=center).passed
    ablated = h_expansion_residual(schwarzschild, LADDER, center=center, drop_terms=("offset",))
    assert not ablated.passed
    assert ablated.exponent == pytest.approx(-3.0, abs=0.3)
    with pytest.raises(UsageError):
        h_expansion_residual(schwarzschild, LADDER, drop_terms=("bogus",))


def test_kh_relation_in_flat_space(flat):
    reports = kh_relation_residual(flat, LADDER)
    assert [r.tag for r in reports] == ["kh-relation", "almost-conformal"]
    assert all(r.exact and r.passed for r in reports)


def test_kh_relation_for_schwarzschild(schwarzschild):
    relation, conformal = kh_relation_residual(schwarzschild, LADDER)
    assert relation.claimed == -4.0
    assert conformal.claimed == -3.0
    assert relation.passed
    assert conformal.passed


def test_kh_relation_needs_declared_epsilon():
    spec = MetricSpec.eps_as(1.0)
    with pytest.raises(UsageError):
        kh_relation_residual(spec, LADDER)


def test_almost_conformal_order_follows_declared_epsilon():
    term = PerturbationTerm(tensor=((0.5, 0.0, 0.0), (0.0, -0.25, 0.0), (0.0, 0.0, 0.0)), decay=3.0)
    spec = MetricSpec.eps_as(1.0, c=(1.0, 2.0, 0.0), gamma1=2.0, epsilon=1.0, perturbation=[term])
    relation, conformal = kh_relation_residual(spec, LADDER)
    assert relation.claimed == -4.0
    assert conformal.claimed == -3.0
    assert not conformal.exact
    assert conformal.exponent == pytest.approx(-3.0, abs=0.3)
    assert conformal.passed


def test_moment_identity_for_shifted_schwarzschild():
    c = np.array([1.0, -2.0, 0.5])
    spec = MetricSpec.schwarzschild(1.0, c=c)
    np.testing.assert_allclose(g_moments(spec, 400.0), -8.0 * np.pi * c, rtol=0.05)
    report = moment_identity(spec, [50.0, 100.0, 200.0, 400.0], center_of_mass=c)
    assert report.passed
    assert report.mode == ReportMode.DECAY
    with pytest.raises(UsageError):
        moment_identity(MetricSpec.flat(), LADDER)


def test_integration_identity_closes():
    term = PerturbationTerm(tensor=((0.3, 0.1, 0.0), (0.1, -0.2, 0.0), (0.0, 0.0, 0.4)),
                            monomial=(1, 0, 0), decay=2.0)
    spec = MetricSpec.half_schwarzschild(1.0, c=(3.0, 0.0), perturbation=(term,))
    for rho in (20.0, 60.0):
        gap = cmc_integration_identity(spec, rho, b=(1.0, -0.5))
        assert gap.gap < 1e-9
        assert set(gap.terms) == {"cubic", "divergence", "normal", "trace", "boundary"}
    report = integration_identity_report(spec, [20.0, 40.0])
    assert report.passed
    with pytest.raises(UsageError):
        cmc_integration_identity(MetricSpec.schwarzschild(1.0), 20.0)


def test_integration_identity_boundary_sign():
    # e_13, e_23 constant on spheres: the equator term is nonzero, so its sign is tested
    term = PerturbationTerm(tensor=((0.0, 0.0, 0.3), (0.0, 0.0, 0.2), (0.3, 0.2, 0.0)), decay=2.0)
    spec = MetricSpec.model_construct(family=MetricFamily.HALF_SCHWARZSCHILD, m=1.0, c=(0.0, 0.0, 0.0),
                                      perturbation=(term,))
    assert not term.reflection_compatible()
    gap = cmc_integration_identity(spec, 10.0)
    assert gap.gap < 1e-9
    terms = {k: np.asarray(v) for k, v in gap.terms.items()}
    # 1/2 rho^2 oint omega_a (0.3 omega_1 + 0.2 omega_2) / rho^2
    np.testing.assert_allclose(terms["boundary"], [0.15 * np.pi, 0.1 * np.pi], rtol=1e-6)
    flipped = terms["divergence"] + terms["normal"] + terms["trace"] - terms["boundary"]
    assert np.max(np.abs(terms["cubic"] - flipped)) > 0.5


def test_volume_area_relations_exact_in_flat_space(flat):
    reports = volume_area_relations(flat, LADDER)
    assert [r.tag for r in reports] == ["volume-area", "mean-area", "volume-mean"]
    assert all(r.exact and r.passed for r in reports)


def test_volume_area_relations_schwarzschild(schwarzschild):
    reports = volume_area_relations(schwarzschild, [50.0, 100.0, 200.0, 400.0, 800.0])
    for report in reports:
        assert report.mode == ReportMode.GROWTH
        assert report.passed
        assert report.exponent < 1.2


def test_boundary_relation_on_half_space(half_schwarzschild, schwarzschild):
    reports = volume_area_relations(half_schwarzschild, [50.0, 100.0, 200.0, 400.0])
    assert [r.tag for r in reports] == ["boundary-volume-area"]
    assert reports[0].passed
    with pytest.raises(UsageError):
        volume_area_relations(schwarzschild, LADDER, relations=["boundary-volume-area"])
    with pytest.raises(UsageError):
        volume_area_relations(schwarzschild, [50.0, 100.0])


def test_leaf_expansions(schwarzschild):
    reports = leaf_expansion_residual(schwarzschild, LADDER)
    assert [r.tag for r in reports] == ["leaf-K", "leaf-W2", "leaf-KG", "leaf-Pi"]
    assert all(r.passed for r in reports)


@pytest.mark.parametrize("model", list(ModelSpace))
def test_small_sphere_remainder_vanishes_at_fourth_order(model):
    report = small_sphere_report(model, (3, 2))
    assert report.passed
    assert report.exponent == pytest.approx(4.0, abs=0.3)
    assert report.notes["fitted"] == pytest.approx(0.05, rel=1e-4)
    assert report.tag == f"small-sphere-{model.value}-32"


def test_identity_sets(flat):
    assert set(IDENTITY_SETS) == {
        "h-expansion", "kh-relation", "moment", "integration", "volume-area", "leaf", "small-sphere",
    }
    assert len(run_identity_set("small-sphere", None, [])) == 6
    with pytest.raises(UsageError):
        run_identity_set("nope", flat, LADDER)


def test_ladder_validation(flat):
    with pytest.raises(UsageError):
        h_expansion_residual(flat, [50.0])
    with pytest.raises(UsageError):
        h_expansion_residual(flat, [50.0, 25.0])
