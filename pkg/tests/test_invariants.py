import numpy as np
import pytest

from errors import UsageError
from invariants import (
    ConvergenceSeries, DeficitKind, ModelSpace, center_from_H, deficit, extrapolate, fit_expansion,
    flux_center, flux_mass, small_sphere, sweep_series,
)
from metric import MetricSpec

LADDER = [200.0, 400.0, 800.0, 1600.0, 3200.0]
SHORT_LADDER = [50.0, 100.0, 200.0, 400.0, 800.0]


def psi(m, r):
    return 1.0 + m / (2.0 * r)


def test_extrapolate_recovers_limit_and_rate():
    radii = np.array([10.0, 20.0, 40.0, 80.0, 160.0, 320.0])
    result = extrapolate(ConvergenceSeries(radii, 2.5 + 3.0 / radii**1.5), two_term=False)
    assert result.limit == pytest.approx(2.5, abs=1e-9)
    assert result.rate == pytest.approx(1.5, abs=1e-6)
    assert result.monotone_tail


def test_two_term_extrapolation():
    radii = np.array([10.0, 20.0, 40.0, 80.0, 160.0])
    result = extrapolate(ConvergenceSeries(radii, 1.0 + 2.0 / radii - 5.0 / radii**2))
    assert result.limit == pytest.approx(1.0, abs=1e-9)
    assert result.coefficients[1] == pytest.approx(2.0, rel=1e-6)
    assert result.two_term
    assert not extrapolate(ConvergenceSeries(radii, 1.0 + 2.0 / radii), two_term=False).two_term


def test_constant_series_has_no_rate():
    result = extrapolate(ConvergenceSeries([1.0, 2.0, 3.0, 4.0], [0.5] * 4))
    assert result.limit == 0.5
    assert np.isnan(result.rate)


def test_vector_series_fit_per_component():
    radii = np.array([10.0, 20.0, 40.0, 80.0, 160.0])
    values = np.stack([1.0 + 1.0 / radii, -2.0 + 4.0 / radii**2], axis=-1)
    result = extrapolate(ConvergenceSeries(radii, values))
    np.testing.assert_allclose(result.limit, [1.0, -2.0], atol=1e-8)
    assert result.to_dict()["limit"] == pytest.approx([1.0, -2.0], abs=1e-8)


def test_series_validation():
    with pytest.raises(UsageError):
        ConvergenceSeries([2.0, 1.0], [0.0, 0.0])
    with pytest.raises(UsageError):
        extrapolate(ConvergenceSeries([1.0, 2.0, 3.0], [0.0, 1.0, 2.0]))


def test_fit_expansion_exact_coefficients():
    radii = [20.0, 40.0, 80.0, 160.0]
    values = [-2.0 / r**3 + 11.0 / r**4 for r in radii]
    fit = fit_expansion(radii, values, (3, 4))
    assert fit.coefficients == pytest.approx([-2.0, 11.0], rel=1e-8)
    with pytest.raises(UsageError):
        fit_expansion([10.0], [1.0], (3, 4))


def test_flux_mass_of_schwarzschild_is_closed_form():
    m = 1.0
    spec = MetricSpec.schwarzschild(m)
    for r in (20.0, 50.0, 400.0):
        assert flux_mass(spec, r) == pytest.approx(m * psi(m, r) ** 3, rel=1e-12)


def test_flux_mass_half_space_uses_half_mass(half_schwarzschild):
    assert flux_mass(half_schwarzschild, 50.0) == pytest.approx(0.5 * psi(1.0, 50.0) ** 3, rel=1e-12)


def test_flux_mass_limit():
    spec = MetricSpec.schwarzschild(2.0)
    series = sweep_series(lambda r: flux_mass(spec, r), [100.0, 200.0, 400.0, 800.0, 1600.0])
    assert extrapolate(series).limit == pytest.approx(2.0, abs=1e-5)


def test_flux_mass_of_flat_space_vanishes(flat):
    assert flux_mass(flat, 10.0) == 0.0


def test_radius_below_twice_r_min(schwarzschild):
    with pytest.raises(UsageError):
        flux_mass(schwarzschild, 5.0)


def test_flux_center_of_shifted_schwarzschild():
    spec = MetricSpec.schwarzschild(1.0, c=(1.0, 2.0, -0.5))
    series = sweep_series(lambda r: flux_center(spec, r), [100.0, 200.0, 400.0, 800.0, 1600.0])
    np.testing.assert_allclose(extrapolate(series).limit, [1.0, 2.0, -0.5], atol=1e-4)


def test_flux_center_needs_mass(flat):
    with pytest.raises(UsageError):
        flux_center(flat, 10.0)


def test_half_space_centers():
    spec = MetricSpec.half_schwarzschild(1.0, c=(3.0, 0.0))
    radii = [100.0, 200.0, 400.0, 800.0, 1600.0]
    flux = extrapolate(sweep_series(lambda r: flux_center(spec, r), radii)).limit
    mean = extrapolate(sweep_series(lambda r: center_from_H(spec, r), radii)).limit
    np.testing.assert_allclose(flux, [3.0, 0.0], atol=1e-2)
    np.testing.assert_allclose(mean, [3.0, 0.0], atol=1e-2)
    with pytest.raises(UsageError):
        center_from_H(MetricSpec.schwarzschild(1.0), 100.0)


@pytest.mark.parametrize("kind", [DeficitKind.J32, DeficitKind.J31, DeficitKind.J21])
def test_schwarzschild_deficits_converge_to_mass(kind):
    spec = MetricSpec.schwarzschild(1.0)
    series = sweep_series(lambda r: deficit(spec, r, kind), LADDER)
    assert extrapolate(series).limit == pytest.approx(1.0, abs=1e-3)


def test_relative_deficit_only_on_half_spaces(schwarzschild, half_schwarzschild):
    with pytest.raises(UsageError):
        deficit(schwarzschild, 100.0, DeficitKind.REL_J32)
    with pytest.raises(UsageError):
        deficit(half_schwarzschild, 100.0, DeficitKind.J32)


def test_relative_deficit_converges_to_half_space_mass(half_schwarzschild):
    series = sweep_series(lambda r: deficit(half_schwarzschild, r, DeficitKind.REL_J32), LADDER)
    assert extrapolate(series).limit == pytest.approx(0.5, abs=1e-3)


def test_flat_deficits_vanish(flat):
    for kind in (DeficitKind.J32, DeficitKind.J31, DeficitKind.J21):
        assert abs(deficit(flat, 50.0, kind)) < 1e-10


@pytest.mark.parametrize("model", [ModelSpace.ROUND_S3, ModelSpace.HYPERBOLIC_3])
@pytest.mark.parametrize("kind, expected", [((3, 2), 1 / 20), ((3, 1), 3 / 10), ((2, 1), 1 / 6)])
def test_small_sphere_coefficients(model, kind, expected):
    assert small_sphere(model, kind) == pytest.approx(expected, rel=1e-4)


def test_small_sphere_rejects_unknown_kind():
    with pytest.raises(UsageError):
        small_sphere(ModelSpace.ROUND_S3, (2, 2))


@pytest.mark.parametrize("kind", [DeficitKind.J32, DeficitKind.J31, DeficitKind.J21])
def test_deficits_on_short_ladder(kind, schwarzschild):
    result = extrapolate(sweep_series(lambda r: deficit(schwarzschild, r, kind), SHORT_LADDER))
    assert result.limit == pytest.approx(1.0, abs=1e-3)
    assert 0.8 <= result.rate <= 1.2


def test_relative_deficit_on_short_ladder(half_schwarzschild):
    series = sweep_series(lambda r: deficit(half_schwarzschild, r, DeficitKind.REL_J32), SHORT_LADDER)
    assert extrapolate(series).limit == pytest.approx(0.5, abs=1e-3)


def test_mass_and_center_on_short_ladder(schwarzschild):
    mass = extrapolate(sweep_series(lambda r: flux_mass(schwarzschild, r), SHORT_LADDER))
    assert mass.limit == pytest.approx(1.0, abs=1e-6)
    spec = MetricSpec.schwarzschild(2.0, c=(3.0, 0.0, 0.0))
    center = extrapolate(sweep_series(lambda r: flux_center(spec, r), SHORT_LADDER))
    np.testing.assert_allclose(center.limit, [3.0, 0.0, 0.0], atol=1e-4)


def test_half_space_mass_and_centers_on_short_ladder(half_schwarzschild):
    spec = half_schwarzschild.translated((3.0, 0.0))
    mass = extrapolate(sweep_series(lambda r: flux_mass(half_schwarzschild, r), SHORT_LADDER)).limit
    flux = extrapolate(sweep_series(lambda r: flux_center(spec, r), SHORT_LADDER)).limit
    mean = extrapolate(sweep_series(lambda r: center_from_H(spec, r), SHORT_LADDER)).limit
    assert mass == pytest.approx(0.5, abs=1e-6)
    np.testing.assert_allclose(flux, [3.0, 0.0], atol=1e-4)
    np.testing.assert_allclose(mean, flux, atol=1e-3)


def test_flux_center_of_dipole_factor():
    # (gamma1 / 2m) c on every sphere
    spec = MetricSpec.eps_as(1.0, c=(1.0, 2.0, 0.0), gamma1=1.0)
    for r in SHORT_LADDER:
        np.testing.assert_allclose(flux_center(spec, r), [0.5, 1.0, 0.0], atol=1e-10)
    limit = extrapolate(sweep_series(lambda r: flux_center(spec, r), SHORT_LADDER)).limit
    np.testing.assert_allclose(limit, [0.5, 1.0, 0.0], atol=1e-8)
