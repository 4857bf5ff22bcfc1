import numpy as np
import pytest

from errors import NumericalFailure, UsageError
from harmonics import Domain, basis_size, build_grid, index
from metric import MetricSpec
from surface import (
    EmbeddingError, GraphSurface, centroid, default_inner_radius, enclosed_volume, extrinsic,
    free_boundary_defect, measures, positions,
)


def psi(m, r):
    return 1.0 + m / (2.0 * r)


def test_round_sphere_in_flat_space(flat):
    rho = 25.0
    grid = build_grid(24)
    data = extrinsic(flat, GraphSurface.round((1.0, -2.0, 0.5), rho), grid)
    np.testing.assert_allclose(data.mean, 2.0 / rho, rtol=1e-13)
    np.testing.assert_allclose(data.gauss_kronecker, rho**-2, rtol=1e-12)
    np.testing.assert_allclose(data.gaussian, rho**-2, rtol=1e-12)
    np.testing.assert_allclose(data.tilde_k, rho**-2, rtol=1e-12)
    assert data.integrate(np.ones(grid.size)) == pytest.approx(4 * np.pi * rho**2, rel=1e-13)
    assert data.boundary is None


def test_schwarzschild_coordinate_sphere():
    m, rho = 1.0, 40.0
    spec = MetricSpec.schwarzschild(m)
    grid = build_grid(24)
    data = extrinsic(spec, GraphSurface.round((0.0, 0.0, 0.0), rho), grid)
    p = psi(m, rho)
    mean = 2.0 / (rho * p**2) - 2.0 * m / (rho**2 * p**3)
    np.testing.assert_allclose(data.mean, mean, rtol=1e-12)
    assert data.integrate(np.ones(grid.size)) == pytest.approx(4 * np.pi * rho**2 * p**4, rel=1e-13)
    np.testing.assert_allclose(data.radial_speed, p**2, rtol=1e-13)


def test_measures_of_flat_ball(flat):
    rho = 20.0
    grid = build_grid(24)
    result = measures(flat, GraphSurface.round((0.0, 0.0, 0.0), rho), grid)
    assert result.area == pytest.approx(4 * np.pi * rho**2, rel=1e-13)
    assert result.volume == pytest.approx(4 * np.pi * rho**3 / 3, rel=1e-13)
    assert result.total_mean_curvature == pytest.approx(8 * np.pi * rho, rel=1e-13)
    assert result.boundary_length is None
    assert result.r0 == default_inner_radius(flat) == 2.0


def test_volume_of_flat_half_ball(flat):
    rho = 20.0
    grid = build_grid(24, Domain.UPPER_HEMISPHERE)
    surf = GraphSurface.round((0.0, 0.0, 0.0), rho, Domain.UPPER_HEMISPHERE)
    assert enclosed_volume(flat, surf, grid) == pytest.approx(2 * np.pi * rho**3 / 3, rel=1e-13)
    result = measures(flat, surf, grid)
    assert result.boundary_length == pytest.approx(2 * np.pi * rho, rel=1e-13)


def test_schwarzschild_volume_matches_radial_integral():
    m, rho = 1.0, 64.0
    spec = MetricSpec.schwarzschild(m)
    r0 = default_inner_radius(spec)
    assert r0 == 8.0

    def antiderivative(s):
        return s**3 / 3 + 1.5 * m * s**2 + 3.75 * m**2 * s + 2.5 * m**3 * np.log(s) \
            - 15.0 / 16.0 * m**4 / s - 3.0 / 32.0 * m**5 / s**2 - m**6 / (192.0 * s**3)

    expected = 4 * np.pi * r0**3 / 3 + 4 * np.pi * (antiderivative(rho) - antiderivative(r0))
    volume = enclosed_volume(spec, GraphSurface.round((0.0, 0.0, 0.0), rho), build_grid(24))
    assert volume == pytest.approx(expected, rel=1e-12)


def test_displaced_graph_is_a_translated_sphere_to_first_order(flat):
    rho = 30.0
    grid = build_grid(24)
    surf = GraphSurface.round((0.0, 0.0, 0.0), rho)
    f = np.zeros(basis_size(1))
    f[index(0, 0)] = np.sqrt(4 * np.pi)
    grown = surf.displaced(f, 0.5)
    np.testing.assert_allclose(extrinsic(flat, grown, grid).radius, rho + 0.5, rtol=1e-13)
    assert grown.l_max == surf.l_max


def test_free_boundary_defect_of_even_graph(half_schwarzschild):
    coeffs = np.zeros(basis_size(4))
    coeffs[index(2, 0)] = 0.3
    coeffs[index(3, 1)] = -0.2
    surf = GraphSurface((0.0, 0.0), 50.0, coeffs, domain=Domain.UPPER_HEMISPHERE)
    grid = build_grid(24, Domain.UPPER_HEMISPHERE)
    assert free_boundary_defect(half_schwarzschild, surf, grid) < 1e-12
    assert np.max(np.abs(extrinsic(half_schwarzschild, surf, grid).boundary.contact)) < 1e-12


def test_hemisphere_rejects_odd_harmonics():
    coeffs = np.zeros(basis_size(2))
    coeffs[index(1, 0)] = 1.0
    with pytest.raises(UsageError):
        GraphSurface((0.0, 0.0), 50.0, coeffs, domain=Domain.UPPER_HEMISPHERE)
    with pytest.raises(UsageError):
        GraphSurface((0.0, 0.0, 1.0), 50.0, np.zeros(4), domain=Domain.UPPER_HEMISPHERE)


@pytest.mark.parametrize("kwargs", [{"rho": -1.0}, {"theta_exp": 1.0}])
def test_invalid_graph_parameters(kwargs):
    values = {"center": (0.0, 0.0, 0.0), "rho": 10.0, "coeffs": np.zeros(4)}
    values.update(kwargs)
    with pytest.raises(UsageError):
        GraphSurface(**values)


def test_grid_domain_must_match(flat):
    with pytest.raises(UsageError):
        extrinsic(flat, GraphSurface.round((0.0, 0.0, 0.0), 10.0), build_grid(12, Domain.UPPER_HEMISPHERE))


def test_embedding_check(flat):
    coeffs = np.zeros(basis_size(2))
    coeffs[index(2, 0)] = 40.0
    surf = GraphSurface((0.0, 0.0, 0.0), 10.0, coeffs)
    with pytest.raises(EmbeddingError) as info:
        extrinsic(flat, surf, build_grid(12))
    assert isinstance(info.value, NumericalFailure)
    assert info.value.stage == "surface"


def test_centroid_of_shifted_sphere(flat):
    grid = build_grid(16)
    surf = GraphSurface.round((3.0, -1.0, 2.0), 12.0, l_max=2)
    np.testing.assert_allclose(centroid(surf, grid), [3.0, -1.0, 2.0], atol=1e-12)
    assert positions(surf, grid).shape == (grid.size, 3)


def test_surface_dict_roundtrip():
    coeffs = np.zeros(basis_size(3))
    coeffs[index(2, -1)] = 0.25
    surf = GraphSurface((1.0, 2.0, 3.0), 40.0, coeffs)
    data = surf.to_dict()
    assert data["coefficients"] == [[2, -1, 0.25]]
    back = GraphSurface.from_dict(data)
    np.testing.assert_array_equal(back.coeffs, coeffs)
    np.testing.assert_array_equal(back.center, surf.center)
    with pytest.raises(UsageError):
        GraphSurface.from_dict({"rho": 1.0})
