import numpy as np
import pytest

from errors import UsageError
from harmonics import (
    Domain, basis_size, build_grid, degrees, domain_indices, equator_table, index, l_max_of, odd_mask,
    project, synthesize, table_for,
)


def test_index_layout():
    assert [index(l, m) for l, m in degrees(2)] == list(range(basis_size(2)))
    assert basis_size(8) == 81
    assert index(1, 1) == 3


def test_grid_weights_integrate_area():
    full = build_grid(24)
    half = build_grid(24, Domain.UPPER_HEMISPHERE)
    assert full.integrate(np.ones(full.size)) == pytest.approx(4 * np.pi, rel=1e-14)
    assert half.integrate(np.ones(half.size)) == pytest.approx(2 * np.pi, rel=1e-14)
    assert half.integrate_equator(np.ones(half.equator_phi.size)) == pytest.approx(2 * np.pi, rel=1e-14)
    assert np.all(half.theta < 0.5 * np.pi)


def test_grid_below_minimum_degree():
    with pytest.raises(UsageError):
        build_grid(3)


def test_basis_is_orthonormal():
    grid = build_grid(24)
    table = table_for(grid, 8)
    gram = (table.values * grid.weights) @ table.values.T
    np.testing.assert_allclose(gram, np.eye(basis_size(8)), atol=1e-13)


def test_linear_harmonics():
    grid = build_grid(12)
    table = table_for(grid, 1)
    unit = grid.unit_vectors()
    scale = np.sqrt(3.0 / (4.0 * np.pi))
    np.testing.assert_allclose(table.values[index(1, 1)], scale * unit[:, 0], atol=1e-14)
    np.testing.assert_allclose(table.values[index(1, -1)], scale * unit[:, 1], atol=1e-14)
    np.testing.assert_allclose(table.values[index(1, 0)], scale * unit[:, 2], atol=1e-14)


def test_derivatives_of_cos_theta():
    grid = build_grid(12)
    table = table_for(grid, 2)
    scale = np.sqrt(3.0 / (4.0 * np.pi))
    np.testing.assert_allclose(table.d_theta[index(1, 0)], -scale * np.sin(grid.theta), atol=1e-14)
    np.testing.assert_allclose(table.d_theta_theta[index(1, 0)], -scale * np.cos(grid.theta), atol=1e-14)
    assert np.max(np.abs(table.d_phi[index(1, 0)])) == 0.0


def test_project_inverts_synthesize():
    rng = np.random.default_rng(7)
    coeffs = rng.normal(size=basis_size(6))
    grid = build_grid(16)
    np.testing.assert_allclose(project(grid, synthesize(grid, coeffs), 6), coeffs, atol=1e-12)


def test_hemisphere_projection_keeps_even_part():
    rng = np.random.default_rng(3)
    coeffs = rng.normal(size=basis_size(6))
    coeffs[odd_mask(6)] = 0.0
    grid = build_grid(16, Domain.UPPER_HEMISPHERE)
    np.testing.assert_allclose(project(grid, synthesize(grid, coeffs), 6), coeffs, atol=1e-12)
    assert set(domain_indices(6, Domain.UPPER_HEMISPHERE)) == set(np.flatnonzero(~odd_mask(6)))


def test_equator_table_vanishes_for_odd_harmonics():
    table = equator_table(16, 5)
    assert np.max(np.abs(table.values[odd_mask(5)])) < 1e-14
    assert np.max(np.abs(table.d_theta[~odd_mask(5)])) < 1e-13


def test_l_max_of_rejects_partial_sets():
    assert l_max_of(np.zeros(16)) == 3
    with pytest.raises(UsageError):
        l_max_of(np.zeros(10))
