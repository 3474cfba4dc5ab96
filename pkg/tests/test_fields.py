"""Tests for grids, fields, potentials, transforms and norms."""

import math

import numpy as np
import pytest

from waveop.errors import DomainError, GridMismatch, TailTooLarge, UnresolvedPotential, UnsupportedOrder
from waveop.fields import (
    Grid3,
    Potential,
    ScalarField,
    b_norm,
    coarser_sphere_order,
    dyadic_shells,
    fourier_transform,
    gaussian_field,
    interpolate,
    lorentz_norm,
    nonuniform_transform,
    sample_potential,
    sphere_rule,
)


# ---------- Grids and fields ----------


def test_grid_rejects_non_power_of_two():
    with pytest.raises(DomainError):
        Grid3(12, 4.0)


def test_grid_axis_starts_at_minus_half_box():
    grid = Grid3(8, 4.0)
    axis = grid.axis()
    assert axis[0] == -2.0
    assert axis[4] == 0.0
    assert grid.spacing == 0.5


def test_field_size_mismatch_raises():
    with pytest.raises(GridMismatch):
        ScalarField(Grid3(4, 2.0), np.zeros(10))


def test_field_arithmetic_checks_grid():
    a = ScalarField.zeros(Grid3(4, 2.0))
    b = ScalarField.zeros(Grid3(4, 4.0))
    with pytest.raises(GridMismatch):
        a + b


def test_inner_is_linear_in_second_slot():
    grid = Grid3(4, 2.0)
    f = gaussian_field(grid, 0.7)
    assert f.inner(f.scaled(2j)) == pytest.approx(2j * f.l2_norm() ** 2)


def test_lp_norm_inf_is_max_modulus():
    grid = Grid3(4, 2.0)
    vals = np.zeros(grid.shape)
    vals[1, 2, 3] = -3.0
    assert ScalarField(grid, vals).lp_norm(math.inf) == 3.0


# ---------- Fourier transforms ----------


def test_plancherel_identity():
    """spacing^3 sum |f|^2 equals (2 pi)^-3 dual^3 sum |f^|^2."""
    grid = Grid3(16, 8.0)
    f = gaussian_field(grid, 1.0, (0.5, -0.25, 0.0), 1.0, (1.0, 0.0, -0.5))
    fhat = fourier_transform(f)
    assert fhat.domain == "frequency"
    assert fhat.l2_norm() == pytest.approx(f.l2_norm(), rel=1e-10)


def test_forward_transform_of_gaussian_at_origin():
    grid = Grid3(16, 16.0)
    fhat = fourier_transform(gaussian_field(grid, 1.0))
    centre = fhat.values[8, 8, 8]
    assert centre.real == pytest.approx((2.0 * math.pi) ** 1.5, rel=1e-6)
    assert abs(centre.imag) < 1e-10


def test_inverse_undoes_forward():
    grid = Grid3(8, 4.0)
    f = gaussian_field(grid, 0.8, momentum=(0.5, 0.0, 0.0))
    back = fourier_transform(fourier_transform(f), "inverse")
    assert np.allclose(back.values, f.values, atol=1e-12)


def test_unknown_transform_direction():
    with pytest.raises(DomainError):
        fourier_transform(ScalarField.zeros(Grid3(4, 2.0)), "sideways")


def test_potential_fourier_matches_sampled_transform():
    grid = Grid3(32, 12.0)
    pot = Potential.gaussian(0.3, 1.0, (0.5, 0.0, 0.0))
    v = sample_potential(pot, grid)
    xi = np.array([[0.0, 0.0, 0.0], [1.0, 0.5, 0.0], [0.0, 0.0, 2.0]])
    sampled = nonuniform_transform(grid.points(), v.values.ravel() * grid.cell_volume, xi)
    assert np.allclose(sampled, pot.fourier(xi), rtol=1e-5, atol=1e-6)


# ---------- Potentials ----------


def test_sample_potential_rejects_coarse_grid():
    with pytest.raises(UnresolvedPotential):
        sample_potential(Potential.gaussian(0.1, 0.5), Grid3(4, 4.0))


def test_zero_potential_flags():
    zero = Potential.zero()
    assert zero.is_zero
    assert zero.is_radial
    assert not Potential.gaussian(0.1, 1.0, (1.0, 0.0, 0.0)).is_radial


def test_potential_scaling_is_linear():
    pot = Potential.mixture([0.1, -0.2], [(0, 0, 0), (1, 0, 0)], [1.0, 1.5])
    xi = np.array([[0.3, 0.1, -0.2]])
    assert np.allclose(pot.scaled(2.0).fourier(xi), 2.0 * pot.fourier(xi))


def test_mixture_length_mismatch():
    with pytest.raises(DomainError):
        Potential.mixture([0.1, 0.2], [(0, 0, 0)], [1.0, 1.0])


# ---------- Sphere rules ----------


def test_minimal_sphere_rule_is_octahedral():
    rule = sphere_rule(6)
    assert len(rule) == 6
    assert np.allclose(rule.weights, 4.0 * math.pi / 6.0)
    assert np.allclose(np.abs(rule.nodes).max(axis=1), 1.0)


@pytest.mark.parametrize("order", [6, 14, 26, 50, 8, 32])
def test_sphere_weights_sum_to_four_pi(order):
    rule = sphere_rule(order)
    assert abs(rule.weights.sum() - 4.0 * math.pi) < 1e-12


@pytest.mark.parametrize("order", [14, 26, 50])
def test_sphere_rule_integrates_second_moment(order):
    rule = sphere_rule(order)
    assert rule.integrate(rule.nodes[:, 0] ** 2) == pytest.approx(4.0 * math.pi / 3.0, abs=1e-10)


@pytest.mark.parametrize("order", [26, 8])
def test_sphere_rule_closed_under_antipodes(order):
    nodes = sphere_rule(order).nodes
    for node in nodes:
        assert np.min(np.linalg.norm(nodes + node, axis=1)) < 1e-12


def test_unsupported_sphere_order():
    with pytest.raises(UnsupportedOrder):
        sphere_rule(7)


@pytest.mark.parametrize("order,expected", [(26, 14), (14, 6), (50, 38), (32, 18), (18, 8)])
def test_coarser_sphere_order(order, expected):
    assert coarser_sphere_order(order) == expected


@pytest.mark.parametrize("order", [6, 8, 7])
def test_no_coarser_sphere_order(order):
    with pytest.raises(UnsupportedOrder):
        coarser_sphere_order(order)


# ---------- Norms ----------


def test_b_norm_monotone_in_alpha():
    grid = Grid3(32, 16.0)
    f = gaussian_field(grid, 1.5)
    values = [b_norm(f, a) for a in (0.0, 0.5, 1.0, 1.5)]
    assert values == sorted(values)


def test_b_norm_of_zero_field():
    assert b_norm(ScalarField.zeros(Grid3(8, 8.0)), 0.5) == 0.0


def test_b_norm_scales_linearly():
    grid = Grid3(32, 16.0)
    f = gaussian_field(grid, 1.0)
    assert b_norm(f.scaled(3.0), 0.5, dotted=True) == pytest.approx(3.0 * b_norm(f, 0.5, dotted=True))


def test_tail_check_rejects_wide_field():
    grid = Grid3(8, 4.0)
    with pytest.raises(TailTooLarge):
        dyadic_shells(gaussian_field(grid, 3.0))


def test_dyadic_shells_cover_the_ball():
    grid = Grid3(32, 16.0)
    f = gaussian_field(grid, 1.0)
    shells = dyadic_shells(f)
    assert shells.tail_fraction < 1e-10
    assert math.sqrt(np.sum(shells.shell_norms**2) + grid.cell_volume * abs(f.values[16, 16, 16]) ** 2) == pytest.approx(
        f.l2_norm(), rel=1e-10
    )


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_lorentz_norm_with_equal_exponents_is_lp(p):
    f = gaussian_field(Grid3(16, 8.0), 1.0, momentum=(0.3, 0.0, 0.0))
    assert lorentz_norm(f, p, p) == pytest.approx(f.lp_norm(p), rel=1e-10)


def test_lorentz_norm_rejects_endpoint():
    with pytest.raises(DomainError):
        lorentz_norm(ScalarField.zeros(Grid3(4, 2.0)), 1.0, 1.0)


def test_interpolate_is_exact_on_grid_points():
    grid = Grid3(8, 4.0)
    f = gaussian_field(grid, 0.9)
    pts = grid.points()[:20]
    assert np.allclose(interpolate(f, pts), f.values.ravel()[:20])
