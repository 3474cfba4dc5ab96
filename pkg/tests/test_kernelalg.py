"""Tests for eta-represented kernels and their algebra."""

import math

import numpy as np
import pytest

from waveop.errors import DomainError, GridMismatch
from waveop.fields import Grid3, Potential, gaussian_field
from waveop.kernelalg import (
    ContractionKernel,
    EtaGrid,
    EtaKernel,
    apply_contraction,
    compose,
    contract,
    eta_holder_constant,
    power,
    resolvent_identity_residuals,
    second_order_defect,
    t1_plus,
    t_n_plus,
    t_plus,
    probe_family,
    xinf_l1_norm,
    y_norm,
    z_norm,
)
from waveop.resolvent import SpectralPoint, birman_schwinger


# ---------- Eta grids ----------


def test_eta_grid_needs_odd_count():
    with pytest.raises(DomainError):
        EtaGrid(4)


def test_eta_grid_for_kernel_grid(tiny_grid):
    eta = EtaGrid.for_grid(tiny_grid, 3)
    assert eta.eta_max == pytest.approx(math.pi / (2.0 * tiny_grid.spacing))
    assert eta.size == 27
    assert eta.axis()[1] == 0.0
    assert eta.y_axis()[1] == 0.0


def test_eta_transforms_are_inverse(tiny_eta):
    rng = np.random.default_rng(3)
    values = rng.normal(size=(tiny_eta.size, 2)) + 1j * rng.normal(size=(tiny_eta.size, 2))
    assert np.allclose(tiny_eta.to_eta(tiny_eta.to_y(values)), values)


def test_eta_lines_cover_every_axis():
    eta = EtaGrid(3)
    lines = eta.lines()
    assert len(lines) == 3 * 9
    assert all(len(line) == 3 for line in lines)


# ---------- Kernel algebra ----------


def _random_kernel(grid, eta, seed):
    rng = np.random.default_rng(seed)
    stack = 0.1 * (rng.normal(size=(eta.size, grid.size, grid.size)) + 1j * rng.normal(size=(eta.size, grid.size, grid.size)))
    return EtaKernel(grid, eta, stack.__getitem__)


def test_compose_multiplies_in_reverse_order(tiny_grid, tiny_eta):
    a = _random_kernel(tiny_grid, tiny_eta, 1)
    b = _random_kernel(tiny_grid, tiny_eta, 2)
    ab = compose(a, b)
    assert np.allclose(ab.slice(5), b.slice(5) @ a.slice(5))


def test_compose_with_unit_is_neutral(tiny_grid, tiny_eta):
    a = _random_kernel(tiny_grid, tiny_eta, 4)
    unit = EtaKernel.unit(tiny_grid, tiny_eta)
    assert np.allclose(compose(unit, a).slice(0), a.slice(0))
    assert compose(unit, a).identity == 0
    assert compose(unit, unit).identity == 1.0


def test_power_matches_repeated_product(tiny_grid, tiny_eta):
    a = _random_kernel(tiny_grid, tiny_eta, 5)
    m = a.slice(7)
    assert np.allclose(power(a, 3).slice(7), m @ m @ m)


def test_power_rejects_zero(tiny_grid, tiny_eta):
    with pytest.raises(DomainError):
        power(_random_kernel(tiny_grid, tiny_eta, 6), 0)


def test_kernels_on_different_grids(tiny_grid, tiny_eta):
    a = EtaKernel.unit(tiny_grid, tiny_eta)
    b = EtaKernel.unit(Grid3(4, 4.0), tiny_eta)
    with pytest.raises(GridMismatch):
        a + b


def test_sum_and_difference(tiny_grid, tiny_eta):
    a = _random_kernel(tiny_grid, tiny_eta, 7)
    assert np.allclose((a - a).slice(3), 0.0)
    assert np.allclose((a + a).slice(3), 2.0 * a.slice(3))


def test_unit_contraction_is_a_delta(tiny_grid, tiny_eta):
    unit = EtaKernel.unit(tiny_grid, tiny_eta)
    k = contract(None, unit)
    centre = tiny_eta.size // 2
    assert np.allclose(k.values[:, centre], 1.0 / tiny_eta.y_cell_volume)
    mask = np.ones(tiny_eta.size, dtype=bool)
    mask[centre] = False
    assert np.allclose(k.values[:, mask], 0.0, atol=1e-12)
    assert xinf_l1_norm(k) == pytest.approx(1.0)


def test_apply_unit_contraction_reproduces_field(tiny_grid, tiny_eta):
    k = contract(None, EtaKernel.unit(tiny_grid, tiny_eta))
    f = gaussian_field(tiny_grid, 0.6)
    assert np.allclose(apply_contraction(k, f).values, f.values, atol=1e-10)


def test_contraction_kernel_shape_check(tiny_grid, tiny_eta):
    with pytest.raises(GridMismatch):
        ContractionKernel(tiny_grid, tiny_eta, np.zeros((3, 3)))


def test_z_norm_of_unit_and_zero(tiny_grid, tiny_eta):
    assert z_norm(EtaKernel.unit(tiny_grid, tiny_eta)) == pytest.approx(1.0)
    assert z_norm(EtaKernel.zero(tiny_grid, tiny_eta)) == 0.0
    assert eta_holder_constant(EtaKernel.zero(tiny_grid, tiny_eta), 0.5) == 0.0


# ---------- T1 and T+ ----------


def test_zero_potential_gives_zero_kernels(tiny_grid, tiny_eta):
    assert t1_plus(Potential.zero(), tiny_grid, tiny_eta).is_zero
    assert t_plus(Potential.zero(), tiny_grid, tiny_eta).is_zero


def test_resolvent_identity_holds_per_slice(tiny_grid, tiny_eta, weak_potential):
    t1 = t1_plus(weak_potential, tiny_grid, tiny_eta).materialize()
    tp = t_plus(weak_potential, tiny_grid, tiny_eta).materialize()
    residuals = resolvent_identity_residuals(t1, tp)
    assert residuals.left.shape == (tiny_eta.size,)
    assert residuals.worst < 1e-10


def test_second_order_defect_is_cubic(tiny_grid, tiny_eta):
    defects = []
    for amplitude in (0.05, 0.1):
        pot = Potential.gaussian(amplitude, 1.0)
        t1 = t1_plus(pot, tiny_grid, tiny_eta)
        tp = t_plus(pot, tiny_grid, tiny_eta)
        defects.append(second_order_defect(t1, tp, range(0, tiny_eta.size, 4)))
    assert 0.09 < defects[0] / defects[1] < 0.14


def test_t1_slice_at_zero_eta_is_birman_schwinger(tiny_grid, tiny_eta, weak_potential):
    t1 = t1_plus(weak_potential, tiny_grid, tiny_eta)
    centre = tiny_eta.size // 2
    assert np.allclose(tiny_eta.nodes[centre], 0.0)
    bs = birman_schwinger(SpectralPoint(0.0, 0.0, "-"), weak_potential, tiny_grid)
    assert np.allclose(t1.slice(centre), bs.matrix)


def test_born_order_outside_range(tiny_grid, tiny_eta, weak_potential):
    with pytest.raises(DomainError):
        t_n_plus(weak_potential, 5, tiny_grid, tiny_eta)


def test_t_n_plus_is_power_of_t1(tiny_grid, tiny_eta, weak_potential):
    t1 = t1_plus(weak_potential, tiny_grid, tiny_eta)
    t2 = t_n_plus(weak_potential, 2, tiny_grid, tiny_eta)
    m = t1.slice(2)
    assert np.allclose(t2.slice(2), m @ m)


# ---------- Y-norm ----------


def test_y_norm_of_zero_kernel(tiny_grid, tiny_eta, weak_potential):
    assert y_norm(EtaKernel.zero(tiny_grid, tiny_eta), weak_potential, 0.75) == 0.0


def test_y_norm_without_potential_is_z_norm(tiny_grid, tiny_eta):
    a = _random_kernel(tiny_grid, tiny_eta, 8)
    assert y_norm(a, Potential.zero(), 0.75) == pytest.approx(z_norm(a))


def test_y_norm_adds_test_function_part(tiny_grid, tiny_eta, weak_potential):
    t1 = t1_plus(weak_potential, tiny_grid, tiny_eta, 0.1)
    probes = probe_family(tiny_grid, 3, seed=1)
    y = y_norm(t1, weak_potential, 0.75, probes)
    assert math.isfinite(y)
    assert y > z_norm(t1)
    assert y_norm(t1.scaled(2.0), weak_potential, 0.75, probes) == pytest.approx(2.0 * y)


def test_m2_of_t_plus_is_finite(tiny_grid, tiny_eta, weak_potential):
    m2 = y_norm(t_plus(weak_potential, tiny_grid, tiny_eta, 0.1), weak_potential, 0.75)
    assert 0.0 < m2 < math.inf
