"""Tests for the split-step evolution and the Cook integral."""

import math

import numpy as np
import pytest

from waveop.errors import DomainError, StepTooLarge, WrapAround
from waveop.fields import Grid3, Potential, gaussian_field
from waveop.propagator import (
    EvolutionConfig,
    assemble_cook_matrix,
    born_term_time,
    cook_wave_operator,
    dispersive_decay_fit,
    epsilon_sweep,
    free_evolve,
    free_gaussian,
    perturbed_evolve,
    project_continuous,
    w_minus,
)


# ---------- Configuration ----------


def test_evolution_config_steps():
    cfg = EvolutionConfig(dt=0.1, t_max=1.0)
    assert cfg.steps == 10
    assert cfg.step == pytest.approx(0.1)
    assert cfg.trapezoid_weights().sum() == pytest.approx(1.0)
    assert len(cfg.times()) == 11


@pytest.mark.parametrize("kwargs", [{"dt": 0.0}, {"t_max": -1.0}, {"eps_reg": -0.1}, {"scheme": "euler"}])
def test_evolution_config_rejects(kwargs):
    with pytest.raises(DomainError):
        EvolutionConfig(**kwargs)


def test_with_epsilon_keeps_other_fields():
    cfg = EvolutionConfig(dt=0.02, t_max=3.0, tail_tolerance=0.05).with_epsilon(0.2)
    assert (cfg.dt, cfg.t_max, cfg.eps_reg, cfg.tail_tolerance) == (0.02, 3.0, 0.2, 0.05)


def test_horizon_matched_eps():
    cfg = EvolutionConfig(dt=0.01, t_max=6.0, eps_reg=0.05)
    assert cfg.horizon_epsilon == pytest.approx(0.5)
    matched = cfg.horizon_matched()
    assert (matched.dt, matched.t_max, matched.eps_reg) == (0.01, 6.0, pytest.approx(0.5))
    assert EvolutionConfig(dt=0.01, t_max=6.0, eps_reg=2.0).horizon_epsilon == 2.0


# ---------- Free evolution ----------


def test_free_evolution_matches_closed_form():
    grid = Grid3(32, 16.0)
    f = gaussian_field(grid, 1.0)
    evolved = free_evolve(f, 0.5)
    assert np.abs(evolved.values - free_gaussian(grid, 1.0, 0.5).values).max() < 1e-6


def test_free_evolution_is_unitary(small_grid):
    f = gaussian_field(small_grid, 0.8, momentum=(1.0, 0.0, 0.0))
    assert free_evolve(f, 0.7).l2_norm() == pytest.approx(f.l2_norm(), rel=1e-12)


# ---------- Perturbed evolution ----------


def test_split_step_rejects_large_step(small_grid, weak_potential):
    f = gaussian_field(small_grid, 1.0)
    with pytest.raises(StepTooLarge):
        perturbed_evolve(f, 1.0, weak_potential, EvolutionConfig(dt=0.05))


def test_perturbed_evolution_is_reversible(small_grid, weak_potential):
    cfg = EvolutionConfig(dt=0.005)
    f = gaussian_field(small_grid, 1.0, momentum=(0.5, 0.0, 0.0))
    forward = perturbed_evolve(f, 0.2, weak_potential, cfg)
    assert forward.l2_norm() == pytest.approx(f.l2_norm(), rel=1e-10)
    back = perturbed_evolve(forward, -0.2, weak_potential, cfg)
    assert np.allclose(back.values, f.values, atol=1e-10)


# ---------- Cook integral ----------


def test_cook_with_zero_potential_is_identity(small_grid):
    f = gaussian_field(small_grid, 1.0)
    out = cook_wave_operator(f, Potential.zero(), EvolutionConfig(dt=0.005, t_max=0.1))
    assert np.array_equal(out.values, f.values)
    assert np.array_equal(w_minus(f, Potential.zero(), EvolutionConfig(dt=0.005, t_max=0.1)).values, f.values)


def test_cook_detects_wrap_around(small_grid, weak_potential):
    f = gaussian_field(small_grid, 1.0)
    with pytest.raises(WrapAround):
        cook_wave_operator(f, weak_potential, EvolutionConfig(dt=0.005, t_max=0.05))


def test_cook_first_order_is_first_born_term(small_grid):
    """For tiny V, W+ f - f agrees with the time-domain first Born term."""
    pot = Potential.gaussian(1e-3, 1.0)
    cfg = EvolutionConfig(dt=0.005, t_max=0.3)
    f = gaussian_field(small_grid, 1.0)
    cook = cook_wave_operator(f, pot, cfg, check_tail=False)
    born = born_term_time(f, pot, 1, cfg)
    assert (cook - f - born).l2_norm() < 0.05 * born.l2_norm()


def test_second_born_term_is_quadratic(small_grid):
    cfg = EvolutionConfig(dt=0.005, t_max=0.2)
    f = gaussian_field(small_grid, 1.0)
    small = born_term_time(f, Potential.gaussian(0.01, 1.0), 2, cfg)
    large = born_term_time(f, Potential.gaussian(0.02, 1.0), 2, cfg)
    assert large.l2_norm() == pytest.approx(4.0 * small.l2_norm(), rel=1e-10)


def test_born_term_order_three_unavailable(small_grid, weak_potential):
    with pytest.raises(DomainError):
        born_term_time(gaussian_field(small_grid, 1.0), weak_potential, 3, EvolutionConfig())


def test_assembled_matrix_reproduces_cook(weak_potential):
    grid = Grid3(4, 2.0)
    cfg = EvolutionConfig(dt=0.01, t_max=0.1)
    matrix = assemble_cook_matrix(grid, weak_potential, cfg)
    f = gaussian_field(grid, 0.6)
    direct = cook_wave_operator(f, weak_potential, cfg, check_tail=False)
    assert np.allclose(matrix @ f.values.ravel(), direct.values.ravel())


def test_epsilon_sweep_of_zero_potential(small_grid):
    sweep = epsilon_sweep(gaussian_field(small_grid, 1.0), Potential.zero(), EvolutionConfig(dt=0.005, t_max=0.1), [0.2, 0.1, 0.05])
    assert sweep.differences == (0.0, 0.0)
    assert sweep.decreasing


# ---------- Continuous spectrum ----------


def test_projection_without_bound_states_is_identity(small_grid):
    f = gaussian_field(small_grid, 1.0)
    assert np.array_equal(project_continuous(f, Potential.gaussian(0.5, 1.0)).values, f.values)


def test_projection_removes_bound_state():
    grid = Grid3(16, 8.0)
    pot = Potential.gaussian(-4.0, 1.0)
    f = gaussian_field(grid, 1.0)
    projected = project_continuous(f, pot)
    assert projected.l2_norm() < f.l2_norm()
    assert math.isfinite(projected.l2_norm())


def test_dispersive_decay_exponent():
    """A spreading Gaussian decays faster than 1/t but not faster than t^(-3/2)."""
    grid = Grid3(32, 16.0)
    fit = dispersive_decay_fit(gaussian_field(grid, 1.0), [0.5, 1.0, 2.0])
    assert -1.5 < fit.exponent < -0.8
    assert fit.constant > 0.0
