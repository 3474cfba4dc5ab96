"""Tests for the helpers behind the verification families."""

import math

import numpy as np
import pytest

from waveop.checks import default_corpus
from waveop.checks.algebra import quant_mismatch
from waveop.checks.adjoint import w_minus_and_adjoint
from waveop.checks.bounds import halfspace_bound, lp_bound_scan, lp_refinement, reflected
from waveop.checks.context import VerifyContext
from waveop.checks.inequalities import born_law_factor, extension_terms, fitted_bound, y_norm_law
from waveop.checks.oracle import isometry_probes, run_zero_identity
from waveop.checks.spectral import coarser_eta, holder_growth, lambda_spread
from waveop.checks.stability import perturbation_bracket, stability_check
from waveop.config import config_from_mapping
from waveop.fields import Grid3, Potential, ScalarField, b_norm, gaussian_field, sample_potential
from waveop.kernelalg import EtaGrid
from waveop.propagator import EvolutionConfig
from waveop.structure import RGrid, StructureFunction, g1, structure_norm


# ---------- Corpus ----------


def test_packaged_corpus():
    corpus = default_corpus()
    assert len(corpus) == 10
    assert len({entry.name for entry in corpus}) == 10


def test_corpus_potentials_from_context():
    ctx = VerifyContext(config_from_mapping({}))
    assert len(ctx.corpus) == 10


# ---------- Fitted constants ----------


def test_fitted_bound_uses_even_entries():
    bound = fitted_bound([1.0, 2.0, 3.0, 4.0], [1.0, 1.0, 1.0, 1.0])
    assert bound.constant == 3.0
    assert bound.holdout_excess == pytest.approx(1.0 / 3.0)
    assert bound.ratios == (1.0, 2.0, 3.0, 4.0)


def test_fitted_bound_holdout_below_constant():
    assert fitted_bound([2.0, 1.0], [1.0, 1.0]).holdout_excess == pytest.approx(-0.5)


def test_fitted_bound_all_zero():
    assert fitted_bound([0.0, 0.0], [1.0, 1.0]).holdout_excess == 0.0


@pytest.mark.parametrize(
    "norms,expected",
    [
        ([1.0, 0.5, 0.25, 0.125], 1.0),
        ([1.0, 0.5, 0.5], 2.0),
        ([0.0, 0.0, 0.0], 1.0),
        ([1.0, 0.5, 0.0], math.inf),
    ],
)
def test_born_law_factor(norms, expected):
    assert born_law_factor(norms) == pytest.approx(expected)


# ---------- Quantitative constants ----------


def test_quant_formulas_match_closed_forms():
    assert quant_mismatch() < 1e-12


# ---------- Bounds ----------


def test_reflection_of_centred_gaussian(small_grid):
    f = gaussian_field(small_grid, 1.0)
    assert np.allclose(reflected(f, (0.0, 0.0, 1.0)).values, f.values)


def test_reflection_is_an_involution_on_the_grid(small_grid):
    f = gaussian_field(small_grid, 1.0, center=(0.3, -0.5, 1.0))
    twice = reflected(reflected(f, (1.0, 0.0, 0.0)), (1.0, 0.0, 0.0))
    assert np.array_equal(twice.values, f.values)


def test_empty_structure_has_unit_ratios(small_grid, sphere6):
    g = StructureFunction.empty(sphere6)
    probes = [gaussian_field(small_grid, 1.0), gaussian_field(small_grid, 0.7, center=(0.5, 0.0, 0.0))]
    assert lp_bound_scan(g, probes) == pytest.approx({1.0: 1.0, 2.0: 1.0, 4.0: 1.0, math.inf: 1.0})
    report = halfspace_bound(g, probes[0])
    assert report.ratio == pytest.approx(1.0)
    assert report.majorant == 0.0


# ---------- Stability and spectral helpers ----------


def test_bracket_of_identical_potentials(small_grid, weak_potential):
    assert perturbation_bracket(weak_potential, weak_potential, small_grid) == 0.0


def test_bracket_grows_with_perturbation(small_grid, weak_potential):
    near = perturbation_bracket(weak_potential.scaled(1.05), weak_potential, small_grid)
    far = perturbation_bracket(weak_potential.scaled(1.1), weak_potential, small_grid)
    assert 0.0 < near < far


def test_lambda_spread_vanishes(tiny_grid, weak_potential):
    assert lambda_spread(weak_potential, [0.0, 1.0, 5.0], tiny_grid) < 1e-10
    assert lambda_spread(Potential.zero(), [0.0, 1.0], tiny_grid) == 0.0


def test_isometry_inputs_are_reproducible(small_grid):
    a = isometry_probes(small_grid, 2, seed=3)
    b = isometry_probes(small_grid, 2, seed=3)
    assert all(np.array_equal(p.values, q.values) for p, q in zip(a, b))


# ---------- Zero potential ----------


def test_zero_identity_family_passes():
    ctx = VerifyContext(config_from_mapping({"potential": {"amplitudes": [0.0], "widths": [1.0]}}))
    results = run_zero_identity(ctx)
    assert [r.name for r in results] == ["zero_structure_norm", "zero_cook", "zero_m0"]
    assert all(r.passed for r in results)


# ---------- Stability reports ----------

WIDE_GRID = Grid3(16, 8.0)


def _bump(grid, center, amplitude=0.1):
    r2 = np.sum((grid.points() - np.asarray(center)) ** 2, axis=1)
    return Potential.tabulated(ScalarField(grid, amplitude * np.clip(1.0 - r2, 0.0, None) ** 2))


def test_bracket_of_disjoint_supports_has_unit_sup_term():
    a = _bump(WIDE_GRID, (-1.5, 0.0, 0.0))
    b = _bump(WIDE_GRID, (1.5, 0.0, 0.0))
    diff = sample_potential(a, WIDE_GRID).values.real - sample_potential(b, WIDE_GRID).values.real
    smooth = b_norm(ScalarField(WIDE_GRID, diff), 1.5)
    assert perturbation_bracket(a, b, WIDE_GRID) - smooth == pytest.approx(1.0)


def test_stability_check_of_identical_structures(sphere6, weak_potential):
    g = g1(weak_potential, sphere6, RGrid(33, 4.0))
    report = stability_check(g, g, weak_potential, weak_potential, WIDE_GRID)
    assert (report.delta_g_norm, report.bracket, report.ratio) == (0.0, 0.0, 0.0)


def test_stability_check_of_scaled_potential(sphere6, weak_potential):
    g = g1(weak_potential, sphere6, RGrid(33, 4.0))
    report = stability_check(g.scaled(1.1), g, weak_potential.scaled(1.1), weak_potential, WIDE_GRID)
    assert report.delta_g_norm == pytest.approx(0.1 * structure_norm(g), rel=1e-9)
    v = sample_potential(weak_potential, WIDE_GRID).values.real
    # |V - V~| / (|V| + |V~|) = 0.1 / 2.1 wherever V is nonzero
    assert report.bracket == pytest.approx(b_norm(ScalarField(WIDE_GRID, 0.1 * v), 1.5) + 1.0 / 21.0)
    assert report.ratio == pytest.approx(report.delta_g_norm / report.bracket)


# ---------- Adjoints ----------


def test_adjoints_of_zero_potential_are_identity(tiny_grid):
    f = gaussian_field(tiny_grid, 0.5)
    fields = w_minus_and_adjoint(Potential.zero(), f, EvolutionConfig(dt=0.1, t_max=1.0, eps_reg=0.0))
    for out in (
        fields.w_plus,
        fields.w_minus,
        fields.w_plus_adjoint,
        fields.w_minus_adjoint,
        fields.w_minus_adjoint_time,
    ):
        assert np.allclose(out.values, f.values)
    assert fields.isometry_defect == pytest.approx(0.0, abs=1e-12)
    assert fields.adjoint_mismatch == pytest.approx(0.0, abs=1e-12)


def test_adjoints_of_weak_potential(tiny_grid, weak_potential):
    f = gaussian_field(tiny_grid, 0.5)
    fields = w_minus_and_adjoint(weak_potential, f, EvolutionConfig(dt=0.05, t_max=1.0, eps_reg=0.0))
    # f is real, so W+* f and W-* f are complex conjugates
    assert np.allclose(fields.w_plus_adjoint.values, fields.w_minus_adjoint.values.conj())
    assert (fields.w_plus - f).l2_norm() > 0.0
    assert fields.adjoint_mismatch < 0.05


# ---------- Y-norm law and extension bound ----------


def test_y_norm_law_on_weak_potential(tiny_grid, tiny_eta, weak_potential):
    law, norms = y_norm_law(weak_potential, tiny_grid, tiny_eta, 0.1, 1.0)
    assert len(norms) == 4
    assert all(math.isfinite(y) and y > 0.0 for y in norms)
    assert law.constant == pytest.approx(max(norms[0], norms[2] ** (1.0 / 3.0)))
    assert law.holdout_excess <= 0.1


def test_extension_bound_over_amplitudes(tiny_grid, tiny_eta):
    pairs = []
    for amplitude in (0.02, 0.04, 0.08, 0.16):
        pot = Potential.gaussian(amplitude, 1.0)
        pairs.append(extension_terms(pot, tiny_grid, tiny_eta, 0.1, sample_potential(pot, WIDE_GRID)))
    lhs = [a for a, _ in pairs]
    rhs = [b for _, b in pairs]
    assert all(0.0 < a < math.inf for a in lhs)
    assert fitted_bound(lhs, rhs).holdout_excess <= 0.1


# ---------- Refinement ----------

SMALL = {
    "grids": {
        "x": {"n": 16, "box": 8.0},
        "kernel": {"n": 4, "box": 2.0},
        "y": {"n": 8, "box": 4.0},
        "eta": {"n": 3},
        "r": {"n": 64, "r_max": 8.0},
        "x_omega": {"n": 8},
        "sphere_order": 14,
    },
    "probe": {"count": 2},
    "corpus": [],
}


def test_coarsened_config_halves_the_structure_grids():
    cfg = config_from_mapping(SMALL)
    coarse = cfg.coarsened()
    assert coarse.grids.r.n == 32
    assert coarse.grids.x_omega.n == 4
    assert coarse.grids.sphere_order == 6
    assert coarse.structure.damping_resolution == pytest.approx(2.0 * cfg.structure.damping_resolution)
    assert coarse.grids.x == cfg.grids.x


def test_lp_ratios_agree_across_refinement():
    ctx = VerifyContext(config_from_mapping(SMALL))
    ratios = lp_bound_scan(ctx.full_g(), ctx.probes)
    result = lp_refinement(ctx, ratios)
    assert len(ctx.coarse.sphere.nodes) == 6
    assert result.passed
    assert set(result.details["drift"]) == {str(p) for p in ratios}


def test_refinement_skipped_without_coarser_sphere():
    cfg = config_from_mapping({**SMALL, "grids": {**SMALL["grids"], "sphere_order": 6}})
    result = lp_refinement(VerifyContext(cfg), {2.0: 1.0})
    assert result.passed
    assert "skipped" in result.details


def test_coarser_eta_takes_every_other_node():
    eta = EtaGrid(9, math.pi)
    coarse = coarser_eta(eta)
    assert coarse.n_per_axis == 5
    assert np.allclose(coarse.axis(), eta.axis()[::2])
    assert coarser_eta(EtaGrid(3)) is None


def test_holder_constant_does_not_grow_under_refinement(tiny_grid, weak_potential):
    coarse, fine = holder_growth(weak_potential, tiny_grid, EtaGrid.for_grid(tiny_grid, 5), 0.1)
    assert 0.0 < fine <= 1.1 * coarse
