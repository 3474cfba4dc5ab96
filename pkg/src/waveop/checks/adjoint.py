"""W-, W+* and W-* on a small grid where W+ can be assembled as a matrix."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from waveop.fields import Potential, ScalarField, gaussian_field
from waveop.propagator import EvolutionConfig, assemble_cook_matrix, cook_wave_operator, w_minus, w_minus_adjoint_time

from .context import CheckResult, VerifyContext

LOG = logging.getLogger("waveop.checks.adjoint")


@dataclass(frozen=True, eq=False)
class AdjointFields:
    w_plus: ScalarField
    w_minus: ScalarField
    w_plus_adjoint: ScalarField
    w_minus_adjoint: ScalarField
    w_minus_adjoint_time: ScalarField
    isometry_defect: float
    adjoint_mismatch: float


def w_minus_and_adjoint(pot: Potential, f: ScalarField, cfg: EvolutionConfig) -> AdjointFields:
    """W+, W- and both adjoints of f; the adjoints come from the assembled W+ matrix."""
    matrix = assemble_cook_matrix(f.grid, pot, cfg)
    vec = f.values.ravel()
    wp = f.with_values(matrix @ vec)
    wm = w_minus(f, pot, cfg, check_tail=False)
    wp_star = f.with_values(matrix.conj().T @ vec)
    # W- = conj(W+) entrywise, so W-* is the transpose of W+
    wm_star = f.with_values(matrix.T @ vec)
    wm_star_time = w_minus_adjoint_time(f, pot, cfg)
    norm = f.l2_norm()
    back = f.with_values(matrix.conj().T @ (matrix @ vec))
    iso = (back - f).l2_norm() / norm if norm else 0.0
    mismatch = (wm_star_time - wm_star).l2_norm() / norm if norm else 0.0
    LOG.debug("adjoints: isometry defect %.3g, W-* mismatch %.3g", iso, mismatch)
    return AdjointFields(wp, wm, wp_star, wm_star, wm_star_time, iso, mismatch)


def run_adjoint_checks(ctx: VerifyContext) -> list[CheckResult]:
    grid = ctx.grids.kernel
    f = gaussian_field(grid, 0.25 * grid.box_length)
    cfg = ctx.evolution.with_epsilon(0.0)
    fields = w_minus_and_adjoint(ctx.potential, f, cfg)
    direct = cook_wave_operator(f, ctx.potential, cfg, check_tail=False)
    assembled = (fields.w_plus - direct).l2_norm() / f.l2_norm()
    tol = ctx.cfg.tolerances.adjoint
    return [
        CheckResult.at_most("adjoint_isometry", fields.isometry_defect, tol),
        CheckResult.at_most("w_minus_adjoint_time", fields.adjoint_mismatch, tol),
        CheckResult.at_most("assembled_matrix", assembled, 1e-10),
    ]
