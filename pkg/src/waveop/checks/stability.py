"""Stability of g under a perturbation of the potential."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from waveop.fields import Grid3, Potential, ScalarField, b_norm, sample_potential
from waveop.structure import StructureFunction, structure_norm

from .context import CheckResult, VerifyContext

LOG = logging.getLogger("waveop.checks.stability")

GAMMA = 0.25
SUPPORT_FLOOR = 1e-12
PERTURBATIONS = (1.1, 1.05)


@dataclass(frozen=True)
class StabilityReport:
    delta_g_norm: float
    bracket: float

    @property
    def ratio(self) -> float:
        return self.delta_g_norm / self.bracket if self.bracket else 0.0


def perturbation_bracket(pot_a: Potential, pot_b: Potential, grid: Grid3, gamma: float = GAMMA) -> float:
    """||V - V~||_{B^{1+2 gamma}} + sup |V - V~| / (|V| + |V~|) on the joint support."""
    a = sample_potential(pot_a, grid).values.real
    b = sample_potential(pot_b, grid).values.real
    diff = a - b
    if not np.any(diff):
        return 0.0
    smooth = b_norm(ScalarField(grid, diff), 1.0 + 2.0 * gamma)
    mass = np.abs(a) + np.abs(b)
    support = mass > SUPPORT_FLOOR * mass.max()
    return float(smooth + np.max(np.abs(diff[support]) / mass[support]))


def stability_check(
    g_a: StructureFunction, g_b: StructureFunction, pot_a: Potential, pot_b: Potential, grid: Grid3
) -> StabilityReport:
    """structure_norm(g_a - g_b) and the perturbation bracket."""
    return StabilityReport(structure_norm(g_a - g_b), perturbation_bracket(pot_a, pot_b, grid))


def run_stability_checks(ctx: VerifyContext) -> list[CheckResult]:
    if ctx.potential.is_zero:
        g = ctx.full_g()
        report = stability_check(g, g, ctx.potential, ctx.potential, ctx.x_grid)
        return [CheckResult.at_most("stability", report.delta_g_norm, 0.0)]
    reports = []
    for factor in PERTURBATIONS:
        reports.append(
            stability_check(
                ctx.full_g(factor),
                ctx.full_g(),
                ctx.potential.scaled(factor),
                ctx.potential,
                ctx.x_grid,
            )
        )
    ratios = [r.ratio for r in reports]
    spread = abs(ratios[0] / ratios[1] - 1.0) if ratios[1] else float("inf")
    LOG.info("stability ratios %s", ratios)
    return [
        CheckResult.at_most(
            "stability",
            spread,
            ctx.cfg.tolerances.stability,
            ratios=ratios,
            delta_g=[r.delta_g_norm for r in reports],
            bracket=[r.bracket for r in reports],
        )
    ]
