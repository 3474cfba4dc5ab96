"""L^p and half-space bounds for W+ applied through the structure formula.

By the triangle inequality over the representation, every norm invariant
under translations and reflections satisfies ||W+ f|| <= (1 + ||g||) ||f||
with ||g|| the structure norm. The max-norm stands in for p = inf.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from waveop.errors import UnsupportedOrder
from waveop.fields import ScalarField
from waveop.structure import Reflection, StructureFunction, apply_g, structure_norm

from .context import CheckResult, VerifyContext

LOG = logging.getLogger("waveop.checks.bounds")

P_LIST = (1.0, 2.0, 4.0, math.inf)
HALFSPACE_SLACK = 1e-10

# (normal, offset) pairs: H = {x : x.normal > offset}
DEFAULT_HALFSPACES = (
    ((1.0, 0.0, 0.0), 0.0),
    ((0.0, 1.0, 0.0), -1.0),
    ((0.0, 0.0, 1.0), 1.0),
    ((1.0, 1.0, 0.0), 0.5),
)


def _apply_w(g: StructureFunction, f: ScalarField) -> ScalarField:
    if g.is_empty:
        return f
    return f + apply_g(g, f)


def lp_bound_scan(
    g: StructureFunction, probes: Sequence[ScalarField], p_list: Sequence[float] = P_LIST
) -> dict[float, float]:
    """max over probes of ||W+ f||_p / ||f||_p for every p."""
    images = [_apply_w(g, f) for f in probes]
    return {p: max(w.lp_norm(p) / f.lp_norm(p) for f, w in zip(probes, images)) for p in p_list}


@dataclass(frozen=True)
class HalfspaceReport:
    ratio: float
    majorant: float
    ratios: tuple[float, ...]


def halfspace_bound(
    g: StructureFunction, f: ScalarField, halfspaces: Sequence[tuple] = DEFAULT_HALFSPACES
) -> HalfspaceReport:
    """||W+ (1_H f)||_2 / ||1_H f||_2 over half spaces H, against 1 + structure_norm(g)."""
    pts = f.grid.points()
    ratios = []
    for normal, offset in halfspaces:
        n = np.asarray(normal, dtype=float)
        n /= np.linalg.norm(n)
        mask = (pts @ n > offset).reshape(f.grid.shape)
        cut = f.with_values(np.where(mask, f.values, 0.0))
        norm = cut.l2_norm()
        if norm == 0.0:
            continue
        ratios.append(_apply_w(g, cut).l2_norm() / norm)
    return HalfspaceReport(max(ratios, default=1.0), structure_norm(g), tuple(ratios))


def reflected(f: ScalarField, omega: tuple[float, float, float]) -> ScalarField:
    """f o S_omega for a coordinate axis omega (an exact grid permutation)."""
    axis = int(np.argmax(np.abs(omega)))
    vals = np.flip(f.values, axis=axis)
    # the grid is [-L/2, L/2): flipping maps index k to -k, so roll by one
    return f.with_values(np.roll(vals, 1, axis=axis))


def lp_refinement(ctx: VerifyContext, ratios: dict[float, float]) -> CheckResult:
    """Largest relative change of the lp_bound_scan ratios between the coarsened and the configured discretization."""
    try:
        coarse_ctx = ctx.coarse
    except UnsupportedOrder as e:
        return CheckResult.skipped("lp_refinement", str(e))
    coarse = lp_bound_scan(coarse_ctx.full_g(), ctx.probes, tuple(ratios))
    drift = {str(p): abs(ratios[p] / coarse[p] - 1.0) for p in ratios}
    return CheckResult.at_most("lp_refinement", max(drift.values()), ctx.cfg.tolerances.lp_stability, drift=drift)


def run_bound_checks(ctx: VerifyContext) -> list[CheckResult]:
    g = ctx.full_g()
    bound = 1.0 + structure_norm(g)
    ratios = lp_bound_scan(g, ctx.probes)
    worst = max(ratios.values())
    results = [
        CheckResult.at_most(
            "lp_bound", worst / bound, 1.0, ratios={str(p): r for p, r in ratios.items()}, bound=bound
        )
    ]
    results.append(lp_refinement(ctx, ratios))
    report = halfspace_bound(g, ctx.probe)
    results.append(
        CheckResult.at_most(
            "halfspace_bound", report.ratio - (1.0 + report.majorant), HALFSPACE_SLACK, ratios=report.ratios
        )
    )
    if ctx.potential.is_radial:
        f = ctx.probes[0]
        mirrored = reflected(f, Reflection((0.0, 0.0, 1.0)).omega)
        a = _apply_w(g, f).l2_norm() / f.l2_norm()
        b = _apply_w(g, mirrored).l2_norm() / mirrored.l2_norm()
        results.append(CheckResult.at_most("reflection_symmetry", abs(a - b) / a, ctx.cfg.tolerances.lp_stability))
    return results
