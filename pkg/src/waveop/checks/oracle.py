"""Structure formula against the time-domain oracle, and the L2 properties of W+.

g is the t -> inf limit of the regularized Cook integral, which stops at
t_max. Every comparison therefore runs at the horizon-matched eps, on both
sides, and is measured against the scattered part W+ f - f.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from waveop.config import ExperimentConfig
from waveop.errors import UnsupportedOrder
from waveop.fields import Grid3, Potential, ScalarField, gaussian_field
from waveop.propagator import (
    EvolutionConfig,
    born_term_time,
    cook_wave_operator,
    free_evolve,
    perturbed_evolve,
    project_continuous,
    w_minus_adjoint_time,
)
from waveop.resolvent import m0_scan
from waveop.structure import StructureFunction, apply_g, born_g_n, full_g, structure_norm

from .context import CheckResult, VerifyContext

LOG = logging.getLogger("waveop.checks.oracle")

INTERTWINING_TIMES = (0.5, 1.0)


@dataclass(frozen=True)
class OracleReport:
    """Distances of the structural W+ f from Cook's.

    ``rel_l2_error`` is relative to ||f||, ``scattered_error`` to ||W+ f - f||.
    """

    rel_l2_error: float
    scattered_error: float
    diagnostics: dict = field(default_factory=dict)


def _relative(diff: ScalarField, ref: ScalarField) -> float:
    scale = ref.l2_norm()
    return diff.l2_norm() / scale if scale else diff.l2_norm()


def compare_with_cook(
    g: StructureFunction,
    f: ScalarField,
    pot: Potential,
    evolution: EvolutionConfig,
    cook: ScalarField | None = None,
) -> OracleReport:
    """f + apply_g(g, f) against Cook's W+ f.

    ``cook`` is reused when given. A warning is logged when g and the time
    stepping are regularized with different eps.
    """
    if g.epsilon != evolution.eps_reg:
        LOG.warning("g is regularized with eps %g, Cook with eps %g", g.epsilon, evolution.eps_reg)
    scattered_g = apply_g(g, f)
    if cook is None:
        cook = cook_wave_operator(f, pot, evolution)
    scattered = cook - f
    diff = scattered_g - scattered
    report = OracleReport(
        _relative(diff, f),
        _relative(diff, scattered),
        {
            "structure_norm": structure_norm(g),
            "scattered_ratio": _relative(scattered_g, scattered),
            "scattered_norm": scattered.l2_norm(),
            "eps": evolution.eps_reg,
            "t_max": evolution.t_max,
            **g.info,
        },
    )
    LOG.info(
        "oracle: scattered-part error %.4g (%.4g of ||f||), ratio %.4g",
        report.scattered_error,
        report.rel_l2_error,
        report.diagnostics["scattered_ratio"],
    )
    return report


def born_term_error(
    pot: Potential,
    f: ScalarField,
    n: int,
    cfg: ExperimentConfig,
    evolution: EvolutionConfig | None = None,
    constant: complex | None = None,
) -> float:
    """|| apply_g(g_1 + .. + g_n) f - (W_1 + .. + W_n) f || relative to the time-domain sum, n = 1, 2."""
    evolution = evolution or cfg.evolution().horizon_matched()
    eps = evolution.eps_reg
    sphere, grids = cfg.sphere(), cfg.structure_grids()
    extra = {} if constant is None else {"constant": constant}
    structural = ScalarField.zeros(f.grid)
    timed = ScalarField.zeros(f.grid)
    for k in range(1, n + 1):
        structural = structural + apply_g(born_g_n(pot, k, sphere, grids, eps, **extra), f)
        timed = timed + born_term_time(f, pot, k, evolution)
    err = _relative(structural - timed, timed)
    LOG.info("Born terms up to order %d: relative error %.4g at eps %g", n, err, eps)
    return err


def oracle_equivalence(
    pot: Potential,
    f: ScalarField,
    cfg: ExperimentConfig,
    g: StructureFunction | None = None,
    cook: ScalarField | None = None,
) -> OracleReport:
    """Both pipelines for one potential and probe at the horizon-matched eps, discretized as configured."""
    evolution = cfg.evolution().horizon_matched()
    if g is None:
        s = cfg.structure
        g = full_g(pot, cfg.sphere(), cfg.structure_grids(), evolution.eps_reg, s.method, s.born_order)
    return compare_with_cook(g, f, pot, evolution, cook)


def isometry_probes(grid: Grid3, count: int, seed: int) -> list[ScalarField]:
    """Slow, centred wave packets that stay well inside the box over the Cook horizon."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        width = rng.uniform(1.5, 2.5)
        center = tuple(rng.uniform(-1.0, 1.0, size=3))
        momentum = tuple(rng.uniform(-0.5, 0.5, size=3))
        out.append(gaussian_field(grid, width, center, 1.0, momentum))
    return out


def isometry_defects(pot: Potential, probes: Sequence[ScalarField], evolution: EvolutionConfig) -> list[float]:
    """| ||W+ f|| / ||f|| - 1 | per probe."""
    return [
        abs(cook_wave_operator(f, pot, evolution, check_tail=False).l2_norm() / f.l2_norm() - 1.0) for f in probes
    ]


def intertwining_defect(pot: Potential, f: ScalarField, t: float, evolution: EvolutionConfig) -> float:
    """|| exp(-itH) W+ f - W+ exp(-itH0) f || / ||f||."""
    left = perturbed_evolve(cook_wave_operator(f, pot, evolution, check_tail=False), t, pot, evolution)
    right = cook_wave_operator(free_evolve(f, t), pot, evolution, check_tail=False)
    return (left - right).l2_norm() / f.l2_norm()


def gram_defect(pot: Potential, probes: Sequence[ScalarField], evolution: EvolutionConfig) -> float:
    """max |<W+* e_i, W+* e_j> - <P_c e_i, e_j>| relative to max |<e_i, e_j>|."""
    adjoint = [w_minus_adjoint_time(e.conj(), pot, evolution).conj() for e in probes]
    projected = [project_continuous(e, pot) for e in probes]
    n = len(probes)
    scale = max(abs(probes[i].inner(probes[j])) for i in range(n) for j in range(n))
    worst = 0.0
    for i in range(n):
        for j in range(n):
            lhs = adjoint[i].inner(adjoint[j])
            rhs = projected[i].inner(probes[j])
            worst = max(worst, abs(lhs - rhs))
    return worst / scale


def oracle_refinement(ctx: VerifyContext, fine: OracleReport, cook: ScalarField) -> CheckResult:
    """Scattered-part oracle error of the configured discretization over that of the coarsened one."""
    try:
        coarse_ctx = ctx.coarse
    except UnsupportedOrder as e:
        return CheckResult.skipped("oracle_refinement", str(e))
    eps = ctx.oracle_evolution.eps_reg
    coarse = oracle_equivalence(ctx.potential, ctx.probe, coarse_ctx.cfg, coarse_ctx.full_g(epsilon=eps), cook)
    ratio = fine.scattered_error / coarse.scattered_error if coarse.scattered_error else 0.0
    return CheckResult.at_most(
        "oracle_refinement",
        ratio,
        ctx.cfg.tolerances.oracle_refinement,
        fine=fine.scattered_error,
        coarse=coarse.scattered_error,
    )


def run_oracle_checks(ctx: VerifyContext) -> list[CheckResult]:
    tol = ctx.cfg.tolerances
    matched = ctx.oracle_evolution
    if ctx.potential.is_zero:
        results = [CheckResult.skipped("oracle_equivalence", "zero potential, see zero_identity")]
    else:
        cook = cook_wave_operator(ctx.probe, ctx.potential, matched)
        report = oracle_equivalence(
            ctx.potential, ctx.probe, ctx.cfg, ctx.full_g(epsilon=matched.eps_reg), cook
        )
        results = [
            CheckResult.at_most(
                "oracle_equivalence",
                report.scattered_error,
                tol.oracle,
                rel_l2_error=report.rel_l2_error,
                **report.diagnostics,
            )
        ]
        for name, n, limit in (("born_one", 1, tol.born_one), ("born_two", 2, tol.born_two)):
            err = born_term_error(ctx.potential, ctx.probe, n, ctx.cfg, matched, ctx.k1_constant)
            results.append(CheckResult.at_most(name, err, limit, eps=matched.eps_reg))
        results.append(oracle_refinement(ctx, report, cook))

    probes = isometry_probes(ctx.x_grid, ctx.cfg.probe.count, ctx.cfg.seed)
    defects = isometry_defects(ctx.potential, probes, ctx.evolution)
    results.append(CheckResult.at_most("isometry", max(defects), tol.isometry, per_probe=defects))

    inter = {t: intertwining_defect(ctx.potential, ctx.probe, t, ctx.evolution) for t in INTERTWINING_TIMES}
    results.append(CheckResult.at_most("intertwining", max(inter.values()), tol.intertwining, per_time=inter))

    results.append(CheckResult.at_most("gram_surrogate", gram_defect(ctx.potential, probes, ctx.evolution), tol.adjoint))
    return results


def run_zero_identity(ctx: VerifyContext) -> list[CheckResult]:
    """V = 0: g vanishes, Cook returns f and the scan maximum is 1."""
    zero = Potential.zero()
    g = full_g(zero, ctx.sphere, ctx.grids, ctx.epsilon)
    cook = cook_wave_operator(ctx.probe, zero, ctx.evolution)
    scan = m0_scan(zero, ctx.cfg.scan.lambdas, ctx.cfg.scan.epsilons, ctx.grids.kernel)
    return [
        CheckResult.at_most("zero_structure_norm", structure_norm(g), 0.0),
        CheckResult.at_most("zero_cook", (cook - ctx.probe).l2_norm(), 0.0),
        CheckResult.at_most("zero_m0", abs(scan.M0 - 1.0), 0.0),
    ]
