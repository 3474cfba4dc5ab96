"""Resolvent-level checks: the identity between T1 and T+, lambda-independence, decay, M0 and eps sweeps."""

from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np

from waveop.errors import DomainError
from waveop.fields import Grid3, Potential
from waveop.kernelalg import EtaGrid, eta_holder_constant, resolvent_identity_residuals, t1_plus, t_plus
from waveop.propagator import epsilon_sweep
from waveop.resolvent import SpectralPoint, birman_schwinger, high_energy_decay, m0_scan
from waveop.structure import structure_epsilon_sweep

from .context import CheckResult, VerifyContext

LOG = logging.getLogger("waveop.checks.spectral")

# spacing 0.075 resolves lambda = 20 (pi / (2 h) ~ 20.9)
HIGH_ENERGY_GRID = Grid3(16, 1.2)
HIGH_ENERGY_LAMBDAS = (1.0, 20.0)
# Hoelder exponent sigma - 1/2 of T1 in eta
HOLDER_EXPONENT = 0.25


def lambda_spread(pot: Potential, lambdas: Sequence[float], grid: Grid3) -> float:
    """Relative spread of ||R0(lambda^2 + i0) V||_{inf->inf} over lambda."""
    norms = np.array([birman_schwinger(SpectralPoint(float(lam)), pot, grid).induced_norm() for lam in lambdas])
    top = float(norms.max(initial=0.0))
    return float(norms.max() - norms.min()) / top if top else 0.0


def high_energy_ratio(pot: Potential, grid: Grid3 = HIGH_ENERGY_GRID) -> float:
    """||(R0 V)^2|| at lambda = 20 relative to lambda = 1."""
    decay = high_energy_decay(pot, HIGH_ENERGY_LAMBDAS, grid)
    low, high = decay.squared
    return float(high / low) if low else 0.0


def coarser_eta(eta: EtaGrid) -> EtaGrid | None:
    """Every other node of ``eta`` on the same eta_max; None when that leaves fewer than three per axis."""
    n = (eta.n_per_axis + 1) // 2
    if n % 2 == 0:
        n += 1
    if n >= eta.n_per_axis:
        return None
    return EtaGrid(n, eta.eta_max)


def holder_growth(
    pot: Potential, grid: Grid3, eta: EtaGrid, epsilon: float, rho: float = HOLDER_EXPONENT
) -> tuple[float, float]:
    """Hoelder-in-eta constants of T1 on the coarsened and on the given eta lattice."""
    coarse = coarser_eta(eta)
    if coarse is None:
        raise DomainError(f"eta lattice with {eta.n_per_axis} nodes per axis has no coarser level", n=eta.n_per_axis)
    constants = tuple(eta_holder_constant(t1_plus(pot, grid, e, epsilon), rho) for e in (coarse, eta))
    LOG.info("eta Hoelder constants (coarse, fine): %.4g, %.4g", *constants)
    return constants


def run_spectral_checks(ctx: VerifyContext) -> list[CheckResult]:
    pot = ctx.potential
    tol = ctx.cfg.tolerances
    kernel = ctx.grids.kernel
    eta = ctx.grids.eta
    results = []

    t1 = t1_plus(pot, kernel, eta, ctx.epsilon).materialize()
    tp = t_plus(pot, kernel, eta, ctx.epsilon).materialize()
    residuals = resolvent_identity_residuals(t1, tp)
    results.append(CheckResult.at_most("resolvent_identity", residuals.worst, tol.resolvent_identity))

    if coarser_eta(eta) is None:
        results.append(CheckResult.skipped("holder_refinement", "eta lattice has no coarser level"))
    else:
        coarse, fine = holder_growth(pot, kernel, eta, ctx.epsilon)
        growth = fine / coarse if coarse else 0.0
        results.append(
            CheckResult.at_most("holder_refinement", growth, 1.0 + tol.holder_growth, coarse=coarse, fine=fine)
        )

    lambdas = ctx.cfg.scan.lambdas
    results.append(CheckResult.at_most("lambda_independence", lambda_spread(pot, lambdas, kernel), tol.lambda_independence))
    results.append(CheckResult.at_most("high_energy_decay", high_energy_ratio(pot), tol.high_energy_ratio))

    scan = m0_scan(pot, lambdas, ctx.cfg.scan.epsilons, kernel)
    results.append(
        CheckResult.flag(
            "m0_scan",
            math.isfinite(scan.M0),
            M0=scan.M0,
            boundary_maximum=scan.boundary_maximum,
            offending=scan.offending,
        )
    )
    return results


def run_sweep_checks(ctx: VerifyContext) -> list[CheckResult]:
    """Successive differences along the eps schedule for both pipelines; reported, must shrink."""
    schedule = ctx.cfg.epsilon_schedule()
    if len(schedule) < 3:
        return [CheckResult.skipped("epsilon_sweeps", "schedule needs at least three values")]
    cook = epsilon_sweep(ctx.probe, ctx.potential, ctx.evolution, schedule)
    structural = structure_epsilon_sweep(ctx.potential, ctx.sphere, ctx.grids, schedule)
    LOG.info("eps sweep differences: cook %s, structure %s", cook.differences, structural.differences)
    return [
        CheckResult.flag("cook_epsilon_sweep", cook.decreasing, differences=cook.differences, epsilons=schedule),
        CheckResult.flag(
            "structure_epsilon_sweep", structural.decreasing, differences=structural.differences, epsilons=schedule
        ),
    ]
