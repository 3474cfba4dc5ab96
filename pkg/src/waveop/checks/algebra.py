"""Wiener inversion, scalar and operator valued, and the quantitative parameter formulas."""

from __future__ import annotations

import logging
import math

import numpy as np

from waveop.errors import NotInvertible
from waveop.fields import Grid3, Potential
from waveop.kernelalg import EtaGrid, EtaKernel, t1_plus, t_plus
from waveop.wiener import ConvElement, check_inverse, operator_invert, quant_params, wiener_solve

from .context import CheckResult, VerifyContext

LOG = logging.getLogger("waveop.checks.algebra")

SCALAR_POINTS = 4096
SCALAR_BOX = 200.0
SCALAR_COUNT = 10
SPECTRAL_BOUND = 0.5
UNIQUENESS_TOLERANCE = 1e-7

OPERATOR_GRID = Grid3(4, 2.0)
OPERATOR_ETA_NODES = 5
OPERATOR_AMPLITUDE = 0.1

# (norm_v, m0, gamma, c) -> expected log2 values
QUANT_CASES = (
    ((1.0, 1.0, 0.5, 0.01), {"log2_K": 1.0, "log2_M1": math.log2(3.0), "log2_M2": 257.0}),
    ((0.0, 1.0, 0.5, 0.01), {"log2_K": 0.0, "log2_M1": 1.0, "log2_M2": 10.0}),
    (
        (3.0, 0.0, 0.25, 0.01),
        {"log2_K": 2.0, "log2_M1": 0.0, "log2_M2": 914.0, "log2_eps1": math.log2(0.01) - 4.0},
    ),
)


def admissible_inputs(
    count: int = SCALAR_COUNT, n: int = SCALAR_POINTS, box: float = SCALAR_BOX, seed: int = 0
) -> list[ConvElement]:
    """Random sums of modulated Gaussians near the origin with sup |f^| <= 0.5, so min |1 + f^| >= 0.5.

    Mass far from the origin forces the local patches below the dual grid resolution.
    """
    rng = np.random.default_rng(seed)
    x = -0.5 * box + (box / n) * np.arange(n)
    out = []
    for _ in range(count):
        terms = int(rng.integers(1, 5))
        density = np.zeros(n, dtype=np.complex128)
        bound = 0.0
        for _ in range(terms):
            amp = rng.uniform(-1.0, 1.0) + 1j * rng.uniform(-1.0, 1.0)
            width = rng.uniform(0.5, 1.0)
            center = rng.uniform(-0.25, 0.25)
            momentum = rng.uniform(-2.0, 2.0)
            density += amp * np.exp(-0.5 * ((x - center) / width) ** 2 + 1j * momentum * x)
            bound += abs(amp) * width * math.sqrt(2.0 * math.pi)
        out.append(ConvElement(1, n, box, density * (SPECTRAL_BOUND / bound)))
    return out


def singular_input(n: int = SCALAR_POINTS, box: float = SCALAR_BOX, width: float = 2.0) -> ConvElement:
    """A Gaussian with f^(0) = -1, so 1 + f^ vanishes at the origin of the dual grid."""
    x = -0.5 * box + (box / n) * np.arange(n)
    density = -np.exp(-0.5 * (x / width) ** 2) / (width * math.sqrt(2.0 * math.pi))
    return ConvElement(1, n, box, density)


def operator_crosscheck(s: EtaKernel, direct: EtaKernel) -> float:
    """max over eta of the row-sum norm of L^ - direct^, L from the patched inversion."""
    inverse = operator_invert(s)
    return max(float(np.abs(inverse.slice(i) - direct.slice(i)).sum(axis=1).max()) for i in range(len(s)))


def quant_mismatch() -> float:
    worst = 0.0
    for (norm_v, m0, gamma, c), expected in QUANT_CASES:
        params = quant_params(norm_v, m0, gamma, c)
        for key, value in expected.items():
            got = getattr(params, key)
            worst = max(worst, abs(got - value) / max(1.0, abs(value)))
    return worst


def run_wiener_checks(ctx: VerifyContext) -> list[CheckResult]:
    tol = ctx.cfg.tolerances
    wcfg = ctx.cfg.wiener
    results = []

    inputs = admissible_inputs(seed=ctx.cfg.seed)
    residuals = []
    for f in inputs:
        g = wiener_solve(f, wcfg.neumann_cap, wcfg.neumann_tol).inverse
        residuals.append(check_inverse(f, g))
    results.append(CheckResult.at_most("scalar_wiener", max(residuals), tol.wiener, per_input=residuals))

    try:
        wiener_solve(singular_input())
        raised = False
    except NotInvertible:
        raised = True
    results.append(CheckResult.flag("scalar_not_invertible", raised))

    f = inputs[0]
    a = wiener_solve(f, wcfg.neumann_cap, wcfg.neumann_tol).inverse
    b = wiener_solve(f, wcfg.neumann_cap, wcfg.neumann_tol, offset=0.5).inverse
    results.append(
        CheckResult.at_most("scalar_uniqueness", float(np.abs(a.spectrum() - b.spectrum()).max()), UNIQUENESS_TOLERANCE)
    )

    pot = Potential.gaussian(OPERATOR_AMPLITUDE, 1.0)
    eta = EtaGrid.for_grid(OPERATOR_GRID, OPERATOR_ETA_NODES)
    s = t1_plus(pot, OPERATOR_GRID, eta).materialize()
    direct = t_plus(pot, OPERATOR_GRID, eta).scaled(-1.0)
    results.append(CheckResult.at_most("operator_wiener", operator_crosscheck(s, direct), tol.operator_wiener))

    results.append(CheckResult.at_most("quant_formulas", quant_mismatch(), tol.quant))
    return results
