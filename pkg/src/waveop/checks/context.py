"""Shared state of a verification run and the result record of a single check."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

from waveop.config import ExperimentConfig
from waveop.errors import WaveOpError
from waveop.fields import Grid3, Potential, ScalarField, SphereQuadrature, gaussian_field
from waveop.kernelalg import probe_family
from waveop.propagator import EvolutionConfig
from waveop.structure import K1_CONSTANT, StructureFunction, StructureGrids, calibrate_k1_constant, full_g

LOG = logging.getLogger("waveop.checks.context")


@dataclass
class CheckResult:
    """One verified number with its tolerance."""

    name: str
    value: float
    tolerance: float
    passed: bool
    details: dict[str, Any] = field(default_factory=dict)
    error: dict[str, Any] | None = None

    @classmethod
    def at_most(cls, name: str, value: float, tolerance: float, **details: Any) -> "CheckResult":
        passed = math.isfinite(value) and value <= tolerance
        return cls(name, float(value), float(tolerance), passed, details)

    @classmethod
    def flag(cls, name: str, ok: bool, **details: Any) -> "CheckResult":
        return cls(name, 1.0 if ok else 0.0, 1.0, bool(ok), details)

    @classmethod
    def failed(cls, name: str, error: WaveOpError) -> "CheckResult":
        return cls(name, math.nan, math.nan, False, {}, error.to_dict())

    @classmethod
    def skipped(cls, name: str, reason: str) -> "CheckResult":
        return cls(name, 0.0, 0.0, True, {"skipped": reason})

    def describe(self) -> str:
        if self.error is not None:
            return f"{self.name}: {self.error['code']}: {self.error['message']}"
        if "skipped" in self.details:
            return f"{self.name}: skipped ({self.details['skipped']})"
        return f"{self.name}: {self.value:.4g} (tolerance {self.tolerance:.3g})"

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "value": self.value,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "details": self.details,
            "error": self.error,
        }


class VerifyContext:
    """Lazily built inputs shared by the checks of one run."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self._full_g: dict[tuple[float, float], StructureFunction] = {}

    @cached_property
    def potential(self) -> Potential:
        return self.cfg.build_potential()

    @cached_property
    def x_grid(self) -> Grid3:
        return self.cfg.x_grid()

    @cached_property
    def sphere(self) -> SphereQuadrature:
        return self.cfg.sphere()

    @cached_property
    def grids(self) -> StructureGrids:
        return self.cfg.structure_grids()

    @cached_property
    def epsilon(self) -> float:
        return self.cfg.epsilon_value()

    @cached_property
    def evolution(self) -> EvolutionConfig:
        return self.cfg.evolution()

    @cached_property
    def probe(self) -> ScalarField:
        return gaussian_field(self.x_grid, self.cfg.probe.width)

    @cached_property
    def probes(self) -> list[ScalarField]:
        return probe_family(self.x_grid, self.cfg.probe.count, self.cfg.seed)

    @cached_property
    def corpus(self) -> list[tuple[str, Potential]]:
        return self.cfg.corpus_potentials()

    @cached_property
    def k1_constant(self) -> complex:
        if self.cfg.structure.k1_constant == "analytic" or self.potential.is_zero:
            return K1_CONSTANT
        return calibrate_k1_constant(self.potential, self.probe, self.evolution, self.sphere, self.grids.r)

    @cached_property
    def oracle_evolution(self) -> EvolutionConfig:
        """Time stepping of the oracle comparisons, with eps matched to the horizon."""
        return self.evolution.horizon_matched()

    @cached_property
    def coarse(self) -> "VerifyContext":
        """Context of the coarsened discretization, sharing the potential and the probes.

        Raises:
            UnsupportedOrder: the sphere rule has no coarser neighbour.
        """
        coarse = VerifyContext(self.cfg.coarsened())
        coarse.potential = self.potential
        coarse.probe = self.probe
        coarse.probes = self.probes
        return coarse

    def full_g(self, factor: float = 1.0, epsilon: float | None = None) -> StructureFunction:
        """full_g of ``factor * V``, cached per factor and eps (the configured eps by default)."""
        eps = self.epsilon if epsilon is None else epsilon
        key = (factor, eps)
        if key not in self._full_g:
            s = self.cfg.structure
            LOG.info("building full g for %g V at eps %g (%s)", factor, eps, s.method)
            self._full_g[key] = full_g(
                self.potential.scaled(factor),
                self.sphere,
                self.grids,
                eps,
                s.method,
                s.born_order,
                self.k1_constant,
            )
        return self._full_g[key]
