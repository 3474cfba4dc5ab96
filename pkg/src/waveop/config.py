"""Experiment configuration: pydantic schema, YAML/JSON loading and consistency checks."""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigInvalid, UnsupportedOrder
from .fields import Grid3, Potential, SphereQuadrature, coarser_sphere_order, sphere_rule
from .propagator import EvolutionConfig
from .structure import DAMPING_RESOLUTION, RGrid, StructureGrids

LOG = logging.getLogger("waveop.config")

SCHEMA_VERSION = 1
EPSILON_FACTOR = 0.05


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PotentialConfig(_Section):
    name: str = "reference"
    kind: Literal["gaussian_mixture", "tabulated"] = "gaussian_mixture"
    amplitudes: list[float] = Field(default_factory=lambda: [0.1])
    centers: list[tuple[float, float, float]] | None = None
    widths: list[float] = Field(default_factory=lambda: [1.0])
    path: Path | None = None
    beta: float | None = None

    def build(self, base_dir: Path | None = None) -> Potential:
        if self.kind == "tabulated":
            from .io import read_field

            path = self.path if base_dir is None or self.path.is_absolute() else base_dir / self.path
            return Potential.tabulated(read_field(path), beta=self.beta)
        centers = self.centers or [(0.0, 0.0, 0.0)] * len(self.amplitudes)
        return Potential.mixture(self.amplitudes, centers, self.widths, beta=self.beta)


class BoxGrid(_Section):
    n: int
    box: float = Field(gt=0)


class NodeCount(_Section):
    n: int


class RGridConfig(_Section):
    n: int = Field(default=256, ge=2)
    r_max: float = Field(default=24.0, gt=0)


class GridsConfig(_Section):
    x: BoxGrid = BoxGrid(n=32, box=16.0)
    kernel: BoxGrid = BoxGrid(n=8, box=4.0)
    y: BoxGrid = BoxGrid(n=16, box=8.0)
    eta: NodeCount = NodeCount(n=9)
    r: RGridConfig = RGridConfig()
    x_omega: NodeCount = NodeCount(n=48)
    sphere_order: int = 26


class EpsilonConfig(_Section):
    value: float | Literal["auto"] = "auto"
    sweep: list[float] = Field(default_factory=list)


class TimeConfig(_Section):
    dt: float = Field(default=0.01, gt=0)
    t_max: float = Field(default=6.0, gt=0)
    eps_reg: float | Literal["auto"] = "auto"
    tail_tolerance: float = Field(default=0.05, gt=0)


class ScanConfig(_Section):
    lambdas: list[float] = Field(default_factory=lambda: [0.0, 1.0, 2.0, 5.0, 10.0])
    epsilons: list[float] = Field(default_factory=lambda: [0.05, 0.02, 0.01])


class StructureConfig(_Section):
    method: Literal["born_sum", "resolvent"] = "resolvent"
    born_order: int = Field(default=4, ge=1, le=4)
    k1_constant: Literal["analytic", "calibrated"] = "analytic"
    damping_resolution: float = Field(default=DAMPING_RESOLUTION, gt=0)


class WienerConfig(_Section):
    c: float = Field(default=0.01, gt=0)
    gamma: float = Field(default=0.5, gt=0, le=0.5)
    neumann_cap: int = Field(default=64, ge=1)
    neumann_tol: float = Field(default=1e-12, gt=0)


class ProbeConfig(_Section):
    width: float = Field(default=2.0, gt=0)
    count: int = Field(default=5, ge=1)


class Tolerances(_Section):
    oracle: float = 0.07
    born_one: float = 0.05
    born_two: float = 0.07
    oracle_refinement: float = 1.0
    holder_growth: float = 0.1
    isometry: float = 0.02
    intertwining: float = 0.05
    adjoint: float = 0.05
    resolvent_identity: float = 1e-8
    lambda_independence: float = 1e-10
    high_energy_ratio: float = 0.2
    born_law_factor: float = 2.0
    linearity: float = 1e-10
    small_v_spread: float = 0.2
    wiener: float = 1e-8
    operator_wiener: float = 1e-4
    quant: float = 1e-12
    regularity: float = 1e-10
    stability: float = 0.3
    inequality_slack: float = 0.1
    k1_agreement: float = 0.02
    lp_stability: float = 0.1
    kernel_agreement: float = 0.03
    embedding_slack: float = 0.05


class ExperimentConfig(_Section):
    schema_version: Literal[1] = SCHEMA_VERSION
    potential: PotentialConfig = PotentialConfig()
    grids: GridsConfig = GridsConfig()
    epsilon: EpsilonConfig = EpsilonConfig()
    time: TimeConfig = TimeConfig()
    scan: ScanConfig = ScanConfig()
    structure: StructureConfig = StructureConfig()
    wiener: WienerConfig = WienerConfig()
    probe: ProbeConfig = ProbeConfig()
    corpus: list[PotentialConfig] | None = None
    tolerances: Tolerances = Tolerances()
    output_dir: Path = Path("waveop-out")
    seed: int = 0

    # set by load_config for resolving relative paths
    base_dir: Path | None = Field(default=None, exclude=True)

    def x_grid(self) -> Grid3:
        return Grid3(self.grids.x.n, self.grids.x.box)

    def sphere(self) -> SphereQuadrature:
        return sphere_rule(self.grids.sphere_order)

    def epsilon_value(self) -> float:
        if self.epsilon.value == "auto":
            return EPSILON_FACTOR * (2.0 * math.pi / self.grids.x.box) ** 2
        return float(self.epsilon.value)

    def epsilon_schedule(self) -> list[float]:
        if self.epsilon.sweep:
            return list(self.epsilon.sweep)
        e = self.epsilon_value()
        return [e, e / 2.0, e / 4.0]

    def evolution(self) -> EvolutionConfig:
        eps = self.epsilon_value() if self.time.eps_reg == "auto" else float(self.time.eps_reg)
        return EvolutionConfig(self.time.dt, self.time.t_max, eps, tail_tolerance=self.time.tail_tolerance)

    def structure_grids(self) -> StructureGrids:
        g = self.grids
        return StructureGrids(
            kernel=Grid3(g.kernel.n, g.kernel.box),
            eta_nodes=g.eta.n,
            y=Grid3(g.y.n, g.y.box),
            r=RGrid(g.r.n, g.r.r_max),
            x_omega_nodes=g.x_omega.n,
            x_box=g.x.box,
            damping_resolution=self.structure.damping_resolution,
        )

    def coarsened(self) -> "ExperimentConfig":
        """The same experiment one level coarser in r, x_omega, the sphere rule and the damping stack.

        Raises:
            UnsupportedOrder: the sphere rule has no coarser neighbour.
        """
        g = self.grids
        grids = g.model_copy(
            update={
                "r": g.r.model_copy(update={"n": max(2, g.r.n // 2)}),
                "x_omega": NodeCount(n=max(2, g.x_omega.n // 2)),
                "sphere_order": coarser_sphere_order(g.sphere_order),
            }
        )
        structure = self.structure.model_copy(
            update={"damping_resolution": 2.0 * self.structure.damping_resolution}
        )
        return self.model_copy(update={"grids": grids, "structure": structure})

    def build_potential(self) -> Potential:
        return self.potential.build(self.base_dir)

    def corpus_potentials(self) -> list[tuple[str, Potential]]:
        """Named corpus potentials; the packaged corpus when none is configured."""
        if self.corpus is None:
            from .checks import default_corpus

            entries = default_corpus()
        else:
            entries = self.corpus
        return [(entry.name, entry.build(self.base_dir)) for entry in entries]


def _dotted(loc: tuple) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def _power_of_two(n: int) -> bool:
    return n >= 2 and not n & (n - 1)


def check_consistency(cfg: ExperimentConfig) -> None:
    """Cross-field checks the schema alone cannot express.

    Raises:
        ConfigInvalid: naming the offending field.
    """
    g = cfg.grids
    for name in ("x", "kernel", "y"):
        n = getattr(g, name).n
        if not _power_of_two(n):
            raise ConfigInvalid(f"grids.{name}.n must be a power of two, got {n}", field=f"grids.{name}.n")
    x_spacing = g.x.box / g.x.n
    y_spacing = g.y.box / g.y.n
    if abs(x_spacing - y_spacing) > 1e-12 * x_spacing:
        raise ConfigInvalid(
            f"grids.y spacing {y_spacing:g} must equal the x spacing {x_spacing:g}", field="grids.y.box"
        )
    if g.eta.n < 3 or g.eta.n % 2 == 0:
        raise ConfigInvalid(f"grids.eta.n must be odd and >= 3, got {g.eta.n}", field="grids.eta.n")
    if g.x_omega.n < 2:
        raise ConfigInvalid("grids.x_omega.n must be at least 2", field="grids.x_omega.n")
    try:
        sphere_rule(g.sphere_order)
    except UnsupportedOrder as e:
        raise ConfigInvalid(f"grids.sphere_order: {e}", field="grids.sphere_order") from e
    if cfg.potential.kind == "tabulated" and cfg.potential.path is None:
        raise ConfigInvalid("potential.path is required for tabulated potentials", field="potential.path")
    amps, widths = cfg.potential.amplitudes, cfg.potential.widths
    if cfg.potential.kind == "gaussian_mixture" and len(amps) != len(widths):
        raise ConfigInvalid("potential.widths must match potential.amplitudes", field="potential.widths")
    if any(e <= 0 for e in cfg.epsilon.sweep):
        raise ConfigInvalid("epsilon.sweep values must be positive", field="epsilon.sweep")


def config_from_mapping(data: dict[str, Any] | None, base_dir: Path | None = None) -> ExperimentConfig:
    """Validate a parsed mapping into an ExperimentConfig.

    Raises:
        ConfigInvalid: unknown key, wrong type or inconsistent sizes.
    """
    data = dict(data or {})
    if "base_dir" in data:
        raise ConfigInvalid("unknown field base_dir", field="base_dir")
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        field = _dotted(first["loc"])
        raise ConfigInvalid(f"{field}: {first['msg']}", field=field, errors=e.error_count()) from e
    cfg = cfg.model_copy(update={"base_dir": base_dir})
    check_consistency(cfg)
    return cfg


def load_yaml(path: Path) -> Any:
    """Parse a YAML (or JSON) file.

    Raises:
        FileNotFoundError, PermissionError, yaml.YAMLError, OSError: logged, then re-raised.
    """
    path = Path(path)
    try:
        if not path.exists():
            raise FileNotFoundError(f"File not found: {path}")
        with path.open("r", encoding="utf-8") as f:
            return yaml.safe_load(f)
    except yaml.YAMLError as e:
        LOG.error("YAML error while reading %s: %s", path, e)
        raise
    except FileNotFoundError as e:
        LOG.error("Configuration file not found: %s", e)
        raise
    except PermissionError as e:
        LOG.error("Permission denied when reading %s: %s", path, e)
        raise
    except OSError as e:
        LOG.error("I/O error while reading %s: %s", path, e)
        raise


def load_config(path: Path | None) -> ExperimentConfig:
    """Load an experiment config; ``None`` gives the defaults."""
    if path is None:
        return config_from_mapping({})
    path = Path(path)
    data = load_yaml(path)
    if data is not None and not isinstance(data, dict):
        raise ConfigInvalid(f"{path} must hold a mapping at the top level", field="<root>")
    LOG.debug("Loaded configuration from %s", path)
    return config_from_mapping(data, path.parent)
