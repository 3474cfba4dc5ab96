"""The function L(r, omega), the kernel K1 and the structure measure g.

W+ is applied through the reflection formula

    (W+ f)(x) = f(x) + int_{S^2} int g(x, dy, omega) f(S_omega x - y) domega

with g = g1 + h. The line part g1 lives on the lines {r omega}: density
const * L(r, omega), switched on for r > -2 x.omega. The grid part h is a
density on a y box, tabulated on a grid of x_omega = x.omega values, so the
x-dependence of g only enters through x.omega.

    L(r, omega)   = int_0^inf V^(-s omega) exp(i r s / 2) s ds
    K1(x, z)      = const |z|^-2 L(|z| - 2 x.z^, z^)
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np
from scipy import sparse
from scipy.signal import fftconvolve
from scipy.special import roots_legendre

from .errors import BornDivergent, DomainError, FieldFormatError, GridMismatch, SingularPoint, UnresolvedOscillation
from .fields import (
    GaussianMixture,
    Grid3,
    Potential,
    ScalarField,
    SphereQuadrature,
    Tabulated,
    b_norm,
    interpolate,
    nonuniform_transform,
    sample_potential,
)
from .io import read_array, write_array, write_json
from .kernelalg import ContractionKernel, EtaGrid, contract, power, t1_plus, t_plus, xinf_l1_norm
from .parallel import parallel_map
from .propagator import EpsilonSweep, EvolutionConfig, born_term_time

LOG = logging.getLogger("waveop.structure")

# const of K1 for the Fourier convention of the fields module
K1_CONSTANT = 1j / (16.0 * math.pi**3)
GL_ORDER = 8
FOURIER_FLOOR = 1e-10
LINE_TRIM = 1e-12
DROPPED_MASS_LIMIT = 0.05
# eps times the step of the damping stack (linear interpolation error about 2e-4 of max |L|)
DAMPING_RESOLUTION = 0.04
DAMPING_MAX_NODES = 4097
LINE_CHUNK = 16
STRUCTURE_FORMAT = "waveop-structure"

Method = Literal["born_sum", "resolvent"]


@dataclass(frozen=True)
class Reflection:
    """S_omega x = x - 2 (x.omega) omega."""

    omega: tuple[float, float, float]

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            raise DomainError("reflection direction must be nonzero")
        object.__setattr__(self, "omega", tuple(float(c) for c in w / norm))

    @property
    def matrix(self) -> np.ndarray:
        w = np.asarray(self.omega)
        return np.eye(3) - 2.0 * np.outer(w, w)

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        w = np.asarray(self.omega)
        return points - 2.0 * (points @ w)[..., None] * w


@dataclass(frozen=True)
class RGrid:
    """Uniform grid of n points on [-r_max, r_max]."""

    n: int = 256
    r_max: float = 24.0

    def __post_init__(self):
        if self.n < 2 or not self.r_max > 0:
            raise DomainError("r grid needs n >= 2 and r_max > 0", n=self.n, r_max=self.r_max)

    @property
    def values(self) -> np.ndarray:
        return np.linspace(-self.r_max, self.r_max, self.n)

    @property
    def dr(self) -> float:
        return 2.0 * self.r_max / (self.n - 1)


def s_quadrature(s_max: float, r_max: float, panel: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes on [0, s_max] resolving exp(i r s / 2) for |r| <= r_max.

    Raises:
        UnresolvedOscillation: a requested panel with r_max * panel / 2 > pi / 2.
    """
    limit = math.pi / r_max
    if panel is None:
        panel = limit
    elif panel > limit * (1.0 + 1e-12):
        raise UnresolvedOscillation(
            f"panel {panel:g} too wide for r_max={r_max:g} (limit {limit:g})", panel=panel, limit=limit
        )
    panels = max(1, math.ceil(s_max / panel))
    edges = np.linspace(0.0, s_max, panels + 1)
    t, wt = roots_legendre(GL_ORDER)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    s = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    w = (half[:, None] * wt[None, :]).ravel()
    return s, w


def fourier_cutoff(pot: Potential) -> float:
    """s beyond which V^ is negligible: 1e-10 relative decay or the Nyquist frequency."""
    if isinstance(pot.kind, GaussianMixture):
        return math.sqrt(-2.0 * math.log(FOURIER_FLOOR)) / pot.min_width
    if isinstance(pot.kind, Tabulated):
        return pot.kind.field.grid.nyquist
    raise DomainError("unknown potential kind")


def _damping_factors(s: np.ndarray, damping: np.ndarray, epsilon: float) -> np.ndarray:
    """exp(-eps d / (2 s)) as an array [d, s]."""
    if epsilon == 0.0:
        return np.ones((len(damping), len(s)))
    return np.exp(-epsilon * np.outer(damping, 0.5 / s))


def _l_values(
    vhat: np.ndarray, s: np.ndarray, w: np.ndarray, r: np.ndarray, damping: np.ndarray, epsilon: float
) -> np.ndarray:
    """L at (r, d) for V^ sampled along a ray: ``vhat[s, ...]`` -> ``out[r, d, ...]``."""
    phase = np.exp(0.5j * np.outer(r, s)) * (w * s)[None, :]
    flat = vhat.reshape(len(s), -1)
    damp = _damping_factors(s, damping, epsilon)
    out = np.empty((len(r), len(damping), flat.shape[1]), dtype=np.complex128)
    for d in range(len(damping)):
        out[:, d] = phase @ (damp[d][:, None] * flat)
    return out.reshape((len(r), len(damping)) + vhat.shape[1:])


def default_damping(epsilon: float, reach: float, resolution: float = DAMPING_RESOLUTION) -> np.ndarray:
    """Distances |z| in [0, reach] at which the eps-damped L is tabulated.

    The step is resolution / eps; the second |z|-derivative of L_eps scales with eps^2.
    """
    if epsilon == 0.0:
        return np.zeros(1)
    step = resolution / epsilon
    nodes = max(2, math.ceil(reach / step) + 1)
    if nodes > DAMPING_MAX_NODES:
        LOG.warning(
            "damping stack capped at %d nodes (step %.3g instead of %.3g)",
            DAMPING_MAX_NODES,
            reach / (DAMPING_MAX_NODES - 1),
            step,
        )
        return np.linspace(0.0, reach, DAMPING_MAX_NODES)
    return step * np.arange(nodes)


def _interp_damping(table: np.ndarray, damping: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Linear interpolation of ``table[r, d]`` at distances ``rho[r, ...]``."""
    if len(damping) == 1:
        return table[:, 0]
    step = damping[1] - damping[0]
    t = np.clip(rho / step, 0.0, len(damping) - 1.0)
    i0 = np.minimum(np.floor(t).astype(int), len(damping) - 2)
    frac = t - i0
    ridx = np.arange(table.shape[0]).reshape((-1,) + (1,) * (rho.ndim - 1))
    return (1.0 - frac) * table[ridx, i0] + frac * table[ridx, i0 + 1]


@dataclass(frozen=True, eq=False)
class LTable:
    """L(r, omega) on an r grid x sphere nodes, stacked over damping distances."""

    r_grid: RGrid
    sphere: SphereQuadrature
    values: np.ndarray
    epsilon: float = 0.0
    damping: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        damping = np.asarray(self.damping, dtype=float)
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim == 2:
            values = values[:, :, None]
        if values.shape != (self.r_grid.n, len(self.sphere), len(damping)):
            raise GridMismatch("L table does not match its grids", shape=values.shape)
        if not np.all(np.isfinite(values)):
            raise DomainError("L table values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "damping", damping)

    @property
    def limit(self) -> np.ndarray:
        """Undamped L(r, omega) as an (r, omega) array."""
        return self.values[:, :, 0]

    def l1_norm(self) -> float:
        return float(self.r_grid.dr * np.sum(np.abs(self.limit) * self.sphere.weights[None, :]))

    def l2_norm(self) -> float:
        return math.sqrt(self.r_grid.dr * float(np.sum(np.abs(self.limit) ** 2 * self.sphere.weights[None, :])))


def l_table(
    pot: Potential,
    r_grid: RGrid,
    sphere: SphereQuadrature,
    epsilon: float = 0.0,
    damping: Sequence[float] | None = None,
    panel: float | None = None,
) -> LTable:
    """Tabulate L(r, omega) by composite Gauss-Legendre quadrature in s."""
    damping = default_damping(epsilon, 3.0 * r_grid.r_max) if damping is None else np.asarray(damping, dtype=float)
    shape = (r_grid.n, len(sphere), len(damping))
    if pot.is_zero:
        return LTable(r_grid, sphere, np.zeros(shape, dtype=np.complex128), epsilon, damping)
    s, w = s_quadrature(fourier_cutoff(pot), r_grid.r_max, panel)
    xi = -s[:, None, None] * sphere.nodes[None, :, :]
    vhat = pot.fourier(xi)
    values = _l_values(vhat, s, w, r_grid.values, damping, epsilon)
    LOG.debug("L table: %d s-nodes, %d directions, %d damping levels", len(s), len(sphere), len(damping))
    return LTable(r_grid, sphere, np.moveaxis(values, 2, 1), epsilon, damping)


def _ray_values(pot: Potential, direction: np.ndarray, r: np.ndarray, distance: float, epsilon: float) -> np.ndarray:
    r_max = max(float(np.max(np.abs(r))), 1.0)
    s, w = s_quadrature(fourier_cutoff(pot), r_max)
    vhat = pot.fourier(-s[:, None] * direction[None, :])
    return _l_values(vhat, s, w, r, np.array([distance]), epsilon)[:, 0]


def k1_kernel(
    pot: Potential, x: np.ndarray, z: np.ndarray, epsilon: float = 0.0, constant: complex = K1_CONSTANT
) -> complex:
    """K1(x, z) = const |z|^-2 L_eps(|z| - 2 x.z^, z^) with damping at distance |z|.

    Raises:
        SingularPoint: z = 0.
    """
    z = np.asarray(z, dtype=float)
    dist = float(np.linalg.norm(z))
    if dist == 0.0:
        raise SingularPoint("K1 is singular at z = 0")
    if pot.is_zero:
        return 0j
    zhat = z / dist
    r = np.array([dist - 2.0 * float(np.dot(x, zhat))])
    return complex(constant * _ray_values(pot, zhat, r, dist, epsilon)[0] / dist**2)


def k1_contraction_kernel(
    pot: Potential, grid: Grid3, eta: EtaGrid, epsilon: float = 0.0, constant: complex = K1_CONSTANT
) -> ContractionKernel:
    """K1 tabulated on the kernel grid x the dual y lattice; y = 0 is a sub-cell average."""
    if pot.is_zero:
        return ContractionKernel.zero(grid, eta)
    pts = grid.points()
    ys = eta.y_points
    reach = float(np.linalg.norm(ys, axis=1).max() + 2.0 * np.linalg.norm(pts, axis=1).max())
    s, w = s_quadrature(fourier_cutoff(pot), reach)
    quarter = 0.25 * eta.y_spacing
    offsets = np.array(list(itertools.product((-quarter, quarter), repeat=3)))

    def kernel_at(y: np.ndarray) -> np.ndarray:
        dist = float(np.linalg.norm(y))
        yhat = y / dist
        vhat = pot.fourier(-s[:, None] * yhat[None, :])
        damp = np.exp(-epsilon * dist * 0.5 / s) if epsilon else 1.0
        r = dist - 2.0 * (pts @ yhat)
        lval = np.exp(0.5j * np.outer(r, s)) @ (w * s * damp * vhat)
        return constant * lval / dist**2

    def column(j: int) -> np.ndarray:
        y = ys[j]
        if np.linalg.norm(y) > 0.5 * eta.y_spacing:
            return kernel_at(y)
        return np.mean([kernel_at(y + o) for o in offsets], axis=0)

    values = np.stack(parallel_map(column, range(eta.size)), axis=1)
    return ContractionKernel(grid, eta, values)


def weighted_y_norm(
    k: ContractionKernel, gamma: float, sigma: float, weight: ScalarField | None = None
) -> float:
    """int <y>^gamma ||w K(., y)||_{B^sigma_x} dy."""
    w = np.ones(k.grid.size) if weight is None else weight.values.ravel()
    bracket = np.sqrt(1.0 + np.sum(k.eta.y_points**2, axis=1)) ** gamma
    total = sum(
        bracket[j] * b_norm(ScalarField(k.grid, w * k.values[:, j]), sigma, check_tail=False)
        for j in range(k.eta.size)
    )
    return float(k.eta.y_cell_volume * total)


@dataclass(frozen=True, eq=False)
class LinePart:
    """density[r, omega, d]: const * L_eps(r, omega) at damping distance damping[d]."""

    r_grid: RGrid
    damping: np.ndarray
    density: np.ndarray

    def broadcast(self, damping: np.ndarray) -> "LinePart":
        if len(self.damping) == len(damping) and np.allclose(self.damping, damping):
            return self
        if len(self.damping) == 1:
            dens = np.repeat(self.density, len(damping), axis=2)
            return LinePart(self.r_grid, np.asarray(damping), dens)
        raise GridMismatch("line parts use different damping stacks")

    def combine(self, other: "LinePart", sign: float) -> "LinePart":
        if self.r_grid != other.r_grid:
            raise GridMismatch("line parts use different r grids")
        damping = self.damping if len(self.damping) >= len(other.damping) else other.damping
        a, b = self.broadcast(damping), other.broadcast(damping)
        return LinePart(self.r_grid, damping, a.density + sign * b.density)


@dataclass(frozen=True, eq=False)
class GridPart:
    """density[omega, j, y]: h at x.omega = x_omega[j] on the points of y_grid."""

    y_grid: Grid3
    x_omega: np.ndarray
    density: np.ndarray

    def combine(self, other: "GridPart", sign: float) -> "GridPart":
        if self.y_grid != other.y_grid or not np.array_equal(self.x_omega, other.x_omega):
            raise GridMismatch("grid parts live on different grids")
        return GridPart(self.y_grid, self.x_omega, self.density + sign * other.density)


@dataclass(frozen=True, eq=False)
class StructureFunction:
    """g = line part + grid part for each node of a sphere rule."""

    sphere: SphereQuadrature
    line: LinePart | None = None
    grid: GridPart | None = None
    epsilon: float = 0.0
    constant: complex = K1_CONSTANT
    info: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, sphere: SphereQuadrature, epsilon: float = 0.0) -> "StructureFunction":
        return cls(sphere, None, None, epsilon)

    @property
    def is_empty(self) -> bool:
        return self.line is None and self.grid is None

    def _combine(self, other: "StructureFunction", sign: float) -> "StructureFunction":
        if len(self.sphere) != len(other.sphere) or not np.array_equal(self.sphere.nodes, other.sphere.nodes):
            raise GridMismatch("structure functions use different sphere rules")

        def merge(a, b):
            if a is None and b is None:
                return None
            if b is None:
                return a
            if a is None:
                return type(b)(*_fields(b)[:-1], sign * b.density)
            return a.combine(b, sign)

        return StructureFunction(
            self.sphere, merge(self.line, other.line), merge(self.grid, other.grid), self.epsilon, self.constant
        )

    def __add__(self, other: "StructureFunction") -> "StructureFunction":
        return self._combine(other, 1.0)

    def __sub__(self, other: "StructureFunction") -> "StructureFunction":
        return self._combine(other, -1.0)

    def scaled(self, factor: complex) -> "StructureFunction":
        line = None if self.line is None else LinePart(self.line.r_grid, self.line.damping, factor * self.line.density)
        grid = None if self.grid is None else GridPart(self.grid.y_grid, self.grid.x_omega, factor * self.grid.density)
        return StructureFunction(self.sphere, line, grid, self.epsilon, self.constant, dict(self.info))

    def weights_at(self, x: np.ndarray, index: int) -> tuple[np.ndarray, np.ndarray]:
        """Line and grid weights of the omega-term at x; they depend on x only through x.omega."""
        xw = float(np.dot(np.asarray(x, dtype=float), self.sphere.nodes[index]))
        line = np.zeros(0, dtype=np.complex128)
        grid = np.zeros(0, dtype=np.complex128)
        if self.line is not None:
            r = self.line.r_grid.values
            rho = r + 2.0 * xw
            dens = _interp_damping(self.line.density[:, index, :], self.line.damping, rho)
            line = np.where(rho > 0, dens, 0.0)
        if self.grid is not None:
            coef = _node_weights(self.grid.x_omega, np.array([xw]))
            grid = sum(c[0] * self.grid.density[index, j] for j, c in coef.items())
        return line, grid


def _fields(part: LinePart | GridPart) -> tuple:
    if isinstance(part, LinePart):
        return (part.r_grid, part.damping, part.density)
    return (part.y_grid, part.x_omega, part.density)


def _node_weights(nodes: np.ndarray, values: np.ndarray) -> dict[int, np.ndarray]:
    """Hat-function weights of a 1-D grid at the given values (clamped to the end nodes)."""
    step = nodes[1] - nodes[0]
    t = np.clip((values - nodes[0]) / step, 0.0, len(nodes) - 1.0)
    j0 = np.minimum(np.floor(t).astype(int), len(nodes) - 2)
    frac = t - j0
    out: dict[int, np.ndarray] = {}
    for j in np.unique(np.concatenate([j0, j0 + 1])):
        c = np.where(j0 == j, 1.0 - frac, 0.0) + np.where(j0 + 1 == j, frac, 0.0)
        if np.any(c):
            out[int(j)] = c
    return out


def g1(
    pot: Potential,
    sphere: SphereQuadrature,
    r_grid: RGrid,
    epsilon: float = 0.0,
    constant: complex = K1_CONSTANT,
    damping: Sequence[float] | None = None,
) -> StructureFunction:
    """First Born structure measure: density const * L on the lines r omega."""
    if pot.is_zero:
        return StructureFunction.empty(sphere, epsilon)
    table = l_table(pot, r_grid, sphere, epsilon, damping)
    line = LinePart(r_grid, table.damping, constant * table.values)
    return StructureFunction(sphere, line, None, epsilon, constant)


def _apply_line(g: StructureFunction, f: ScalarField) -> np.ndarray:
    line = g.line
    pts = f.grid.points()
    r = line.r_grid.values
    scale = np.abs(line.density).max(initial=0.0)

    def term(i: int) -> np.ndarray:
        omega = g.sphere.nodes[i]
        xw = pts @ omega
        base = pts - 2.0 * xw[:, None] * omega
        dens = line.density[:, i, :]
        keep = np.flatnonzero(np.abs(dens).max(axis=1) > LINE_TRIM * scale)
        acc = np.zeros(len(pts), dtype=np.complex128)
        for start in range(0, len(keep), LINE_CHUNK):
            ks = keep[start : start + LINE_CHUNK]
            rho = r[ks, None] + 2.0 * xw[None, :]
            weight = _interp_damping(dens[ks], line.damping, rho) if len(line.damping) > 1 else dens[ks, :1]
            weight = np.where(rho > 0, weight, 0.0)
            samples = interpolate(f, base[None, :, :] - r[ks, None, None] * omega[None, None, :])
            acc += np.sum(weight * samples, axis=0)
        return g.sphere.weights[i] * line.r_grid.dr * acc

    return sum(parallel_map(term, range(len(g.sphere))))


def _apply_grid(g: StructureFunction, f: ScalarField) -> np.ndarray:
    part = g.grid
    if abs(part.y_grid.spacing - f.grid.spacing) > 1e-12 * f.grid.spacing:
        raise GridMismatch(
            "the y grid of h must share the spacing of the field",
            y_spacing=part.y_grid.spacing,
            x_spacing=f.grid.spacing,
        )
    pts = f.grid.points()
    n, ny = f.grid.n_per_axis, part.y_grid.n_per_axis
    o = ny // 2
    vol = part.y_grid.cell_volume

    def term(i: int) -> np.ndarray:
        omega = g.sphere.nodes[i]
        xw = pts @ omega
        base = pts - 2.0 * xw[:, None] * omega
        acc = np.zeros(len(pts), dtype=np.complex128)
        for j, coef in _node_weights(part.x_omega, xw).items():
            h = part.density[i, j].reshape(part.y_grid.shape) * vol
            if not np.any(h):
                continue
            conv = fftconvolve(f.values, h, mode="full")[o : o + n, o : o + n, o : o + n]
            acc += coef * interpolate(ScalarField(f.grid, conv), base)
        return g.sphere.weights[i] * acc

    return sum(parallel_map(term, range(len(g.sphere))))


def apply_g(g: StructureFunction, f: ScalarField) -> ScalarField:
    """int_{S^2} int g(x, dy, omega) f(S_omega x - y) domega (without the identity term)."""
    out = np.zeros(f.grid.size, dtype=np.complex128)
    if g.line is not None:
        out += _apply_line(g, f)
    if g.grid is not None:
        out += _apply_grid(g, f)
    return ScalarField(f.grid, out)


@dataclass(frozen=True)
class StructureGrids:
    """Discretization of the h accumulation."""

    kernel: Grid3 = Grid3(8, 4.0)
    eta_nodes: int = 9
    y: Grid3 = Grid3(16, 8.0)
    r: RGrid = RGrid()
    x_omega_nodes: int = 48
    x_box: float = 16.0
    damping_resolution: float = DAMPING_RESOLUTION

    def __post_init__(self):
        if self.x_omega_nodes < 2:
            raise DomainError("x_omega grid needs at least 2 nodes", n=self.x_omega_nodes)

    @property
    def eta(self) -> EtaGrid:
        return EtaGrid.for_grid(self.kernel, self.eta_nodes)

    @property
    def half_diagonal(self) -> float:
        return 0.5 * math.sqrt(3.0) * self.x_box

    def x_omega(self) -> np.ndarray:
        return np.linspace(-self.half_diagonal, self.half_diagonal, self.x_omega_nodes)

    def damping(self, epsilon: float) -> np.ndarray:
        return default_damping(epsilon, self.r.r_max + 2.0 * self.half_diagonal, self.damping_resolution)


def _cic_matrix(grid: Grid3, positions: np.ndarray) -> tuple[sparse.csr_matrix, np.ndarray]:
    """Trilinear deposit of unit atoms onto grid points; also the lost fraction per atom."""
    t = grid.to_index(positions)
    i0 = np.floor(t).astype(int)
    frac = t - i0
    n = grid.n_per_axis
    rows, cols, data = [], [], []
    atoms = np.arange(len(positions))
    for corner in itertools.product((0, 1), repeat=3):
        c = np.asarray(corner)
        idx = i0 + c
        wgt = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=1)
        ok = np.all((idx >= 0) & (idx < n), axis=1)
        rows.append(np.ravel_multi_index(tuple(idx[ok].T), grid.shape))
        cols.append(atoms[ok])
        data.append(wgt[ok])
    p = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(grid.size, len(positions))
    ).tocsr()
    lost = 1.0 - np.asarray(p.sum(axis=0)).ravel()
    return p, lost


def _boundary_fraction(source: ContractionKernel) -> float:
    """Share of sum_y sup_x |K| carried by the outermost shell of the y lattice."""
    total = xinf_l1_norm(source)
    if total == 0.0:
        return 0.0
    edge = 0.5 * (source.eta.n_per_axis - 1) * source.eta.y_spacing
    shell = np.any(np.abs(np.abs(source.eta.y_points) - edge) < 1e-9 * edge, axis=1)
    return float(source.eta.y_cell_volume * np.abs(source.values[:, shell]).max(axis=0, initial=0.0).sum() / total)


def accumulate_h(
    pot: Potential,
    source: ContractionKernel,
    sphere: SphereQuadrature,
    grids: StructureGrids,
    epsilon: float = 0.0,
    constant: complex = K1_CONSTANT,
) -> StructureFunction:
    """h(x, dy, omega) = int dy' g1[V F(., y')](x, d(y - y'), omega) for a kernel F.

    Each atom y' of the source carries the first Born measure of the modified
    potential U = V F(., y'); U^ comes from a discrete transform of the sampled
    product and the resulting lines r omega are shifted by y'. The eps damping
    is evaluated exactly at every distance r + 2 x_omega of the x_omega grid.
    """
    kgrid = source.grid
    v = sample_potential(pot, kgrid).values.real.ravel()
    masses = v[:, None] * source.values * kgrid.cell_volume
    y_grid = grids.y
    x_omega = grids.x_omega()
    r = grids.r.values
    dr = grids.r.dr
    yprime = source.eta.y_points
    dy3 = source.eta.y_cell_volume
    if not np.any(masses):
        empty = np.zeros((len(sphere), len(x_omega), y_grid.size), dtype=np.complex128)
        return StructureFunction(sphere, None, GridPart(y_grid, x_omega, empty), epsilon, constant)
    s, w = s_quadrature(kgrid.nyquist, grids.r.r_max)
    kpts = kgrid.points()

    phase = np.exp(0.5j * np.outer(r, s)) * (w * s)[None, :]

    def per_omega(i: int) -> tuple[np.ndarray, float, float]:
        omega = sphere.nodes[i]
        uhat = nonuniform_transform(kpts, masses, -s[:, None] * omega[None, :])
        undamped = phase @ uhat
        mags = np.abs(undamped).max(axis=1)
        keep = np.flatnonzero(mags > LINE_TRIM * mags.max(initial=0.0))
        h = np.zeros((len(x_omega), y_grid.size), dtype=np.complex128)
        if keep.size == 0:
            return h, 0.0, 0.0
        atoms = yprime[None, :, :] + r[keep, None, None] * omega[None, None, :]
        p, lost = _cic_matrix(y_grid, atoms.reshape(-1, 3))
        base = np.abs(undamped[keep]).ravel()
        scale = constant * dr * dy3 / y_grid.cell_volume
        for j, xw in enumerate(x_omega):
            rho = r[keep] + 2.0 * xw
            live = rho > 0
            if not np.any(live):
                continue
            wts = np.zeros((len(keep), len(yprime)), dtype=np.complex128)
            if epsilon:
                damp = np.exp(-epsilon * np.outer(rho[live], 0.5 / s))
                wts[live] = (phase[keep[live]] * damp) @ uhat
            else:
                wts[live] = undamped[keep[live]]
            h[j] = p @ (scale * wts.ravel())
        return h, float(np.sum(base * lost)), float(np.sum(base))

    results = parallel_map(per_omega, range(len(sphere)))
    density = np.stack([h for h, _, _ in results])
    lost = sum(a for _, a, _ in results)
    total = sum(b for _, _, b in results)
    dropped = lost / total if total else 0.0
    truncated = _boundary_fraction(source)
    for name, value in (("dropped_mass", dropped), ("truncated_mass", truncated)):
        if value > DROPPED_MASS_LIMIT:
            LOG.warning("h accumulation: %s %.2f%% exceeds %.0f%%", name, 100 * value, 100 * DROPPED_MASS_LIMIT)
    info = {"dropped_mass": dropped, "truncated_mass": truncated}
    return StructureFunction(sphere, None, GridPart(y_grid, x_omega, density), epsilon, constant, info)


def born_source(t1_power, n: int) -> ContractionKernel:
    """Kernel C_n of the n-th Born term, W_n f(x) = int C_n(x, y) f(x - y) dy."""
    return contract(None, t1_power).scaled((-1.0) ** n)


def born_g_n(
    pot: Potential,
    n: int,
    sphere: SphereQuadrature,
    grids: StructureGrids,
    epsilon: float = 0.0,
    constant: complex = K1_CONSTANT,
) -> StructureFunction:
    """Structure measure of the n-th Born term (n = 1 gives g1)."""
    if n < 1:
        raise DomainError(f"Born order must be positive, got {n}")
    if n == 1:
        return g1(pot, sphere, grids.r, epsilon, constant, grids.damping(epsilon))
    if pot.is_zero:
        return StructureFunction.empty(sphere, epsilon)
    t1 = t1_plus(pot, grids.kernel, grids.eta, epsilon)
    source = born_source(power(t1, n - 1), n - 1)
    return accumulate_h(pot, source, sphere, grids, epsilon, constant)


def structure_norm(g: StructureFunction) -> float:
    """int_{S^2} ||g(x, dy, omega)||_{M_y L^inf_x} domega."""
    total = 0.0
    w = g.sphere.weights
    if g.line is not None:
        per = np.abs(g.line.density).max(axis=2).sum(axis=0) * g.line.r_grid.dr
        total += float(np.dot(w, per))
    if g.grid is not None:
        per = np.abs(g.grid.density).max(axis=1).sum(axis=1) * g.grid.y_grid.cell_volume
        total += float(np.dot(w, per))
    return total


def omega_norm_table(g: StructureFunction) -> list[tuple]:
    """Per-direction rows (index, omega, weight, line norm, grid norm)."""
    rows = []
    for i, (omega, weight) in enumerate(zip(g.sphere.nodes, g.sphere.weights)):
        line = 0.0 if g.line is None else float(np.abs(g.line.density[:, i, :]).max(axis=1).sum() * g.line.r_grid.dr)
        grid = 0.0
        if g.grid is not None:
            grid = float(np.abs(g.grid.density[i]).max(axis=0).sum() * g.grid.y_grid.cell_volume)
        rows.append((i, *omega.tolist(), float(weight), line, grid))
    return rows


def x_omega_regularity(g: StructureFunction) -> float:
    """Total variation of g in x_omega, measure-summed in y and integrated in omega.

    On a line the indicator 1[r > -2 x.omega] switches once, a unit jump of
    size |density| at rho = 0; the damping stack adds its variation in rho.
    """
    total = 0.0
    w = g.sphere.weights
    if g.line is not None:
        dens = g.line.density
        jump = np.abs(dens[:, :, 0]) + np.abs(np.diff(dens, axis=2)).sum(axis=2)
        total += float(np.dot(w, jump.sum(axis=0) * g.line.r_grid.dr))
    if g.grid is not None:
        tv = np.abs(np.diff(g.grid.density, axis=1)).sum(axis=(1, 2)) * g.grid.y_grid.cell_volume
        total += float(np.dot(w, tv))
    return total


def full_g(
    pot: Potential,
    sphere: SphereQuadrature,
    grids: StructureGrids,
    epsilon: float = 0.0,
    method: Method = "resolvent",
    born_order: int = 4,
    constant: complex = K1_CONSTANT,
) -> StructureFunction:
    """g = g1 + h for W+ - I.

    ``resolvent``: h from X+ = -(1 T+) with T+ per eta by dense solves.
    ``born_sum``: g1 + g2 + ... + g_order, with a geometric tail bound from
    the ratio of the last two structure norms.

    Raises:
        NotRegular: zero energy is not regular (resolvent path).
        BornDivergent: the fitted Born ratio is >= 1.
    """
    if pot.is_zero:
        return StructureFunction.empty(sphere, epsilon)
    first = g1(pot, sphere, grids.r, epsilon, constant, grids.damping(epsilon))
    if method == "resolvent":
        tp = t_plus(pot, grids.kernel, grids.eta, epsilon)
        source = contract(None, tp).scaled(-1.0)
        h = accumulate_h(pot, source, sphere, grids, epsilon, constant)
        out = first + h
        info = dict(h.info, method=method, xinf_l1=xinf_l1_norm(source))
        return StructureFunction(out.sphere, out.line, out.grid, epsilon, constant, info)
    if method != "born_sum":
        raise DomainError(f"unknown full_g method {method!r}")
    t1 = t1_plus(pot, grids.kernel, grids.eta, epsilon).materialize()
    out = first
    norms = [structure_norm(first)]
    info: dict = {"method": method}
    for n in range(2, born_order + 1):
        term = accumulate_h(pot, born_source(power(t1, n - 1), n - 1), sphere, grids, epsilon, constant)
        norms.append(structure_norm(term))
        out = out + term
        info.update({f"g{n}_{k}": v for k, v in term.info.items()})
        LOG.info("Born term %d: structure norm %.4g", n, norms[-1])
    ratio = norms[-1] / norms[-2] if len(norms) > 1 and norms[-2] > 0 else 0.0
    if ratio >= 1.0:
        raise BornDivergent(f"Born ratio {ratio:.3g} >= 1", ratio=ratio, norms=norms)
    info.update(born_norms=norms, ratio=ratio, tail_bound=norms[-1] * ratio / (1.0 - ratio))
    return StructureFunction(out.sphere, out.line, out.grid, epsilon, constant, info)


def structure_epsilon_sweep(
    pot: Potential,
    sphere: SphereQuadrature,
    grids: StructureGrids,
    epsilons: Sequence[float],
    method: Method = "born_sum",
    born_order: int = 2,
) -> EpsilonSweep:
    """structure_norm of successive differences along an eps schedule."""
    gs = [full_g(pot, sphere, grids, e, method, born_order) for e in epsilons]
    diffs = tuple(structure_norm(b - a) for a, b in zip(gs, gs[1:]))
    decreasing = all(d2 <= d1 * (1 + 1e-12) for d1, d2 in zip(diffs, diffs[1:]))
    return EpsilonSweep(tuple(epsilons), diffs, decreasing)


def calibrate_k1_constant(
    pot: Potential,
    f: ScalarField,
    cfg: EvolutionConfig,
    sphere: SphereQuadrature,
    r_grid: RGrid,
) -> complex:
    """Least-squares const with const * apply_g(g1 at const 1, f) ~ time-domain W_1 f.

    Both sides use the horizon-matched eps of ``cfg``.
    """
    cfg = cfg.horizon_matched()
    unit = g1(pot, sphere, r_grid, cfg.eps_reg, 1.0, default_damping(cfg.eps_reg, 3.0 * r_grid.r_max))
    a = apply_g(unit, f).values.ravel()
    b = born_term_time(f, pot, 1, cfg).values.ravel()
    den = np.vdot(a, a)
    if den == 0:
        raise DomainError("first Born structure term vanishes on the probe; cannot calibrate")
    c = complex(np.vdot(a, b) / den)
    LOG.info("calibrated K1 constant %s (closed form %s)", c, K1_CONSTANT)
    return c


def save_structure(g: StructureFunction, path: Path) -> Path:
    """Write ``<path>.json`` plus ``.line.wopf`` / ``.grid.wopf`` side files."""
    path = Path(path)
    stem = path.with_suffix("")
    manifest: dict = {
        "format": STRUCTURE_FORMAT,
        "version": 1,
        "sphere": {"nodes": g.sphere.nodes, "weights": g.sphere.weights, "degree": g.sphere.degree},
        "epsilon": g.epsilon,
        "constant": g.constant,
        "info": g.info,
        "line": None,
        "grid": None,
    }
    if g.line is not None:
        name = stem.name + ".line.wopf"
        write_array(stem.parent / name, g.line.density)
        manifest["line"] = {
            "r": {"n": g.line.r_grid.n, "r_max": g.line.r_grid.r_max},
            "damping": g.line.damping,
            "shape": list(g.line.density.shape),
            "file": name,
        }
    if g.grid is not None:
        name = stem.name + ".grid.wopf"
        write_array(stem.parent / name, g.grid.density)
        manifest["grid"] = {
            "y": {"n": g.grid.y_grid.n_per_axis, "box": g.grid.y_grid.box_length},
            "x_omega": g.grid.x_omega,
            "shape": list(g.grid.density.shape),
            "file": name,
        }
    target = stem.with_suffix(".json")
    write_json(target, manifest)
    return target


def _complex(value) -> complex:
    if isinstance(value, dict):
        return complex(float(value["re"]), float(value["im"]))
    return complex(value)


def load_structure(path: Path) -> StructureFunction:
    """Read a structure function written by ``save_structure``."""
    path = Path(path)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        LOG.error("Malformed structure manifest %s: %s", path, e)
        raise FieldFormatError(f"{path} is not a valid structure manifest", path=str(path)) from e
    if manifest.get("format") != STRUCTURE_FORMAT:
        raise FieldFormatError(f"{path} is not a structure manifest", path=str(path))
    sph = manifest["sphere"]
    sphere = SphereQuadrature(np.asarray(sph["nodes"]), np.asarray(sph["weights"]), int(sph["degree"]))
    line = grid = None
    if manifest["line"] is not None:
        m = manifest["line"]
        dens = read_array(path.parent / m["file"], m["shape"])
        line = LinePart(RGrid(m["r"]["n"], m["r"]["r_max"]), np.asarray(m["damping"], dtype=float), dens)
    if manifest["grid"] is not None:
        m = manifest["grid"]
        dens = read_array(path.parent / m["file"], m["shape"])
        grid = GridPart(Grid3(m["y"]["n"], m["y"]["box"]), np.asarray(m["x_omega"], dtype=float), dens)
    return StructureFunction(
        sphere, line, grid, float(manifest["epsilon"]), _complex(manifest["constant"]), manifest.get("info") or {}
    )
