"""Grids, fields, potentials, Fourier transforms and function-space norms.

Fourier convention used throughout the package:

    forward   f^(xi) = integral f(x) exp(-i x.xi) dx
    inverse   f(x)   = (2 pi)^-3 integral f^(xi) exp(i x.xi) dxi

Field values are stored as ``(n, n, n)`` arrays indexed ``[ix, iy, iz]``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Literal, Union

import numpy as np
from scipy import fft as sfft
from scipy.ndimage import map_coordinates
from scipy.special import roots_legendre

from .errors import DomainError, GridMismatch, TailTooLarge, UnresolvedPotential, UnsupportedOrder

LOG = logging.getLogger("waveop.fields")

TAIL_LIMIT = 0.01
SPHERE_WEIGHT_TOL = 1e-12
NUDFT_BLOCK_ENTRIES = 1 << 22

Direction = Literal["forward", "inverse"]


@dataclass(frozen=True)
class Grid3:
    """Periodic uniform grid on the box [-L/2, L/2)^3."""

    n_per_axis: int
    box_length: float

    def __post_init__(self):
        n = self.n_per_axis
        if n < 2 or n & (n - 1):
            raise DomainError(f"n_per_axis must be a power of two >= 2, got {n}", n_per_axis=n)
        if not self.box_length > 0:
            raise DomainError("box_length must be positive", box_length=self.box_length)

    @property
    def spacing(self) -> float:
        return self.box_length / self.n_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing**3

    @property
    def size(self) -> int:
        return self.n_per_axis**3

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_per_axis,) * 3

    @property
    def dual_spacing(self) -> float:
        return 2.0 * math.pi / self.box_length

    @property
    def nyquist(self) -> float:
        """Largest resolved frequency, pi / spacing."""
        return math.pi / self.spacing

    def axis(self) -> np.ndarray:
        return -0.5 * self.box_length + self.spacing * np.arange(self.n_per_axis)

    def frequency_axis(self) -> np.ndarray:
        k = np.arange(self.n_per_axis) - self.n_per_axis // 2
        return self.dual_spacing * k

    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a = self.axis()
        return tuple(np.meshgrid(a, a, a, indexing="ij"))

    def points(self) -> np.ndarray:
        """Grid points as an ``(n^3, 3)`` array in C order of ``[ix, iy, iz]``."""
        return np.stack(self.coordinates(), axis=-1).reshape(-1, 3)

    def radii(self) -> np.ndarray:
        x, y, z = self.coordinates()
        return np.sqrt(x * x + y * y + z * z)

    def frequencies(self) -> np.ndarray:
        k = self.frequency_axis()
        return np.stack(np.meshgrid(k, k, k, indexing="ij"), axis=-1)

    def to_index(self, points: np.ndarray) -> np.ndarray:
        """Fractional array indices of physical points (last axis = 3)."""
        return (np.asarray(points) + 0.5 * self.box_length) / self.spacing


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Complex values on the points of a Grid3 (or of its dual grid)."""

    grid: Grid3
    values: np.ndarray
    domain: Literal["position", "frequency"] = "position"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.size != self.grid.size:
            raise GridMismatch(
                f"field has {values.size} values, grid needs {self.grid.size}",
                values=values.size,
                grid=self.grid.size,
            )
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise DomainError("field values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid3) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    @classmethod
    def from_function(cls, grid: Grid3, func: Callable[[np.ndarray], np.ndarray]) -> "ScalarField":
        """Sample ``func(points)`` with points of shape ``(n, n, n, 3)``."""
        pts = np.stack(grid.coordinates(), axis=-1)
        return cls(grid, func(pts))

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values, self.domain)

    def check_grid(self, other: "ScalarField") -> None:
        if self.grid != other.grid:
            raise GridMismatch("fields live on different grids", left=str(self.grid), right=str(other.grid))

    def __add__(self, other: "ScalarField") -> "ScalarField":
        self.check_grid(other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        self.check_grid(other)
        return self.with_values(self.values - other.values)

    def scaled(self, factor: complex) -> "ScalarField":
        return self.with_values(factor * self.values)

    def conj(self) -> "ScalarField":
        return self.with_values(np.conj(self.values))

    def _measure(self) -> float:
        if self.domain == "frequency":
            return (self.grid.dual_spacing / (2.0 * math.pi)) ** 3
        return self.grid.cell_volume

    def lp_norm(self, p: float = 2.0) -> float:
        """Continuum L^p norm (p = inf gives the grid max-norm)."""
        mod = np.abs(self.values)
        if math.isinf(p):
            return float(mod.max(initial=0.0))
        return float((self._measure() * np.sum(mod**p)) ** (1.0 / p))

    def l2_norm(self) -> float:
        return self.lp_norm(2.0)

    def l1_norm(self) -> float:
        return self.lp_norm(1.0)

    def inner(self, other: "ScalarField") -> complex:
        """<self, other>, linear in the second slot."""
        self.check_grid(other)
        return complex(self._measure() * np.vdot(self.values, other.values))


@dataclass(frozen=True)
class GaussianMixture:
    """V(x) = sum_j a_j exp(-|x - c_j|^2 / (2 w_j^2))."""

    amplitudes: tuple[float, ...] = ()
    centers: tuple[tuple[float, float, float], ...] = ()
    widths: tuple[float, ...] = ()

    def __post_init__(self):
        amps = tuple(float(a) for a in self.amplitudes)
        widths = tuple(float(w) for w in self.widths)
        if self.centers:
            centers = tuple(tuple(float(c) for c in center) for center in self.centers)
        else:
            centers = tuple((0.0, 0.0, 0.0) for _ in amps)
        if not len(amps) == len(widths) == len(centers):
            raise DomainError(
                "amplitudes, centers and widths must have equal length",
                amplitudes=len(amps),
                centers=len(centers),
                widths=len(widths),
            )
        if any(len(c) != 3 for c in centers):
            raise DomainError("centers must be points of R^3")
        if any(not w > 0 for w in widths):
            raise DomainError("widths must be positive", widths=widths)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "widths", widths)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        out = np.zeros(points.shape[:-1])
        for a, c, w in zip(self.amplitudes, self.centers, self.widths):
            d2 = np.sum((points - np.asarray(c)) ** 2, axis=-1)
            out += a * np.exp(-d2 / (2.0 * w * w))
        return out

    def fourier(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        s2 = np.sum(xi * xi, axis=-1)
        out = np.zeros(xi.shape[:-1], dtype=np.complex128)
        for a, c, w in zip(self.amplitudes, self.centers, self.widths):
            phase = np.exp(-1j * (xi @ np.asarray(c)))
            out += a * (2.0 * math.pi) ** 1.5 * w**3 * np.exp(-0.5 * w * w * s2) * phase
        return out


@dataclass(frozen=True)
class Tabulated:
    """Potential given by its samples on a grid."""

    field: ScalarField

    def __post_init__(self):
        if np.any(self.field.values.imag != 0.0):
            raise DomainError("tabulated potentials must be real-valued")

    def fourier(self, xi: np.ndarray) -> np.ndarray:
        grid = self.field.grid
        return nonuniform_transform(grid.points(), self.field.values.reshape(-1) * grid.cell_volume, xi)


@dataclass(frozen=True)
class Potential:
    """Real potential V, either an analytic Gaussian mixture or a sampled table."""

    kind: Union[GaussianMixture, Tabulated] = field(default_factory=GaussianMixture)
    beta: float | None = None
    real_valued: bool = True

    def __post_init__(self):
        if not self.real_valued:
            raise DomainError("only real-valued potentials are supported")

    @classmethod
    def zero(cls) -> "Potential":
        return cls(GaussianMixture())

    @classmethod
    def gaussian(
        cls,
        amplitude: float,
        width: float,
        center: tuple[float, float, float] = (0.0, 0.0, 0.0),
        beta: float | None = None,
    ) -> "Potential":
        return cls(GaussianMixture((amplitude,), (tuple(center),), (width,)), beta=beta)

    @classmethod
    def mixture(cls, amplitudes, centers, widths, beta: float | None = None) -> "Potential":
        return cls(GaussianMixture(tuple(amplitudes), tuple(map(tuple, centers)), tuple(widths)), beta=beta)

    @classmethod
    def tabulated(cls, f: ScalarField, beta: float | None = None) -> "Potential":
        return cls(Tabulated(f), beta=beta)

    @property
    def is_zero(self) -> bool:
        if isinstance(self.kind, GaussianMixture):
            return all(a == 0.0 for a in self.kind.amplitudes)
        return not np.any(self.kind.field.values)

    @property
    def is_radial(self) -> bool:
        if isinstance(self.kind, GaussianMixture):
            return all(c == (0.0, 0.0, 0.0) for c in self.kind.centers)
        return False

    @property
    def min_width(self) -> float:
        if isinstance(self.kind, GaussianMixture) and self.kind.widths:
            return min(self.kind.widths)
        return math.inf

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        if isinstance(self.kind, GaussianMixture):
            return self.kind.evaluate(points)
        raise DomainError("pointwise evaluation needs an analytic potential; sample the table instead")

    def fourier(self, xi: np.ndarray) -> np.ndarray:
        """V^(xi) for xi of shape (..., 3)."""
        return self.kind.fourier(xi)

    def scaled(self, factor: float) -> "Potential":
        if isinstance(self.kind, GaussianMixture):
            k = self.kind
            return Potential(GaussianMixture(tuple(factor * a for a in k.amplitudes), k.centers, k.widths), self.beta)
        return Potential(Tabulated(self.kind.field.scaled(factor)), self.beta)

    def __add__(self, other: "Potential") -> "Potential":
        if isinstance(self.kind, GaussianMixture) and isinstance(other.kind, GaussianMixture):
            a, b = self.kind, other.kind
            return Potential(
                GaussianMixture(a.amplitudes + b.amplitudes, a.centers + b.centers, a.widths + b.widths),
                self.beta,
            )
        if isinstance(self.kind, Tabulated) and isinstance(other.kind, Tabulated):
            return Potential(Tabulated(self.kind.field + other.kind.field), self.beta)
        raise DomainError("cannot add an analytic and a tabulated potential")


@dataclass(frozen=True)
class SphereQuadrature:
    """Nodes on S^2 with positive weights summing to 4 pi."""

    nodes: np.ndarray
    weights: np.ndarray
    degree: int

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if abs(weights.sum() - 4.0 * math.pi) > SPHERE_WEIGHT_TOL:
            raise DomainError("sphere weights must sum to 4 pi", total=float(weights.sum()))
        if np.any(weights <= 0):
            raise DomainError("sphere weights must be positive")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.weights)

    def integrate(self, values: np.ndarray) -> float | complex:
        return np.dot(self.weights, values)


def _octahedral_orbit(point: tuple[float, float, float]) -> np.ndarray:
    """All distinct signed permutations of a point."""
    seen = set()
    out = []
    for perm in itertools.permutations(point):
        for signs in itertools.product((1.0, -1.0), repeat=3):
            p = tuple(s * c for s, c in zip(signs, perm))
            key = tuple(round(c, 14) + 0.0 for c in p)
            if key not in seen:
                seen.add(key)
                out.append(p)
    return np.array(out)


# order -> (degree, [(orbit generator, weight as fraction of 4 pi)])
_S2, _S3, _S11 = math.sqrt(0.5), math.sqrt(1.0 / 3.0), math.sqrt(1.0 / 11.0)
_A38 = 0.4597008433809831
LEBEDEV_RULES = {
    6: (3, [((1.0, 0.0, 0.0), Fraction(1, 6))]),
    14: (5, [((1.0, 0.0, 0.0), Fraction(1, 15)), ((_S3, _S3, _S3), Fraction(3, 40))]),
    26: (
        7,
        [
            ((1.0, 0.0, 0.0), Fraction(1, 21)),
            ((_S2, _S2, 0.0), Fraction(4, 105)),
            ((_S3, _S3, _S3), Fraction(9, 280)),
        ],
    ),
    38: (
        9,
        [
            ((1.0, 0.0, 0.0), Fraction(1, 105)),
            ((_S3, _S3, _S3), Fraction(9, 280)),
            ((_A38, math.sqrt(1.0 - _A38 * _A38), 0.0), Fraction(1, 35)),
        ],
    ),
    50: (
        11,
        [
            ((1.0, 0.0, 0.0), Fraction(4, 315)),
            ((_S2, _S2, 0.0), Fraction(64, 2835)),
            ((_S3, _S3, _S3), Fraction(27, 1280)),
            ((_S11, _S11, 3.0 * _S11), Fraction(14641, 725760)),
        ],
    ),
}


def sphere_rule(order: int) -> SphereQuadrature:
    """Quadrature rule on S^2 with ``order`` nodes.

    Lebedev rules for 6, 14, 26, 38 and 50 nodes; for other orders of the form
    2 m^2 a product rule with m Gauss-Legendre nodes in cos(theta) and 2 m
    equally spaced azimuths. Every rule is closed under omega -> -omega.

    Raises:
        UnsupportedOrder: for any other order.
    """
    if order in LEBEDEV_RULES:
        degree, orbits = LEBEDEV_RULES[order]
        nodes, weights = [], []
        for generator, frac in orbits:
            pts = _octahedral_orbit(generator)
            nodes.append(pts)
            weights.append(np.full(len(pts), 4.0 * math.pi * float(frac)))
        nodes = np.vstack(nodes)
        weights = np.concatenate(weights)
        weights *= 4.0 * math.pi / weights.sum()
        return SphereQuadrature(nodes, weights, degree)

    m = math.isqrt(order // 2) if order > 0 else 0
    if m >= 2 and 2 * m * m == order:
        t, wt = roots_legendre(m)
        phi = math.pi * np.arange(2 * m) / m
        st = np.sqrt(1.0 - t * t)
        nodes = np.stack(
            [
                np.outer(st, np.cos(phi)).ravel(),
                np.outer(st, np.sin(phi)).ravel(),
                np.repeat(t, 2 * m),
            ],
            axis=-1,
        )
        weights = np.repeat(wt, 2 * m) * (math.pi / m)
        weights *= 4.0 * math.pi / weights.sum()
        return SphereQuadrature(nodes, weights, 2 * m - 1)

    raise UnsupportedOrder(
        f"no sphere rule with {order} nodes (Lebedev {sorted(LEBEDEV_RULES)} or 2*m^2)", order=order
    )


def coarser_sphere_order(order: int) -> int:
    """Node count of the next smaller rule of the same family.

    Raises:
        UnsupportedOrder: ``order`` is the smallest rule of its family or no rule at all.
    """
    sphere_rule(order)
    if order in LEBEDEV_RULES:
        smaller = [n for n in LEBEDEV_RULES if n < order]
        if smaller:
            return max(smaller)
    else:
        m = math.isqrt(order // 2)
        if m > 2:
            return 2 * (m - 1) ** 2
    raise UnsupportedOrder(f"the {order}-node sphere rule has no coarser neighbour", order=order)


def sample_potential(pot: Potential, grid: Grid3) -> ScalarField:
    """Pointwise samples of V on the grid (real part only).

    Raises:
        UnresolvedPotential: spacing exceeds half the narrowest Gaussian width.
        GridMismatch: a tabulated potential lives on another grid.
    """
    if isinstance(pot.kind, Tabulated):
        if pot.kind.field.grid != grid:
            raise GridMismatch("tabulated potential sampled on a foreign grid")
        return ScalarField(grid, pot.kind.field.values.real.copy())
    if grid.spacing > 0.5 * pot.min_width:
        raise UnresolvedPotential(
            f"grid spacing {grid.spacing:g} exceeds half the narrowest width {pot.min_width:g}",
            spacing=grid.spacing,
            width=pot.min_width,
        )
    pts = np.stack(grid.coordinates(), axis=-1)
    return ScalarField(grid, pot.evaluate(pts))


def _alternating(n: int) -> np.ndarray:
    k = np.arange(n) - n // 2
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    return sign[:, None, None] * sign[None, :, None] * sign[None, None, :]


def fourier_transform(f: ScalarField, direction: Direction = "forward") -> ScalarField:
    """Continuum-normalized discrete Fourier transform.

    Forward carries spacing^3, inverse carries (2 pi)^-3 dual_spacing^3; the
    frequency layout is k in [-n/2, n/2) along each axis.
    """
    grid = f.grid
    sign = _alternating(grid.n_per_axis)
    if direction == "forward":
        spec = sfft.fftshift(sfft.fftn(f.values, workers=-1)) * sign * grid.cell_volume
        return ScalarField(grid, spec, "frequency")
    if direction == "inverse":
        vals = sfft.ifftn(sfft.ifftshift(sign * f.values), workers=-1) / grid.cell_volume
        return ScalarField(grid, vals, "position")
    raise DomainError(f"unknown transform direction {direction!r}")


def nonuniform_transform(points: np.ndarray, masses: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """sum_j masses_j exp(-i xi . x_j) for arbitrary frequencies xi (..., 3).

    ``masses`` may carry a trailing batch axis; the result then gains it too.
    """
    points = np.asarray(points, dtype=float)
    masses = np.asarray(masses)
    keep = np.abs(masses).reshape(len(points), -1).max(axis=1) > 0
    points, masses = points[keep], masses[keep]
    xi = np.asarray(xi, dtype=float)
    flat = xi.reshape(-1, 3)
    out = np.empty((len(flat),) + masses.shape[1:], dtype=np.complex128)
    chunk = max(1, NUDFT_BLOCK_ENTRIES // max(1, len(points)))
    for start in range(0, len(flat), chunk):
        block = flat[start : start + chunk]
        out[start : start + chunk] = np.exp(-1j * (block @ points.T)) @ masses
    return out.reshape(xi.shape[:-1] + masses.shape[1:])


def gaussian_field(
    grid: Grid3,
    width: float,
    center: tuple[float, float, float] = (0.0, 0.0, 0.0),
    amplitude: complex = 1.0,
    momentum: tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> ScalarField:
    """a exp(-|x-c|^2/(2 w^2)) exp(i p.x) sampled on the grid."""
    pts = np.stack(grid.coordinates(), axis=-1)
    d2 = np.sum((pts - np.asarray(center)) ** 2, axis=-1)
    return ScalarField(grid, amplitude * np.exp(-d2 / (2.0 * width * width)) * np.exp(1j * pts @ np.asarray(momentum)))


def interpolate(f: ScalarField, points: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of f at physical points (..., 3); zero outside the box."""
    points = np.asarray(points, dtype=float)
    idx = f.grid.to_index(points.reshape(-1, 3)).T
    re = map_coordinates(f.values.real, idx, order=1, mode="constant", cval=0.0)
    im = map_coordinates(f.values.imag, idx, order=1, mode="constant", cval=0.0)
    return (re + 1j * im).reshape(points.shape[:-1])


@dataclass(frozen=True)
class DyadicShells:
    """Per-shell L^2 norms of a field; shell k is {2^k <= |x| < 2^(k+1)}."""

    ks: np.ndarray
    shell_norms: np.ndarray
    ball_norm: float
    tail_fraction: float


def dyadic_shells(f: ScalarField, check_tail: bool = True) -> DyadicShells:
    """Split a field into the unit ball and dyadic shells inside the box.

    Raises:
        TailTooLarge: more than 1% of the L^2 norm lies outside |x| < box/2
            (only with ``check_tail``).
    """
    grid = f.grid
    r = grid.radii().ravel()
    mass = grid.cell_volume * np.abs(f.values.ravel()) ** 2
    total = float(mass.sum())
    if total == 0.0:
        return DyadicShells(np.array([], dtype=int), np.array([]), 0.0, 0.0)
    inside = r < 0.5 * grid.box_length
    tail = math.sqrt(float(mass[~inside].sum()) / total)
    if check_tail and tail >= TAIL_LIMIT:
        raise TailTooLarge(f"{100 * tail:.2f}% of the L2 norm lies outside the inscribed ball", tail=tail)
    r, mass = r[inside], mass[inside]
    ball = math.sqrt(float(mass[r < 1.0].sum()))
    positive = r > 0
    k = np.floor(np.log2(r[positive])).astype(int)
    ks = np.arange(k.min(), k.max() + 1) if k.size else np.array([], dtype=int)
    shell_mass = np.bincount(k - ks[0], weights=mass[positive], minlength=len(ks)) if k.size else np.array([])
    LOG.debug("dyadic shells %s..%s, dropped tail %.3g", ks[:1], ks[-1:], tail)
    return DyadicShells(ks, np.sqrt(shell_mass), ball, tail)


def b_norm(f: ScalarField, alpha: float, dotted: bool = False, check_tail: bool = True) -> float:
    """Dyadic B^alpha norm (dotted: homogeneous version over all shells).

    Undotted: ||1_{|x|<1} f||_2 + sum_{k>=0} 2^(alpha k) ||1_{A_k} f||_2.
    Dotted:   sum_{k in Z} 2^(alpha k) ||1_{A_k} f||_2.
    """
    shells = dyadic_shells(f, check_tail)
    if shells.ks.size == 0:
        return shells.ball_norm if not dotted else 0.0
    weights = np.exp2(alpha * shells.ks.astype(float))
    if dotted:
        return float(np.sum(weights * shells.shell_norms))
    outer = shells.ks >= 0
    return float(shells.ball_norm + np.sum(weights[outer] * shells.shell_norms[outer]))


def lorentz_norm(f: ScalarField, p: float, q: float) -> float:
    """L^{p,q} norm from the exact decreasing rearrangement of |f|.

    With a_1 >= a_2 >= ... the sorted moduli and t_i = i * cell the
    rearrangement is a step function, so the integral is a finite sum.
    """
    if not 1.0 < p < math.inf:
        raise DomainError("Lorentz exponent p must lie in (1, inf)", p=p)
    if not q >= 1.0:
        raise DomainError("Lorentz exponent q must lie in [1, inf]", q=q)
    a = np.sort(np.abs(f.values.ravel()))[::-1]
    a = a[a > 0]
    if a.size == 0:
        return 0.0
    cell = f._measure()
    t = cell * np.arange(1, a.size + 1, dtype=float)
    if math.isinf(q):
        return float(np.max(a * t ** (1.0 / p)))
    if q == p:
        return float((cell * np.sum(a**p)) ** (1.0 / p))
    r = q / p
    steps = np.diff(np.concatenate(([0.0], t**r)))
    return float((np.sum(a**q * steps) * (p / q)) ** (1.0 / q))
