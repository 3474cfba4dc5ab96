"""Three-variable kernels T(x0, x1, y) in eta-representation.

A kernel is stored through its Fourier transform in y: one matrix per eta
node, indexed ``[x1, x0]`` with the source-cell weight folded in. Slices are
produced on demand by a builder so only a handful of N x N matrices are alive
at any time; ``materialize`` keeps them all for small grids.

Composition in y is multiplication in eta. With A acting first,

    (A * B)^(eta) = B^(eta) @ A^(eta)

and the adjoined identity delta_0(y) delta(x1 - x0) is tracked as a scalar
coefficient next to the builder.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DomainError, GridMismatch, NotRegular
from .fields import Grid3, Potential, ScalarField, b_norm, gaussian_field, interpolate, sample_potential
from .parallel import parallel_map
from .resolvent import Side, SpectralPoint, free_resolvent_matrix, invert_identity_plus, zero_energy_check

LOG = logging.getLogger("waveop.kernelalg")

MAX_BORN_ORDER = 4
PROBE_COUNT = 12

SliceBuilder = Callable[[int], np.ndarray]


@dataclass(frozen=True)
class EtaGrid:
    """Symmetric lattice of eta nodes with |eta_i| <= eta_max on each axis.

    The dual y lattice has spacing 2 pi / (n d_eta), so the inverse transform
    eta -> y is an exact shifted DFT. An odd node count puts y = 0 on the lattice.
    """

    n_per_axis: int = 9
    eta_max: float = math.pi

    def __post_init__(self):
        n = self.n_per_axis
        if n < 3 or n % 2 == 0:
            raise DomainError(f"eta grid needs an odd node count >= 3, got {n}", n_per_axis=n)
        if not self.eta_max > 0:
            raise DomainError("eta_max must be positive", eta_max=self.eta_max)

    @classmethod
    def for_grid(cls, grid: Grid3, n_per_axis: int = 9) -> "EtaGrid":
        """eta_max = pi / (2 spacing) of the kernel grid."""
        return cls(n_per_axis, 0.5 * grid.nyquist)

    @property
    def spacing(self) -> float:
        return 2.0 * self.eta_max / (self.n_per_axis - 1)

    @property
    def size(self) -> int:
        return self.n_per_axis**3

    @property
    def y_spacing(self) -> float:
        return 2.0 * math.pi / (self.n_per_axis * self.spacing)

    @property
    def y_cell_volume(self) -> float:
        return self.y_spacing**3

    def __len__(self) -> int:
        return self.size

    def _offsets(self) -> np.ndarray:
        return np.arange(self.n_per_axis) - 0.5 * (self.n_per_axis - 1)

    def axis(self) -> np.ndarray:
        return self._offsets() * self.spacing

    def y_axis(self) -> np.ndarray:
        return self._offsets() * self.y_spacing

    @cached_property
    def nodes(self) -> np.ndarray:
        """eta nodes as an ``(n^3, 3)`` array in C order."""
        a = self.axis()
        return np.stack(np.meshgrid(a, a, a, indexing="ij"), axis=-1).reshape(-1, 3)

    @cached_property
    def y_points(self) -> np.ndarray:
        a = self.y_axis()
        return np.stack(np.meshgrid(a, a, a, indexing="ij"), axis=-1).reshape(-1, 3)

    def index(self, i: int, j: int, k: int) -> int:
        n = self.n_per_axis
        return (i * n + j) * n + k

    def to_y(self, hat: np.ndarray) -> np.ndarray:
        """(2 pi)^-3 sum_eta d_eta^3 exp(i eta.y) hat(eta) along the leading axis."""
        n = self.n_per_axis
        a, y = self.axis(), self.y_axis()
        p = np.exp(1j * np.outer(y, a)) * (self.spacing / (2.0 * math.pi))
        arr = np.asarray(hat).reshape((n, n, n) + hat.shape[1:])
        return np.einsum("aj,bk,cl,jkl...->abc...", p, p, p, arr).reshape(hat.shape)

    def to_eta(self, values: np.ndarray) -> np.ndarray:
        """sum_y d_y^3 exp(-i eta.y) values(y) along the leading axis; inverse of ``to_y``."""
        n = self.n_per_axis
        a, y = self.axis(), self.y_axis()
        q = np.exp(-1j * np.outer(a, y)) * self.y_spacing
        arr = np.asarray(values).reshape((n, n, n) + values.shape[1:])
        return np.einsum("ja,kb,lc,abc...->jkl...", q, q, q, arr).reshape(values.shape)

    def lines(self) -> list[list[int]]:
        """Node indices along every axis-parallel line of the lattice."""
        n = self.n_per_axis
        out = []
        for a in range(n):
            for b in range(n):
                out.append([self.index(c, a, b) for c in range(n)])
                out.append([self.index(a, c, b) for c in range(n)])
                out.append([self.index(a, b, c) for c in range(n)])
        return out


@dataclass(frozen=True, eq=False)
class EtaKernel:
    """c I + T in eta-representation.

    ``builder(i)`` returns the ``[x1, x0]`` matrix of T^(eta_i); ``None``
    means T = 0. ``identity`` is the coefficient c of the adjoined identity.
    """

    grid: Grid3
    eta: EtaGrid
    builder: SliceBuilder | None = None
    identity: complex = 0.0
    label: str = "T"

    @classmethod
    def unit(cls, grid: Grid3, eta: EtaGrid) -> "EtaKernel":
        return cls(grid, eta, None, 1.0, "I")

    @classmethod
    def zero(cls, grid: Grid3, eta: EtaGrid, label: str = "0") -> "EtaKernel":
        return cls(grid, eta, None, 0.0, label)

    def __len__(self) -> int:
        return self.eta.size

    @property
    def is_zero(self) -> bool:
        return self.builder is None and self.identity == 0

    def slice(self, index: int) -> np.ndarray:
        """Regular part T^(eta_index), without the identity."""
        if self.builder is None:
            return np.zeros((self.grid.size, self.grid.size), dtype=np.complex128)
        return self.builder(index)

    def full_slice(self, index: int) -> np.ndarray:
        m = self.slice(index)
        if self.identity:
            m = m + self.identity * np.eye(self.grid.size)
        return m

    def _check(self, other: "EtaKernel") -> None:
        if self.grid != other.grid or self.eta != other.eta:
            raise GridMismatch("kernels live on different grids", left=self.label, right=other.label)

    def scaled(self, factor: complex) -> "EtaKernel":
        build = self.builder
        if build is None:
            return EtaKernel(self.grid, self.eta, None, factor * self.identity, self.label)
        return EtaKernel(self.grid, self.eta, lambda i: factor * build(i), factor * self.identity, self.label)

    def __neg__(self) -> "EtaKernel":
        return self.scaled(-1.0)

    def __add__(self, other: "EtaKernel") -> "EtaKernel":
        self._check(other)
        a, b = self.builder, other.builder
        if a is None or b is None:
            build = a if b is None else b
        else:

            def build(i: int) -> np.ndarray:
                return a(i) + b(i)

        return EtaKernel(self.grid, self.eta, build, self.identity + other.identity, f"{self.label}+{other.label}")

    def __sub__(self, other: "EtaKernel") -> "EtaKernel":
        return self + (-other)

    def materialize(self) -> "EtaKernel":
        """Evaluate every slice once and keep them in memory."""
        if self.builder is None:
            return self
        stack = np.stack(parallel_map(self.slice, range(len(self))))
        return EtaKernel(self.grid, self.eta, stack.__getitem__, self.identity, self.label)


@dataclass(frozen=True, eq=False)
class ContractionKernel:
    """K(x, y): x on a Grid3, y on the dual lattice of an EtaGrid; ``values[x, y]``."""

    grid: Grid3
    eta: EtaGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.shape != (self.grid.size, self.eta.size):
            raise GridMismatch(
                "contraction kernel does not match its grids",
                shape=values.shape,
                expected=(self.grid.size, self.eta.size),
            )
        if not np.all(np.isfinite(values)):
            raise DomainError("contraction kernel values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def zero(cls, grid: Grid3, eta: EtaGrid) -> "ContractionKernel":
        return cls(grid, eta, np.zeros((grid.size, eta.size), dtype=np.complex128))

    def column(self, j: int) -> ScalarField:
        """K(., y_j) as a field on the x grid."""
        return ScalarField(self.grid, self.values[:, j])

    def scaled(self, factor: complex) -> "ContractionKernel":
        return ContractionKernel(self.grid, self.eta, factor * self.values)

    def _check(self, other: "ContractionKernel") -> None:
        if self.grid != other.grid or self.eta != other.eta:
            raise GridMismatch("contraction kernels live on different grids")

    def __add__(self, other: "ContractionKernel") -> "ContractionKernel":
        self._check(other)
        return ContractionKernel(self.grid, self.eta, self.values + other.values)

    def __sub__(self, other: "ContractionKernel") -> "ContractionKernel":
        self._check(other)
        return ContractionKernel(self.grid, self.eta, self.values - other.values)


def _potential_vector(pot: Potential, grid: Grid3) -> np.ndarray:
    return sample_potential(pot, grid).values.real.ravel()


def t1_plus(
    pot: Potential, grid: Grid3, eta: EtaGrid, epsilon: float = 0.0, sign: Side = "-"
) -> EtaKernel:
    """T1^(eta)[x1, x0] = exp(-i x1.eta) R0(|eta|^2 - i eps)(x1, x0) V(x0) exp(i x0.eta) h^3."""
    v = _potential_vector(pot, grid)
    if not np.any(v):
        return EtaKernel.zero(grid, eta, "T1")
    pts = grid.points()
    nodes = eta.nodes

    def build(i: int) -> np.ndarray:
        e = nodes[i]
        z = SpectralPoint(float(np.linalg.norm(e)), epsilon, sign)
        phase = np.exp(1j * (pts @ e))
        return (np.conj(phase)[:, None] * free_resolvent_matrix(z, grid)) * (v * phase)[None, :]

    return EtaKernel(grid, eta, build, 0.0, "T1")


def t_plus(
    pot: Potential, grid: Grid3, eta: EtaGrid, epsilon: float = 0.0, sign: Side = "-"
) -> EtaKernel:
    """T+^(eta) = I - (I + T1^(eta))^-1, the phase-conjugated R_V V.

    Raises:
        NotRegular: zero energy is an eigenvalue or resonance on the grid.
        NearSingular: (lazily, per slice) when a solve fails at some eta.
    """
    t1 = t1_plus(pot, grid, eta, epsilon, sign)
    if t1.builder is None:
        return EtaKernel.zero(grid, eta, "T+")
    report = zero_energy_check(pot, grid)
    if not report.regular:
        raise NotRegular("zero energy is not regular for this potential", inverse_norm=report.inverse_norm)
    nodes = eta.nodes
    eye = np.eye(grid.size)
    build1 = t1.builder

    def build(i: int) -> np.ndarray:
        where = {"eta": nodes[i].tolist(), "epsilon": epsilon, "sign": sign}
        inv, cond = invert_identity_plus(build1(i), where)
        LOG.debug("T+ slice %d: condition %.3g", i, cond)
        return eye - inv

    return EtaKernel(grid, eta, build, 0.0, "T+")


def compose(a: EtaKernel, b: EtaKernel) -> EtaKernel:
    """a * b (a acts first): per eta the product b^ @ a^, identities included."""
    a._check(b)
    ba, bb = a.builder, b.builder
    ca, cb = a.identity, b.identity
    if ba is None and bb is None:
        return EtaKernel(a.grid, a.eta, None, ca * cb, f"{a.label}*{b.label}")

    def build(i: int) -> np.ndarray:
        ma = ba(i) if ba is not None else None
        mb = bb(i) if bb is not None else None
        out = np.zeros((a.grid.size, a.grid.size), dtype=np.complex128)
        if ma is not None and mb is not None:
            out += mb @ ma
        if ma is not None and cb:
            out += cb * ma
        if mb is not None and ca:
            out += ca * mb
        return out

    return EtaKernel(a.grid, a.eta, build, ca * cb, f"{a.label}*{b.label}")


def power(kernel: EtaKernel, n: int) -> EtaKernel:
    """n-fold composition of a kernel with itself (no identity part)."""
    if n < 1:
        raise DomainError(f"power needs n >= 1, got {n}")
    if kernel.identity:
        out = kernel
        for _ in range(n - 1):
            out = compose(out, kernel)
        return out
    build = kernel.builder
    if build is None or n == 1:
        return kernel
    return EtaKernel(kernel.grid, kernel.eta, lambda i: np.linalg.matrix_power(build(i), n), 0.0, f"{kernel.label}^{n}")


def t_n_plus(
    pot: Potential,
    n: int,
    grid: Grid3,
    eta: EtaGrid,
    epsilon: float = 0.0,
    max_order: int = MAX_BORN_ORDER,
) -> EtaKernel:
    """T_n+ = T1 * ... * T1 (n factors)."""
    if not 1 <= n <= max_order:
        raise DomainError(f"Born order {n} outside 1..{max_order}", n=n, max_order=max_order)
    return power(t1_plus(pot, grid, eta, epsilon), n)


def _field_matrix(fields: Sequence[ScalarField] | None, grid: Grid3) -> np.ndarray:
    if fields is None:
        return np.ones((grid.size, 1), dtype=np.complex128)
    for f in fields:
        if f.grid != grid:
            raise GridMismatch("contracted field lives on another grid")
    return np.stack([f.values.ravel() for f in fields], axis=1)


def _contract_many(fields: Sequence[ScalarField] | None, kernel: EtaKernel) -> np.ndarray:
    """Contractions of several fields at once: array ``[x, y, field]``."""
    mat = _field_matrix(fields, kernel.grid)
    hats = np.stack(parallel_map(lambda i: kernel.full_slice(i) @ mat, range(len(kernel))))
    return np.moveaxis(kernel.eta.to_y(hats), 0, 1)


def contract(f: ScalarField | None, kernel: EtaKernel) -> ContractionKernel:
    """(f T)(x1, y) = int f(x0) T(x0, x1, y) dx0 on the dual y lattice.

    ``f = None`` stands for the constant function 1.
    """
    values = _contract_many(None if f is None else [f], kernel)[:, :, 0]
    return ContractionKernel(kernel.grid, kernel.eta, values)


def apply_contraction(k: ContractionKernel, f: ScalarField) -> ScalarField:
    """int K(x, y) f(x - y) dy on the kernel grid; f is interpolated trilinearly."""
    pts = k.grid.points()
    shifted = pts[:, None, :] - k.eta.y_points[None, :, :]
    samples = interpolate(f, shifted)
    return ScalarField(k.grid, k.eta.y_cell_volume * np.sum(k.values * samples, axis=1))


def z_norm(kernel: EtaKernel) -> float:
    """sup_eta of the L^inf_{x1} L^1_{x0} norm of the slice."""
    if kernel.is_zero:
        return 0.0
    norms = parallel_map(lambda i: float(np.abs(kernel.full_slice(i)).sum(axis=1).max()), range(len(kernel)))
    return max(norms)


def xinf_l1_norm(k: ContractionKernel) -> float:
    """sum_y d_y^3 sup_x |K(x, y)|."""
    return float(k.eta.y_cell_volume * np.abs(k.values).max(axis=0, initial=0.0).sum())


def probe_family(grid: Grid3, count: int = PROBE_COUNT, seed: int = 0) -> list[ScalarField]:
    """Fixed Gaussian wave packets used as test functions for the Y-norm."""
    rng = np.random.default_rng(seed)
    half = 0.25 * grid.box_length
    probes = []
    for _ in range(count):
        width = rng.uniform(2.0 * grid.spacing, half)
        center = tuple(rng.uniform(-half, half, size=3))
        momentum = tuple(rng.uniform(-0.25 * grid.nyquist, 0.25 * grid.nyquist, size=3))
        probes.append(gaussian_field(grid, width, center, 1.0, momentum))
    return probes


def y_norm(
    kernel: EtaKernel,
    pot: Potential,
    sigma: float,
    probes: Sequence[ScalarField] | None = None,
) -> float:
    """||T||_Z plus the largest probe ratio int ||v (fT)(., y)||_{B^sigma} dy / ||v f||_{B^sigma}.

    v = |V|; the probe supremum is a lower estimate of the operator norm.
    Each slice is built once for both parts.
    """
    if kernel.is_zero:
        return 0.0
    grid = kernel.grid
    v = np.abs(_potential_vector(pot, grid))
    if not np.any(v):
        return z_norm(kernel)
    probes = list(probes) if probes is not None else probe_family(grid)
    mat = _field_matrix(probes, grid)

    def one(i: int) -> tuple[float, np.ndarray]:
        m = kernel.full_slice(i)
        return _induced(m), m @ mat

    rows = parallel_map(one, range(len(kernel)))
    z = max(norm for norm, _ in rows)
    contracted = np.moveaxis(kernel.eta.to_y(np.stack([hat for _, hat in rows])), 0, 1)
    dy3 = kernel.eta.y_cell_volume
    best = 0.0
    for p, f in enumerate(probes):
        den = b_norm(ScalarField(grid, v * f.values.ravel()), sigma, check_tail=False)
        if den == 0.0:
            continue
        num = sum(
            b_norm(ScalarField(grid, v * contracted[:, j, p]), sigma, check_tail=False)
            for j in range(kernel.eta.size)
        )
        best = max(best, dy3 * num / den)
    LOG.debug("y_norm: Z part %.4g, probe part %.4g", z, best)
    return z + best


def _induced(m: np.ndarray) -> float:
    return float(np.abs(m).sum(axis=1).max(initial=0.0))


def eta_holder_constant(kernel: EtaKernel, rho: float) -> float:
    """max ||T^(eta) - T^(eta')|| / |eta - eta'|^rho over neighbouring nodes."""
    if kernel.builder is None:
        return 0.0

    def line_max(indices: list[int]) -> float:
        prev = kernel.slice(indices[0])
        worst = 0.0
        for idx in indices[1:]:
            cur = kernel.slice(idx)
            worst = max(worst, _induced(cur - prev))
            prev = cur
        return worst

    return max(parallel_map(line_max, kernel.eta.lines())) / kernel.eta.spacing**rho


@dataclass(frozen=True)
class IdentityResiduals:
    """Per-eta norms of (I - T+)(I + T1) - I and (I + T1)(I - T+) - I."""

    left: np.ndarray
    right: np.ndarray

    @property
    def worst(self) -> float:
        return float(max(self.left.max(initial=0.0), self.right.max(initial=0.0)))


def resolvent_identity_residuals(t1: EtaKernel, tp: EtaKernel, indices: Iterable[int] | None = None) -> IdentityResiduals:
    """Residuals of the resolvent identity in both orders, slice by slice."""
    t1._check(tp)
    eye = np.eye(t1.grid.size)
    indices = list(range(len(t1))) if indices is None else list(indices)

    def residual(i: int) -> tuple[float, float]:
        a = eye + t1.slice(i)
        b = eye - tp.slice(i)
        return _induced(b @ a - eye), _induced(a @ b - eye)

    out = parallel_map(residual, indices)
    return IdentityResiduals(np.array([l for l, _ in out]), np.array([r for _, r in out]))


def second_order_defect(t1: EtaKernel, tp: EtaKernel, indices: Iterable[int] | None = None) -> float:
    """max_eta ||T+^ - (T1^ - T1^ T1^)||; third order in V."""
    t1._check(tp)
    indices = list(range(len(t1))) if indices is None else list(indices)

    def defect(i: int) -> float:
        a = t1.slice(i)
        return _induced(tp.slice(i) - (a - a @ a))

    return max(parallel_map(defect, indices), default=0.0)
