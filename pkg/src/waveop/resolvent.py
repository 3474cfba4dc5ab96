"""Free resolvent, Birman-Schwinger operators and their inversion on the grid.

All operators act on grid samples; an OperatorMatrix stores the kernel with
the source-cell weight already folded in, so ``matrix @ f`` is the quadrature
of the integral operator and the induced L^inf -> L^inf norm is the maximal
absolute row sum.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Literal, Sequence

import numpy as np
from scipy import fft as sfft
from scipy import linalg
from scipy.optimize import brentq
from scipy.sparse.linalg import LinearOperator, eigsh
from scipy.spatial.distance import cdist

from .errors import DomainError, GridMismatch, NearSingular, SingularPoint, UnresolvedFrequency
from .fields import Grid3, Potential, ScalarField, sample_potential
from .parallel import parallel_map

LOG = logging.getLogger("waveop.resolvent")

CONDITION_LIMIT = 1e12
# integral of 1/|x| over the unit cube centred at the origin
CUBE_INVERSE_DISTANCE = 3.0 * math.log(2.0 + math.sqrt(3.0)) - 0.5 * math.pi
MAX_EIGENPAIRS = 64

Side = Literal["+", "-"]


@dataclass(frozen=True)
class SpectralPoint:
    """z = lambda^2 - kappa^2 +/- i epsilon.

    ``k`` is the wavenumber of the resolvent kernel exp(i k r) / (4 pi r); it
    has Im k >= 0 on both sides of the cut. ``root`` is sqrt(z) on the chosen
    side: Im >= 0 for "+", Im <= 0 for "-".
    """

    lam: float
    epsilon: float = 0.0
    sign: Side = "+"
    kappa: float = 0.0

    def __post_init__(self):
        if self.lam < 0 or self.epsilon < 0 or self.kappa < 0:
            raise DomainError("lambda, epsilon and kappa must be nonnegative", point=repr(self))
        if self.sign not in ("+", "-"):
            raise DomainError(f"sign must be '+' or '-', got {self.sign!r}")

    @property
    def z(self) -> complex:
        s = 1.0 if self.sign == "+" else -1.0
        return complex(self.lam**2 - self.kappa**2, s * self.epsilon)

    @property
    def root(self) -> complex:
        r = complex(np.sqrt(self.z if self.sign == "+" else self.z.conjugate()))
        return r if self.sign == "+" else r.conjugate()

    @property
    def k(self) -> complex:
        return self.root if self.sign == "+" else -self.root

    def conjugate(self) -> "SpectralPoint":
        return SpectralPoint(self.lam, self.epsilon, "-" if self.sign == "+" else "+", self.kappa)


def free_resolvent_kernel(z: SpectralPoint, x: np.ndarray, y: np.ndarray) -> complex:
    """R0(z)(x, y) = exp(i k |x-y|) / (4 pi |x-y|)."""
    r = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    if r == 0.0:
        raise SingularPoint("free resolvent kernel is singular at x = y")
    return complex(np.exp(1j * z.k * r) / (4.0 * math.pi * r))


@lru_cache(maxsize=8)
def _distances(grid: Grid3) -> np.ndarray:
    pts = grid.points()
    r = cdist(pts, pts)
    r.setflags(write=False)
    return r


def free_resolvent_matrix(z: SpectralPoint, grid: Grid3) -> np.ndarray:
    """R0(z) kernel times cell volume, with the exact cube average on the diagonal."""
    r = _distances(grid)
    h = grid.spacing
    with np.errstate(divide="ignore", invalid="ignore"):
        g = np.exp(1j * z.k * r) / (4.0 * math.pi * r)
    g *= grid.cell_volume
    np.fill_diagonal(g, CUBE_INVERSE_DISTANCE * h * h / (4.0 * math.pi))
    return g


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Discretized integral operator: ``matrix[i, j] = K(x_i, x_j) * weights[j]``."""

    grid: Grid3
    matrix: np.ndarray
    weights: np.ndarray = field(default=None)
    condition: float | None = None

    def __post_init__(self):
        n = self.grid.size
        if self.matrix.shape != (n, n):
            raise GridMismatch("operator matrix does not match its grid", shape=self.matrix.shape, points=n)
        if self.weights is None:
            object.__setattr__(self, "weights", np.full(n, self.grid.cell_volume))

    @classmethod
    def identity(cls, grid: Grid3) -> "OperatorMatrix":
        return cls(grid, np.eye(grid.size, dtype=np.complex128))

    @classmethod
    def zero(cls, grid: Grid3) -> "OperatorMatrix":
        return cls(grid, np.zeros((grid.size, grid.size), dtype=np.complex128))

    @property
    def entries(self) -> np.ndarray:
        """Kernel values without the source-cell weights."""
        return self.matrix / self.weights[None, :]

    def induced_norm(self) -> float:
        """L^inf -> L^inf norm: max_i sum_j |K(x_i, x_j)| w_j."""
        return float(np.abs(self.matrix).sum(axis=1).max(initial=0.0))

    def apply(self, f: ScalarField) -> ScalarField:
        if f.grid != self.grid:
            raise GridMismatch("field and operator live on different grids")
        return f.with_values(self.matrix @ f.values.ravel())

    def _check(self, other: "OperatorMatrix") -> None:
        if other.grid != self.grid:
            raise GridMismatch("operators live on different grids")

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        self._check(other)
        return OperatorMatrix(self.grid, self.matrix @ other.matrix)

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        self._check(other)
        return OperatorMatrix(self.grid, self.matrix + other.matrix)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        self._check(other)
        return OperatorMatrix(self.grid, self.matrix - other.matrix)

    def complement(self) -> "OperatorMatrix":
        """I - self; for the inverse of I + R0 V this is R_V V."""
        return OperatorMatrix(self.grid, np.eye(self.grid.size) - self.matrix)


def birman_schwinger(z: SpectralPoint, pot: Potential, grid: Grid3) -> OperatorMatrix:
    """R0(z) V as an operator on grid samples: f -> R0(z)(V f)."""
    v = sample_potential(pot, grid).values.real.ravel()
    if not np.any(v):
        return OperatorMatrix.zero(grid)
    return OperatorMatrix(grid, free_resolvent_matrix(z, grid) * v[None, :])


def invert_identity_plus(matrix: np.ndarray, where: dict | None = None) -> tuple[np.ndarray, float]:
    """(I + matrix)^-1 and its infinity-norm condition number.

    Raises:
        NearSingular: singular or condition above CONDITION_LIMIT.
    """
    where = where or {}
    a = np.eye(matrix.shape[0], dtype=np.complex128) + matrix
    try:
        inv = linalg.inv(a, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NearSingular(f"I + R0 V is singular: {exc}", condition=math.inf, **where) from exc
    cond = float(np.abs(a).sum(axis=1).max() * np.abs(inv).sum(axis=1).max())
    if not math.isfinite(cond) or cond > CONDITION_LIMIT:
        raise NearSingular(f"I + R0 V is near singular (condition {cond:.3g})", condition=cond, **where)
    return inv, cond


def _where(z: SpectralPoint) -> dict:
    return {"lam": z.lam, "epsilon": z.epsilon, "sign": z.sign, "kappa": z.kappa}


def resolvent_inverse(z: SpectralPoint, pot: Potential, grid: Grid3) -> OperatorMatrix:
    """(I + R0(z) V)^-1 by a dense solve; ``.complement()`` gives R_V(z) V."""
    bs = birman_schwinger(z, pot, grid)
    if not np.any(bs.matrix):
        return OperatorMatrix(grid, np.eye(grid.size, dtype=np.complex128), condition=1.0)
    inv, cond = invert_identity_plus(bs.matrix, _where(z))
    LOG.debug("inverse at z=%s: condition %.3g", z.z, cond)
    return OperatorMatrix(grid, inv, condition=cond)


@dataclass(frozen=True)
class ScanRow:
    lam: float
    epsilon: float
    sign: str
    norm: float


@dataclass(frozen=True)
class M0Scan:
    """Scan maximum of ||(I + R0(lambda^2 +/- i eps) V)^-1||."""

    M0: float
    rows: tuple[ScanRow, ...]
    argmax: ScanRow | None
    boundary_maximum: bool
    offending: dict | None = None

    def table(self) -> list[tuple[float, float, str, float]]:
        return [(r.lam, r.epsilon, r.sign, r.norm) for r in self.rows]


def m0_scan(
    pot: Potential,
    lambdas: Sequence[float],
    epsilons: Sequence[float],
    grid: Grid3,
    signs: Sequence[Side] = ("+", "-"),
) -> M0Scan:
    """Evaluate the inverse norm on a (lambda, epsilon, side) scan in parallel.

    A NearSingular solve ends the scan with M0 = inf and the offending point.
    """
    points = [SpectralPoint(lam, eps, s) for lam in lambdas for eps in epsilons for s in signs]

    def solve(z: SpectralPoint) -> tuple[SpectralPoint, float, dict | None]:
        try:
            return z, resolvent_inverse(z, pot, grid).induced_norm(), None
        except NearSingular as exc:
            return z, math.inf, exc.to_dict()

    results = parallel_map(solve, points)
    rows = tuple(ScanRow(z.lam, z.epsilon, z.sign, norm) for z, norm, _ in results)
    for z, _norm, err in results:
        if err is not None:
            LOG.warning("Scan hit a near-singular point at lambda=%g epsilon=%g", z.lam, z.epsilon)
            return M0Scan(math.inf, rows, None, False, err)
    best = max(rows, key=lambda r: r.norm)
    boundary = best.lam in (min(lambdas), max(lambdas)) and len(set(lambdas)) > 1
    boundary = boundary or (best.epsilon == min(epsilons) and len(set(epsilons)) > 1)
    if boundary and best.norm > 1.0:
        LOG.warning(
            "Scan maximum %.6g sits on the scan boundary (lambda=%g, epsilon=%g); consider enlarging the scan",
            best.norm,
            best.lam,
            best.epsilon,
        )
    return M0Scan(best.norm, rows, best, boundary and best.norm > 1.0)


@dataclass(frozen=True)
class ZeroEnergyReport:
    regular: bool
    inverse_norm: float


def zero_energy_check(pot: Potential, grid: Grid3) -> ZeroEnergyReport:
    """Zero energy is regular iff I + R0(0) V inverts on the grid."""
    try:
        inv = resolvent_inverse(SpectralPoint(0.0), pot, grid)
    except NearSingular:
        return ZeroEnergyReport(False, math.inf)
    return ZeroEnergyReport(True, inv.induced_norm())


def critical_coupling(shape: Potential, grid: Grid3) -> float:
    """Smallest amplitude factor s > 0 making zero energy singular for s * shape.

    The Birman-Schwinger eigenvalues at zero energy scale linearly with s, so
    s = -1 / mu for the most negative real eigenvalue mu of R0(0) shape.
    """
    v = sample_potential(shape, grid).values.real.ravel()
    bs = birman_schwinger(SpectralPoint(0.0), shape, grid)
    mu = _sorted_bs_eigenvalues(bs.matrix.real, v)
    if mu.size == 0 or mu[0] >= 0:
        raise DomainError("shape has no attractive Birman-Schwinger eigenvalue")
    return float(-1.0 / mu[0])


@dataclass(frozen=True)
class HighEnergyDecay:
    lambdas: np.ndarray
    first: np.ndarray
    squared: np.ndarray


def high_energy_decay(pot: Potential, lambdas: Sequence[float], grid: Grid3) -> HighEnergyDecay:
    """||R0(lambda^2 + i0) V|| and ||(R0(lambda^2 + i0) V)^2|| per lambda.

    Raises:
        UnresolvedFrequency: lambda * spacing > pi / 2.
    """
    lams = np.asarray(lambdas, dtype=float)
    limit = 0.5 * math.pi / grid.spacing
    if np.any(lams > limit):
        raise UnresolvedFrequency(
            f"lambda above {limit:g} is not resolved by spacing {grid.spacing:g}", limit=limit
        )

    def norms(lam: float) -> tuple[float, float]:
        m = birman_schwinger(SpectralPoint(float(lam)), pot, grid).matrix
        return (
            float(np.abs(m).sum(axis=1).max(initial=0.0)),
            float(np.abs(m @ m).sum(axis=1).max(initial=0.0)),
        )

    out = parallel_map(norms, lams)
    return HighEnergyDecay(lams, np.array([a for a, _ in out]), np.array([b for _, b in out]))


def _laplacian_symbol(grid: Grid3) -> np.ndarray:
    k = 2.0 * math.pi * sfft.fftfreq(grid.n_per_axis, d=grid.spacing)
    kx, ky, kz = np.meshgrid(k, k, k, indexing="ij")
    return kx * kx + ky * ky + kz * kz


@dataclass(frozen=True)
class PointSpectrum:
    eigenvalues: np.ndarray
    eigenfunctions: tuple[ScalarField, ...]


def point_spectrum(pot: Potential, grid: Grid3, tolerance: float | None = None) -> PointSpectrum:
    """Negative eigenvalues of -Laplace + V on the periodic grid.

    The Laplacian is spectral; eigenfunctions are L^2-orthonormal with the
    cell-volume inner product.
    """
    v = sample_potential(pot, grid).values.real
    if tolerance is None:
        tolerance = 1e-2 * grid.dual_spacing**2
    if v.min(initial=0.0) >= 0.0:
        return PointSpectrum(np.array([]), ())
    symbol = _laplacian_symbol(grid)
    shape = grid.shape
    n = grid.size

    def matvec(u: np.ndarray) -> np.ndarray:
        u = u.reshape(shape)
        lap = sfft.ifftn(symbol * sfft.fftn(u)).real
        return (lap + v * u).ravel()

    op = LinearOperator((n, n), matvec=matvec, dtype=np.float64)
    k = min(4, n - 2)
    while True:
        vals, vecs = eigsh(op, k=k, which="SA", v0=np.ones(n))
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        if vals[-1] >= -tolerance or k >= min(MAX_EIGENPAIRS, n - 2):
            break
        k = min(2 * k, MAX_EIGENPAIRS, n - 2)
    keep = vals < -tolerance
    funcs = []
    for vec in vecs[:, keep].T:
        vec = vec / math.sqrt(grid.cell_volume * float(np.sum(vec * vec)))
        funcs.append(ScalarField(grid, vec.reshape(shape)))
    LOG.info("point spectrum: %d negative eigenvalue(s)", int(keep.sum()))
    return PointSpectrum(vals[keep], tuple(funcs))


def _sorted_bs_eigenvalues(matrix: np.ndarray, v: np.ndarray) -> np.ndarray:
    if np.all(v <= 0):
        s = np.sqrt(-v)
        sym = (matrix / np.where(v == 0, 1.0, v)[None, :]) * s[None, :] * s[:, None]
        return np.sort(-linalg.eigvalsh(0.5 * (sym + sym.conj().T)))
    mu = linalg.eigvals(matrix)
    return np.sort(mu.real)


def bound_state_energies(pot: Potential, grid: Grid3, kappa_floor: float = 1e-3) -> np.ndarray:
    """Bound-state energies -kappa^2 from the Birman-Schwinger criterion.

    E = -kappa^2 is an eigenvalue iff R0(-kappa^2) V has eigenvalue -1; each
    branch crossing -1 on (kappa_floor, sqrt(-min V)] is located by Brent's
    method. These are the points where ``resolvent_inverse`` reports NearSingular.
    """
    v = sample_potential(pot, grid).values.real.ravel()
    vmin = float(v.min(initial=0.0))
    if vmin >= 0.0:
        return np.array([])
    kappa_max = math.sqrt(-vmin)

    def eigs(kappa: float) -> np.ndarray:
        m = free_resolvent_matrix(SpectralPoint(0.0, kappa=kappa), grid).real * v[None, :]
        return _sorted_bs_eigenvalues(m, v)

    low = eigs(kappa_floor)
    count = int(np.sum(low < -1.0))
    while count and eigs(kappa_max)[0] <= -1.0:
        kappa_max *= 2.0
    energies = []
    for j in range(count):
        kappa = brentq(lambda kap: eigs(kap)[j] + 1.0, kappa_floor, kappa_max, xtol=1e-10)
        energies.append(-kappa * kappa)
    LOG.info("Birman-Schwinger bound states: %s", energies)
    return np.array(energies)
