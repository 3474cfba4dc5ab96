"""Constructive Wiener inversion of delta + f, scalar and operator valued.

The scalar algorithm works in the convolution algebra of a periodic box:

1. a cutoff R with ||(delta - chi_R) * f||_1 < 1/2 gives the far solution
   g0 by a Neumann series;
2. near every center xi0 of a lattice covering |xi| <= 3R the inverse is
   g_xi0 = -(1 + f^(xi0))^-1 f * Omega * (delta + H), H another Neumann series;
3. a partition of unity glues the pieces.

Every convolution is a product of spectra; L1 norms are taken in x space.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import fft as sfft

from .errors import DomainError, GridMismatch, NearSingular, NoConvergence, NotInvertible, PatchFailure
from .kernelalg import EtaKernel, resolvent_identity_residuals
from .parallel import parallel_map
from .resolvent import invert_identity_plus

LOG = logging.getLogger("waveop.wiener")

INVERTIBILITY_FLOOR = 1e-6
NEUMANN_CAP = 64
NEUMANN_TOL = 1e-12
MAX_GROUPING = 11
DEFAULT_C = 0.01
CENTER_CHUNK = 32


def smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def chi_hat(xi_abs: np.ndarray) -> np.ndarray:
    """Mollifier symbol: 1 on |xi| <= 1, 0 on |xi| >= 2."""
    return smoothstep(2.0 - np.asarray(xi_abs))


@dataclass(frozen=True, eq=False)
class ConvElement:
    """delta (if ``has_delta``) + f, f sampled on [-box/2, box/2)^d."""

    dimension: Literal[1, 3]
    n: int
    box: float
    density: np.ndarray
    has_delta: bool = True

    def __post_init__(self):
        if self.dimension not in (1, 3):
            raise DomainError(f"dimension must be 1 or 3, got {self.dimension}")
        density = np.asarray(self.density, dtype=np.complex128)
        if density.shape != (self.n,) * self.dimension:
            raise GridMismatch("density does not match the grid", shape=density.shape, n=self.n)
        if not np.all(np.isfinite(density)):
            raise DomainError("density must be finite")
        object.__setattr__(self, "density", density)

    @classmethod
    def zero(cls, dimension: Literal[1, 3], n: int, box: float) -> "ConvElement":
        return cls(dimension, n, box, np.zeros((n,) * dimension))

    @classmethod
    def from_spectrum(cls, like: "ConvElement", spectrum: np.ndarray, has_delta: bool = True) -> "ConvElement":
        vals = sfft.ifftn(sfft.ifftshift(like._alternating() * spectrum)) / like.cell
        return cls(like.dimension, like.n, like.box, vals, has_delta)

    @property
    def spacing(self) -> float:
        return self.box / self.n

    @property
    def cell(self) -> float:
        return self.spacing**self.dimension

    def axis(self) -> np.ndarray:
        return -0.5 * self.box + self.spacing * np.arange(self.n)

    def frequency_axis(self) -> np.ndarray:
        return (2.0 * math.pi / self.box) * (np.arange(self.n) - self.n // 2)

    def frequencies(self) -> np.ndarray:
        """Dual grid as an array ``(n,)*d + (d,)``."""
        k = self.frequency_axis()
        return np.stack(np.meshgrid(*([k] * self.dimension), indexing="ij"), axis=-1)

    def _alternating(self) -> np.ndarray:
        sign = np.where((np.arange(self.n) - self.n // 2) % 2 == 0, 1.0, -1.0)
        out = sign
        for _ in range(self.dimension - 1):
            out = np.multiply.outer(out, sign)
        return out

    def spectrum(self) -> np.ndarray:
        """f^ on the dual grid (without the delta)."""
        return sfft.fftshift(sfft.fftn(self.density)) * self._alternating() * self.cell

    def symbol(self) -> np.ndarray:
        """Spectrum of the whole element, has_delta + f^."""
        return float(self.has_delta) + self.spectrum()

    def l1_norm(self) -> float:
        return float(np.abs(self.density).sum() * self.cell)

    def same_grid(self, other: "ConvElement") -> bool:
        return (self.dimension, self.n, self.box) == (other.dimension, other.n, other.box)

    def _check(self, other: "ConvElement") -> None:
        if not self.same_grid(other):
            raise GridMismatch("convolution elements live on different grids")

    def convolve(self, other: "ConvElement") -> "ConvElement":
        self._check(other)
        spec = self.symbol() * other.symbol()
        delta = self.has_delta and other.has_delta
        return ConvElement.from_spectrum(self, spec - float(delta), delta)

    def direct_convolve(self, other: "ConvElement") -> "ConvElement":
        """Circular convolution by direct summation; O(n^(2d)), tiny grids only."""
        self._check(other)
        half = self.n // 2
        out = np.zeros_like(self.density)
        for m in itertools.product(range(self.n), repeat=self.dimension):
            if self.density[m] != 0:
                shift = tuple(mi - half for mi in m)
                out += self.density[m] * np.roll(other.density, shift, axis=tuple(range(self.dimension)))
        out *= self.cell
        if self.has_delta:
            out += other.density
        if other.has_delta:
            out += self.density
        return ConvElement(self.dimension, self.n, self.box, out, self.has_delta and other.has_delta)


@dataclass(frozen=True)
class WienerParams:
    R: float
    eps_loc: float
    n_neumann: int
    partition_centers: np.ndarray


@dataclass(frozen=True, eq=False)
class WienerSolution:
    inverse: ConvElement
    params: WienerParams


def _l1(like: ConvElement, spectrum: np.ndarray) -> float:
    vals = sfft.ifftn(sfft.ifftshift(like._alternating() * spectrum)) / like.cell
    return float(np.abs(vals).sum() * like.cell)


def _neumann(like: ConvElement, ahat: np.ndarray, cap: int, tol: float) -> tuple[np.ndarray, int]:
    """Spectrum of sum_{k >= 1} (-a)^k and the number of terms used."""
    term = -ahat
    total = term.copy()
    for k in range(1, cap + 1):
        if _l1(like, term) < tol:
            return total, k
        term = term * -ahat
        total += term
    raise NoConvergence(f"Neumann series did not reach {tol:g} in {cap} terms", cap=cap, tol=tol)


def _centers(dimension: int, radius: float, spacing: float, offset: float) -> np.ndarray:
    m = math.ceil(radius / spacing) + 1
    k = (np.arange(-m, m + 1) + offset) * spacing
    grid = np.stack(np.meshgrid(*([k] * dimension), indexing="ij"), axis=-1).reshape(-1, dimension)
    return grid[np.linalg.norm(grid, axis=1) <= radius]


def wiener_solve(
    f: ConvElement,
    cap: int = NEUMANN_CAP,
    tol: float = NEUMANN_TOL,
    offset: float = 0.0,
) -> WienerSolution:
    """Inverse of delta + f with the parameters that produced it.

    ``offset`` shifts the local center lattice by a fraction of its spacing.

    Raises:
        NotInvertible: min |1 + f^| <= 1e-6 on the dual grid.
        NoConvergence: a Neumann series exceeded ``cap`` or the patch radius
            fell below the dual grid resolution.
    """
    fhat = f.spectrum()
    floor = float(np.abs(1.0 + fhat).min())
    if floor <= INVERTIBILITY_FLOOR:
        raise NotInvertible(f"min |1 + f^| = {floor:.3g}", minimum=floor)
    if not np.any(fhat):
        return WienerSolution(ConvElement.zero(f.dimension, f.n, f.box), WienerParams(0.0, 0.0, 0, np.zeros((0, f.dimension))))
    xi = f.frequencies()
    xi_abs = np.linalg.norm(xi, axis=-1)

    R = 1.0
    while _l1(f, (1.0 - chi_hat(xi_abs / R)) * fhat) >= 0.5:
        R *= 2.0
    LOG.debug("far cutoff R = %g", R)
    ahat = (1.0 - chi_hat(xi_abs / R)) * fhat
    f0, n_far = _neumann(f, ahat, cap, tol)
    g0 = -ahat * (1.0 + f0)

    dual = 2.0 * math.pi / f.box
    cover = 3.0 * R
    eps = 1.0
    while True:
        if eps < dual:
            raise NoConvergence("local patch radius fell below the dual grid resolution", eps=eps, dual=dual)
        spacing = eps / (2.0 * math.sqrt(f.dimension))
        centers = _centers(f.dimension, cover + 0.5 * eps, spacing, offset)
        fhat0 = _values_at(f, centers)

        def modulus(j: int) -> float:
            omega = chi_hat(np.linalg.norm(xi - centers[j], axis=-1) / eps)
            return _l1(f, (fhat - fhat0[j]) * omega) / abs(1.0 + fhat0[j])

        worst = max(parallel_map(modulus, range(len(centers))))
        if worst < 0.5:
            break
        eps *= 0.5
    LOG.debug("local patch radius %g with %d centers", eps, len(centers))

    def local(chunk: range) -> tuple[np.ndarray, np.ndarray, int]:
        weighted = np.zeros_like(fhat)
        bumps = np.zeros(fhat.shape)
        used = 0
        for j in chunk:
            dist = np.linalg.norm(xi - centers[j], axis=-1)
            omega = chi_hat(dist / eps)
            big_omega = chi_hat(2.0 * dist / eps)
            c0 = 1.0 + fhat0[j]
            a = (fhat - fhat0[j]) * omega / c0
            h, n = _neumann(f, a, cap, tol)
            bump = chi_hat(4.0 * dist / eps)
            weighted += bump * (-fhat * big_omega * (1.0 + h) / c0)
            bumps += bump
            used = max(used, n)
        return weighted, bumps, used

    chunks = [range(k, min(k + CENTER_CHUNK, len(centers))) for k in range(0, len(centers), CENTER_CHUNK)]
    pieces = parallel_map(local, chunks)
    weighted = sum(p[0] for p in pieces)
    bumps = sum(p[1] for p in pieces)
    psi = smoothstep(1.0 - (xi_abs - 2.0 * R) / R)
    if np.any((psi > 0) & (bumps <= 0)):
        raise NoConvergence("partition centers do not cover the local region")
    glue = np.divide(weighted, bumps, out=np.zeros_like(weighted), where=bumps > 0)
    ghat = (1.0 - psi) * g0 + psi * glue
    n_local = max(p[2] for p in pieces)
    params = WienerParams(R, eps, max(n_far, n_local), centers)
    return WienerSolution(ConvElement.from_spectrum(f, ghat), params)


def _values_at(f: ConvElement, points: np.ndarray) -> np.ndarray:
    """f^ at arbitrary frequencies by direct summation."""
    a = f.axis()
    x = np.stack(np.meshgrid(*([a] * f.dimension), indexing="ij"), axis=-1).reshape(-1, f.dimension)
    dens = f.density.ravel()
    keep = dens != 0
    return np.exp(-1j * points @ x[keep].T) @ dens[keep] * f.cell


def scalar_invert(f: ConvElement, cap: int = NEUMANN_CAP, tol: float = NEUMANN_TOL) -> ConvElement:
    """g with (delta + f) * (delta + g) = delta."""
    return wiener_solve(f, cap, tol).inverse


def check_inverse(f: ConvElement, g: ConvElement) -> float:
    """max over the dual grid of |(1 + f^)(1 + g^) - 1|."""
    f._check(g)
    return float(np.abs((1.0 + f.spectrum()) * (1.0 + g.spectrum()) - 1.0).max())


def _norm(m: np.ndarray) -> float:
    return float(np.abs(m).sum(axis=1).max())


def _grouped_neumann(s: np.ndarray, power: int, cap: int, tol: float) -> np.ndarray:
    """(I + s)^-1 - I from sum_m ((-s)^N)^m sum_{k < N} (-s)^k."""
    eye = np.eye(s.shape[0], dtype=np.complex128)
    head = eye.copy()
    term = eye.copy()
    for _ in range(power - 1):
        term = term @ -s
        head += term
    step = np.linalg.matrix_power(-s, power)
    total = eye.copy()
    term = eye.copy()
    for _ in range(cap):
        term = term @ step
        if _norm(term) < tol:
            return total @ head - eye
        total += term
    raise NoConvergence("grouped Neumann series did not converge", cap=cap)


def _local_correction(u: np.ndarray, d: np.ndarray, cap: int, tol: float) -> np.ndarray:
    """U + H + H U with I + H = (I + D + U D)^-1."""
    a = d + u @ d
    eye = np.eye(a.shape[0], dtype=np.complex128)
    h = np.zeros_like(a)
    term = eye
    for _ in range(cap):
        term = term @ -a
        if _norm(term) < tol:
            return u + h + h @ u
        h += term
    raise NoConvergence("local Neumann series did not converge", cap=cap)


def operator_invert(
    s: EtaKernel,
    cap: int = NEUMANN_CAP,
    tol: float = NEUMANN_TOL,
    max_grouping: int = MAX_GROUPING,
) -> EtaKernel:
    """L with (I + L^(eta))(I + S^(eta)) = I per eta node.

    Nodes where ||S^N|| < 1/2 for the grouping N are handled by a grouped
    Neumann series; every other node by local patches around a coarser
    center lattice, glued with tent weights. Small grids only: all slices
    of S are held in memory.

    Raises:
        NotInvertible: I + S^(eta0) is singular at a patch center.
        PatchFailure: the local contraction fails at the smallest patch.
    """
    if s.identity:
        raise DomainError("operator_invert expects a kernel without identity part")
    if s.builder is None:
        return EtaKernel.zero(s.grid, s.eta, "L")
    eta = s.eta
    n = eta.n_per_axis
    slices = np.stack(parallel_map(s.slice, range(eta.size)))
    outer = [i for i, idx in enumerate(np.ndindex(n, n, n)) if 0 in idx or n - 1 in idx]

    def contracts(i: int, k: int) -> bool:
        return _norm(np.linalg.matrix_power(slices[i], k)) < 0.5

    grouping = next((k for k in range(1, max_grouping + 1) if all(contracts(i, k) for i in outer)), None)
    far = np.zeros(eta.size, dtype=bool)
    if grouping is not None:
        far = np.array([contracts(i, grouping) for i in range(eta.size)])
    LOG.info("operator inversion: grouping N=%s, %d of %d nodes far", grouping, int(far.sum()), eta.size)

    local_nodes = np.flatnonzero(~far)
    mid = (n - 1) // 2
    idx = np.array(list(np.ndindex(n, n, n)))
    stride = mid & -mid if mid else 1
    while True:
        centers = [c for c in range(eta.size) if np.all((idx[c] - mid) % stride == 0)]
        patch = {c: [i for i in local_nodes if np.all(np.abs(idx[i] - idx[c]) < stride)] for c in centers}
        patch = {c: nodes for c, nodes in patch.items() if nodes}
        units: dict[int, np.ndarray] = {}
        ok = True
        for c in patch:
            try:
                inv, _ = invert_identity_plus(slices[c], {"eta": eta.nodes[c].tolist()})
            except NearSingular as e:
                raise NotInvertible(str(e), **e.details) from e
            units[c] = inv - np.eye(s.grid.size)
            u = units[c]
            if any(_norm((slices[i] - slices[c]) + u @ (slices[i] - slices[c])) >= 0.5 for i in patch[c]):
                ok = False
                break
        if ok:
            break
        if stride == 1:
            raise PatchFailure("local contraction fails at the smallest patch radius", eta_spacing=eta.spacing)
        stride //= 2
    LOG.debug("operator inversion: patch stride %d, %d centers", stride, len(patch))

    def build(i: int) -> np.ndarray:
        if far[i]:
            return _grouped_neumann(slices[i], grouping, cap, tol)
        out = np.zeros_like(slices[i])
        total = 0.0
        for c, nodes in patch.items():
            if i not in nodes:
                continue
            weight = float(np.prod(1.0 - np.abs(idx[i] - idx[c]) / stride))
            out += weight * _local_correction(units[c], slices[i] - slices[c], cap, tol)
            total += weight
        return out / total

    return EtaKernel(s.grid, eta, build, 0.0, "L").materialize()


def inversion_residual(s: EtaKernel, inverse: EtaKernel) -> float:
    """Worst per-eta residual of (I + L)(I + S) = I in both orders."""
    return resolvent_identity_residuals(s, inverse.scaled(-1.0)).worst


@dataclass(frozen=True)
class QuantParams:
    """Quantitative constants as functions of ||V||, M0 and gamma; log2 values alongside."""

    K: float
    L0: float
    M1: float
    eps0: float
    eps1: float
    M2: float
    gamma: float
    c: float
    log2_K: float
    log2_L0: float
    log2_M1: float
    log2_eps0: float
    log2_eps1: float
    log2_M2: float


def _exp2(value: float) -> float:
    try:
        return 2.0**value
    except OverflowError:
        return math.inf


def quant_params(norm_v: float, m0: float, gamma: float, c: float = DEFAULT_C) -> QuantParams:
    """K = 1 + ||V||, M1 = 1 + K M0, L0 = (K M1)^(1/gamma) / c, eps0 = c K^(-10-33/gamma),
    eps1 = c K^-2 M1^-2, M2 = K^(37+105/gamma) (1 + M0)^(4+3/gamma)."""
    if not 0.0 < gamma <= 0.5:
        raise DomainError(f"gamma must lie in (0, 1/2], got {gamma}", gamma=gamma)
    if norm_v < 0 or m0 < 0 or not c > 0:
        raise DomainError("norm_v and m0 must be nonnegative, c positive", norm_v=norm_v, m0=m0, c=c)
    lk = math.log2(1.0 + norm_v)
    lm1 = math.log2(1.0 + 2.0**lk * m0)
    lc = math.log2(c)
    logs = {
        "K": lk,
        "M1": lm1,
        "L0": -lc + (lk + lm1) / gamma,
        "eps0": lc - (10.0 + 33.0 / gamma) * lk,
        "eps1": lc - 2.0 * lk - 2.0 * lm1,
        "M2": (37.0 + 105.0 / gamma) * lk + (4.0 + 3.0 / gamma) * math.log2(1.0 + m0),
    }
    values = {k: _exp2(v) for k, v in logs.items()}
    return QuantParams(gamma=gamma, c=c, **values, **{f"log2_{k}": v for k, v in logs.items()})


def inverse_budget(eps0: float, eps1: float, l0: float, m1: float, norm_s: float) -> float:
    """eps0^-3 (eps1^-3 + L0^3 M1^3 ||S||^3) M1, up to an absolute constant."""
    if min(eps0, eps1, l0, m1) <= 0 or norm_s < 0:
        raise DomainError("inverse budget needs positive parameters")
    return eps0**-3 * (eps1**-3 + (l0 * m1 * norm_s) ** 3) * m1
