"""Time-domain oracle: free and perturbed Schrödinger evolution, Cook's method,
time-domain Born terms and the continuous-spectrum projection.

Split-step scheme (second-order Strang) for exp(-i t H), H = -Laplace + V:

    u -> exp(-i V dt/2) u
    u -> IFFT exp(-i |xi|^2 dt) FFT u
    u -> exp(-i V dt/2) u

exp(i t H) is the same scheme run with negative dt.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import fft as sfft

from .errors import DomainError, StepTooLarge, WrapAround
from .fields import Grid3, Potential, ScalarField, sample_potential
from .resolvent import PointSpectrum, point_spectrum

LOG = logging.getLogger("waveop.propagator")

MAX_KINETIC_PHASE = 0.5
# eps * t_max of the horizon-matched regularization: exp(-3) ~ 5% of the integrand survives at t_max
HORIZON_DECAY = 3.0


@dataclass(frozen=True)
class EvolutionConfig:
    """Time stepping for the Cook integral and the split-step scheme."""

    dt: float = 0.01
    t_max: float = 6.0
    eps_reg: float = 0.0
    scheme: str = "strang"
    tail_tolerance: float = 1e-6

    def __post_init__(self):
        if not self.dt > 0 or not self.t_max > 0:
            raise DomainError("dt and t_max must be positive", dt=self.dt, t_max=self.t_max)
        if self.eps_reg < 0:
            raise DomainError("eps_reg must be nonnegative", eps_reg=self.eps_reg)
        if self.scheme != "strang":
            raise DomainError(f"unknown time-stepping scheme {self.scheme!r}")

    @property
    def steps(self) -> int:
        return max(1, math.ceil(self.t_max / self.dt - 1e-12))

    @property
    def step(self) -> float:
        return self.t_max / self.steps

    def times(self) -> np.ndarray:
        return self.step * np.arange(self.steps + 1)

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.steps + 1, self.step)
        w[0] = w[-1] = 0.5 * self.step
        return w

    def with_epsilon(self, eps: float) -> "EvolutionConfig":
        return EvolutionConfig(self.dt, self.t_max, eps, self.scheme, self.tail_tolerance)

    @property
    def horizon_epsilon(self) -> float:
        """Smallest eps for which exp(-eps t_max) is below exp(-HORIZON_DECAY), never below eps_reg."""
        return max(self.eps_reg, HORIZON_DECAY / self.t_max)

    def horizon_matched(self) -> "EvolutionConfig":
        """The same stepping with eps raised to ``horizon_epsilon``.

        Time integrals stop at t_max while g is the t -> inf limit; both sides
        of a comparison agree only when the damped integrand is gone by t_max.
        """
        return self.with_epsilon(self.horizon_epsilon)


def kinetic_symbol(grid: Grid3) -> np.ndarray:
    """|xi|^2 on the FFT layout of the grid."""
    k = 2.0 * math.pi * sfft.fftfreq(grid.n_per_axis, d=grid.spacing)
    kx, ky, kz = np.meshgrid(k, k, k, indexing="ij")
    return kx * kx + ky * ky + kz * kz


class FreePropagator:
    """exp(-i t H0) as the exact multiplier exp(-i t |xi|^2)."""

    def __init__(self, grid: Grid3):
        self.grid = grid
        self.symbol = kinetic_symbol(grid)

    def to_spectrum(self, values: np.ndarray) -> np.ndarray:
        return sfft.fftn(values, workers=-1)

    def from_spectrum(self, spec: np.ndarray) -> np.ndarray:
        return sfft.ifftn(spec, workers=-1)

    def evolve(self, values: np.ndarray, t: float) -> np.ndarray:
        if t == 0.0:
            return values.copy()
        return self.from_spectrum(np.exp(-1j * t * self.symbol) * self.to_spectrum(values))


def free_evolve(f: ScalarField, t: float) -> ScalarField:
    """exp(-i t H0) f; unitary on the grid."""
    return f.with_values(FreePropagator(f.grid).evolve(f.values, t))


def free_gaussian(grid: Grid3, width: float, t: float) -> ScalarField:
    """Closed-form free evolution of exp(-|x|^2 / (2 w^2))."""
    s = width * width + 2j * t
    r2 = grid.radii() ** 2
    return ScalarField(grid, (width * width / s) ** 1.5 * np.exp(-r2 / (2.0 * s)))


class SplitStepPropagator:
    """Strang split-step exp(-i dt H) with precomputed phase factors."""

    def __init__(self, grid: Grid3, v: np.ndarray, dt: float):
        self.grid = grid
        self.dt = dt
        eta_max = grid.nyquist
        if abs(dt) * eta_max**2 > MAX_KINETIC_PHASE:
            raise StepTooLarge(
                f"dt={abs(dt):g} exceeds {MAX_KINETIC_PHASE / eta_max**2:g} for spacing {grid.spacing:g}",
                dt=abs(dt),
                limit=MAX_KINETIC_PHASE / eta_max**2,
            )
        self._half_v = np.exp(-0.5j * dt * v)
        self._kinetic = np.exp(-1j * dt * kinetic_symbol(grid))

    def step(self, values: np.ndarray) -> np.ndarray:
        values = self._half_v * values
        values = sfft.ifftn(self._kinetic * sfft.fftn(values, workers=-1), workers=-1)
        return self._half_v * values


def _potential_values(pot: Potential, grid: Grid3) -> np.ndarray:
    return sample_potential(pot, grid).values.real


def perturbed_evolve(f: ScalarField, t: float, pot: Potential, cfg: EvolutionConfig) -> ScalarField:
    """exp(-i t H) f by Strang splitting; negative t runs time backwards."""
    if t == 0.0:
        return f
    steps = max(1, math.ceil(abs(t) / cfg.dt - 1e-12))
    stepper = SplitStepPropagator(f.grid, _potential_values(pot, f.grid), t / steps)
    values = f.values
    for _ in range(steps):
        values = stepper.step(values)
    return f.with_values(values)


def _tail_check(f: ScalarField, v: np.ndarray, free: FreePropagator, cfg: EvolutionConfig) -> float:
    norm_f = f.l2_norm()
    if norm_f == 0.0 or not np.any(v):
        return 0.0
    u = free.evolve(f.values, cfg.t_max)
    tail = math.sqrt(f.grid.cell_volume * float(np.sum(np.abs(v * u) ** 2)))
    tail *= math.exp(-cfg.eps_reg * cfg.t_max) / norm_f
    if tail >= cfg.tail_tolerance:
        raise WrapAround(
            f"damped integrand at t_max={cfg.t_max:g} is {tail:.3g} (tolerance {cfg.tail_tolerance:g}); "
            "enlarge the box, t_max or eps_reg",
            tail=tail,
            t_max=cfg.t_max,
        )
    return tail


def cook_wave_operator(
    f: ScalarField, pot: Potential, cfg: EvolutionConfig, check_tail: bool = True
) -> ScalarField:
    """W_+^eps f = f + i int_0^T exp(itH) V exp(-itH0) f exp(-eps t) dt.

    Trapezoid in t. The sum over samples is accumulated Horner-style from the
    last sample backwards, so each sample costs one split step.

    Raises:
        WrapAround: the damped integrand at t_max is not negligible.
    """
    grid = f.grid
    v = _potential_values(pot, grid)
    if not np.any(v):
        return f
    free = FreePropagator(grid)
    if check_tail:
        _tail_check(f, v, free, cfg)
    times, weights = cfg.times(), cfg.trapezoid_weights()
    back = SplitStepPropagator(grid, v, -cfg.step)
    spec = free.to_spectrum(f.values)
    acc = np.zeros(grid.shape, dtype=np.complex128)
    for j in range(len(times) - 1, -1, -1):
        if j < len(times) - 1:
            acc = back.step(acc)
        u = free.from_spectrum(np.exp(-1j * times[j] * free.symbol) * spec)
        acc += weights[j] * math.exp(-cfg.eps_reg * times[j]) * v * u
    LOG.debug("cook: %d samples, step %g", len(times), cfg.step)
    return f.with_values(f.values + 1j * acc)


def born_term_time(f: ScalarField, pot: Potential, n: int, cfg: EvolutionConfig) -> ScalarField:
    """Regularized Born term W_n^eps f (n = 1, 2) with free propagators only.

    W_1 f = i int e^{-eps t} q(t) dt,   q(t) = exp(itH0) V exp(-itH0) f
    W_2 f = - int exp(isH0) V exp(-isH0) Q(s) ds,   Q(s) = int_s^T e^{-eps t} q(t) dt
    """
    if n not in (1, 2):
        raise DomainError(f"time-domain Born terms are available for n = 1, 2 (got {n})")
    grid = f.grid
    v = _potential_values(pot, grid)
    if not np.any(v):
        return ScalarField.zeros(grid)
    free = FreePropagator(grid)
    times, weights = cfg.times(), cfg.trapezoid_weights()
    dt = cfg.step
    damp = np.exp(-cfg.eps_reg * times)
    spec = free.to_spectrum(f.values)

    def vu(j: int) -> np.ndarray:
        return v * free.from_spectrum(np.exp(-1j * times[j] * free.symbol) * spec)

    last = len(times) - 1
    acc = np.zeros(grid.shape, dtype=np.complex128)
    if n == 1:
        for j in range(last, -1, -1):
            if j < last:
                acc = free.evolve(acc, -dt)
            acc += weights[j] * damp[j] * vu(j)
        return f.with_values(1j * acc)

    # P_j = exp(-i t_j H0) Q(t_j), built backwards from P_N = 0
    p = np.zeros(grid.shape, dtype=np.complex128)
    later = vu(last)
    for j in range(last, -1, -1):
        if j < last:
            current = vu(j)
            p = free.evolve(p + 0.5 * dt * damp[j + 1] * later, -dt) + 0.5 * dt * damp[j] * current
            later = current
            acc = free.evolve(acc, -dt)
        acc += weights[j] * v * p
    return f.with_values(-acc)


def project_continuous(
    f: ScalarField, pot: Potential, spectrum: PointSpectrum | None = None
) -> ScalarField:
    """P_c f = f - sum_l <e_l, f> e_l over the bound states of H."""
    if spectrum is None:
        spectrum = point_spectrum(pot, f.grid)
    out = f
    for e in spectrum.eigenfunctions:
        out = out - e.scaled(e.inner(out))
    return out


def w_minus(f: ScalarField, pot: Potential, cfg: EvolutionConfig, check_tail: bool = True) -> ScalarField:
    """W_- f = conj(W_+ conj(f)) for real V."""
    return cook_wave_operator(f.conj(), pot, cfg, check_tail).conj()


def w_minus_adjoint_time(f: ScalarField, pot: Potential, cfg: EvolutionConfig) -> ScalarField:
    """W_-^* f = f + i int_0^T exp(-isH0) V exp(isH) f e^{-eps s} ds."""
    grid = f.grid
    v = _potential_values(pot, grid)
    if not np.any(v):
        return f
    free = FreePropagator(grid)
    back = SplitStepPropagator(grid, v, -cfg.step)
    times, weights = cfg.times(), cfg.trapezoid_weights()
    u = f.values
    acc = np.zeros(grid.shape, dtype=np.complex128)
    for j, s in enumerate(times):
        if j:
            u = back.step(u)
        acc += weights[j] * math.exp(-cfg.eps_reg * s) * np.exp(-1j * s * free.symbol) * free.to_spectrum(v * u)
    return f.with_values(f.values + 1j * free.from_spectrum(acc))


def assemble_cook_matrix(grid: Grid3, pot: Potential, cfg: EvolutionConfig) -> np.ndarray:
    """Dense matrix of W_+^eps on a tiny grid, column by column."""
    n = grid.size
    cols = np.empty((n, n), dtype=np.complex128)
    for j in range(n):
        e = np.zeros(n, dtype=np.complex128)
        e[j] = 1.0
        cols[:, j] = cook_wave_operator(ScalarField(grid, e), pot, cfg, check_tail=False).values.ravel()
    return cols


@dataclass(frozen=True)
class EpsilonSweep:
    epsilons: tuple[float, ...]
    differences: tuple[float, ...]
    decreasing: bool


def epsilon_sweep(f: ScalarField, pot: Potential, cfg: EvolutionConfig, eps: Sequence[float]) -> EpsilonSweep:
    """Cook results along a decreasing eps schedule; relative successive differences."""
    results = [cook_wave_operator(f, pot, cfg.with_epsilon(e), check_tail=False) for e in eps]
    scale = max(f.l2_norm(), 1e-300)
    diffs = tuple((b - a).l2_norm() / scale for a, b in zip(results, results[1:]))
    decreasing = all(d2 <= d1 * (1 + 1e-12) for d1, d2 in zip(diffs, diffs[1:]))
    return EpsilonSweep(tuple(eps), diffs, decreasing)


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    constant: float


def dispersive_decay_fit(f: ScalarField, times: Sequence[float]) -> DecayFit:
    """Fit sup|exp(-itH0) f| ~ C t^p ||f||_1 on the given times."""
    times = np.asarray(times, dtype=float)
    free = FreePropagator(f.grid)
    sup = np.array([np.abs(free.evolve(f.values, t)).max() for t in times]) / max(f.l1_norm(), 1e-300)
    p, logc = np.polyfit(np.log(times), np.log(sup), 1)
    return DecayFit(float(p), float(math.exp(logc)))
