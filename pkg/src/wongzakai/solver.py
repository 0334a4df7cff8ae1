"""Time integration of the Wong-Zakai-Galerkin equation and of the reference solution.

Both integrators use exponential Euler (ETD1) in sine coordinates: the heat
part and any per-interval constant forcing are integrated exactly, the drift
is frozen at the start of every substep and evaluated on a dealiased grid.

* :func:`solve_wz` advances ``u^{m,n}`` with the slope of the piecewise-linear
  Brownian interpolant as forcing on every WZ interval.
* :func:`solve_reference` advances ``z = u - W_A`` for ``z' = A z + F(z + W_A)``
  where ``W_A`` is sampled exactly on the finest grid of the noise path,
  conditionally on its increments, so it shares the path with every WZ run.

The ``*_block`` functions do the same for a stack of samples; they never
raise on blow-up but report which rows failed.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from math import ceil, gcd

import numpy as np

from . import noise
from .drift import DriftSpec, NumericalBlowUp, apply_values
from .ou import bridge_normals, ou_exact_step
from .spectral import SpectralField, analyze, eigenvalues, resize_modes, synthesize

DEFAULT_MONITORS = 17
_FINITE_CHECK_EVERY = 64


def monitor_grid(T: float, count: int = DEFAULT_MONITORS) -> tuple:
    return tuple(float(x) for x in np.linspace(0.0, T, count))


def default_substeps(m: int, n: int, T: float = 1.0, n_monitor: int = DEFAULT_MONITORS) -> int:
    """max(1, ceil(lambda_n T / (4 m))), rounded up so monitor times hit substep boundaries."""
    K = max(1, ceil(eigenvalues(n)[-1] * T / (4 * m)))
    if n_monitor > 1:
        need = (n_monitor - 1) // gcd(n_monitor - 1, m)
        K = -(-K // need) * need
    return K


@dataclass(frozen=True)
class SolverConfig:
    m: int
    n: int
    K: int
    G: int
    drift: DriftSpec
    u0: SpectralField
    T: float = 1.0
    monitor_times: tuple = monitor_grid(1.0)

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError(f"m and n must be >= 1 (got m={self.m}, n={self.n})")
        if self.K < 1:
            raise ValueError(f"substeps per interval K must be >= 1, got {self.K}")
        if self.G + 1 < 4 * self.n:
            raise ValueError(f"grid size G={self.G} too small for n={self.n}: need G + 1 >= 4 n")
        times = tuple(float(t) for t in self.monitor_times)
        if not times or times[0] != 0.0 or abs(times[-1] - self.T) > 1e-12 * self.T:
            raise ValueError("monitor_times must start at 0 and end at T")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("monitor_times must be strictly increasing")
        object.__setattr__(self, "monitor_times", times)
        self.monitor_steps()

    @property
    def total_steps(self) -> int:
        return self.m * self.K

    @property
    def delta(self) -> float:
        return self.T / self.total_steps

    def monitor_steps(self) -> list:
        steps = []
        for t in self.monitor_times:
            k = t / self.delta
            if abs(k - round(k)) > 1e-8 * max(1.0, k):
                raise ValueError(
                    f"monitor time {t} is not a substep boundary (m={self.m}, K={self.K})")
            steps.append(int(round(k)))
        return steps


def make_config(m: int, n: int, drift: DriftSpec, u0: SpectralField, T: float = 1.0,
                K: int | None = None, G: int | None = None, n_monitor: int = DEFAULT_MONITORS) -> SolverConfig:
    from .spectral import dealiased_grid_size

    return SolverConfig(
        m=m, n=n,
        K=default_substeps(m, n, T, n_monitor) if K is None else K,
        G=dealiased_grid_size(n) if G is None else G,
        drift=drift, u0=u0, T=T,
        monitor_times=monitor_grid(T, n_monitor),
    )


@dataclass(frozen=True)
class Trajectory:
    """Coefficients at the monitor times, ``states[k]`` belongs to ``times[k]``."""

    times: tuple
    states: np.ndarray
    config: SolverConfig
    sample_id: int
    kind: str
    noise_checksum: str = ""

    def state(self, k: int) -> SpectralField:
        return SpectralField(self.states[k])

    @property
    def n_modes(self) -> int:
        return self.states.shape[-1]

    def to_csv(self, file) -> None:
        with open(file, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "mode_index", "coefficient"])
            for t, row in zip(self.times, self.states):
                for j, c in enumerate(row, start=1):
                    w.writerow([f"{t:.17g}", j, f"{c:.17g}"])


class _ETD1:
    """Exponential Euler in sine coordinates with fixed substep ``delta``."""

    def __init__(self, n: int, delta: float, drift: DriftSpec, G: int):
        lam = eigenvalues(n)
        self.n, self.G, self.drift = n, G, drift
        self.decay = np.exp(-lam * delta)
        self.gain = -np.expm1(-lam * delta) / lam

    def nonlinear(self, c: np.ndarray) -> np.ndarray:
        return analyze(apply_values(self.drift, synthesize(c, self.G)), self.n)

    def step(self, c: np.ndarray, forcing, shift: np.ndarray | None = None) -> np.ndarray:
        """One substep; the drift sees ``c + shift`` (the reference passes W_A as shift)."""
        if self.drift.vanishes:
            rhs = forcing
        else:
            rhs = self.nonlinear(c if shift is None else c + shift) + forcing
        return self.decay * c + self.gain * rhs


def etd1_substep(state: SpectralField, forcing, delta: float, drift: DriftSpec, G: int) -> SpectralField:
    if delta <= 0:
        raise ValueError(f"substep length must be positive, got {delta}")
    out = _ETD1(state.n_modes, delta, drift, G).step(state.coeffs[None, :], np.asarray(forcing, float))[0]
    if not np.all(np.isfinite(out)):
        raise NumericalBlowUp("non-finite coefficients after ETD1 substep")
    return SpectralField(out)


def _screen(c: np.ndarray, failed: np.ndarray) -> None:
    bad = ~np.all(np.isfinite(c), axis=1)
    if bad.any():
        failed |= bad
        c[bad] = 0.0


def integrate_wz_block(u0: np.ndarray, coarse: np.ndarray, cfg: SolverConfig):
    """WZ integration for a block: ``u0`` (B, n), ``coarse`` increments (B, n, m).

    Returns (states (B, n_times, n), failed (B,)).
    """
    B = coarse.shape[0]
    n, m, K = cfg.n, cfg.m, cfg.K
    if coarse.shape[1:] != (n, m):
        raise ValueError(f"expected increments of shape (B, {n}, {m}), got {coarse.shape}")
    stepper = _ETD1(n, cfg.delta, cfg.drift, cfg.G)
    slopes = coarse * (m / cfg.T)
    record = {k: idx for idx, k in enumerate(cfg.monitor_steps())}
    out = np.zeros((B, len(record), n))
    failed = np.zeros(B, dtype=bool)
    c = np.array(resize_modes(u0, n), dtype=float)
    if 0 in record:
        out[:, record[0]] = c
    k = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(m):
            g = slopes[:, :, i]
            for _ in range(K):
                c = stepper.step(c, g)
                k += 1
                if k % _FINITE_CHECK_EVERY == 0 or k in record:
                    _screen(c, failed)
                if k in record:
                    out[:, record[k]] = c
    return out, failed


class _ExactOU:
    """Exact W_A on the finest grid, linearly interpolated between nodes."""

    def __init__(self, seed: int, sample_ids, increments: np.ndarray, T: float):
        self.seed, self.sids, self.inc = seed, np.asarray(sample_ids), increments
        B, self.n, self.M = increments.shape
        self.tau = T / self.M
        self.lam = eigenvalues(self.n)
        self.node = 0
        self.lo = np.zeros((B, self.n))
        self.hi = self._advance(self.lo, 0)

    def _advance(self, c, i):
        return ou_exact_step(c, self.inc[:, :, i], self.tau, self.lam,
                             bridge_normals(self.seed, self.sids, self.n, i))

    def at(self, num: int, den: int) -> np.ndarray:
        """W_A at time (num / den) * T."""
        q, r = divmod(num * self.M, den)
        while self.node < q:
            self.lo = self.hi
            self.node += 1
            if self.node < self.M:
                self.hi = self._advance(self.lo, self.node)
        if r == 0:
            return self.lo
        return self.lo + (r / den) * (self.hi - self.lo)


def integrate_reference_block(seed: int, sample_ids, u0: np.ndarray, increments: np.ndarray, cfg: SolverConfig):
    """Reference integration for a block, ``increments`` (B, n_ref, 2**L) at the finest level."""
    B, n, M = increments.shape
    if n != cfg.n:
        raise ValueError(f"increment rows {n} do not match n_ref={cfg.n}")
    if M % cfg.m:
        raise ValueError(f"m_ref={cfg.m} does not divide 2**L={M}")
    S = cfg.total_steps
    stepper = _ETD1(n, cfg.delta, cfg.drift, cfg.G)
    ou = _ExactOU(seed, sample_ids, increments, cfg.T)
    record = {k: idx for idx, k in enumerate(cfg.monitor_steps())}
    out = np.zeros((B, len(record), n))
    failed = np.zeros(B, dtype=bool)
    z = np.array(resize_modes(u0, n), dtype=float) * np.ones((B, 1))
    if 0 in record:
        out[:, record[0]] = z
    zero = np.zeros((B, n))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(S):
            w = ou.at(k, S)
            z = stepper.step(z, zero, shift=w)
            if (k + 1) % _FINITE_CHECK_EVERY == 0 or (k + 1) in record:
                _screen(z, failed)
            if (k + 1) in record:
                out[:, record[k + 1]] = z + ou.at(k + 1, S)
    return out, failed


def _check_path(cfg: SolverConfig, path: noise.NoisePath) -> None:
    if path.M % cfg.m:
        raise ValueError(f"m={cfg.m} does not divide the path's 2**L={path.M}")
    if cfg.n > path.n_max:
        raise ValueError(f"n={cfg.n} exceeds the path's n_max={path.n_max}")
    if abs(cfg.T - path.T) > 1e-12 * cfg.T:
        raise ValueError("solver horizon and path horizon differ")


def solve_wz(config: SolverConfig, path: noise.NoisePath) -> Trajectory:
    _check_path(config, path)
    coarse = noise.coarsen(path, config.m)[: config.n]
    states, failed = integrate_wz_block(config.u0.coeffs[None, :], coarse[None], config)
    if failed[0]:
        raise NumericalBlowUp(f"WZ trajectory blew up (sample {path.sample_id}, m={config.m}, n={config.n})")
    return Trajectory(config.monitor_times, states[0], config, path.sample_id, "wz", path.checksum(config.n))


def solve_reference(config: SolverConfig, path: noise.NoisePath) -> Trajectory:
    _check_path(config, path)
    inc = np.asarray(path.increments[: config.n])[None]
    states, failed = integrate_reference_block(path.seed, [path.sample_id], config.u0.coeffs[None, :], inc, config)
    if failed[0]:
        raise NumericalBlowUp(f"reference trajectory blew up (sample {path.sample_id})")
    return Trajectory(config.monitor_times, states[0], config, path.sample_id, "reference", path.checksum(config.n))
