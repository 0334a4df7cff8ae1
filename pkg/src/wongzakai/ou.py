"""Exact and Wong-Zakai Ornstein-Uhlenbeck processes, one sine mode at a time.

Mode ``j`` of the stochastic convolution solves ``dc = -lambda_j c dt + d beta_j``.
The Wong-Zakai-Galerkin version replaces ``d beta_j`` on every interval by the
constant slope of the piecewise-linear interpolant, and drops the modes above
``n``.  Everything here works on numpy arrays elementwise.

For the closed forms we repeatedly need

    E1(x)  = (1 - e^-x) / x
    phi(x) = (1 - e^-2x) / (2x) - E1(x)^2   (the variance of e^{-x U}, U ~ Unif(0,1))

``phi`` loses all digits to cancellation for small ``x``, so it switches to
its Taylor series there.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from . import noise
from .spectral import eigenvalues, synthesize

_PHI_SWITCH = 0.5
_PHI_TERMS = 40
# phi(x) = sum_k (-1)^k (2^k (k - 2) + 2) / (k + 2)! x^k
_PHI_COEFFS = np.array([(-1) ** k * (2.0**k * (k - 2) + 2) / factorial(k + 2) for k in range(_PHI_TERMS)])


def expm1_ratio(x):
    """E1(x) = (1 - e^-x)/x with E1(0) = 1."""
    x = np.asarray(x, dtype=float)
    safe = np.where(x == 0, 1.0, x)
    return np.where(x == 0, 1.0, -np.expm1(-safe) / safe)


def phi(x):
    x = np.asarray(x, dtype=float)
    small = x < _PHI_SWITCH
    xs = np.where(small, x, 0.0)
    series = np.polynomial.polynomial.polyval(xs, _PHI_COEFFS)
    xl = np.where(small, 1.0, x)
    direct = -np.expm1(-2 * xl) / (2 * xl) - expm1_ratio(xl) ** 2
    return np.where(small, series, direct)


def ou_wz_step(c, dbeta, tau, lam):
    """Advance c' = -lam c + dbeta/tau exactly over one interval of length tau."""
    if np.any(np.asarray(tau) <= 0) or np.any(np.asarray(lam) <= 0):
        raise ValueError("tau and lambda must be positive")
    x = lam * tau
    return c * np.exp(-x) + dbeta * expm1_ratio(x)


def exact_step_moments(dbeta, tau, lam):
    """Conditional mean and variance of the fresh OU contribution given the increment.

    With V = (1 - e^-2x)/(2 lam) and Cov = (1 - e^-x)/lam (x = lam tau) the
    bridge identity gives mean Cov/tau * dbeta and variance V - Cov^2/tau,
    which equals tau * phi(x).
    """
    x = lam * tau
    mean = expm1_ratio(x) * dbeta
    var = tau * phi(x)
    lowest = np.min(var)
    if lowest < -1e-15:
        raise FloatingPointError(f"negative conditional variance {lowest!r}")
    return mean, np.maximum(var, 0.0)


def ou_exact_step(c, dbeta, tau, lam, gaussian_draw):
    """Sample W_A(t + tau) given W_A(t) = c and the Brownian increment over the step."""
    if np.any(np.asarray(tau) <= 0) or np.any(np.asarray(lam) <= 0):
        raise ValueError("tau and lambda must be positive")
    mean, var = exact_step_moments(dbeta, tau, lam)
    return np.exp(-lam * tau) * c + mean + np.sqrt(var) * gaussian_draw


def _psi_scaled(lam, h, d, s):
    """Psi / h^3 for an interval of length h, overlap d = min(h, t - t_i), lag s."""
    rho = d / h
    y = lam * d
    inner = phi(y) + (1 - rho) * expm1_ratio(y) ** 2
    return np.exp(-2 * lam * s) * rho * inner


def psi_integral(lam, t_lo: float, t_hi: float, t: float) -> float:
    """The per-interval squared averaging defect

        Psi = int_I [ int_I (chi_{r<t} e^{-lam(t-r)} - chi_{u<t} e^{-lam(t-u)}) du ]^2 dr

    over I = (t_lo, t_hi], in closed form.  Zero when t <= t_lo; for t inside
    the interval the integrand is split at t.
    """
    if not t_hi > t_lo:
        raise ValueError(f"degenerate interval ({t_lo}, {t_hi})")
    if t <= t_lo:
        return 0.0
    h = t_hi - t_lo
    d = min(h, t - t_lo)
    s = max(0.0, t - t_hi)
    return float(h**3 * _psi_scaled(lam, h, d, s))


def _split_time(t: float, m: int, T: float):
    """Number of whole intervals before t and the leftover overlap."""
    h = T / m
    r = t / h
    K = int(np.floor(r))
    if r - K > 1 - 1e-12:
        K += 1
    K = min(K, m)
    d = t - K * h
    if d < 1e-12 * h:
        d = 0.0
    return h, K, d


def temporal_error_modes(t: float, m: int, n: int, T: float = 1.0) -> np.ndarray:
    """Per-mode (m/T)^2 sum_i Psi_j^i(t) for j = 1..n: the mean-square WZ defect."""
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    if not 0 <= t <= T:
        raise ValueError(f"t={t} outside [0, {T}]")
    lam = eigenvalues(n)
    h, K, d = _split_time(t, m, T)
    total = np.zeros(n)
    if K:
        # full intervals lag d, d + h, ..., d + (K-1) h behind t: a geometric sum
        geo = np.expm1(-2 * lam * h * K) / np.expm1(-2 * lam * h)
        total += phi(lam * h) * np.exp(-2 * lam * d) * geo
    if d > 0:
        total += _psi_scaled(lam, h, d, 0.0)
    return h * total


def tail_variance(t: float, n: int, j_cutoff: int = 10**6):
    """Sum_{j=n+1}^{J} (1 - e^{-2 lam_j t}) / (2 lam_j) and the bound 1/(2 pi^2 J) on the rest."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if t < 0:
        raise ValueError("t must be >= 0")
    lam = (np.arange(n + 1, max(n, j_cutoff) + 1) * np.pi) ** 2
    partial = float(np.sum(-np.expm1(-2 * lam * t) / (2 * lam))) if lam.size else 0.0
    remainder = 1.0 / (2 * np.pi**2 * j_cutoff) if t > 0 else 0.0
    return partial, remainder


def tail_variances(t: float, ns, j_cutoff: int = 10**6) -> np.ndarray:
    """:func:`tail_variance` for many n at once, from one suffix sum (smallest terms first)."""
    ns = np.asarray(ns, dtype=np.int64)
    if ns.size and (ns.min() < 1 or ns.max() > j_cutoff):
        raise ValueError("need 1 <= n <= j_cutoff")
    if t < 0:
        raise ValueError("t must be >= 0")
    lam = (np.arange(1, j_cutoff + 1) * np.pi) ** 2
    terms = -np.expm1(-2 * lam * t) / (2 * lam)
    suffix = np.concatenate([np.cumsum(terms[::-1])[::-1], [0.0]])
    return suffix[ns]


def tail_lower_bound(t: float, n: int) -> float:
    return t / (2 * (1 + 2 * np.pi**2 * t)) / n


@dataclass(frozen=True)
class OUErrorBreakdown:
    t: float
    m: int
    n: int
    temporal: float
    tail: float
    tail_remainder_bound: float

    @property
    def mse(self) -> float:
        return self.temporal + self.tail


def ou_error_breakdown(t: float, m: int, n: int, T: float = 1.0, j_tail_cutoff: int = 10**6) -> OUErrorBreakdown:
    if j_tail_cutoff < n:
        raise ValueError(f"tail cutoff {j_tail_cutoff} is below n={n}")
    temporal = float(np.sum(temporal_error_modes(t, m, n, T)))
    tail, rem = tail_variance(t, n, j_tail_cutoff)
    return OUErrorBreakdown(t, m, n, temporal, tail, rem)


def ou_mse_analytic(t: float, m: int, n: int, T: float = 1.0, j_tail_cutoff: int = 10**6) -> float:
    """E ||W_A(t) - W_A^{m,n}(t)||^2_{L^2}, modes above the cutoff excluded."""
    return ou_error_breakdown(t, m, n, T, j_tail_cutoff).mse


# Monte Carlo counterparts --------------------------------------------------

def bridge_normals(seed: int, sample_ids, n_modes: int, i) -> np.ndarray:
    """Extra draws for exact OU steps on finest interval(s) ``i``: shape (B, n_modes[, len(i)])."""
    sids = np.asarray(sample_ids, dtype=np.int64).reshape(-1, 1)
    j = np.arange(1, n_modes + 1).reshape(1, -1)
    if np.ndim(i):
        return noise.normals(seed, sids[..., None], noise.BRIDGE_STREAM, j[..., None], np.asarray(i)[None, None, :])
    return noise.normals(seed, sids, noise.BRIDGE_STREAM, j, i)


def exact_ou_block(seed: int, sample_ids, increments: np.ndarray, T: float, n_steps: int) -> np.ndarray:
    """Exact W_A at finest node ``n_steps`` for a block of paths, increments (B, n, 2**L)."""
    B, n, M = increments.shape
    tau = T / M
    lam = eigenvalues(n)
    c = np.zeros((B, n))
    for i in range(n_steps):
        c = ou_exact_step(c, increments[:, :, i], tau, lam, bridge_normals(seed, sample_ids, n, i))
    return c


def wz_ou_block(increments: np.ndarray, m: int, n: int, T: float, t: float) -> np.ndarray:
    """W_A^{m,n}(t) per mode 1..n from finest increments (B, n_max, 2**L)."""
    coarse = noise.coarsen_array(increments[:, :n, :], m)
    lam = eigenvalues(n)
    h, K, d = _split_time(t, m, T)
    c = np.zeros(coarse.shape[:2])
    for i in range(K):
        c = ou_wz_step(c, coarse[:, :, i], h, lam)
    if d > 0:
        c = ou_wz_step(c, coarse[:, :, K] * (d / h), d, lam)
    return c


@dataclass(frozen=True)
class OUMonteCarlo:
    mse: float
    stderr: float
    n_samples: int


def ou_mse_mc(t: float, pairs, T: float, N: int, seed: int, L: int, n_modes: int,
              chunk_size: int = 100) -> dict:
    """Coupled Monte Carlo estimates of E||W_A(t) - W_A^{m,n}(t)||^2 over modes 1..n_modes.

    One exact OU path per sample serves every ``(m, n)`` in ``pairs``; ``t``
    must sit on the finest grid of the path.  Returns ``{(m, n): OUMonteCarlo}``.
    """
    M = 2**L
    for m, n in pairs:
        if n > n_modes:
            raise ValueError(f"n={n} exceeds the simulated mode count {n_modes}")
        if M % m:
            raise ValueError(f"m={m} does not divide 2**L={M}")
    steps = t * M / T
    if abs(steps - round(steps)) > 1e-9:
        raise ValueError(f"t={t} is not on the finest grid of {M} intervals")
    steps = int(round(steps))
    errs = {pair: [] for pair in pairs}
    for start in range(0, N, chunk_size):
        sids = np.arange(start, min(N, start + chunk_size))
        inc = noise.increment_block(seed, sids, n_modes, L, T)
        exact = exact_ou_block(seed, sids, inc, T, steps)
        for m, n in pairs:
            diff = exact.copy()
            diff[:, :n] -= wz_ou_block(inc, m, n, T, t)
            errs[(m, n)].append(np.einsum("bj,bj->b", diff, diff))
    out = {}
    for pair, chunks in errs.items():
        e = np.concatenate(chunks)
        se = float(e.std(ddof=1) / np.sqrt(N)) if N > 1 else 0.0
        out[pair] = OUMonteCarlo(float(e.mean()), se, N)
    return out


def sample_ou_trajectories(seed: int, N: int, m: int, n: int, T: float, L: int | None = None) -> np.ndarray:
    """Exact OU coefficient paths at the m+1 nodes of the m-grid, shape (N, m+1, n)."""
    L = int(np.log2(m)) if L is None else L
    M = 2**L
    if M % m:
        raise ValueError(f"m={m} does not divide 2**L={M}")
    inc = noise.increment_block(seed, np.arange(N), n, L, T)
    lam = eigenvalues(n)
    tau = T / M
    out = np.zeros((N, m + 1, n))
    c = np.zeros((N, n))
    every = M // m
    for i in range(M):
        c = ou_exact_step(c, inc[:, :, i], tau, lam, bridge_normals(seed, np.arange(N), n, i))
        if (i + 1) % every == 0:
            out[:, (i + 1) // every] = c
    return out


def ou_sup_bound_check(grid_samples: np.ndarray, p: float):
    """Estimate E[sup_t ||W_A(t)||_inf^p] from samples shaped (N, n_times, G).

    Returns (estimate, standard error).
    """
    grid_samples = np.asarray(grid_samples, dtype=float)
    sup = np.abs(grid_samples).max(axis=(1, 2)) ** p
    N = sup.size
    se = float(sup.std(ddof=1) / np.sqrt(N)) if N > 1 else 0.0
    return float(sup.mean()), se


def ou_sup_moment(seed: int, N: int, m: int, n: int, p: float, T: float = 1.0, G: int | None = None):
    paths = sample_ou_trajectories(seed, N, m, n, T)
    G = G if G is not None else 4 * n - 1
    return ou_sup_bound_check(synthesize(paths, G), p)
