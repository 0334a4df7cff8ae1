"""Coupled Monte Carlo error studies, moment sweeps and rate regression.

Samples are processed in fixed chunks of consecutive sample ids.  A chunk's
result depends only on its ids, never on which worker ran it, and the final
reduction concatenates chunks in id order, so tables are bitwise identical
for any worker count.
"""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid

from . import noise
from .drift import DriftSpec, NumericalBlowUp, allen_cahn
from .solver import (DEFAULT_MONITORS, SolverConfig, Trajectory, default_substeps, integrate_reference_block,
                     integrate_wz_block, monitor_grid)
from .spectral import SpectralField, dealiased_grid_size, lp_power, resize_modes, synthesize

DEFAULT_CHUNK = 50


class StudyFailure(NumericalBlowUp):
    """A study had failed samples and failures were not allowed."""


@dataclass(frozen=True)
class StudyConfig:
    """Everything a coupled study needs apart from the (m, n) lists."""

    T: float = 1.0
    L: int = 10
    m_ref: int = 1024
    n_ref: int = 128
    K_ref: int | None = None
    K: int | None = None
    drift: DriftSpec = field(default_factory=allen_cahn)
    u0: SpectralField = field(default_factory=lambda: SpectralField([0.5]))
    p: float = 2.0
    n_monitor: int = DEFAULT_MONITORS
    G: int | None = None

    def __post_init__(self):
        if 2**self.L % self.m_ref:
            raise ValueError(f"m_ref={self.m_ref} does not divide 2**L={2**self.L}")
        if not 1 <= self.p <= 6:
            raise ValueError(f"p must lie in [1, 6], got {self.p}")

    @property
    def grid_size(self) -> int:
        return dealiased_grid_size(self.n_ref) if self.G is None else self.G

    def solver_config(self, m: int, n: int, K: int | None = None) -> SolverConfig:
        K = K if K is not None else default_substeps(m, n, self.T, self.n_monitor)
        return SolverConfig(m=m, n=n, K=K, G=dealiased_grid_size(n), drift=self.drift,
                            u0=self.u0.padded(n), T=self.T, monitor_times=monitor_grid(self.T, self.n_monitor))

    def reference_config(self) -> SolverConfig:
        return self.solver_config(self.m_ref, self.n_ref, self.K_ref)


# ---------------------------------------------------------------- errors

def strong_error(traj_a: Trajectory, traj_b: Trajectory, p: float, G: int) -> np.ndarray:
    """||u_a(t) - u_b(t)||_{L^p}^p at every shared monitor time."""
    if len(traj_a.times) != len(traj_b.times) or not np.allclose(traj_a.times, traj_b.times, rtol=0, atol=1e-12):
        raise ValueError("trajectories have different monitor grids")
    n = max(traj_a.n_modes, traj_b.n_modes)
    if G + 1 < 4 * n:
        raise ValueError(f"grid size G={G} too small for {n} modes")
    diff = resize_modes(traj_a.states, n) - resize_modes(traj_b.states, n)
    return lp_power(synthesize(diff, G), p)


@dataclass(frozen=True)
class ErrorRow:
    m: int
    n: int
    p: float
    sup_t_error: float
    integrated_error: float
    stderr: float
    n_samples: int
    n_failures: int
    mean_by_time: tuple = ()


@dataclass(frozen=True)
class ErrorTable:
    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(sorted(self.rows, key=lambda r: (r.m, r.n))))

    def row(self, m: int, n: int) -> ErrorRow:
        for r in self.rows:
            if r.m == m and r.n == n:
                return r
        raise KeyError((m, n))

    def to_csv(self, file) -> None:
        write_csv(file, ["m", "n", "p", "sup_t_error", "integrated_error", "stderr", "n_samples", "n_failures"],
                  [[r.m, r.n, r.p, r.sup_t_error, r.integrated_error, r.stderr, r.n_samples, r.n_failures]
                   for r in self.rows])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(file, header, rows) -> None:
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _chunks(N: int, size: int):
    return [np.arange(s, min(N, s + size)) for s in range(0, N, size)]


def _map(fn, tasks, workers: int):
    if workers <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def _error_chunk(study: StudyConfig, pairs, seed: int, sids):
    """Per-sample error powers for one chunk: dict (m, n) -> (e_p, e_pq, failed)."""
    ref_cfg = study.reference_config()
    B = len(sids)
    inc = noise.increment_block(seed, sids, study.n_ref, study.L, study.T)
    u0 = study.u0.padded(study.n_ref).coeffs[None, :]
    ref, ref_failed = integrate_reference_block(seed, sids, u0, inc, ref_cfg)
    G = study.grid_size
    q_exp = study.p + study.drift.q - 2
    out = {}
    for m, n in pairs:
        cfg = study.solver_config(m, n, study.K)
        coarse = noise.coarsen_array(inc[:, :n, :], m)
        wz, failed = integrate_wz_block(u0[:, :n], coarse, cfg)
        diff = ref.copy()
        diff[:, :, :n] -= wz
        vals = synthesize(diff.reshape(B * len(cfg.monitor_times), -1), G).reshape(B, len(cfg.monitor_times), G)
        out[(m, n)] = (lp_power(vals, study.p), lp_power(vals, q_exp), failed | ref_failed)
    return out


def _reduce(values: np.ndarray, keep: np.ndarray):
    v = values[keep]
    N = v.shape[0]
    mean = v.mean(axis=0)
    k = int(np.argmax(mean))
    se = float(v[:, k].std(ddof=1) / np.sqrt(N)) if N > 1 else 0.0
    return mean, k, se


def mc_error_study(study: StudyConfig, m_list, n_list, N: int, seed: int, workers: int = 1,
                   allow_failures: bool = False, chunk_size: int = DEFAULT_CHUNK) -> ErrorTable:
    """Reference vs WZ errors for every (m, n) in the product of the lists."""
    M = 2**study.L
    for m in m_list:
        if M % m:
            raise ValueError(f"m={m} does not divide 2**L={M}")
    for n in n_list:
        if n > study.n_ref:
            raise ValueError(f"n={n} exceeds n_ref={study.n_ref}")
    pairs = [(m, n) for m in m_list for n in n_list]
    results = _map(_error_chunk, [(study, pairs, seed, c) for c in _chunks(N, chunk_size)], workers)
    times = np.array(monitor_grid(study.T, study.n_monitor))
    rows = []
    for m, n in pairs:
        e_p = np.concatenate([r[(m, n)][0] for r in results])
        e_q = np.concatenate([r[(m, n)][1] for r in results])
        failed = np.concatenate([r[(m, n)][2] for r in results])
        nfail = int(failed.sum())
        if nfail and not allow_failures:
            raise StudyFailure(f"{nfail} of {N} samples blew up at (m={m}, n={n})")
        keep = ~failed
        if not keep.any():
            raise StudyFailure(f"every sample failed at (m={m}, n={n})")
        mean_p, k, se = _reduce(e_p, keep)
        integrated = float(trapezoid(e_q[keep].mean(axis=0), times))
        rows.append(ErrorRow(m, n, study.p, float(mean_p[k]), integrated, se, int(keep.sum()), nfail,
                             tuple(float(x) for x in mean_p)))
    return ErrorTable(tuple(rows))


# ---------------------------------------------------------------- rates

@dataclass(frozen=True)
class RateFit:
    axis: str
    p: float
    slope: float
    intercept: float
    r_squared: float
    rows_used: int


def fit_rate(table: ErrorTable, axis: str, p: float | None = None) -> RateFit:
    """OLS of log(sup_t_error^(1/p)) against log m (temporal) or log n (spatial)."""
    if axis not in ("temporal", "spatial"):
        raise ValueError(f"axis must be 'temporal' or 'spatial', got {axis!r}")
    rows = [r for r in table.rows if p is None or r.p == p]
    if p is None and rows:
        p = rows[0].p
        rows = [r for r in rows if r.p == p]
    others = {r.n if axis == "temporal" else r.m for r in rows}
    if len(others) > 1:
        raise ValueError(f"rows vary along both axes ({axis} fit needs the other axis fixed)")
    rows = [r for r in rows if r.n_failures == 0]
    return fit_points(axis, p, [r.m if axis == "temporal" else r.n for r in rows], [r.sup_t_error for r in rows])


def fit_points(axis: str, p: float, resolutions, errors) -> RateFit:
    """OLS of log(error^(1/p)) against log(resolution); non-positive errors are dropped."""
    res_err = [(x, e) for x, e in zip(resolutions, errors) if np.isfinite(e) and e > 0]
    if len(res_err) < 3:
        raise ValueError(f"need at least 3 usable rows for a rate fit, got {len(res_err)}")
    x = np.log([x for x, _ in res_err])
    y = np.log([e for _, e in res_err]) / p
    if np.ptp(x) == 0:
        raise ValueError("rate fit needs at least two distinct resolutions")
    res = stats.linregress(x, y)
    return RateFit(axis, p, float(res.slope), float(res.intercept), float(min(1.0, res.rvalue**2)), len(res_err))


def rates_to_csv(file, fits) -> None:
    write_csv(file, ["axis", "p", "slope", "intercept", "r_squared", "rows_used"],
              [[f.axis, f.p, f.slope, f.intercept, f.r_squared, f.rows_used] for f in fits])


# ---------------------------------------------------------------- moments

@dataclass(frozen=True)
class MomentRow:
    m: int
    n: int
    p: float
    sup_moment: float          # E[sup_t ||u(t)||_p^p]
    integrated_moment: float   # int_0^T E||u||_{p+q-2}^{p+q-2} dt
    stderr: float
    n_samples: int
    sup_of_mean: float         # sup_t E||u(t)||_p^p
    mean_by_time: tuple = ()


def _moment_chunk(study: StudyConfig, resolutions, p_list, seed: int, sids):
    out = {}
    for m, n in resolutions:
        cfg = study.solver_config(m, n, study.K_ref)
        inc = noise.increment_block(seed, sids, n, study.L, study.T)
        u, failed = integrate_reference_block(seed, sids, study.u0.padded(n).coeffs[None, :], inc, cfg)
        G = dealiased_grid_size(n)
        vals = synthesize(u, G)
        for p in p_list:
            out[(m, n, p)] = (lp_power(vals, p), lp_power(vals, p + study.drift.q - 2), failed)
    return out


def moment_sweep(study: StudyConfig, resolutions, p_list, N: int, seed: int, workers: int = 1,
                 chunk_size: int = DEFAULT_CHUNK):
    """Moments of the reference solution at each (m, n) resolution."""
    M = 2**study.L
    for m, n in resolutions:
        if M % m:
            raise ValueError(f"m={m} does not divide 2**L={M}")
    results = _map(_moment_chunk, [(study, list(resolutions), list(p_list), seed, c) for c in _chunks(N, chunk_size)],
                   workers)
    times = np.array(monitor_grid(study.T, study.n_monitor))
    rows = []
    for m, n in resolutions:
        for p in p_list:
            e_p = np.concatenate([r[(m, n, p)][0] for r in results])
            e_q = np.concatenate([r[(m, n, p)][1] for r in results])
            failed = np.concatenate([r[(m, n, p)][2] for r in results])
            if failed.any():
                raise StudyFailure(f"{int(failed.sum())} samples blew up at (m={m}, n={n})")
            sup = e_p.max(axis=1)
            mean_t = e_p.mean(axis=0)
            se = float(sup.std(ddof=1) / np.sqrt(N)) if N > 1 else 0.0
            rows.append(MomentRow(m, n, p, float(sup.mean()), float(trapezoid(e_q.mean(axis=0), times)), se, N,
                                  float(mean_t.max()), tuple(float(x) for x in mean_t)))
    return rows


def moments_to_csv(file, rows) -> None:
    write_csv(file, ["m", "n", "p", "sup_moment", "integrated_moment", "stderr", "n_samples"],
              [[r.m, r.n, r.p, r.sup_moment, r.integrated_moment, r.stderr, r.n_samples] for r in rows])


def relative_change(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b))

