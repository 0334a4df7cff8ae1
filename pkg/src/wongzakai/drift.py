"""Monotone polynomial drifts and their pointwise (Nemytskii) lifting.

A drift carries the constants of the one-sided condition

    (f(x) - f(y)) (x - y) <= b |x - y|^2 - L_f |x - y|^q

and of the derivative growth bound ``|f'(x)| <= Lt_f (1 + |x|^(q-2))``.
Built-in drifts are module-level partials so they pickle into worker
processes.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .spectral import GridField


class NumericalBlowUp(ArithmeticError):
    """A trajectory or drift evaluation produced non-finite values."""


@dataclass(frozen=True)
class DriftSpec:
    name: str
    f: Callable[[np.ndarray], np.ndarray]
    fprime: Callable[[np.ndarray], np.ndarray]
    b: float
    L_f: float
    Lt_f: float
    q: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.q < 2:
            raise ValueError(f"growth order q must be >= 2, got {self.q}")
        if self.L_f < 0 or self.Lt_f < 0:
            raise ValueError("L_f and Lt_f must be non-negative")
        if not np.isfinite(self.f(np.zeros(1))[0]):
            raise ValueError("f(0) must be finite")

    @property
    def vanishes(self) -> bool:
        """True when f is identically zero (solvers skip the grid round trip)."""
        return self.params.get("lam", None) == 0 and self.params.get("a", None) == 0

    def growth_constant(self) -> float:
        return abs(float(self.f(np.zeros(1))[0])) + 2.0 * self.Lt_f


def _ipow(x: np.ndarray, k: int) -> np.ndarray:
    # repeated products: far cheaper than the generic pow ufunc for small k
    out = np.ones_like(x) if k == 0 else x
    for _ in range(k - 1):
        out = out * x
    return out


def _odd_poly(x, lam, a, q):
    x = np.asarray(x, dtype=float)
    return lam * x - a * _ipow(x, q - 1)


def _odd_poly_prime(x, lam, a, q):
    x = np.asarray(x, dtype=float)
    return lam - a * (q - 1) * _ipow(x, q - 2)


def odd_poly(lam: float = 1.0, a: float = 1.0, q: int = 4, name: str = "odd-poly") -> DriftSpec:
    """f(x) = lam x - a x^(q-1) for even q >= 2 and a >= 0.

    Uses (x^r - y^r)(x - y) >= 2^(1-r) |x - y|^(r+1) for odd r = q - 1.
    """
    if q < 2 or q % 2:
        raise ValueError(f"odd-poly needs an even q >= 2, got {q}")
    if a < 0:
        raise ValueError(f"leading coefficient a must be >= 0, got {a}")
    q = int(q)
    return DriftSpec(
        name=name,
        f=functools.partial(_odd_poly, lam=lam, a=a, q=q),
        fprime=functools.partial(_odd_poly_prime, lam=lam, a=a, q=q),
        b=float(lam),
        L_f=a * 2.0 ** (2 - q),
        Lt_f=max(abs(lam), a * (q - 1)),
        q=q,
        params={"lam": lam, "a": a, "q": q},
    )


def allen_cahn() -> DriftSpec:
    """f(x) = x - x^3: b = 1, L_f = 1/4, Lt_f = 3, q = 4."""
    return odd_poly(1.0, 1.0, 4, name="allen-cahn")


def zero_drift() -> DriftSpec:
    return odd_poly(0.0, 0.0, 2, name="zero")


def drift_from_config(name: str, lam: float = 1.0, a: float = 1.0, q: int = 4) -> DriftSpec:
    if name == "allen-cahn":
        return allen_cahn()
    if name == "odd-poly":
        return odd_poly(lam, a, q)
    raise ValueError(f"unknown drift {name!r}; expected 'allen-cahn' or 'odd-poly'")


def apply_values(drift: DriftSpec, values: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        return drift.f(values)


def nemytskii_apply(drift: DriftSpec, grid: GridField) -> GridField:
    out = apply_values(drift, grid.values)
    bad = np.flatnonzero(~np.isfinite(out))
    if bad.size:
        g = int(bad[0])
        raise NumericalBlowUp(f"drift overflow at node {g + 1} (value {grid.values[g]!r})")
    return GridField(out)


@dataclass(frozen=True)
class OneSidedReport:
    max_violation: float
    threshold: float
    n_pairs: int
    box_radius: float

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.threshold


def verify_one_sided(drift: DriftSpec, n_pairs: int, box_radius: float, rng: np.random.Generator) -> OneSidedReport:
    """Randomised check of the one-sided Lipschitz condition on [-R, R]^2."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    x, y = rng.uniform(-box_radius, box_radius, size=(2, n_pairs))
    d = np.abs(x - y)
    v = (drift.f(x) - drift.f(y)) * (x - y) - drift.b * d**2 + drift.L_f * d**drift.q
    return OneSidedReport(float(v.max()), 1e-12 * (1 + box_radius**drift.q), n_pairs, box_radius)


def growth_violations(drift: DriftSpec, lo: float = 1e-3, hi: float = 1e3, num: int = 2001) -> dict:
    """Largest relative excess over the value and derivative growth bounds on +/- a log grid.

    Non-positive means the bound holds; relative so that rounding at large |x| stays near 1e-16.
    """
    r = np.logspace(np.log10(lo), np.log10(hi), num)
    x = np.concatenate([-r[::-1], r])
    f_bound = drift.growth_constant() * (1 + np.abs(x) ** (drift.q - 1))
    fp_bound = drift.Lt_f * (1 + np.abs(x) ** (drift.q - 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        f_excess = (np.abs(drift.f(x)) - f_bound) / f_bound
        fp_excess = (np.abs(drift.fprime(x)) - fp_bound) / fp_bound
    return {"f": float(np.nanmax(f_excess)), "fprime": float(np.nanmax(fp_excess))}
