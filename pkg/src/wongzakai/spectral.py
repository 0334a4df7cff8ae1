"""Sine-spectral representation on (0, 1) with homogeneous Dirichlet data.

A function is stored either as coefficients ``c_k`` of the orthonormal
Laplacian eigenbasis ``e_k(x) = sqrt(2) sin(k pi x)`` or as values on the
interior nodes ``x_g = g / (G + 1)``.  The two are related by a type-I
discrete sine transform.  Array helpers act on the last axis so a batch of
samples can be pushed through in one call.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class SpectralField:
    """Coefficients ``c_1 .. c_n`` of a sine expansion."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coeffs must be a non-empty 1-d array")
        if not np.all(np.isfinite(c)):
            raise ValueError("coeffs must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def n_modes(self) -> int:
        return self.coeffs.size

    @classmethod
    def zeros(cls, n: int) -> "SpectralField":
        return cls(np.zeros(n))

    @classmethod
    def mode(cls, k: int, n: int, amplitude: float = 1.0) -> "SpectralField":
        c = np.zeros(n)
        c[k - 1] = amplitude
        return cls(c)

    def padded(self, n: int) -> "SpectralField":
        """Zero-pad (or truncate, which is the projection P_n) to ``n`` modes."""
        return SpectralField(resize_modes(self.coeffs, n))


@dataclass(frozen=True)
class GridField:
    """Values at the interior nodes x_g = g/(G+1); boundary zeros are implicit."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("values must be a non-empty 1-d array")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def G(self) -> int:
        return self.values.size

    @property
    def nodes(self) -> np.ndarray:
        return grid_nodes(self.G)


def grid_nodes(G: int) -> np.ndarray:
    return np.arange(1, G + 1) / (G + 1)


def eigenvalue(j):
    """Dirichlet Laplacian eigenvalue ``(j pi)^2``; ``j`` may be an array."""
    j = np.asarray(j)
    if np.any(j < 1):
        raise ValueError(f"mode index must be >= 1, got {j}")
    out = (j * np.pi) ** 2
    return float(out) if out.ndim == 0 else out


def eigenvalues(n: int) -> np.ndarray:
    return (np.arange(1, n + 1) * np.pi) ** 2


def dealiased_grid_size(n: int) -> int:
    """Smallest G = 2**l - 1 with G + 1 >= 4 n (room for cubic products)."""
    size = 1
    while size < 4 * n:
        size *= 2
    return size - 1


def resize_modes(coeffs: np.ndarray, n: int) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    have = coeffs.shape[-1]
    if have == n:
        return coeffs
    if have > n:
        return coeffs[..., :n]
    out = np.zeros(coeffs.shape[:-1] + (n,))
    out[..., :have] = coeffs
    return out


def synthesize(coeffs: np.ndarray, G: int) -> np.ndarray:
    """Evaluate sum_k c_k sqrt(2) sin(k pi x_g) for every node (fast DST-I)."""
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.shape[-1]
    if G < n:
        raise ValueError(f"grid size G={G} is smaller than n_modes={n} (aliasing)")
    return scipy.fft.dst(resize_modes(coeffs, G), type=1, axis=-1) / SQRT2


def analyze(values: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`synthesize`, keeping the first ``n`` coefficients."""
    values = np.asarray(values, dtype=float)
    G = values.shape[-1]
    if n > G:
        raise ValueError(f"cannot extract n={n} modes from a grid of size G={G}")
    return scipy.fft.dst(values, type=1, axis=-1)[..., :n] / (SQRT2 * (G + 1))


def sine_matrix(n: int, G: int) -> np.ndarray:
    """Dense (G, n) matrix of basis values, for O(nG) direct evaluation."""
    k = np.arange(1, n + 1)
    return SQRT2 * np.sin(np.pi * np.outer(grid_nodes(G), k))


def synthesize_direct(coeffs: np.ndarray, G: int) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float)
    if G < coeffs.shape[-1]:
        raise ValueError(f"grid size G={G} is smaller than n_modes={coeffs.shape[-1]}")
    return coeffs @ sine_matrix(coeffs.shape[-1], G).T


def analyze_direct(values: np.ndarray, n: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    G = values.shape[-1]
    if n > G:
        raise ValueError(f"cannot extract n={n} modes from a grid of size G={G}")
    return values @ sine_matrix(n, G) / (G + 1)


def to_grid(field: SpectralField, G: int) -> GridField:
    return GridField(synthesize(field.coeffs, G))


def to_spectral(grid: GridField, n: int) -> SpectralField:
    return SpectralField(analyze(grid.values, n))


def decay_factors(n: int, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError(f"semigroup time must be >= 0, got {t}")
    return np.exp(-eigenvalues(n) * t)


def semigroup_apply(field: SpectralField, t: float) -> SpectralField:
    """Heat semigroup S(t): c_k -> exp(-lambda_k t) c_k."""
    return SpectralField(decay_factors(field.n_modes, t) * field.coeffs)


def lp_power(values: np.ndarray, p: float) -> np.ndarray:
    """p-th power of the rectangle-rule L^p norm along the last axis."""
    values = np.asarray(values, dtype=float)
    G = values.shape[-1]
    a = np.abs(values)
    if p == 2:
        s = np.einsum("...i,...i->...", a, a)
    else:
        s = np.sum(a**p, axis=-1)
    return s / (G + 1)


def lp_norm(grid: GridField, p: float) -> float:
    """(int_0^1 |u|^p dx)^(1/p) by the rectangle rule on interior nodes."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return float(lp_power(grid.values, p) ** (1.0 / p))
