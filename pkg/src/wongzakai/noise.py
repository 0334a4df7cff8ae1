"""Counter-based Brownian increments for the per-mode noise expansion.

Every Gaussian is a pure function of ``(seed, sample_id, stream, j, i)``:
the tuple is fed through Philox4x32-10 (Salmon et al., Random123), the first
64 output bits become a uniform in (0, 1) and the inverse normal CDF maps
that to a standard normal.  No generator state is carried between draws, so
any entry can be recomputed in isolation and samples can be farmed out to
workers in any order.

Increments live on the finest dyadic grid ``s_i = i T / 2**L``.  Coarser
resolutions are built by summing adjacent pairs level by level, which makes
the aggregation from any ``2m`` to ``m`` exact in floating point.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri

INCREMENT_STREAM = 0
BRIDGE_STREAM = 1

_MASK32 = 0xFFFFFFFF
_PHILOX_M0 = np.uint64(0xD2511F53)
_PHILOX_M1 = np.uint64(0xCD9E8D57)
_PHILOX_W0 = 0x9E3779B9
_PHILOX_W1 = 0xBB67AE85
_SHIFT32 = np.uint64(32)

DUMP_MAGIC = b"WZNP"
DUMP_VERSION = 1
_HEADER = struct.Struct("<4sIIId8x")  # 32 bytes, last 8 reserved


def philox4x32(counter, key, rounds: int = 10):
    """Vectorised Philox4x32 bijection.

    ``counter`` is a sequence of four broadcastable integer arrays (32-bit
    words), ``key`` a pair of 32-bit integers.  Returns four uint32 arrays.
    """
    c0, c1, c2, c3 = np.broadcast_arrays(*[np.asarray(c, dtype=np.uint64) & _MASK32 for c in counter])
    c0, c1, c2, c3 = (w.astype(np.uint32) for w in (c0, c1, c2, c3))
    k0, k1 = int(key[0]) & _MASK32, int(key[1]) & _MASK32
    for _ in range(rounds):
        p0 = _PHILOX_M0 * c0.astype(np.uint64)
        p1 = _PHILOX_M1 * c2.astype(np.uint64)
        hi0 = (p0 >> _SHIFT32).astype(np.uint32)
        hi1 = (p1 >> _SHIFT32).astype(np.uint32)
        c0, c1, c2, c3 = (
            hi1 ^ c1 ^ np.uint32(k0),
            p1.astype(np.uint32),
            hi0 ^ c3 ^ np.uint32(k1),
            p0.astype(np.uint32),
        )
        k0 = (k0 + _PHILOX_W0) & _MASK32
        k1 = (k1 + _PHILOX_W1) & _MASK32
    return c0, c1, c2, c3


def uniforms(seed: int, sample_id, stream: int, j, i) -> np.ndarray:
    """Uniforms on the open interval (0, 1), 53-bit resolution."""
    w0, w1, _, _ = philox4x32((i, j, sample_id, stream), (seed & _MASK32, (seed >> 32) & _MASK32))
    bits = (w0.astype(np.uint64) << _SHIFT32) | w1.astype(np.uint64)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def normals(seed: int, sample_id, stream: int, j, i) -> np.ndarray:
    """Standard normals keyed on ``(seed, sample_id, stream, j, i)``; inputs broadcast."""
    return ndtri(uniforms(seed, sample_id, stream, j, i))


@dataclass(frozen=True)
class NoisePath:
    """Finest-level increments ``increments[j-1, i] = beta_j(s_{i+1}) - beta_j(s_i)``."""

    seed: int
    sample_id: int
    T: float
    L: int
    n_max: int
    increments: np.ndarray

    @property
    def M(self) -> int:
        return 2**self.L

    def checksum(self, n_rows: int | None = None) -> str:
        rows = self.increments if n_rows is None else self.increments[:n_rows]
        return hashlib.sha256(np.ascontiguousarray(rows, dtype="<f8").tobytes()).hexdigest()

    def dump(self, file) -> None:
        """Write the debug dump: 32-byte header then little-endian f64, mode-major."""
        with open(file, "wb") as fh:
            fh.write(_HEADER.pack(DUMP_MAGIC, DUMP_VERSION, self.n_max, self.L, float(self.T)))
            fh.write(np.ascontiguousarray(self.increments, dtype="<f8").tobytes())


def load_path_dump(file, seed: int = 0, sample_id: int = 0) -> NoisePath:
    data = Path(file).read_bytes()
    magic, version, n_max, L, T = _HEADER.unpack_from(data)
    if magic != DUMP_MAGIC:
        raise ValueError(f"not a noise path dump: magic {magic!r}")
    if version != DUMP_VERSION:
        raise ValueError(f"unsupported dump version {version}")
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if body.size != n_max * 2**L:
        raise ValueError(f"dump body has {body.size} values, expected {n_max * 2**L}")
    return NoisePath(seed, sample_id, T, L, n_max, body.reshape(n_max, 2**L).astype(float))


def _check_key(seed: int, sample_id: int) -> None:
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must fit in 64 bits, got {seed}")
    if not 0 <= sample_id < 2**32:
        raise ValueError(f"sample_id must fit in 32 bits, got {sample_id}")


def increment_block(seed: int, sample_ids, n_max: int, L: int, T: float) -> np.ndarray:
    """Increments for several samples at once, shape ``(len(sample_ids), n_max, 2**L)``."""
    sids = np.asarray(sample_ids, dtype=np.int64).reshape(-1, 1, 1)
    j = np.arange(1, n_max + 1).reshape(1, -1, 1)
    i = np.arange(2**L).reshape(1, 1, -1)
    return np.sqrt(T / 2**L) * normals(seed, sids, INCREMENT_STREAM, j, i)


def sample_path(seed: int, sample_id: int, n_max: int, L: int, T: float) -> NoisePath:
    if n_max < 1 or L < 0 or T <= 0:
        raise ValueError(f"need n_max >= 1, L >= 0, T > 0 (got {n_max}, {L}, {T})")
    _check_key(seed, sample_id)
    inc = increment_block(seed, [sample_id], n_max, L, T)[0]
    inc.setflags(write=False)
    return NoisePath(seed, sample_id, float(T), L, n_max, inc)


def coarsen_array(increments: np.ndarray, m: int) -> np.ndarray:
    """Aggregate the last axis (length 2**L) to ``m`` intervals by pairwise sums."""
    M = increments.shape[-1]
    if m < 1 or M % m:
        raise ValueError(f"m={m} does not divide the finest grid size {M}")
    out = increments
    while out.shape[-1] > m:
        out = out[..., 0::2] + out[..., 1::2]
    return out


def coarsen(path: NoisePath, m: int) -> np.ndarray:
    """Per-mode increments over ``m`` equal intervals, shape ``(n_max, m)``."""
    return coarsen_array(path.increments, m)


def wz_slope(path: NoisePath, m: int, i: int, j: int) -> float:
    """Constant derivative (m/T) * d beta_j(I_i) of the piecewise-linear interpolant."""
    if not 0 <= i < m:
        raise IndexError(f"interval index {i} outside [0, {m})")
    if not 1 <= j <= path.n_max:
        raise IndexError(f"mode index {j} outside [1, {path.n_max}]")
    return float(m / path.T * coarsen(path, m)[j - 1, i])


def brownian_eval(path: NoisePath, m: int, j: int, t: float) -> float:
    """Value of beta_j^m(t), the interpolant through the m-grid nodes."""
    if not 0.0 <= t <= path.T:
        raise ValueError(f"t={t} outside [0, {path.T}]")
    if not 1 <= j <= path.n_max:
        raise IndexError(f"mode index {j} outside [1, {path.n_max}]")
    row = coarsen(path, m)[j - 1]
    h = path.T / m
    i = min(int(t // h), m - 1)
    node = float(np.cumsum(row[:i])[-1]) if i else 0.0
    return node + row[i] * (t - i * h) / h
