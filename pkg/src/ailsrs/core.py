"""Numerical substrate: counter-based random streams, running statistics and
small deterministic matrix-vector products.

Matrices are plain 2-D float64 numpy arrays. Products used inside rollouts
go through :func:`batch_matvec`, which accumulates column by column with
elementwise operations so that a row's result never depends on how many
other rows share the batch (BLAS kernels give no such guarantee).
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

MASK64 = (1 << 64) - 1


def derive_stream_id(tag: str, *indices: int) -> int:
    """Map a purpose tag and integer indices to a 64-bit stream id."""
    h = hashlib.blake2b(tag.encode(), digest_size=8)
    for i in indices:
        h.update(struct.pack("<Q", int(i) & MASK64))
    return int.from_bytes(h.digest(), "little")


class RngStream:
    """Philox stream keyed by (master_seed, stream_id).

    Two streams with equal keys produce identical sequences; the counter is
    the Philox block counter and advances deterministically with each draw.
    A single stream must not be shared between concurrent consumers.
    """

    def __init__(self, master_seed: int, stream_id: int):
        self.master_seed = int(master_seed) & MASK64
        self.stream_id = int(stream_id) & MASK64
        key = np.array([self.master_seed, self.stream_id], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    @classmethod
    def derive(cls, master_seed: int, tag: str, *indices: int) -> "RngStream":
        return cls(master_seed, derive_stream_id(tag, *indices))

    @property
    def counter(self) -> int:
        words = self._gen.bit_generator.state["state"]["counter"]
        return sum(int(w) << (64 * k) for k, w in enumerate(words))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def normal(self, size) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, low, high, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def choice_without_replacement(self, population: int, k: int) -> np.ndarray:
        return self._gen.choice(population, size=k, replace=False)

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id}, counter={self.counter})"


def gaussian_matrix(stream: RngStream, rows: int, cols: int) -> np.ndarray:
    return stream.normal((rows, cols))


def matvec(m: np.ndarray, v) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    v = np.asarray(v, dtype=float)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise InvalidArgument(f"matvec shape mismatch: matrix {m.shape} vs vector {v.shape}")
    return batch_matvec(m, v[None, :])[0]


def batch_matvec(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Row-wise products ``m[b] @ x[b]`` (or ``m @ x[b]`` for a shared 2-D m).

    m: (rows, cols) or (batch, rows, cols); x: (batch, cols).
    """
    cols = x.shape[-1]
    if m.shape[-1] != cols:
        raise InvalidArgument(f"batch_matvec shape mismatch: {m.shape} vs {x.shape}")
    if m.ndim == 2:
        out = m[None, :, 0] * x[:, 0:1]
        for j in range(1, cols):
            out = out + m[None, :, j] * x[:, j:j + 1]
    else:
        out = m[:, :, 0] * x[:, 0:1]
        for j in range(1, cols):
            out = out + m[:, :, j] * x[:, j:j + 1]
    return out


def rowsum(x: np.ndarray) -> np.ndarray:
    """Sum over the last axis in a fixed left-to-right order."""
    out = x[..., 0]
    for j in range(1, x.shape[-1]):
        out = out + x[..., j]
    return out


@dataclass(frozen=True)
class RunningStats:
    """Running mean and population variance of state vectors.

    With no observations the statistics describe the identity normalizer
    (mean 0, variance 1). ``version`` increases with every update and is
    used to check that policies share one snapshot.
    """

    count: int
    mean: np.ndarray
    m2: np.ndarray
    version: int = 0

    @classmethod
    def empty(cls, dim: int) -> "RunningStats":
        return cls(0, np.zeros(dim), np.zeros(dim), 0)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def variance(self) -> np.ndarray:
        if self.count == 0:
            return np.ones(self.dim)
        return self.m2 / self.count


def stats_update(stats: RunningStats, x) -> RunningStats:
    x = np.asarray(x, dtype=float)
    if x.shape != stats.mean.shape:
        raise InvalidArgument(f"stats_update dimension mismatch: expected {stats.dim}, got {x.shape}")
    count = stats.count + 1
    d = x - stats.mean
    mean = stats.mean + d / count
    m2 = stats.m2 + d * (x - mean)
    return RunningStats(count, mean, m2, stats.version + 1)


def stats_merge(stats: RunningStats, xs) -> RunningStats:
    """Fold a batch of vectors (rows of ``xs``) into ``stats`` in one step.

    Uses the pairwise combination of Chan, Golub and LeVeque; the batch's own
    moments are computed two-pass.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != stats.dim:
        raise InvalidArgument(f"stats_merge dimension mismatch: expected (*, {stats.dim}), got {xs.shape}")
    k = xs.shape[0]
    if k == 0:
        return stats
    bmean = xs.mean(axis=0)
    bm2 = ((xs - bmean) ** 2).sum(axis=0)
    if stats.count == 0:
        return RunningStats(k, bmean, bm2, stats.version + 1)
    total = stats.count + k
    d = bmean - stats.mean
    mean = stats.mean + d * (k / total)
    m2 = stats.m2 + bm2 + d * d * (stats.count * k / total)
    return RunningStats(total, mean, m2, stats.version + 1)
