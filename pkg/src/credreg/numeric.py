"""Dense linear algebra and the seeded random source shared by every stochastic step."""

from __future__ import annotations

import hashlib

import numpy as np
from scipy.linalg import solve_triangular
from scipy.linalg.lapack import dpotrf

from .errors import NotPositiveDefiniteError


def cholesky(a) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == a`` for symmetric positive definite ``a``.

    Only the lower triangle of ``a`` is read. Raises :class:`NotPositiveDefiniteError`
    carrying the 0-based index of the first non-positive pivot.
    """
    A = np.asarray(a, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("cholesky needs a square matrix")
    if A.shape[0] == 0:
        return np.zeros((0, 0))
    if not np.all(np.isfinite(A)):
        raise ValueError("cholesky input holds NaN or infinite values")
    L, info = dpotrf(A, lower=1, clean=1, overwrite_a=0)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1)
    if info < 0:
        raise ValueError(f"dpotrf rejected argument {-info}")
    return L


def solve_spd(a, b) -> np.ndarray:
    L = cholesky(a)
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != L.shape[0]:
        raise ValueError(f"right-hand side has {b.shape[0]} rows, matrix has {L.shape[0]}")
    z = solve_triangular(L, b, lower=True, check_finite=False)
    return solve_triangular(L, z, lower=True, trans="T", check_finite=False)


def euclidean(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise TypeError(f"length mismatch: {u.shape} vs {v.shape}")
    diff = u - v
    return float(np.sqrt(diff @ diff))


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)) and not isinstance(key, bool):
        if key < 0:
            raise ValueError("random stream keys must be non-negative")
        return int(key)
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class RandomSource:
    """Seeded generator that splits into independent child streams by key path.

    ``RandomSource(7).child("fold", 3)`` is the same stream in every run and never
    overlaps the stream of any other key path.
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)
        self.path = _path
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=_path)))

    def child(self, *keys) -> "RandomSource":
        return RandomSource(self.seed, self.path + tuple(_key_to_int(k) for k in keys))

    def derive_seed(self, *keys) -> int:
        """A 63-bit integer seed for a child stream, for APIs that take plain seeds."""
        c = self.child(*keys)
        return int(c._gen.integers(0, 2 ** 63 - 1))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._gen.normal(loc, scale, size)
