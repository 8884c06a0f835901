"""Dense-matrix primitives.

Reproducible random streams, top-k spectral decomposition through the
smaller Gram matrix, Haar sampling on the Stiefel manifold, and the fast
Walsh-Hadamard transform. Everything here is pure: outputs depend only on
the inputs (including the random stream), so values can be shared
read-only across threads as long as each thread owns its stream.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError, NumericalError, UsageError

__all__ = [
    "RngStream",
    "SpectralTopK",
    "top_k_spectrum",
    "haar_orthonormal",
    "fwht_rows",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """A named, reproducible random stream.

    Streams are realized with numpy's ``SeedSequence`` spawning: the
    entropy is ``base_seed`` and the spawn key is ``(stream_index, *lane)``.
    Two streams with identical coordinates replay bit-identical draws;
    streams with different coordinates are statistically independent. By
    convention ``stream_index`` is the Monte Carlo repetition index, and
    ``substream`` opens independent lanes inside one repetition (model
    draws vs. per-method sketch draws).
    """

    base_seed: int
    stream_index: int = 0
    lane: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=self.base_seed & _MASK64,
            spawn_key=(self.stream_index, *self.lane),
        )
        return np.random.Generator(np.random.PCG64(ss))

    def substream(self, index: int) -> "RngStream":
        return RngStream(self.base_seed, self.stream_index, self.lane + (int(index),))


def as_generator(rng) -> np.random.Generator:
    """Accept an RngStream or an already-built Generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise UsageError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Validate and convert to a float64 2-D array with finite entries."""
    A = np.asarray(M, dtype=float)
    if A.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got ndim={A.ndim}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionError(f"{name} must have at least one row and column")
    if not np.all(np.isfinite(A)):
        raise DataError(f"{name} contains non-finite entries")
    return A


@dataclass
class SpectralTopK:
    """Top-k spectrum of M^T M.

    ``values`` are the k largest eigenvalues of M^T M (squared singular
    values of M) in non-increasing order; ``right_vectors`` (p x k) and
    ``left_vectors`` (rows x k) are matching unit singular vectors. Signs
    are arbitrary and never canonicalized; compare squared inner products.
    """

    values: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray


def top_k_spectrum(M, k: int, tol: float = 1e-8) -> SpectralTopK:
    """Top-k eigenpairs of M^T M via dense eigh of the smaller Gram matrix.

    The residual ||M^T M v - lambda v|| of every returned pair is checked
    against ``tol * ||M^T M||``; a violation raises NumericalError.
    """
    A = as_matrix(M)
    rows, cols = A.shape
    if not (1 <= k <= min(rows, cols)):
        raise DimensionError(f"k={k} out of range for a {rows}x{cols} matrix")
    if not tol > 0:
        raise UsageError("tol must be positive")

    if rows <= cols:
        w, u = np.linalg.eigh(A @ A.T)
        w = w[::-1][:k].copy()
        u = u[:, ::-1][:, :k].copy()
        sigma = np.sqrt(np.clip(w, 0.0, None))
        if np.any(sigma == 0.0):
            raise NumericalError("requested k exceeds the numerical rank of M")
        v = (A.T @ u) / sigma
        left, right = u, v
    else:
        w, v = np.linalg.eigh(A.T @ A)
        w = w[::-1][:k].copy()
        v = v[:, ::-1][:, :k].copy()
        sigma = np.sqrt(np.clip(w, 0.0, None))
        if np.any(sigma == 0.0):
            raise NumericalError("requested k exceeds the numerical rank of M")
        left = (A @ v) / sigma
        right = v

    values = np.clip(w, 0.0, None)
    scale = max(values[0], np.finfo(float).tiny)
    gram_right = A.T @ (A @ right)
    resid = np.linalg.norm(gram_right - right * values, axis=0)
    if np.any(resid > tol * scale):
        raise NumericalError(
            f"spectral residual {resid.max():.3e} exceeds tol*|M^T M| = {tol * scale:.3e}"
        )
    return SpectralTopK(values=values, right_vectors=right, left_vectors=left)


def haar_orthonormal(r: int, n: int, rng) -> np.ndarray:
    """Draw an r x n matrix S with S S^T = I_r, Haar on the Stiefel manifold.

    QR of an iid Gaussian matrix, with each orthogonal column flipped by the
    sign of the corresponding diagonal entry of the triangular factor; the
    sign fix is what makes plain QR Haar-distributed.
    """
    if r > n:
        raise DimensionError(f"cannot embed {r} orthonormal rows in dimension {n}")
    if r < 1:
        raise DimensionError("r must be at least 1")
    gen = as_generator(rng)
    g = gen.standard_normal((n, r))
    q, rr = np.linalg.qr(g, mode="reduced")
    sgn = np.sign(np.diag(rr))
    sgn[sgn == 0.0] = 1.0
    return (q * sgn).T


def fwht_rows(M) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform applied to the rows axis.

    Returns H_n M for the +/-1 Hadamard matrix built from the standard
    doubling recursion; n must be a power of two. Cost is O(n log n) per
    column. Accepts a vector or a matrix; vectors come back as vectors.
    """
    A = np.array(M, dtype=float, copy=True)
    vec = A.ndim == 1
    if vec:
        A = A[:, None]
    if A.ndim != 2:
        raise DimensionError("input must be a vector or a matrix")
    n = A.shape[0]
    if n < 1 or (n & (n - 1)) != 0:
        raise DimensionError(f"row count {n} is not a power of two")
    h = 1
    while h < n:
        V = A.reshape(n // (2 * h), 2, h, A.shape[1])
        t = V[:, 0] - V[:, 1]
        V[:, 0] += V[:, 1]
        V[:, 1] = t
        h *= 2
    return A[:, 0] if vec else A


def next_pow2(n: int) -> int:
    return 1 << max(int(n) - 1, 0).bit_length() if n > 1 else 1
