"""Spiked data generation.

Y = sum_i d_i w_i u_i^T + X Sigma^{1/2}, with iid noise of variance 1/n
(gaussian, or uniform on +-sqrt(3/n)), Haar or user-supplied signal
frames, and configurable covariance models. The square root of Sigma is
the symmetric eigen square root so factored and explicit paths agree.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import DataError, DimensionError, UsageError
from .numerics import RngStream, as_generator, haar_orthonormal

__all__ = [
    "CovarianceModel",
    "make_sigma",
    "parse_sigma_model",
    "SpikedModelSpec",
    "SpikedDataset",
    "generate",
]


class CovarianceModel:
    """A p x p PSD covariance with a cached symmetric square root.

    ``kind`` is one of identity / toeplitz / step / explicit. The identity
    model skips the p x p multiply entirely; the step model keeps its
    spectrum diagonal (rotating it by an orthogonal matrix changes nothing
    observable when the signal frames are Haar).
    """

    def __init__(self, kind: str, p: int, matrix: np.ndarray | None = None,
                 diagonal: np.ndarray | None = None):
        self.kind = kind
        self.p = int(p)
        self._matrix = matrix
        self._diagonal = diagonal
        self._sqrt = None
        if matrix is not None:
            eigs = np.linalg.eigvalsh(matrix)
            if eigs.min() < -1e-10:
                raise DataError(f"covariance is not PSD: min eigenvalue {eigs.min():.3e}")
        if diagonal is not None and np.any(diagonal < 0):
            raise DataError("step spectrum values must be nonnegative")

    @property
    def trace(self) -> float:
        if self.kind == "identity":
            return float(self.p)
        if self._diagonal is not None:
            return float(self._diagonal.sum())
        return float(np.trace(self._matrix))

    @property
    def fro_sq(self) -> float:
        if self.kind == "identity":
            return float(self.p)
        if self._diagonal is not None:
            return float(np.sum(self._diagonal**2))
        return float(np.sum(self._matrix**2))

    def matrix(self) -> np.ndarray:
        if self.kind == "identity":
            return np.eye(self.p)
        if self._diagonal is not None:
            return np.diag(self._diagonal)
        return self._matrix

    def quad_form(self, U: np.ndarray) -> np.ndarray:
        """U^T Sigma U without materializing Sigma when avoidable."""
        if self.kind == "identity":
            return U.T @ U
        if self._diagonal is not None:
            return (U * self._diagonal[:, None]).T @ U
        return U.T @ (self._matrix @ U)

    def _sqrt_matrix(self) -> np.ndarray:
        if self._sqrt is None:
            w, v = np.linalg.eigh(self._matrix)
            self._sqrt = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
        return self._sqrt

    def apply_sqrt_right(self, X: np.ndarray) -> np.ndarray:
        """X Sigma^{1/2} (symmetric square root)."""
        if self.kind == "identity":
            return X
        if self._diagonal is not None:
            return X * np.sqrt(self._diagonal)[None, :]
        return X @ self._sqrt_matrix()


def parse_sigma_model(text: str):
    """Parse the covariance grammar: ``identity``, ``toeplitz:0.9``,
    ``step:5x1,2x249,1x250``, ``file:<path>``."""
    t = text.strip()
    if t == "identity":
        return ("identity",)
    if t.startswith("toeplitz:"):
        q = float(t.split(":", 1)[1])
        return ("toeplitz", q)
    if t.startswith("step:"):
        parts = []
        for tok in t.split(":", 1)[1].split(","):
            val, cnt = tok.strip().split("x")
            parts.append((float(val), int(cnt)))
        return ("step", tuple(parts))
    if t.startswith("file:"):
        return ("file", t.split(":", 1)[1])
    raise UsageError(f"unrecognized sigma model {text!r}")


def make_sigma(sigma_model, p: int) -> CovarianceModel:
    """Build a covariance handle for dimension p.

    Accepts a grammar string, a parsed tuple, an explicit matrix, or an
    existing CovarianceModel (validated against p).
    """
    if p < 1:
        raise DimensionError("p must be at least 1")
    if isinstance(sigma_model, CovarianceModel):
        if sigma_model.p != p:
            raise DimensionError(f"covariance is {sigma_model.p}-dimensional, expected {p}")
        return sigma_model
    if isinstance(sigma_model, np.ndarray):
        M = np.asarray(sigma_model, dtype=float)
        if M.shape != (p, p):
            raise DimensionError(f"explicit covariance must be {p}x{p}, got {M.shape}")
        if np.max(np.abs(M - M.T)) > 1e-10:
            raise DataError("explicit covariance must be symmetric")
        return CovarianceModel("explicit", p, matrix=M)
    parsed = parse_sigma_model(sigma_model) if isinstance(sigma_model, str) else tuple(sigma_model)
    kind = parsed[0]
    if kind == "identity":
        return CovarianceModel("identity", p)
    if kind == "toeplitz":
        q = float(parsed[1])
        if not 0 < q < 1:
            raise DataError(f"toeplitz decay q must lie in (0,1), got {q}")
        M = scipy.linalg.toeplitz(q ** np.arange(p))
        return CovarianceModel("toeplitz", p, matrix=M)
    if kind == "step":
        values = np.concatenate([np.full(cnt, val) for val, cnt in parsed[1]])
        if values.size != p:
            raise DataError(f"step spectrum has {values.size} entries, expected p={p}")
        return CovarianceModel("step", p, diagonal=values)
    if kind == "file":
        M = np.loadtxt(parsed[1], delimiter=",")
        return make_sigma(np.asarray(M, dtype=float), p)
    raise UsageError(f"unrecognized sigma model {sigma_model!r}")


@dataclass(frozen=True)
class SpikedModelSpec:
    """Population description of one spiked experiment."""

    n: int
    p: int
    k: int
    d: tuple[float, ...]
    noise: str = "gaussian"
    sigma_model: object = "identity"
    signal_basis: object = "haar"  # "haar", "localized", or (W, U) arrays
    delocalization_check: bool = False

    def __post_init__(self):
        object.__setattr__(self, "d", tuple(float(x) for x in self.d))
        if self.k < 1:
            raise DimensionError("k must be at least 1 (use the harness noise-only path for pure noise)")
        if self.k > min(self.n, self.p):
            raise DimensionError(f"k={self.k} exceeds min(n, p)")
        if len(self.d) != self.k:
            raise DimensionError(f"expected {self.k} signal strengths, got {len(self.d)}")
        if any(x <= 0 for x in self.d):
            raise DataError("signal strengths must be strictly positive")
        if any(self.d[i] <= self.d[i + 1] for i in range(self.k - 1)):
            raise DataError("signal strengths must be strictly decreasing")
        if self.noise not in ("gaussian", "uniform"):
            raise UsageError("noise must be 'gaussian' or 'uniform'")


@dataclass
class SpikedDataset:
    """One realization: data plus the frames that generated it."""

    Y: np.ndarray
    W: np.ndarray
    U: np.ndarray
    sigma: CovarianceModel
    d: tuple[float, ...]
    max_w_inf: float | None = None


def _noise(spec: SpikedModelSpec, gen: np.random.Generator) -> np.ndarray:
    if spec.noise == "gaussian":
        return gen.standard_normal((spec.n, spec.p)) / np.sqrt(spec.n)
    a = np.sqrt(3.0 / spec.n)
    return gen.uniform(-a, a, size=(spec.n, spec.p))


def _check_frame(M: np.ndarray, rows: int, k: int, name: str) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.shape != (rows, k):
        raise DimensionError(f"{name} must be {rows}x{k}, got {M.shape}")
    dev = np.max(np.abs(M.T @ M - np.eye(k)))
    if dev > 1e-10:
        raise DataError(f"{name} columns are not orthonormal: max deviation {dev:.3e}")
    return M


def generate(spec: SpikedModelSpec, rng) -> SpikedDataset:
    """Draw one dataset; deterministic given the stream.

    Draw order is fixed (noise, then W, then U, then any extras) so equal
    streams give bit-identical datasets.
    """
    gen = as_generator(rng)
    sigma = make_sigma(spec.sigma_model, spec.p)
    X = _noise(spec, gen)
    basis = spec.signal_basis
    if isinstance(basis, str) and basis == "haar":
        W = haar_orthonormal(spec.k, spec.n, gen).T
        U = haar_orthonormal(spec.k, spec.p, gen).T
    elif isinstance(basis, str) and basis == "localized":
        # adversarial single-coordinate left frame: uniform sampling and
        # CountSketch have positive probability of missing such spikes
        coords = gen.choice(spec.n, size=spec.k, replace=False)
        W = np.zeros((spec.n, spec.k))
        W[coords, np.arange(spec.k)] = 1.0
        U = haar_orthonormal(spec.k, spec.p, gen).T
    elif isinstance(basis, (tuple, list)) and len(basis) == 2:
        W = _check_frame(basis[0], spec.n, spec.k, "W")
        U = _check_frame(basis[1], spec.p, spec.k, "U")
    else:
        raise UsageError(f"unrecognized signal basis {basis!r}")
    Y = (W * np.asarray(spec.d)) @ U.T + sigma.apply_sqrt_right(X)
    max_w_inf = float(np.max(np.abs(W))) if spec.delocalization_check else None
    return SpikedDataset(Y=Y, W=W, U=U, sigma=sigma, d=spec.d, max_w_inf=max_w_inf)
