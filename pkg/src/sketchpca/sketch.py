"""Sketching operators.

Every operator family is built by :func:`build_sketch` from a
:class:`SketchSpec` and applied with :func:`apply_sketch`, which always
equals multiplication by the realized r x n matrix S (materializable with
``op.to_dense()`` for oracle checks). Built operators are immutable and
safe to share across threads; construction consumes the random stream it
is given.

Canonical method names (also the strings accepted by the CLI and config
files): ``haar``, ``iid``, ``uniform_sample``, ``srht``, ``dft``,
``countsketch``, ``countsketch_normalized``, ``leverage``, ``osnap``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DataError, DimensionError, UsageError
from .numerics import as_generator, as_matrix, fwht_rows, haar_orthonormal, next_pow2

__all__ = [
    "METHODS",
    "SketchSpec",
    "SketchOperator",
    "SpectralAtoms",
    "build_sketch",
    "apply_sketch",
    "bucket_counts",
    "operator_gram_esd",
]

METHODS = (
    "haar",
    "iid",
    "uniform_sample",
    "srht",
    "dft",
    "countsketch",
    "countsketch_normalized",
    "leverage",
    "osnap",
)

_COUNTSKETCH_METHODS = ("countsketch", "countsketch_normalized")


@dataclass(frozen=True)
class SketchSpec:
    """Which sketch to build and its target size r.

    ``iid_law`` selects the entry law for the iid method; ``osnap_s`` is
    the number of nonzeros per column for OSNAP. ``uniform_exact_r`` swaps
    the Bernoulli(r/n) row indicator of uniform sampling for an exactly-r
    uniform subset, and ``uniform_signs`` attaches iid Rademacher signs to
    the kept rows (the variant that tolerates column centering).
    """

    method: str
    r: int
    iid_law: str = "gaussian"
    osnap_s: int = 2
    uniform_exact_r: bool = False
    uniform_signs: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(
                f"unknown sketch method {self.method!r}; canonical names: {', '.join(METHODS)}"
            )
        if self.r < 1:
            raise DimensionError("sketch size r must be at least 1")
        if self.iid_law not in ("gaussian", "rademacher"):
            raise UsageError("iid_law must be 'gaussian' or 'rademacher'")
        if self.method == "osnap":
            if self.osnap_s < 1:
                raise DimensionError("osnap_s must be at least 1")
            if self.osnap_s > self.r:
                raise DimensionError("osnap_s cannot exceed r")

    def validate_for(self, n: int) -> None:
        if self.r > n:
            raise DimensionError(f"sketch size r={self.r} exceeds n={n}")


@dataclass(frozen=True)
class SpectralAtoms:
    """A finite spectral distribution: atoms (value, weight), weights sum to 1."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "weights", w)
        if v.shape != w.shape or v.ndim != 1:
            raise DimensionError("atom values and weights must be 1-D and aligned")
        if np.any(v < 0) or np.any(w < 0):
            raise DataError("atom values and weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise DataError(f"atom weights sum to {w.sum()!r}, expected 1")

    @staticmethod
    def single(value: float = 1.0) -> "SpectralAtoms":
        return SpectralAtoms(np.array([value]), np.array([1.0]))

    @staticmethod
    def from_eigenvalues(eigs) -> "SpectralAtoms":
        e = np.asarray(eigs, dtype=float)
        return SpectralAtoms(e, np.full(e.shape, 1.0 / e.size))

    @staticmethod
    def from_counts(values, counts) -> "SpectralAtoms":
        c = np.asarray(counts, dtype=float)
        return SpectralAtoms(np.asarray(values, dtype=float), c / c.sum())

    def moment(self, order: int) -> float:
        return float(np.sum(self.weights * self.values**order))


class SketchOperator:
    """A realized sketching operator (r_effective x n).

    Subclasses store the method-specific realization; ``apply`` computes
    S Y with the method's fast path, ``to_dense`` materializes S.
    """

    def __init__(self, spec: SketchSpec, n: int):
        self.spec = spec
        self.n = int(n)

    @property
    def method(self) -> str:
        return self.spec.method

    @property
    def r_effective(self) -> int:
        """Actual number of output rows (random for Bernoulli selections)."""
        raise NotImplementedError

    def apply(self, Y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dense(self) -> np.ndarray:
        raise NotImplementedError

    def gram_esd(self) -> SpectralAtoms:
        """ESD of S S^T, computed structurally where the family allows it."""
        S = self.to_dense()
        return SpectralAtoms.from_eigenvalues(np.linalg.eigvalsh(S @ S.T))

    def _check_rows(self, Y: np.ndarray) -> np.ndarray:
        A = as_matrix(Y, "data")
        if A.shape[0] != self.n:
            raise DimensionError(f"data has {A.shape[0]} rows, operator expects {self.n}")
        return A


class _DenseSketch(SketchOperator):
    def __init__(self, spec, n, S):
        super().__init__(spec, n)
        self.S = S

    @property
    def r_effective(self) -> int:
        return self.S.shape[0]

    def apply(self, Y):
        return self.S @ self._check_rows(Y)

    def to_dense(self):
        return self.S.copy()

    def gram_esd(self):
        if self.method == "haar":
            return SpectralAtoms.single(1.0)
        return SpectralAtoms.from_eigenvalues(np.linalg.eigvalsh(self.S @ self.S.T))


class _RowSelectionSketch(SketchOperator):
    """Uniform sampling realized as selection of the rows with indicator 1.

    The n x n Bernoulli diagonal of the definition and this r_hat x n
    selection have the same nonzero spectrum; the realized r_hat is kept
    and used as the effective sketch size downstream.
    """

    def __init__(self, spec, n, kept, signs=None):
        super().__init__(spec, n)
        self.kept = kept
        self.signs = signs

    @property
    def r_effective(self) -> int:
        return self.kept.size

    def apply(self, Y):
        A = self._check_rows(Y)
        out = A[self.kept]
        if self.signs is not None:
            out = self.signs[:, None] * out
        return out

    def to_dense(self):
        S = np.zeros((self.kept.size, self.n))
        vals = self.signs if self.signs is not None else np.ones(self.kept.size)
        S[np.arange(self.kept.size), self.kept] = vals
        return S

    def gram_esd(self):
        return SpectralAtoms.single(1.0)


class _SrhtSketch(SketchOperator):
    """(1/sqrt(n')) B_r H D with zero-padding to n' = next power of two."""

    def __init__(self, spec, n, n_padded, signs, kept):
        super().__init__(spec, n)
        self.n_padded = n_padded
        self.signs = signs  # length n, +/-1
        self.kept = kept  # indices into the n_padded transformed rows

    @property
    def r_effective(self) -> int:
        return self.kept.size

    def apply(self, Y):
        A = self._check_rows(Y)
        Z = np.zeros((self.n_padded, A.shape[1]))
        Z[: self.n] = self.signs[:, None] * A
        F = fwht_rows(Z) / np.sqrt(self.n_padded)
        return F[self.kept]

    def to_dense(self):
        H = fwht_rows(np.eye(self.n_padded)) / np.sqrt(self.n_padded)
        return H[self.kept][:, : self.n] * self.signs[None, :]

    def gram_esd(self):
        return SpectralAtoms.single(1.0)


class _DftSketch(SketchOperator):
    """Real representation of the subsampled randomized Fourier transform.

    The n orthonormal real rows are the DC row, interleaved
    sqrt(2)*cos / sqrt(2)*sin rows per frequency, and (for even n) the
    Nyquist row; a Bernoulli(r/n) subset of them is kept, so the output
    stays real and S S^T = I.
    """

    def __init__(self, spec, n, signs, freqs, kinds):
        super().__init__(spec, n)
        self.signs = signs
        self.freqs = freqs  # frequency index per kept row
        self.kinds = kinds  # 0 = plain real row (DC/Nyquist), 1 = cos, 2 = sin

    @property
    def r_effective(self) -> int:
        return self.freqs.size

    def apply(self, Y):
        A = self._check_rows(Y)
        F = np.fft.rfft(self.signs[:, None] * A, axis=0) / np.sqrt(self.n)
        out = np.empty((self.freqs.size, A.shape[1]))
        for k, (f, kind) in enumerate(zip(self.freqs, self.kinds)):
            if kind == 0:
                out[k] = F[f].real
            elif kind == 1:
                out[k] = np.sqrt(2.0) * F[f].real
            else:
                out[k] = -np.sqrt(2.0) * F[f].imag
        return out

    def to_dense(self):
        j = np.arange(self.n)
        S = np.empty((self.freqs.size, self.n))
        for k, (f, kind) in enumerate(zip(self.freqs, self.kinds)):
            ang = 2.0 * np.pi * f * j / self.n
            if kind == 0:
                S[k] = np.cos(ang) / np.sqrt(self.n)
            elif kind == 1:
                S[k] = np.sqrt(2.0) * np.cos(ang) / np.sqrt(self.n)
            else:
                S[k] = np.sqrt(2.0) * np.sin(ang) / np.sqrt(self.n)
        return S * self.signs[None, :]

    def gram_esd(self):
        return SpectralAtoms.single(1.0)


class _CountSketch(SketchOperator):
    """One +/-1 per column, hashed into r buckets.

    The normalized variant rescales each nonempty bucket by 1/sqrt(count)
    and discards empty buckets, so its rows are orthonormal; the plain
    variant keeps empty buckets as zero rows so the Gram ESD shows the
    atom at zero.
    """

    def __init__(self, spec, n, hashes, signs):
        super().__init__(spec, n)
        self.hashes = hashes
        self.signs = signs
        self.counts = np.bincount(hashes, minlength=spec.r)
        self.normalized = spec.method == "countsketch_normalized"
        self.nonzero = np.flatnonzero(self.counts)

    @property
    def r_effective(self) -> int:
        return self.nonzero.size if self.normalized else self.spec.r

    def _csr(self):
        return sp.csr_matrix(
            (self.signs.astype(float), (self.hashes, np.arange(self.n))),
            shape=(self.spec.r, self.n),
        )

    def apply(self, Y):
        A = self._check_rows(Y)
        out = self._csr() @ A
        if self.normalized:
            out = out[self.nonzero] / np.sqrt(self.counts[self.nonzero])[:, None]
        return out

    def to_dense(self):
        S = np.asarray(self._csr().todense())
        if self.normalized:
            S = S[self.nonzero] / np.sqrt(self.counts[self.nonzero])[:, None]
        return S

    def gram_esd(self):
        if self.normalized:
            return SpectralAtoms.single(1.0)
        vals, mult = np.unique(self.counts, return_counts=True)
        return SpectralAtoms.from_counts(vals.astype(float), mult)


class _LeverageSketch(SketchOperator):
    """Squared-row-norm (d2) sampling with replacement, 1/sqrt(r*p_i) rescaling."""

    def __init__(self, spec, n, indices, probs):
        super().__init__(spec, n)
        self.indices = indices
        self.probs = probs
        self.weights = 1.0 / np.sqrt(spec.r * probs[indices])

    @property
    def r_effective(self) -> int:
        return self.indices.size

    def apply(self, Y):
        A = self._check_rows(Y)
        return self.weights[:, None] * A[self.indices]

    def to_dense(self):
        S = np.zeros((self.indices.size, self.n))
        S[np.arange(self.indices.size), self.indices] = self.weights
        return S

    def gram_esd(self):
        # S S^T is block diagonal over groups of repeated indices; each group
        # contributes one eigenvalue equal to its squared weight norm plus zeros.
        order = np.argsort(self.indices, kind="stable")
        eigs = np.zeros(self.indices.size)
        pos = 0
        srt = self.indices[order]
        w = self.weights[order]
        i = 0
        while i < srt.size:
            j = i
            while j < srt.size and srt[j] == srt[i]:
                j += 1
            eigs[pos] = np.sum(w[i:j] ** 2)
            pos += 1
            i = j
        return SpectralAtoms.from_eigenvalues(eigs)


class _OsnapSketch(SketchOperator):
    """s nonzeros per column, distinct rows, iid signs, 1/sqrt(s) scaling."""

    def __init__(self, spec, n, positions, signs):
        super().__init__(spec, n)
        self.positions = positions  # (s, n) row indices
        self.col_signs = signs  # (s, n) +/-1

    @property
    def r_effective(self) -> int:
        return self.spec.r

    def _csr(self):
        s = self.spec.osnap_s
        cols = np.repeat(np.arange(self.n)[None, :], s, axis=0)
        return sp.csr_matrix(
            (
                (self.col_signs / np.sqrt(s)).ravel(),
                (self.positions.ravel(), cols.ravel()),
            ),
            shape=(self.spec.r, self.n),
        )

    def apply(self, Y):
        return self._csr() @ self._check_rows(Y)

    def to_dense(self):
        return np.asarray(self._csr().todense())

    def gram_esd(self):
        G = (self._csr() @ self._csr().T).toarray()
        return SpectralAtoms.from_eigenvalues(np.linalg.eigvalsh(G))


def build_sketch(spec: SketchSpec, n: int, rng, data=None) -> SketchOperator:
    """Realize a sketching operator for data with n rows.

    ``data`` is only consulted by the leverage method, whose sampling
    probabilities are proportional to squared row norms; all other methods
    are data-oblivious.
    """
    spec.validate_for(n)
    gen = as_generator(rng)
    method = spec.method

    if method == "haar":
        return _DenseSketch(spec, n, haar_orthonormal(spec.r, n, gen))

    if method == "iid":
        if spec.iid_law == "gaussian":
            S = gen.standard_normal((spec.r, n)) / np.sqrt(n)
        else:
            S = gen.choice([-1.0, 1.0], size=(spec.r, n)) / np.sqrt(n)
        return _DenseSketch(spec, n, S)

    if method == "uniform_sample":
        if spec.uniform_exact_r:
            kept = np.sort(gen.choice(n, size=spec.r, replace=False))
        else:
            kept = np.flatnonzero(gen.random(n) < spec.r / n)
        signs = gen.choice([-1.0, 1.0], size=kept.size) if spec.uniform_signs else None
        return _RowSelectionSketch(spec, n, kept, signs)

    if method == "srht":
        n_padded = next_pow2(n)
        signs = gen.choice([-1.0, 1.0], size=n)
        kept = np.flatnonzero(gen.random(n_padded) < spec.r / n_padded)
        return _SrhtSketch(spec, n, n_padded, signs, kept)

    if method == "dft":
        signs = gen.choice([-1.0, 1.0], size=n)
        freqs, kinds = _real_dft_rows(n)
        keep = gen.random(n) < spec.r / n
        return _DftSketch(spec, n, signs, freqs[keep], kinds[keep])

    if method in _COUNTSKETCH_METHODS:
        hashes = gen.integers(0, spec.r, size=n)
        signs = gen.choice([-1, 1], size=n)
        return _CountSketch(spec, n, hashes, signs)

    if method == "leverage":
        if data is None:
            raise UsageError("leverage sampling needs the data matrix to form probabilities")
        A = as_matrix(data, "data")
        if A.shape[0] != n:
            raise DimensionError(f"data has {A.shape[0]} rows, expected {n}")
        norms = np.einsum("ij,ij->i", A, A)
        total = norms.sum()
        probs = norms / total if total > 0 else np.full(n, 1.0 / n)
        indices = gen.choice(n, size=spec.r, p=probs)
        return _LeverageSketch(spec, n, indices, probs)

    if method == "osnap":
        s = spec.osnap_s
        # s distinct rows per column, uniform over size-s subsets
        positions = np.argpartition(gen.random((n, spec.r)), s - 1, axis=1)[:, :s].T
        signs = gen.choice([-1.0, 1.0], size=(s, n))
        return _OsnapSketch(spec, n, np.ascontiguousarray(positions), signs)

    raise UsageError(f"unknown sketch method {method!r}")


def _real_dft_rows(n: int):
    """Enumerate the n orthonormal real rows of the unitary DFT of size n."""
    freqs = [0]
    kinds = [0]
    half = n // 2
    top = half if n % 2 == 0 else half + 1
    for f in range(1, top):
        freqs.extend([f, f])
        kinds.extend([1, 2])
    if n % 2 == 0 and n >= 2:
        freqs.append(half)
        kinds.append(0)
    return np.array(freqs), np.array(kinds)


def apply_sketch(op: SketchOperator, Y) -> np.ndarray:
    """Compute S Y with the operator's fast path."""
    return op.apply(Y)


def bucket_counts(op: SketchOperator) -> np.ndarray:
    """Bucket occupancy (c_1, ..., c_r) of a CountSketch operator; sums to n."""
    if not isinstance(op, _CountSketch):
        raise UsageError(f"bucket_counts is defined for countsketch variants, not {op.method!r}")
    return op.counts.copy()


def operator_gram_esd(op: SketchOperator) -> SpectralAtoms:
    """Eigenvalue atoms of S S^T with multiplicities as weights."""
    return op.gram_esd()
