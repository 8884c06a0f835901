"""Real-data ingestion, standardization, and the pivotal ratio statistic.

The statistic debiases the top spike of the data before and after
sketching with the classical (xi = 1) spike inverse and takes the ratio

    T = inverse(sigma_1(X)^2 / n; p/n) / inverse(sigma_1(SX)^2 / r; p/r),

which is close to 1 when the spiked-model assumptions hold. Gram
eigenvalues are divided by the sample count (n, respectively the realized
r) so the noise bulk matches the unit-variance Marchenko-Pastur
normalization the classical inverse assumes; inputs are expected to be
standardized (unit-variance entries).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError
from .numerics import top_k_spectrum
from .sketch import SketchSpec, apply_sketch, build_sketch
from .theory import AspectRatios, spike_inverse

__all__ = [
    "load_matrix",
    "StandardizedMatrix",
    "standardize",
    "center_columns",
    "TStatResult",
    "t_statistic",
]


def load_matrix(path: str, format: str = "csv", missing_token: str = "NA"):
    """Parse a rectangular numeric file into (matrix, observed_mask).

    Missing cells (the ``missing_token`` string, or an empty field) come
    back as NaN with mask False. Ragged rows and unparseable fields raise
    DataError with the offending line number.
    """
    delimiters = {"csv": ",", "tsv": "\t"}
    if format not in delimiters:
        raise DataError(f"format must be 'csv' or 'tsv', got {format!r}")
    rows: list[list[float]] = []
    mask_rows: list[list[bool]] = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, fields in enumerate(csv.reader(fh, delimiter=delimiters[format]), start=1):
            if not fields or (len(fields) == 1 and fields[0].strip() == ""):
                continue
            if fields[0].lstrip().startswith("#"):
                continue
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise DataError(
                    f"{path}: line {lineno}: expected {width} fields, got {len(fields)}"
                )
            vals, obs = [], []
            for col, tok in enumerate(fields, start=1):
                s = tok.strip()
                if s == missing_token or s == "":
                    vals.append(np.nan)
                    obs.append(False)
                    continue
                try:
                    vals.append(float(s))
                except ValueError:
                    raise DataError(
                        f"{path}: line {lineno}, column {col}: cannot parse {tok!r}"
                    ) from None
                obs.append(True)
            rows.append(vals)
            mask_rows.append(obs)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows, dtype=float), np.array(mask_rows, dtype=bool)


@dataclass
class StandardizedMatrix:
    """Column-standardized data with imputed zeros at missing cells."""

    data: np.ndarray
    column_means: np.ndarray
    column_sds: np.ndarray
    missing_counts: np.ndarray


def standardize(raw, mask=None, ddof: int = 1) -> StandardizedMatrix:
    """Column-wise standardization over the observed entries.

    Each column is centered by its observed mean and divided by its
    observed standard deviation (sample convention, divisor n_obs - ddof
    with ddof = 1 by default); missing cells are then imputed as exactly
    0, which equals the post-standardization column mean. Columns with
    fewer than two observations or zero variance raise DataError listing
    the offending indices.
    """
    X = np.asarray(raw, dtype=float)
    if X.ndim != 2:
        raise DimensionError("data must be 2-D")
    if mask is None:
        mask = np.isfinite(X)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != X.shape:
        raise DimensionError("mask shape must match the data")
    counts = mask.sum(axis=0)
    too_few = np.flatnonzero(counts < 2)
    if too_few.size:
        raise DataError(f"columns with fewer than 2 observed entries: {too_few.tolist()}")
    filled = np.where(mask, X, 0.0)
    means = filled.sum(axis=0) / counts
    centered = np.where(mask, X - means, 0.0)
    ss = np.sum(centered**2, axis=0)
    sds = np.sqrt(ss / (counts - ddof))
    bad = np.flatnonzero(sds == 0.0)
    if bad.size:
        raise DataError(f"constant columns cannot be standardized: {bad.tolist()}")
    out = np.where(mask, centered / sds, 0.0)
    return StandardizedMatrix(
        data=out,
        column_means=means,
        column_sds=sds,
        missing_counts=(~mask).sum(axis=0),
    )


def center_columns(M) -> np.ndarray:
    """Remove column means (the centering transform applied before PCA)."""
    X = np.asarray(M, dtype=float)
    if X.ndim != 2:
        raise DimensionError("data must be 2-D")
    if X.shape[0] < 2:
        raise DimensionError("centering needs at least two rows")
    return X - X.mean(axis=0)


@dataclass
class TStatResult:
    """Pivotal ratio of debiased spikes before and after sketching.

    ``T`` is None when either spike sits at or below its bulk edge; the
    flags say which side collapsed.
    """

    T: float | None
    ell_full: float | None
    ell_sketched: float | None
    lambda1_full: float
    lambda1_sketched: float
    aspect_full: float
    aspect_sketched: float
    below_edge_full: bool
    below_edge_sketched: bool
    r_effective: int


def t_statistic(X, sketch: SketchSpec, rng) -> TStatResult:
    """Compute the ratio statistic for one sketch draw.

    ``X`` is a StandardizedMatrix or a plain array with unit-variance
    entries; the sketch is drawn from ``rng`` and applied to the rows.
    """
    A = X.data if isinstance(X, StandardizedMatrix) else np.asarray(X, dtype=float)
    n, p = A.shape
    op = build_sketch(sketch, n, rng, data=A)  # r = n (square orthogonal) is allowed, T = 1
    SX = apply_sketch(op, A)
    r_eff = max(op.r_effective, 1)

    lam_full = float(top_k_spectrum(A, 1).values[0]) / n
    lam_sk = float(top_k_spectrum(SX, 1).values[0]) / r_eff
    aspect_full = p / n
    aspect_sk = p / r_eff
    ell_full = spike_inverse(lam_full, AspectRatios(aspect_full, 1.0))
    ell_sk = spike_inverse(lam_sk, AspectRatios(aspect_sk, 1.0))
    T = None
    if ell_full is not None and ell_sk is not None and ell_sk != 0.0:
        T = ell_full / ell_sk
    return TStatResult(
        T=T,
        ell_full=ell_full,
        ell_sketched=ell_sk,
        lambda1_full=lam_full,
        lambda1_sketched=lam_sk,
        aspect_full=aspect_full,
        aspect_sketched=aspect_sk,
        below_edge_full=ell_full is None,
        below_edge_sketched=ell_sk is None,
        r_effective=r_eff,
    )
