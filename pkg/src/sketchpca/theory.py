"""Asymptotic predictions for sketched PCA.

Given aspect ratios gamma = p/n and xi = r/n, this module computes where
the top eigenvalues of the sketched data land and how well the sketched
eigenvectors align with the true signal directions:

* classical (un-sketched) spiked forward maps and their inverses,
* closed-form weighted Stieltjes transforms for the orthonormal-row
  sketch family and the Marchenko-Pastur transforms entering the iid
  family, with analytic derivatives,
* the cubic equation satisfied by the iid family's m1c and the resulting
  spike/overlap predictions,
* a damped fixed-point / Newton solver for the general self-consistent
  pair (m1c, m2c) driven by arbitrary spectral atoms,
* the scalar eigenvalue master equation m2c(x) = -1/(1+d^2),
* large-signal predictions under a general noise covariance, and
* optimal shrinkers for operator and Frobenius losses.

All predictions are evaluated at the finite-sample ratios gamma_n, xi_n
rather than abstract limits. Functions are pure and thread-safe.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import DomainError, NumericalError
from .sketch import SpectralAtoms

__all__ = [
    "AspectRatios",
    "SpikePrediction",
    "StieltjesSolution",
    "CovSummary",
    "LargeSignalPrediction",
    "spike_forward",
    "cos2_forward",
    "classic_spike_forward",
    "classic_cos2_forward",
    "m2c_closed",
    "g2c_closed",
    "predict_orthogonal_family",
    "effective_xi_countsketch",
    "mp_transforms",
    "MpTransforms",
    "mp_edges",
    "mp_m1S",
    "mp_m2S",
    "mp_m1S_prime",
    "mp_m2S_prime",
    "mp_g1S",
    "mp_g2S",
    "mp_bulk_atoms",
    "solve_cubic_m1c",
    "g1c_iid",
    "g1c_iid_prime",
    "bulk_edge_iid",
    "predict_iid",
    "solve_self_consistent",
    "m2c_from_atoms",
    "support_edge",
    "find_spike_master",
    "predict_large_signal",
    "cov_summary",
    "spike_inverse",
    "shrinker",
    "ShrunkValue",
]


@dataclass(frozen=True)
class AspectRatios:
    """gamma = p/n (features per sample), xi = r/n (sketch reduction)."""

    gamma: float
    xi: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError(f"gamma must be positive, got {self.gamma}")
        if not 0 < self.xi <= 1:
            raise DomainError(f"xi must lie in (0, 1], got {self.xi}")

    @staticmethod
    def from_counts(n: int, p: int, r: int) -> "AspectRatios":
        return AspectRatios(gamma=p / n, xi=r / n)

    def edges(self) -> tuple[float, float]:
        """Bulk support [lambda_minus, lambda_plus] for orthonormal-row sketches."""
        lo = (math.sqrt(self.gamma) - math.sqrt(self.xi)) ** 2
        hi = (math.sqrt(self.gamma) + math.sqrt(self.xi)) ** 2
        return lo, hi


@dataclass(frozen=True)
class SpikePrediction:
    """Asymptotic outputs for one signal of strength d.

    Above threshold, ``theta`` is the outlier location and ``cos2`` the
    limiting squared overlap with the true direction; below threshold the
    eigenvalue sticks to the bulk edge and the overlap vanishes.
    """

    d: float
    theta: float
    cos2: float
    above_threshold: bool
    lambda_plus: float
    d_critical: float


# ----------------------------------------------------------------------
# Classical and orthonormal-family forward maps
# ----------------------------------------------------------------------


def spike_forward(ell: float, gamma: float, xi: float) -> float:
    """Spiked eigenvalue forward map ell -> (1+ell)(gamma/ell + xi), ell = d^2."""
    if not ell > 0:
        raise DomainError(f"signal energy ell must be positive, got {ell}")
    return (1.0 + ell) * (gamma / ell + xi)


def cos2_forward(ell: float, gamma: float, xi: float) -> float:
    """Squared-cosine forward map (xi - gamma/ell^2)/(xi + gamma/ell).

    Returns 0 at and below the detection threshold ell^2 <= gamma/xi.
    """
    if not ell > 0:
        raise DomainError(f"signal energy ell must be positive, got {ell}")
    if ell * ell <= gamma / xi:
        return 0.0
    return (xi - gamma / ell**2) / (xi + gamma / ell)


def classic_spike_forward(ell: float, gamma: float) -> float:
    """No-sketch spike map (1+ell)(gamma/ell + 1)."""
    return spike_forward(ell, gamma, 1.0)


def classic_cos2_forward(ell: float, gamma: float) -> float:
    """No-sketch overlap map (1 - gamma/ell^2)/(1 + gamma/ell); 0 below ell = sqrt(gamma)."""
    return cos2_forward(ell, gamma, 1.0)


def predict_orthogonal_family(d: float, ar: AspectRatios) -> SpikePrediction:
    """Spike prediction for sketches with orthonormal rows.

    Covers uniform orthogonal projection, and equally uniform sampling and
    randomized Hadamard/Fourier sampling (for delocalized signals) since
    they share the same limiting formulas. The detection threshold is
    d^2 > sqrt(gamma/xi), i.e. d_critical = (gamma/xi)^(1/4); a variant
    reading with d > sqrt(gamma/xi) circulates, but it contradicts the
    xi = 1 classical threshold d^2 > sqrt(gamma), so the squared form is
    used here.
    """
    if not d > 0:
        raise DomainError(f"signal strength d must be positive, got {d}")
    gamma, xi = ar.gamma, ar.xi
    _, lam_plus = ar.edges()
    d_crit = (gamma / xi) ** 0.25
    ell = d * d
    if ell * ell > gamma / xi:
        theta = spike_forward(ell, gamma, xi)
        cos2 = cos2_forward(ell, gamma, xi)
        return SpikePrediction(d, theta, cos2, True, lam_plus, d_crit)
    return SpikePrediction(d, lam_plus, 0.0, False, lam_plus, d_crit)


def effective_xi_countsketch(xi: float) -> float:
    """CountSketch's effective reduction factor xi * (1 - exp(-1/xi)).

    Predictions for both CountSketch variants are the orthonormal-family
    formulas with this value substituted for xi.
    """
    if not 0 < xi <= 1:
        raise DomainError(f"xi must lie in (0, 1], got {xi}")
    return xi * (1.0 - math.exp(-1.0 / xi))


# ----------------------------------------------------------------------
# Closed-form Stieltjes transforms, orthonormal family
# ----------------------------------------------------------------------


def _edge_sqrt(z, lam_minus: float, lam_plus: float):
    """sqrt((z - lam_plus)(z - lam_minus)) on the branch that behaves like z
    at infinity (product of principal square roots of the factors)."""
    return np.sqrt(np.asarray(z, dtype=complex) - lam_plus) * np.sqrt(
        np.asarray(z, dtype=complex) - lam_minus
    )


def m2c_closed(z, ar: AspectRatios) -> complex:
    """Weighted Stieltjes transform m2c for the orthonormal-row family.

    Solves z m^2 + (z - gamma + xi) m + xi = 0 on the branch with
    m2c(z) -> 0 as real z -> +inf (equivalently Im m2c >= 0 on the upper
    half plane). Real z must lie outside the bulk.
    """
    gamma, xi = ar.gamma, ar.xi
    lam_minus, lam_plus = ar.edges()
    zc = complex(z)
    if zc.imag == 0.0:
        x = zc.real
        if lam_minus <= x <= lam_plus:
            raise DomainError(f"z={x} lies inside the bulk [{lam_minus}, {lam_plus}]")
    root = complex(_edge_sqrt(zc, lam_minus, lam_plus))
    m = (-(zc - gamma + xi) + root) / (2.0 * zc)
    if zc.imag == 0.0:
        return complex(m.real, 0.0)
    return m


def g2c_closed(m: float, ar: AspectRatios) -> float:
    """Inverse of m2c on the outlier branch: g2c(m) = gamma/(1+m) - xi/m.

    Admissible m lies in (m2c(lambda_plus), 0) with
    m2c(lambda_plus) = -sqrt(xi)/(sqrt(xi) + sqrt(gamma)).
    """
    gamma, xi = ar.gamma, ar.xi
    m_edge = -math.sqrt(xi) / (math.sqrt(xi) + math.sqrt(gamma))
    if not m_edge < m < 0:
        raise DomainError(f"m={m} outside the admissible interval ({m_edge}, 0)")
    return gamma / (1.0 + m) - xi / m


# ----------------------------------------------------------------------
# Marchenko-Pastur transforms of the iid sketch Gram matrices
# ----------------------------------------------------------------------


def mp_edges(xi: float) -> tuple[float, float]:
    """Support edges (1 -+ sqrt(xi))^2 of the MP law of S S^T."""
    return (1.0 - math.sqrt(xi)) ** 2, (1.0 + math.sqrt(xi)) ** 2


def _mp_sqrt(z, xi: float):
    lo, hi = mp_edges(xi)
    return _edge_sqrt(z, lo, hi)


def _mp_check_real(z, xi: float):
    zc = complex(z)
    if zc.imag == 0.0:
        lo, hi = mp_edges(xi)
        if lo <= zc.real <= hi:
            raise DomainError(f"z={zc.real} lies inside the MP bulk [{lo}, {hi}]")
    return zc


def mp_m1S(z, xi: float) -> complex:
    """Stieltjes transform of the MP law of S S^T (iid entries, variance 1/n)."""
    zc = _mp_check_real(z, xi)
    m = (-(zc - 1.0 + xi) + complex(_mp_sqrt(zc, xi))) / (2.0 * zc * xi)
    return complex(m.real, 0.0) if complex(z).imag == 0.0 else m


def mp_m2S(z, xi: float) -> complex:
    """Stieltjes transform of the MP law of S^T S (companion normalization)."""
    zc = _mp_check_real(z, xi)
    m = (-(zc + 1.0 - xi) + complex(_mp_sqrt(zc, xi))) / (2.0 * zc)
    return complex(m.real, 0.0) if complex(z).imag == 0.0 else m


def _mp_sqrt_prime(z, xi: float):
    # d/dz sqrt((z-hi)(z-lo)) = (z - (1+xi)) / sqrt(...)
    return (complex(z) - (1.0 + xi)) / complex(_mp_sqrt(z, xi))


def mp_m1S_prime(z, xi: float) -> complex:
    zc = _mp_check_real(z, xi)
    N = -(zc - 1.0 + xi) + complex(_mp_sqrt(zc, xi))
    Np = -1.0 + _mp_sqrt_prime(zc, xi)
    m = (Np * zc - N) / (2.0 * zc * zc * xi)
    return complex(m.real, 0.0) if complex(z).imag == 0.0 else m


def mp_m2S_prime(z, xi: float) -> complex:
    zc = _mp_check_real(z, xi)
    M = -(zc + 1.0 - xi) + complex(_mp_sqrt(zc, xi))
    Mp = -1.0 + _mp_sqrt_prime(zc, xi)
    m = (Mp * zc - M) / (2.0 * zc * zc)
    return complex(m.real, 0.0) if complex(z).imag == 0.0 else m


def mp_g1S(m: float, xi: float) -> float:
    """Inverse of mp_m1S: g1S(m) = 1/(1 + xi m) - 1/m."""
    if m == 0.0 or 1.0 + xi * m == 0.0:
        raise DomainError("m at a pole of g1S")
    return 1.0 / (1.0 + xi * m) - 1.0 / m


def mp_g2S(m: float, xi: float) -> float:
    """Inverse of mp_m2S: g2S(m) = xi/(1 + m) - 1/m."""
    if m == 0.0 or 1.0 + m == 0.0:
        raise DomainError("m at a pole of g2S")
    return xi / (1.0 + m) - 1.0 / m


class MpTransforms(NamedTuple):
    m1S: complex | None
    m2S: complex | None
    g1S: float | None
    g2S: float | None


def mp_transforms(value, xi: float) -> MpTransforms:
    """Evaluate every MP transform whose domain contains ``value``.

    Forward slots treat ``value`` as a spectral point z outside the bulk;
    inverse slots treat it as a transform value m (real, away from the
    poles). Slots whose domain excludes ``value`` come back as None; a
    real ``value`` strictly inside the MP bulk raises DomainError since
    neither forward transform exists there.
    """
    m1 = m2 = g1 = g2 = None
    zc = complex(value)
    lo, hi = mp_edges(xi)
    if zc.imag == 0.0 and lo <= zc.real <= hi:
        raise DomainError(f"value {zc.real} lies inside the MP bulk [{lo}, {hi}]")
    if zc.imag != 0.0 or zc.real != 0.0:
        m1 = mp_m1S(value, xi)
        m2 = mp_m2S(value, xi)
    if zc.imag == 0.0:
        m = zc.real
        if m != 0.0 and 1.0 + xi * m != 0.0:
            g1 = mp_g1S(m, xi)
        if m != 0.0 and 1.0 + m != 0.0:
            g2 = mp_g2S(m, xi)
    return MpTransforms(m1, m2, g1, g2)


def mp_bulk_atoms(xi: float, m: int = 500) -> SpectralAtoms:
    """Discretize the MP(xi) density into m equal-width atoms (midpoint rule)."""
    lo, hi = mp_edges(xi)
    edges = np.linspace(lo, hi, m + 1)
    xs = 0.5 * (edges[:-1] + edges[1:])
    dens = np.sqrt(np.clip((hi - xs) * (xs - lo), 0.0, None)) / (2.0 * np.pi * xi * xs)
    w = dens * np.diff(edges)
    return SpectralAtoms(xs, w / w.sum())


# ----------------------------------------------------------------------
# iid projection family: cubic m1c, g1c, bulk edge, predictions
# ----------------------------------------------------------------------


def g1c_iid(m: float, ar: AspectRatios) -> float:
    """Inverse spike transform of the iid family.

    g1c(m) = -gamma/m + (xi/m) (1 - m1S(-1/m)/m), defined for real m in
    (-1/lambda_plus^S, 0) so that -1/m lies above the MP bulk of S S^T.
    """
    gamma, xi = ar.gamma, ar.xi
    _, hi = mp_edges(xi)
    if not -1.0 / hi < m < 0.0:
        raise DomainError(f"m={m} outside the admissible interval ({-1.0 / hi}, 0)")
    u = -1.0 / m
    m1 = mp_m1S(u, xi).real
    return -gamma / m + (xi / m) * (1.0 - m1 / m)


def g1c_iid_prime(m: float, ar: AspectRatios) -> float:
    """Analytic derivative of g1c (no finite differences)."""
    gamma, xi = ar.gamma, ar.xi
    _, hi = mp_edges(xi)
    if not -1.0 / hi < m < 0.0:
        raise DomainError(f"m={m} outside the admissible interval ({-1.0 / hi}, 0)")
    u = -1.0 / m
    m1 = mp_m1S(u, xi).real
    m1p = mp_m1S_prime(u, xi).real
    return gamma / m**2 - xi / m**2 + 2.0 * xi * m1 / m**3 - xi * m1p / m**4


@lru_cache(maxsize=256)
def _bulk_edge_iid_cached(gamma: float, xi: float) -> tuple[float, float]:
    ar = AspectRatios(gamma, xi)
    _, hi = mp_edges(xi)
    left = -1.0 / hi
    a = left * (1.0 - 1e-12)
    b = -1e-12 * max(1.0, abs(left))
    fa = g1c_iid_prime(a, ar)
    fb = g1c_iid_prime(b, ar)
    if not (fa < 0.0 < fb):
        raise NumericalError(
            f"failed to bracket the g1c critical point on ({left}, 0): "
            f"g1c'({a})={fa}, g1c'({b})={fb}"
        )
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mid == a or mid == b:
            break
        fm = g1c_iid_prime(mid, ar)
        if fm < 0.0:
            a = mid
        else:
            b = mid
    m_star = 0.5 * (a + b)
    if abs(g1c_iid_prime(m_star, ar)) > 1e-10 * max(1.0, abs(g1c_iid(m_star, ar))):
        raise NumericalError("g1c critical point did not refine to |g1c'| <= 1e-10")
    return g1c_iid(m_star, ar), m_star


def bulk_edge_iid(ar: AspectRatios) -> tuple[float, float]:
    """Rightmost bulk edge for the iid family.

    Returns (lambda_plus, m_star) where m_star is the unique critical
    point of g1c on the admissible negative interval and
    lambda_plus = g1c(m_star).
    """
    return _bulk_edge_iid_cached(float(ar.gamma), float(ar.xi))


def _cubic_coeffs(z: float, gamma: float, xi: float) -> np.ndarray:
    return np.array(
        [
            z * z,
            -z * (1.0 + xi - 2.0 * gamma),
            -(z + (1.0 - gamma) * (gamma - xi)),
            -gamma,
        ]
    )


def solve_cubic_m1c(z: float, ar: AspectRatios) -> float:
    """Stieltjes branch of the cubic satisfied by the iid family's m1c.

    z^2 m^3 - z(1 + xi - 2 gamma) m^2 - [z + (1-gamma)(gamma-xi)] m - gamma = 0,
    selecting the real root that is negative, increasing in z, and decays
    to 0 as z -> infinity (equivalently, the root the inverse map g1c
    sends back to z). Requires z strictly above the iid bulk edge.
    """
    gamma, xi = ar.gamma, ar.xi
    lam_plus, m_star = bulk_edge_iid(ar)
    if not z > lam_plus:
        raise DomainError(f"z={z} is not above the iid bulk edge {lam_plus}")
    # g1c is a monotone bijection (m_star, 0) -> (lam_plus, inf), so bisecting
    # g1c(m) = z lands exactly on the Stieltjes root; two cubic roots merge at
    # the edge, which defeats naive root selection there.
    lo = m_star * (1.0 - 1e-14)
    hi = -1e-300
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if g1c_iid(mid, ar) < z:
            lo = mid
        else:
            hi = mid
    m = 0.5 * (lo + hi)
    coeffs = _cubic_coeffs(z, gamma, xi)
    deriv = np.polyder(coeffs)

    def rel_resid(mm: float) -> float:
        scale = np.sum(np.abs(coeffs * np.array([mm**3, mm**2, mm, 1.0])))
        return abs(np.polyval(coeffs, mm)) / max(scale, np.finfo(float).tiny)

    # guarded Newton polish on the cubic: keep steps inside the branch
    for _ in range(8):
        p = np.polyval(coeffs, m)
        dp = np.polyval(deriv, m)
        if dp == 0.0:
            break
        step = m - p / dp
        if not m_star <= step < 0.0 or rel_resid(step) >= rel_resid(m):
            break
        m = step
    if rel_resid(m) > 1e-12:
        raise NumericalError(f"cubic residual did not polish below 1e-12 at z={z}")
    return float(m)


def _alpha_iid(d: float, gamma: float, xi: float) -> float:
    t = gamma / (d * d)
    return -t / ((1.0 + t) * (xi + t))


@lru_cache(maxsize=256)
def _d_critical_iid_cached(gamma: float, xi: float) -> float:
    ar = AspectRatios(gamma, xi)
    _, m_star = bulk_edge_iid(ar)
    # alpha(d) decreases then increases in d with minimum -1/lambda_plus^S at
    # d^2 = gamma/sqrt(xi); the threshold crossing lives on the increasing
    # branch, so the bisection is restricted to it.
    lo = math.sqrt(gamma) / xi**0.25
    hi = lo
    for _ in range(200):
        hi *= 2.0
        if _alpha_iid(hi, gamma, xi) > m_star:
            break
    else:
        raise NumericalError("failed to bracket the iid detection threshold")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _alpha_iid(mid, gamma, xi) > m_star:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def predict_iid(d: float, ar: AspectRatios) -> SpikePrediction:
    """Spike prediction for projections with iid entries of variance 1/n.

    theta = g1c(alpha(d)) and the overlap follows the contour-integral
    formula with the analytic derivatives of g1c and m2S; below the
    threshold (alpha(d_c) = m1c(lambda_plus), solved on the monotone
    branch of alpha) the eigenvalue sticks to the iid bulk edge.
    """
    if not d > 0:
        raise DomainError(f"signal strength d must be positive, got {d}")
    gamma, xi = ar.gamma, ar.xi
    lam_plus, _ = bulk_edge_iid(ar)
    d_crit = _d_critical_iid_cached(float(gamma), float(xi))
    if d <= d_crit:
        return SpikePrediction(d, lam_plus, 0.0, False, lam_plus, d_crit)
    a = _alpha_iid(d, gamma, xi)
    theta = g1c_iid(a, ar)
    num = (a * a / (d * d)) * g1c_iid_prime(a, ar)
    den = mp_m2S_prime(-1.0 / a, xi).real / (a * a) - (1.0 + gamma / (d * d))
    cos2 = num / den
    return SpikePrediction(d, theta, cos2, True, lam_plus, d_crit)


# ----------------------------------------------------------------------
# General self-consistent pair (m1c, m2c) from spectral atoms
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class StieltjesSolution:
    """Solution of the self-consistent pair at one spectral point."""

    z: complex
    m1c: complex
    m2c: complex
    mc: complex


def _pair_maps(z, sv, sw, bv, bw, gamma, xi):
    def f1(m2):
        return gamma * np.sum(sw * sv / (-z * (1.0 + sv * m2)))

    def f2(m1):
        return xi * np.sum(bw * bv / (-z * (1.0 + bv * m1)))

    return f1, f2


def _iterate_pair(z, m1, m2, sv, sw, bv, bw, gamma, xi, tol, max_iter):
    f1, f2 = _pair_maps(z, sv, sw, bv, bw, gamma, xi)
    resid = np.inf
    for _ in range(max_iter):
        n1 = f1(m2)
        m1 = 0.5 * m1 + 0.5 * n1
        n2 = f2(m1)
        m2 = 0.5 * m2 + 0.5 * n2
        resid = max(abs(n1 - m1), abs(n2 - m2))
        if resid <= 0.5 * tol:
            break
    # undamped polish: contractive near the fixed point for Im z > 0
    for _ in range(200):
        n1 = f1(m2)
        n2 = f2(n1)
        resid = max(abs(n1 - m1), abs(n2 - m2))
        m1, m2 = n1, n2
        if resid <= tol:
            break
    return m1, m2, max(abs(m1 - f1(m2)), abs(m2 - f2(m1)))


def _newton_real(x, m1, m2, sv, sw, bv, bw, gamma, xi):
    for _ in range(60):
        f1, f2 = _pair_maps(x, sv, sw, bv, bw, gamma, xi)
        g1 = m1 - f1(m2)
        g2 = m2 - f2(m1)
        if max(abs(g1), abs(g2)) <= 1e-13:
            break
        d12 = (gamma / x) * np.sum(sw * sv**2 / (1.0 + sv * m2) ** 2)
        d21 = (xi / x) * np.sum(bw * bv**2 / (1.0 + bv * m1) ** 2)
        det = 1.0 - d12 * d21
        if det == 0.0:
            break
        dm1 = (-g1 - d12 * g2) / det
        dm2 = (-g2 - d21 * g1) / det
        m1 += dm1
        m2 += dm2
    return m1, m2


def solve_self_consistent(
    z,
    pi_sigma: SpectralAtoms,
    pi_b: SpectralAtoms,
    ar: AspectRatios,
    max_iter: int = 10000,
) -> StieltjesSolution:
    """Solve the coupled pair of self-consistent equations at z.

      m1c = gamma * int x / (-z (1 + x m2c)) d pi_sigma(x)
      m2c = xi    * int x / (-z (1 + x m1c)) d pi_b(x)

    by damped fixed-point iteration (damping 1/2) started from
    m1c = m2c = i at Im z >= 1 and continued down in Im z; real z above
    the bulk gets a final Newton step on the real axis. The companion
    transform mc = int 1/(-z(1 + x m2c)) d pi_sigma(x) is returned too.
    """
    gamma, xi = ar.gamma, ar.xi
    sv, sw = pi_sigma.values, pi_sigma.weights
    bv, bw = pi_b.values, pi_b.weights
    zc = complex(z)
    if zc.imag < 0.0:
        # Stieltjes reflection: solve in the upper half plane and conjugate
        sol = solve_self_consistent(zc.conjugate(), pi_sigma, pi_b, ar, max_iter)
        return StieltjesSolution(
            z=zc,
            m1c=sol.m1c.conjugate(),
            m2c=sol.m2c.conjugate(),
            mc=sol.mc.conjugate(),
        )
    target_eta = zc.imag
    real_axis = target_eta == 0.0
    x = zc.real
    if real_axis and x == 0.0:
        raise DomainError("z = 0 is not a valid spectral point")

    eta = max(1.0, target_eta)
    m1 = m2 = 1j
    tol = 1e-13
    while True:
        zz = complex(x, eta)
        m1, m2, resid = _iterate_pair(zz, m1, m2, sv, sw, bv, bw, gamma, xi, tol, max_iter)
        if resid > 1e-9:
            raise NumericalError(
                f"self-consistent iteration stalled at z={zz}: residual {resid:.3e}"
            )
        if not real_axis and eta <= target_eta * (1.0 + 1e-12):
            break
        if real_axis and eta <= 1e-9:
            break
        eta = max(eta * 0.25, 1e-9 if real_axis else target_eta)

    if real_axis:
        if abs(m2.imag) > 1e-4 or abs(m1.imag) > 1e-4:
            raise DomainError(
                f"z={x} appears to lie inside the spectral bulk "
                f"(Im m1c={m1.imag:.3e}, Im m2c={m2.imag:.3e} at eta=1e-9)"
            )
        r1, r2 = _newton_real(x, m1.real, m2.real, sv, sw, bv, bw, gamma, xi)
        m1, m2 = complex(r1), complex(r2)
        zc = complex(x)

    f1, f2 = _pair_maps(zc if not real_axis else complex(x, 0.0), sv, sw, bv, bw, gamma, xi)
    resid = max(abs(m1 - f1(m2)), abs(m2 - f2(m1)))
    if resid > 1e-12:
        raise NumericalError(f"self-consistent residual {resid:.3e} exceeds 1e-12 at z={z}")
    mc = np.sum(sw / (-zc * (1.0 + sv * m2)))
    return StieltjesSolution(z=zc, m1c=complex(m1), m2c=complex(m2), mc=complex(mc))


def m2c_from_atoms(x: float, pi_sigma: SpectralAtoms, pi_b: SpectralAtoms, ar: AspectRatios) -> float:
    """Real-axis m2c evaluation for use in the scalar master equation."""
    return solve_self_consistent(x, pi_sigma, pi_b, ar).m2c.real


def support_edge(
    pi_sigma: SpectralAtoms,
    pi_b: SpectralAtoms,
    ar: AspectRatios,
    hi: float | None = None,
    tol: float = 1e-6,
) -> float:
    """Rightmost edge of the limiting bulk for general spectral atoms.

    Walks down from above the support and bisects on the onset of a
    nonzero limiting imaginary part (Im mc at Im z = 1e-7 against the
    threshold 1e-4).
    """
    gamma, xi = ar.gamma, ar.xi
    eta = 1e-7

    def inside(x: float) -> bool:
        sol = _continued_mc(x, eta, pi_sigma, pi_b, gamma, xi)
        return sol > 1e-4

    if hi is None:
        smax = float(pi_sigma.values.max())
        bmax = float(pi_b.values.max())
        hi = 2.0 * (math.sqrt(gamma * smax) + math.sqrt(xi * bmax * smax)) ** 2 + 1.0
    for _ in range(100):
        if not inside(hi):
            break
        hi *= 2.0
    else:
        raise NumericalError("support edge scan failed to get above the bulk")
    lo = hi
    for _ in range(400):
        lo *= 0.85
        if inside(lo):
            break
        if lo < 1e-8 * hi:
            raise NumericalError("support edge scan failed to find the bulk")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if inside(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _continued_mc(x, eta_target, pi_sigma, pi_b, gamma, xi):
    sv, sw = pi_sigma.values, pi_sigma.weights
    bv, bw = pi_b.values, pi_b.weights
    eta = 1.0
    m1 = m2 = 1j
    while True:
        zz = complex(x, eta)
        m1, m2, _ = _iterate_pair(zz, m1, m2, sv, sw, bv, bw, gamma, xi, 1e-11, 10000)
        if eta <= eta_target * (1.0 + 1e-12):
            break
        eta = max(eta * 0.25, eta_target)
    mc = np.sum(sw / (-complex(x, eta_target) * (1.0 + sv * m2)))
    return abs(mc.imag)


def find_spike_master(
    d: float,
    m2c_eval: Callable[[float], float],
    bracket: tuple[float, float],
) -> float | None:
    """Solve the scalar eigenvalue master equation m2c(x) = -1/(1 + d^2).

    ``m2c_eval`` must be increasing on the bracket (bulk edge, infinity).
    Returns the outlier location, or None when the target level lies below
    m2c at the lower bracket end (the below-threshold marker).
    """
    target = -1.0 / (1.0 + d * d)
    lo, hi = bracket
    f_lo = m2c_eval(lo) - target
    if f_lo >= 0.0:
        return None  # below threshold: no outlier detaches from the bulk
    f_hi = m2c_eval(hi) - target
    expansions = 0
    while f_hi < 0.0:
        expansions += 1
        if expansions > 60:
            raise NumericalError("master equation bracket failed to enclose a sign change")
        hi *= 2.0
        f_hi = m2c_eval(hi) - target
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = m2c_eval(mid) - target
        if abs(fm) <= 1e-10:
            return mid
        if fm < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ----------------------------------------------------------------------
# Large signals under a general noise covariance
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class CovSummary:
    """Spectral moments rho1 = tr(Sigma)/p, rho2 = ||Sigma||_F^2 / p and the
    signal-frame quadratic form E = U^T Sigma U."""

    rho1: float
    rho2: float
    E: np.ndarray


@dataclass(frozen=True)
class LargeSignalPrediction:
    theta: float
    cos2_ii: float
    cos2_cross: np.ndarray  # entry j: overlap with u_j, NaN at j = i and degenerate gaps
    degenerate: tuple[int, ...]


def cov_summary(Sigma, U) -> CovSummary:
    """Summarize a covariance for the large-signal formulas."""
    from .errors import DataError

    U = np.asarray(U, dtype=float)
    if hasattr(Sigma, "quad_form"):
        rho1 = Sigma.trace / Sigma.p
        rho2 = Sigma.fro_sq / Sigma.p
        E = Sigma.quad_form(U)
    else:
        S = np.asarray(Sigma, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise DataError("Sigma must be square")
        asym = np.max(np.abs(S - S.T))
        if asym > 1e-10:
            raise DataError(f"Sigma asymmetric beyond tolerance: max |S - S^T| = {asym:.3e}")
        p = S.shape[0]
        rho1 = float(np.trace(S)) / p
        rho2 = float(np.sum(S * S)) / p
        E = U.T @ S @ U
    E = 0.5 * (E + E.T)
    return CovSummary(rho1=float(rho1), rho2=float(rho2), E=E)


def predict_large_signal(
    d: Sequence[float],
    i: int,
    cov: CovSummary,
    ar: AspectRatios,
    xi_effective: float | None = None,
) -> LargeSignalPrediction:
    """Leading-order spike prediction for strong signals, general Sigma.

    theta_i = xi (d_i^2 + E_ii) + gamma rho1, and the diagonal overlap

        cos2_ii = (xi - gamma rho2 / d_i^4)
                  / (xi + (gamma/d_i^2) [rho1 + d_i^-2 (rho2 - rho1 E_ii)]).

    Cross overlaps with u_j scale the same quantity by |E_ji/(d_i^2-d_j^2)|^2.
    CountSketch variants substitute the effective xi. The O(1/l_i)
    remainders are not estimated.
    """
    dvec = np.asarray(d, dtype=float)
    if dvec.ndim != 1 or not np.all(dvec > 0):
        raise DomainError("signal strengths must be a 1-D positive sequence")
    k = dvec.size
    if not 0 <= i < k:
        raise DomainError(f"spike index {i} out of range for k={k}")
    xi = ar.xi if xi_effective is None else xi_effective
    gamma = ar.gamma
    di2 = dvec[i] ** 2
    Eii = float(cov.E[i, i])
    theta = xi * (di2 + Eii) + gamma * cov.rho1
    num = xi - gamma * cov.rho2 / di2**2
    den = xi + (gamma / di2) * (cov.rho1 + (cov.rho2 - cov.rho1 * Eii) / di2)
    cos2_ii = num / den
    cross = np.full(k, np.nan)
    degenerate = []
    for j in range(k):
        if j == i:
            continue
        gap = di2 - dvec[j] ** 2
        if gap == 0.0:
            degenerate.append(j)
            continue
        cross[j] = cos2_ii * (float(cov.E[j, i]) / gap) ** 2
    return LargeSignalPrediction(theta, cos2_ii, cross, tuple(degenerate))


# ----------------------------------------------------------------------
# Spike inversion and optimal shrinkage
# ----------------------------------------------------------------------


def spike_inverse(lambda_obs: float, ar: AspectRatios) -> float | None:
    """Invert the spike forward map: the larger root ell of
    xi ell^2 + (xi + gamma - lambda) ell + gamma = 0.

    Returns None (the below-edge marker) when lambda_obs does not exceed
    the bulk edge.
    """
    gamma, xi = ar.gamma, ar.xi
    _, lam_plus = ar.edges()
    if not lambda_obs > lam_plus:
        return None
    b = xi + gamma - lambda_obs
    disc = b * b - 4.0 * xi * gamma
    if disc < 0.0:
        return None
    return (-b + math.sqrt(disc)) / (2.0 * xi)


@dataclass(frozen=True)
class ShrunkValue:
    """Result of applying an optimal shrinker to one sketched eigenvalue.

    ``value`` is the shrunk output, ``ell`` the debiased signal energy
    (None below the edge). Below the bulk edge the shrinker collapses to
    0 by convention, flagged with ``below_edge``.
    """

    value: float
    below_edge: bool
    ell: float | None


def shrinker(x: float, ar: AspectRatios, loss: str = "operator") -> ShrunkValue:
    """Optimal eigenvalue shrinker for the orthonormal sketch family.

    For a sketched-covariance singular value x, operator loss shrinks to
    ell = lambda^{-1}(x^2) and Frobenius loss to ell c^2 + s^2, with c^2
    the squared-cosine forward map at ell and s^2 = 1 - c^2; both maps
    are evaluated at the (gamma, xi) pair in use.
    """
    if x < 0:
        raise DomainError("singular values are nonnegative")
    if loss not in ("operator", "frobenius"):
        raise DomainError(f"loss must be 'operator' or 'frobenius', got {loss!r}")
    ell = spike_inverse(x * x, ar)
    if ell is None:
        return ShrunkValue(0.0, True, None)
    if loss == "operator":
        return ShrunkValue(ell, False, ell)
    c2 = cos2_forward(ell, ar.gamma, ar.xi)
    return ShrunkValue(ell * c2 + (1.0 - c2), False, ell)
