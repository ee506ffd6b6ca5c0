"""Zero-mean Gaussian laws and their chi-square inner products.

The inner product of two zero-mean Gaussian densities taken against the
standard normal has the closed form det(S1 + S2 - S1*S2)^(-1/2).  Everything
here evaluates that quantity in log space through symmetric-PD factorizations
only, because downstream experiments raise these values to powers of order
d^2 where linear space overflows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular

from .matcore import (
    NotPositiveDefinite,
    SymmetricMatrix,
    trace_product_pow,
    validation_spectral_norm,
)

__all__ = [
    "ZeroMeanGaussian",
    "TaylorInner",
    "DetSeriesCheck",
    "DivergentIntegral",
    "DivergentSeries",
    "chi2_inner_exact",
    "log_chi2_inner_exact",
    "chi2_inner_taylor",
    "det_series_check",
    "tv_bound_from_chi2",
]

_LOG_2PI = math.log(2.0 * math.pi)


class DivergentIntegral(ValueError):
    """The defining integral diverges: a covariance has an eigenvalue >= 2."""


class DivergentSeries(ValueError):
    """The log-determinant power series does not converge for these inputs."""


@dataclass(frozen=True)
class ZeroMeanGaussian:
    """A zero-mean Gaussian law with cached Cholesky factor of its covariance.

    Immutable after construction; sampling takes an explicit generator, the
    object holds no hidden mutable state.
    """

    covariance: SymmetricMatrix
    factor: np.ndarray
    logdet_cov: float

    @classmethod
    def from_covariance(cls, covariance: SymmetricMatrix) -> "ZeroMeanGaussian":
        try:
            factor = np.linalg.cholesky(covariance.data)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(f"covariance is not positive definite: {exc}") from exc
        factor.setflags(write=False)
        logdet = 2.0 * float(np.sum(np.log(np.diag(factor))))
        return cls(covariance=covariance, factor=factor, logdet_cov=logdet)

    @property
    def dim(self) -> int:
        return self.covariance.dim

    @cached_property
    def precision(self) -> np.ndarray:
        """Inverse covariance, formed by two triangular solves against the factor."""
        eye = np.eye(self.dim)
        li = solve_triangular(self.factor, eye, lower=True)
        prec = li.T @ li
        prec = (prec + prec.T) / 2.0
        prec.setflags(write=False)
        return prec

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n i.i.d. rows; deterministic given the generator state."""
        if n < 1:
            raise ValueError("n must be >= 1")
        z = rng.standard_normal((n, self.dim))
        return z @ self.factor.T

    def log_pdf(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a vector of length {self.dim}, got shape {x.shape}")
        y = solve_triangular(self.factor, x, lower=True)
        quad = float(y @ y)
        return -0.5 * (self.dim * _LOG_2PI + self.logdet_cov + quad)

    def log_pdf_many(self, x: np.ndarray) -> np.ndarray:
        """Row-wise log density for an (n, d) batch."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ValueError(f"expected an (n, {self.dim}) batch, got shape {x.shape}")
        y = solve_triangular(self.factor, x.T, lower=True)
        quad = np.sum(y * y, axis=0)
        return -0.5 * (self.dim * _LOG_2PI + self.logdet_cov + quad)


def _pd_parts(sigma: SymmetricMatrix) -> tuple[float, np.ndarray]:
    """(logdet, inverse) of a PD matrix via its Cholesky factor."""
    law = ZeroMeanGaussian.from_covariance(sigma)
    return law.logdet_cov, law.precision


def _check_valid_covariance(sigma: SymmetricMatrix, name: str) -> None:
    dev = SymmetricMatrix(sigma.data - np.eye(sigma.dim))
    s = validation_spectral_norm(dev)
    if s >= 1.0:
        raise DivergentIntegral(
            f"{name} has an eigenvalue outside (0, 2) (|{name} - I| spectral norm {s:.6f} >= 1); "
            "the defining integral diverges"
        )


def _log_inner_from_parts(
    ld1: float, prec1: np.ndarray, ld2: float, prec2: np.ndarray
) -> float:
    """log inner product from precomputed per-covariance parts.

    Callers must have established that both covariances have spectrum inside
    (0, 2); then prec1 + prec2 - I is symmetric PD up to rounding.
    """
    mid = prec1 + prec2 - np.eye(prec1.shape[0])
    mid = (mid + mid.T) / 2.0
    try:
        factor = np.linalg.cholesky(mid)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(
            "interior matrix S1^-1 + S2^-1 - I lost positive definiteness to rounding"
        ) from exc
    ld_mid = 2.0 * float(np.sum(np.log(np.diag(factor))))
    return -0.5 * (ld1 + ld2 + ld_mid)


def log_chi2_inner_exact(sigma1: SymmetricMatrix, sigma2: SymmetricMatrix) -> float:
    """log of det(S1 + S2 - S1*S2)^(-1/2) for PD covariances with spectrum in (0, 2).

    Evaluated as -1/2 [logdet S1 + logdet S2 + logdet(S1^-1 + S2^-1 - I)] so
    every determinant is of a symmetric PD matrix; the direct argument
    S1 + S2 - S1*S2 is generally non-symmetric.
    """
    if sigma1.dim != sigma2.dim:
        raise ValueError(f"dimension mismatch: {sigma1.dim} vs {sigma2.dim}")
    _check_valid_covariance(sigma1, "S1")
    _check_valid_covariance(sigma2, "S2")
    ld1, prec1 = _pd_parts(sigma1)
    ld2, prec2 = _pd_parts(sigma2)
    return _log_inner_from_parts(ld1, prec1, ld2, prec2)


def chi2_inner_exact(sigma1: SymmetricMatrix, sigma2: SymmetricMatrix) -> float:
    return math.exp(log_chi2_inner_exact(sigma1, sigma2))


@dataclass(frozen=True)
class TaylorInner:
    """First-order expansion of the inner product for covariances I+A, I+B.

    ``correction_bound`` is the bound *expression* tr(AB)^2 + tr((AB)^2) + 1/d^2
    controlling the remainder, not a claimed remainder value; the hidden
    constant is calibrated empirically.
    """

    first_order: float
    correction_bound: float


def chi2_inner_taylor(a: SymmetricMatrix, b: SymmetricMatrix) -> TaylorInner:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    for m, name in ((a, "A"), (b, "B")):
        s = validation_spectral_norm(m)
        if s > 0.5:
            raise ValueError(
                f"spectral norm of {name} is {s:.4f} > 1/2; expansion not valid"
            )
    t1 = trace_product_pow(a, b, 1)
    t2 = trace_product_pow(a, b, 2)
    d = a.dim
    return TaylorInner(first_order=1.0 + t1 / 2.0, correction_bound=t1 * t1 + t2 + 1.0 / d**2)


@dataclass(frozen=True)
class DetSeriesCheck:
    """det(I - AB) against its truncated trace-power series.

    lhs is the LU determinant of I - AB; rhs is exp(-sum_{m<=M} tr((AB)^m)/m).
    ``tail_bound`` bounds the truncation error of log rhs by the geometric
    tail of (|A| |B|)^m.
    """

    lhs: float
    rhs: float
    tail_bound: float


def det_series_check(a: SymmetricMatrix, b: SymmetricMatrix, terms: int) -> DetSeriesCheck:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if terms < 1:
        raise ValueError("need at least one series term")
    na = validation_spectral_norm(a)
    nb = validation_spectral_norm(b)
    r = na * nb
    if r >= 1.0:
        raise DivergentSeries(f"|A| |B| = {r:.4f} >= 1; the series does not converge")
    d = a.dim
    p = a.data @ b.data
    lhs = float(np.linalg.det(np.eye(d) - p))
    acc = float(np.trace(p))
    power = p
    for m in range(2, terms + 1):
        power = power @ p
        acc += float(np.trace(power)) / m
    rhs = math.exp(-acc)
    if r > 0.0:
        tail = d * r ** (terms + 1) / ((terms + 1) * (1.0 - r))
    else:
        tail = 0.0
    return DetSeriesCheck(lhs=lhs, rhs=rhs, tail_bound=tail)


def tv_bound_from_chi2(chi2_self: float, tol: float = 1e-9) -> float:
    """(1/2) sqrt(chi2_self - 1) for a self inner product chi2_A(B, B).

    By Cauchy-Schwarz, chi2_A(B, B) - 1 >= 4 dTV(A, B)^2, so this value is an
    upper bound on the total variation between A and B: values near zero
    certify that no test can tell the two laws apart.  Valid only for the
    self form, which is >= 1 up to rounding; inputs below 1 beyond ``tol``
    are rejected rather than clamped.
    """
    if chi2_self < 1.0 - tol:
        raise ValueError(
            f"self inner product must be >= 1, got {chi2_self!r}; "
            "cross inner products of distinct laws do not feed this bound"
        )
    return 0.5 * math.sqrt(max(chi2_self - 1.0, 0.0))
