"""Dense symmetric-matrix numerics: norms, trace powers, log-determinants, PD checks.

Design envelope is dense float64 storage at dimensions up to ~1024; everything
here is O(d^2) or O(d^3) and immutable after construction, so values can be
shared freely across workers.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SymmetricMatrix",
    "Spectrum",
    "SymmetryError",
    "NotPositiveDefinite",
    "SpectralNormDidNotConverge",
    "frobenius_norm",
    "spectral_norm",
    "trace_product_pow",
    "logdet_pd",
    "is_pd",
    "spectrum",
]

# Asymmetry beyond this is treated as a caller bug, not round-trip noise.
_ASYM_TOL = 1e-12


class SymmetryError(ValueError):
    """Input matrix is too asymmetric to repair by averaging with its transpose."""


class NotPositiveDefinite(ValueError):
    """A matrix that must be positive definite is not (factorization hit a non-positive pivot)."""


class SpectralNormDidNotConverge(RuntimeError):
    """Power iteration reached its iteration cap before certifying the requested tolerance."""


class SymmetricMatrix:
    """Immutable dense real symmetric matrix.

    Construction symmetrizes the input as (M + M^T)/2 when the largest
    asymmetry is below 1e-12 and rejects anything worse.  After construction
    ``entries[i, j] == entries[j, i]`` holds bit-exactly and the backing array
    is read-only.
    """

    __slots__ = ("_data",)

    def __init__(self, entries) -> None:
        arr = np.array(entries, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise ValueError("matrix dimension must be at least 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("matrix entries must be finite")
        asym = float(np.max(np.abs(arr - arr.T)))
        if asym > _ASYM_TOL:
            raise SymmetryError(
                f"input asymmetry {asym:.3e} exceeds {_ASYM_TOL:.0e}; refusing to symmetrize"
            )
        sym = (arr + arr.T) / 2.0
        sym.setflags(write=False)
        self._data = sym

    @property
    def data(self) -> np.ndarray:
        """Read-only (d, d) float64 array."""
        return self._data

    @property
    def dim(self) -> int:
        return self._data.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "SymmetricMatrix":
        return cls(np.eye(dim))

    @classmethod
    def zeros(cls, dim: int) -> "SymmetricMatrix":
        return cls(np.zeros((dim, dim)))

    @classmethod
    def diagonal(cls, values) -> "SymmetricMatrix":
        return cls(np.diag(np.asarray(values, dtype=float)))

    def __repr__(self) -> str:
        return f"SymmetricMatrix(dim={self.dim})"


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of a symmetric matrix, sorted non-increasing."""

    eigenvalues: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = self.eigenvalues
        if any(vals[i] < vals[i + 1] for i in range(len(vals) - 1)):
            raise ValueError("eigenvalues must be sorted non-increasing")


def spectrum(m: SymmetricMatrix) -> Spectrum:
    """Full spectrum via a dense symmetric eigensolver.

    Reference routine for small dimensions (test oracles, error diagnostics);
    the production paths below never rely on it.
    """
    vals = np.linalg.eigvalsh(m.data)
    return Spectrum(tuple(float(v) for v in vals[::-1]))


def frobenius_norm(m: SymmetricMatrix) -> float:
    """sqrt of the sum of squared entries."""
    return float(np.sqrt(np.sum(m.data * m.data)))


def _start_vector(data: np.ndarray) -> np.ndarray:
    # Deterministic start derived from the matrix contents: hash the bytes,
    # seed a private generator, draw one gaussian vector.
    digest = hashlib.blake2b(data.tobytes(), digest_size=8).digest()
    seed = int.from_bytes(digest, "little")
    g = np.random.Generator(np.random.PCG64(seed))
    v = g.standard_normal(data.shape[0])
    norm = float(np.linalg.norm(v))
    if norm == 0.0:  # pragma: no cover - measure zero
        v = np.ones(data.shape[0])
        norm = float(np.linalg.norm(v))
    return v / norm


def spectral_norm(m: SymmetricMatrix, tol: float = 1e-8, max_iter: int | None = None) -> float:
    """Largest absolute eigenvalue, via power iteration on M^2.

    Iterating on M^2 handles a negative extremal eigenvalue and eigenvalue
    pairs of opposite sign.  The result is accepted only once the Rayleigh
    residual certifies a relative error below ``tol``; past the iteration cap
    (default 10*d + 100) the routine raises instead of returning an
    uncertified value.  Deterministic for a fixed matrix: the start vector is
    derived from the matrix contents.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    data = m.data
    d = data.shape[0]
    if not np.any(data):
        return 0.0
    cap = max_iter if max_iter is not None else 10 * d + 100
    v = _start_vector(data)
    for _ in range(cap):
        w = data @ v
        q = float(w @ w)  # Rayleigh quotient of M^2 at unit v
        if q == 0.0:
            # v landed in the kernel; perturb deterministically and retry
            v = v + 1.0 / math.sqrt(d)
            v /= float(np.linalg.norm(v))
            continue
        u = data @ w  # M^2 v
        resid = float(np.linalg.norm(u - q * v))
        if resid <= tol * q:
            return math.sqrt(q)
        v = u / float(np.linalg.norm(u))
    raise SpectralNormDidNotConverge(
        f"power iteration did not certify tol={tol:g} within {cap} iterations (dim {d})"
    )


def validation_spectral_norm(m: SymmetricMatrix, tol: float = 1e-4) -> float:
    """Spectral norm at validation tolerance with a stall-proof iteration cap.

    For precondition checks a relative error of 1e-4 is ample, and at that
    tolerance the worst-case iteration count of the certified power method is
    about 1/(e*tol) whatever the spectrum looks like, so the cap below always
    suffices; near-degenerate top eigenvalue pairs cannot stall it.
    """
    return spectral_norm(m, tol=tol, max_iter=10 * m.dim + 6000)


def trace_product_pow(a: SymmetricMatrix, b: SymmetricMatrix, m: int) -> float:
    """tr((AB)^m) by iterated multiplication; m=1 reduces to the entrywise sum."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if m < 1:
        raise ValueError("power m must be >= 1")
    if m == 1:
        # tr(AB) = sum_ij A_ij B_ij for symmetric A, B
        return float(np.sum(a.data * b.data))
    p = a.data @ b.data
    acc = p
    for _ in range(m - 1):
        acc = acc @ p
    return float(np.trace(acc))


def logdet_pd(m: SymmetricMatrix) -> float:
    """log det of a symmetric positive definite matrix via Cholesky."""
    try:
        factor = np.linalg.cholesky(m.data)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(
            f"matrix of dim {m.dim} is not positive definite: {exc}"
        ) from exc
    return 2.0 * float(np.sum(np.log(np.diag(factor))))


def is_pd(m: SymmetricMatrix) -> bool:
    """True iff all eigenvalues are strictly positive (Cholesky succeeds)."""
    try:
        np.linalg.cholesky(m.data)
    except np.linalg.LinAlgError:
        return False
    return True
