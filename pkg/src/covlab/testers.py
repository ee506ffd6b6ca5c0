"""Covariance testers run against clean and contaminated sample matrices.

Two probes with opposite fates on covariance-matched contamination: the
pair-averaged Frobenius statistic, optimal without noise and provably blind
here (the mixture covariance is exactly the identity), and a pairwise
fourth-moment probe that does see the mixture once samples reach the order of
dim^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import ContaminatedModel, EnsembleConfig, draw_model, sample_model, sample_perturbation
from .experiments import parallel_map
from .gauss import ZeroMeanGaussian
from .harness import derive_seed
from .matcore import SymmetricMatrix

__all__ = [
    "TestVerdict",
    "PowerResult",
    "frob_tester",
    "pair_kurtosis_tester",
    "tester_power",
    "frob_population_statistic",
    "kurtosis_population_deviations",
    "DATA_TAGS",
    "TESTER_TAGS",
]

DATA_TAGS = ("null", "noiseless-alt", "ensemble-alt")
TESTER_TAGS = ("frob", "kurtosis")

# Fourth-moment constants of the standard normal: Var(z^4) = Ez^8 - (Ez^4)^2
# = 105 - 9 = 96, and Cov(u^4, v^4) = 72 r^2 + 24 r^4 = 19.5 at correlation
# r = 1/2, the correlation of (x_i+x_j)/sqrt2 and (x_i+x_k)/sqrt2.
_VAR_Z4 = 96.0
_COV_Z4_OVERLAP = 19.5


@dataclass(frozen=True)
class TestVerdict:
    """Accept/reject outcome; reject means "covariance far from identity"."""

    statistic: float
    threshold: float
    reject: bool

    def __post_init__(self) -> None:
        if self.reject != (self.statistic > self.threshold):
            raise ValueError("reject flag must equal statistic > threshold")


def _canonical_rows(samples: np.ndarray) -> np.ndarray:
    # Sort rows lexicographically so the statistic is bit-identical under any
    # permutation of sample order.
    order = np.lexsort(samples.T[::-1])
    return samples[order]


def frob_tester(samples: np.ndarray, gamma: float, delta: float = 1 / 3) -> TestVerdict:
    """Pair-averaged unbiased estimate of |Cov - I|_F^2, thresholded at gamma^2/2.

    The estimator combines the mean over ordered sample pairs (i != j) of
    (x_i . x_j)^2, an unbiased estimate of tr(Cov^2), with the mean of |x_i|^2
    for tr(Cov).  ``delta`` is the error budget per arm that the frozen
    sample-size multiplier in ``calibration`` was tuned for; it does not move
    the threshold.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise ValueError("samples must be an (n, d) matrix")
    n, d = samples.shape
    if n < 2:
        raise ValueError("need at least two samples")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    x = _canonical_rows(samples)
    gram = x.T @ x
    row_sq = np.einsum("ij,ij->i", x, x)
    # sum over ordered pairs i != j of (x_i . x_j)^2 = |X^T X|_F^2 - sum |x_i|^4
    pair_sum = float(np.sum(gram * gram)) - float(np.sum(row_sq * row_sq))
    tr_sq_est = pair_sum / (n * (n - 1))
    tr_est = float(np.sum(row_sq)) / n
    statistic = tr_sq_est - 2.0 * tr_est + d
    threshold = gamma * gamma / 2.0
    return TestVerdict(statistic=statistic, threshold=threshold, reject=statistic > threshold)


def _kurtosis_null_moments(n: int, d: int) -> tuple[float, float]:
    """Analytic null mean and variance of the summed squared deviations under G."""
    m = d * (d - 1) / 2.0
    mean = m * _VAR_Z4 / n
    # Diagonal terms plus the covariance of squares across index-sharing pairs
    # (each unordered pair has 2(d-2) partners sharing one coordinate).
    var = 2.0 * m * (_VAR_Z4 / n) ** 2 + m * 2.0 * (d - 2) * 2.0 * (_COV_Z4_OVERLAP / n) ** 2
    return mean, var


def pair_kurtosis_tester(samples: np.ndarray, threshold_scale: float) -> TestVerdict:
    """Fourth moments of (x_i + x_j)/sqrt2 over all coordinate pairs, against 3.

    The statistic sums the squared deviations of the empirical fourth moments
    from 3 (their value under the standard normal), centered and scaled by the
    analytic null mean and variance; rejection is a one-sided threshold on
    the standardized value.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise ValueError("samples must be an (n, d) matrix")
    n, d = samples.shape
    if n < 8:
        raise ValueError("need at least eight samples")
    if d < 2:
        raise ValueError("need at least two coordinates")
    x2 = samples * samples
    x3 = x2 * samples
    s31 = x3.T @ samples      # sum_k x_ki^3 x_kj
    s22 = x2.T @ x2           # sum_k x_ki^2 x_kj^2
    col4 = np.sum(x2 * x2, axis=0)
    # sum_k (x_ki + x_kj)^4, assembled from the power sums
    pair4 = col4[:, None] + col4[None, :] + 4.0 * s31 + 4.0 * s31.T + 6.0 * s22
    m4 = pair4 / (4.0 * n)
    dev = m4 - 3.0
    iu = np.triu_indices(d, k=1)
    total = float(np.sum(dev[iu] ** 2))
    mean0, var0 = _kurtosis_null_moments(n, d)
    statistic = (total - mean0) / math.sqrt(var0)
    return TestVerdict(
        statistic=statistic, threshold=threshold_scale, reject=statistic > threshold_scale
    )


def frob_population_statistic(model: ContaminatedModel) -> float:
    """Population value of the Frobenius statistic under a mixture: |mixture cov - I|_F^2."""
    eps = model.epsilon
    mix = (1.0 - eps) * model.inlier.covariance.data + eps * model.outlier.covariance.data
    dev = mix - np.eye(model.dim)
    return float(np.sum(dev * dev))


def kurtosis_population_deviations(model: ContaminatedModel) -> np.ndarray:
    """Population fourth-moment deviations 3 a^2 (1-eps)/eps per coordinate pair.

    For direction u = (e_i + e_j)/sqrt2 the mixture fourth moment is
    3[(1-eps)(1+a)^2 + eps(1-((1-eps)/eps) a)^2] with a = A_ij, and the
    covariance-matched weights cancel the linear term, leaving
    3 + 3 a^2 (1-eps)/eps.  Strictly positive somewhere for every accepted A.
    """
    a = model.perturbation.data
    iu = np.triu_indices(model.dim, k=1)
    return 3.0 * a[iu] ** 2 * (1.0 - model.epsilon) / model.epsilon


@dataclass(frozen=True)
class PowerResult:
    reject_rate: float
    wilson_interval: tuple[float, float]
    trials: int
    rejects: int


def _wilson(successes: int, total: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if total == 0:
        return (0.0, 1.0)
    phat = successes / total
    denom = 1.0 + z * z / total
    center = (phat + z * z / (2 * total)) / denom
    half = z * math.sqrt(phat * (1 - phat) / total + z * z / (4 * total * total)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def _power_trial(args) -> bool:
    cfg, data_tag, tester_tag, n, gamma, threshold_scale, seed = args
    rng = np.random.Generator(np.random.PCG64(seed))
    if data_tag == "null":
        samples = rng.standard_normal((n, cfg.dim))
    elif data_tag == "noiseless-alt":
        a = sample_perturbation(cfg, rng).matrix
        law = ZeroMeanGaussian.from_covariance(
            SymmetricMatrix(np.eye(cfg.dim) + a.data)
        )
        samples = law.sample(rng, n)
    elif data_tag == "ensemble-alt":
        model = draw_model(cfg, rng).model
        samples = sample_model(model, rng, n)
    else:
        raise ValueError(f"unknown dataset tag {data_tag!r}; expected one of {DATA_TAGS}")
    if tester_tag == "frob":
        verdict = frob_tester(samples, gamma)
    elif tester_tag == "kurtosis":
        verdict = pair_kurtosis_tester(samples, threshold_scale)
    else:
        raise ValueError(f"unknown tester tag {tester_tag!r}; expected one of {TESTER_TAGS}")
    return verdict.reject


def tester_power(
    cfg: EnsembleConfig,
    data_tag: str,
    tester_tag: str,
    n: int,
    trials: int,
    rng: np.random.Generator,
    *,
    gamma: float = 0.5,
    threshold_scale: float = 5.0,
    workers: int = 1,
) -> PowerResult:
    """Rejection frequency of a tester over fresh datasets, with a 95% score interval."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if data_tag not in DATA_TAGS:
        raise ValueError(f"unknown dataset tag {data_tag!r}; expected one of {DATA_TAGS}")
    if tester_tag not in TESTER_TAGS:
        raise ValueError(f"unknown tester tag {tester_tag!r}; expected one of {TESTER_TAGS}")
    base = int(rng.integers(0, 2**63))
    seeds = [derive_seed(base, "power", i) for i in range(trials)]
    args = [(cfg, data_tag, tester_tag, n, gamma, threshold_scale, s) for s in seeds]
    rejects = sum(parallel_map(_power_trial, args, workers))
    return PowerResult(
        reject_rate=rejects / trials,
        wilson_interval=_wilson(rejects, trials),
        trials=trials,
        rejects=rejects,
    )
