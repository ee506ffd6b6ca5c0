"""Monte Carlo experiments: trace-statistic tails, product-law inner products, TV curves.

Pair-level work is pure given a derived per-pair seed, so trials parallelize
across workers and the aggregation (compensated summation over a sorted
contribution list) is independent of completion order.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass

import numpy as np

from .ensemble import EnsembleConfig, draw_model, log_chi2_mixture_exact, sample_perturbation
from .gauss import tv_bound_from_chi2
from .harness import derive_seed
from .matcore import trace_product_pow

__all__ = [
    "TailCurve",
    "TailResult",
    "ProductChi2Estimate",
    "LogSummary",
    "TvPoint",
    "default_thresholds",
    "trace_stat_tail",
    "pair_log_values",
    "aggregate_product_logs",
    "chi2_product_estimate",
    "tv_curve",
]

_PAIR_TAG = "pair"
_MIN_TAIL_COUNT = 20
_OVERFLOW_LOG = 700.0  # exp() overflows float64 just above this


def parallel_map(fn, args_list, workers: int):
    """Order-preserving map, optionally across a process pool."""
    args_list = list(args_list)
    if workers <= 1 or len(args_list) <= 1:
        return [fn(args) for args in args_list]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(processes=workers) as pool:
        return pool.map(fn, args_list)


def _stream(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class TailCurve:
    """Empirical exceedance curve of the pair statistic tr(AB)^2 + tr((AB)^2).

    ``usable`` marks thresholds whose exceedance count reached the minimum for
    a meaningful tail estimate; the exponential rate is fitted by least
    squares of -log P against t over the usable points only (nan when fewer
    than two points qualify).
    """

    thresholds: tuple[float, ...]
    exceed_prob: tuple[float, ...]
    counts: tuple[int, ...]
    usable: tuple[bool, ...]
    fitted_rate: float
    n_pairs: int

    def __post_init__(self) -> None:
        probs = self.exceed_prob
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("exceedance probabilities must lie in [0, 1]")
        if any(probs[i] < probs[i + 1] - 1e-15 for i in range(len(probs) - 1)):
            raise ValueError("exceedance probabilities must be non-increasing in t")


@dataclass(frozen=True)
class TailResult:
    curve: TailCurve
    stats: np.ndarray      # per-pair statistic values, pair-index order
    trace_ab: np.ndarray
    trace_abab: np.ndarray
    seeds: np.ndarray


def default_thresholds(dim: int) -> tuple[float, ...]:
    """Grid in the natural 1/d^2 unit so all dimensions share comparable axes."""
    return tuple(k / dim**2 for k in (1.0, 2.0, 4.0, 8.0, 16.0))


def _tail_pair(args) -> tuple[float, float]:
    cfg, seed = args
    rng = _stream(seed)
    a = sample_perturbation(cfg, rng).matrix
    b = sample_perturbation(cfg, rng).matrix
    return trace_product_pow(a, b, 1), trace_product_pow(a, b, 2)


def trace_stat_tail(
    cfg: EnsembleConfig,
    pairs: int,
    thresholds,
    rng: np.random.Generator,
    *,
    workers: int = 1,
) -> TailResult:
    """Exceedance curve of s = tr(AB)^2 + tr((AB)^2) over independent accepted pairs."""
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    thresholds = tuple(sorted(float(t) for t in thresholds))
    base = int(rng.integers(0, 2**63))
    seeds = np.array([derive_seed(base, _PAIR_TAG, i) for i in range(pairs)], dtype=np.uint64)
    results = parallel_map(_tail_pair, [(cfg, int(s)) for s in seeds], workers)
    tr1 = np.array([r[0] for r in results])
    tr2 = np.array([r[1] for r in results])
    stats = tr1 * tr1 + tr2
    counts = tuple(int(np.sum(stats > t)) for t in thresholds)
    probs = tuple(c / pairs for c in counts)
    usable = tuple(c >= _MIN_TAIL_COUNT for c in counts)
    fit_t = [t for t, u, p in zip(thresholds, usable, probs) if u and p > 0.0]
    fit_y = [-math.log(p) for u, p in zip(usable, probs) if u and p > 0.0]
    if len(fit_t) >= 2:
        design = np.column_stack([np.ones(len(fit_t)), np.asarray(fit_t)])
        coef, *_ = np.linalg.lstsq(design, np.asarray(fit_y), rcond=None)
        rate = float(coef[1])
    else:
        rate = math.nan
    curve = TailCurve(
        thresholds=thresholds,
        exceed_prob=probs,
        counts=counts,
        usable=usable,
        fitted_rate=rate,
        n_pairs=pairs,
    )
    return TailResult(curve=curve, stats=stats, trace_ab=tr1, trace_abab=tr2, seeds=seeds)


@dataclass(frozen=True)
class LogSummary:
    count: int
    minimum: float
    maximum: float
    mean: float
    std: float

    @classmethod
    def of(cls, values: np.ndarray) -> "LogSummary":
        if values.size == 0:
            return cls(count=0, minimum=0.0, maximum=0.0, mean=0.0, std=0.0)
        return cls(
            count=int(values.size),
            minimum=float(np.min(values)),
            maximum=float(np.max(values)),
            mean=float(np.mean(values)),
            std=float(np.std(values)),
        )


@dataclass(frozen=True)
class ProductChi2Estimate:
    """Monte Carlo estimate of the product-law inner product via the pairwise identity.

    Per pair the single-sample log inner product L is scaled to N*L and
    exponentiated; any pair with N*L past the float64 overflow point is never
    materialized linearly -- it is excluded from the mean and reported in
    ``heavy_outliers``.  ``trimmed_mean`` (top 1% removed) and ``max_log``
    keep heavy-tail sensitivity visible rather than hidden.
    """

    dim: int
    n_samples_per_dataset: int
    pairs: int
    mean_estimate: float
    std_error: float
    trimmed_mean: float
    max_log: float
    heavy_outliers: int
    log_values: LogSummary
    audit_max_rel_err: float

    def __post_init__(self) -> None:
        if self.pairs < 1:
            raise ValueError("pairs must be >= 1")
        if self.mean_estimate < 0.0:
            raise ValueError("mean estimate cannot be negative")


def _product_pair(args) -> float:
    cfg, seed, index = args
    rng = _stream(seed)
    try:
        m1 = draw_model(cfg, rng).model
        m2 = draw_model(cfg, rng).model
    except Exception as exc:
        raise type(exc)(f"pair {index}: {exc}") from exc
    return log_chi2_mixture_exact(m1, m2)


def pair_log_values(
    cfg: EnsembleConfig,
    pairs: int,
    rng: np.random.Generator,
    *,
    workers: int = 1,
    pair_factory=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair log inner products and the seeds that produced them.

    ``pair_factory(rng) -> (m1, m2)`` overrides model generation (test hook,
    e.g. to force equal pairs); the default draws two independent models.
    """
    if pairs < 1:
        raise ValueError("pairs must be >= 1")
    base = int(rng.integers(0, 2**63))
    seeds = np.array([derive_seed(base, _PAIR_TAG, i) for i in range(pairs)], dtype=np.uint64)
    if pair_factory is None:
        logs = parallel_map(
            _product_pair, [(cfg, int(s), i) for i, s in enumerate(seeds)], workers
        )
    else:
        logs = []
        for s in seeds:
            m1, m2 = pair_factory(_stream(int(s)))
            logs.append(log_chi2_mixture_exact(m1, m2))
    return np.asarray(logs, dtype=float), seeds


def aggregate_product_logs(log_values: np.ndarray, n_samples: int, dim: int) -> ProductChi2Estimate:
    """Aggregate per-pair log inner products into an estimate of E[(chi2)^N]."""
    if n_samples < 0:
        raise ValueError("n_samples must be >= 0")
    logs = np.asarray(log_values, dtype=float)
    scaled = n_samples * logs
    heavy = scaled > _OVERFLOW_LOG
    included = np.sort(scaled[~heavy])
    k = included.size
    if k == 0:
        raise ValueError("every pair overflowed; nothing left to aggregate")
    values = np.exp(included)
    mean = math.fsum(values) / k
    if k > 1:
        var = math.fsum((v - mean) ** 2 for v in values) / (k - 1)
        se = math.sqrt(var / k)
    else:
        se = 0.0
    n_trim = max(1, int(0.01 * k)) if k > 1 else 0
    kept = values[: k - n_trim] if n_trim else values
    trimmed = math.fsum(kept) / kept.size
    # Audit a 1% subsample (every 100th log, at least one) against
    # extended-precision exponentiation.
    audit_err = 0.0
    for i in range(0, k, 100):
        wide = float(np.exp(np.longdouble(included[i])))
        if wide != 0.0:
            audit_err = max(audit_err, abs(values[i] - wide) / abs(wide))
    return ProductChi2Estimate(
        dim=dim,
        n_samples_per_dataset=n_samples,
        pairs=int(logs.size),
        mean_estimate=mean,
        std_error=se,
        trimmed_mean=trimmed,
        max_log=float(np.max(scaled)) if logs.size else 0.0,
        heavy_outliers=int(np.sum(heavy)),
        log_values=LogSummary.of(scaled),
        audit_max_rel_err=audit_err,
    )


def chi2_product_estimate(
    cfg: EnsembleConfig,
    n_samples: int,
    pairs: int,
    rng: np.random.Generator,
    *,
    workers: int = 1,
    pair_factory=None,
) -> ProductChi2Estimate:
    logs, _ = pair_log_values(cfg, pairs, rng, workers=workers, pair_factory=pair_factory)
    return aggregate_product_logs(logs, n_samples, cfg.dim)


@dataclass(frozen=True)
class TvPoint:
    """Chi-square certificate on the total variation between the product laws.

    The interpretation is one-sided: small values certify the product laws
    are nearly indistinguishable at this N.  ``bound`` is the
    isotonic-cleaned value (non-decreasing in N), ``bound_raw`` the per-point
    value before cleanup.  A mean more than three standard errors below 1 is
    Monte Carlo noise: flagged, and clamped to bound 0.
    """

    n_samples: int
    bound: float
    bound_raw: float
    mean_estimate: float
    std_error: float
    noise_flagged: bool
    heavy_outliers: int


def tv_curve(
    cfg: EnsembleConfig,
    n_samples_grid,
    pairs: int,
    rng: np.random.Generator,
    *,
    workers: int = 1,
    pair_factory=None,
) -> list[TvPoint]:
    """TV-certificate curve over a grid of N.

    One set of pairs is drawn and its log inner products are reused across
    the whole grid: the pairwise identity makes every N a deterministic
    function of the same per-pair logs, so redrawing per N would add cost
    without information.
    """
    grid = sorted(int(n) for n in n_samples_grid)
    if not grid:
        raise ValueError("n_samples_grid must be non-empty")
    if any(n < 0 for n in grid):
        raise ValueError("sample counts must be >= 0")
    logs, _ = pair_log_values(cfg, pairs, rng, workers=workers, pair_factory=pair_factory)
    points: list[TvPoint] = []
    for n in grid:
        est = aggregate_product_logs(logs, n, cfg.dim)
        flagged = est.mean_estimate < 1.0 - 3.0 * est.std_error
        if flagged:
            raw = 0.0
        else:
            raw = tv_bound_from_chi2(max(est.mean_estimate, 1.0))
        points.append(
            TvPoint(
                n_samples=n,
                bound=raw,  # replaced by the isotonic pass below
                bound_raw=raw,
                mean_estimate=est.mean_estimate,
                std_error=est.std_error,
                noise_flagged=flagged,
                heavy_outliers=est.heavy_outliers,
            )
        )
    running = 0.0
    cleaned: list[TvPoint] = []
    for pt in points:
        running = max(running, pt.bound_raw)
        cleaned.append(
            TvPoint(
                n_samples=pt.n_samples,
                bound=running,
                bound_raw=pt.bound_raw,
                mean_estimate=pt.mean_estimate,
                std_error=pt.std_error,
                noise_flagged=pt.noise_flagged,
                heavy_outliers=pt.heavy_outliers,
            )
        )
    return cleaned
