"""covlab: a numerical laboratory for Gaussian covariance testing under contamination."""

__version__ = "0.1.0"

from .ensemble import (
    AcceptedDraw,
    ContaminatedModel,
    EnsembleConfig,
    ModelDraw,
    RejectionBudgetExceeded,
    SoundnessGapError,
    build_model,
    chi2_mixture_exact,
    draw_model,
    draw_raw_perturbation,
    first_order_cancellation,
    load_matrix,
    log_chi2_mixture_exact,
    sample_model,
    sample_perturbation,
    save_matrix,
)
from .experiments import (
    ProductChi2Estimate,
    TailCurve,
    TailResult,
    TvPoint,
    aggregate_product_logs,
    chi2_product_estimate,
    default_thresholds,
    pair_log_values,
    trace_stat_tail,
    tv_curve,
)
from .gauss import (
    DetSeriesCheck,
    DivergentIntegral,
    DivergentSeries,
    TaylorInner,
    ZeroMeanGaussian,
    chi2_inner_exact,
    chi2_inner_taylor,
    det_series_check,
    log_chi2_inner_exact,
    tv_bound_from_chi2,
)
from .harness import (
    RunManifest,
    TrialRecord,
    derive_seed,
    derive_stream,
    emit,
    parse_records,
    splitmix64,
)
from .matcore import (
    NotPositiveDefinite,
    SpectralNormDidNotConverge,
    Spectrum,
    SymmetricMatrix,
    SymmetryError,
    frobenius_norm,
    is_pd,
    logdet_pd,
    spectral_norm,
    spectrum,
    trace_product_pow,
)
from .testers import (
    PowerResult,
    TestVerdict,
    frob_population_statistic,
    frob_tester,
    kurtosis_population_deviations,
    pair_kurtosis_tester,
    tester_power,
)

__all__ = [name for name in dir() if not name.startswith("_")]
