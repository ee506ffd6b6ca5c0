"""Command-line interface: seeded experiments in, CSV/JSON and manifests out.

Every subcommand is a pure function of its flags and the master seed; the
same invocation produces byte-identical outputs regardless of worker count.
Exit status 0 on success, 1 on numerical failure, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, calibration
from .ensemble import (
    EnsembleConfig,
    RejectionBudgetExceeded,
    SoundnessGapError,
    draw_model,
    first_order_cancellation,
    load_matrix,
    sample_perturbation,
    save_matrix,
)
from .experiments import (
    aggregate_product_logs,
    default_thresholds,
    pair_log_values,
    trace_stat_tail,
)
from .gauss import (
    DivergentIntegral,
    DivergentSeries,
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
    derive_seeds,
    derive_stream,
    emit,
    manifest_path_for,
    parse_records,
)
from .matcore import NotPositiveDefinite, SpectralNormDidNotConverge, SymmetricMatrix
from .testers import tester_power

SEED_ENV_VAR = "COVLAB_SEED"

_NUMERICAL_ERRORS = (
    NotPositiveDefinite,
    SpectralNormDidNotConverge,
    DivergentIntegral,
    DivergentSeries,
    SoundnessGapError,
    RejectionBudgetExceeded,
)


class UsageError(ValueError):
    pass


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dim", type=int, default=128, help="ambient dimension d")
    common.add_argument("--epsilon", type=float, default=None, help="contamination weight")
    common.add_argument("--frob-target", type=float, default=None, help="Frobenius gap the alternative must exceed")
    common.add_argument("--entry-scale", type=float, default=None, help="perturbation entry scale c (per-entry sd is c/d)")
    common.add_argument("--trials", type=int, default=100, help="trial / pair count")
    common.add_argument("--samples", type=str, default=None, help="sample count N (indist accepts a comma list)")
    common.add_argument("--seed", type=int, default=None, help=f"master seed (default: ${SEED_ENV_VAR} or 0)")
    common.add_argument("--out", type=str, default=None, help="output path")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--workers", type=int, default=1, help="worker processes for trial-level parallelism")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="covlab",
        description="Covariance-testing laboratory: contaminated mixtures, "
        "chi-square inner products, and sample-complexity experiments.",
    )
    parser.add_argument("--version", action="version", version=f"covlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("chi2", parents=[common], help="inner products for two matrices read from files")
    p.add_argument("matrix1", type=str)
    p.add_argument("matrix2", type=str)
    p.add_argument("--taylor", action="store_true",
                   help="treat the files as perturbations A, B and print the first-order expansion")

    sub.add_parser("gen-ensemble", parents=[common], help="emit accepted perturbations plus acceptance stats")

    p = sub.add_parser("concentration", parents=[common], help="tail curve of tr(AB)^2 + tr((AB)^2)")
    p.add_argument("--thresholds", type=str, default=None, help="comma list of absolute thresholds")

    sub.add_parser("indist", parents=[common], help="product-law inner product and TV certificate over N")

    p = sub.add_parser("power", parents=[common], help="tester rejection rates")
    p.add_argument("--data", choices=("null", "noiseless-alt", "ensemble-alt"), required=True)
    p.add_argument("--tester", choices=("frob", "kurtosis"), required=True)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--threshold-scale", type=float, default=calibration.KURTOSIS_THRESHOLD_SCALE)

    sub.add_parser("selfcheck", parents=[common], help="run the oracle-backed invariant suite")
    return parser


def _master_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV_VAR)
    return int(env) if env else 0


def _config(args) -> EnsembleConfig:
    base = calibration.small_dim_config(args.dim)
    overrides = {}
    if args.epsilon is not None:
        overrides["epsilon"] = args.epsilon
    if args.entry_scale is not None:
        overrides["entry_scale"] = args.entry_scale
    if args.frob_target is not None:
        overrides["frob_target"] = args.frob_target
    if overrides:
        base = replace(base, **overrides)
    return base


def _require_out(args) -> Path:
    if not args.out:
        raise UsageError("this subcommand requires --out")
    return Path(args.out)


def _samples_list(args, default: list[int]) -> list[int]:
    if args.samples is None:
        return default
    try:
        return [int(tok) for tok in str(args.samples).split(",") if tok != ""]
    except ValueError as exc:
        raise UsageError(f"--samples must be an integer or comma list, got {args.samples!r}") from exc


def _write_manifest(args, experiment: str, seed: int, cfg_payload: dict, outputs: list[Path]) -> None:
    manifest = RunManifest(
        master_seed=seed,
        experiment=experiment,
        config=cfg_payload,
        tool_version=__version__,
        outputs=tuple(str(p) for p in outputs),
    )
    manifest.write(manifest_path_for(outputs[0]))


def _cmd_chi2(args) -> int:
    m1 = load_matrix(args.matrix1)
    m2 = load_matrix(args.matrix2)
    if args.taylor:
        expansion = chi2_inner_taylor(m1, m2)
        print(f"{expansion.first_order!r} {expansion.correction_bound!r}")
        metrics = {
            "first_order": expansion.first_order,
            "correction_bound": expansion.correction_bound,
        }
        experiment = "chi2_taylor"
    else:
        value = chi2_inner_exact(m1, m2)
        print(repr(value))
        metrics = {"chi2_exact": value, "log_chi2": log_chi2_inner_exact(m1, m2)}
        experiment = "chi2_exact"
    if args.out:
        out = Path(args.out)
        record = TrialRecord(
            experiment=experiment,
            dim=m1.dim,
            epsilon=0.0,
            n_samples=0,
            trial_index=0,
            seed=_master_seed(args),
            metrics=metrics,
        )
        emit([record], args.format, out)
        _write_manifest(
            args, experiment, _master_seed(args),
            {"matrix1": args.matrix1, "matrix2": args.matrix2, "taylor": args.taylor}, [out],
        )
    return 0


def _cmd_gen_ensemble(args) -> int:
    seed = _master_seed(args)
    cfg = _config(args)
    out_dir = _require_out(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    paths = []
    for i in range(args.trials):
        rng = derive_stream(seed, "gen-ensemble", i)
        draw = sample_perturbation(cfg, rng)
        path = out_dir / f"a_{i:04d}.txt"
        save_matrix(path, draw.matrix)
        paths.append(path)
        records.append(
            TrialRecord(
                experiment="gen-ensemble",
                dim=cfg.dim,
                epsilon=cfg.epsilon,
                n_samples=0,
                trial_index=i,
                seed=derive_seed(seed, "gen-ensemble", i),
                metrics={
                    "rejections": float(draw.rejections),
                    "frobenius": draw.frobenius,
                    "spectral": draw.spectral,
                    "acceptance_rate": 1.0 / (1.0 + draw.rejections),
                },
            )
        )
    stats_path = out_dir / f"stats.{args.format}"
    emit(records, args.format, stats_path)
    _write_manifest(args, "gen-ensemble", seed, cfg.to_dict(), [stats_path, *paths])
    total_rejects = sum(int(r.metrics["rejections"]) for r in records)
    print(f"accepted {args.trials} perturbations, {total_rejects} rejections")
    return 0


def _cmd_concentration(args) -> int:
    seed = _master_seed(args)
    cfg = _config(args)
    out = _require_out(args)
    if args.thresholds:
        thresholds = [float(tok) for tok in args.thresholds.split(",") if tok != ""]
    else:
        thresholds = list(default_thresholds(cfg.dim))
    rng = derive_stream(seed, "concentration", 0)
    result = trace_stat_tail(cfg, args.trials, thresholds, rng, workers=args.workers)
    records = [
        TrialRecord(
            experiment="concentration",
            dim=cfg.dim,
            epsilon=cfg.epsilon,
            n_samples=0,
            trial_index=i,
            seed=int(result.seeds[i]),
            metrics={
                "trace_ab": float(result.trace_ab[i]),
                "trace_abab": float(result.trace_abab[i]),
                "stat": float(result.stats[i]),
            },
        )
        for i in range(args.trials)
    ]
    curve = result.curve
    for j, t in enumerate(curve.thresholds):
        records.append(
            TrialRecord(
                experiment="concentration:summary",
                dim=cfg.dim,
                epsilon=cfg.epsilon,
                n_samples=0,
                trial_index=-(j + 1),
                seed=seed,
                metrics={
                    "threshold": float(t),
                    "exceed_prob": float(curve.exceed_prob[j]),
                    "count": float(curve.counts[j]),
                    "usable": 1.0 if curve.usable[j] else 0.0,
                    "fitted_rate": curve.fitted_rate if curve.fitted_rate == curve.fitted_rate else -1.0,
                },
            )
        )
    emit(records, args.format, out)
    payload = cfg.to_dict()
    payload["thresholds"] = thresholds
    payload["pairs"] = args.trials
    _write_manifest(args, "concentration", seed, payload, [out])
    print(f"fitted rate {curve.fitted_rate!r} over {sum(curve.usable)} usable thresholds")
    return 0


def _cmd_indist(args) -> int:
    seed = _master_seed(args)
    cfg = _config(args)
    out = _require_out(args)
    d2 = cfg.dim * cfg.dim
    grid = _samples_list(args, [cfg.dim, d2 // 100, d2 // 10, d2])
    rng = derive_stream(seed, "indist", 0)
    logs, pair_seeds = pair_log_values(cfg, args.trials, rng, workers=args.workers)
    records = [
        TrialRecord(
            experiment="indist",
            dim=cfg.dim,
            epsilon=cfg.epsilon,
            n_samples=0,
            trial_index=i,
            seed=int(pair_seeds[i]),
            metrics={"log_chi2": float(logs[i])},
        )
        for i in range(args.trials)
    ]
    # The TV curve reuses the same logs; recompute its isotonic pass here.
    points = []
    running = 0.0
    for j, n in enumerate(sorted(grid)):
        est = aggregate_product_logs(logs, n, cfg.dim)
        flagged = est.mean_estimate < 1.0 - 3.0 * est.std_error
        raw = 0.0 if flagged else tv_bound_from_chi2(max(est.mean_estimate, 1.0))
        running = max(running, raw)
        points.append((n, est, flagged, raw, running))
    for j, (n, est, flagged, raw, bound) in enumerate(points):
        records.append(
            TrialRecord(
                experiment="indist:summary",
                dim=cfg.dim,
                epsilon=cfg.epsilon,
                n_samples=n,
                trial_index=-(j + 1),
                seed=seed,
                metrics={
                    "mean_estimate": est.mean_estimate,
                    "std_error": est.std_error,
                    "trimmed_mean": est.trimmed_mean,
                    "max_log": est.max_log,
                    "heavy_outliers": float(est.heavy_outliers),
                    "tv_bound": bound,
                    "tv_bound_raw": raw,
                    "noise_flagged": 1.0 if flagged else 0.0,
                },
            )
        )
    emit(records, args.format, out)
    payload = cfg.to_dict()
    payload["n_grid"] = sorted(grid)
    payload["pairs"] = args.trials
    _write_manifest(args, "indist", seed, payload, [out])
    for n, est, flagged, raw, bound in points:
        print(f"N={n}: mean={est.mean_estimate:.6f} tv_bound={bound:.6f}"
              + (" [noise]" if flagged else ""))
    return 0


def _cmd_power(args) -> int:
    seed = _master_seed(args)
    cfg = _config(args)
    out = _require_out(args)
    grid = _samples_list(args, [10 * cfg.dim])
    if len(grid) != 1:
        raise UsageError("power takes a single --samples value")
    n = grid[0]
    rng = derive_stream(seed, f"power:{args.data}:{args.tester}", 0)
    result = tester_power(
        cfg,
        args.data,
        args.tester,
        n,
        args.trials,
        rng,
        gamma=args.gamma,
        threshold_scale=args.threshold_scale,
        workers=args.workers,
    )
    lo, hi = result.wilson_interval
    record = TrialRecord(
        experiment=f"power:{args.data}:{args.tester}",
        dim=cfg.dim,
        epsilon=cfg.epsilon,
        n_samples=n,
        trial_index=0,
        seed=seed,
        metrics={
            "reject_rate": result.reject_rate,
            "wilson_low": lo,
            "wilson_high": hi,
            "trials": float(result.trials),
            "rejects": float(result.rejects),
        },
    )
    emit([record], args.format, out)
    payload = cfg.to_dict()
    payload.update({"data": args.data, "tester": args.tester, "n": n, "trials": args.trials,
                    "gamma": args.gamma, "threshold_scale": args.threshold_scale})
    _write_manifest(args, "power", seed, payload, [out])
    print(f"reject rate {result.reject_rate:.4f} [{lo:.4f}, {hi:.4f}] over {result.trials} trials")
    return 0


def _cmd_selfcheck(args) -> int:
    seed = _master_seed(args)
    failures = 0

    def check(name: str, ok: bool, detail: str = "") -> None:
        nonlocal failures
        tag = "PASS" if ok else "FAIL"
        suffix = f" ({detail})" if detail else ""
        print(f"{tag} {name}{suffix}")
        if not ok:
            failures += 1

    for eps in (0.05, 0.1, 1.0 / 3.0, 0.49):
        check(f"first-order cancellation eps={eps:g}",
              abs(first_order_cancellation(eps)) <= 1e-14)

    rng = derive_stream(seed, "selfcheck", 0)
    dim = 16
    ok = True
    worst = 0.0
    for _ in range(25):
        diag = 1.0 + 0.5 * (rng.random(dim) - 0.5)
        sigma = SymmetricMatrix(np.diag(diag))
        gap = abs(chi2_inner_exact(SymmetricMatrix.identity(dim), sigma) - 1.0)
        worst = max(worst, gap)
        ok = ok and gap <= 1e-10
    check("identity-argument inner product equals 1", ok, f"worst gap {worst:.2e}")

    cfg = calibration.small_dim_config(8)
    model = draw_model(cfg, derive_stream(seed, "selfcheck", 1)).model
    mix = (1 - model.epsilon) * model.inlier.covariance.data \
        + model.epsilon * model.outlier.covariance.data
    check("mixture covariance matches identity",
          float(np.max(np.abs(mix - np.eye(8)))) <= 1e-12)

    a = sample_perturbation(EnsembleConfig(dim=16, entry_scale=0.6, frob_window=(0.3, 1.0)),
                            derive_stream(seed, "selfcheck", 2)).matrix
    b = sample_perturbation(EnsembleConfig(dim=16, entry_scale=0.6, frob_window=(0.3, 1.0)),
                            derive_stream(seed, "selfcheck", 3)).matrix
    series = det_series_check(a, b, 12)
    check("determinant series identity", abs(series.lhs - series.rhs) <= 1e-10,
          f"|lhs-rhs| {abs(series.lhs - series.rhs):.2e}")

    check("tv bound arithmetic", abs(tv_bound_from_chi2(1.04) - 0.1) <= 1e-12)

    seeds = derive_seeds(seed, "selfcheck-scan", np.arange(10_000))
    check("derived seeds collision-free (10k scan)", len(set(seeds.tolist())) == 10_000)

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "roundtrip.csv"
        recs = [
            TrialRecord("selfcheck", 4, 1 / 3, 7, i, derive_seed(seed, "rt", i),
                        {"x": float(np.float64(i) / 3.0), "y": 1e-300 * (i + 1)})
            for i in range(50)
        ]
        emit(recs, "csv", path)
        check("record round trip", parse_records(path, "csv") == recs)

    print(f"selfcheck: {failures} failure(s)")
    return 1 if failures else 0


_COMMANDS = {
    "chi2": _cmd_chi2,
    "gen-ensemble": _cmd_gen_ensemble,
    "concentration": _cmd_concentration,
    "indist": _cmd_indist,
    "power": _cmd_power,
    "selfcheck": _cmd_selfcheck,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except _NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(cli_main())


if __name__ == "__main__":
    main()
