"""Config-driven Monte Carlo experiments.

Each repetition j derives its randomness from RngStream(base_seed, j):
lane 0 drives the model draw and lane 1+m the sketch draw of method m, so
method comparisons are paired (identical data, independent sketches).
Repetitions are aggregated in rep order, so reruns of the same config are
reproducible; records and aggregates serialize to CSV.

CSV schema (records): ``method,n,p,r,k,rep`` then the per-spike groups
``d_i``, ``lambda_emp_i``, ``lambda_pred_i``, ``cos2_emp_ii``,
``cos2_pred_ii`` for i = 1..k, then ``cos2_emp_max_offdiag,seed,wall_ms``
(one row per repetition). Aggregates drop ``rep``, keep ``d_i`` and
``lambda_pred_i``/``cos2_pred_ii`` (recomputed at nominal ratios), and
carry ``_mean``/``_sd`` suffixed columns for the empirical quantities and
wall time; the SD is the sample standard deviation across repetitions
(the error-bar convention used throughout). Timing columns are dropped
when deterministic byte-identical output is requested.
"""
from __future__ import annotations

import io
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import theory
from .errors import DataError, UsageError
from .model import SpikedModelSpec, generate, make_sigma
from .numerics import RngStream, top_k_spectrum
from .sketch import SketchSpec, apply_sketch, build_sketch
from .theory import (
    AspectRatios,
    SpikePrediction,
    cov_summary,
    effective_xi_countsketch,
    predict_iid,
    predict_large_signal,
    predict_orthogonal_family,
)

__all__ = [
    "ExperimentConfig",
    "ExperimentRecord",
    "RunResult",
    "run",
    "compare_methods",
    "write_csv",
    "records_table",
    "aggregates_table",
]

PREDICTORS = ("auto", "orthogonal_family", "iid", "countsketch", "large_signal", "none")

_AUTO_PREDICTOR = {
    "haar": "orthogonal_family",
    "uniform_sample": "orthogonal_family",
    "srht": "orthogonal_family",
    "dft": "orthogonal_family",
    "countsketch": "countsketch",
    "countsketch_normalized": "countsketch",
    "iid": "iid",
    "leverage": "none",
    "osnap": "none",
}


@dataclass(frozen=True)
class ExperimentConfig:
    model: SpikedModelSpec
    sketch: object  # SketchSpec or sequence of SketchSpec
    reps: int = 20
    base_seed: int = 0
    d_grid: tuple[float, ...] | None = None
    outputs: str | None = None
    predictor: str = "auto"
    noise_only: bool = False

    def __post_init__(self):
        if self.reps < 1:
            raise UsageError("reps must be at least 1")
        if self.predictor not in PREDICTORS:
            raise UsageError(f"predictor must be one of {PREDICTORS}")
        if self.d_grid is not None:
            object.__setattr__(self, "d_grid", tuple(float(x) for x in self.d_grid))
            if any(x <= 0 for x in self.d_grid):
                raise DataError("d_grid entries must be positive")
            if self.model.k != 1:
                raise UsageError("d_grid sweeps are defined for k = 1 models")

    def sketch_list(self) -> list[SketchSpec]:
        if isinstance(self.sketch, SketchSpec):
            return [self.sketch]
        return list(self.sketch)


@dataclass
class ExperimentRecord:
    """One repetition of one method at one grid point."""

    method: str
    rep: int
    n: int
    p: int
    r: int
    k: int
    d: tuple[float, ...]
    empirical_lambdas: np.ndarray  # (k,)
    empirical_cos2: np.ndarray  # (k, k), entry [j, i] = |<u_j, xi_i>|^2
    predicted: list[SpikePrediction] | None
    seed: int
    wall_ms: float
    r_effective: int
    xi_used: float | None  # per-rep ratio used for the prediction, if any


@dataclass
class RunResult:
    records: list[ExperimentRecord]
    aggregates: list[dict]


def _resolve_predictor(name: str, method: str) -> str:
    if name != "auto":
        return name
    return _AUTO_PREDICTOR[method]


def _predict(
    mode: str,
    d: Sequence[float],
    gamma: float,
    xi: float,
    cov: theory.CovSummary | None,
) -> tuple[list[SpikePrediction] | None, float | None]:
    """Per-spike predictions under the requested theory; returns (preds, xi used)."""
    if mode == "none":
        return None, None
    if mode == "orthogonal_family":
        ar = AspectRatios(gamma, xi)
        return [predict_orthogonal_family(x, ar) for x in d], xi
    if mode == "countsketch":
        xi_hat = effective_xi_countsketch(xi)
        ar = AspectRatios(gamma, xi_hat)
        return [predict_orthogonal_family(x, ar) for x in d], xi_hat
    if mode == "iid":
        ar = AspectRatios(gamma, xi)
        return [predict_iid(x, ar) for x in d], xi
    if mode == "large_signal":
        if cov is None:
            raise UsageError("large_signal predictions need a covariance summary")
        ar = AspectRatios(gamma, xi)
        preds = []
        for i, x in enumerate(d):
            ls = predict_large_signal(d, i, cov, ar)
            preds.append(
                SpikePrediction(
                    d=float(x),
                    theta=ls.theta,
                    cos2=ls.cos2_ii,
                    above_threshold=True,
                    lambda_plus=float("nan"),
                    d_critical=float("nan"),
                )
            )
        return preds, xi
    raise UsageError(f"unknown predictor mode {mode!r}")


def _prediction_xi(method: str, spec: SketchSpec, n: int, r_effective: int) -> float:
    # Bernoulli uniform sampling predicts with the realized kept-row count
    # per repetition; everything else uses the nominal ratio.
    if method == "uniform_sample" and not spec.uniform_exact_r:
        return r_effective / n
    return spec.r / n


def run(config: ExperimentConfig) -> RunResult:
    """Run the experiment for a single sketch spec (or a list, paired)."""
    return compare_methods(config)


def compare_methods(config: ExperimentConfig) -> RunResult:
    """Monte Carlo over reps x methods with paired model draws."""
    sketches = config.sketch_list()
    if not sketches:
        raise UsageError("at least one sketch spec is required")
    model = config.model
    grid = config.d_grid if config.d_grid is not None else (None,)
    records: list[ExperimentRecord] = []

    for g, d_point in enumerate(grid):
        spec = model if d_point is None else replace(model, d=(float(d_point),))
        for rep in range(config.reps):
            # lane (g, 0) drives the model, lane (g, 1+m) the sketches, so
            # grid points are independent while methods stay paired
            stream = RngStream(config.base_seed, rep).substream(g)
            if config.noise_only:
                dataset = _noise_only_dataset(spec, stream.substream(0))
            else:
                dataset = generate(spec, stream.substream(0))
            cov = None
            if config.predictor == "large_signal" and not config.noise_only:
                cov = cov_summary(dataset.sigma, dataset.U)
            for m_index, sk in enumerate(sketches):
                records.append(
                    _one_rep(
                        config, spec, dataset, sk, rep,
                        stream.substream(1 + m_index), cov,
                    )
                )
    aggregates = _aggregate(config, records)
    return RunResult(records=records, aggregates=aggregates)


def _noise_only_dataset(spec: SpikedModelSpec, rng):
    # dedicated pure-noise path: no signal, top eigenvalue tracks the bulk edge
    from .model import SpikedDataset, _noise
    from .numerics import as_generator

    gen = as_generator(rng)
    sigma = make_sigma(spec.sigma_model, spec.p)
    X = _noise(spec, gen)
    Y = sigma.apply_sqrt_right(X)
    return SpikedDataset(Y=Y, W=np.zeros((spec.n, 0)), U=np.zeros((spec.p, 0)),
                         sigma=sigma, d=())


def _one_rep(config, spec, dataset, sk, rep, sketch_stream, cov) -> ExperimentRecord:
    t0 = time.perf_counter()
    n, p = spec.n, spec.p
    op = build_sketch(sk, n, sketch_stream, data=dataset.Y)
    SY = apply_sketch(op, dataset.Y)
    k_eff = 1 if config.noise_only else spec.k
    top = top_k_spectrum(SY, min(k_eff, min(SY.shape)))
    lambdas = top.values
    if config.noise_only:
        cos2 = np.zeros((0, 0))
        preds, xi_used = None, None
        dvals = ()
    else:
        overlaps = dataset.U.T @ top.right_vectors  # (k true) x (k empirical)
        cos2 = overlaps**2
        mode = _resolve_predictor(config.predictor, sk.method)
        xi_rep = _prediction_xi(sk.method, sk, n, op.r_effective)
        preds, xi_used = _predict(mode, spec.d, p / n, xi_rep, cov)
        dvals = spec.d
    wall_ms = (time.perf_counter() - t0) * 1e3
    return ExperimentRecord(
        method=sk.method,
        rep=rep,
        n=n,
        p=p,
        r=sk.r,
        k=k_eff,
        d=dvals,
        empirical_lambdas=lambdas,
        empirical_cos2=cos2,
        predicted=preds,
        seed=config.base_seed,
        wall_ms=wall_ms,
        r_effective=op.r_effective,
        xi_used=xi_used,
    )


def _max_offdiag(cos2: np.ndarray) -> float:
    if cos2.size == 0 or cos2.shape[0] < 2:
        return 0.0
    mask = ~np.eye(cos2.shape[0], dtype=bool)
    return float(cos2[mask].max())


def _aggregate(config: ExperimentConfig, records: list[ExperimentRecord]) -> list[dict]:
    groups: dict[tuple, list[ExperimentRecord]] = {}
    for rec in records:
        groups.setdefault((rec.method, rec.d), []).append(rec)
    aggregates = []
    for (method, dvals), recs in groups.items():
        recs = sorted(recs, key=lambda r: r.rep)
        k = recs[0].k
        lam = np.array([r.empirical_lambdas for r in recs])
        wall = np.array([r.wall_ms for r in recs])
        row: dict = {
            "method": method,
            "n": recs[0].n,
            "p": recs[0].p,
            "r": recs[0].r,
            "k": k,
            "d": dvals,
            "lambda_emp_mean": lam.mean(axis=0),
            "lambda_emp_sd": lam.std(axis=0, ddof=1) if len(recs) > 1 else np.zeros(lam.shape[1]),
            "seed": recs[0].seed,
            "wall_ms_mean": float(wall.mean()),
            "wall_ms_sd": float(wall.std(ddof=1)) if len(recs) > 1 else 0.0,
        }
        if dvals:
            diag = np.array([np.diag(r.empirical_cos2) for r in recs])
            off = np.array([_max_offdiag(r.empirical_cos2) for r in recs])
            row["cos2_emp_mean"] = diag.mean(axis=0)
            row["cos2_emp_sd"] = diag.std(axis=0, ddof=1) if len(recs) > 1 else np.zeros(k)
            row["cos2_offdiag_mean"] = float(off.mean())
            row["cos2_offdiag_sd"] = float(off.std(ddof=1)) if len(recs) > 1 else 0.0
            # nominal-ratio predictions for the aggregate row; per-rep rows may
            # have used realized ratios (Bernoulli sampling) or realized frames
            # (large-signal E), in which case the aggregate takes their mean
            mode = _resolve_predictor(config.predictor, method)
            if mode == "large_signal":
                theta = np.array([[pr.theta for pr in r.predicted] for r in recs])
                c2 = np.array([[pr.cos2 for pr in r.predicted] for r in recs])
                row["lambda_pred"] = theta.mean(axis=0)
                row["cos2_pred"] = c2.mean(axis=0)
            else:
                gamma = recs[0].p / recs[0].n
                xi_nominal = recs[0].r / recs[0].n
                preds, _ = _predict(mode, dvals, gamma, xi_nominal, None)
                if preds is None:
                    row["lambda_pred"] = np.full(k, np.nan)
                    row["cos2_pred"] = np.full(k, np.nan)
                else:
                    row["lambda_pred"] = np.array([pr.theta for pr in preds])
                    row["cos2_pred"] = np.array([pr.cos2 for pr in preds])
        aggregates.append(row)
    return aggregates


# ----------------------------------------------------------------------
# CSV serialization
# ----------------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "" if np.isnan(x) else format(float(x), ".17g")
    return str(x)


def write_csv(path_or_file, columns: Sequence[str], rows: Sequence[Sequence], comments: Sequence[str] = ()) -> None:
    """Write a table with 17-significant-digit floats and '#' comment lines."""

    def _emit(fh):
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")

    if isinstance(path_or_file, (str,)):
        try:
            with open(path_or_file, "w", encoding="utf-8") as fh:
                _emit(fh)
        except OSError as exc:
            raise DataError(f"cannot write CSV to {path_or_file}: {exc}") from exc
    else:
        _emit(path_or_file)


def records_table(records: list[ExperimentRecord], include_timing: bool = True):
    """Flatten records into (columns, rows); width depends on k."""
    if not records:
        return ["method", "n", "p", "r", "k", "rep", "seed"], []
    k = max(r.k for r in records)
    columns = ["method", "n", "p", "r", "k", "rep"]
    for i in range(1, k + 1):
        columns += [f"d_{i}", f"lambda_emp_{i}", f"lambda_pred_{i}",
                    f"cos2_emp_{i}{i}", f"cos2_pred_{i}{i}"]
    columns += ["cos2_emp_max_offdiag", "seed", "r_effective"]
    if include_timing:
        columns.append("wall_ms")
    rows = []
    for rec in records:
        row = [rec.method, rec.n, rec.p, rec.r, rec.k, rec.rep]
        for i in range(k):
            if i < rec.k and rec.d:
                pred = rec.predicted[i] if rec.predicted else None
                row += [
                    rec.d[i],
                    rec.empirical_lambdas[i],
                    pred.theta if pred else float("nan"),
                    rec.empirical_cos2[i, i],
                    pred.cos2 if pred else float("nan"),
                ]
            elif i < rec.k:
                row += [float("nan"), rec.empirical_lambdas[i], float("nan"),
                        float("nan"), float("nan")]
            else:
                row += [float("nan")] * 5
        row += [_max_offdiag(rec.empirical_cos2), rec.seed, rec.r_effective]
        if include_timing:
            row.append(rec.wall_ms)
        rows.append(row)
    return columns, rows


def aggregates_table(aggregates: list[dict], include_timing: bool = True):
    """Flatten aggregate rows into (columns, rows); drops rep."""
    if not aggregates:
        return ["method", "n", "p", "r", "k", "seed"], []
    k = max(len(a["d"]) for a in aggregates)
    columns = ["method", "n", "p", "r", "k"]
    for i in range(1, k + 1):
        columns += [
            f"d_{i}",
            f"lambda_emp_{i}_mean", f"lambda_emp_{i}_sd", f"lambda_pred_{i}",
            f"cos2_emp_{i}{i}_mean", f"cos2_emp_{i}{i}_sd", f"cos2_pred_{i}{i}",
        ]
    columns += ["cos2_emp_max_offdiag_mean", "cos2_emp_max_offdiag_sd", "seed"]
    if include_timing:
        columns += ["wall_ms_mean", "wall_ms_sd"]
    rows = []
    for agg in aggregates:
        row = [agg["method"], agg["n"], agg["p"], agg["r"], agg["k"]]
        kk = len(agg["d"])
        for i in range(k):
            if i < kk:
                row += [
                    agg["d"][i],
                    agg["lambda_emp_mean"][i], agg["lambda_emp_sd"][i],
                    agg["lambda_pred"][i],
                    agg["cos2_emp_mean"][i], agg["cos2_emp_sd"][i],
                    agg["cos2_pred"][i],
                ]
            else:
                row += [float("nan")] * 7
        if kk:
            row += [agg["cos2_offdiag_mean"], agg["cos2_offdiag_sd"], agg["seed"]]
        else:
            row += [float("nan"), float("nan"), agg["seed"]]
        if include_timing:
            row += [agg["wall_ms_mean"], agg["wall_ms_sd"]]
        rows.append(row)
    return columns, rows
