"""Replication experiments: configuration, seeded data, the EM5/OL1/OL06/OL06a/TITT
algorithm set, label alignment and CSV outputs."""

from __future__ import annotations

import csv
import hashlib
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from . import __version__, poisson, regmix, simgen
from .asymptotics import (
    AsymptoticReport,
    as_measure,
    asymptotic_report,
    block_inverse,
    correlations,
    empirical_information,
    exact_poisson_measure,
    lyapunov_zeta,
)
from .core import DomainError, ModelSpec, StepSchedule
from .estimators import (
    default_average_start,
    run_batch_em,
    run_online_em_batch,
    run_titterington_poisson_batch,
)

ALGORITHMS = ("EM5", "OL1", "OL06", "OL06a", "TITT")
SCHEDULES = {"OL1": StepSchedule(1.0, 1.0), "OL06": StepSchedule(1.0, 0.6)}
EM_ITERATIONS = 5
IQR_NORMAL = 1.349
# Replicas are processed in fixed-size chunks so the worker count never
# changes which replicas share a lockstep batch.
CHUNK = 50
REGMIX_D = 3


class ConfigError(ValueError):
    """Invalid or missing configuration field."""


class EmptySummaryError(ValueError):
    """No finite sample to summarise."""


@dataclass
class ExperimentConfig:
    model: str
    truth: np.ndarray
    n: int = 1000
    replications: int = 1
    algorithms: tuple = ("EM5", "OL1", "OL06", "OL06a")
    theta0: Optional[np.ndarray] = None  # None: data-driven start (regmix only)
    warmup: Optional[int] = None
    base_seed: int = 0
    averaging_start_fraction: float = 0.5
    max_failure_rate: float = 0.1
    m: int = 2
    truth_name: str = ""
    info_n: int = 1_000_000
    reference_info_n: int = 0
    algorithm: str = "OL06a"
    retention: str = "final"
    replica: int = 0
    output_path: str = "."
    extra: dict = field(default_factory=dict)

    @property
    def average_from(self) -> int:
        return default_average_start(self.n, self.averaging_start_fraction)

    def model_spec(self) -> ModelSpec:
        if self.model == "poisson":
            return poisson.poisson_mixture_model(self.m)
        return regmix.regmix_model(self.m, REGMIX_D)

    def truth_params(self):
        return self.model_spec().unflatten(self.truth)


def _floats(text: str, key: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers, got {text!r}") from None


def _int(text: str, key: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def parse_config_text(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    known = {f.name for f in fields(ExperimentConfig)} - {"extra", "truth_name", "m"}
    unknown = set(raw) - known - {"output"}
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
    model = raw.pop("model", None)
    if model not in ("poisson", "regmix"):
        raise ConfigError(f"model: expected 'poisson' or 'regmix', got {model!r}")
    truth_text = raw.pop("truth", None)
    if truth_text is None:
        if model == "regmix":
            truth_text = "flexmix"
        else:
            raise ConfigError("truth: required for the poisson model")

    if model == "regmix" and truth_text == "flexmix":
        truth, truth_name = regmix.flatten(simgen.FLEXMIX_TRUTH), "flexmix"
    else:
        truth, truth_name = _floats(truth_text, "truth"), ""
    per = 2 if model == "poisson" else 2 + REGMIX_D
    if truth.size % per or truth.size == 0:
        raise ConfigError(f"truth: {truth.size} values do not fit a {model} parameter vector")
    m = truth.size // per
    cfg = ExperimentConfig(model=model, truth=truth, m=m, truth_name=truth_name)
    spec = cfg.model_spec()
    reason = spec.unflatten(truth).violation()
    if reason:
        raise ConfigError(f"truth: {reason}")

    for key in ("n", "replications", "base_seed", "info_n", "reference_info_n", "replica"):
        if key in raw:
            setattr(cfg, key, _int(raw.pop(key), key))
    if "warmup" in raw:
        cfg.warmup = _int(raw.pop("warmup"), "warmup")
    for key in ("averaging_start_fraction", "max_failure_rate"):
        if key in raw:
            try:
                setattr(cfg, key, float(raw.pop(key)))
            except ValueError:
                raise ConfigError(f"{key}: expected a number") from None
    if "algorithms" in raw:
        cfg.algorithms = tuple(a.strip() for a in raw.pop("algorithms").split(",") if a.strip())
    if "algorithm" in raw:
        cfg.algorithm = raw.pop("algorithm")
    if "retention" in raw:
        cfg.retention = raw.pop("retention")
    if "output" in raw:
        cfg.output_path = raw.pop("output")
    if "output_path" in raw:
        cfg.output_path = raw.pop("output_path")
    theta0 = raw.pop("theta0", "auto")
    if theta0 != "auto":
        cfg.theta0 = _floats(theta0, "theta0")
        if cfg.theta0.size != truth.size:
            raise ConfigError(f"theta0: expected {truth.size} values, got {cfg.theta0.size}")
        reason = spec.unflatten(cfg.theta0).violation()
        if reason:
            raise ConfigError(f"theta0: {reason}")
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.n < 1:
        raise ConfigError("n: must be >= 1")
    if cfg.replications < 1:
        raise ConfigError("replications: must be >= 1")
    if cfg.base_seed < 0:
        raise ConfigError("base_seed: must be >= 0")
    if not 0.0 < cfg.averaging_start_fraction < 1.0:
        raise ConfigError("averaging_start_fraction: must lie in (0, 1)")
    if not 0.0 <= cfg.max_failure_rate <= 1.0:
        raise ConfigError("max_failure_rate: must lie in [0, 1]")
    for alg in cfg.algorithms + (cfg.algorithm,):
        if alg not in ALGORITHMS:
            raise ConfigError(f"algorithms: unknown algorithm {alg!r} (choose from {', '.join(ALGORITHMS)})")
        if alg == "TITT" and cfg.model != "poisson":
            raise ConfigError("algorithms: TITT is only defined for the poisson model")
    if not cfg.algorithms:
        raise ConfigError("algorithms: empty list")
    if cfg.model == "poisson" and cfg.theta0 is None:
        raise ConfigError("theta0: required for the poisson model")
    warmup = cfg.warmup if cfg.warmup is not None else cfg.model_spec().default_warmup
    if warmup < 0 or warmup >= cfg.n:
        raise ConfigError(f"warmup: must lie in [0, n), got {warmup}")
    if cfg.model == "regmix" and cfg.theta0 is None and warmup < REGMIX_D:
        raise ConfigError("warmup: the data-driven start needs at least 3 warmup observations")
    if cfg.average_from <= warmup:
        raise ConfigError("averaging_start_fraction: averaging would start inside the warmup block")
    if cfg.retention not in ("final", "full"):
        try:
            if int(cfg.retention) < 1:
                raise ValueError
        except ValueError:
            raise ConfigError(f"retention: expected 'final', 'full' or a positive integer, got {cfg.retention!r}") from None


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_dict(parse_config_text(text))


def config_echo(cfg: ExperimentConfig) -> List[tuple]:
    out = [("model", cfg.model),
           ("truth", cfg.truth_name or ",".join(repr(float(x)) for x in cfg.truth)),
           ("n", cfg.n), ("replications", cfg.replications),
           ("algorithms", ",".join(cfg.algorithms)),
           ("theta0", "auto" if cfg.theta0 is None else ",".join(repr(float(x)) for x in cfg.theta0)),
           ("warmup", cfg.warmup if cfg.warmup is not None else cfg.model_spec().default_warmup),
           ("base_seed", cfg.base_seed),
           ("averaging_start_fraction", cfg.averaging_start_fraction),
           ("averaging_start", cfg.average_from),
           ("max_failure_rate", cfg.max_failure_rate),
           ("reference_info_n", cfg.reference_info_n)]
    return [(k, str(v)) for k, v in out]


# data


def generate_replica(cfg: ExperimentConfig, replica: int, n: Optional[int] = None):
    """Data of replica ``replica`` from stream ``(base_seed, replica)``;
    returns ``(data, classes)``."""
    n = cfg.n if n is None else n
    stream = simgen.SeededStream(cfg.base_seed, replica)
    if cfg.model == "poisson":
        return simgen.gen_poisson_mixture(n, cfg.truth_params(), stream)
    if cfg.truth_name == "flexmix":
        return simgen.gen_regmix_flexmix(n, stream)
    rng = stream.generator()
    u = rng.uniform(0.0, 10.0, size=n)
    z = np.column_stack([np.ones(n), u, u ** 2 / 10.0])
    return regmix.sample_given(cfg.truth_params(), z, rng)


def data_hash(data: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(data).tobytes()).hexdigest()[:16]


def regmix_start(warm: np.ndarray, m: int, spread: float = 0.1) -> regmix.RegMixParams:
    """Data-driven starting point: equal weights, least-squares coefficients on
    the warmup block scaled by factors spread evenly over ``1 +- spread``, and
    the residual variance of that fit."""
    r, z = warm[:, 0], warm[:, 1:]
    beta, *_ = np.linalg.lstsq(z, r, rcond=None)
    resid = r - z @ beta
    sigma2 = float(np.mean(resid ** 2))
    factors = np.linspace(1.0 - spread, 1.0 + spread, m) if m > 1 else np.ones(1)
    return regmix.RegMixParams(np.full(m, 1.0 / m), factors[:, None] * beta[None, :], np.full(m, sigma2))


def start_point(cfg: ExperimentConfig, data: np.ndarray, warmup: int):
    spec = cfg.model_spec()
    if cfg.theta0 is not None:
        return spec.unflatten(cfg.theta0)
    return regmix_start(data[:warmup], cfg.m)


# label alignment


def _component_keys(model: str, theta) -> np.ndarray:
    return theta.lam[:, None] if model == "poisson" else theta.beta


def _permute(model: str, theta, perm):
    if model == "poisson":
        return poisson.PoissonMixtureParams(theta.omega[perm], theta.lam[perm])
    return regmix.RegMixParams(theta.omega[perm], theta.beta[perm], theta.sigma2[perm])


def align_to_truth(model: str, flat: np.ndarray, truth_flat: np.ndarray, m: int) -> np.ndarray:
    """Reorder components to minimise the total Euclidean distance between
    fitted and true locations (beta_j or lambda_j)."""
    if m == 1 or not np.all(np.isfinite(flat)):
        return flat
    spec = poisson.poisson_mixture_model(m) if model == "poisson" else regmix.regmix_model(m, REGMIX_D)
    theta, truth = spec.unflatten(flat), spec.unflatten(truth_flat)
    a, b = _component_keys(model, theta), _component_keys(model, truth)
    dist = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
    best = min(itertools.permutations(range(m)), key=lambda p: sum(dist[p[j], j] for j in range(m)))
    return spec.flatten(_permute(model, theta, list(best)))


# runs


class ReplicationRow(NamedTuple):
    replica: int
    algorithm: str
    failed_step: int
    failure: str
    data_hash: str
    estimates: np.ndarray

    @property
    def failed(self) -> bool:
        return self.failed_step > 0


def _run_chunk(cfg: ExperimentConfig, replicas: Sequence[int]) -> List[ReplicationRow]:
    spec = cfg.model_spec()
    warmup = cfg.warmup if cfg.warmup is not None else spec.default_warmup
    datasets = [generate_replica(cfg, r)[0] for r in replicas]
    hashes = [data_hash(d) for d in datasets]
    streams = np.stack(datasets)
    starts = [start_point(cfg, d, warmup) for d in datasets]
    theta0 = spec.unflatten(np.stack([spec.flatten(t) for t in starts]))
    s0 = None
    if warmup == 0:
        s0 = np.stack([_prior_stat(cfg, t) for t in starts])

    by_alg = {}
    if "EM5" in cfg.algorithms:
        flats, steps, msgs = [], [], []
        for d, t in zip(datasets, starts):
            try:
                theta, _ = run_batch_em(spec, d, t, EM_ITERATIONS)
                flats.append(spec.flatten(theta)), steps.append(0), msgs.append("")
            except DomainError as exc:
                flats.append(np.full(spec.param_dim, np.nan)), steps.append(1), msgs.append(str(exc))
        by_alg["EM5"] = (np.array(flats), np.array(steps), msgs)
    if "OL1" in cfg.algorithms:
        res = run_online_em_batch(spec, streams, SCHEDULES["OL1"], theta0, s0, warmup)
        by_alg["OL1"] = _unpack(res.final_flat, res)
    if "OL06" in cfg.algorithms or "OL06a" in cfg.algorithms:
        res = run_online_em_batch(spec, streams, SCHEDULES["OL06"], theta0, s0, warmup, cfg.average_from)
        by_alg["OL06"] = _unpack(res.final_flat, res)
        by_alg["OL06a"] = _unpack(res.averaged_flat, res)
    if "TITT" in cfg.algorithms:
        res = run_titterington_poisson_batch(streams, SCHEDULES["OL06"], theta0)
        by_alg["TITT"] = _unpack(res.final_flat, res)

    rows = []
    for k, rep in enumerate(replicas):
        for alg in cfg.algorithms:
            flat, steps, msgs = by_alg[alg]
            est = np.full(spec.param_dim, np.nan) if steps[k] else \
                align_to_truth(cfg.model, flat[k], cfg.truth, cfg.m)
            rows.append(ReplicationRow(rep, alg, int(steps[k]), msgs[k], hashes[k], est))
    return rows


def _prior_stat(cfg: ExperimentConfig, theta):
    """Statistic implied by the starting point, used when there is no warmup."""
    if cfg.model == "poisson":
        return poisson.expected_stat_at(theta)
    raise ConfigError("warmup: the regmix model needs warmup >= 1")


def _unpack(flat, res):
    msgs = [res.failures.get(k, "") for k in range(len(res.failed_step))]
    return flat, res.failed_step, msgs


def _chunk_job(args):
    cfg, replicas = args
    return _run_chunk(cfg, replicas)


def run_replications(cfg: ExperimentConfig, threads: int = 1) -> List[ReplicationRow]:
    """All (replica, algorithm) rows in replica order."""
    chunks = [list(range(i, min(i + CHUNK, cfg.replications))) for i in range(0, cfg.replications, CHUNK)]
    jobs = [(cfg, c) for c in chunks]
    if threads <= 1 or len(chunks) == 1:
        parts = [_chunk_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_chunk_job, jobs))
    return [row for part in parts for row in part]


# summaries


class QuantileSummary(NamedTuple):
    min_whisker: float
    q25: float
    median: float
    q75: float
    max_whisker: float
    n_ok: int
    n_failed: int


def summarize_quantiles(samples) -> QuantileSummary:
    """Box-plot summary: linear-interpolation quartiles and whiskers at the
    most extreme samples within 1.5 IQR of the box. NaNs are dropped and counted."""
    x = np.asarray(samples, dtype=float).ravel()
    ok = x[np.isfinite(x)]
    if ok.size == 0:
        raise EmptySummaryError("no finite samples to summarise")
    q25, med, q75 = np.quantile(ok, [0.25, 0.5, 0.75])
    iqr = q75 - q25
    lo = ok[ok >= q25 - 1.5 * iqr].min()
    hi = ok[ok <= q75 + 1.5 * iqr].max()
    return QuantileSummary(float(lo), float(q25), float(med), float(q75), float(hi),
                           int(ok.size), int(x.size - ok.size))


def reference_iqr(cfg: ExperimentConfig) -> np.ndarray:
    """``1.349 * sd / sqrt(n)`` per flattened parameter from the asymptotic
    normal approximation; NaN where no reference is defined.

    Poisson: full inverse of the exact information at truth, mapped to the
    flat layout. Regression mixture: each beta_j block of the empirical
    information on ``reference_info_n`` draws, inverted on its own.
    """
    spec = cfg.model_spec()
    out = np.full(spec.param_dim, np.nan)
    truth = cfg.truth_params()
    if cfg.model == "poisson":
        info = empirical_information(spec, exact_poisson_measure(truth), truth)
        cov = _free_to_flat(np.linalg.inv(info), cfg.m, spec.free_dim)
        sd = np.sqrt(np.diag(cov))
    else:
        if cfg.reference_info_n <= 0:
            return out
        data, _ = generate_replica(cfg, REFERENCE_REPLICA, cfg.reference_info_n)
        info = empirical_information(spec, data, truth)
        sd = np.full(spec.param_dim, np.nan)
        for j in range(cfg.m):
            idx = beta_block_free(cfg.m, j)
            sd[cfg.m + j * REGMIX_D: cfg.m + (j + 1) * REGMIX_D] = np.sqrt(np.diag(block_inverse(info, idx)))
    return IQR_NORMAL * sd / math.sqrt(cfg.n)


# Replica index of the stream reserved for reference computations.
REFERENCE_REPLICA = 2 ** 31 - 1


def beta_block_free(m: int, j: int) -> np.ndarray:
    """Free-parametrisation indices of beta_j in the regression mixture."""
    start = (m - 1) + j * REGMIX_D
    return np.arange(start, start + REGMIX_D)


def _free_to_flat(cov: np.ndarray, m: int, free_dim: int) -> np.ndarray:
    """Poisson: covariance of (omega_1..omega_m, lambda) from that of the free
    parameters, omega_m = 1 - sum of the others."""
    J = np.zeros((2 * m, free_dim))
    J[:m - 1, :m - 1] = np.eye(m - 1)
    J[m - 1, :m - 1] = -1.0
    J[m:, m - 1:] = np.eye(m)
    return J @ cov @ J.T


SUMMARY_HEADER = ["algorithm", "parameter", "truth", "n_ok", "n_failed", "min_whisker", "q25",
                  "median", "q75", "max_whisker", "iqr", "ref_iqr"]


def summary_rows(cfg: ExperimentConfig, rows: List[ReplicationRow], ref: np.ndarray) -> List[list]:
    labels = cfg.model_spec().param_labels
    out = []
    for alg in cfg.algorithms:
        est = np.array([r.estimates for r in rows if r.algorithm == alg])
        for p, label in enumerate(labels):
            try:
                q = summarize_quantiles(est[:, p])
                vals = [q.min_whisker, q.q25, q.median, q.q75, q.max_whisker, q.q75 - q.q25]
                n_ok, n_failed = q.n_ok, q.n_failed
            except EmptySummaryError:
                vals = [math.nan] * 6
                n_ok, n_failed = 0, len(est)
            out.append([alg, label, _fmt(cfg.truth[p]), n_ok, n_failed] + [_fmt(v) for v in vals]
                       + [_fmt(ref[p])])
    return out


def _fmt(x) -> str:
    return repr(float(x))


@dataclass
class ExperimentOutcome:
    results_path: Path
    summary_path: Path
    metadata_path: Path
    n_rows: int
    n_failed: int

    @property
    def failure_rate(self) -> float:
        return self.n_failed / self.n_rows if self.n_rows else 0.0


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def metadata_rows(cfg: ExperimentConfig) -> List[tuple]:
    return config_echo(cfg) + [
        ("generator", simgen.GENERATOR_ID),
        ("normal_method", simgen.NORMAL_METHOD),
        ("poisson_method", simgen.POISSON_METHOD),
        ("code_version", f"online_em {__version__}"),
        ("numpy_version", np.__version__),
    ]


def run_experiment(cfg: ExperimentConfig, out_dir, threads: int = 1) -> ExperimentOutcome:
    """Run every replica and write ``results.csv``, ``summary.csv`` and
    ``metadata.csv`` to ``out_dir``."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    rows = run_replications(cfg, threads)
    labels = list(cfg.model_spec().param_labels)
    results_path = out_dir / "results.csv"
    _write_csv(results_path,
               ["replica", "algorithm", "failed", "failed_step", "data_hash"] + labels + ["failure"],
               [[r.replica, r.algorithm, int(r.failed), r.failed_step, r.data_hash]
                + [_fmt(v) for v in r.estimates] + [r.failure] for r in rows])
    summary_path = out_dir / "summary.csv"
    _write_csv(summary_path, SUMMARY_HEADER, summary_rows(cfg, rows, reference_iqr(cfg)))
    metadata_path = out_dir / "metadata.csv"
    _write_csv(metadata_path, ["key", "value"], metadata_rows(cfg))
    return ExperimentOutcome(results_path, summary_path, metadata_path, len(rows),
                             sum(r.failed for r in rows))


def read_results(path) -> tuple:
    """Load ``results.csv`` as ``(header, rows)`` with estimates parsed to floats."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# fit / asymptotics


def fit_single(cfg: ExperimentConfig, data=None):
    """One run of ``cfg.algorithm`` on replica ``cfg.replica`` (or ``data``).
    Returns ``(final_flat, averaged_flat or None, BatchRunResult or None)``."""
    spec = cfg.model_spec()
    warmup = cfg.warmup if cfg.warmup is not None else spec.default_warmup
    if data is None:
        data, _ = generate_replica(cfg, cfg.replica)
    theta0 = start_point(cfg, data, warmup)
    s0 = _prior_stat(cfg, theta0) if warmup == 0 else None
    alg = cfg.algorithm
    retention = cfg.retention if cfg.retention in ("final", "full") else int(cfg.retention)
    if alg == "EM5":
        theta, _ = run_batch_em(spec, data, theta0, EM_ITERATIONS)
        return spec.flatten(theta), None, None
    if alg == "TITT":
        res = run_titterington_poisson_batch(data[None], SCHEDULES["OL06"], theta0)
        return res.final_flat[0], None, res
    sched = SCHEDULES["OL1" if alg == "OL1" else "OL06"]
    avg = cfg.average_from if alg == "OL06a" else None
    res = run_online_em_batch(spec, data[None], sched, theta0, s0, warmup, avg, retention)
    return res.final_flat[0], None if res.averaged_flat is None else res.averaged_flat[0], res


def asymptotics_report(cfg: ExperimentConfig) -> AsymptoticReport:
    """Asymptotic covariances at truth; for the regression mixture the
    expectations are averages over ``info_n`` generated observations.

    Besides the full-parameter matrices the report carries, per beta_j,
    standard deviations and correlations from inverting that block of the
    empirical information alone.
    """
    spec = cfg.model_spec()
    truth = cfg.truth_params()
    if cfg.model == "poisson":
        measure = exact_poisson_measure(truth)
    else:
        data, _ = generate_replica(cfg, 0, cfg.info_n)
        measure = as_measure(data)
    rep = asymptotic_report(spec, measure, truth, zeta=lyapunov_zeta(SCHEDULES["OL06"]))
    if cfg.model == "regmix":
        for j in range(cfg.m):
            idx = beta_block_free(cfg.m, j)
            cov = block_inverse(rep.info, idx)
            labels = [spec.free_labels[i] for i in idx]
            rep.extra_blocks[f"beta{j + 1}_block"] = (labels, np.sqrt(np.diag(cov)), correlations(cov))
    return rep
