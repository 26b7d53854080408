"""Batch EM, online EM with optional Polyak-Ruppert averaging, and
Titterington's recursion for the Poisson mixture."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, List, Optional, Union

import numpy as np

from .core import (
    DomainError,
    InsufficientDataError,
    ModelSpec,
    ParamVector,
    StatVector,
    StepSchedule,
    blend_stats,
    expected_stat,
    mean_loglik,
)
from . import poisson


@dataclass(frozen=True)
class StepRecord:
    n: int
    gamma: float
    s_hat: np.ndarray
    theta: np.ndarray


@dataclass
class Trajectory:
    """Per-step records of a run. With thinned retention ``steps`` is sparse."""

    param_layout: tuple
    warmup_len: int = 0
    steps: List[StepRecord] = field(default_factory=list)

    def thetas(self) -> np.ndarray:
        return np.array([rec.theta for rec in self.steps])

    def indices(self) -> np.ndarray:
        return np.array([rec.n for rec in self.steps], dtype=np.int64)


@dataclass
class RunResult:
    final_theta: Any
    averaged_theta: Any = None
    trajectory: Optional[Trajectory] = None
    n_steps: int = 0
    failed_step: Optional[int] = None
    failure: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.failed_step is not None


def batch_em_iterate(model: ModelSpec, data, theta):
    """One EM iteration: M-step of the dataset-averaged conditional statistics."""
    s = expected_stat(model, data, theta)
    return model.checked_mstep(s)


def run_batch_em(model: ModelSpec, data, theta0, n_iter: int = 5):
    """``n_iter`` batch iterations. Returns ``(theta, logliks)`` with the
    normalised log-likelihood before each iteration and after the last."""
    theta = theta0
    logliks = [mean_loglik(model, data, theta)]
    for _ in range(n_iter):
        theta = batch_em_iterate(model, data, theta)
        logliks.append(mean_loglik(model, data, theta))
    return theta, logliks


def online_em_step(model: ModelSpec, s_hat, theta, y, gamma: float, inhibit_mstep: bool = False):
    """Stochastic-approximation E-step followed by the exact M-step.

    Returns ``(s_new, theta_new)``; ``s_new`` has the type of ``s_hat``.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    sbar = model.cond_expect_stat(y, theta)
    s_new = blend_stats(s_hat, sbar, gamma)
    if inhibit_mstep:
        return s_new, theta
    return s_new, model.checked_mstep(s_new)


Retention = Union[str, int]


@dataclass
class BatchRunResult:
    """Outcome of ``R`` lockstep replicas. Parameters are flattened (``R x P``);
    rows of failed replicas hold the last valid iterate and ``failed_step > 0``."""

    final_flat: np.ndarray
    averaged_flat: Optional[np.ndarray]
    failed_step: np.ndarray
    failures: dict
    final_stats: Optional[np.ndarray] = None
    trajectory: Optional[Trajectory] = None

    @property
    def failed(self) -> np.ndarray:
        return self.failed_step > 0


def _check_run_args(model, n_total, warmup, s0, average_from, retention):
    if n_total == 0:
        raise InsufficientDataError("empty observation stream")
    if warmup > n_total:
        raise InsufficientDataError(f"stream has {n_total} observations, warmup needs {warmup}")
    if s0 is None and warmup < 1:
        raise ValueError("s0 is required when warmup = 0")
    if average_from is not None and not warmup < average_from <= n_total:
        raise ValueError(f"averaging start {average_from} must lie in ({warmup}, {n_total}]")
    if isinstance(retention, int) and retention < 1:
        raise ValueError("thinning interval must be >= 1")
    if retention not in ("full", "final") and not isinstance(retention, int):
        raise ValueError(f"unknown retention {retention!r}")


def run_online_em_batch(model: ModelSpec, streams, sched: StepSchedule, theta0, s0=None,
                        warmup: Optional[int] = None, average_from: Optional[int] = None,
                        retention: Retention = "final") -> BatchRunResult:
    """Online EM on ``R`` independent streams advanced in lockstep.

    ``streams`` has shape ``(R, N, ...)``. ``theta0`` and ``s0`` either carry a
    leading replica axis or are shared by all replicas. Each replica follows
    exactly the recursion of :func:`run_online_em`; a replica whose statistic
    leaves the domain after warmup is frozen and reported, the others go on.
    Trajectory records (if retained) hold ``R``-row arrays with NaN rows for
    replicas that have failed.
    """
    streams = np.asarray(streams)
    n_rep, n_total = streams.shape[:2]
    if warmup is None:
        warmup = model.default_warmup
    _check_run_args(model, n_total, warmup, s0, average_from, retention)

    p = model.param_dim
    theta_flat = np.broadcast_to(model.flatten(theta0), (n_rep, p)).copy()
    theta = model.unflatten(theta_flat)
    s = None
    if s0 is not None:
        s0 = s0.values if isinstance(s0, StatVector) else np.asarray(s0, dtype=float)
        s = np.broadcast_to(s0, (n_rep, model.stat_dim)).copy()
        if warmup < 1 and not np.all(model.domain_mask(s)):
            raise DomainError(f"initial statistic outside the domain: {model.domain_violation(s[0])}")

    gammas = sched.gammas(n_total)
    final = np.full((n_rep, p), np.nan)
    final_s = np.full((n_rep, model.stat_dim), np.nan)
    avg_sum = np.zeros((n_rep, p)) if average_from is not None else None
    failed_step = np.zeros(n_rep, dtype=np.int64)
    failures = {}
    alive = np.arange(n_rep)
    all_alive = True
    traj = Trajectory(model.param_layout, warmup) if retention != "final" else None
    cond, mstep, mask = model.cond_expect_stat, model.mstep, model.domain_mask

    for i in range(n_total):
        n = i + 1
        g = gammas[i]
        obs = streams[:, i] if all_alive else streams[alive, i]
        sbar = cond(obs, theta)
        s_prev = s
        s = sbar if s is None else s + g * (sbar - s)
        if n > warmup:
            ok = mask(s)
            if not ok.all():
                for k in np.flatnonzero(~ok):
                    rep = int(alive[k])
                    failed_step[rep] = n
                    failures[rep] = model.domain_violation(s[k]) or "M-step failed"
                    final[rep] = theta_flat[k]
                    final_s[rep] = s_prev[k]
                alive, s, theta_flat = alive[ok], s[ok], theta_flat[ok]
                all_alive = False
                if alive.size == 0:
                    break
            theta = mstep(s)
            theta_flat = model.flatten(theta)
        if avg_sum is not None and n >= average_from:
            if all_alive:
                avg_sum += theta_flat
            else:
                avg_sum[alive] += theta_flat
        if traj is not None and (retention == "full" or n % int(retention) == 0 or n == n_total):
            if all_alive:
                s_rec, t_rec = s.copy(), theta_flat.copy()
            else:
                s_rec = np.full((n_rep, model.stat_dim), np.nan)
                t_rec = np.full((n_rep, p), np.nan)
                s_rec[alive], t_rec[alive] = s, theta_flat
            traj.steps.append(StepRecord(n, float(g), s_rec, t_rec))

    final[alive] = theta_flat
    final_s[alive] = s
    averaged = None
    if avg_sum is not None:
        averaged = avg_sum / (n_total - average_from + 1)
        averaged[failed_step > 0] = np.nan
    return BatchRunResult(final, averaged, failed_step, failures, final_s, traj)


def run_online_em(model: ModelSpec, stream, sched: StepSchedule, s0=None, theta0=None,
                  warmup: Optional[int] = None, average_from: Optional[int] = None,
                  retention: Retention = "final") -> RunResult:
    """Online EM over ``stream`` (array whose leading axis indexes observations).

    For ``n <= warmup`` only the statistics are updated and ``theta`` stays at
    ``theta0``. When ``s0`` is None the first observation's conditional
    statistic (at ``theta0``) initialises the state, which requires
    ``warmup >= 1``. ``average_from`` switches on Polyak-Ruppert averaging of
    the iterates ``n0..N``. ``retention`` is ``"full"``, ``"final"`` or a
    thinning interval ``k``.

    A domain failure after warmup does not raise: the result carries
    ``failed_step`` and the last valid parameter.
    """
    if theta0 is None:
        raise ValueError("theta0 is required")
    stream = np.asarray(stream)
    if len(stream) == 0:
        raise InsufficientDataError("empty observation stream")
    batch = run_online_em_batch(model, stream[None], sched, theta0, s0, warmup, average_from, retention)
    failed = int(batch.failed_step[0]) or None
    if retention == "final":
        last = failed - 1 if failed else len(stream)
        steps = [StepRecord(last, sched(last), batch.final_stats[0], batch.final_flat[0])] if last else []
    else:
        steps = [StepRecord(r.n, r.gamma, r.s_hat[0], r.theta[0]) for r in batch.trajectory.steps
                 if failed is None or r.n < failed]
    traj = Trajectory(model.param_layout, warmup if warmup is not None else model.default_warmup, steps)
    averaged = None if batch.averaged_flat is None or failed else model.unflatten(batch.averaged_flat[0])
    return RunResult(
        final_theta=model.unflatten(batch.final_flat[0]),
        averaged_theta=averaged,
        trajectory=traj,
        n_steps=failed or len(stream),
        failed_step=failed,
        failure=batch.failures.get(0),
    )


def polyak_ruppert_average(trajectory: Trajectory, n0: int) -> ParamVector:
    """Arithmetic mean of the recorded iterates ``theta_n0 .. theta_N``."""
    idx = trajectory.indices()
    if idx.size == 0:
        raise ValueError("empty trajectory")
    n_last = int(idx[-1])
    if n0 > n_last:
        raise ValueError(f"averaging start {n0} beyond the last step {n_last}")
    if n0 <= trajectory.warmup_len:
        raise ValueError(f"averaging start {n0} must exceed the warmup length {trajectory.warmup_len}")
    sel = idx >= n0
    if not np.array_equal(idx[sel], np.arange(n0, n_last + 1)):
        raise ValueError("trajectory is not contiguous over the averaging window; use full retention")
    return ParamVector(trajectory.thetas()[sel].mean(axis=0), trajectory.param_layout)


def default_average_start(n_total: int, fraction: float = 0.5) -> int:
    return max(1, math.ceil(fraction * n_total))


def titterington_step_poisson(theta: poisson.PoissonMixtureParams, y, gamma: float):
    """See :func:`online_em.poisson.titterington_step`; returns ``(theta, valid)``."""
    return poisson.titterington_step(theta, y, gamma)


def run_titterington_poisson(stream, sched: StepSchedule, theta0: poisson.PoissonMixtureParams,
                             average_from: Optional[int] = None) -> RunResult:
    """Titterington's recursion over a count stream; stops at the first
    non-positive intensity and reports it as a failed run."""
    n_total = len(stream)
    if n_total == 0:
        raise InsufficientDataError("empty observation stream")
    gammas = sched.gammas(n_total)
    theta = theta0
    avg_sum = None
    for i in range(n_total):
        new, valid = poisson.titterington_step(theta, stream[i], gammas[i])
        if not valid:
            return RunResult(theta, None, None, i + 1, failed_step=i + 1,
                             failure="intensity update produced lambda_j <= 0")
        theta = new
        if average_from is not None and i + 1 >= average_from:
            flat = poisson.flatten(theta)
            avg_sum = flat if avg_sum is None else avg_sum + flat
    averaged = None
    if average_from is not None:
        averaged = poisson.unflatten(avg_sum / (n_total - average_from + 1))
    return RunResult(theta, averaged, None, n_total)


def run_titterington_poisson_batch(streams, sched: StepSchedule, theta0: poisson.PoissonMixtureParams,
                                   average_from: Optional[int] = None) -> BatchRunResult:
    """:func:`run_titterington_poisson` on ``R`` count streams in lockstep."""
    streams = np.asarray(streams)
    n_rep, n_total = streams.shape[:2]
    if n_total == 0:
        raise InsufficientDataError("empty observation stream")
    p = 2 * theta0.m
    theta = poisson.unflatten(np.broadcast_to(poisson.flatten(theta0), (n_rep, p)).copy())
    gammas = sched.gammas(n_total)
    final = np.full((n_rep, p), np.nan)
    avg_sum = np.zeros((n_rep, p)) if average_from is not None else None
    failed_step = np.zeros(n_rep, dtype=np.int64)
    failures = {}
    alive = np.arange(n_rep)
    for i in range(n_total):
        new, valid = poisson.titterington_step(theta, streams[alive, i], gammas[i])
        valid = np.atleast_1d(valid)
        if not valid.all():
            for k in np.flatnonzero(~valid):
                rep = int(alive[k])
                failed_step[rep] = i + 1
                failures[rep] = "intensity update produced lambda_j <= 0"
                final[rep] = poisson.flatten(poisson.PoissonMixtureParams(theta.omega[k], theta.lam[k]))
            alive = alive[valid]
            new = poisson.PoissonMixtureParams(new.omega[valid], new.lam[valid])
            if alive.size == 0:
                break
        theta = new
        if avg_sum is not None and i + 1 >= average_from:
            avg_sum[alive] += poisson.flatten(theta)
    final[alive] = poisson.flatten(theta)
    averaged = None
    if avg_sum is not None:
        averaged = avg_sum / (n_total - average_from + 1)
        averaged[failed_step > 0] = np.nan
    return BatchRunResult(final, averaged, failed_step, failures)
