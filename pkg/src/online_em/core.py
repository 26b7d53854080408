"""Model-agnostic building blocks: statistic/parameter vectors, step sizes and
the record of operations every latent-data model supplies.

Models are plain records of callables (:class:`ModelSpec`) rather than
subclasses, so the estimators in :mod:`online_em.estimators` are written once
and work for any model that fills the record in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Optional

import numpy as np


class DimensionError(ValueError):
    """Two vectors that should share a layout do not."""


class DomainError(ValueError):
    """A statistic vector lies outside the set on which the M-step is defined."""


class DegenerateComponentError(DomainError):
    """A mixture component has collapsed (e.g. zero posterior-weighted count)."""


class InsufficientDataError(ValueError):
    """The observation stream is too short for the requested run."""


class Block(NamedTuple):
    name: str
    offset: int
    length: int


Layout = tuple  # tuple[Block, ...]


def make_layout(*blocks: tuple[str, int]) -> Layout:
    """Build a contiguous layout from ``(name, length)`` pairs."""
    out = []
    offset = 0
    for name, length in blocks:
        out.append(Block(name, offset, int(length)))
        offset += int(length)
    return tuple(out)


def layout_size(layout: Layout) -> int:
    return sum(b.length for b in layout)


@dataclass(frozen=True)
class StatVector:
    """Flat vector of complete-data sufficient statistics plus its block layout."""

    values: np.ndarray
    layout: Layout

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise DimensionError(f"statistic vector must be 1-d, got shape {values.shape}")
        if values.size != layout_size(self.layout):
            raise DimensionError(
                f"statistic vector has {values.size} entries, layout declares {layout_size(self.layout)}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("statistic vector has non-finite entries")
        object.__setattr__(self, "values", values)

    def block(self, name: str) -> np.ndarray:
        for b in self.layout:
            if b.name == name:
                return self.values[b.offset:b.offset + b.length]
        raise KeyError(name)


@dataclass(frozen=True)
class ParamVector:
    """Flattened model parameters with a labelled layout."""

    values: np.ndarray
    layout: Layout

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size != layout_size(self.layout):
            raise DimensionError("parameter vector does not match its layout")
        if not np.all(np.isfinite(values)):
            raise ValueError("parameter vector has non-finite entries")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class StepSchedule:
    """Power-law step sizes ``gamma_n = gamma0 * n**-alpha``."""

    gamma0: float = 1.0
    alpha: float = 0.6

    def __post_init__(self):
        if not 0.0 < self.gamma0 <= 1.0:
            raise ValueError(f"gamma0 must lie in (0, 1], got {self.gamma0}")
        if not 0.5 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (1/2, 1], got {self.alpha}")

    def __call__(self, n: int) -> float:
        return schedule_gamma(self, n)

    def gammas(self, n_steps: int) -> np.ndarray:
        """Vector of gamma_1..gamma_N."""
        return self.gamma0 * np.arange(1, n_steps + 1, dtype=float) ** -self.alpha


def schedule_gamma(sched: StepSchedule, n: int) -> float:
    if n < 1:
        raise ValueError(f"step index must be >= 1, got {n}")
    return sched.gamma0 * float(n) ** -sched.alpha


def blend_stats(s, sbar, gamma: float):
    """Stochastic-approximation E-step: ``(1 - gamma) * s + gamma * sbar``.

    Accepts :class:`StatVector` or plain arrays; the result has the type of ``s``.
    """
    if isinstance(s, StatVector):
        if isinstance(sbar, StatVector) and sbar.layout != s.layout:
            raise DimensionError("statistic layouts differ")
        sbar_values = sbar.values if isinstance(sbar, StatVector) else np.asarray(sbar, dtype=float)
        if sbar_values.shape != s.values.shape:
            raise DimensionError(f"shape {sbar_values.shape} != {s.values.shape}")
        return StatVector(s.values + gamma * (sbar_values - s.values), s.layout)
    s = np.asarray(s, dtype=float)
    sbar = np.asarray(sbar.values if isinstance(sbar, StatVector) else sbar, dtype=float)
    if s.shape != sbar.shape:
        raise DimensionError(f"shape {sbar.shape} != {s.shape}")
    if gamma == 1.0:
        return sbar.copy()
    return s + gamma * (sbar - s)


@dataclass(frozen=True)
class ModelSpec:
    """Operations a latent-data model supplies to the generic estimators.

    Observations are stored in arrays whose leading axis indexes observations;
    ``cond_expect_stat``, ``loglik``, ``score`` and ``cond_neg_hessian`` accept
    either one observation or a stack of them. Parameters, statistics and the
    ``mstep``/``domain_mask``/``flatten`` maps also broadcast over leading
    batch axes, which lets independent replicas advance in lockstep.

    ``score`` and ``cond_neg_hessian`` work in the model's *free*
    parametrisation (``to_free``/``from_free``), where the last mixture weight
    is implied by the others.
    """

    name: str
    stat_layout: Layout
    param_layout: Layout
    cond_expect_stat: Callable[[Any, Any], np.ndarray]
    mstep: Callable[[np.ndarray], Any]
    loglik: Callable[[Any, Any], Any]
    domain_violation: Callable[[np.ndarray], Optional[str]]
    domain_mask: Callable[[np.ndarray], np.ndarray]
    flatten: Callable[[Any], np.ndarray]
    unflatten: Callable[[np.ndarray], Any]
    sample: Optional[Callable[..., Any]] = None
    score: Optional[Callable[[Any, Any], np.ndarray]] = None
    cond_neg_hessian: Optional[Callable[[Any, Any], np.ndarray]] = None
    to_free: Optional[Callable[[Any], np.ndarray]] = None
    from_free: Optional[Callable[[np.ndarray], Any]] = None
    free_labels: tuple = ()
    default_warmup: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def stat_dim(self) -> int:
        return layout_size(self.stat_layout)

    @property
    def param_dim(self) -> int:
        return layout_size(self.param_layout)

    @property
    def free_dim(self) -> int:
        return len(self.free_labels)

    @property
    def param_labels(self) -> tuple:
        return block_labels(self.param_layout)

    def in_domain(self, s) -> bool:
        return self.domain_violation(_values(s)) is None

    def checked_mstep(self, s):
        """M-step that raises :class:`DomainError` naming the violated constraint."""
        s = _values(s)
        reason = self.domain_violation(s)
        if reason is not None:
            raise DomainError(reason)
        return self.mstep(s)

    def stat_vector(self, values) -> StatVector:
        return StatVector(values, self.stat_layout)

    def param_vector(self, theta) -> ParamVector:
        return ParamVector(self.flatten(theta), self.param_layout)


def block_labels(layout: Layout) -> tuple:
    """Column labels ``name`` (length 1) or ``name_k`` for every coordinate."""
    labels = []
    for b in layout:
        if b.length == 1:
            labels.append(b.name)
        else:
            labels.extend(f"{b.name}_{k}" for k in range(b.length))
    return tuple(labels)


def _values(s) -> np.ndarray:
    return s.values if isinstance(s, StatVector) else np.asarray(s, dtype=float)


def expected_stat(model: ModelSpec, data, theta, weights: Optional[np.ndarray] = None,
                  chunk: int = 100_000) -> np.ndarray:
    """Weighted average of ``cond_expect_stat`` over a dataset, chunked for memory."""
    n = len(data)
    if n == 0:
        raise InsufficientDataError("empty dataset")
    total = np.zeros(model.stat_dim)
    for start in range(0, n, chunk):
        block = model.cond_expect_stat(data[start:start + chunk], theta)
        if weights is None:
            total += block.sum(axis=0)
        else:
            total += weights[start:start + chunk] @ block
    return total / n if weights is None else total


def mean_loglik(model: ModelSpec, data, theta) -> float:
    """Normalised log-likelihood ``n^-1 sum_i log g(Y_i; theta)``."""
    return float(np.mean(model.loglik(data, theta)))

