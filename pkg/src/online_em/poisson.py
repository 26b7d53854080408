"""Mixture of m Poisson distributions.

Complete data is ``(y, w)`` with ``w`` the unobserved component label. The
sufficient statistics are, per component ``j``, the indicator ``1{w=j}`` and
the count ``y * 1{w=j}``; the flat statistic vector stores them component by
component as ``[s1_1, s2_1, s1_2, s2_2, ...]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .core import (
    DegenerateComponentError,
    ModelSpec,
    make_layout,
)


@dataclass(frozen=True)
class PoissonMixtureParams:
    omega: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))
        object.__setattr__(self, "lam", np.asarray(self.lam, dtype=float))
        if self.omega.shape != self.lam.shape or self.omega.ndim < 1:
            raise ValueError("omega and lam must be arrays of equal shape")

    @property
    def m(self) -> int:
        return self.omega.shape[-1]

    def violation(self) -> Optional[str]:
        if not np.all(np.isfinite(self.omega)) or not np.all(np.isfinite(self.lam)):
            return "non-finite parameter"
        if np.any(self.omega <= 0):
            return "mixture weight omega_j <= 0"
        if abs(self.omega.sum() - 1.0) > 1e-12:
            return f"mixture weights sum to {self.omega.sum()!r}, not 1"
        if np.any(self.lam <= 0):
            return "intensity lambda_j <= 0"
        return None

    def is_valid(self) -> bool:
        return self.violation() is None

    def validate(self) -> "PoissonMixtureParams":
        reason = self.violation()
        if reason is not None:
            raise ValueError(reason)
        return self


def _log_joint(y, theta: PoissonMixtureParams) -> np.ndarray:
    # log(omega_j * lam_j^y * exp(-lam_j)), without the -log(y!) term
    y = np.asarray(y, dtype=float)[..., None]
    return np.log(theta.omega) + y * np.log(theta.lam) - theta.lam


def posterior_weights(y, theta: PoissonMixtureParams) -> np.ndarray:
    """P(W = j | Y = y) for each component, via a max-log shift."""
    a = _log_joint(y, theta)
    a = a - a.max(axis=-1, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=-1, keepdims=True)


def cond_expect_stat(y, theta: PoissonMixtureParams) -> np.ndarray:
    w = posterior_weights(y, theta)
    out = np.empty(w.shape[:-1] + (2 * w.shape[-1],))
    out[..., 0::2] = w
    np.multiply(w, np.asarray(y, dtype=float)[..., None], out=out[..., 1::2])
    return out


def domain_mask(s: np.ndarray) -> np.ndarray:
    """Vectorised domain test over any leading batch axes."""
    s = np.asarray(s, dtype=float)
    return (s.min(axis=-1) > 0) & (s[..., 0::2].max(axis=-1) <= 1)


def domain_violation(s: np.ndarray) -> Optional[str]:
    blocks = np.asarray(s, dtype=float).reshape(-1, 2)
    s1, s2 = blocks[:, 0], blocks[:, 1]
    if not np.all(np.isfinite(blocks)):
        return "non-finite statistic"
    if np.any(s1 <= 0) or np.any(s1 > 1):
        return "posterior mass s1_j outside (0, 1]"
    if np.any(s2 <= 0):
        j = int(np.argmax(s2 <= 0)) + 1
        return f"component {j} has zero posterior-weighted count (s2_{j} <= 0)"
    return None


def mstep(s: np.ndarray) -> PoissonMixtureParams:
    """omega_j = s1_j, lambda_j = s2_j / s1_j."""
    s = np.asarray(s, dtype=float)
    s1, s2 = s[..., 0::2], s[..., 1::2]
    if not (s2 > 0).all():
        j = int(np.argmax((s2 <= 0).reshape(-1, s2.shape[-1]).any(axis=0))) + 1
        raise DegenerateComponentError(f"component {j} has zero posterior-weighted count (s2_{j} <= 0)")
    return PoissonMixtureParams(s1.copy(), s2 / s1)


def loglik(y, theta: PoissonMixtureParams):
    a = _log_joint(y, theta)
    amax = a.max(axis=-1)
    out = amax + np.log(np.exp(a - amax[..., None]).sum(axis=-1)) - gammaln(np.asarray(y, dtype=float) + 1.0)
    return out if np.ndim(out) else float(out)


def complete_fim(theta: PoissonMixtureParams) -> np.ndarray:
    """Complete-data Fisher information in the free parametrisation
    ``(omega_1..omega_{m-1}, lambda_1..lambda_m)``."""
    m = theta.m
    out = np.zeros((2 * m - 1, 2 * m - 1))
    k = m - 1
    if k:
        out[:k, :k] = np.diag(1.0 / theta.omega[:k]) + 1.0 / theta.omega[-1]
    out[k:, k:] = np.diag(theta.omega / theta.lam)
    return out


def score_from_stats(sbar: np.ndarray, theta: PoissonMixtureParams) -> np.ndarray:
    """Observed-data score assembled from the conditional statistics (Fisher's identity).

    ``d log f / d theta = grad(phi)^T S - grad(psi)``; with ``phi_j = (log omega_j - lambda_j,
    log lambda_j)`` this gives ``s1_j/omega_j - s1_m/omega_m`` for the free weights and
    ``s2_j/lambda_j - s1_j`` for the intensities.
    """
    sbar = np.asarray(sbar, dtype=float)
    blocks = sbar.reshape(sbar.shape[:-1] + (-1, 2))
    s1, s2 = blocks[..., 0], blocks[..., 1]
    d_omega = s1[..., :-1] / theta.omega[..., :-1] - s1[..., -1:] / theta.omega[..., -1:]
    d_lam = s2 / theta.lam - s1
    return np.concatenate([d_omega, d_lam], axis=-1)


def score(y, theta: PoissonMixtureParams) -> np.ndarray:
    return score_from_stats(cond_expect_stat(y, theta), theta)


def cond_neg_hessian(y, theta: PoissonMixtureParams) -> np.ndarray:
    """``-E_theta[Hessian of log f | Y=y]`` in the free parametrisation."""
    w = posterior_weights(y, theta)
    yf = np.asarray(y, dtype=float)[..., None]
    m = theta.m
    k = m - 1
    shape = w.shape[:-1]
    out = np.zeros(shape + (2 * m - 1, 2 * m - 1))
    if k:
        wk = w[..., :k] / theta.omega[:k] ** 2
        wm = w[..., -1] / theta.omega[-1] ** 2
        out[..., :k, :k] = wm[..., None, None]
        idx = np.arange(k)
        out[..., idx, idx] += wk
    idx = np.arange(k, 2 * m - 1)
    out[..., idx, idx] = w * yf / theta.lam ** 2
    return out


def to_free(theta: PoissonMixtureParams) -> np.ndarray:
    return np.concatenate([theta.omega[:-1], theta.lam])


def from_free(v: np.ndarray) -> PoissonMixtureParams:
    v = np.asarray(v, dtype=float)
    m = (v.size + 1) // 2
    omega = np.append(v[:m - 1], 1.0 - v[:m - 1].sum())
    return PoissonMixtureParams(omega, v[m - 1:])


def sample(theta: PoissonMixtureParams, n: int, rng: np.random.Generator):
    """Draw ``n`` counts: W ~ Categorical(omega), then Y ~ Poisson(lambda_W).

    Returns ``(y, classes)`` with 1-based class labels.
    """
    classes = rng.choice(theta.m, size=n, p=theta.omega)
    y = rng.poisson(theta.lam[classes])
    return y.astype(np.int64), classes.astype(np.int64) + 1


def flatten(theta: PoissonMixtureParams) -> np.ndarray:
    return np.concatenate([theta.omega, theta.lam], axis=-1)


def unflatten(v: np.ndarray) -> PoissonMixtureParams:
    v = np.asarray(v, dtype=float)
    m = v.shape[-1] // 2
    return PoissonMixtureParams(v[..., :m].copy(), v[..., m:].copy())


def expected_stat_at(theta: PoissonMixtureParams) -> np.ndarray:
    """E_theta[S(X)] = (omega_j, omega_j * lambda_j) per component."""
    return np.stack([theta.omega, theta.omega * theta.lam], axis=-1).ravel()


def titterington_step(theta: PoissonMixtureParams, y, gamma: float):
    """One step of Titterington's recursion (complete-data-FIM weighted score).

    Returns ``(new_theta, valid)``; the new intensities may be non-positive, in
    which case ``valid`` is False and ``new_theta`` is returned unchecked.
    """
    w = posterior_weights(y, theta)
    yf = np.asarray(y, dtype=float)[..., None]
    omega = theta.omega + gamma * (w - theta.omega)
    lam = theta.lam + gamma * (w / theta.omega) * (yf - theta.lam)
    valid = np.all(lam > 0, axis=-1)
    return PoissonMixtureParams(omega, lam), (bool(valid) if valid.ndim == 0 else valid)


def exact_measure(theta: PoissonMixtureParams, tail: float = 1e-12):
    """Support points and probabilities of the mixture, truncated once the
    cumulative mass reaches ``1 - tail``.

    Returns ``(y, p)``; expectations become finite weighted sums.
    """
    hi = int(np.max(theta.lam) + 20 * np.sqrt(np.max(theta.lam)) + 50)
    while True:
        y = np.arange(hi + 1)
        p = np.exp(loglik(y, theta))
        c = np.cumsum(p)
        if c[-1] >= 1.0 - tail:
            stop = int(np.searchsorted(c, 1.0 - tail)) + 1
            return y[:stop], p[:stop]
        hi *= 2


def poisson_mixture_model(m: int) -> ModelSpec:
    stat_layout = make_layout(*[(f"comp{j + 1}", 2) for j in range(m)])
    param_layout = make_layout(*[(f"omega{j + 1}", 1) for j in range(m)],
                               *[(f"lambda{j + 1}", 1) for j in range(m)])
    free_labels = tuple([f"omega{j + 1}" for j in range(m - 1)] + [f"lambda{j + 1}" for j in range(m)])
    return ModelSpec(
        name="poisson",
        stat_layout=stat_layout,
        param_layout=param_layout,
        cond_expect_stat=cond_expect_stat,
        mstep=mstep,
        loglik=loglik,
        domain_violation=domain_violation,
        domain_mask=domain_mask,
        flatten=flatten,
        unflatten=unflatten,
        sample=sample,
        score=score,
        cond_neg_hessian=cond_neg_hessian,
        to_free=to_free,
        from_free=from_free,
        free_labels=free_labels,
        default_warmup=0,
        extras={"m": m},
    )
