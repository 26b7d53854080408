"""Mixture of m Gaussian linear regressions.

An observation is a row ``[r, z_0, ..., z_{d-1}]``: scalar response ``r`` and
regressor vector ``z``. Given class ``j``, ``r ~ N(beta_j^T z, sigma2_j)``; the
marginal of ``z`` is left unmodelled.

Per component the statistic block is ``[s1, s2 (d), s3 (d*d, row-major), s4]``
with conditional expectations ``w_j``, ``w_j r z``, ``w_j z z^T`` and
``w_j r^2``. Note ``s3`` carries no factor ``r``: with it the M-step below would
not be the weighted least-squares solution and the variance could go negative.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import NamedTuple, Optional

import numpy as np

from .core import DomainError, ModelSpec, make_layout

# Cholesky pivots below this fraction of trace(M_j) count as singular.
PIVOT_RTOL = 1e-12
LOG_2PI = np.log(2.0 * np.pi)


class RegObservation(NamedTuple):
    r: float
    z: np.ndarray

    def row(self) -> np.ndarray:
        return np.concatenate([[self.r], np.asarray(self.z, dtype=float)])


def make_obs(r, z) -> np.ndarray:
    """Pack responses ``r`` (n,) and regressors ``z`` (n, d) into observation rows."""
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    if r.ndim == 0:
        return np.concatenate([[r], z])
    return np.column_stack([r, z])


@dataclass(frozen=True)
class RegMixParams:
    omega: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))
        object.__setattr__(self, "beta", np.atleast_2d(np.asarray(self.beta, dtype=float)))
        object.__setattr__(self, "sigma2", np.asarray(self.sigma2, dtype=float))
        if self.beta.shape[:-1] != self.omega.shape or self.sigma2.shape != self.omega.shape:
            raise ValueError("omega, beta rows and sigma2 must all have m entries")

    @property
    def m(self) -> int:
        return self.omega.shape[-1]

    @property
    def d(self) -> int:
        return self.beta.shape[-1]

    def violation(self) -> Optional[str]:
        if not (np.all(np.isfinite(self.omega)) and np.all(np.isfinite(self.beta))
                and np.all(np.isfinite(self.sigma2))):
            return "non-finite parameter"
        if np.any(self.omega <= 0) or abs(self.omega.sum() - 1.0) > 1e-12:
            return "mixture weights not on the open simplex"
        if np.any(self.sigma2 <= 0):
            return "variance sigma2_j <= 0"
        return None

    def validate(self) -> "RegMixParams":
        reason = self.violation()
        if reason is not None:
            raise ValueError(reason)
        return self


def _split(obs):
    obs = np.asarray(obs, dtype=float)
    return obs[..., 0], obs[..., 1:]


def _log_joint(obs, theta: RegMixParams):
    r, z = _split(obs)
    resid = r[..., None] - (theta.beta @ z[..., None])[..., 0]
    return (np.log(theta.omega) - 0.5 * np.log(theta.sigma2)
            - 0.5 * resid ** 2 / theta.sigma2), resid


def posterior_weights(obs, theta: RegMixParams) -> np.ndarray:
    a, _ = _log_joint(obs, theta)
    a = a - a.max(axis=-1, keepdims=True)
    e = np.exp(a)
    return e / e.sum(axis=-1, keepdims=True)


def cond_expect_stat(obs, theta: RegMixParams) -> np.ndarray:
    r, z = _split(obs)
    w = posterior_weights(obs, theta)
    rr = r[..., None]
    zz = (z[..., :, None] * z[..., None, :]).reshape(z.shape[:-1] + (-1,))
    parts = [
        w[..., None],
        (w * rr)[..., None] * z[..., None, :],
        w[..., None] * zz[..., None, :],
        (w * rr ** 2)[..., None],
    ]
    out = np.concatenate(parts, axis=-1)
    return out.reshape(out.shape[:-2] + (-1,))


def unpack_stats(s: np.ndarray, d: int):
    """Split a flat statistic vector into ``(s1, s2, s3, s4)`` component arrays."""
    s = np.asarray(s, dtype=float)
    b = s.reshape(s.shape[:-1] + (-1, 2 + d + d * d))
    return (b[..., 0], b[..., 1:1 + d], b[..., 1 + d:1 + d + d * d].reshape(b.shape[:-1] + (d, d)),
            b[..., -1])


def pack_stats(s1, s2, s3, s4) -> np.ndarray:
    m = len(s1)
    return np.concatenate([np.asarray(s1, float)[:, None], np.asarray(s2, float),
                           np.asarray(s3, float).reshape(m, -1), np.asarray(s4, float)[:, None]],
                          axis=1).ravel()


def _moment_matrices(s2, s3, s4):
    d = s2.shape[-1]
    M = np.empty(s2.shape[:-1] + (d + 1, d + 1))
    M[..., :d, :d] = s3
    M[..., :d, d] = s2
    M[..., d, :d] = s2
    M[..., d, d] = s4
    return M


def _cholesky(M):
    """Batched Cholesky that never raises.

    Returns ``(L, pivots)``; a matrix is treated as positive definite when all
    its pivots exceed ``PIVOT_RTOL * trace``. Entries of ``L`` for rejected
    matrices are meaningless.
    """
    k = M.shape[-1]
    L = np.zeros_like(M)
    piv = np.empty(M.shape[:-1])
    for j in range(k):
        lj = L[..., j, :j]
        v = M[..., j, j] - np.sum(lj * lj, axis=-1)
        piv[..., j] = v
        ljj = np.sqrt(np.where(v > 0, v, 1.0))
        L[..., j, j] = ljj
        if j + 1 < k:
            L[..., j + 1:, j] = (M[..., j + 1:, j] - (L[..., j + 1:, :j] @ lj[..., None])[..., 0]) / ljj[..., None]
    return L, piv


def _pd_mask(M, piv) -> np.ndarray:
    scale = np.trace(M, axis1=-2, axis2=-1)[..., None]
    return np.all(piv > PIVOT_RTOL * scale, axis=-1)


def domain_mask(s: np.ndarray, d: int) -> np.ndarray:
    """Vectorised membership test over any leading batch axes."""
    s1, s2, s3, s4 = unpack_stats(s, d)
    M = _moment_matrices(s2, s3, s4)
    _, piv = _cholesky(M)
    ok = _pd_mask(M, piv) & (s1 > 0) & (s1 <= 1)
    return np.all(ok, axis=-1)


def domain_violation(s: np.ndarray, d: int) -> Optional[str]:
    s = np.asarray(s, dtype=float)
    s1, s2, s3, s4 = unpack_stats(s, d)
    if not np.all(np.isfinite(s)):
        return "non-finite statistic"
    if np.any(s1 <= 0) or np.any(s1 > 1):
        return "posterior mass s1_j outside (0, 1]"
    if not np.allclose(s3, np.swapaxes(s3, -1, -2), rtol=1e-12, atol=0):
        return "s3_j is not symmetric"
    M = _moment_matrices(s2, s3, s4)
    _, piv = _cholesky(M)
    bad = ~_pd_mask(M, piv)
    if np.any(bad):
        j = int(np.argmax(bad.reshape(-1, bad.shape[-1]).any(axis=0))) + 1
        return f"moment matrix M_{j} = [[s3_{j}, s2_{j}], [s2_{j}^T, s4_{j}]] is not positive definite"
    return None


def in_domain(s: np.ndarray, d: int) -> bool:
    return domain_violation(s, d) is None


def mstep(s: np.ndarray, d: int) -> RegMixParams:
    """Weighted least squares per component: beta_j = s3_j^-1 s2_j,
    sigma2_j = (s4_j - beta_j^T s2_j) / s1_j, omega_j = s1_j."""
    s1, s2, s3, s4 = unpack_stats(s, d)
    M = _moment_matrices(s2, s3, s4)
    L, piv = _cholesky(M)
    if not np.all(_pd_mask(M, piv)):
        raise DomainError("moment matrix M_j = [[s3_j, s2_j], [s2_j^T, s4_j]] is not positive definite")
    beta = np.linalg.solve(s3, s2[..., None])[..., 0]
    # last pivot is the Schur complement s4 - s2^T s3^-1 s2, positive by construction
    sigma2 = piv[..., d] / s1
    return RegMixParams(s1.copy(), beta, sigma2)


def loglik(obs, theta: RegMixParams):
    a, _ = _log_joint(obs, theta)
    amax = a.max(axis=-1)
    out = amax + np.log(np.exp(a - amax[..., None]).sum(axis=-1)) - 0.5 * LOG_2PI
    return out if np.ndim(out) else float(out)


def score_beta(obs, theta: RegMixParams) -> np.ndarray:
    """Gradient of log g(r | z) in each beta_j: ``w_j (r - beta_j^T z) z / sigma2_j``."""
    _, z = _split(obs)
    a, resid = _log_joint(obs, theta)
    w = posterior_weights(obs, theta)
    return (w * resid / theta.sigma2)[..., None] * z[..., None, :]


def score(obs, theta: RegMixParams) -> np.ndarray:
    """Full score in the free parametrisation ``(omega_1..omega_{m-1}, beta, sigma2)``."""
    _, z = _split(obs)
    _, resid = _log_joint(obs, theta)
    w = posterior_weights(obs, theta)
    d_omega = w[..., :-1] / theta.omega[:-1] - w[..., -1:] / theta.omega[-1]
    d_beta = ((w * resid / theta.sigma2)[..., None] * z[..., None, :])
    d_beta = d_beta.reshape(d_beta.shape[:-2] + (-1,))
    d_sigma2 = w * (0.5 * resid ** 2 / theta.sigma2 ** 2 - 0.5 / theta.sigma2)
    return np.concatenate([d_omega, d_beta, d_sigma2], axis=-1)


def cond_neg_hessian(obs, theta: RegMixParams) -> np.ndarray:
    """``-E_theta[Hessian of log f | r, z]`` in the free parametrisation."""
    _, z = _split(obs)
    _, resid = _log_joint(obs, theta)
    w = posterior_weights(obs, theta)
    m, d = theta.m, theta.d
    k = m - 1
    dim = k + m * d + m
    out = np.zeros(w.shape[:-1] + (dim, dim))
    if k:
        out[..., :k, :k] = (w[..., -1] / theta.omega[-1] ** 2)[..., None, None]
        idx = np.arange(k)
        out[..., idx, idx] += w[..., :k] / theta.omega[:k] ** 2
    zz = z[..., :, None] * z[..., None, :]
    for j in range(m):
        b = slice(k + j * d, k + (j + 1) * d)
        v = k + m * d + j
        s2 = theta.sigma2[j]
        out[..., b, b] = (w[..., j] / s2)[..., None, None] * zz
        cross = (w[..., j] * resid[..., j] / s2 ** 2)[..., None] * z
        out[..., b, v] = cross
        out[..., v, b] = cross
        out[..., v, v] = w[..., j] * (resid[..., j] ** 2 / s2 ** 3 - 0.5 / s2 ** 2)
    return out


def to_free(theta: RegMixParams) -> np.ndarray:
    return np.concatenate([theta.omega[:-1], theta.beta.ravel(), theta.sigma2])


def from_free(v: np.ndarray, m: int, d: int) -> RegMixParams:
    v = np.asarray(v, dtype=float)
    k = m - 1
    omega = np.append(v[:k], 1.0 - v[:k].sum())
    return RegMixParams(omega, v[k:k + m * d].reshape(m, d), v[k + m * d:])


def flatten(theta: RegMixParams) -> np.ndarray:
    beta = theta.beta.reshape(theta.beta.shape[:-2] + (-1,))
    return np.concatenate([theta.omega, beta, theta.sigma2], axis=-1)


def unflatten(v: np.ndarray, m: int, d: int) -> RegMixParams:
    v = np.asarray(v, dtype=float)
    lead = v.shape[:-1]
    return RegMixParams(v[..., :m].copy(), v[..., m:m + m * d].reshape(lead + (m, d)).copy(),
                        v[..., m + m * d:].copy())


def sample_given(theta: RegMixParams, z: np.ndarray, rng: np.random.Generator):
    """Responses for fixed regressors ``z``; returns ``(obs_rows, classes)``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    classes = rng.choice(theta.m, size=len(z), p=theta.omega)
    mean = np.einsum("nd,nd->n", z, theta.beta[classes])
    r = mean + np.sqrt(theta.sigma2[classes]) * rng.standard_normal(len(z))
    return make_obs(r, z), classes + 1


def regmix_model(m: int, d: int) -> ModelSpec:
    stat_layout = make_layout(*[(f"comp{j + 1}", 2 + d + d * d) for j in range(m)])
    param_layout = make_layout(*[(f"omega{j + 1}", 1) for j in range(m)],
                               *[(f"beta{j + 1}", d) for j in range(m)],
                               *[(f"sigma2_{j + 1}", 1) for j in range(m)])
    free_labels = tuple([f"omega{j + 1}" for j in range(m - 1)]
                        + [f"beta{j + 1}_{i}" for j in range(m) for i in range(d)]
                        + [f"sigma2_{j + 1}" for j in range(m)])
    return ModelSpec(
        name="regmix",
        stat_layout=stat_layout,
        param_layout=param_layout,
        cond_expect_stat=cond_expect_stat,
        mstep=partial(mstep, d=d),
        loglik=loglik,
        domain_violation=partial(domain_violation, d=d),
        domain_mask=partial(domain_mask, d=d),
        flatten=flatten,
        unflatten=partial(unflatten, m=m, d=d),
        score=score,
        cond_neg_hessian=cond_neg_hessian,
        to_free=to_free,
        from_free=partial(from_free, m=m, d=d),
        free_labels=free_labels,
        default_warmup=20,
        extras={"m": m, "d": d},
    )
