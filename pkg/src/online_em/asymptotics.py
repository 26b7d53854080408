"""Mean field, KL surrogate, information matrices and the Lyapunov-equation
covariances that describe the limit behaviour of online EM.

Expectations under the data distribution are taken over a
:class:`WeightedSample`: a simulated dataset (uniform weights) or, for the
Poisson mixture, the truncated exact support from
:func:`online_em.poisson.exact_measure`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .core import ModelSpec, StatVector, StepSchedule


class StabilityError(ValueError):
    """Matrix expected to be stable (all eigenvalues in the open left half-plane) is not."""


class SingularInformationWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class WeightedSample:
    obs: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.obs):
            raise ValueError("one weight per observation required")
        if np.any(w < 0):
            raise ValueError("negative weight")
        object.__setattr__(self, "weights", w / w.sum())

    def __len__(self):
        return len(self.obs)


def as_measure(data) -> WeightedSample:
    if isinstance(data, WeightedSample):
        return data
    data = np.asarray(data)
    if len(data) == 0:
        raise ValueError("empty dataset")
    return WeightedSample(data, np.full(len(data), 1.0 / len(data)))


def exact_poisson_measure(theta, tail: float = 1e-12) -> WeightedSample:
    from .poisson import exact_measure

    y, p = exact_measure(theta, tail)
    return WeightedSample(y, p)


def expectation(fn, measure, chunk: int = 50_000) -> np.ndarray:
    """``E[fn(Y)]`` over a measure; ``fn`` maps a stack of observations to a
    stack of arrays."""
    measure = as_measure(measure)
    total = None
    for start in range(0, len(measure), chunk):
        vals = np.asarray(fn(measure.obs[start:start + chunk]), dtype=float)
        w = measure.weights[start:start + chunk]
        part = np.tensordot(w, vals, axes=(0, 0))
        total = part if total is None else total + part
    return total


def mean_field(model: ModelSpec, measure, s) -> np.ndarray:
    """``h(s) = E[sbar(Y; mstep(s))] - s``."""
    s = s.values if isinstance(s, StatVector) else np.asarray(s, dtype=float)
    theta = model.checked_mstep(s)
    return expectation(lambda y: model.cond_expect_stat(y, theta), measure) - s


def kl_surrogate(model: ModelSpec, measure, theta) -> float:
    """``E[-log g(Y; theta)]``: the KL divergence to the data distribution up to
    the parameter-free entropy term."""
    return -float(expectation(lambda y: model.loglik(y, theta), measure))


def _rank_deficient(mat: np.ndarray) -> bool:
    ev = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    return ev.min() <= 1e-12 * max(ev.max(), 1e-300)


def empirical_information(model: ModelSpec, data, theta) -> np.ndarray:
    """Average outer product of observed-data scores (free parametrisation)."""
    info = expectation(lambda y: _outer(model.score(y, theta)), data)
    info = 0.5 * (info + info.T)
    if _rank_deficient(info):
        warnings.warn(f"empirical information is rank deficient (d = {info.shape[0]})",
                      SingularInformationWarning, stacklevel=2)
    return info


def _outer(g: np.ndarray) -> np.ndarray:
    return g[..., :, None] * g[..., None, :]


def complete_fim_pi(model: ModelSpec, data, theta) -> np.ndarray:
    """``-E_pi[E_theta[Hessian of log f | Y]]`` estimated over ``data``."""
    if model.cond_neg_hessian is None:
        raise NotImplementedError(f"model {model.name} has no conditional Hessian")
    out = expectation(lambda y: model.cond_neg_hessian(y, theta), data, chunk=5_000)
    out = 0.5 * (out + out.T)
    if _rank_deficient(out):
        warnings.warn("complete-data information estimate is not positive definite",
                      SingularInformationWarning, stacklevel=2)
    return out


def surrogate_hessian(model: ModelSpec, measure, theta, rel_step: float = 1e-4) -> np.ndarray:
    """Hessian of :func:`kl_surrogate` in the free parametrisation, by central
    differences of its analytic gradient ``-E[score]``."""
    x0 = model.to_free(theta)
    d = x0.size
    hess = np.empty((d, d))
    for i in range(d):
        h = rel_step * max(abs(x0[i]), 1.0)
        xp, xm = x0.copy(), x0.copy()
        xp[i] += h
        xm[i] -= h
        gp = -expectation(lambda y: model.score(y, model.from_free(xp)), measure)
        gm = -expectation(lambda y: model.score(y, model.from_free(xm)), measure)
        hess[:, i] = (gp - gm) / (2 * h)
    return 0.5 * (hess + hess.T)


@dataclass(frozen=True)
class StableMatrixPair:
    H: np.ndarray
    Gamma: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        G = np.atleast_2d(np.asarray(self.Gamma, dtype=float))
        if H.shape != G.shape or H.shape[0] != H.shape[1]:
            raise ValueError("H and Gamma must be square and of equal size")
        if spectral_abscissa(H) >= 0:
            raise StabilityError(f"H is not stable (max Re eigenvalue {spectral_abscissa(H):.3g})")
        if not np.allclose(G, G.T, rtol=1e-10, atol=1e-12 * np.abs(G).max()):
            raise ValueError("Gamma is not symmetric")
        ev = np.linalg.eigvalsh(0.5 * (G + G.T))
        if ev.min() < -1e-10 * max(ev.max(), 1.0):
            raise ValueError("Gamma is not positive semidefinite")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "Gamma", 0.5 * (G + G.T))


def spectral_abscissa(H: np.ndarray) -> float:
    return float(np.max(np.linalg.eigvals(np.atleast_2d(H)).real))


def spectral_bound(H: np.ndarray) -> float:
    """Largest ``lam`` with every eigenvalue real part <= ``-lam``."""
    return -spectral_abscissa(H)


def lyapunov_zeta(sched: StepSchedule) -> float:
    """Shift for the Lyapunov equation of ``gamma_n = gamma0 n^-alpha``:
    0 when alpha < 1, ``1 / (2 gamma0)`` when alpha = 1."""
    return 0.0 if sched.alpha < 1.0 else 0.5 / sched.gamma0


def solve_lyapunov(pair: StableMatrixPair, zeta: float = 0.0) -> np.ndarray:
    """Solve ``(H + zeta I) S + S (H + zeta I)^T = -Gamma`` (Bartels-Stewart)."""
    if zeta < 0:
        raise ValueError("zeta must be >= 0")
    A = pair.H + zeta * np.eye(pair.H.shape[0])
    if spectral_abscissa(A) >= 0:
        raise StabilityError(
            f"H + zeta*I is not stable: need spectral bound {spectral_bound(pair.H):.4g} > zeta = {zeta:.4g}")
    sigma = linalg.solve_continuous_lyapunov(A, -pair.Gamma)
    sigma = 0.5 * (sigma + sigma.T)
    resid = np.linalg.norm(A @ sigma + sigma @ A.T + pair.Gamma)
    if resid > 1e-10 * max(np.linalg.norm(pair.Gamma), 1e-300):
        raise np.linalg.LinAlgError(f"Lyapunov residual {resid:.3g} above tolerance")
    return sigma


def averaged_covariance(pair: StableMatrixPair) -> np.ndarray:
    """``H^-1 Gamma H^-T``: asymptotic covariance of the averaged iterates."""
    try:
        hinv_g = np.linalg.solve(pair.H, pair.Gamma)
        out = np.linalg.solve(pair.H, hinv_g.T).T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("H is singular") from exc
    return 0.5 * (out + out.T)


def assemble_pair(model: ModelSpec, measure, theta, rel_step: float = 1e-4) -> StableMatrixPair:
    """``H = Ic^-1 (-Hess K)``, ``Gamma = Ic^-1 E[score score^T] Ic^-1`` at ``theta``."""
    ic = complete_fim_pi(model, measure, theta)
    neg_hess = -surrogate_hessian(model, measure, theta, rel_step)
    info = empirical_information(model, measure, theta)
    H = np.linalg.solve(ic, neg_hess)
    ic_inv = np.linalg.inv(ic)
    return StableMatrixPair(H, ic_inv @ info @ ic_inv)


def correlations(cov: np.ndarray) -> np.ndarray:
    sd = np.sqrt(np.diag(cov))
    return cov / np.outer(sd, sd)


def block_inverse(info: np.ndarray, idx: Sequence[int]) -> np.ndarray:
    """Inverse of the sub-matrix of ``info`` on ``idx`` (the other parameters
    held fixed)."""
    idx = np.asarray(idx)
    return np.linalg.inv(info[np.ix_(idx, idx)])


@dataclass
class AsymptoticReport:
    labels: tuple
    H: np.ndarray
    Gamma: np.ndarray
    Sigma: np.ndarray
    Sigma_avg: np.ndarray
    std_devs: np.ndarray
    correlations: np.ndarray
    zeta: float = 0.0
    spectral_bound: float = float("nan")
    info: Optional[np.ndarray] = None
    extra_blocks: dict = None

    def to_csv(self, path) -> None:
        """Matrices as row-major CSV blocks, each preceded by a ``#`` comment."""
        labels = list(self.labels)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# zeta,{self.zeta!r}\n# spectral_bound,{self.spectral_bound!r}\n")
            blocks = [("H", self.H), ("Gamma", self.Gamma), ("Sigma", self.Sigma),
                      ("Sigma_avg", self.Sigma_avg), ("correlations", self.correlations)]
            if self.info is not None:
                blocks.insert(0, ("information", self.info))
            for name, mat in blocks:
                _write_block(fh, name, labels, mat)
            _write_vector(fh, "std_devs", labels, self.std_devs)
            for name, (sub_labels, vec, mat) in (self.extra_blocks or {}).items():
                _write_vector(fh, f"{name}_std_devs", sub_labels, vec)
                _write_block(fh, f"{name}_correlations", sub_labels, mat)


def _write_block(fh, name, labels, mat):
    fh.write(f"# {name}\n")
    fh.write(",".join(["row"] + list(labels)) + "\n")
    for lab, row in zip(labels, np.atleast_2d(mat)):
        fh.write(",".join([lab] + [repr(float(x)) for x in row]) + "\n")


def _write_vector(fh, name, labels, vec):
    fh.write(f"# {name}\n")
    fh.write(",".join(labels) + "\n")
    fh.write(",".join(repr(float(x)) for x in vec) + "\n")


def asymptotic_report(model: ModelSpec, measure, theta, zeta: float = 0.0,
                      rel_step: float = 1e-4) -> AsymptoticReport:
    pair = assemble_pair(model, measure, theta, rel_step)
    sigma = solve_lyapunov(pair, zeta)
    sigma_avg = averaged_covariance(pair)
    return AsymptoticReport(
        labels=tuple(model.free_labels),
        H=pair.H,
        Gamma=pair.Gamma,
        Sigma=sigma,
        Sigma_avg=sigma_avg,
        std_devs=np.sqrt(np.diag(sigma_avg)),
        correlations=correlations(sigma_avg),
        zeta=zeta,
        spectral_bound=spectral_bound(pair.H),
        info=empirical_information(model, measure, theta),
        extra_blocks={},
    )
