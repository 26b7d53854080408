"""Seeded data generators for the Poisson mixture and the regression-mixture design."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import poisson
from .poisson import PoissonMixtureParams
from .regmix import RegMixParams, make_obs

GENERATOR_ID = "numpy.random.PCG64 seeded by SeedSequence(entropy=base_seed, spawn_key=(replica_index,))"
NORMAL_METHOD = "numpy Generator.normal (256-layer ziggurat)"
POISSON_METHOD = "numpy Generator.poisson (multiplication method for lambda < 10, PTRS transformed rejection above)"

# Ground truth of the two-class quadratic regression design.
FLEXMIX_TRUTH = RegMixParams(
    omega=np.array([0.5, 0.5]),
    beta=np.array([[0.0, 5.0, 0.0], [15.0, 10.0, -10.0]]),
    sigma2=np.array([81.0, 81.0]),
)


@dataclass(frozen=True)
class SeededStream:
    base_seed: int
    replica_index: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.base_seed, spawn_key=(self.replica_index,))
        return np.random.Generator(np.random.PCG64(seq))


def gen_regmix_flexmix(n: int, stream: SeededStream):
    """Two equally likely classes, U ~ Unif(0, 10), V ~ N(0, 81):

    class 1: R = 5U + V; class 2: R = 15 + 10U - U^2 + V; regressors Z = (1, U, U^2/10).

    Returns ``(obs_rows, classes)``; rows are ``[r, 1, u, u^2/10]``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = stream.generator()
    classes = rng.integers(1, 3, size=n)
    u = rng.uniform(0.0, 10.0, size=n)
    v = rng.normal(0.0, 9.0, size=n)
    r = np.where(classes == 1, 5.0 * u + v, 15.0 + 10.0 * u - u ** 2 + v)
    z = np.column_stack([np.ones(n), u, u ** 2 / 10.0])
    return make_obs(r, z), classes.astype(np.int64)


def gen_poisson_mixture(n: int, theta: PoissonMixtureParams, stream: SeededStream):
    if n < 1:
        raise ValueError("n must be >= 1")
    theta.validate()
    return poisson.sample(theta, n, stream.generator())


def dump_regmix_csv(path, obs: np.ndarray, classes: np.ndarray) -> None:
    d = obs.shape[1] - 1
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["r"] + [f"z{i}" for i in range(d)] + ["true_class"])
        for row, c in zip(obs, classes):
            w.writerow([repr(float(x)) for x in row] + [int(c)])


def dump_poisson_csv(path, y: np.ndarray, classes: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["y", "true_class"])
        for yi, c in zip(y, classes):
            w.writerow([int(yi), int(c)])


def load_dataset_csv(path):
    """Load either dataset format; returns ``(data, classes)``."""
    with open(Path(path), newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    classes = np.array([int(r[-1]) for r in body], dtype=np.int64)
    if header[0] == "y":
        return np.array([int(r[0]) for r in body], dtype=np.int64), classes
    return np.array([[float(x) for x in r[:-1]] for r in body]), classes
