import math

import numpy as np
import pytest

from online_em import poisson
from online_em.asymptotics import (
    SingularInformationWarning,
    StabilityError,
    StableMatrixPair,
    WeightedSample,
    assemble_pair,
    asymptotic_report,
    averaged_covariance,
    complete_fim_pi,
    empirical_information,
    exact_poisson_measure,
    kl_surrogate,
    lyapunov_zeta,
    mean_field,
    solve_lyapunov,
    surrogate_hessian,
)
from online_em.core import StepSchedule, expected_stat
from online_em.estimators import run_batch_em, run_online_em_batch
from online_em.poisson import PoissonMixtureParams as P
from online_em.simgen import SeededStream, gen_poisson_mixture

TRUTH = P([0.4, 0.6], [2.0, 8.0])
POIS2 = poisson.poisson_mixture_model(2)


def kron_lyapunov(A, G):
    d = A.shape[0]
    eye = np.eye(d)
    K = np.kron(eye, A) + np.kron(A, eye)
    return np.linalg.solve(K, -G.reshape(-1, order="F")).reshape(d, d, order="F")


def test_lyapunov_examples():
    assert np.allclose(solve_lyapunov(StableMatrixPair(-np.eye(2), np.eye(2))), np.eye(2) / 2)
    assert np.allclose(solve_lyapunov(StableMatrixPair(np.diag([-1.0, -2.0]), np.diag([2.0, 4.0]))), np.eye(2))
    assert np.allclose(solve_lyapunov(StableMatrixPair([[-2.0]], [[2.0]]), zeta=1.0), [[1.0]])


def test_lyapunov_against_kronecker_system():
    rng = np.random.default_rng(0)
    for d in range(1, 7):
        A = rng.normal(size=(d, d))
        H = A - (np.max(np.linalg.eigvals(A).real) + 0.5) * np.eye(d)
        B = rng.normal(size=(d, d))
        G = B @ B.T
        sigma = solve_lyapunov(StableMatrixPair(H, G))
        assert np.allclose(sigma, kron_lyapunov(H, G), rtol=1e-8, atol=1e-10)
        assert np.allclose(sigma, sigma.T)
        assert np.linalg.eigvalsh(sigma).min() > -1e-10


def test_lyapunov_stability_errors():
    with pytest.raises(StabilityError):
        StableMatrixPair(np.diag([-1.0, 0.5]), np.eye(2))
    pair = StableMatrixPair([[-0.3]], [[1.0]])
    with pytest.raises(StabilityError):
        solve_lyapunov(pair, zeta=0.5)
    with pytest.raises(ValueError):
        solve_lyapunov(pair, zeta=-1.0)


def test_stable_pair_validates_gamma():
    with pytest.raises(ValueError):
        StableMatrixPair(-np.eye(2), [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        StableMatrixPair(-np.eye(2), np.diag([1.0, -1.0]))


def test_averaged_covariance_examples():
    assert np.allclose(averaged_covariance(StableMatrixPair(-np.eye(3), np.eye(3))), np.eye(3))
    rng = np.random.default_rng(1)
    H = -np.eye(3) + 0.2 * rng.normal(size=(3, 3))
    B = rng.normal(size=(3, 3))
    G = B @ B.T
    base = averaged_covariance(StableMatrixPair(H, G))
    assert np.allclose(averaged_covariance(StableMatrixPair(H, 3.5 * G)), 3.5 * base)
    Hinv = np.linalg.inv(H)
    assert np.allclose(base, Hinv @ G @ Hinv.T)


def test_lyapunov_zeta():
    assert lyapunov_zeta(StepSchedule(1.0, 0.6)) == 0.0
    assert lyapunov_zeta(StepSchedule(0.5, 1.0)) == 1.0


def test_zeta_for_harmonic_steps_matches_simulation():
    """m=1 Poisson with gamma_n = gamma0 / n: n * Var(lambda_n) / gamma0 tends to
    the Lyapunov solution with zeta = 1 / (2 gamma0)."""
    lam, gamma0, n, reps = 3.0, 0.75, 2000, 4000
    model = poisson.poisson_mixture_model(1)
    th = P([1.0], [lam])
    rng = np.random.default_rng(2)
    streams = rng.poisson(lam, size=(reps, n))
    sched = StepSchedule(gamma0, 1.0)
    res = run_online_em_batch(model, streams, sched, th, s0=poisson.expected_stat_at(th), warmup=0)
    measured = n * res.final_flat[:, 1].var() / gamma0
    measure = exact_poisson_measure(th)
    sigma = solve_lyapunov(assemble_pair(model, measure, th), lyapunov_zeta(sched))[0, 0]
    assert sigma == pytest.approx(lam / (2 * (1 - 1 / (2 * gamma0))), rel=1e-6)
    # relative sd of a variance estimate from `reps` draws is about sqrt(2 / reps)
    assert abs(measured / sigma - 1) < 3 * math.sqrt(2 / reps)


def test_empirical_information_single_component():
    model = poisson.poisson_mixture_model(1)
    th = P([1.0], [2.0])
    y = np.random.default_rng(3).poisson(2.0, 1_000_000)
    info = empirical_information(model, y, th)
    assert info.shape == (1, 1)
    assert info[0, 0] == pytest.approx(0.5, rel=0.01)


def test_empirical_information_single_observation_rank_one():
    with pytest.warns(SingularInformationWarning):
        info = empirical_information(POIS2, np.array([4]), TRUTH)
    assert np.linalg.matrix_rank(info) == 1
    g = poisson.score(4, TRUTH)
    assert np.allclose(info, np.outer(g, g))


def test_complete_fim_pi_matches_complete_fim():
    y, _ = gen_poisson_mixture(200_000, TRUTH, SeededStream(4))
    est = complete_fim_pi(POIS2, y, TRUTH)
    assert np.allclose(est, est.T)
    assert np.allclose(est, poisson.complete_fim(TRUTH), rtol=0.03)
    exact = complete_fim_pi(POIS2, exact_poisson_measure(TRUTH), TRUTH)
    assert np.allclose(exact, poisson.complete_fim(TRUTH), rtol=1e-10)
    one = complete_fim_pi(poisson.poisson_mixture_model(1), np.array([0, 1, 5, 2]), P([1.0], [2.0]))
    assert one[0, 0] == pytest.approx(2.0 / 4.0)


def test_mean_field_examples():
    model = poisson.poisson_mixture_model(1)
    s = np.array([0.6, 3.0])
    h = mean_field(model, np.full(10, 7), s)
    assert np.allclose(h, [1 - 0.6, 7 - 3.0])
    rng = np.random.default_rng(5)
    y, _ = gen_poisson_mixture(500, TRUTH, SeededStream(5))
    for _ in range(20):
        s = poisson.expected_stat_at(P(rng.dirichlet([2, 2]), rng.uniform(0.5, 10, 2)))
        h = mean_field(POIS2, y, s)
        assert (h + s)[0::2].sum() == pytest.approx(1.0, abs=1e-14)


def test_mean_field_exact_root():
    s_star = poisson.expected_stat_at(TRUTH)
    assert np.linalg.norm(mean_field(POIS2, exact_poisson_measure(TRUTH), s_star)) <= 1e-6


def test_kl_surrogate_minimised_at_truth():
    measure = exact_poisson_measure(TRUTH)
    k0 = kl_surrogate(POIS2, measure, TRUTH)
    entropy = -np.sum(measure.weights * poisson.loglik(measure.obs, TRUTH))
    assert k0 == pytest.approx(entropy, rel=1e-12)
    rng = np.random.default_rng(6)
    for _ in range(30):
        other = poisson.from_free(poisson.to_free(TRUTH) + rng.normal(0, 0.05, 3))
        assert kl_surrogate(POIS2, measure, other) > k0


def test_kl_surrogate_difference_is_kl_difference():
    measure = exact_poisson_measure(TRUTH)
    logpi = poisson.loglik(measure.obs, TRUTH)
    a, b = P([0.5, 0.5], [2.5, 7.0]), P([0.3, 0.7], [1.5, 9.0])

    def kl(th):
        return np.sum(measure.weights * (logpi - poisson.loglik(measure.obs, th)))

    diff = kl_surrogate(POIS2, measure, a) - kl_surrogate(POIS2, measure, b)
    assert diff == pytest.approx(kl(a) - kl(b), rel=1e-10)


def test_information_matrix_equality():
    y, _ = gen_poisson_mixture(400_000, TRUTH, SeededStream(7))
    emp = empirical_information(POIS2, y, TRUTH)
    hess = surrogate_hessian(POIS2, exact_poisson_measure(TRUTH), TRUTH)
    assert np.allclose(emp, hess, rtol=0.05, atol=0.02 * np.abs(hess).max())


def test_mean_field_root_is_stationary_point():
    """Batch EM converges to a root of the dataset mean field; the surrogate
    gradient vanishes at the corresponding parameter."""
    y, _ = gen_poisson_mixture(3000, TRUTH, SeededStream(8))
    th, _ = run_batch_em(POIS2, y, P([0.5, 0.5], [1.0, 5.0]), n_iter=3000)
    s_hat = expected_stat(POIS2, y, th)
    assert np.linalg.norm(mean_field(POIS2, y, s_hat)) < 1e-10
    x0 = poisson.to_free(th)
    grad = np.empty_like(x0)
    for i in range(x0.size):
        e = np.eye(x0.size)[i] * 1e-5
        grad[i] = (kl_surrogate(POIS2, y, poisson.from_free(x0 + e))
                   - kl_surrogate(POIS2, y, poisson.from_free(x0 - e))) / 2e-5
    assert np.linalg.norm(grad) < 1e-6


def test_well_specified_covariances():
    measure = exact_poisson_measure(TRUTH)
    pair = assemble_pair(POIS2, measure, TRUTH)
    info = empirical_information(POIS2, measure, TRUTH)
    ic = poisson.complete_fim(TRUTH)
    assert np.allclose(averaged_covariance(pair), np.linalg.inv(info), rtol=1e-5)
    # the Lyapunov solution at zeta = 0 is half the inverse complete-data information
    assert np.allclose(solve_lyapunov(pair), np.linalg.inv(ic) / 2, rtol=1e-5, atol=1e-6)


def test_report_csv(tmp_path):
    rep = asymptotic_report(POIS2, exact_poisson_measure(TRUTH), TRUTH)
    assert np.allclose(rep.Sigma_avg, rep.Sigma_avg.T)
    assert np.linalg.eigvalsh(rep.Sigma).min() > 0
    assert rep.spectral_bound > 0
    rep.to_csv(tmp_path / "a.csv")
    text = (tmp_path / "a.csv").read_text()
    for name in ("# H", "# Gamma", "# Sigma", "# Sigma_avg", "# correlations", "# std_devs"):
        assert name + "\n" in text


def test_weighted_sample_validation():
    with pytest.raises(ValueError):
        WeightedSample(np.arange(3), np.ones(2))
    with pytest.raises(ValueError):
        WeightedSample(np.arange(2), np.array([1.0, -1.0]))
    assert abs(exact_poisson_measure(TRUTH).weights.sum() - 1) < 1e-15
