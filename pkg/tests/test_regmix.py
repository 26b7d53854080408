import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from online_em import regmix
from online_em.core import DomainError, StepSchedule
from online_em.estimators import run_online_em
from online_em.regmix import RegMixParams as R, make_obs


def random_params(rng, m, d):
    return R(rng.dirichlet(np.ones(m) * 3), rng.normal(0, 2, (m, d)), rng.uniform(0.3, 4, m))


def test_posterior_weights_examples():
    th1 = R([1.0], [[1.0, 2.0]], [1.0])
    assert np.array_equal(regmix.posterior_weights(make_obs(3.0, [1.0, 0.5]), th1), [1.0])
    dup = R([0.5, 0.5], [[1.0, 2.0], [1.0, 2.0]], [2.0, 2.0])
    assert np.allclose(regmix.posterior_weights(make_obs(3.0, [1.0, 0.5]), dup), [0.5, 0.5])
    th = R([0.5, 0.5], [[1.0], [3.0]], [1.0, 1.0])
    w = regmix.posterior_weights(make_obs(1.0, [1.0]), th)
    assert w[0] == pytest.approx(1 / (1 + math.exp(-2)), abs=1e-15)
    assert w[0] == pytest.approx(0.8808, abs=1e-4)


def test_cond_expect_stat_examples():
    th = R([0.4, 0.6], [[1.0, 2.0], [0.0, 1.0]], [1.0, 2.0])
    z = np.array([1.0, 0.7])
    s1, s2, s3, s4 = regmix.unpack_stats(regmix.cond_expect_stat(make_obs(0.0, z), th), 2)
    assert np.all(s2 == 0) and np.all(s4 == 0)
    assert np.allclose(s3, s1[:, None, None] * np.outer(z, z))
    s = regmix.cond_expect_stat(make_obs(3.0, [1.0]), R([1.0], [[0.5]], [1.0]))
    assert np.array_equal(s, [1.0, 3.0, 1.0, 9.0])


def test_raw_statistic_rank_one_and_out_of_domain():
    rng = np.random.default_rng(0)
    for _ in range(50):
        th = random_params(rng, 2, 3)
        obs = make_obs(rng.normal(), rng.normal(size=3))
        s = regmix.cond_expect_stat(obs, th)
        _, _, s3, _ = regmix.unpack_stats(s, 3)
        assert all(np.linalg.matrix_rank(b) == 1 for b in s3)
        assert not regmix.in_domain(s, 3)


def test_blend_of_generic_observations_in_domain():
    rng = np.random.default_rng(1)
    for _ in range(50):
        d = 3
        th = random_params(rng, 2, d)
        obs = make_obs(rng.normal(size=30), rng.normal(size=(30, d)))
        s = regmix.cond_expect_stat(obs, th).mean(axis=0)
        _, s2, s3, s4 = regmix.unpack_stats(s, d)
        M = regmix._moment_matrices(s2, s3, s4)
        eig_ok = all(np.linalg.eigvalsh(Mj).min() > 0 for Mj in M)
        assert regmix.in_domain(s, d) == eig_ok
        assert regmix.in_domain(s, d)


def test_zero_mass_out_of_domain():
    s = regmix.pack_stats([0.0, 1.0], np.ones((2, 1)), np.ones((2, 1, 1)) * 2, [3.0, 3.0])
    assert "s1_j" in regmix.domain_violation(s, 1)


def test_singular_moment_matrix_names_the_block():
    s = regmix.pack_stats([0.5, 0.5], [[1.0], [1.0]], [[[1.0]], [[2.0]]], [1.0, 3.0])
    reason = regmix.domain_violation(s, 1)
    assert reason is not None and "M_1" in reason
    with pytest.raises(DomainError):
        regmix.mstep(s, 1)


def test_mstep_scalar_example():
    th = regmix.mstep(np.array([1.0, 2.0, 4.0, 1.5]), 1)
    assert th.beta[0, 0] == pytest.approx(0.5) and th.sigma2[0] == pytest.approx(0.5)


def test_mstep_matches_normal_equations():
    rng = np.random.default_rng(3)
    for d in (1, 2, 3, 5):
        z = rng.normal(size=(10, d))
        r = z @ rng.normal(size=d) + rng.normal(size=10)
        w = rng.uniform(0.2, 1.0, 10)
        w = w / w.sum()
        s = np.tensordot(w, regmix.cond_expect_stat(make_obs(r, z), R([1.0], np.zeros((1, d)), [1.0])), 1)
        th = regmix.mstep(s, d)
        beta = np.linalg.solve(z.T @ (w[:, None] * z), z.T @ (w * r))
        resid = r - z @ beta
        assert np.allclose(th.beta[0], beta, rtol=1e-10, atol=1e-10)
        assert th.sigma2[0] == pytest.approx(np.sum(w * resid ** 2), rel=1e-10)


def test_mstep_fixed_point_on_exact_statistics():
    """Statistics integrated exactly over the latent class and Gaussian noise at
    fixed design points return the generating parameter."""
    rng = np.random.default_rng(4)
    m, d = 2, 3
    th = random_params(rng, m, d)
    z = rng.normal(size=(40, d))
    zz = np.einsum("ni,nj->ij", z, z) / len(z)
    s1 = th.omega
    mean = z @ th.beta.T  # (n, m)
    s2 = th.omega[:, None] * (mean.T @ z) / len(z)
    s3 = th.omega[:, None, None] * zz
    s4 = th.omega * (np.mean(mean ** 2, axis=0) + th.sigma2)
    out = regmix.mstep(regmix.pack_stats(s1, s2, s3, s4), d)
    assert np.allclose(out.omega, th.omega, rtol=1e-12)
    assert np.allclose(out.beta, th.beta, rtol=1e-10, atol=1e-12)
    assert np.allclose(out.sigma2, th.sigma2, rtol=1e-10)


def test_loglik_examples():
    th = R([1.0], [[1.0, -2.0]], [1.0])
    z = np.array([0.3, 0.9])
    assert regmix.loglik(make_obs(z @ th.beta[0], z), th) == pytest.approx(-0.5 * math.log(2 * math.pi))
    dup = R([0.3, 0.7], [[1.0, -2.0], [1.0, -2.0]], [2.0, 2.0])
    one = R([1.0], [[1.0, -2.0]], [2.0])
    assert regmix.loglik(make_obs(0.4, z), dup) == pytest.approx(regmix.loglik(make_obs(0.4, z), one), abs=1e-14)
    th = R([0.3, 0.7], [[1.0, -2.0], [0.0, 1.0]], [2.0, 0.5])
    r = 0.4
    dens = sum(w * math.exp(-(r - z @ b) ** 2 / (2 * v)) / math.sqrt(2 * math.pi * v)
               for w, b, v in zip(th.omega, th.beta, th.sigma2))
    assert regmix.loglik(make_obs(r, z), th) == pytest.approx(math.log(dens), abs=1e-14)


def test_score_beta_examples():
    th = R([0.5, 0.5], [[1.0, 2.0], [1.0, 2.0]], [1.0, 3.0])
    z = np.array([1.0, 2.0])
    assert np.all(regmix.score_beta(make_obs(z @ th.beta[0], z), th) == 0)
    th1 = R([1.0], [[1.0]], [1.0])
    assert np.allclose(regmix.score_beta(make_obs(3.0, [1.0]), th1), [[2.0]])


def test_score_matches_finite_differences():
    rng = np.random.default_rng(5)
    for _ in range(100):
        m, d = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        th = random_params(rng, m, d)
        obs = make_obs(rng.normal(0, 3), rng.normal(size=d))
        x0 = regmix.to_free(th)
        g = regmix.score(obs, th)
        fd = np.empty_like(x0)
        for i in range(x0.size):
            h = 1e-6 * max(1.0, abs(x0[i]))
            e = np.eye(x0.size)[i] * h
            fd[i] = (regmix.loglik(obs, regmix.from_free(x0 + e, m, d))
                     - regmix.loglik(obs, regmix.from_free(x0 - e, m, d))) / (2 * h)
        assert np.allclose(g, fd, rtol=1e-5, atol=1e-5 * max(1.0, np.abs(g).max()))


def test_cond_neg_hessian_matches_monte_carlo_complete_loglik():
    """Closed-form conditional Hessian against finite differences of the
    posterior-weighted complete-data log-likelihood."""
    rng = np.random.default_rng(6)
    m, d = 2, 2
    th = random_params(rng, m, d)
    obs = make_obs(0.7, [1.0, -0.4])
    w = regmix.posterior_weights(obs, th)

    def q(x):
        t = regmix.from_free(x, m, d)
        resid = obs[0] - t.beta @ obs[1:]
        return np.sum(w * (np.log(t.omega) - 0.5 * np.log(t.sigma2) - 0.5 * resid ** 2 / t.sigma2))

    x0 = regmix.to_free(th)
    k = x0.size
    h = 1e-4
    hess = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            ei, ej = np.eye(k)[i] * h, np.eye(k)[j] * h
            hess[i, j] = (q(x0 + ei + ej) - q(x0 + ei - ej) - q(x0 - ei + ej) + q(x0 - ei - ej)) / (4 * h * h)
    assert np.allclose(regmix.cond_neg_hessian(obs, th), -hess, rtol=1e-5, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_variance_positive_whenever_in_domain(seed):
    rng = np.random.default_rng(seed)
    d = 3
    th = random_params(rng, 2, d)
    n = int(rng.integers(1, 8))
    obs = make_obs(rng.normal(size=n), rng.normal(size=(n, d)))
    s = regmix.cond_expect_stat(obs, th).mean(axis=0)
    if regmix.in_domain(s, d):
        assert np.all(regmix.mstep(s, d).sigma2 > 0)


def test_online_least_squares_single_component():
    rng = np.random.default_rng(7)
    n, d = 10_000, 3
    z = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
    r = z @ np.array([1.0, -2.0, 0.5]) + rng.normal(size=n)
    obs = make_obs(r, z)
    model = regmix.regmix_model(1, d)
    res = run_online_em(model, obs, StepSchedule(1.0, 1.0), theta0=R([1.0], np.zeros((1, d)), [1.0]))
    beta, *_ = np.linalg.lstsq(z, r, rcond=None)
    assert np.allclose(res.final_theta.beta[0], beta, rtol=1e-3)


def test_domain_closure_after_warm_start():
    from online_em.simgen import FLEXMIX_TRUTH, SeededStream, gen_regmix_flexmix

    obs, _ = gen_regmix_flexmix(10_020, SeededStream(3, 0))
    model = regmix.regmix_model(2, 3)
    res = run_online_em(model, obs, StepSchedule(1.0, 0.6), theta0=FLEXMIX_TRUTH)
    assert not res.failed
    assert regmix.in_domain(res.trajectory.steps[-1].s_hat, 3)
