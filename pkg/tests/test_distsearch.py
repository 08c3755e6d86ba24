import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_spd
from zeroorder.core import (
    BlockDiagonal,
    Full,
    NotPositiveDefiniteError,
    Objective,
    RngStream,
    ScaledIdentity,
    SearchBudget,
)
from zeroorder.distsearch import (
    Elitist,
    ExponentialAverage,
    Ordering,
    RawCentered,
    SearchDistribution,
    cem,
    cem_update,
    cma,
    cma_block_diagonal,
    cma_step,
    cma_update,
    compute_weights,
    default_ordering_weights,
    mppi,
    mppi_cma,
    mppi_update,
    predictive_sampling,
)
from zeroorder.estimators import SmoothingConfig, lse_gradient
from zeroorder.search import greedy_local_search


def sqnorm(dim):
    return Objective(batch=lambda X: (np.atleast_2d(X) ** 2).sum(axis=1), dim=dim)


def const(dim):
    return Objective(batch=lambda X: np.full(np.atleast_2d(X).shape[0], 1.5), dim=dim)


dyadic_values = st.lists(st.integers(-4096, 4096), min_size=2, max_size=40).map(lambda v: np.array(v) / 64.0)


class TestWeights:
    def test_uniform_on_ties(self):
        np.testing.assert_allclose(compute_weights([2.0] * 5, ExponentialAverage(0.3)), np.full(5, 0.2), rtol=1e-15)

    def test_hand_exponential(self):
        np.testing.assert_allclose(compute_weights([0.0, math.log(3.0)], ExponentialAverage(1.0)), [0.75, 0.25],
                                   rtol=1e-14)

    def test_elitist(self):
        np.testing.assert_array_equal(compute_weights([3, 1, 4, 2], Elitist(2)), [0.0, 0.5, 0.0, 0.5])

    def test_elitist_too_many(self):
        with pytest.raises(ValueError):
            compute_weights([1.0, 2.0], Elitist(3))

    def test_raw_centered_needs_baseline(self):
        with pytest.raises(ValueError):
            compute_weights([1.0, 2.0], RawCentered())

    def test_raw_centered_values(self):
        np.testing.assert_array_equal(compute_weights([1.0, 3.0], RawCentered(), baseline=2.0), [1.0, -1.0])

    def test_ordering_validation(self):
        with pytest.raises(ValueError):
            Ordering((0.2, 0.8))
        with pytest.raises(ValueError):
            Ordering((0.5, 0.4))

    def test_ordering_ties_break_by_index(self):
        w = compute_weights([1.0, 1.0, 0.0], Ordering((0.5, 0.3, 0.2)))
        np.testing.assert_array_equal(w, [0.3, 0.2, 0.5])

    def test_default_ordering_profile(self):
        w = default_ordering_weights(8)
        assert abs(w.sum() - 1.0) < 1e-15
        assert np.all(np.diff(w) <= 0) and w[-1] == 0.0

    @given(dyadic_values, st.floats(1e-3, 10.0))
    def test_exponential_positive_normalized(self, v, lam):
        w = compute_weights(v, ExponentialAverage(lam))
        assert np.all(w >= 0) and w.max() > 0
        assert abs(w.sum() - 1.0) < 1e-12

    @given(dyadic_values, st.integers(-1000, 1000))
    def test_translation_invariance(self, v, c):
        schemes = [ExponentialAverage(0.5), Ordering(), Elitist(1)]
        for s in schemes:
            assert np.array_equal(compute_weights(v, s), compute_weights(v + c, s))
        np.testing.assert_allclose(compute_weights(v, RawCentered(), baseline=0.25),
                                   compute_weights(v + c, RawCentered(), baseline=0.25 + c), rtol=0, atol=1e-9)

    @given(dyadic_values)
    def test_monotone_transform_invariance(self, v):
        for g in (np.exp, lambda t: t ** 3 + t, np.arctan):
            for s in (Ordering(), Elitist(max(1, v.size // 3))):
                assert np.array_equal(compute_weights(v, s), compute_weights(g(v), s))


class TestPredictiveSampling:
    @given(st.integers(0, 2 ** 32 - 1))
    def test_single_sample_equals_greedy(self, seed):
        f, cov, b = sqnorm(2), ScaledIdentity(0.3, 2), SearchBudget(max_iters=50)
        x1, t1 = predictive_sampling(f, [1.0, -2.0], cov, 1, b, RngStream(seed))
        x2, t2 = greedy_local_search(f, [1.0, -2.0], cov, b, RngStream(seed))
        np.testing.assert_array_equal(x1, x2)
        assert t1.column("current").tolist() == t2.column("current").tolist()

    def test_constant_never_moves(self):
        x, _ = predictive_sampling(const(3), [1.0, 2.0, 3.0], ScaledIdentity(1.0, 3), 16, SearchBudget(max_iters=20),
                                   RngStream(0))
        np.testing.assert_array_equal(x, [1.0, 2.0, 3.0])

    def test_sphere(self):
        finals = [predictive_sampling(sqnorm(2), [5.0, 5.0], ScaledIdentity(0.25, 2), 64,
                                      SearchBudget(max_iters=200), RngStream(s))[1].best_value for s in range(20)]
        assert np.median(finals) <= 1e-2


class TestMppi:
    def test_equal_values_give_sample_mean(self):
        X = RngStream(0).normal((10, 3))
        np.testing.assert_allclose(mppi_update(X, np.zeros(10), 0.1), X.mean(axis=0), rtol=1e-14)

    def test_zero_temperature_picks_argmin(self):
        X = RngStream(1).normal((10, 3))
        v = (X ** 2).sum(axis=1)
        np.testing.assert_array_equal(mppi_update(X, v, 1e-9), X[np.argmin(v)])

    @given(st.integers(1, 16), st.integers(2, 256), st.floats(1e-2, 10.0), st.integers(0, 2 ** 31))
    def test_natural_gradient_identity(self, n, K, lam, seed):
        r = np.random.default_rng(seed)
        Sigma = random_spd(n, r, cond=100.0)
        cov = Full(Sigma)
        x = r.standard_normal(n)
        f = Objective(batch=lambda X: np.sin(np.atleast_2d(X)).sum(axis=1) + (np.atleast_2d(X) ** 2).sum(axis=1),
                      dim=n)
        eps = cov.sample(RngStream(seed), K)
        values = f.batch(x + eps)
        direct = mppi_update(x + eps, values, lam)
        g = lse_gradient(f, x, SmoothingConfig(mu=1.0, lam=lam, cov=cov, n_samples=K), directions=eps).g
        via_gradient = x - Sigma @ g / lam
        scale = max(np.linalg.norm(direct), np.linalg.norm(x), 1.0)
        assert np.linalg.norm(direct - via_gradient) <= 1e-10 * scale

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            mppi(sqnorm(1), [0.0], ScaledIdentity(1.0, 1), 1, 0.1, SearchBudget(max_iters=1), RngStream(0))

    def test_trace_counts(self):
        _, t = mppi(sqnorm(2), [1.0, 1.0], ScaledIdentity(0.1, 2), 8, 0.1, SearchBudget(max_iters=5), RngStream(0))
        assert t.n_evals == 1 + 5 * 9


class TestCmaUpdate:
    def test_rank_one_is_not_positive_definite(self):
        dist = SearchDistribution(np.zeros(3), ScaledIdentity(1.0, 3))
        with pytest.raises(NotPositiveDefiniteError) as err:
            cma_update(dist, [[1.0, 2.0, 3.0]], [1.0], 1.0, 1.0)
        np.testing.assert_array_equal(err.value.weights, [1.0])

    def test_symmetric_pairs(self):
        d = np.array([[1.0, 0.5], [0.2, -1.0]])
        D = np.vstack([d, -d])
        dist = SearchDistribution(np.array([0.3, -0.7]), Full(np.array([[2.0, 0.3], [0.3, 1.0]])))
        new = cma_update(dist, D, np.full(4, 0.25), 0.5, 0.2)
        np.testing.assert_allclose(new.mean, dist.mean, rtol=1e-15, atol=1e-15)
        expected = 0.8 * dist.cov.dense() + 0.2 * (D.T @ D) / 4
        np.testing.assert_allclose(new.cov.dense(), expected, rtol=1e-14)

    def test_covariance_uses_old_mean(self):
        # Crafted instance: one sample carries most of the weight, so updating the
        # mean first would centre the scatter on the sample itself.
        dist = SearchDistribution(np.zeros(2), ScaledIdentity(1.0, 2))
        D = np.array([[2.0, 0.0], [0.0, 1.0]])
        w = np.array([0.9, 0.1])
        new = cma_update(dist, D, w, 1.0, 0.5)
        old_mean_first = 0.5 * np.eye(2) + 0.5 * (D.T * w) @ D
        x_new = w @ D
        dn = D - x_new
        new_mean_first = 0.5 * np.eye(2) + 0.5 * (dn.T * w) @ dn
        np.testing.assert_allclose(new.cov.dense(), old_mean_first, rtol=1e-15)
        assert not np.allclose(new.cov.dense(), new_mean_first)
        np.testing.assert_allclose(new.mean, x_new, rtol=1e-15)

    def test_positive_definite_preserved(self):
        # Independent updates from fresh well-conditioned covariances: with
        # non-negative normalized weights and step < 1 every factorization succeeds.
        r = RngStream(3)
        gen = np.random.default_rng(0)
        for it in range(1000):
            n = int(gen.integers(1, 8))
            K = int(gen.integers(1, 16))
            dist = SearchDistribution(gen.standard_normal(n), Full(random_spd(n, gen, cond=1e3)))
            D = dist.cov.sample(r, K)
            w = r.uniform(0.0, 1.0, K)
            w = w / w.sum()
            a = float(r.uniform(0.0, 0.999))
            new = cma_update(dist, D, w, a, a)  # raises if the factorization fails
            assert np.all(np.linalg.eigvalsh(new.cov.dense()) > 0)

    def test_separate_step_sizes(self):
        dist = SearchDistribution(np.zeros(2), ScaledIdentity(1.0, 2))
        D = np.array([[1.0, 0.0], [0.0, 1.0]])
        new = cma_update(dist, D, np.array([1.0, 0.0]), 0.5, 0.1)
        np.testing.assert_allclose(new.mean, [0.5, 0.0], rtol=1e-15)
        np.testing.assert_allclose(new.cov.dense(), np.diag([1.0, 0.9]), rtol=1e-15)

    def test_raw_centered_error_surfaces(self):
        # Uphill samples get negative weights; a large covariance step then
        # removes more variance than exists.
        f = Objective(batch=lambda X: 100.0 * (np.atleast_2d(X)[:, 0] ** 2), dim=2)
        dist = SearchDistribution(np.zeros(2), ScaledIdentity(1.0, 2))
        with pytest.raises(NotPositiveDefiniteError):
            for s in range(20):
                cma_step(f, dist, 4, RawCentered(), 0.5, 0.9, RngStream(s))


class TestCma:
    def test_mppi_cma_is_exponential_cma(self):
        dist = SearchDistribution(np.ones(3), ScaledIdentity(1.0, 3))
        b = SearchBudget(max_iters=10)
        d1, t1 = mppi_cma(sqnorm(3), dist, 16, 0.1, (1.0, 0.1), b, RngStream(4))
        d2, t2 = cma(sqnorm(3), dist, 16, ExponentialAverage(0.1), (1.0, 0.1), b, RngStream(4))
        assert t1.column("current").tolist() == t2.column("current").tolist()
        np.testing.assert_array_equal(d1.cov.dense(), d2.cov.dense())

    def test_sphere_target(self):
        # Steps and initial spread are the best settings found in a sweep; the
        # target sits below the fixed-temperature noise floor (see ledger).
        finals = []
        for s in range(6):
            dist = SearchDistribution(np.ones(8), ScaledIdentity(0.3, 8))
            _, t = mppi_cma(sqnorm(8), dist, 64, 0.1, (0.04, 0.03), SearchBudget(max_iters=300),
                            RngStream(s, stream_id=s))
            finals.append(t.records[-1].current)
        assert np.median(finals) <= 1e-4

    def test_sphere_noise_floor(self):
        # Near the optimum the weights are almost uniform and the mean does a
        # damped random walk whose stationary E|x|^2 is n * step_mean * lam / (4 K).
        n, K, lam, am = 8, 64, 0.1, 0.1
        finals = []
        for s in range(6):
            dist = SearchDistribution(np.ones(n), ScaledIdentity(1.0, n))
            _, t = mppi_cma(sqnorm(n), dist, K, lam, (am, am), SearchBudget(max_iters=300), RngStream(s, stream_id=s))
            finals.append(np.mean(t.column("current")[-100:]))
        floor = n * am * lam / (4 * K)
        assert 0.5 * floor <= np.median(finals) <= 2.0 * floor
        assert np.median(finals) < 8.0 * 1e-3

    def test_monotone_trace_and_counts(self):
        _, t = cma(sqnorm(2), SearchDistribution(np.ones(2), ScaledIdentity(1.0, 2)), 8, Ordering(), 0.5,
                   SearchBudget(max_iters=12), RngStream(0))
        assert np.all(np.diff(t.column("best")) <= 0)
        assert t.n_evals == 1 + 12 * 9


class TestBlockDiagonal:
    def test_single_block_matches_full(self):
        M = random_spd(4, np.random.default_rng(2))
        b = SearchBudget(max_iters=15)
        d1, t1 = cma_block_diagonal(sqnorm(4), SearchDistribution(np.ones(4), BlockDiagonal([M])), 16,
                                    ExponentialAverage(0.5), (1.0, 0.2), b, RngStream(7))
        d2, t2 = cma(sqnorm(4), SearchDistribution(np.ones(4), Full(M)), 16, ExponentialAverage(0.5), (1.0, 0.2), b,
                     RngStream(7))
        np.testing.assert_array_equal(d1.mean, d2.mean)
        np.testing.assert_array_equal(d1.cov.dense(), d2.cov.dense())
        assert t1.column("current").tolist() == t2.column("current").tolist()

    def test_two_blocks_match_factored_updates(self):
        r = np.random.default_rng(5)
        A, B = random_spd(2, r), random_spd(3, r)
        dist = SearchDistribution(r.standard_normal(5), BlockDiagonal([A, B]))
        D = dist.cov.sample(RngStream(1), 12)
        values = (dist.mean + D)[:, :2].sum(axis=1) ** 2 + np.cos(dist.mean + D)[:, 2:].sum(axis=1)
        w = compute_weights(values, ExponentialAverage(0.3))
        joint = cma_update(dist, D, w, 0.7, 0.2)
        a = cma_update(SearchDistribution(dist.mean[:2], Full(A)), D[:, :2], w, 0.7, 0.2)
        b = cma_update(SearchDistribution(dist.mean[2:], Full(B)), D[:, 2:], w, 0.7, 0.2)
        np.testing.assert_array_equal(joint.cov.blocks[0].dense(), a.cov.dense())
        np.testing.assert_array_equal(joint.cov.blocks[1].dense(), b.cov.dense())
        np.testing.assert_allclose(joint.mean, np.concatenate([a.mean, b.mean]), rtol=1e-14)

    def test_off_block_entries_are_zero(self):
        dist = SearchDistribution(np.ones(6), BlockDiagonal.uniform(3, np.eye(2)))
        d, _ = cma_block_diagonal(sqnorm(6), dist, 32, ExponentialAverage(0.5), (1.0, 0.3),
                                  SearchBudget(max_iters=20), RngStream(0))
        C = d.cov.dense()
        mask = np.kron(np.eye(3), np.ones((2, 2))) == 0
        assert np.all(C[mask] == 0.0)

    def test_requires_block_covariance(self):
        with pytest.raises(TypeError):
            cma_block_diagonal(sqnorm(2), SearchDistribution(np.ones(2), ScaledIdentity(1.0, 2)), 4, Ordering(),
                               0.5, SearchBudget(max_iters=1), RngStream(0))


class TestCem:
    def test_all_elites_symmetric_keeps_mean(self):
        d = np.array([[1.0, 0.0], [0.0, 2.0]])
        X = np.vstack([1.0 + d, 1.0 - d])
        mean, C, jitter = cem_update(X, np.arange(4.0), 4)
        np.testing.assert_allclose(mean, [1.0, 1.0], rtol=1e-15)
        np.testing.assert_allclose(C, np.diag([0.5, 2.0]), rtol=1e-15)
        assert jitter == 0.0

    def test_hand_example(self):
        X = np.array([[0.0, 0.0], [2.0, 0.0], [5.0, 5.0], [0.0, 2.0]])
        values = np.array([0.1, 0.2, 9.0, 3.0])
        mean, C, jitter = cem_update(X, values, 2)
        np.testing.assert_array_equal(mean, [1.0, 0.0])
        # Two elites in 2D give a rank-one scatter, so the jitter is added.
        assert jitter == pytest.approx(1e-9 * 0.5, rel=1e-15)
        np.testing.assert_allclose(C, np.array([[1.0, 0.0], [0.0, 0.0]]) + jitter * np.eye(2), rtol=1e-15)

    def test_jitter_recorded(self):
        _, t = cem(sqnorm(3), SearchDistribution(np.ones(3), ScaledIdentity(1.0, 3)), 16, 2, SearchBudget(max_iters=3),
                   RngStream(0))
        assert all(j > 0 for j in t.extra_column("jitter")[1:])

    def test_rejects_elite_count(self):
        with pytest.raises(ValueError):
            cem(sqnorm(2), SearchDistribution(np.ones(2), ScaledIdentity(1.0, 2)), 4, 5, SearchBudget(max_iters=1),
                RngStream(0))

    def test_sphere_target(self):
        # Plain CEM shrinks its covariance faster than the mean travels at
        # K_e / K = 1/8 and stalls short of the optimum (see ledger).
        dists = []
        for s in range(6):
            d, _ = cem(sqnorm(4), SearchDistribution(np.ones(4), ScaledIdentity(1.0, 4)), 64, 8,
                       SearchBudget(max_iters=100), RngStream(s, stream_id=s))
            dists.append(np.linalg.norm(d.mean))
        assert np.median(dists) <= 1e-3

    def test_sphere_progress(self):
        finals = []
        for s in range(6):
            _, t = cem(sqnorm(4), SearchDistribution(np.ones(4), ScaledIdentity(1.0, 4)), 64, 8,
                       SearchBudget(max_iters=100), RngStream(s, stream_id=s))
            finals.append(t.records[-1].current)
        assert np.median(finals) < 0.1 * 4.0
