import functools
import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import CountingObjective, quadratic, random_spd
from zeroorder.core import Full, NonFiniteValueError, Objective, RngStream, ScaledIdentity
from zeroorder.estimators import (
    SmoothingConfig,
    antithetic_directions,
    exponential_weights,
    fd_forward,
    lse_direction,
    lse_gradient,
    lse_value,
    random_coordinate,
    risk_averse_value,
    rs_central,
    rs_forward,
    smoothed_value,
    spsa,
    surrogate_lse,
    surrogate_rs,
)


def const(c, dim):
    return Objective(batch=lambda X: np.full(np.atleast_2d(X).shape[0], float(c)), dim=dim)


def linear(a):
    a = np.asarray(a, dtype=float)
    return Objective(batch=lambda X: np.atleast_2d(X) @ a, dim=a.size)


def sqnorm(dim):
    return Objective(batch=lambda X: (np.atleast_2d(X) ** 2).sum(axis=1), dim=dim)


class TestFiniteDifferences:
    def test_constant(self):
        assert np.array_equal(fd_forward(const(3.0, 4), np.ones(4), 0.1).g, np.zeros(4))

    def test_linear_exact(self):
        np.testing.assert_allclose(fd_forward(linear([1.0, 2.0]), [0.3, -0.7], 0.5).g, [1.0, 2.0], rtol=1e-14)

    def test_quadratic_bias(self):
        est = fd_forward(sqnorm(2), [1.0, 0.0], 0.1)
        np.testing.assert_allclose(est.g, [2.1, 0.1], rtol=1e-12)
        assert est.n_evals == 3

    def test_non_finite_reports_probe(self):
        f = Objective(batch=lambda X: np.where(np.atleast_2d(X)[:, 1] > 0.5, np.inf, 0.0), dim=2)
        with pytest.raises(NonFiniteValueError) as err:
            fd_forward(f, [0.0, 0.0], 1.0)
        np.testing.assert_array_equal(err.value.point, [0.0, 1.0])

    def test_mu_must_be_positive(self):
        with pytest.raises(ValueError):
            fd_forward(sqnorm(2), [0.0, 0.0], 0.0)


class TestRandomCoordinate:
    def test_constant(self):
        for j in range(3):
            assert np.array_equal(random_coordinate(const(1.0, 3), np.zeros(3), 0.1, coordinate=j).g, np.zeros(3))

    def test_linear(self):
        np.testing.assert_allclose(random_coordinate(linear([1.0, 2.0]), [0.0, 0.0], 0.1, coordinate=1).g,
                                   [0.0, 2.0], rtol=1e-12)

    def test_enumerated_average(self):
        gs = [random_coordinate(sqnorm(2), [1.0, 1.0], 0.1, coordinate=j).g for j in range(2)]
        np.testing.assert_allclose(np.mean(gs, axis=0), [1.05, 1.05], rtol=1e-12)

    @given(st.integers(1, 6), st.integers(0, 10_000))
    def test_bias_law(self, n, seed):
        r = np.random.default_rng(seed)
        H = random_spd(n, r)
        a = r.standard_normal(n)
        x = r.standard_normal(n)
        mu = float(r.uniform(0.01, 1.0))
        f, grad = quadratic(H, a)
        avg = np.mean([random_coordinate(f, x, mu, coordinate=j).g for j in range(n)], axis=0)
        expected = (grad(x) + 0.5 * mu * np.diag(H)) / n
        np.testing.assert_allclose(avg, expected, rtol=1e-8, atol=1e-8)

    def test_draw_is_uniform(self):
        r = RngStream(0)
        hits = [np.flatnonzero(random_coordinate(linear([1.0, 1.0, 1.0]), np.zeros(3), 1.0, r).g)[0]
                for _ in range(3000)]
        counts = np.bincount(hits, minlength=3)
        assert counts.min() > 900
        assert random_coordinate(linear([1.0]), [0.0], 1.0, RngStream(1)).n_evals == 2


class TestSpsa:
    def test_constant(self):
        assert np.array_equal(spsa(const(2.0, 3), np.ones(3), 0.1, RngStream(0)).g, np.zeros(3))

    def test_linear(self):
        np.testing.assert_allclose(spsa(linear([1.0, 2.0]), [0.0, 0.0], 0.1, delta=[1.0, -1.0]).g, [-1.0, 1.0],
                                   rtol=1e-12)

    @given(st.integers(1, 8), st.integers(0, 10_000))
    def test_exhaustive_average_is_gradient(self, n, seed):
        r = np.random.default_rng(seed)
        H, a, x = random_spd(n, r), r.standard_normal(n), r.standard_normal(n)
        f, grad = quadratic(H, a)
        deltas = itertools.product([-1.0, 1.0], repeat=n)
        avg = np.mean([spsa(f, x, 0.3, delta=np.array(d)).g for d in deltas], axis=0)
        np.testing.assert_allclose(avg, grad(x), rtol=1e-9, atol=1e-9)

    def test_signs_are_fair(self):
        r = RngStream(4)
        D = np.array([spsa(linear([1.0, 1.0]), np.zeros(2), 1.0, r).g for _ in range(4000)])
        # g = (d1 + d2) d for a = (1, 1); only equal signs give non-zero entries.
        assert abs((D[:, 0] != 0).mean() - 0.5) < 0.05


class TestRandomizedSmoothing:
    def test_constant(self):
        cfg = SmoothingConfig(mu=0.5, n_samples=7)
        for est in (rs_forward, rs_central):
            assert np.array_equal(est(const(5.0, 3), np.ones(3), cfg, RngStream(0)).g, np.zeros(3))

    def test_linear_single_direction(self):
        cfg = SmoothingConfig(mu=0.1)
        g = rs_forward(linear([3.0, 4.0]), [0.0, 0.0], cfg, directions=[[1.0, 0.0]]).g
        np.testing.assert_allclose(g, [3.0, 0.0], rtol=1e-12)
        gc = rs_central(linear([3.0, 4.0]), [0.0, 0.0], cfg, directions=[[1.0, 0.0]]).g
        np.testing.assert_allclose(gc, g, rtol=1e-12)

    def test_eval_counts(self):
        cfg = SmoothingConfig(mu=0.1, n_samples=9)
        f = CountingObjective(lambda X: (X ** 2).sum(axis=1), 3)
        assert rs_forward(f, np.ones(3), cfg, RngStream(0)).n_evals == f.calls == 10
        f.calls = 0
        assert rs_central(f, np.ones(3), cfg, RngStream(0)).n_evals == f.calls == 18
        f.calls = 0
        assert lse_gradient(f, np.ones(3), SmoothingConfig(mu=0.1, n_samples=9, lam=1.0), RngStream(0)).n_evals == 9
        assert f.calls == 9

    def test_forward_unbiased_on_quadratic(self):
        r = np.random.default_rng(3)
        H, a, x = random_spd(5, r), r.standard_normal(5), r.standard_normal(5)
        f, grad = quadratic(H, a)
        cfg = SmoothingConfig(mu=0.2)
        eps = ScaledIdentity(1.0, 5).sample(RngStream(8), 100_000)
        vals = f.batch(x + 0.2 * eps)
        terms = ((vals - f.batch(x[None, :]))[:, None] / 0.2) * eps
        se = terms.std(axis=0, ddof=1) / math.sqrt(len(terms))
        g = rs_forward(f, x, cfg, directions=eps).g
        np.testing.assert_allclose(g, terms.mean(axis=0), rtol=1e-10)
        assert np.all(np.abs(g - grad(x)) <= 3 * se)

    def test_mean_of_single_sample_estimates(self):
        cfg = SmoothingConfig(mu=0.3)
        f = sqnorm(3)
        eps = RngStream(2).normal((6, 3))
        single = [rs_forward(f, np.ones(3), cfg, directions=e[None, :]).g for e in eps]
        np.testing.assert_allclose(rs_forward(f, np.ones(3), cfg, directions=eps).g, np.mean(single, axis=0),
                                   rtol=1e-12)

    def test_non_identity_covariance_uses_inverse(self):
        M = np.array([[2.0, 0.5], [0.5, 1.0]])
        cfg = SmoothingConfig(mu=0.1, cov=Full(M))
        eps = np.array([[0.4, -0.2]])
        g = rs_forward(linear([1.0, 1.0]), [0.0, 0.0], cfg, directions=eps).g
        np.testing.assert_allclose(g, (eps[0].sum()) * np.linalg.solve(M, eps[0]), rtol=1e-12)

    def test_central_monomial_expansion(self):
        cube = Objective(batch=lambda X: np.atleast_2d(X)[:, 0] ** 3, dim=1)
        cfg = SmoothingConfig(mu=1.0)
        for e in (0.5, -1.3, 2.0):
            d = [[e]]
            np.testing.assert_allclose(rs_central(cube, [0.0], cfg, directions=d).g, [e ** 4], rtol=1e-12)
            np.testing.assert_allclose(rs_forward(cube, [0.0], cfg, directions=d).g, [e ** 4], rtol=1e-12)
            np.testing.assert_allclose(rs_central(cube, [1.0], cfg, directions=d).g, [3 * e ** 2 + e ** 4],
                                       rtol=1e-12)


class TestLseGradient:
    def test_constant_antithetic_is_zero(self):
        cfg = SmoothingConfig(mu=0.5, lam=1.0)
        d = antithetic_directions(ScaledIdentity(1.0, 3), RngStream(0), 1)
        assert np.array_equal(lse_gradient(const(2.0, 3), np.zeros(3), cfg, directions=d).g, np.zeros(3))

    def test_hand_evaluated_weights(self):
        f = Objective(batch=lambda X: math.log(3.0) * np.atleast_2d(X)[:, 1], dim=2)
        cfg = SmoothingConfig(mu=1.0, lam=1.0, n_samples=2)
        est = lse_gradient(f, [0.0, 0.0], cfg, directions=[[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(est.g, [-0.75, -0.25], rtol=1e-14)
        np.testing.assert_allclose(est.aux, [0.0, math.log(3.0)], rtol=1e-15)
        np.testing.assert_allclose(exponential_weights(est.aux, 1.0), [0.75, 0.25], rtol=1e-14)

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            lse_gradient(sqnorm(2), [0.0, 0.0], SmoothingConfig(lam=1.0), RngStream(0))

    def test_large_temperature_limit(self):
        r = RngStream(5)
        eps = r.normal((50, 3))
        vals = (eps ** 2).sum(axis=1) + eps[:, 0]
        limit = ((vals - vals.mean())[:, None] * eps).mean(axis=0)
        a = -1e6 * lse_direction(vals, 1e6, eps)
        b = -1e9 * lse_direction(vals, 1e9, eps)
        np.testing.assert_allclose(a, b, rtol=1e-5, atol=1e-6)
        np.testing.assert_allclose(b, limit, rtol=1e-6, atol=1e-8)

    def test_small_temperature_picks_best(self):
        eps = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        vals = np.array([3.0, 1.0, 2.0])
        w = exponential_weights(vals, 1e-3)
        np.testing.assert_allclose(w, [0.0, 1.0, 0.0], atol=1e-300)
        assert np.all(np.isfinite(lse_direction(vals, 1e-8, eps)))

    def test_infinite_temperature_matches_rs_expectation(self):
        r = np.random.default_rng(9)
        H, a, x = random_spd(4, r), r.standard_normal(4), r.standard_normal(4)
        f, grad = quadratic(H, a)
        mu = 0.5
        eps = RngStream(11).normal((100_000, 4))
        g_lse = lse_gradient(f, x, SmoothingConfig(mu=mu, n_samples=len(eps)), directions=eps).g
        vals = f.batch(x + mu * eps)
        terms = ((vals - f.batch(x[None, :]))[:, None] / mu) * eps
        se = terms.std(axis=0, ddof=1) / math.sqrt(len(eps))
        g_rs = rs_forward(f, x, SmoothingConfig(mu=mu), directions=eps).g
        assert np.all(np.abs(g_lse - g_rs) <= 3 * se)
        assert np.all(np.abs(g_lse - grad(x)) <= 3 * se)


def _dyadic(X):
    # Values on a coarse dyadic grid so that adding a constant is exact.
    X = np.atleast_2d(X)
    return np.round(((X - 0.3) ** 2).sum(axis=1) * 64.0) / 64.0


class TestTranslationInvariance:
    @pytest.mark.parametrize("name", ["fd", "coord", "spsa", "rs_forward", "rs_central", "lse", "lse_inf"])
    @given(seed=st.integers(0, 2 ** 31), shift=st.integers(-64, 64))
    def test_bit_identical(self, name, seed, shift):
        c = float(shift)
        f = Objective(batch=_dyadic, dim=3)
        fc = Objective(batch=lambda X: _dyadic(X) + c, dim=3)
        cfg = SmoothingConfig(mu=0.25, n_samples=6, lam=0.7 if name == "lse" else math.inf)
        est = {
            "fd": functools.partial(fd_forward, mu=0.25),
            "coord": functools.partial(random_coordinate, mu=0.25),
            "spsa": functools.partial(spsa, mu=0.25),
            "rs_forward": functools.partial(rs_forward, cfg=cfg),
            "rs_central": functools.partial(rs_central, cfg=cfg),
            "lse": functools.partial(lse_gradient, cfg=cfg),
            "lse_inf": functools.partial(lse_gradient, cfg=cfg),
        }[name]
        x = np.array([0.5, -0.25, 1.0])
        g1 = est(f, x, rng=RngStream(seed))
        g2 = est(fc, x, rng=RngStream(seed))
        if name == "lse_inf":
            # The centered form subtracts a floating-point mean, which is only
            # shift-exact up to rounding of the mean itself.
            np.testing.assert_allclose(g1.g, g2.g, rtol=1e-12, atol=1e-12)
        else:
            assert np.array_equal(g1.g, g2.g)


finite_values = arrays(np.float64, st.integers(1, 20), elements=st.floats(-50, 50))


class TestSurrogates:
    def test_constant_exact(self):
        cfg = SmoothingConfig(mu=1.0, lam=0.3, n_samples=17)
        assert surrogate_rs(const(1.7, 2), np.zeros(2), cfg, RngStream(0)) == 1.7
        assert surrogate_lse(const(1.7, 2), np.zeros(2), cfg, RngStream(0)) == 1.7

    def test_hand_values(self):
        v = [0.0, math.log(4.0)]
        assert lse_value(v, 1.0) == pytest.approx(math.log(8 / 5), rel=1e-15)
        assert smoothed_value(v) == pytest.approx(math.log(4.0) / 2, rel=1e-15)

    def test_lse_needs_finite_temperature(self):
        with pytest.raises(ValueError):
            surrogate_lse(sqnorm(1), [0.0], SmoothingConfig(n_samples=3), RngStream(0))

    @given(finite_values)
    def test_large_temperature_close_to_mean(self, v):
        spread = float(v.max() - v.min())
        assert abs(lse_value(v, 1e6) - smoothed_value(v)) <= 1e-4 * spread + 1e-12

    @given(finite_values, st.floats(1e-3, 1e3))
    def test_jensen(self, v, lam):
        lo, mid, hi = lse_value(v, lam), smoothed_value(v), risk_averse_value(v, lam)
        tol = 1e-12 * (1 + np.abs(v).max())
        assert lo <= mid + tol and mid <= hi + tol
        if v.max() - v.min() > 1e-6 * max(lam, 1.0):
            assert lo < mid < hi

    @given(finite_values, st.floats(1e-3, 1e3), st.floats(1.01, 100.0))
    def test_monotone_in_temperature(self, v, lam, factor):
        tol = 1e-12 * (1 + np.abs(v).max())
        assert lse_value(v, lam) <= lse_value(v, lam * factor) + tol
        assert risk_averse_value(v, lam) >= risk_averse_value(v, lam * factor) - tol

    def test_extreme_values_stay_finite(self):
        v = np.array([0.0, 1e6, 1e8])
        # Only the extreme sample survives: the value is min + lam * log(K).
        assert lse_value(v, 1e-6) == pytest.approx(1e-6 * math.log(3.0), rel=1e-12)
        assert risk_averse_value(v, 1e-6) == pytest.approx(1e8 - 1e-6 * math.log(3.0), abs=1e-8)

    def test_shared_samples(self):
        cfg = SmoothingConfig(mu=0.5, lam=0.2, n_samples=500)
        f = sqnorm(2)
        d = RngStream(1).normal((500, 2))
        assert surrogate_lse(f, np.ones(2), cfg, directions=d) < surrogate_rs(f, np.ones(2), cfg, directions=d)


class TestConfig:
    @pytest.mark.parametrize("kw", [{"mu": 0.0}, {"mu": -1.0}, {"lam": 0.0}, {"n_samples": 0}, {"mu": math.inf}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            SmoothingConfig(**kw)

    def test_covariance_dim_checked(self):
        with pytest.raises(ValueError):
            SmoothingConfig(cov=ScaledIdentity(1.0, 2)).covariance(3)
