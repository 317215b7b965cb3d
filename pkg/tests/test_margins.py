import json

import numpy as np
import pytest

from nsadf.basis import BasisSpec
from nsadf.errors import DegenerateSampleError, SingularDesignError
from nsadf.margins import (GpdParams, MarginalModel, NsGpdParams, fit_marginal, from_exponential,
                           from_residuals, gpd_cdf, gpd_fit, gpd_fit_ns, gpd_loglik,
                           gpd_quantile_sf, locscale_fit, quantile_from_sf, residuals, semi_empirical_cdf,
                           semi_empirical_quantile, to_exponential, XI_GRID)


def gpd_sample(rng, n, tau, xi):
    u = rng.uniform(size=n)
    return gpd_quantile_sf(u, tau, xi)


# gpd_cdf


def test_gpd_cdf_origin_and_median():
    assert gpd_cdf(0.0, (2.0, 0.3)) == 0.0
    assert gpd_cdf(1.7 * np.log(2), (1.7, 0.0)) == pytest.approx(0.5, abs=1e-14)


def test_gpd_cdf_matches_quadrature_oracle(oracles):
    assert gpd_cdf(1.0, GpdParams(1.0, 0.5)) == pytest.approx(oracles["gpd_cdf_x1_tau1_xi0.5"],
                                                              abs=1e-12)
    assert gpd_cdf(1.0, (1.0, 0.5)) == pytest.approx(0.5556, abs=1e-4)
    assert gpd_cdf(2.0, (1.5, -0.2)) == pytest.approx(oracles["gpd_cdf_x2_tau1.5_xi-0.2"],
                                                      abs=1e-12)


def test_gpd_cdf_bounded_tail_and_bad_scale():
    assert gpd_cdf(10.0, (1.0, -0.5)) == 1.0
    with pytest.raises(ValueError):
        gpd_cdf(1.0, (0.0, 0.1))
    with pytest.raises(ValueError):
        GpdParams(-1.0, 0.0)


# gpd_fit


def test_gpd_fit_exponential_sample():
    x = np.random.default_rng(1).standard_exponential(10_000)
    fit = gpd_fit(x)
    assert 0.95 <= fit.tau <= 1.05
    assert abs(fit.xi) < 0.05
    assert fit.converged


def test_gpd_fit_gpd_sample():
    x = gpd_sample(np.random.default_rng(2), 20_000, 2.0, 0.2)
    fit = gpd_fit(x)
    assert abs(fit.tau - 2.0) < 0.1
    assert abs(fit.xi - 0.2) < 0.1


def test_gpd_fit_degenerate_and_short():
    with pytest.raises(DegenerateSampleError):
        gpd_fit(np.full(50, 1.3))
    with pytest.raises(ValueError):
        gpd_fit(np.ones(5))


def test_gpd_fit_beats_reference_grid_and_score_vanishes():
    x = gpd_sample(np.random.default_rng(3), 3000, 1.3, 0.1)
    fit = gpd_fit(x)
    taus = np.exp(np.linspace(np.log(0.3), np.log(5), 60))
    grid_best = max(gpd_loglik(x, t, xi) for t in taus for xi in XI_GRID)
    assert fit.loglik >= grid_best
    h = 1e-6
    g = []
    for d in (np.array([h * fit.tau, 0]), np.array([0, h])):
        up = gpd_loglik(x, fit.tau + d[0], fit.xi + d[1])
        dn = gpd_loglik(x, fit.tau - d[0], fit.xi - d[1])
        g.append((up - dn) / (2 * h))
    # gradient with respect to (log tau, xi), each step 1e-6 on its own scale
    assert np.linalg.norm(g) < 1e-4 * max(1.0, abs(fit.loglik) / x.size)


def test_gpd_fit_bounded_tail_endpoint_exceeds_data():
    x = gpd_sample(np.random.default_rng(4), 5000, 1.0, -0.3)
    fit = gpd_fit(x)
    assert fit.xi < 0
    assert fit.upper_endpoint > x.max()


# gpd_fit_ns


def test_gpd_fit_ns_nests_stationary_fit():
    x = gpd_sample(np.random.default_rng(5), 2000, 1.5, 0.1)
    st = gpd_fit(x)
    ns = gpd_fit_ns(x, np.ones((x.size, 1)))
    assert np.exp(ns.tau_coeffs[0]) == st.tau
    assert ns.xi == st.xi


def test_gpd_fit_ns_log_linear_scale():
    rng = np.random.default_rng(6)
    n = 20_000
    t = np.arange(1.0, n + 1)
    tau = np.exp(0.5 + 0.001 * t)
    x = rng.standard_exponential(n) * tau
    fit = gpd_fit_ns(x, np.column_stack([np.ones(n), t]))
    assert abs(fit.tau_coeffs[0] - 0.5) < 0.05
    assert abs(fit.tau_coeffs[1] - 0.001) < 0.0002


def test_gpd_fit_ns_bad_designs():
    x = np.random.default_rng(7).standard_exponential(100)
    with pytest.raises(SingularDesignError):
        gpd_fit_ns(x, np.ones((100, 0)))
    with pytest.raises(ValueError):
        gpd_fit_ns(x, np.ones((99, 1)))
    t = np.arange(100.0)
    with pytest.raises(SingularDesignError):
        gpd_fit_ns(x, np.column_stack([np.ones(100), t, 2 * t]))


def test_ns_params_round_trip():
    p = NsGpdParams(np.array([0.1, -0.2]), 0.05, 1.2, 0.9, -3.0, True)
    q = NsGpdParams.from_dict(json.loads(json.dumps(p.to_dict())))
    assert np.array_equal(q.tau_coeffs, p.tau_coeffs) and q.xi == p.xi
    with pytest.raises(ValueError):
        p.tau(np.ones(3))


# locscale_fit


def test_locscale_constant_series_rejected():
    with pytest.raises(DegenerateSampleError):
        locscale_fit(np.full(100, 3.0), np.ones((100, 1)))


def test_locscale_intercept_only_is_sample_moments():
    y = np.random.default_rng(8).normal(3, 2, 500)
    fit = locscale_fit(y, np.ones((500, 1)))
    assert fit.loc_coeffs[0] == pytest.approx(y.mean(), abs=1e-8)
    assert np.exp(fit.scale_coeffs[0]) == pytest.approx(y.std(), abs=1e-8)


def test_locscale_linear_trend():
    rng = np.random.default_rng(9)
    n = 9000
    t = np.arange(1.0, n + 1)
    y = 2 + 0.003 * t + rng.standard_normal(n)
    fit = locscale_fit(y, BasisSpec(degree=1).design(t))
    assert abs(fit.loc_coeffs[0] - 2) < 0.1
    assert abs(fit.loc_coeffs[1] - 0.003) < 0.0003
    assert fit.residuals.size == n and np.all(np.diff(fit.residuals) >= 0)


def test_locscale_harmonic():
    rng = np.random.default_rng(10)
    n = 9000
    t = np.arange(1.0, n + 1)
    day = (t - 1) % 90 + 1
    y = np.sin(2 * np.pi * day / 90) + rng.standard_normal(n)
    basis = BasisSpec(degree=0, harmonics=1)
    fit = locscale_fit(y, basis.design(t, day))
    assert abs(fit.loc_coeffs[1] - 1) < 0.05


def test_locscale_gcv_picks_from_grid():
    rng = np.random.default_rng(11)
    t = np.arange(1.0, 2001)
    y = 1 + 0.001 * t + rng.standard_normal(t.size)
    grid = np.logspace(-3, 6, 20)
    fit = locscale_fit(y, BasisSpec(degree=2).design(t), penalty=None, penalty_grid=grid)
    assert fit.penalty in grid
    with pytest.raises(ValueError):
        locscale_fit(y, BasisSpec(degree=1).design(t), penalty=-1.0)


# full marginal model


@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(12)
    n = 4000
    t = np.arange(1, n + 1)
    day = (t - 1) % 90 + 1
    mu = 1 + 0.0005 * t + 0.5 * np.sin(2 * np.pi * day / 90)
    sig = np.exp(0.2 + 0.0001 * t)
    y = mu + sig * rng.standard_t(6, n)
    model = fit_marginal(y, t, day, basis=BasisSpec(1, 1), tail_basis=BasisSpec(1, 0))
    return y, t, day, model


def test_residuals_exact_points(fitted):
    _, t, day, m = fitted
    mu, sig = m.mu(t, day), m.sigma(t, day)
    assert np.allclose(residuals(mu, m, t, day), 0, atol=1e-12)
    assert np.allclose(residuals(mu + sig, m, t, day), 1, atol=1e-12)
    y = fitted[0]
    assert np.allclose(from_residuals(residuals(y, m, t, day), m, t, day), y, atol=1e-12)


def test_semi_empirical_cdf_rank_and_continuity(fitted):
    _, t, day, m = fitted
    z = m.tail_rows(t[:1], day[:1])
    rmin = m.residual_sample[0]
    assert semi_empirical_cdf(rmin, m, z) == pytest.approx(1 / (m.n + 1), abs=1e-15)
    u = m.threshold
    assert semi_empirical_cdf(u, m, z) == pytest.approx(m.q_y, abs=1e-12)
    assert semi_empirical_cdf(u + 1e-13, m, z) == pytest.approx(m.q_y, abs=1e-12)
    assert 0.85 < m.q_y < 0.95


def test_semi_empirical_cdf_exponential_tail_point(fitted):
    _, t, day, m = fitted
    m0 = MarginalModel(m.basis, m.loc_coeffs, m.scale_coeffs, m.tail_basis,
                       NsGpdParams(m.tail.tau_coeffs, 0.0, m.threshold, m.q_y),
                       m.residual_sample)
    z = m.tail_rows(np.array([500]), np.array([30]))
    tau = m.tail.tau(z)[0]
    p = semi_empirical_cdf(m.threshold + tau * np.log(2), m0, z)
    assert p == pytest.approx(1 - (1 - m.q_y) / 2, abs=1e-12)


def test_semi_empirical_quantile_inverse(fitted):
    _, t, day, m = fitted
    z = m.tail_rows(np.array([100]), np.array([10]))
    assert semi_empirical_quantile(m.q_y, m, z) == pytest.approx(m.threshold, abs=1e-12)
    r = semi_empirical_quantile(0.999, m, z)
    assert semi_empirical_cdf(r, m, z) == pytest.approx(0.999, abs=1e-9)
    with pytest.raises(ValueError):
        semi_empirical_quantile(1.0, m, z)
    with pytest.raises(ValueError):
        semi_empirical_quantile(0.0, m, z)


def test_semi_empirical_quantile_clamps_bounded_tail(fitted):
    _, t, day, m = fitted
    tail = NsGpdParams(m.tail.tau_coeffs, -0.5, m.threshold, m.q_y)
    mb = MarginalModel(m.basis, m.loc_coeffs, m.scale_coeffs, m.tail_basis, tail,
                       m.residual_sample)
    z = m.tail_rows(np.array([100]), np.array([10]))
    end = m.threshold + m.tail.tau(z)[0] / 0.5
    v = semi_empirical_quantile(1 - 1e-16, mb, z)
    assert v <= end
    # zero survival probability sits exactly at the endpoint and is flagged
    v, flag = quantile_from_sf(0.0, mb, z)
    assert flag and v == pytest.approx(end)
    v, flag = semi_empirical_quantile(0.95, mb, z, return_flags=True)
    assert not flag and v < end


def test_to_exponential_values_and_round_trip(fitted):
    y, t, day, m = fitted
    es = to_exponential(y, y, (m, m), t, day)
    assert np.all(es.x >= 0) and np.array_equal(es.x, es.y)
    assert 0.95 <= es.x.mean() <= 1.05
    # rolling rate near 1
    rates = [1 / es.x[i:i + 1000].mean() for i in range(0, t.size, 1000)]
    assert np.all(np.abs(np.array(rates) - 1) < 0.15)
    v = np.array([3.0, 6.0, 12.0])
    tt, dd = np.array([7, 2000, 3999]), np.array([7, 20, 39])
    back = from_exponential(v, m, tt, dd)
    again = to_exponential(back, back, (m, m), tt, dd)
    assert np.allclose(again.x, v, atol=1e-6)


def test_to_exponential_known_probabilities(fitted):
    _, t, day, m = fitted
    z = m.tail_rows(t[:1], day[:1])
    for p, e in [(1 - np.exp(-1), 1.0), (0.5, np.log(2))]:
        r = semi_empirical_quantile(p, m, z)
        if p > m.q_y:
            assert -np.log1p(-semi_empirical_cdf(r, m, z)) == pytest.approx(e, abs=1e-9)
        else:
            # body branch interpolates between plotting positions
            assert -np.log1p(-semi_empirical_cdf(r, m, z)) == pytest.approx(e, abs=5e-3)


def test_marginal_model_json_round_trip(fitted):
    y, t, day, m = fitted
    m2 = MarginalModel.from_dict(json.loads(json.dumps(m.to_dict())))
    a = to_exponential(y, y, (m, m), t, day)
    b = to_exponential(y, y, (m2, m2), t, day)
    assert np.array_equal(a.x, b.x)


def test_exp_series_validation():
    from nsadf.margins import ExpSeries
    with pytest.raises(ValueError):
        ExpSeries(t=np.array([1, 1]), x=np.ones(2), y=np.ones(2))
    with pytest.raises(ValueError):
        ExpSeries(t=np.array([1, 2]), x=np.array([1, -1.0]), y=np.ones(2))
