import numpy as np
import pytest

from nsadf.adf import BernsteinModel, QuantileSchedule, RayGrid, lambda_qr_average
from nsadf.basis import BasisSpec
from nsadf.evaluation import curve_check
from nsadf.margins import (ExpSeries, fit_marginal, marginal_to_exponential,
                           semi_empirical_cdf)
from nsadf.return_curve import (ReturnCurve, average_curves, back_transform, enforce_ordering,
                                exp_curve, return_curve)

W = np.linspace(0, 1, 11)


def curve(x, y, w=W, **kw):
    return ReturnCurve(p=1e-3, t=1.0, w=w, x=np.asarray(x, float), y=np.asarray(y, float), **kw)


def test_exp_curve_unit_adf():
    c = exp_curve(np.ones(W.size), np.zeros(W.size), W, 1e-3, 0.9)
    r = c.x + c.y
    assert np.allclose(r, np.log(100), atol=1e-12)
    assert np.log(100) == pytest.approx(4.6052, abs=1e-4)
    i = np.flatnonzero(W == 0.5)[0]
    assert c.x[i] == c.y[i]


def test_exp_curve_rejections():
    with pytest.raises(ValueError):
        exp_curve(np.ones(W.size), np.zeros(W.size), W, 0.2, 0.9)
    with pytest.raises(ValueError):
        exp_curve(np.full(W.size, 0.3), np.zeros(W.size), W, 1e-3, 0.9)


def test_curve_dominance():
    lam1 = np.maximum(W, 1 - W)
    lam2 = np.ones(W.size)
    u = np.full(W.size, 2.0)
    c1 = exp_curve(lam1, u, W, 1e-3, 0.9)
    c2 = exp_curve(lam2, u, W, 1e-3, 0.9)
    assert np.all(c1.x >= c2.x) and np.all(c1.y >= c2.y)


def test_average_curves():
    a = curve(W, 1 - W)
    assert np.array_equal(average_curves([a]).x, a.x)
    assert np.allclose(average_curves([a, a, a]).y, a.y, rtol=0, atol=1e-15)
    b = curve(W + 0.2, 1 - W)
    m = average_curves([a, b])
    assert np.allclose(m.x, W + 0.1)
    lo, hi = np.minimum(a.x, b.x), np.maximum(a.x, b.x)
    assert np.all((m.x >= lo) & (m.x <= hi))
    with pytest.raises(ValueError):
        average_curves([a, curve(W[:5], W[:5], w=W[:5])])
    with pytest.raises(ValueError):
        average_curves([])


def test_enforce_ordering():
    a = curve(W, 1 - W)
    assert np.array_equal(enforce_ordering(a).x, a.x)
    x = W.copy()
    x[4], x[5] = x[5], x[4]
    b = enforce_ordering(curve(x, 1 - W))
    assert b.x[4] == b.x[5] == pytest.approx((x[4] + x[5]) / 2)
    rng = np.random.default_rng(0)
    c = curve(W + rng.normal(scale=0.3, size=W.size), 1 - W + rng.normal(scale=0.3, size=W.size))
    d = enforce_ordering(c)
    assert d.is_ordered()
    assert d.x[0] == c.x[0] and d.x[-1] == c.x[-1] and d.y[0] == c.y[0] and d.y[-1] == c.y[-1]
    e = enforce_ordering(d)
    assert np.array_equal(e.x, d.x) and np.array_equal(e.y, d.y)


def test_curve_validation():
    with pytest.raises(ValueError):
        curve(W, W[:3])
    with pytest.raises(ValueError):
        curve(np.full(W.size, np.inf), W)
    with pytest.raises(ValueError):
        curve(W, W, margin="uniform")


@pytest.fixture(scope="module")
def independent_grid():
    rng = np.random.default_rng(1)
    n = 10_000
    data = ExpSeries(t=np.arange(1, n + 1), x=rng.standard_exponential(n),
                     y=rng.standard_exponential(n))
    return lambda_qr_average(data, RayGrid(np.linspace(0, 1, 21)), QuantileSchedule.linear(),
                             BasisSpec(0))


def test_independence_survival_calibration(independent_grid):
    c = return_curve(independent_grid, 1e-3, 5000)
    assert c.is_ordered()
    sampler = lambda N, rng: (rng.standard_exponential(N), rng.standard_exponential(N))
    chk = curve_check(c, sampler, 10**6, rng=2)
    inner = (c.w >= 0.2 - 1e-9) & (c.w <= 0.8 + 1e-9)
    assert np.all((chk.prob[inner] >= 5e-4) & (chk.prob[inner] <= 2e-3))


def test_return_curve_adf_choices(independent_grid):
    g = independent_grid
    one = lambda rays, t: np.ones_like(rays)
    c1 = return_curve(g, 1e-3, 10, adf=one)
    bm = BernsteinModel(4, "exponential", np.zeros((3, 1)), BasisSpec(0))
    c2 = return_curve(g, 1e-3, 10, adf=bm)
    assert np.allclose(c1.x, c2.x) and np.allclose(c1.y, c2.y)
    c3 = return_curve(g, 1e-3, 10, ordered=False)
    assert c3.x.shape == g.rays.shape


def test_back_transform():
    rng = np.random.default_rng(3)
    n = 3000
    t = np.arange(1, n + 1)
    x = 5 + 0.001 * t + rng.standard_normal(n)
    y = 2 * rng.standard_gamma(3, n)
    models = (fit_marginal(x, t), fit_marginal(y, t))
    ec = exp_curve(np.ones(W.size), np.full(W.size, 2.0), W, 1e-3, 0.9, t=100)
    oc = back_transform(ec, models, 100)
    assert oc.margin == "original"
    assert np.all(np.diff(oc.x) >= 0) and np.all(np.diff(oc.y) <= 0)
    # round trip back to exponential on the tail coordinates
    tt = np.full(W.size, 100)
    again = marginal_to_exponential(oc.x, models[0], tt)
    tail = ec.x > 3
    assert np.allclose(again[tail], ec.x[tail], atol=1e-6)
    # log 2 maps to the marginal median, up to body interpolation
    half = ReturnCurve(p=0.05, t=100, w=np.array([0.0, 0.5, 1.0]), x=np.full(3, np.log(2)),
                       y=np.full(3, np.log(2)))
    med = back_transform(half, models, 100)
    r = (med.x[0] - models[0].mu(100)[0]) / models[0].sigma(100)[0]
    assert semi_empirical_cdf(r, models[0], models[0].tail_rows(100)) == pytest.approx(
        0.5, abs=1e-3)
    with pytest.raises(ValueError):
        back_transform(oc, models, 100)
