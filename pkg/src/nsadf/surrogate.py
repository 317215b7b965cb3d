"""Synthetic stand-in for a seasonal bivariate climate series and its analysis.

The generator produces ``n_years`` seasons of ``obs_per_year`` daily values.
Each margin is ``mu(t, day) + sigma(t) R_t`` with a linear trend and annual
harmonics in the location and a log-linear trend in the scale. The residuals
are standard normal, except that the second margin has a GPD upper tail above
its normal ``tail_level`` quantile. Dependence is an inverted logistic copula
whose parameter falls linearly over time, so joint extremes become more
likely towards the end of the record.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import special, stats

from . import io
from .adf import (AdfGrid, BernsteinFitConfig, BernsteinModel, QuantileSchedule, RayGrid,
                  apply_bounds, eta_from_adf, fit_bernstein, lambda_qr_average)
from .basis import BasisSpec
from .copulas import joint_survival, sample_at
from .errors import NumericalError
from .evaluation import (BootstrapPlan, RollingEta, block_bootstrap, envelope, rolling_eta,
                         window_average)
from .margins import ExpSeries, MarginalModel, fit_marginal, gpd_quantile_sf, to_exponential
from .parallel import pmap
from .return_curve import ReturnCurve, back_transform, return_curve


@dataclass(frozen=True)
class MarginSpec:
    """``mu = loc0 + loc_trend * year + sum a_k sin + b_k cos``, ``log sigma = log_scale0 + scale_trend * year``.

    ``year`` is ``(t - 1) / obs_per_year``. A positive ``tail_xi`` or
    ``tail_scale`` replaces the normal residual above ``tail_level`` by a GPD.
    """

    loc0: float = 0.0
    loc_trend: float = 0.0
    harmonics: tuple = ()
    log_scale0: float = 0.0
    scale_trend: float = 0.0
    tail_level: float = 0.9
    tail_scale: float = 0.0
    tail_xi: float = 0.0


def _default_x():
    return MarginSpec(loc0=20.0, loc_trend=0.04, harmonics=((3.0, -1.0),),
                      log_scale0=float(np.log(3.0)), scale_trend=0.002)


def _default_y():
    return MarginSpec(loc0=10.0, loc_trend=0.03, harmonics=((1.5, 0.5),),
                      log_scale0=float(np.log(2.0)), scale_trend=0.003,
                      tail_level=0.9, tail_scale=0.6, tail_xi=0.1)


@dataclass(frozen=True)
class SurrogateSpec:
    n_years: int = 100
    obs_per_year: int = 90
    x: MarginSpec = field(default_factory=_default_x)
    y: MarginSpec = field(default_factory=_default_y)
    r_start: float = 0.99
    r_end: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.n_years < 1 or self.obs_per_year < 1:
            raise ValueError("n_years and obs_per_year must be positive")
        if not (0 < self.r_end <= 1 and 0 < self.r_start <= 1):
            raise ValueError("inverted logistic parameters must lie in (0, 1]")
        if self.r_end > self.r_start:
            raise ValueError("dependence must strengthen over time (r_end <= r_start)")

    @property
    def n(self) -> int:
        return self.n_years * self.obs_per_year

    def dependence(self, t):
        """Copula parameter at time index ``t`` (1..n)."""
        frac = (np.asarray(t, dtype=float) - 1.0) / max(self.n - 1, 1)
        return self.r_start + (self.r_end - self.r_start) * frac

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateSpec":
        d = dict(d)
        for key in ("x", "y"):
            if key in d and isinstance(d[key], dict):
                m = dict(d[key])
                m["harmonics"] = tuple(tuple(h) for h in m.get("harmonics", ()))
                d[key] = MarginSpec(**m)
        return cls(**d)


@dataclass(frozen=True, eq=False)
class RawSeries:
    t: np.ndarray
    day: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        arrs = [np.asarray(a, dtype=float) for a in (self.t, self.day, self.x, self.y)]
        if len({a.shape for a in arrs}) != 1 or arrs[0].ndim != 1:
            raise ValueError("t, day, x and y must be 1-d arrays of equal length")
        if not all(np.all(np.isfinite(a)) for a in arrs):
            raise ValueError("series must be finite")
        for name, a in zip(("t", "day", "x", "y"), arrs):
            object.__setattr__(self, name, a)

    def __len__(self) -> int:
        return self.t.size


def _margin(ms: MarginSpec, t, day, period, sf):
    year = (t - 1.0) / period
    mu = ms.loc0 + ms.loc_trend * year
    for k, (a, b) in enumerate(ms.harmonics, start=1):
        arg = 2.0 * np.pi * k * day / period
        mu = mu + a * np.sin(arg) + b * np.cos(arg)
    sigma = np.exp(ms.log_scale0 + ms.scale_trend * year)
    r = -special.ndtri(sf)
    if ms.tail_scale > 0:
        s_u = 1.0 - ms.tail_level
        tail = sf < s_u
        u = special.ndtri(ms.tail_level)
        r = np.where(tail, u + gpd_quantile_sf(np.where(tail, sf / s_u, 1.0),
                                               ms.tail_scale, ms.tail_xi), r)
    return mu + sigma * r


def generate_surrogate(spec: SurrogateSpec) -> RawSeries:
    """Draw one surrogate record."""
    n = spec.n
    t = np.arange(1, n + 1, dtype=float)
    day = (np.arange(n) % spec.obs_per_year) + 1.0
    rng = np.random.default_rng(spec.seed)
    ex, ey = sample_at("inv_logistic", spec.dependence(t), n, rng)
    x = _margin(spec.x, t, day, spec.obs_per_year, np.exp(-ex))
    y = _margin(spec.y, t, day, spec.obs_per_year, np.exp(-ey))
    return RawSeries(t=t, day=day, x=x, y=y)


def read_series(path) -> RawSeries:
    cols = io.read_csv(path, "series")
    return RawSeries(t=cols["t"], day=cols["day"], x=cols["x"], y=cols["y"])


def write_series(path, raw: RawSeries):
    return io.write_csv(path, "series", {"t": raw.t, "day": raw.day, "x": raw.x, "y": raw.y})


# case pipeline


@dataclass(frozen=True)
class CaseConfig:
    """Settings of the end-to-end analysis.

    ``curve_years`` are zero-based season indices; each curve is reported at
    ``curve_day`` of that season. ``p`` defaults to a 1 in 10,000 year event,
    ``1 / (10000 * obs_per_year)``.
    """

    obs_per_year: int = 90
    margin_basis: BasisSpec = field(default_factory=lambda: BasisSpec(degree=1, harmonics=2,
                                                                      period=90.0))
    tail_basis_x: BasisSpec = field(default_factory=lambda: BasisSpec(degree=0))
    tail_basis_y: BasisSpec = field(default_factory=lambda: BasisSpec(degree=1))
    q_tail: float = 0.9
    adf_basis: BasisSpec = field(default_factory=lambda: BasisSpec(degree=1))
    schedule: QuantileSchedule = field(default_factory=QuantileSchedule.linear)
    rays: RayGrid = field(default_factory=RayGrid)
    bernstein: BernsteinFitConfig = field(
        default_factory=lambda: BernsteinFitConfig(link="logit"))
    return_years: float = 10_000.0
    curve_years: tuple = (0, 20, 40, 60, 80, 99)
    curve_day: int = 45
    half_window: int = 1350
    eta_threshold: float = 0.95
    eta_step: int = 90
    bootstrap: BootstrapPlan = field(default_factory=BootstrapPlan)
    seed: int = 0

    @property
    def p(self) -> float:
        return 1.0 / (self.return_years * self.obs_per_year)

    def curve_time(self, year: int) -> float:
        return float(year * self.obs_per_year + self.curve_day)

    def to_dict(self) -> dict:
        return {
            "obs_per_year": self.obs_per_year,
            "margin_basis": self.margin_basis.to_dict(),
            "tail_basis_x": self.tail_basis_x.to_dict(),
            "tail_basis_y": self.tail_basis_y.to_dict(),
            "q_tail": self.q_tail,
            "adf_basis": self.adf_basis.to_dict(),
            "schedule": self.schedule.pairs.tolist(),
            "rays": self.rays.rays.tolist(),
            "bernstein": asdict(self.bernstein),
            "return_years": self.return_years,
            "curve_years": list(self.curve_years),
            "curve_day": self.curve_day,
            "half_window": self.half_window,
            "eta_threshold": self.eta_threshold,
            "eta_step": self.eta_step,
            "bootstrap": asdict(self.bootstrap),
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class CaseResult:
    margins: tuple
    exp_series: ExpSeries
    grid: AdfGrid
    model: BernsteinModel
    curves_exp: dict
    curves_original: dict
    eta: RollingEta
    model_eta: np.ndarray
    bootstrap: dict | None
    artifacts: list


def _stage(name):
    def wrap(fn):
        def inner(*a, **k):
            try:
                return fn(*a, **k)
            except NumericalError:
                raise
            except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
                raise NumericalError(str(exc), stage=name) from exc
        return inner
    return wrap


@_stage("margins")
def _fit_margins(raw: RawSeries, cfg: CaseConfig):
    mx = fit_marginal(raw.x, raw.t, raw.day, basis=cfg.margin_basis,
                      tail_basis=cfg.tail_basis_x, q_y=cfg.q_tail, penalty=None)
    my = fit_marginal(raw.y, raw.t, raw.day, basis=cfg.margin_basis,
                      tail_basis=cfg.tail_basis_y, q_y=cfg.q_tail, penalty=None)
    return mx, my


@_stage("transform")
def _transform(raw, models):
    return to_exponential(raw.x, raw.y, models, raw.t, raw.day)


@_stage("fit_adf")
def _fit_adf(data: ExpSeries, cfg: CaseConfig, workers: int):
    grid = lambda_qr_average(data, cfg.rays, cfg.schedule, cfg.adf_basis, workers=workers)
    model = fit_bernstein(grid, cfg.bernstein, basis=cfg.adf_basis)
    return grid, model


def model_lambda(model: BernsteinModel, rays, t, day=None):
    """Bounded Bernstein ADF on ``rays`` at times ``t``: shape (rays, len(t))."""
    z = model.basis.design(np.atleast_1d(t), day)
    return apply_bounds(model.evaluate(rays, z), rays, pin_endpoints=False)


@_stage("return_curve")
def _curves(grid, model, models, cfg: CaseConfig):
    exp_c, orig_c = {}, {}
    for year in cfg.curve_years:
        t = cfg.curve_time(year)
        c = return_curve(grid, cfg.p, t, day=float(cfg.curve_day), adf=model)
        exp_c[int(year)] = c
        orig_c[int(year)] = back_transform(c, models, t, float(cfg.curve_day))
    return exp_c, orig_c


@_stage("rolling_eta")
def _eta(data: ExpSeries, model: BernsteinModel, cfg: CaseConfig):
    n = len(data)
    centers = np.arange(cfg.half_window, n - cfg.half_window, cfg.eta_step)
    if centers.size == 0:
        centers = np.array([n // 2])
    re = rolling_eta(data, cfg.half_window, cfg.eta_threshold, centers=centers)
    lam_half = model_lambda(model, np.array([0.5]), data.t)[0]
    eta_t = eta_from_adf(lam_half)
    return re, window_average(eta_t, data.t, re.t, cfg.half_window)


def _bootstrap_one(index, data, cfg: CaseConfig):
    bs = block_bootstrap(data, cfg.bootstrap, index)
    grid = lambda_qr_average(bs, cfg.rays, cfg.schedule, cfg.adf_basis)
    model = fit_bernstein(grid, cfg.bernstein, basis=cfg.adf_basis)
    return model_lambda(model, cfg.rays.rays, [len(data) / 2.0])[:, 0]


@_stage("bootstrap")
def _bootstrap(data, cfg: CaseConfig, workers: int):
    from functools import partial

    fn = partial(_bootstrap_one, data=data, cfg=cfg)
    draws = np.array(pmap(fn, range(cfg.bootstrap.resamples), workers=workers))
    if draws.shape[0] < 2:
        return {"draws": draws, "bands": None}
    return {"draws": draws, "bands": envelope(draws)}


def _persist_curve(path, c: ReturnCurve):
    return io.write_csv(path, "curve", {"w": c.w, "x": c.x, "y": c.y, "flag": c.flags})


def run_case_pipeline(raw: RawSeries, config: CaseConfig | None = None, out_dir=None,
                      workers: int = 1, bootstrap: bool = True) -> CaseResult:
    """Margins, exponential transform, ADF fits, return curves and diagnostics.

    Artifacts are written to ``out_dir`` as each stage finishes, so a stage
    failure leaves everything produced before it on disk. Failures raise
    :class:`NumericalError` carrying the stage name.
    """
    cfg = config or CaseConfig()
    late = [y for y in cfg.curve_years if not raw.t[0] <= cfg.curve_time(y) <= raw.t[-1]]
    if late:
        raise ValueError(f"curve years {late} fall outside the record")
    out = Path(out_dir) if out_dir is not None else None
    artifacts: list[Path] = []

    def save(fn, name, *args):
        if out is not None:
            artifacts.append(fn(out / name, *args))

    models = _fit_margins(raw, cfg)
    save(io.write_json, "margin_x.json", models[0].to_dict())
    save(io.write_json, "margin_y.json", models[1].to_dict())
    data = _transform(raw, models)
    save(io.write_csv, "exponential.csv", "exp_series",
         {"t": data.t, "day": data.day, "x": data.x, "y": data.y})
    grid, model = _fit_adf(data, cfg, workers)
    save(io.write_json, "adf_grid.json", grid.to_dict(include_values=False))
    save(io.write_json, "bernstein.json", model.to_dict())
    curves_exp, curves_orig = _curves(grid, model, models, cfg)
    for year in curves_exp:
        save(_persist_curve, f"curve_exp_year{year:03d}.csv", curves_exp[year])
        save(_persist_curve, f"curve_original_year{year:03d}.csv", curves_orig[year])
    if out is not None:
        from .svg import curves_svg

        path = out / "curves_original.svg"
        path.write_text(curves_svg([curves_orig[y] for y in curves_orig],
                                   labels=[f"year {y}" for y in curves_orig],
                                   xlabel="x", ylabel="y"))
        artifacts.append(path)
    re, meta = _eta(data, model, cfg)
    save(io.write_csv, "eta.csv", "eta", {"t": re.t, "eta": re.eta, "lower": re.lower,
                                          "upper": re.upper, "model_eta": meta,
                                          "flag": re.flags})
    boot = None
    if bootstrap and cfg.bootstrap.resamples > 0:
        boot = _bootstrap(data, cfg, workers)
        if boot["bands"] is not None:
            b = boot["bands"]
            save(io.write_csv, "bootstrap_envelope.csv", "envelope",
                 {"axis": cfg.rays.rays, "lower": b.lower, "median": b.median, "upper": b.upper})
    return CaseResult(margins=models, exp_series=data, grid=grid, model=model,
                      curves_exp=curves_exp, curves_original=curves_orig, eta=re,
                      model_eta=meta, bootstrap=boot, artifacts=artifacts)


# diagnostics used to judge a run against its generator


def eta_trend(result: CaseResult) -> float:
    """Spearman correlation of rolling eta with time over unflagged windows."""
    ok = ~result.eta.flags
    return float(stats.spearmanr(result.eta.t[ok], result.eta.eta[ok])[0])


def eta_agreement(result: CaseResult) -> float:
    """Fraction of windows where model eta is within the empirical CI half-width."""
    ok = ~result.eta.flags
    gap = np.abs(result.model_eta[ok] - result.eta.eta[ok])
    return float(np.mean(gap <= result.eta.half_width[ok]))


def squareness_shift(result: CaseResult, spec: SurrogateSpec, first_year: int | None = None,
                     last_year: int | None = None) -> dict:
    """Joint survival of the first curve's ``w = 0.5`` point under both end copulas.

    The point is taken on exponential margins; survival probabilities use
    the closed-form inverted logistic joint survival at the copula parameters
    of the first and last reported curve times.
    """
    years = sorted(result.curves_exp)
    first = years[0] if first_year is None else first_year
    last = years[-1] if last_year is None else last_year
    c = result.curves_exp[first]
    i = int(np.argmin(np.abs(c.w - 0.5)))
    x, y = c.x[i], c.y[i]
    r0 = spec.dependence(c.t)
    r1 = spec.dependence(result.curves_exp[last].t)
    s0 = float(joint_survival("inv_logistic", float(r0), x, y))
    s1 = float(joint_survival("inv_logistic", float(r1), x, y))
    return {"x": float(x), "y": float(y), "survival_first": s0, "survival_last": s1,
            "ratio": s1 / s0}
