"""Simulation-study metrics, replication driver and diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import integrate

from .adf import (AdfGrid, BernsteinFitConfig, QuantileSchedule, RayGrid, apply_bounds,
                  fit_bernstein, lambda_qr_average)
from .basis import BasisSpec
from .copulas import (DEFAULT_ASYMMETRY, CopulaSpec, McmcConfig, param_trajectory, sample,
                      true_adf)
from .margins import ExpSeries
from .parallel import pmap
from .return_curve import ReturnCurve

ESTIMATORS = ("qr", "bp")


def _on_grid(f, rays):
    return np.asarray(f(rays) if callable(f) else f, dtype=float)


def ise(estimate, truth, rays) -> float:
    """Trapezoidal integral over ``[0, 1]`` of the squared difference.

    ``estimate`` and ``truth`` are arrays on ``rays`` or callables of ``w``.
    """
    rays = np.asarray(rays, dtype=float)
    d = _on_grid(estimate, rays) - _on_grid(truth, rays)
    return float(integrate.trapezoid(d * d, rays))


@dataclass(frozen=True, eq=False)
class ReplicationSet:
    """Estimates ``values[r, i, j]`` at ray ``i`` and time ``times[j]`` over replicates."""

    values: np.ndarray
    truth: np.ndarray
    rays: np.ndarray
    times: np.ndarray
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3:
            raise ValueError("values must be (replicates, rays, times)")
        if v.shape[1:] != np.shape(self.truth) or v.shape[1] != np.size(self.rays) \
                or v.shape[2] != np.size(self.times):
            raise ValueError("replicates, truth, rays and times disagree in shape")
        object.__setattr__(self, "values", v)

    @property
    def R(self) -> int:
        return self.values.shape[0]

    def time_index(self, t) -> int:
        idx = np.flatnonzero(np.asarray(self.times) == t)
        if idx.size == 0:
            raise KeyError(f"time {t} not in replication set")
        return int(idx[0])


def mise(reps: ReplicationSet, t) -> float:
    """Mean over replicates of the ISE at time ``t``."""
    if reps.R < 2:
        raise ValueError("MISE needs at least two replicates")
    j = reps.time_index(t)
    truth = reps.truth[:, j]
    return float(np.mean([ise(v[:, j], truth, reps.rays) for v in reps.values]))


def median_ise(reps: ReplicationSet, t) -> float:
    """ISE of the pointwise median estimate at time ``t``."""
    j = reps.time_index(t)
    return ise(np.median(reps.values[:, :, j], axis=0), reps.truth[:, j], reps.rays)


@dataclass(frozen=True)
class Bands:
    probs: tuple
    values: np.ndarray
    fallback: bool = False

    @property
    def lower(self):
        return self.values[0]

    @property
    def median(self):
        return self.values[len(self.probs) // 2]

    @property
    def upper(self):
        return self.values[-1]


def envelope(samples, probs=(0.025, 0.5, 0.975), min_reps: int = 40) -> Bands:
    """Pointwise empirical quantiles across replicates (axis 0).

    With fewer than ``min_reps`` replicates the outer bands fall back to
    the sample extremes and ``fallback`` is set.
    """
    s = np.asarray(samples, dtype=float)
    probs = tuple(float(p) for p in probs)
    if s.shape[0] < 2:
        raise ValueError("need at least two replicates")
    if list(probs) != sorted(probs):
        raise ValueError("probabilities must be increasing")
    fallback = s.shape[0] < min_reps
    vals = []
    for p in probs:
        if fallback and p < 0.5 and p < 1.0 / s.shape[0]:
            vals.append(s.min(axis=0))
        elif fallback and p > 0.5 and 1.0 - p < 1.0 / s.shape[0]:
            vals.append(s.max(axis=0))
        else:
            vals.append(np.quantile(s, p, axis=0))
    return Bands(probs=probs, values=np.array(vals), fallback=fallback)


# rolling extremal dependence


@dataclass(frozen=True)
class RollingEta:
    t: np.ndarray
    eta: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    exceedances: np.ndarray
    flags: np.ndarray

    @property
    def half_width(self):
        return 0.5 * (self.upper - self.lower)


def rolling_eta(data: ExpSeries, half_window: int, threshold_q: float = 0.95,
                centers=None, step: int | None = None, min_window: int = 200) -> RollingEta:
    """Coefficient of tail dependence over moving windows.

    Within each window ``T = min(X, Y)`` is thresholded at its ``threshold_q``
    quantile; the excesses are exponential with rate ``1 / eta``, so the MLE
    is their mean and ``se = eta / sqrt(k)``. Windows with fewer than
    ``min_window`` points are flagged.
    """
    if not 0 < threshold_q < 1:
        raise ValueError("threshold_q must lie in (0, 1)")
    if half_window < 1:
        raise ValueError("half_window must be positive")
    tmin = np.minimum(data.x, data.y)
    n = tmin.size
    if centers is None:
        step = step or max(1, half_window // 10)
        centers = np.arange(0, n, step)
    else:
        centers = np.asarray(centers, dtype=int)
    eta = np.full(centers.size, np.nan)
    lo = np.full(centers.size, np.nan)
    hi = np.full(centers.size, np.nan)
    k = np.zeros(centers.size, dtype=int)
    flags = np.zeros(centers.size, dtype=bool)
    for i, c in enumerate(centers):
        win = tmin[max(0, c - half_window): min(n, c + half_window + 1)]
        if win.size < min_window:
            flags[i] = True
            continue
        u = np.quantile(win, threshold_q)
        exc = win[win > u] - u
        k[i] = exc.size
        if exc.size < 10:
            flags[i] = True
            continue
        e = exc.mean()
        se = e / np.sqrt(exc.size)
        eta[i], lo[i], hi[i] = e, e - 1.959964 * se, e + 1.959964 * se
    return RollingEta(t=np.asarray(data.t)[centers], eta=eta, lower=lo, upper=hi,
                      exceedances=k, flags=flags)


@dataclass(frozen=True)
class ChiEstimate:
    value: float
    exceedances: int
    flagged: bool


def chi_u(u_x, u_y, u: float, min_exceedances: int = 50) -> ChiEstimate:
    """Empirical ``Pr(U_Y > u | U_X > u)`` from uniform-margin pairs."""
    if not 0 < u < 1:
        raise ValueError("u must lie in (0, 1)")
    ux = np.asarray(u_x, dtype=float)
    uy = np.asarray(u_y, dtype=float)
    ex = ux > u
    k = int(ex.sum())
    val = float(np.mean(uy[ex] > u)) if k else float("nan")
    return ChiEstimate(value=val, exceedances=k, flagged=k < min_exceedances)


# block bootstrap


@dataclass(frozen=True)
class BootstrapPlan:
    segment_len: int = 450
    block_len: int = 15
    resamples: int = 250
    seed: int = 0

    def __post_init__(self):
        if self.block_len < 1 or self.segment_len < 1 or self.resamples < 1:
            raise ValueError("bootstrap sizes must be positive")
        if self.segment_len % self.block_len:
            raise ValueError("segment_len must be a multiple of block_len")


def block_indices(n: int, plan: BootstrapPlan, rng) -> np.ndarray:
    """Source positions of one resample.

    Each segment is cut into consecutive blocks of ``block_len`` and rebuilt
    from as many blocks drawn from it with replacement. A short final segment
    has proportionally fewer blocks; its last partial block can be drawn too
    and the result is truncated to the segment length.
    """
    out = []
    b = plan.block_len
    for start in range(0, n, plan.segment_len):
        L = min(plan.segment_len, n - start)
        nblocks = -(-L // b)
        parts, total = [], 0
        while total < L:
            j = int(rng.integers(0, nblocks))
            blk = np.arange(start + j * b, start + min((j + 1) * b, L))
            parts.append(blk)
            total += blk.size
        out.append(np.concatenate(parts)[:L])
    return np.concatenate(out)


def block_bootstrap(data: ExpSeries, plan: BootstrapPlan, index: int = 0) -> ExpSeries:
    """Resample ``index`` of ``plan``; each index has its own generator stream."""
    n = len(data)
    rng = np.random.default_rng([plan.seed, index])
    idx = block_indices(n, plan, rng)
    return ExpSeries(t=np.arange(1, n + 1), x=data.x[idx], y=data.y[idx], day=data.day)


def window_average(values, t, centers, half_window: int) -> np.ndarray:
    """Mean of ``values`` over the same windows :func:`rolling_eta` uses."""
    values = np.asarray(values, dtype=float)
    n = values.size
    idx = np.searchsorted(np.asarray(t), centers)
    return np.array([values[max(0, c - half_window): min(n, c + half_window + 1)].mean()
                     for c in idx])


# oracle survival of return-curve points


@dataclass(frozen=True)
class SurvivalCheck:
    prob: np.ndarray
    se: np.ndarray
    upper: np.ndarray
    N: int


def curve_check(curve: ReturnCurve, sampler, N: int, rng=None, data=None) -> SurvivalCheck:
    """Fraction of ``N`` fresh draws beyond each curve point in both coordinates.

    ``upper`` is ``prob + 2 se``, or ``3 / N`` when no draw exceeds the point.
    """
    if data is None:
        data = sampler(N, np.random.default_rng(rng))
    xs, ys = data
    xs, ys = np.asarray(xs)[:N], np.asarray(ys)[:N]
    order = np.argsort(xs)
    xs_sorted, ys_by_x = xs[order], ys[order]
    prob = np.empty(curve.w.size)
    for i, (a, b) in enumerate(zip(curve.x, curve.y)):
        first = np.searchsorted(xs_sorted, a, side="right")
        prob[i] = np.count_nonzero(ys_by_x[first:] > b) / N
    se = np.sqrt(prob * (1 - prob) / N)
    upper = np.where(prob > 0, prob + 2 * se, 3.0 / N)
    return SurvivalCheck(prob=prob, se=se, upper=upper, N=int(N))


# replication driver


@dataclass(frozen=True)
class ReplicationConfig:
    family: str
    n: int = 10_000
    replicates: int = 50
    seed: int = 0
    estimators: tuple = ESTIMATORS
    times: tuple | None = None
    qr_basis: BasisSpec = field(default_factory=lambda: BasisSpec(degree=3))
    bp_basis: BasisSpec = field(default_factory=lambda: BasisSpec(degree=1))
    bp: BernsteinFitConfig = field(default_factory=BernsteinFitConfig)
    schedule: QuantileSchedule = field(default_factory=QuantileSchedule.linear)
    rays: RayGrid = field(default_factory=RayGrid)
    asymmetry: tuple = DEFAULT_ASYMMETRY
    mcmc: McmcConfig | None = None

    def __post_init__(self):
        if not set(self.estimators) <= set(ESTIMATORS):
            raise ValueError(f"estimators must be drawn from {ESTIMATORS}")

    @property
    def eval_times(self) -> np.ndarray:
        if self.times is not None:
            return np.asarray(self.times, dtype=float)
        return np.array([1.0, self.n // 2, float(self.n)])

    def replicate_seed(self, r: int) -> int:
        return int(self.seed) * 1_000_003 + r


def simulate_replicate(cfg: ReplicationConfig, r: int) -> ExpSeries:
    seed = cfg.replicate_seed(r)
    mcmc = None
    if cfg.family == "gauge_model12":
        base = cfg.mcmc or McmcConfig()
        mcmc = McmcConfig(**{**base.to_dict(), "chain_seed": seed})
    return sample(CopulaSpec(cfg.family, cfg.n, seed=seed, asymmetry=cfg.asymmetry), mcmc=mcmc)


@dataclass(frozen=True, eq=False)
class ReplicateResult:
    """Bounded estimates at ``times`` for one replicate, plus its grid."""

    qr: np.ndarray | None
    bp: np.ndarray | None
    grid: AdfGrid
    bp_objective: float = float("nan")


def run_replicate(r: int, cfg: ReplicationConfig) -> ReplicateResult:
    data = simulate_replicate(cfg, r)
    grid = lambda_qr_average(data, cfg.rays, cfg.schedule, cfg.qr_basis)
    times = cfg.eval_times
    qr = grid.constrained(times) if "qr" in cfg.estimators else None
    bp, obj = None, float("nan")
    if "bp" in cfg.estimators:
        model = fit_bernstein(grid, cfg.bp, basis=cfg.bp_basis)
        bp = apply_bounds(model.evaluate(grid.rays, model.basis.design(times)), grid.rays,
                          pin_endpoints=False)
        obj = model.objective
    return ReplicateResult(qr=qr, bp=bp, grid=grid, bp_objective=obj)


def truth_table(cfg: ReplicationConfig) -> np.ndarray:
    """True ADF on the ray grid at each evaluation time, shape (rays, times)."""
    params = param_trajectory(cfg.family, cfg.eval_times, cfg.n)
    return np.column_stack([true_adf(cfg.family, p, cfg.rays.rays, cfg.asymmetry) for p in params])


def run_replications(cfg: ReplicationConfig, workers: int = 1, keep_grids: bool = False):
    """All replicates of ``cfg``; returns ``{estimator: ReplicationSet}`` (and grids).

    Replicates are independent and reduced in replicate order, so results
    do not depend on ``workers``.
    """
    res = pmap(partial(run_replicate, cfg=cfg), range(cfg.replicates), workers=workers)
    truth = truth_table(cfg)
    out = {}
    for est in cfg.estimators:
        vals = np.array([getattr(r, est) for r in res])
        out[est] = ReplicationSet(values=vals, truth=truth, rays=cfg.rays.rays,
                                  times=cfg.eval_times, label=f"{cfg.family}:{est}")
    if keep_grids:
        return out, [r.grid for r in res]
    return out


TIME_LABELS = ("start", "middle", "end")


def mise_table(family: str, sets: dict) -> list[dict]:
    """Rows ``{copula, time, <estimator>...}`` of MISE at start, middle and end."""
    rows = []
    any_set = next(iter(sets.values()))
    for label, t in zip(TIME_LABELS, any_set.times):
        row = {"copula": family, "time": label}
        for est, reps in sets.items():
            row[est] = mise(reps, t)
        rows.append(row)
    return rows


def median_ise_table(family: str, sets: dict) -> list[dict]:
    rows = []
    any_set = next(iter(sets.values()))
    for label, t in zip(TIME_LABELS, any_set.times):
        row = {"copula": family, "time": label}
        for est, reps in sets.items():
            row[est] = median_ise(reps, t)
        rows.append(row)
    return rows

