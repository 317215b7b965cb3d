"""Non-stationary angular dependence function (ADF) estimation.

Pointwise estimates come from conditional quantiles of the min-projection
``K_w = min(X / w, Y / (1 - w))``: with ``v = Q(q2 | z) - Q(q1 | z)`` the rate
is ``-log((1 - q2) / (1 - q1)) / v``. Averaging over several quantile pairs
gives the QR estimator, and a Bernstein-Bezier polynomial in ``w`` with
covariate-dependent coefficients fitted to it by least absolute deviations
gives the smooth BP estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import optimize, special

from .basis import BasisSpec
from .errors import NumericalError
from .margins import ExpSeries
from .parallel import pmap
from .quantreg import fit_quantile_path

EPS_V = 1e-6
LINKS = ("exponential", "logit")


@dataclass(frozen=True, eq=False)
class RayGrid:
    rays: np.ndarray = field(default_factory=lambda: np.linspace(0.0, 1.0, 101))

    def __post_init__(self):
        r = np.asarray(self.rays, dtype=float)
        if r.ndim != 1 or r.size < 2 or r[0] != 0.0 or r[-1] != 1.0 or np.any(np.diff(r) <= 0):
            raise ValueError("rays must be strictly increasing from 0 to 1")
        object.__setattr__(self, "rays", r)

    def __len__(self) -> int:
        return self.rays.size


@dataclass(frozen=True, eq=False)
class QuantileSchedule:
    pairs: np.ndarray

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.pairs, dtype=float))
        if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] == 0:
            raise ValueError("schedule must be a nonempty list of (q1, q2) pairs")
        if np.any(p[:, 0] <= 0) or np.any(p[:, 1] >= 1) or np.any(p[:, 0] >= p[:, 1]):
            raise ValueError("each pair needs 0 < q1 < q2 < 1")
        object.__setattr__(self, "pairs", p)

    @classmethod
    def linear(cls, m: int = 30, lo: float = 0.9, hi: float = 0.95, gap: float = 0.04):
        q1 = np.linspace(lo, hi, m)
        return cls(np.column_stack([q1, q1 + gap]))

    @property
    def q1(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def q2(self) -> np.ndarray:
        return self.pairs[:, 1]

    @property
    def log_ratio(self) -> np.ndarray:
        """``-log((1 - q2) / (1 - q1))`` per pair."""
        return np.log1p(-self.q1) - np.log1p(-self.q2)

    def __len__(self) -> int:
        return self.pairs.shape[0]


def min_projection(x, y, w):
    """``min(x / w, y / (1 - w))``; ``y`` at ``w = 0`` and ``x`` at ``w = 1``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = float(w)
    if not 0 <= w <= 1:
        raise ValueError("ray must lie in [0, 1]")
    if w == 0:
        return y.copy()
    if w == 1:
        return x.copy()
    return np.minimum(x / w, y / (1.0 - w))


def lower_bound(w):
    return np.maximum(w, 1.0 - np.asarray(w, dtype=float))


def apply_bounds(values, rays, pin_endpoints: bool = True):
    """Raise ``values`` (rays along axis 0) to ``max(w, 1 - w)``; pin ``w = 0, 1`` to 1."""
    rays = np.asarray(rays, dtype=float)
    v = np.asarray(values, dtype=float)
    shape = (-1,) + (1,) * (v.ndim - 1)
    out = np.maximum(v, lower_bound(rays).reshape(shape))
    if pin_endpoints:
        ends = (rays == 0.0) | (rays == 1.0)
        out = np.where(ends.reshape(shape), 1.0, out)
    return out


def eta_from_adf(lam_half):
    lam_half = np.asarray(lam_half, dtype=float)
    if np.any(lam_half <= 0):
        raise ValueError("lambda(0.5) must be positive")
    out = 1.0 / (2.0 * lam_half)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class PointwiseLambda:
    lam: np.ndarray
    flags: np.ndarray
    coeffs_q1: np.ndarray
    coeffs_q2: np.ndarray
    converged: bool


def _lambda_from_fits(Z, c1, c2, log_ratio):
    v = Z @ (c2 - c1)
    flags = v < EPS_V
    return log_ratio / np.maximum(v, EPS_V), flags


def _design(data: ExpSeries, basis: BasisSpec):
    return basis.design(data.t, data.day)


def lambda_qr_pointwise(data: ExpSeries, w: float, pair, basis: BasisSpec) -> PointwiseLambda:
    """Pointwise ADF estimate at ray ``w`` from one quantile pair."""
    q1, q2 = map(float, pair)
    if not 0 < q1 < q2 < 1:
        raise ValueError("need 0 < q1 < q2 < 1")
    Z = _design(data, basis)
    k = min_projection(data.x, data.y, w)
    f1, f2 = fit_quantile_path(Z, k, [q1, q2])
    lam, flags = _lambda_from_fits(Z, f1.coeffs, f2.coeffs, np.log1p(-q1) - np.log1p(-q2))
    return PointwiseLambda(lam, flags, f1.coeffs, f2.coeffs, f1.converged and f2.converged)


def _ray_fits(w, x, y, Z, levels):
    k = min_projection(x, y, w)
    fits = fit_quantile_path(Z, k, levels)
    coeffs = np.array([f.coeffs for f in fits])
    loss = np.array([f.achieved_loss for f in fits])
    conv = np.array([f.converged for f in fits])
    return coeffs, loss, conv


@dataclass(frozen=True, eq=False)
class AdfGrid:
    """QR estimates over rays x time together with every threshold fit.

    ``coeffs_q1[i, j]`` and ``coeffs_q2[i, j]`` are the quantile regression
    coefficients at ray ``i`` for pair ``j``; ``values`` holds the pair-average
    estimate before bounds, ``flags`` marks cells where any pair had its
    quantile spacing floored.
    """

    rays: np.ndarray
    t: np.ndarray
    day: np.ndarray | None
    schedule: QuantileSchedule
    basis: BasisSpec
    coeffs_q1: np.ndarray
    coeffs_q2: np.ndarray
    converged: np.ndarray
    values: np.ndarray
    flags: np.ndarray

    def design(self, t=None, day=None):
        if t is None:
            return self.basis.design(self.t, self.day)
        return self.basis.design(t, day)

    def pair_values(self, i_ray: int, t=None, day=None):
        """Per-pair estimates (m, T) at ray index ``i_ray``; recomputed from the fits."""
        Z = self.design(t, day)
        v = Z @ (self.coeffs_q2[i_ray] - self.coeffs_q1[i_ray]).T
        return self.schedule.log_ratio[None, :].T / np.maximum(v.T, EPS_V)

    def evaluate(self, t, day=None):
        """Unbounded pair-average estimate (rays, len(t)) at arbitrary time points."""
        Z = self.basis.design(t, day)
        v = np.einsum("tp,rjp->rjt", Z, self.coeffs_q2 - self.coeffs_q1)
        lam = self.schedule.log_ratio[None, :, None] / np.maximum(v, EPS_V)
        return lam.mean(axis=1)

    def constrained(self, t=None, day=None):
        vals = self.values if t is None else self.evaluate(t, day)
        return apply_bounds(vals, self.rays)

    def thresholds(self, t, day=None):
        """``u[w, j]`` at the given time points: shape (rays, m, len(t))."""
        Z = self.basis.design(t, day)
        return np.einsum("tp,rjp->rjt", Z, self.coeffs_q1)

    def time_index(self, t) -> int:
        idx = np.flatnonzero(self.t == t)
        if idx.size == 0:
            raise KeyError(f"time {t} not in grid")
        return int(idx[0])

    def to_dict(self, include_values: bool = True) -> dict:
        d = {
            "rays": self.rays.tolist(),
            "t": np.asarray(self.t).tolist(),
            "day": None if self.day is None else np.asarray(self.day).tolist(),
            "schedule": self.schedule.pairs.tolist(),
            "basis": self.basis.to_dict(),
            "coeffs_q1": self.coeffs_q1.tolist(),
            "coeffs_q2": self.coeffs_q2.tolist(),
            "converged": self.converged.tolist(),
        }
        if include_values:
            d["values"] = self.values.tolist()
            d["flags"] = self.flags.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AdfGrid":
        basis = BasisSpec.from_dict(d["basis"])
        schedule = QuantileSchedule(np.asarray(d["schedule"], dtype=float))
        c1 = np.asarray(d["coeffs_q1"], dtype=float)
        c2 = np.asarray(d["coeffs_q2"], dtype=float)
        t = np.asarray(d["t"])
        day = None if d.get("day") is None else np.asarray(d["day"])
        if "values" in d:
            values = np.asarray(d["values"], dtype=float)
            flags = np.asarray(d["flags"], dtype=bool)
        else:
            Z = basis.design(t, day)
            v = np.einsum("tp,rjp->rjt", Z, c2 - c1)
            flags = np.any(v < EPS_V, axis=1)
            values = (schedule.log_ratio[None, :, None] / np.maximum(v, EPS_V)).mean(axis=1)
        return cls(
            rays=np.asarray(d["rays"], dtype=float), t=t, day=day, schedule=schedule,
            basis=basis, coeffs_q1=c1, coeffs_q2=c2,
            converged=np.asarray(d["converged"], dtype=bool), values=values, flags=flags,
        )


def lambda_qr_average(data: ExpSeries, grid: RayGrid | None = None,
                      schedule: QuantileSchedule | None = None,
                      basis: BasisSpec | None = None, workers: int = 1) -> AdfGrid:
    """Pair-averaged QR estimator on every ray of ``grid``.

    All ``2m`` quantile levels of a ray are fitted as one warm-started path;
    rays are independent and may run on ``workers`` processes.
    """
    grid = grid or RayGrid()
    schedule = schedule or QuantileSchedule.linear()
    basis = basis or BasisSpec(degree=3)
    Z = _design(data, basis)
    m = len(schedule)
    levels = np.concatenate([schedule.q1, schedule.q2])
    fn = partial(_ray_fits, x=data.x, y=data.y, Z=Z, levels=levels)
    res = pmap(fn, grid.rays, workers=workers)
    coeffs = np.array([r[0] for r in res])
    conv = np.array([r[2] for r in res])
    c1, c2 = coeffs[:, :m], coeffs[:, m:]
    v = np.einsum("tp,rjp->rjt", Z, c2 - c1)
    flags = np.any(v < EPS_V, axis=1)
    # fixed summation order over pairs keeps the average reproducible
    values = (schedule.log_ratio[None, :, None] / np.maximum(v, EPS_V)).mean(axis=1)
    return AdfGrid(
        rays=grid.rays, t=np.asarray(data.t), day=data.day, schedule=schedule, basis=basis,
        coeffs_q1=c1, coeffs_q2=c2, converged=conv, values=values, flags=flags,
    )


# Bernstein-Bezier estimator


def bernstein_matrix(w, k: int) -> np.ndarray:
    """Bernstein basis ``C(k, i) w^i (1 - w)^(k - i)``, shape (len(w), k + 1)."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    i = np.arange(k + 1)
    return special.comb(k, i)[None, :] * w[:, None] ** i * (1.0 - w[:, None]) ** (k - i)


def _link(eta, link):
    if link == "exponential":
        return np.exp(eta)
    return special.expit(eta)


def _link_deriv(eta, link):
    if link == "exponential":
        return np.exp(eta)
    s = special.expit(eta)
    return s * (1.0 - s)


def _inv_link(beta, link):
    if link == "exponential":
        return np.log(beta)
    return special.logit(beta)


@dataclass(frozen=True, eq=False)
class BernsteinModel:
    """``lambda(w | z) = sum_i beta_i(z) C(k, i) w^i (1 - w)^(k - i)``.

    ``beta_0 = beta_k = 1`` and ``beta_i(z) = h(z @ psi[i - 1])`` for
    ``i = 1..k-1`` with ``h`` the exponential or logistic link.
    """

    degree: int
    link: str
    psi: np.ndarray
    basis: BasisSpec
    objective: float = float("nan")
    converged: bool = True

    def __post_init__(self):
        if not 2 <= self.degree <= 15:
            raise ValueError("Bernstein degree must lie in 2..15")
        if self.link not in LINKS:
            raise ValueError(f"link must be one of {LINKS}")
        psi = np.atleast_2d(np.asarray(self.psi, dtype=float))
        if psi.shape != (self.degree - 1, self.basis.n_columns):
            raise ValueError(f"psi must have shape {(self.degree - 1, self.basis.n_columns)}")
        object.__setattr__(self, "psi", psi)

    def coefficients(self, z) -> np.ndarray:
        """All ``beta_i`` at covariate rows ``z``: shape (k + 1, len(z))."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        inner = _link(self.psi @ z.T, self.link)
        ones = np.ones((1, z.shape[0]))
        return np.vstack([ones, inner, ones])

    def evaluate(self, w, z) -> np.ndarray:
        """Values on the (w, z) product grid, shape (len(w), len(z))."""
        return bernstein_matrix(w, self.degree) @ self.coefficients(z)

    def evaluate_t(self, w, t, day=None):
        return self.evaluate(w, self.basis.design(t, day))

    def to_dict(self) -> dict:
        return {
            "k": self.degree,
            "link": self.link,
            "basis": self.basis.to_dict(),
            "psi": self.psi.tolist(),
            "objective": self.objective,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BernsteinModel":
        return cls(
            degree=int(d["k"]), link=d["link"], psi=np.asarray(d["psi"], dtype=float),
            basis=BasisSpec.from_dict(d["basis"]), objective=float(d["objective"]),
            converged=bool(d["converged"]),
        )


def bernstein_eval(model: BernsteinModel, w, z):
    out = model.evaluate(w, z)
    return float(out[0, 0]) if np.ndim(w) == 0 and np.asarray(z).ndim == 1 else out


@dataclass(frozen=True)
class BernsteinFitConfig:
    degree: int = 7
    link: str = "exponential"
    starts: int = 5
    max_evals: int = 50_000
    tol: float = 1e-7
    seed: int = 0
    max_times: int | None = 100

    def __post_init__(self):
        if not 2 <= self.degree <= 15:
            raise ValueError("Bernstein degree must lie in 2..15")
        if self.link not in LINKS:
            raise ValueError(f"link must be one of {LINKS}")
        if self.starts < 1:
            raise ValueError("need at least one start")


def _time_subset(T: int, max_times: int | None) -> np.ndarray:
    if max_times is None or T <= max_times:
        return np.arange(T)
    return np.unique(np.round(np.linspace(0, T - 1, max_times)).astype(int))


class _Objective:
    """S(theta) on standardised covariates; theta is psi flattened (k - 1, p)."""

    def __init__(self, target, weight, B, Zs, link):
        self.B = B
        self.Bi = B[:, 1:-1]
        self.base = (B[:, :1] + B[:, -1:])
        self.target = target
        self.weight = weight
        self.wsum = weight.sum()
        self.Zs = Zs
        self.link = link
        self.km1 = B.shape[1] - 2
        self.p = Zs.shape[1]

    def model(self, theta):
        eta = theta.reshape(self.km1, self.p) @ self.Zs.T
        # trial points far out overflow the exponential link; they score inf
        with np.errstate(over="ignore", invalid="ignore"):
            return self.base + self.Bi @ _link(eta, self.link), eta

    def __call__(self, theta):
        lam, _ = self.model(theta)
        with np.errstate(invalid="ignore"):
            val = np.sum(self.weight * np.abs(self.target - lam)) / self.wsum
        return val if np.isfinite(val) else np.inf

    def irls(self, theta, iters=30):
        """Reweighted nonlinear least squares towards the L1 optimum."""
        best, fbest = theta, self(theta)
        for _ in range(iters):
            lam, _ = self.model(theta)
            r = self.target - lam
            wt = self.weight / np.maximum(np.abs(r), 1e-4)
            sw = np.sqrt(wt).ravel()

            def resid(th):
                lm, _ = self.model(th)
                with np.errstate(invalid="ignore"):
                    return sw * (self.target - lm).ravel()

            def jac(th):
                _, eta = self.model(th)
                d = _link_deriv(eta, self.link)
                J = -(self.Bi[:, :, None, None] * d[None, :, None, :] * self.Zs.T[None, None, :, :])
                J = J.transpose(0, 3, 1, 2).reshape(-1, self.km1 * self.p)
                return sw[:, None] * J

            try:
                sol = optimize.least_squares(resid, theta, jac=jac, method="lm", max_nfev=50)
            except (ValueError, np.linalg.LinAlgError):
                break
            theta = sol.x
            f = self(theta)
            if f < fbest - 1e-12:
                best, fbest = theta, f
            elif f >= fbest:
                break
        return best, fbest


def _standardise_rows(Z):
    mean = Z.mean(axis=0)
    sd = Z.std(axis=0)
    const = sd == 0
    if const.sum() != 1:
        raise ValueError("coefficient basis needs exactly one constant column")
    T = np.ones_like(Z)
    T[:, ~const] = (Z[:, ~const] - mean[~const]) / sd[~const]
    return T, mean, sd, const


def fit_bernstein(grid: AdfGrid, config: BernsteinFitConfig | None = None,
                  basis: BasisSpec | None = None, degree: int | None = None,
                  link: str | None = None) -> BernsteinModel:
    """Least-absolute-deviation Bernstein fit to the pair-averaged QR grid.

    Minimises the mean absolute difference to the unbounded QR estimates
    over all rays and time points (flagged cells carry weight zero). Time
    points are thinned to ``config.max_times`` evenly spaced indices; the QR
    surface is a smooth function of time so this changes the objective only
    marginally. Starts: constant coefficients matching the time-averaged QR
    estimate at rays ``i / k``, a reweighted least-squares refinement of it,
    and random perturbations of the best so far, each run through
    Nelder-Mead. The best point over all starts is returned.
    """
    config = config or BernsteinFitConfig()
    if degree is not None or link is not None:
        config = BernsteinFitConfig(
            degree=degree or config.degree, link=link or config.link, starts=config.starts,
            max_evals=config.max_evals, tol=config.tol, seed=config.seed,
            max_times=config.max_times,
        )
    basis = basis or BasisSpec(degree=1)
    k, lk = config.degree, config.link
    values = grid.values
    if values.ndim != 2 or values.shape[0] != grid.rays.size:
        raise ValueError("grid values must be (rays, times)")
    idx = _time_subset(values.shape[1], config.max_times)
    target = values[:, idx]
    weight = (~grid.flags[:, idx]).astype(float)
    if weight.sum() == 0:
        raise NumericalError("every grid cell is flagged", stage="fit_bernstein")
    if not np.all(np.isfinite(target[weight > 0])):
        raise NumericalError("non-finite QR estimates", stage="fit_bernstein")
    Zraw = basis.design(grid.t[idx], None if grid.day is None else grid.day[idx])
    Zs, mean, sd, const = _standardise_rows(Zraw)
    B = bernstein_matrix(grid.rays, k)
    obj = _Objective(target, weight, B, Zs, lk)
    p = Zs.shape[1]
    ic = int(np.flatnonzero(const)[0])

    # constant start: beta_i = time-averaged estimate at ray i / k
    tavg = np.array([
        np.average(values[:, idx][np.argmin(np.abs(grid.rays - i / k))],
                   weights=np.maximum(weight[np.argmin(np.abs(grid.rays - i / k))], 1e-12))
        for i in range(1, k)
    ])
    if lk == "logit":
        tavg = np.clip(tavg, 1e-3, 1 - 1e-3)
    else:
        tavg = np.maximum(tavg, 1e-3)
    theta0 = np.zeros((k - 1, p))
    theta0[:, ic] = _inv_link(tavg, lk)
    theta0 = theta0.ravel()

    rng = np.random.default_rng(config.seed)
    opts = {"maxfev": config.max_evals, "xatol": 1e-9, "fatol": config.tol, "adaptive": True}

    def nm(th):
        res = optimize.minimize(obj, th, method="Nelder-Mead", options=opts)
        return res.x, float(res.fun)

    f0 = obj(theta0)
    candidates = [(theta0, f0)]
    th_irls, f_irls = obj.irls(theta0)
    candidates.append((th_irls, f_irls))
    starts = [theta0, th_irls]
    best_th, best_f = min(candidates, key=lambda c: c[1])
    for s in range(config.starts):
        if s < len(starts):
            st = starts[s]
        else:
            st = best_th + rng.normal(scale=0.1, size=best_th.size)
        th, f = nm(st)
        # one restart from the end point refreshes a collapsed simplex
        th2, f2 = nm(th)
        if f2 < f:
            th, f = th2, f2
        if f < best_f:
            best_th, best_f = th, f
    psi_s = best_th.reshape(k - 1, p)
    psi = np.zeros_like(psi_s)
    psi[:, ~const] = psi_s[:, ~const] / sd[~const]
    psi[:, ic] = (psi_s[:, ic] - psi_s[:, ~const] @ (mean[~const] / sd[~const])) / Zraw[0, ic]
    return BernsteinModel(degree=k, link=lk, psi=psi, basis=basis, objective=best_f,
                          converged=bool(np.isfinite(best_f)))
