"""Return curves from a fitted angular dependence function.

On exponential margins the min-projection along ray ``w`` satisfies
``Pr(K_w > u + r) ~ (1 - q1) exp(-lambda(w) r)`` above its ``q1`` quantile
``u``, so the level-``p`` point on ray ``w`` is ``(w (r + u), (1 - w)(r + u))``
with ``r = -log(p / (1 - q1)) / lambda(w)``. Curves from every quantile pair
are averaged coordinatewise.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import isotonic_regression

from .adf import AdfGrid, BernsteinModel
from .margins import MarginalModel, from_exponential

MARGINS = ("exponential", "original")


@dataclass(frozen=True, eq=False)
class ReturnCurve:
    """Points ``(w, x, y)`` of the level-``p`` joint survival curve at time ``t``."""

    p: float
    t: float
    w: np.ndarray
    x: np.ndarray
    y: np.ndarray
    margin: str = "exponential"
    flags: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.margin not in MARGINS:
            raise ValueError(f"margin must be one of {MARGINS}")
        w = np.asarray(self.w, dtype=float)
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if not (w.ndim == 1 and w.shape == x.shape == y.shape):
            raise ValueError("w, x and y must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("curve coordinates must be finite")
        flags = np.zeros(w.shape, dtype=bool) if self.flags is None else np.asarray(self.flags, bool)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "flags", flags)

    def __len__(self) -> int:
        return self.w.size

    def is_ordered(self) -> bool:
        return bool(np.all(np.diff(self.x) >= 0) and np.all(np.diff(self.y) <= 0))

    def to_dict(self) -> dict:
        return {
            "p": self.p, "t": float(self.t), "margin": self.margin, "w": self.w.tolist(),
            "x": self.x.tolist(), "y": self.y.tolist(), "flags": self.flags.tolist(),
        }


def exp_curve(lam, thresholds, rays, p: float, q1: float, t: float = 0.0) -> ReturnCurve:
    """Single-pair return curve on exponential margins.

    Parameters
    ----------
    lam : array (rays,)
        Constrained ADF values at time ``t``.
    thresholds : array (rays,)
        Fitted ``q1`` quantile of the min-projection on each ray at time ``t``.
    p : float
        Joint survival probability; must be below ``1 - q1``.
    """
    if not 0.0 < p < 1.0 - q1:
        raise ValueError(f"need 0 < p < 1 - q1 = {1.0 - q1:.6g}, got p = {p}")
    w = np.asarray(rays, dtype=float)
    lam = np.asarray(lam, dtype=float)
    u = np.asarray(thresholds, dtype=float)
    if np.any(lam < np.maximum(w, 1.0 - w) - 1e-12):
        raise ValueError("ADF values must respect the lower bound max(w, 1 - w)")
    r = -np.log(p / (1.0 - q1)) / lam
    s = r + u
    return ReturnCurve(p=float(p), t=float(t), w=w, x=w * s, y=(1.0 - w) * s)


def average_curves(curves) -> ReturnCurve:
    """Coordinatewise mean over per-pair curves sharing a ray grid."""
    curves = list(curves)
    if not curves:
        raise ValueError("no curves to average")
    w = curves[0].w
    for c in curves[1:]:
        if c.w.shape != w.shape or np.any(c.w != w):
            raise ValueError("curves are on different ray grids")
    x = np.mean([c.x for c in curves], axis=0)
    y = np.mean([c.y for c in curves], axis=0)
    flags = np.any([c.flags for c in curves], axis=0)
    c0 = curves[0]
    return ReturnCurve(p=c0.p, t=c0.t, w=w, x=x, y=y, margin=c0.margin, flags=flags)


def _bounded_isotonic(v, increasing: bool):
    """L2 monotone projection of ``v`` keeping both end values fixed."""
    v = np.asarray(v, dtype=float)
    if v.size <= 2:
        return v.copy()
    inner = isotonic_regression(v[1:-1], increasing=increasing).x
    lo, hi = (v[0], v[-1]) if increasing else (v[-1], v[0])
    out = v.copy()
    # clipping an isotonic fit to a box is the projection with the box constraint
    out[1:-1] = np.minimum(np.maximum(inner, lo), max(lo, hi))
    return out


def enforce_ordering(curve: ReturnCurve) -> ReturnCurve:
    """Make ``x`` nondecreasing and ``y`` nonincreasing in ``w``; endpoints stay put."""
    return replace(
        curve,
        x=_bounded_isotonic(curve.x, increasing=True),
        y=_bounded_isotonic(curve.y, increasing=False),
    )


def _lambda_at(adf, grid: AdfGrid, t, day):
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    d_arr = None if day is None else np.atleast_1d(np.asarray(day, dtype=float))
    if adf is None or isinstance(adf, AdfGrid):
        return grid.constrained(t_arr, d_arr)[:, 0]
    if isinstance(adf, BernsteinModel):
        lam = adf.evaluate(grid.rays, adf.basis.design(t_arr, d_arr))[:, 0]
        return np.maximum(lam, np.maximum(grid.rays, 1.0 - grid.rays))
    lam = np.asarray(adf(grid.rays, t_arr[0]), dtype=float)
    return np.maximum(lam, np.maximum(grid.rays, 1.0 - grid.rays))


def return_curve(grid: AdfGrid, p: float, t: float, day=None, adf=None,
                 ordered: bool = True) -> ReturnCurve:
    """Pair-averaged return curve at time ``t`` on exponential margins.

    ``adf`` selects the dependence estimate: ``None`` for the bounded QR
    estimate stored in ``grid``, a :class:`BernsteinModel`, or a callable
    ``(rays, t) -> values``. Thresholds always come from the grid's ``q1`` fits.
    """
    lam = _lambda_at(adf, grid, t, day)
    d_arr = None if day is None else np.atleast_1d(np.asarray(day, dtype=float))
    u = grid.thresholds(np.atleast_1d(np.asarray(t, dtype=float)), d_arr)[:, :, 0]
    curves = [
        exp_curve(lam, u[:, j], grid.rays, p, q1, t) for j, q1 in enumerate(grid.schedule.q1)
    ]
    out = average_curves(curves)
    return enforce_ordering(out) if ordered else out


def back_transform(curve: ReturnCurve, models, t, day=None) -> ReturnCurve:
    """Map an exponential-margin curve to the original scale at covariate ``(t, day)``.

    Each coordinate ``v`` has marginal survival ``exp(-v)``; it is inverted
    through the semi-empirical distribution and the location-scale map.
    Coordinates clamped at a bounded tail's endpoint or below the sample
    minimum are flagged.
    """
    if curve.margin != "exponential":
        raise ValueError("curve is not on exponential margins")
    mx, my = models
    if not (isinstance(mx, MarginalModel) and isinstance(my, MarginalModel)):
        raise TypeError("models must be a pair of MarginalModel")
    tt = np.full(curve.w.size, float(t))
    dd = None if day is None else np.full(curve.w.size, float(day))
    x, fx = from_exponential(curve.x, mx, tt, dd, return_flags=True)
    y, fy = from_exponential(curve.y, my, tt, dd, return_flags=True)
    return ReturnCurve(p=curve.p, t=curve.t, w=curve.w, x=x, y=y, margin="original",
                       flags=curve.flags | fx | fy)
