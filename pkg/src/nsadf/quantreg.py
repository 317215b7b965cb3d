"""Linear quantile regression by exact check-loss minimisation.

The solver is a fixed-level exterior-point simplex on the primal problem
(Barrodale-Roberts style steepest edge with a weighted-median line search).
For a sequence of nearby levels the basis of one level warm-starts the next,
and points lying well below the lowest fitted plane are aggregated into a
single gradient term ("globbing"). The aggregation is verified after the
path is solved and any level it invalidates is re-solved on the full data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, sparse

from .basis import column_scales
from .errors import NumericalError, SingularDesignError

__all__ = [
    "QuantileFit",
    "QuantileRegressionError",
    "check_loss",
    "fit_quantile",
    "fit_quantile_path",
    "predict_quantile",
]


class QuantileRegressionError(NumericalError):
    def __init__(self, message: str):
        super().__init__(message, stage="quantile_regression")


@dataclass(frozen=True)
class QuantileFit:
    q: float
    coeffs: np.ndarray
    achieved_loss: float
    converged: bool

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "coeffs": [float(c) for c in self.coeffs],
            "achieved_loss": self.achieved_loss,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuantileFit":
        return cls(
            q=float(d["q"]),
            coeffs=np.asarray(d["coeffs"], dtype=float),
            achieved_loss=float(d["achieved_loss"]),
            converged=bool(d["converged"]),
        )


def check_loss(residual, q: float):
    """Pinball loss ``r * (q - 1{r < 0})``, elementwise."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {q}")
    r = np.asarray(residual, dtype=float)
    return r * (q - (r < 0))


def predict_quantile(fit: QuantileFit, z) -> np.ndarray | float:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != fit.coeffs.size:
        raise ValueError(
            f"basis row has {z.shape[-1]} entries, fit has {fit.coeffs.size} coefficients"
        )
    return z @ fit.coeffs


class _Unbounded(Exception):
    pass


class _PivotLimit(Exception):
    pass


def _initial_basis(X: np.ndarray, y: np.ndarray, q: float) -> np.ndarray:
    """Greedy full-rank basis from points closest to the shifted OLS fit."""
    n, p = X.shape
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ beta
    r = r - np.quantile(r, q)
    basis: list[int] = []
    for i in np.argsort(np.abs(r), kind="stable"):
        cand = basis + [int(i)]
        if np.linalg.matrix_rank(X[cand]) == len(cand):
            basis = cand
            if len(basis) == p:
                return np.asarray(basis)
    raise SingularDesignError("design matrix is rank deficient", stage="quantile_regression")


def _simplex(X, y, q, h, g_extra=None, max_pivots=20000, tol=1e-11):
    """Exterior simplex at level ``q`` from basis ``h``; returns (beta, h, pivots).

    The gradient of the nonbasic check loss is kept up to date by adding
    only the points whose residual sign changes at each pivot.
    """
    n, p = X.shape
    h = np.array(h, copy=True)
    beta = np.linalg.solve(X[h], y[h])
    r = y - X @ beta
    r[h] = 0.0
    if not np.any(r):
        return beta, h, 0
    psi = np.where(r < 0, q - 1.0, q)
    psi[h] = 0.0
    g = psi @ X
    if g_extra is not None:
        g = g + g_extra
    lo_ok = q - 1.0
    pivots = 0
    while True:
        Xh_inv = np.linalg.inv(X[h])
        d = -(Xh_inv.T @ g)
        lo = d - lo_ok
        hi = q - d
        viol = np.minimum(lo, hi)
        j = int(np.argmin(viol))
        if viol[j] >= -tol * (1.0 + np.abs(d).max()):
            return beta, h, pivots
        if pivots >= max_pivots:
            raise _PivotLimit
        if lo[j] < hi[j]:
            sgn, slope = 1.0, d[j] + 1.0 - q
        else:
            sgn, slope = -1.0, q - d[j]
        delta = sgn * Xh_inv[:, j]
        a = X @ delta
        # nonbasic points whose residual reaches zero along delta; psi records
        # the side of zero each point sits on and is 0 for basis points
        idx = np.flatnonzero(psi * a > 0)
        if idx.size == 0:
            raise _Unbounded
        tb = np.maximum(r[idx] / a[idx], 0.0)
        absa = np.abs(a[idx])
        k = min(idx.size, 32)
        while True:
            part = np.argpartition(tb, k - 1)[:k] if k < idx.size else np.arange(idx.size)
            order = part[np.argsort(tb[part], kind="stable")]
            cs = slope + np.cumsum(absa[order])
            pos = int(np.searchsorted(cs, 0.0, side="left"))
            if pos < order.size or k == idx.size:
                break
            k = min(idx.size, 8 * k)
        pos = min(pos, order.size - 1)
        sel = order[pos]
        step = tb[sel]
        i_new = int(idx[sel])
        crossed = idx[order[:pos]]
        beta = beta + step * delta
        r -= step * a
        r[h] = 0.0
        # crossed points flip sign; the entering point joins the basis
        if crossed.size:
            new_psi = np.where(psi[crossed] > 0, q - 1.0, q)
            g += (new_psi - psi[crossed]) @ X[crossed]
            psi[crossed] = new_psi
            r[crossed] = np.where(new_psi > 0, np.maximum(r[crossed], 0.0),
                                  np.minimum(r[crossed], 0.0))
        g -= psi[i_new] * X[i_new]
        psi[i_new] = 0.0
        r[i_new] = 0.0
        leaving = h[j]
        psi[leaving] = q - 1.0 if sgn > 0 else q
        r[leaving] = -step * sgn
        g += psi[leaving] * X[leaving]
        h[j] = i_new
        pivots += 1


def _highs(X, y, q):
    """Reference LP solve of the check-loss problem with HiGHS."""
    n, p = X.shape
    c = np.concatenate([np.zeros(p), np.full(n, q), np.full(n, 1.0 - q)])
    eye = sparse.identity(n, format="csr")
    A = sparse.hstack([sparse.csr_matrix(X), eye, -eye]).tocsr()
    bounds = [(None, None)] * p + [(0, None)] * (2 * n)
    res = optimize.linprog(c, A_eq=A, b_eq=y, bounds=bounds, method="highs")
    return res.x[:p] if res.status == 0 else None, res.status == 0


def _prepare(design, response):
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
        raise ValueError("design must be (n, p) and response length n")
    n, p = X.shape
    if p == 0:
        raise SingularDesignError("design has no columns", stage="quantile_regression")
    if n < p:
        raise SingularDesignError(f"{n} rows for {p} coefficients", stage="quantile_regression")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("design and response must be finite")
    try:
        scale = column_scales(X)
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError(str(exc), stage="quantile_regression") from exc
    Xs = X / scale
    if np.linalg.matrix_rank(Xs) < p:
        raise SingularDesignError("design matrix is rank deficient", stage="quantile_regression")
    return X, y, Xs, scale


def _solve_level(Xs, y, q, h=None):
    if h is None:
        h = _initial_basis(Xs, y, q)
    try:
        beta, h, _ = _simplex(Xs, y, q, h)
        return beta, h, True
    except (_Unbounded, _PivotLimit, np.linalg.LinAlgError):
        beta, ok = _highs(Xs, y, q)
        if beta is None:
            beta = np.linalg.lstsq(Xs, y, rcond=None)[0]
        return beta, None, ok


def _finish(X, y, q, beta_s, scale, converged) -> QuantileFit:
    coeffs = beta_s / scale
    loss = float(np.sum(check_loss(y - X @ coeffs, q)))
    return QuantileFit(q=float(q), coeffs=coeffs, achieved_loss=loss, converged=bool(converged))


def fit_quantile(design, response, q: float) -> QuantileFit:
    """Minimise the total check loss of ``response - design @ coeffs`` at level ``q``.

    Parameters
    ----------
    design : array of shape (n, p)
        Covariate rows; columns are rescaled internally.
    response : array of shape (n,)
    q : float
        Quantile level in (0, 1).

    Returns
    -------
    QuantileFit
        Coefficients on the scale of ``design``. ``converged`` is set when the
        simplex optimality conditions hold or the LP fallback reports success.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {q}")
    X, y, Xs, scale = _prepare(design, response)
    beta, _, ok = _solve_level(Xs, y, q)
    return _finish(X, y, q, beta, scale, ok)


def fit_quantile_path(design, response, qs, keep_frac: float = 0.3) -> list[QuantileFit]:
    """Fit several quantile levels of one regression problem.

    Levels are solved in increasing order with warm starts. When every level
    is at least ``1 - keep_frac``, points below the ``1 - keep_frac`` residual
    quantile of the lowest-level fit are aggregated; the aggregation is exact
    whenever those points stay strictly below every fitted plane, which is
    checked, and violated levels are re-solved on all data.

    Returns fits in the order of ``qs``.
    """
    qs = np.asarray(qs, dtype=float)
    if qs.ndim != 1 or qs.size == 0:
        raise ValueError("need a nonempty sequence of quantile levels")
    if np.any((qs <= 0) | (qs >= 1)):
        raise ValueError("quantile levels must lie in (0, 1)")
    X, y, Xs, scale = _prepare(design, response)
    n, p = Xs.shape
    order = np.argsort(qs, kind="stable")
    out: list[QuantileFit | None] = [None] * qs.size

    q0 = qs[order[0]]
    beta, h, ok = _solve_level(Xs, y, q0)
    use_glob = (
        h is not None
        and 0.0 < keep_frac < 1.0
        and q0 >= 1.0 - keep_frac
        and int(keep_frac * n) >= 10 * p
    )
    if not use_glob:
        for k in order:
            beta, h, ok = _solve_level(Xs, y, qs[k], h)
            out[k] = _finish(X, y, qs[k], beta, scale, ok)
        return out

    r = y - Xs @ beta
    cut = np.quantile(r, 1.0 - keep_frac)
    active = np.flatnonzero((r >= cut) | np.isin(np.arange(n), h))
    globbed = np.setdiff1d(np.arange(n), active, assume_unique=True)
    xs_glob = Xs[globbed].sum(axis=0)
    pos = np.full(n, -1)
    pos[active] = np.arange(active.size)
    Xa, ya = Xs[active], y[active]
    ha = pos[h]
    for k in order:
        q = qs[k]
        beta_k, ok_k = None, False
        if ha is not None:
            try:
                beta_k, ha, _ = _simplex(Xa, ya, q, ha, g_extra=(q - 1.0) * xs_glob)
                ok_k = True
            except (_Unbounded, _PivotLimit, np.linalg.LinAlgError):
                ha = None
        if ok_k and np.all(y[globbed] - Xs[globbed] @ beta_k < 0):
            out[k] = _finish(X, y, q, beta_k, scale, True)
            h = active[ha]
            continue
        hf = active[ha] if ha is not None else h
        beta_k, hf, ok_k = _solve_level(Xs, y, q, hf)
        out[k] = _finish(X, y, q, beta_k, scale, ok_k)
        if hf is not None:
            h = hf
            if np.all(pos[hf] >= 0):
                ha = pos[hf]
    return out
