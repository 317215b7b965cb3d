"""Marginal pre-processing: location-scale residuals, GPD tails and the
semi-empirical distribution function used for the transform to
standard exponential margins."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .basis import BasisSpec
from .errors import DegenerateSampleError, NumericalError, SingularDesignError

XI_SERIES = 1e-8
XI_GRID = np.round(np.arange(-0.9, 1.5 + 1e-9, 0.05), 10)
PENALTY_GRID = np.logspace(-3, 6, 20)


# GPD primitives


@dataclass(frozen=True)
class GpdParams:
    tau: float
    xi: float
    threshold: float = 0.0
    threshold_quantile: float = float("nan")
    loglik: float = float("nan")
    converged: bool = True

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"GPD scale must be positive, got {self.tau}")

    @property
    def upper_endpoint(self) -> float:
        return self.threshold - self.tau / self.xi if self.xi < 0 else np.inf


@dataclass(frozen=True, eq=False)
class NsGpdParams:
    """GPD with ``log tau(z) = z @ tau_coeffs`` and constant shape."""

    tau_coeffs: np.ndarray
    xi: float
    threshold: float = 0.0
    threshold_quantile: float = float("nan")
    loglik: float = float("nan")
    converged: bool = True

    def tau(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[1] != self.tau_coeffs.size:
            raise ValueError("basis row length does not match tail coefficients")
        return np.exp(z @ self.tau_coeffs)

    def to_dict(self) -> dict:
        return {
            "tau_coeffs": [float(c) for c in self.tau_coeffs],
            "xi": self.xi,
            "threshold": self.threshold,
            "threshold_quantile": self.threshold_quantile,
            "loglik": self.loglik,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NsGpdParams":
        return cls(
            tau_coeffs=np.asarray(d["tau_coeffs"], dtype=float),
            xi=float(d["xi"]),
            threshold=float(d["threshold"]),
            threshold_quantile=float(d["threshold_quantile"]),
            loglik=float(d["loglik"]),
            converged=bool(d["converged"]),
        )


def _unpack(params):
    if isinstance(params, GpdParams):
        return params.tau, params.xi
    tau, xi = params
    return tau, xi


def gpd_log_sf(x, tau, xi):
    """log Pr(X > x) for excesses ``x >= 0``; ``-inf`` beyond a finite endpoint."""
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("GPD scale must be positive")
    z = x / tau
    if abs(xi) < XI_SERIES:
        return -z + xi * z * z / 2.0
    arg = xi * z
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.log1p(arg) / xi
    return np.where(1.0 + arg <= 0.0, -np.inf, out)


def gpd_cdf(x, params):
    """GPD distribution function of an excess ``x``.

    ``params`` is a :class:`GpdParams` or a ``(tau, xi)`` pair. Excesses past a
    finite upper endpoint give 1.
    """
    tau, xi = _unpack(params)
    return -np.expm1(gpd_log_sf(x, tau, xi))


def gpd_quantile_sf(s, tau, xi):
    """Excess whose survival probability is ``s``."""
    s = np.asarray(s, dtype=float)
    ls = np.log(s)
    if abs(xi) < XI_SERIES:
        return tau * (-ls - xi * ls * ls / 2.0)
    return tau * np.expm1(-xi * ls) / xi


def _nll_terms(eta, xi, x):
    """Per-observation log-likelihood and derivatives in (eta = log tau, xi)."""
    z = x * np.exp(-eta)
    s = 1.0 + xi * z
    if np.any(s <= 0):
        return None
    A = np.log1p(xi * z)
    d_eta = -1.0 + (1.0 + xi) * z / s
    h_ee = -(1.0 + xi) * z / s**2
    h_ex = z * (1.0 - z) / s**2
    if abs(xi) < 1e-6:
        c1 = z - z * z / 2.0
        c2 = z**3 / 3.0 - z * z / 2.0
        c3 = z**3 / 3.0 - z**4 / 4.0
        ll = -eta - (z + xi * c1 + xi**2 * c2 + xi**3 * c3)
        d_xi = -c1 - 2.0 * xi * c2 - 3.0 * xi**2 * c3
        h_xx = -2.0 * c2 - 6.0 * xi * c3
    else:
        ll = -eta - (1.0 + 1.0 / xi) * A
        d_xi = A / xi**2 - (1.0 + 1.0 / xi) * z / s
        h_xx = 2.0 * z / (s * xi**2) - 2.0 * A / xi**3 + (1.0 + 1.0 / xi) * z * z / s**2
    return ll, d_eta, d_xi, h_ee, h_ex, h_xx


def _ns_loglik(theta, Z, x, derivs=True):
    beta, xi = theta[:-1], theta[-1]
    if xi <= -1.0:
        return (-np.inf, None, None) if derivs else -np.inf
    terms = _nll_terms(Z @ beta, xi, x)
    if terms is None:
        return (-np.inf, None, None) if derivs else -np.inf
    ll, d_eta, d_xi, h_ee, h_ex, h_xx = terms
    total = float(ll.sum())
    if not derivs:
        return total
    grad = np.concatenate([Z.T @ d_eta, [d_xi.sum()]])
    p = Z.shape[1]
    H = np.empty((p + 1, p + 1))
    H[:p, :p] = (Z * h_ee[:, None]).T @ Z
    H[:p, p] = H[p, :p] = Z.T @ h_ex
    H[p, p] = h_xx.sum()
    return total, grad, H


def _newton_polish(theta, Z, x, max_iter=100, gtol=1e-9):
    """Damped Newton ascent on the GPD log-likelihood; returns (theta, ll, converged)."""
    ll, g, H = _ns_loglik(theta, Z, x)
    if not np.isfinite(ll):
        return theta, ll, False
    n = x.size
    for _ in range(max_iter):
        if np.max(np.abs(g)) < gtol * max(1.0, n):
            break
        damp = 0.0
        scale = max(1.0, np.max(np.abs(np.diag(H))))
        improved = False
        for _ in range(40):
            try:
                step = np.linalg.solve(-H + damp * np.eye(H.shape[0]), g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                cand = theta + step
                llc = _ns_loglik(cand, Z, x, derivs=False)
                if np.isfinite(llc) and llc >= ll - 1e-12 * abs(ll):
                    improved = True
                    break
            damp = scale * 1e-6 if damp == 0.0 else damp * 10.0
        if not improved:
            break
        theta = cand
        ll, g, H = _ns_loglik(theta, Z, x)
    gnorm = np.max(np.abs(g))
    ok = bool(gnorm < 1e-6 * max(1.0, n) and np.all(np.linalg.eigvalsh(H) < 0))
    return theta, ll, ok


def _check_excesses(excesses):
    x = np.asarray(excesses, dtype=float).ravel()
    if x.size < 10:
        raise ValueError(f"need at least 10 excesses, got {x.size}")
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise ValueError("excesses must be finite and nonnegative")
    if np.ptp(x) == 0:
        raise DegenerateSampleError("all excesses are equal", stage="gpd_fit")
    return x


def _profile_tau(x, xi):
    """Scale maximising the likelihood for fixed shape; returns (log tau, ll)."""
    m = x.mean()
    lo = np.log(m) - 8.0
    if xi < 0:
        lo = max(lo, np.log(-xi * x.max()) + 1e-9)
    hi = max(np.log(m) + 3.0 + np.log1p(abs(xi)), lo + 5.0)
    f = lambda le: -_ns_loglik(np.array([le, xi]), np.ones((x.size, 1)), x, derivs=False)
    res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-10})
    return res.x, -res.fun


def gpd_fit(excesses, threshold: float = 0.0, threshold_quantile: float = float("nan")) -> GpdParams:
    """Maximum-likelihood GPD fit to threshold excesses.

    The shape is profiled over a grid on [-0.9, 1.5] in steps of 0.05, the
    best grid point is refined with Nelder-Mead on (log tau, xi) and then
    polished by damped Newton steps with analytic derivatives. The returned
    log-likelihood is never below that of any profile grid point.
    """
    x = _check_excesses(excesses)
    Z = np.ones((x.size, 1))
    prof = [(xi,) + _profile_tau(x, xi) for xi in XI_GRID]
    xi0, le0, ll0 = max(prof, key=lambda r: r[2])
    nm = optimize.minimize(
        lambda th: -_ns_loglik(th, Z, x, derivs=False) if th[1] > -1 else np.inf,
        np.array([le0, xi0]),
        method="Nelder-Mead",
        options={"xatol": 1e-9, "fatol": 1e-10, "maxiter": 4000},
    )
    theta = nm.x if np.isfinite(nm.fun) and -nm.fun >= ll0 else np.array([le0, xi0])
    theta, ll, ok = _newton_polish(theta, Z, x)
    if not np.isfinite(ll) or ll < ll0:
        theta, ll, ok = np.array([le0, xi0]), ll0, False
    return GpdParams(
        tau=float(np.exp(theta[0])),
        xi=float(theta[1]),
        threshold=float(threshold),
        threshold_quantile=float(threshold_quantile),
        loglik=float(ll),
        converged=ok,
    )


def gpd_loglik(excesses, tau, xi) -> float:
    x = np.asarray(excesses, dtype=float)
    tau = np.broadcast_to(np.asarray(tau, dtype=float), x.shape)
    ll = _nll_terms(np.log(tau), xi, x)
    return -np.inf if ll is None or xi <= -1 else float(ll[0].sum())


def gpd_fit_ns(excesses, covariates, threshold: float = 0.0,
               threshold_quantile: float = float("nan")) -> NsGpdParams:
    """GPD fit with log-linear scale in ``covariates`` and constant shape.

    An intercept-only design reproduces :func:`gpd_fit` exactly.
    """
    x = _check_excesses(excesses)
    Z = np.asarray(covariates, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[0] != x.size:
        raise ValueError("covariate rows must align with excesses")
    if Z.shape[1] == 0:
        raise SingularDesignError("empty basis row", stage="gpd_fit_ns")
    if np.all(Z == Z[0]):
        if Z.shape[1] != 1 or Z[0, 0] == 0:
            raise SingularDesignError("constant multi-column design", stage="gpd_fit_ns")
        fit = gpd_fit(x, threshold, threshold_quantile)
        return NsGpdParams(
            tau_coeffs=np.array([np.log(fit.tau) / Z[0, 0]]),
            xi=fit.xi,
            threshold=fit.threshold,
            threshold_quantile=fit.threshold_quantile,
            loglik=fit.loglik,
            converged=fit.converged,
        )
    mean = Z.mean(axis=0)
    sd = Z.std(axis=0)
    const = sd == 0
    if const.sum() != 1 or np.any(mean[const] == 0):
        raise SingularDesignError("tail design needs exactly one constant nonzero column",
                                  stage="gpd_fit_ns")
    # standardise non-constant columns, the constant column becomes ones
    T = np.ones_like(Z)
    T[:, ~const] = (Z[:, ~const] - mean[~const]) / sd[~const]
    if np.linalg.matrix_rank(T) < Z.shape[1]:
        raise SingularDesignError("tail design is rank deficient", stage="gpd_fit_ns")
    base = gpd_fit(x)
    theta0 = np.zeros(Z.shape[1] + 1)
    theta0[np.flatnonzero(const)[0]] = np.log(base.tau)
    theta0[-1] = base.xi
    ll0 = _ns_loglik(theta0, T, x, derivs=False)

    def negll(th):
        ll, g, _ = _ns_loglik(th, T, x)
        if not np.isfinite(ll):
            return np.inf, np.zeros_like(th)
        return -ll, -g

    res = optimize.minimize(negll, theta0, jac=True, method="BFGS",
                            options={"gtol": 1e-8, "maxiter": 2000})
    theta = res.x if np.isfinite(res.fun) and -res.fun >= ll0 else theta0
    theta, ll, ok = _newton_polish(theta, T, x)
    # back to the raw columns
    b = theta[:-1]
    coeffs = np.zeros_like(b)
    coeffs[~const] = b[~const] / sd[~const]
    ic = np.flatnonzero(const)[0]
    coeffs[ic] = (b[ic] - np.sum(b[~const] * mean[~const] / sd[~const])) / mean[ic]
    return NsGpdParams(
        tau_coeffs=coeffs,
        xi=float(theta[-1]),
        threshold=float(threshold),
        threshold_quantile=float(threshold_quantile),
        loglik=float(ll),
        converged=ok,
    )


# Location-scale body


@dataclass(frozen=True)
class LocScaleFit:
    loc_coeffs: np.ndarray
    scale_coeffs: np.ndarray
    penalty: float
    residuals: np.ndarray
    gcv: float = float("nan")


def _standardise(Z):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    sd = Z.std(axis=0)
    const = sd == 0
    ic = np.flatnonzero(const & (Z[0] != 0))
    if ic.size != 1 or const.sum() != 1:
        raise SingularDesignError("basis needs exactly one intercept column", stage="locscale_fit")
    mean = Z.mean(axis=0)
    T = np.ones_like(Z)
    T[:, ~const] = (Z[:, ~const] - mean[~const]) / sd[~const]
    if np.linalg.matrix_rank(T) < Z.shape[1]:
        raise SingularDesignError("design matrix is rank deficient", stage="locscale_fit")
    return T, mean, sd, const, int(ic[0])


def _unstandardise(b, mean, sd, const, ic, Z0):
    out = np.zeros_like(b)
    out[~const] = b[~const] / sd[~const]
    out[ic] = (b[ic] - np.sum(b[~const] * mean[~const] / sd[~const])) / Z0
    return out


def _locscale_std(y, T, lam, ic, w_ref=None, max_iter=200, tol=1e-12):
    """Penalised Gaussian ML for (mu, log sigma) on standardised columns."""
    n, p = T.shape
    P = lam * np.eye(p)
    P[ic, ic] = 0.0
    a = np.zeros(p)
    b = np.zeros(p)
    b[ic] = np.log(np.std(y))

    def objective(a, b):
        eta = T @ b
        e = y - T @ a
        return -np.sum(eta) - 0.5 * np.sum(e * e * np.exp(-2 * eta)) - 0.5 * (a @ P @ a + b @ P @ b)

    obj = objective(a, b)
    for _ in range(max_iter):
        w = np.exp(-2.0 * (T @ b))
        A = (T * w[:, None]).T @ T + P
        a = np.linalg.solve(A, (T * w[:, None]).T @ y)
        e2 = (y - T @ a) ** 2
        for _ in range(50):
            eta = T @ b
            u = e2 * np.exp(-2.0 * eta)
            g = T.T @ (u - 1.0) - P @ b
            H = 2.0 * (T * u[:, None]).T @ T + P
            step = np.linalg.solve(H, g)
            b = b + step
            if np.max(np.abs(step)) < 1e-13:
                break
        new = objective(a, b)
        if abs(new - obj) <= tol * (1.0 + abs(obj)):
            obj = new
            break
        obj = new
    w = np.exp(-2.0 * (T @ b))
    A = (T * w[:, None]).T @ T + P
    a = np.linalg.solve(A, (T * w[:, None]).T @ y)
    e = y - T @ a
    edf = np.trace(np.linalg.solve(A, (T * w[:, None]).T @ T))
    # weights held fixed across penalties, otherwise a larger sigma always wins
    wg = w if w_ref is None else w_ref
    gcv = n * np.sum(wg * e * e) / (n - edf) ** 2
    return a, b, gcv


def locscale_fit(series, basis, penalty: float | None = 0.0, penalty_grid=None) -> LocScaleFit:
    """Gaussian location-scale fit ``y_t = mu(z_t) + sigma(z_t) R_t``.

    ``mu`` is linear and ``log sigma`` is linear in the basis rows. A ridge
    penalty on the non-intercept coefficients (columns standardised
    internally) is either given or, when ``penalty`` is None, chosen by
    generalised cross-validation over ``penalty_grid``.
    """
    y = np.asarray(series, dtype=float)
    Z = np.asarray(basis, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[0] != y.size:
        raise ValueError("basis rows must align with the series")
    if not np.all(np.isfinite(y)):
        raise ValueError("series must be finite")
    T, mean, sd, const, ic = _standardise(Z)
    if np.ptp(y) == 0:
        raise DegenerateSampleError("series has zero variance", stage="locscale_fit")
    if penalty is None:
        grid = PENALTY_GRID if penalty_grid is None else np.asarray(penalty_grid, dtype=float)
        grid = np.sort(grid)
        _, b0, _ = _locscale_std(y, T, float(grid[0]), ic)
        w_ref = np.exp(-2.0 * (T @ b0))
        best = None
        for lam in grid:
            a, b, gcv = _locscale_std(y, T, float(lam), ic, w_ref)
            if best is None or gcv < best[3]:
                best = (float(lam), a, b, gcv)
        lam, a, b, gcv = best
    else:
        if penalty < 0:
            raise ValueError("penalty must be nonnegative")
        lam = float(penalty)
        a, b, gcv = _locscale_std(y, T, lam, ic)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NumericalError("location-scale fit diverged", stage="locscale_fit")
    loc = _unstandardise(a, mean, sd, const, ic, Z[0, ic])
    scale = _unstandardise(b, mean, sd, const, ic, Z[0, ic])
    r = (y - Z @ loc) / np.exp(Z @ scale)
    return LocScaleFit(loc_coeffs=loc, scale_coeffs=scale, penalty=lam,
                       residuals=np.sort(r), gcv=float(gcv))


# Full marginal model


@dataclass(frozen=True, eq=False)
class MarginalModel:
    """Location-scale body plus GPD residual tail (semi-empirical CDF).

    ``basis`` builds rows for both ``mu`` and ``log sigma``; ``tail_basis``
    builds rows for the tail scale.
    """

    basis: BasisSpec
    loc_coeffs: np.ndarray
    scale_coeffs: np.ndarray
    tail_basis: BasisSpec
    tail: NsGpdParams
    residual_sample: np.ndarray
    penalty: float = 0.0
    _values: np.ndarray = field(init=False, repr=False, compare=False)
    _cdf_values: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        r = np.asarray(self.residual_sample, dtype=float)
        if r.ndim != 1 or r.size < 2 or np.any(np.diff(r) < 0):
            raise ValueError("residual_sample must be a sorted 1-d array")
        vals, counts = np.unique(r, return_counts=True)
        below = np.cumsum(counts) - counts
        object.__setattr__(self, "_values", vals)
        object.__setattr__(self, "_cdf_values", (below + (counts + 1) / 2.0) / (r.size + 1))

    @property
    def n(self) -> int:
        return self.residual_sample.size

    @property
    def threshold(self) -> float:
        return self.tail.threshold

    @property
    def q_y(self) -> float:
        return self.tail.threshold_quantile

    def mu(self, t, day=None):
        return self.basis.design(t, day) @ self.loc_coeffs

    def sigma(self, t, day=None):
        return np.exp(self.basis.design(t, day) @ self.scale_coeffs)

    def tail_rows(self, t, day=None):
        return self.tail_basis.design(t, day)

    def to_dict(self) -> dict:
        return {
            "basis": self.basis.to_dict(),
            "loc_coeffs": [float(c) for c in self.loc_coeffs],
            "scale_coeffs": [float(c) for c in self.scale_coeffs],
            "tail_basis": self.tail_basis.to_dict(),
            "tail": self.tail.to_dict(),
            "residual_sample": [float(v) for v in self.residual_sample],
            "penalty": self.penalty,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MarginalModel":
        return cls(
            basis=BasisSpec.from_dict(d["basis"]),
            loc_coeffs=np.asarray(d["loc_coeffs"], dtype=float),
            scale_coeffs=np.asarray(d["scale_coeffs"], dtype=float),
            tail_basis=BasisSpec.from_dict(d["tail_basis"]),
            tail=NsGpdParams.from_dict(d["tail"]),
            residual_sample=np.asarray(d["residual_sample"], dtype=float),
            penalty=float(d["penalty"]),
        )


def _body_cdf(model: MarginalModel, r):
    """Rank-based CDF; sample values get their average rank over (n + 1)."""
    r = np.asarray(r, dtype=float)
    vals = model._values
    n = model.n
    le = np.searchsorted(model.residual_sample, r, side="right")
    idx = np.searchsorted(vals, r)
    hit = (idx < vals.size) & (vals[np.minimum(idx, vals.size - 1)] == r)
    out = le / (n + 1.0)
    return np.where(hit, model._cdf_values[np.minimum(idx, vals.size - 1)], out)


def threshold_for(sorted_residuals, q_y: float):
    """Order-statistic threshold and the body CDF level it carries."""
    r = np.asarray(sorted_residuals, dtype=float)
    n = r.size
    k = int(np.clip(np.round(q_y * (n + 1)), 1, n - 10))
    u = r[k - 1]
    le = np.searchsorted(r, u, side="right")
    lt = np.searchsorted(r, u, side="left")
    q_eff = (lt + (le - lt + 1) / 2.0) / (n + 1.0)
    return float(u), float(q_eff)


def fit_marginal(series, t, day=None, basis: BasisSpec | None = None,
                 tail_basis: BasisSpec | None = None, q_y: float = 0.9,
                 penalty: float | None = None) -> MarginalModel:
    """Fit location-scale body and GPD residual tail for one series.

    The tail threshold is the residual order statistic nearest the
    ``q_y`` plotting position; the stored threshold quantile is the body CDF at
    that residual, so the two branches meet exactly.
    """
    basis = basis or BasisSpec(degree=1, harmonics=0)
    tail_basis = tail_basis or BasisSpec(degree=0, harmonics=0)
    if not 0.0 < q_y < 1.0:
        raise ValueError("q_y must lie in (0, 1)")
    Z = basis.design(t, day)
    ls = locscale_fit(series, Z, penalty=penalty)
    y = np.asarray(series, dtype=float)
    r = (y - Z @ ls.loc_coeffs) / np.exp(Z @ ls.scale_coeffs)
    u, q_eff = threshold_for(ls.residuals, q_y)
    above = r > u
    Zt = tail_basis.design(t, day)[above]
    tail = gpd_fit_ns(r[above] - u, Zt, threshold=u, threshold_quantile=q_eff)
    if tail.xi < 0 and np.any(r[above] - u >= -np.exp(Zt @ tail.tau_coeffs) / tail.xi):
        raise NumericalError("fitted tail endpoint below an exceedance", stage="gpd_fit_ns")
    return MarginalModel(
        basis=basis,
        loc_coeffs=ls.loc_coeffs,
        scale_coeffs=ls.scale_coeffs,
        tail_basis=tail_basis,
        tail=tail,
        residual_sample=ls.residuals,
        penalty=ls.penalty,
    )


def residuals(series, model: MarginalModel, t, day=None):
    y = np.asarray(series, dtype=float)
    return (y - model.mu(t, day)) / model.sigma(t, day)


def from_residuals(r, model: MarginalModel, t, day=None):
    return model.mu(t, day) + model.sigma(t, day) * np.asarray(r, dtype=float)


def _with_tau(model, z, v):
    """Broadcast values against the tail scale evaluated at basis rows ``z``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    tau = np.exp(z @ model.tail.tau_coeffs)
    if tau.size == 1:
        tau = tau[0]
    v, tau = np.broadcast_arrays(np.asarray(v, dtype=float), tau)
    return v, tau


def semi_empirical_log_sf(r, model: MarginalModel, z):
    """log(1 - F(r | z)) evaluated without cancellation in the tail."""
    r, tau = _with_tau(model, z, r)
    u, q = model.threshold, model.q_y
    tail = np.log1p(-q) + gpd_log_sf(np.maximum(r - u, 0.0), tau, model.tail.xi)
    body = np.log1p(-_body_cdf(model, r))
    return np.where(r > u, tail, body)


def semi_empirical_cdf(r, model: MarginalModel, z):
    """Semi-empirical distribution function of a residual.

    Rank-based below the threshold, GPD above it with scale ``tau(z)``.
    """
    return -np.expm1(semi_empirical_log_sf(r, model, z))


def quantile_from_sf(s, model: MarginalModel, z):
    """Residual with survival probability ``s``; returns (values, clamped flags).

    ``s = 1`` gives the sample minimum and ``s = 0`` the upper endpoint of a
    bounded tail (infinite otherwise); both are flagged.
    """
    s, tau = _with_tau(model, z, s)
    u, q = model.threshold, model.q_y
    xi = model.tail.xi
    in_tail = s < 1.0 - q
    with np.errstate(divide="ignore", invalid="ignore"):
        exc = gpd_quantile_sf(np.where(in_tail, s / (1.0 - q), 1.0), tau, xi)
    tail_val = u + exc
    flag = np.zeros(s.shape, dtype=bool)
    if xi < 0:
        end = u - tau / xi
        over = in_tail & ~(tail_val < end)
        tail_val = np.where(over, end, tail_val)
        flag |= over
    flag |= in_tail & ~np.isfinite(tail_val)
    p = 1.0 - s
    body_val = np.interp(p, model._cdf_values, model._values)
    flag |= ~in_tail & (p < model._cdf_values[0])
    return np.where(in_tail, tail_val, body_val), flag


def semi_empirical_quantile(p, model: MarginalModel, z, return_flags: bool = False):
    """Inverse of :func:`semi_empirical_cdf`.

    The tail branch is the exact GPD inverse; in the body the order
    statistics are linearly interpolated between their plotting positions.
    """
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("probabilities must lie in (0, 1)")
    vals, flags = quantile_from_sf(1.0 - p, model, z)
    return (vals, flags) if return_flags else vals


# Exponential margins


@dataclass(frozen=True, eq=False)
class ExpSeries:
    """Bivariate series on standard exponential margins with its time index."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    day: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.t)
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if not (t.shape == x.shape == y.shape) or t.ndim != 1:
            raise ValueError("t, x and y must be 1-d arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time indices must be strictly increasing")
        if np.any(~(x >= 0)) or np.any(~(y >= 0)):
            raise ValueError("exponential-margin values must be nonnegative")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.day is not None:
            d = np.asarray(self.day)
            if d.shape != t.shape:
                raise ValueError("day must align with t")
            object.__setattr__(self, "day", d)

    def __len__(self) -> int:
        return self.t.size


def marginal_to_exponential(series, model: MarginalModel, t, day=None):
    r = residuals(series, model, t, day)
    return -semi_empirical_log_sf(r, model, model.tail_rows(t, day))


def to_exponential(x, y, models, t, day=None) -> ExpSeries:
    """Probability integral transform of a raw pair to exponential margins."""
    mx, my = models
    t = np.asarray(t)
    ex = marginal_to_exponential(x, mx, t, day)
    ey = marginal_to_exponential(y, my, t, day)
    return ExpSeries(t=t, x=ex, y=ey, day=None if day is None else np.asarray(day))


def from_exponential(v, model: MarginalModel, t, day=None, return_flags: bool = False):
    """Map exponential-margin values back to the original scale of one series."""
    v = np.asarray(v, dtype=float)
    r, flags = quantile_from_sf(np.exp(-v), model, model.tail_rows(t, day))
    out = from_residuals(r, model, t, day)
    return (out, flags) if return_flags else out
