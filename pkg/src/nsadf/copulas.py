"""Non-stationary bivariate copula examples on standard exponential margins.

Families and trajectories (t = 1..n):

* ``gaussian_pos``: correlation ``t/n`` (clamped below 1)
* ``gaussian_neg``: correlation ``-0.9 + 0.9 t/n``
* ``inv_logistic``: inverted logistic, ``r = 0.01 + 0.98 t/n``
* ``inv_alog``: inverted asymmetric logistic, same ``r``, asymmetry (0.3, 0.7)
* ``inv_husler_reiss``: inverted Husler-Reiss, ``s = 0.01 + 9.99 t/n``
* ``gauge_model12``: density proportional to
  ``exp(-max{(x-y)/c, (y-x)/c, (x+y)/(2-c)})``, ``c = 0.1 + 0.8 t/n``
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .adf import min_projection
from .errors import McmcError
from .margins import ExpSeries

FAMILIES = (
    "gaussian_pos",
    "gaussian_neg",
    "inv_logistic",
    "inv_alog",
    "inv_husler_reiss",
    "gauge_model12",
)
RHO_MAX = 1.0 - 1e-9
DEFAULT_ASYMMETRY = (0.3, 0.7)


@dataclass(frozen=True)
class CopulaSpec:
    family: str
    n: int
    seed: int = 0
    asymmetry: tuple[float, float] = DEFAULT_ASYMMETRY

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if int(self.n) < 1:
            raise ValueError("n must be at least 1")
        k1, k2 = self.asymmetry
        if not (0 <= k1 <= 1 and 0 <= k2 <= 1):
            raise ValueError("asymmetry parameters must lie in [0, 1]")
        object.__setattr__(self, "asymmetry", (float(k1), float(k2)))

    def to_dict(self) -> dict:
        return {"family": self.family, "n": int(self.n), "seed": int(self.seed),
                "asymmetry": list(self.asymmetry)}


@dataclass(frozen=True)
class McmcConfig:
    """Random-walk Metropolis settings for the gauge density.

    The proposal is a bivariate Gaussian with independent steps along the
    sum and difference axes, of standard deviation ``proposal_sd * (2 - c)``
    and ``proposal_sd * c`` respectively, so it follows the density's ridge as
    ``c`` moves. ``proposal_sd`` is the starting scale; during burn-in it is adapted
    towards ``target_accept`` and then frozen. ``pit`` selects the transform
    to exponential margins: ``"exact"`` uses the closed-form marginal survival
    function at each step's ``c``, ``"empirical"`` the pooled ranks.
    """

    proposal_sd: float = 1.5
    burn_in: int = 10_000
    thin: int = 10
    chain_seed: int = 0
    target_accept: float = 0.3
    adapt: bool = True
    pit: str = "empirical"

    def __post_init__(self):
        if not self.proposal_sd > 0:
            raise ValueError("proposal_sd must be positive")
        if self.burn_in < 0 or self.thin < 1:
            raise ValueError("burn_in must be >= 0 and thin >= 1")
        if self.pit not in ("exact", "empirical"):
            raise ValueError("pit must be 'exact' or 'empirical'")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class McmcDiagnostics:
    acceptance_rate: float
    chain_length: int
    proposal_sd: float
    burn_in: int
    thin: int
    extra: dict = field(default_factory=dict)


def param_trajectory(family: str, t, n: int):
    """Dependence parameter of ``family`` at time index ``t`` (1..n)."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 1) or np.any(t > n):
        raise ValueError("time index must lie in 1..n")
    frac = t / n
    if family == "gaussian_pos":
        return frac
    if family == "gaussian_neg":
        return -0.9 + 0.9 * frac
    if family in ("inv_logistic", "inv_alog"):
        return 0.01 + 0.98 * frac
    if family == "inv_husler_reiss":
        return 0.01 + 9.99 * frac
    if family == "gauge_model12":
        return 0.1 + 0.8 * frac
    raise ValueError(f"unknown family {family!r}")


# exact samplers, vectorised over a parameter array


def _gaussian(rho, rng, size):
    rho = np.broadcast_to(np.minimum(np.asarray(rho, dtype=float), RHO_MAX), size)
    z1 = rng.standard_normal(size)
    z2 = rho * z1 + np.sqrt(1.0 - rho * rho) * rng.standard_normal(size)
    return -special.log_ndtr(-z1), -special.log_ndtr(-z2)


def _log_positive_stable(alpha, rng, size):
    """log S with E exp(-s S) = exp(-s**alpha) (Chambers-Mallows-Stuck)."""
    u = rng.uniform(0.0, np.pi, size)
    e = rng.standard_exponential(size)
    a = np.broadcast_to(np.asarray(alpha, dtype=float), size)
    with np.errstate(divide="ignore", invalid="ignore"):
        ls = (
            np.log(np.sin(a * u))
            - np.log(np.sin(u)) / a
            + (1.0 - a) / a * (np.log(np.sin((1.0 - a) * u)) - np.log(e))
        )
    return np.where(a >= 1.0, 0.0, ls)


def _inv_logistic(r, rng, size):
    # X_i = 1 / Z_i with Z_i = (S / W_i)**r unit Frechet logistic
    r = np.broadcast_to(np.asarray(r, dtype=float), size)
    ls = _log_positive_stable(r, rng, size)
    w1 = rng.standard_exponential(size)
    w2 = rng.standard_exponential(size)
    return np.exp(r * (np.log(w1) - ls)), np.exp(r * (np.log(w2) - ls))


def _inv_alog(r, kappa, rng, size):
    k1, k2 = kappa
    a1, a2 = _inv_logistic(r, rng, size)
    e1 = rng.standard_exponential(size)
    e2 = rng.standard_exponential(size)
    with np.errstate(divide="ignore"):
        x = np.minimum(e1 / (1.0 - k1), a1 / k1)
        y = np.minimum(e2 / (1.0 - k2), a2 / k2)
    return x, y


def _hr_log_cond_sf(x, ly, s):
    """log Pr(Y > y | X = x) for the inverted Husler-Reiss pair."""
    y = np.exp(ly)
    lr = np.log(x) - ly
    a = 1.0 / s + 0.5 * s * lr
    b = 1.0 / s - 0.5 * s * lr
    l = x * special.ndtr(a) + y * special.ndtr(b)
    return special.log_ndtr(a) + x - l


def _inv_husler_reiss(s, rng, size, tol=1e-10):
    s = np.broadcast_to(np.asarray(s, dtype=float), size)
    x = rng.standard_exponential(size)
    lu = np.log(rng.uniform(size=size))
    lo = np.full(size, -80.0)
    hi = np.log(x + 80.0)
    # the conditional survival is decreasing in y: bisect on log y
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        above = _hr_log_cond_sf(x, mid, s) > lu
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return x, np.exp(0.5 * (lo + hi))


def gauge_density_log(x, y, c):
    """Unnormalised log density of the gauge model on the positive quadrant."""
    g = np.maximum(np.maximum((x - y) / c, (y - x) / c), (x + y) / (2.0 - c))
    return -g


def gauge_marginal_log_sf(x, c):
    """log Pr(X > x) for a coordinate of the gauge model (exact)."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    inner = (
        2.0
        - c * c * np.exp(-x * (1.0 / c - 1.0))
        - 2.0 * (1.0 - c) ** 2 * np.exp(-x * c / (1.0 - c))
    )
    return -x + np.log(inner) - np.log(c * (4.0 - 3.0 * c))


def _gauge_exact(c, rng, size):
    """Direct sampler: X by rejection from Exp(1), then Y | X piecewise."""
    c = np.broadcast_to(np.asarray(c, dtype=float), size).copy()
    x = np.empty(size)
    todo = np.arange(size)
    while todo.size:
        cand = rng.standard_exponential(todo.size)
        ct = c[todo]
        dens = 2.0 - ct * np.exp(-cand * (1.0 / ct - 1.0)) - 2.0 * (1.0 - ct) * np.exp(-cand * ct / (1.0 - ct))
        ok = rng.uniform(size=todo.size) * 2.0 <= dens
        x[todo[ok]] = cand[ok]
        todo = todo[~ok]
    y1 = (1.0 - c) * x
    y2 = x / (1.0 - c)
    m1 = c * (np.exp(-x) - np.exp(-x / c))
    m2 = (2.0 - c) * (np.exp(-x) - np.exp(-y2))
    m3 = c * np.exp(-y2)
    tot = m1 + m2 + m3
    v = rng.uniform(size=size) * tot
    u = rng.uniform(size=size)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        p1 = y1 + c * np.log(u + (1.0 - u) * np.exp(-y1 / c))
        p2 = y1 - (2.0 - c) * np.log1p(-u * -np.expm1(-(y2 - y1) / (2.0 - c)))
        p3 = y2 + c * rng.standard_exponential(size)
    y = np.where(v < m1, p1, np.where(v < m1 + m2, p2, p3))
    return x, y


def _gauge_mcmc(c, cfg: McmcConfig):
    """Random-walk Metropolis with the target parameter following ``c``."""
    rng = np.random.default_rng(cfg.chain_seed)
    n = c.size
    total = cfg.burn_in + n * cfg.thin
    steps = rng.standard_normal((total, 2))
    logu = np.log(rng.uniform(size=total))
    sd = cfg.proposal_sd
    cx, cy = 1.0, 1.0
    cur_c = float(c[0])
    lp = float(gauge_density_log(cx, cy, cur_c))
    out = np.empty((n, 2))
    acc_post = 0
    acc_burn = 0
    for i in range(total):
        if i >= cfg.burn_in:
            k = (i - cfg.burn_in) // cfg.thin
            ck = float(c[k])
            if ck != cur_c:
                cur_c = ck
                lp = -max(abs(cx - cy) / cur_c, (cx + cy) / (2.0 - cur_c))
        ds = sd * (2.0 - cur_c) * steps[i, 0]
        dd = sd * cur_c * steps[i, 1]
        px = cx + 0.5 * (ds + dd)
        py = cy + 0.5 * (ds - dd)
        accepted = False
        if px > 0.0 and py > 0.0:
            lq = -max(abs(px - py) / cur_c, (px + py) / (2.0 - cur_c))
            if logu[i] < lq - lp:
                cx, cy, lp = px, py, lq
                accepted = True
        if i < cfg.burn_in:
            acc_burn += accepted
            if cfg.adapt:
                sd *= np.exp((accepted - cfg.target_accept) / np.sqrt(i + 1.0))
        else:
            acc_post += accepted
            if (i - cfg.burn_in) % cfg.thin == cfg.thin - 1:
                out[k] = cx, cy
    rate = acc_post / max(1, total - cfg.burn_in)
    diag = McmcDiagnostics(
        acceptance_rate=rate,
        chain_length=total,
        proposal_sd=float(sd),
        burn_in=cfg.burn_in,
        thin=cfg.thin,
        extra={"burn_in_acceptance": acc_burn / max(1, cfg.burn_in)},
    )
    return out[:, 0], out[:, 1], diag


def _empirical_exponential(v):
    ranks = np.argsort(np.argsort(v, kind="stable"), kind="stable") + 1.0
    return -np.log1p(-ranks / (v.size + 1.0))


def sample_at(family: str, param, size: int, rng, asymmetry=DEFAULT_ASYMMETRY):
    """Exact draws on exponential margins at fixed or per-draw parameters.

    For ``gauge_model12`` the direct sampler is used and each coordinate is
    mapped through its exact marginal survival function.
    """
    if family in ("gaussian_pos", "gaussian_neg"):
        return _gaussian(param, rng, size)
    if family == "inv_logistic":
        return _inv_logistic(param, rng, size)
    if family == "inv_alog":
        return _inv_alog(param, asymmetry, rng, size)
    if family == "inv_husler_reiss":
        return _inv_husler_reiss(param, rng, size)
    if family == "gauge_model12":
        x, y = _gauge_exact(param, rng, size)
        return -gauge_marginal_log_sf(x, param), -gauge_marginal_log_sf(y, param)
    raise ValueError(f"unknown family {family!r}")


def frozen_sampler(family: str, param: float, asymmetry=DEFAULT_ASYMMETRY):
    """Callable ``(size, rng) -> (x, y)`` drawing at a fixed parameter."""
    return lambda size, rng: sample_at(family, param, size, rng, asymmetry)


def sample(spec: CopulaSpec, mcmc: McmcConfig | None = None, return_diagnostics: bool = False):
    """One draw per time index with the parameter following its trajectory.

    The gauge family needs an :class:`McmcConfig`; its diagnostics are
    returned when ``return_diagnostics`` is set and a run whose post burn-in
    acceptance rate falls outside [0.1, 0.6] raises :class:`McmcError`.
    """
    n = int(spec.n)
    t = np.arange(1, n + 1)
    param = param_trajectory(spec.family, t, n)
    diag = None
    if spec.family == "gauge_model12":
        if mcmc is None:
            raise ValueError("gauge_model12 needs an MCMC configuration")
        gx, gy, diag = _gauge_mcmc(param, mcmc)
        if not 0.1 <= diag.acceptance_rate <= 0.6:
            raise McmcError(f"acceptance rate {diag.acceptance_rate:.3f} outside [0.1, 0.6]",
                            stage="copula_sim")
        if mcmc.pit == "exact":
            x, y = -gauge_marginal_log_sf(gx, param), -gauge_marginal_log_sf(gy, param)
        else:
            x, y = _empirical_exponential(gx), _empirical_exponential(gy)
    else:
        if mcmc is not None:
            raise ValueError("MCMC configuration only applies to gauge_model12")
        rng = np.random.default_rng(spec.seed)
        x, y = sample_at(spec.family, param, n, rng, spec.asymmetry)
    series = ExpSeries(t=t, x=x, y=y)
    return (series, diag) if return_diagnostics else series


# dependence functions


def _check_w(w):
    w = np.asarray(w, dtype=float)
    if np.any((w < 0) | (w > 1)):
        raise ValueError("rays must lie in [0, 1]")
    return w


def true_adf(family: str, param: float, w, asymmetry=DEFAULT_ASYMMETRY):
    """Angular dependence function of a frozen member of ``family``.

    Closed forms on exponential margins; all satisfy ``lambda(0) = lambda(1) = 1``
    and ``lambda(w) >= max(w, 1 - w)``.
    """
    w = _check_w(w)
    lo = np.maximum(w, 1.0 - w)
    interior = (w > 0) & (w < 1)
    wi = np.where(interior, w, 0.5)
    if family in ("gaussian_pos", "gaussian_neg"):
        rho = min(float(param), RHO_MAX)
        if not -1 < rho < 1 + 1e-12:
            raise ValueError("correlation must lie in (-1, 1]")
        val = (1.0 - 2.0 * rho * np.sqrt(wi * (1.0 - wi))) / (1.0 - rho * rho)
        if rho > 0:
            ratio = np.minimum(wi, 1 - wi) / np.maximum(wi, 1 - wi)
            val = np.where(rho * rho >= ratio, np.maximum(wi, 1 - wi), val)
    elif family == "inv_logistic":
        r = float(param)
        if not 0 < r <= 1:
            raise ValueError("logistic parameter must lie in (0, 1]")
        val = np.exp(r * np.logaddexp(np.log(wi) / r, np.log1p(-wi) / r))
    elif family == "inv_alog":
        r = float(param)
        if not 0 < r <= 1:
            raise ValueError("logistic parameter must lie in (0, 1]")
        k1, k2 = asymmetry
        with np.errstate(divide="ignore"):
            a = np.log(k1 * wi) / r
            b = np.log(k2 * (1.0 - wi)) / r
        val = (1 - k1) * wi + (1 - k2) * (1 - wi) + np.exp(r * np.logaddexp(a, b))
    elif family == "inv_husler_reiss":
        s = float(param)
        if not s > 0:
            raise ValueError("Husler-Reiss parameter must be positive")
        lr = np.log(wi) - np.log1p(-wi)
        val = wi * special.ndtr(1 / s + 0.5 * s * lr) + (1 - wi) * special.ndtr(1 / s - 0.5 * s * lr)
    elif family == "gauge_model12":
        c = float(param)
        if not 0 < c < 1:
            raise ValueError("gauge parameter must lie in (0, 1)")
        val = np.maximum(np.maximum(wi, 1 - wi), 1.0 / (2.0 - c))
    else:
        raise ValueError(f"unknown family {family!r}")
    out = np.where(interior, np.maximum(val, lo), 1.0)
    return out if out.ndim else float(out)


def gauge_ray_adf(c: float, w):
    """``max{(2w-1)/c, (1-2w)/c, 1/(2-c)}``: the gauge evaluated on the ray
    itself. It agrees with :func:`true_adf` only where ``|2w-1| <= c/(2-c)``."""
    w = _check_w(w)
    return np.maximum(np.maximum((2 * w - 1) / c, (1 - 2 * w) / c), 1.0 / (2.0 - c))


def stable_tail_dependence(family: str, param: float, x, y, asymmetry=DEFAULT_ASYMMETRY):
    """``l(x, y)`` with ``Pr(X > x, Y > y) = exp(-l(x, y))`` for inverted EV families."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if family == "inv_logistic":
        r = float(param)
        with np.errstate(divide="ignore"):
            return np.exp(r * np.logaddexp(np.log(x) / r, np.log(y) / r))
    if family == "inv_alog":
        r = float(param)
        k1, k2 = asymmetry
        with np.errstate(divide="ignore"):
            tail = np.exp(r * np.logaddexp(np.log(k1 * x) / r, np.log(k2 * y) / r))
        return (1 - k1) * x + (1 - k2) * y + tail
    if family == "inv_husler_reiss":
        s = float(param)
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = np.log(x) - np.log(y)
            out = x * special.ndtr(1 / s + 0.5 * s * lr) + y * special.ndtr(1 / s - 0.5 * s * lr)
        return np.where(x == 0, y, np.where(y == 0, x, out))
    raise ValueError(f"no closed-form joint survival for {family!r}")


def joint_survival(family: str, param: float, x, y, asymmetry=DEFAULT_ASYMMETRY):
    return np.exp(-stable_tail_dependence(family, param, x, y, asymmetry))


# Monte Carlo ground truth


@dataclass(frozen=True)
class HillEstimate:
    lam: float
    se: float
    k: int
    threshold: float


def hill_rate(k_values, q: float, min_exceedances: int = 100) -> HillEstimate:
    """Reciprocal mean excess of ``k_values`` above their ``q`` quantile."""
    kv = np.asarray(k_values, dtype=float)
    u = np.quantile(kv, q)
    exc = kv[kv > u] - u
    if exc.size < min_exceedances:
        raise ValueError(f"only {exc.size} exceedances; need {min_exceedances}")
    lam = 1.0 / exc.mean()
    return HillEstimate(lam=float(lam), se=float(lam / np.sqrt(exc.size)), k=int(exc.size),
                        threshold=float(u))


def oracle_adf_mc(sampler, w, N: int, q: float, rng=None, data=None) -> HillEstimate:
    """Brute-force ADF value at ray ``w`` from ``N`` fresh draws.

    ``sampler(size, rng)`` returns an exponential-margin pair; ``data`` may be
    passed instead to reuse draws across rays.
    """
    if N < 100_000:
        raise ValueError("oracle needs N >= 1e5")
    if not 0.9 < q < 0.999:
        raise ValueError("threshold quantile must lie in (0.9, 0.999)")
    if data is None:
        rng = np.random.default_rng(rng)
        data = sampler(N, rng)
    x, y = data
    return hill_rate(min_projection(x[:N], y[:N], w), q)
