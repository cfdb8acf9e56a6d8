"""Conditional mean/volatility models fitted by maximum likelihood.

Mean equation (default, ``mean="ma1"``)::

    R_t = phi0 + z_t + theta1 * z_{t-1},     z_t = sigma_t * eps_t

With ``mean="ar1"`` the second coefficient multiplies ``R_{t-1}`` instead.
Variance equations:

* ``ARCH1``   sigma2_t = a0 + a1 z_{t-1}^2
* ``GARCH11`` sigma2_t = a0 + a1 z_{t-1}^2 + b1 sigma2_{t-1}
* ``EGARCH11`` ln sigma2_t = omega + beta ln sigma2_{t-1}
  + alpha (|eps_{t-1}| - E|eps|) + gamma eps_{t-1}

Innovations ``eps_t`` are standard normal or NIG standardized to zero mean
and unit variance (two free shape parameters).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import optimize

from . import nig as _nig
from .nig import NigParams

logger = logging.getLogger(__name__)

FAMILIES = ("ARCH1", "GARCH11", "EGARCH11")
_FAMILY_CODE = {"ARCH1": 0, "GARCH11": 1, "EGARCH11": 2}
VOL_NAMES = {
    "ARCH1": ("alpha0", "alpha1"),
    "GARCH11": ("alpha0", "alpha1", "beta1"),
    "EGARCH11": ("omega", "alpha", "gamma", "beta"),
}
N_RETRIES = 5
MIN_OBS = 8
_SQRT_2_OVER_PI = math.sqrt(2 / math.pi)
# box for the standardized NIG shape; short samples otherwise drift to the
# degenerate corner |rho| -> 1 where the likelihood is unbounded
LOG_ZETA_BOUNDS = (math.log(0.1), math.log(1e4))
RHO_MAX = 0.95
_LOG_2PI = math.log(2 * math.pi)


class ModelFitError(RuntimeError):
    pass


def information_criteria(log_likelihood: float, k: int, n: int) -> tuple[float, float]:
    """``(AIC, BIC)`` for ``k`` parameters and ``n`` observations."""
    if n < 1:
        raise ValueError("n must be positive")
    return 2 * k - 2 * log_likelihood, k * math.log(n) - 2 * log_likelihood


# ------------------------------------------------------------------- filtering

@numba.njit(cache=True)
def _filter(r, family, ar, phi0, c1, w0, w1, w2, w3, s2_init, mean_r, z, s2):
    """Fill innovations ``z`` and variances ``s2``; False if a variance degenerates."""
    n = r.shape[0]
    zprev = 0.0
    rprev = mean_r
    s2prev = s2_init
    eprev = 0.0
    for t in range(n):
        if t == 0:
            v = s2_init
        elif family == 0:
            v = w0 + w1 * zprev * zprev
        elif family == 1:
            v = w0 + w1 * zprev * zprev + w2 * s2prev
        else:
            lv = w0 + w3 * math.log(s2prev) + w1 * abs(eprev) + w2 * eprev
            if lv > 700.0:
                return False
            v = math.exp(lv)
        if not (v > 1e-300) or not math.isfinite(v):
            return False
        if ar:
            zt = r[t] - phi0 - c1 * rprev
        else:
            zt = r[t] - phi0 - c1 * zprev
        z[t] = zt
        s2[t] = v
        eprev = zt / math.sqrt(v)
        zprev = zt
        rprev = r[t]
        s2prev = v
    return True


def _std_nig(zeta, rho) -> NigParams:
    return _nig.from_shape(zeta, rho)


def _innovation_mean_abs(innovation) -> float:
    if innovation == "normal":
        return _SQRT_2_OVER_PI
    return _nig.mean_abs(innovation)


@dataclass
class _Layout:
    family: str
    innovation: str
    mean: str

    @property
    def names(self) -> tuple[str, ...]:
        extra = ("zeta", "rho") if self.innovation == "nig" else ()
        return ("phi0", "theta1") + VOL_NAMES[self.family] + extra

    @property
    def k(self) -> int:
        return len(self.names)


def _natural_from_free(lay: _Layout, u):
    """Map an unconstrained vector to natural parameters (EGARCH omega excludes E|eps|)."""
    nat = [u[0], math.tanh(u[1])]
    i = 2
    if lay.family == "ARCH1":
        nat += [math.exp(u[2]), math.exp(u[3])]
        i = 4
    elif lay.family == "GARCH11":
        p = 1 / (1 + math.exp(-u[3]))
        s = 1 / (1 + math.exp(-u[4]))
        nat += [math.exp(u[2]), p * s, p * (1 - s)]
        i = 5
    else:
        nat += [u[2], u[3], u[4], math.tanh(u[5])]
        i = 6
    if lay.innovation == "nig":
        lo, hi = LOG_ZETA_BOUNDS
        nat += [math.exp(lo + (hi - lo) / (1 + math.exp(-u[i]))), RHO_MAX * math.tanh(u[i + 1])]
    return np.array(nat)


def _free_from_natural(lay: _Layout, nat):
    nat = np.asarray(nat, dtype=float)
    u = [nat[0], math.atanh(np.clip(nat[1], -0.999, 0.999))]
    if lay.family == "ARCH1":
        u += [math.log(nat[2]), math.log(max(nat[3], 1e-8))]
        i = 4
    elif lay.family == "GARCH11":
        a1, b1 = max(nat[3], 1e-8), max(nat[4], 1e-8)
        p = min(a1 + b1, 0.9999)
        s = a1 / (a1 + b1)
        u += [math.log(nat[2]), math.log(p / (1 - p)), math.log(s / (1 - s))]
        i = 5
    else:
        u += [nat[2], nat[3], nat[4], math.atanh(np.clip(nat[5], -0.9999, 0.9999))]
        i = 6
    if lay.innovation == "nig":
        lo, hi = LOG_ZETA_BOUNDS
        t = np.clip((math.log(nat[i]) - lo) / (hi - lo), 1e-6, 1 - 1e-6)
        u += [math.log(t / (1 - t)), math.atanh(np.clip(nat[i + 1] / RHO_MAX, -0.99, 0.99))]
    return np.array(u)


def _feasible(lay: _Layout, nat) -> bool:
    if abs(nat[1]) >= 1:
        return False
    if lay.family == "ARCH1":
        ok = nat[2] > 0 and nat[3] >= 0
        i = 4
    elif lay.family == "GARCH11":
        ok = nat[2] > 0 and nat[3] >= 0 and nat[4] >= 0 and nat[3] + nat[4] < 1
        i = 5
    else:
        ok = abs(nat[5]) < 1
        i = 6
    if lay.innovation == "nig":
        lo, hi = LOG_ZETA_BOUNDS
        ok = ok and nat[i] > 0 and lo <= math.log(nat[i]) <= hi and abs(nat[i + 1]) <= RHO_MAX
    return bool(ok)


class _Problem:
    def __init__(self, r, lay: _Layout):
        self.r = np.ascontiguousarray(r, dtype=float)
        self.lay = lay
        self.n = self.r.size
        self.s2_init = float(np.var(self.r))
        self.mean_r = float(np.mean(self.r))
        self.z = np.empty(self.n)
        self.s2 = np.empty(self.n)

    def run_filter(self, nat) -> bool:
        w = list(nat[2:2 + len(VOL_NAMES[self.lay.family])]) + [0.0] * 4
        return _filter(self.r, _FAMILY_CODE[self.lay.family], self.lay.mean == "ar1",
                       float(nat[0]), float(nat[1]), float(w[0]), float(w[1]), float(w[2]),
                       float(w[3]), self.s2_init, self.mean_r, self.z, self.s2)

    def loglik(self, nat) -> float:
        if not _feasible(self.lay, nat):
            return -math.inf
        if not self.run_filter(nat):
            return -math.inf
        eps = self.z / np.sqrt(self.s2)
        if self.lay.innovation == "nig":
            try:
                p = _std_nig(nat[-2], nat[-1])
            except ValueError:
                return -math.inf
            dens = _nig.logpdf(eps, p)
        else:
            dens = -0.5 * _LOG_2PI - 0.5 * eps * eps
        # compensated summation keeps finite-difference scores clean at large n
        ll = math.fsum(dens - 0.5 * np.log(self.s2))
        return ll if math.isfinite(ll) else -math.inf

    def objective(self, u) -> float:
        try:
            nat = _natural_from_free(self.lay, u)
        except (OverflowError, ValueError):
            return 1e300
        ll = self.loglik(nat)
        return -ll if math.isfinite(ll) else 1e300


def _start(r, lay: _Layout):
    v = float(np.var(r))
    m = float(np.mean(r))
    nat = [m, 0.0]
    if lay.family == "ARCH1":
        nat += [0.7 * v, 0.3]
    elif lay.family == "GARCH11":
        nat += [0.1 * v, 0.1, 0.8]
    else:
        # omega here excludes the -alpha E|eps| term
        nat += [0.1 * math.log(v) - 0.1 * _SQRT_2_OVER_PI, 0.1, 0.0, 0.9]
    if lay.innovation == "nig":
        y = (r - m) / math.sqrt(v)
        sk, ku = float(np.mean(y ** 3)), float(np.mean(y ** 4)) - 3
        p0 = _nig.moment_match(0.0, 1.0, sk, ku, zeta_max=50.0)
        nat += [p0.zeta, p0.beta / p0.alpha]
    if lay.mean == "ar1":
        nat[0] = m * (1 - nat[1])
    return np.array(nat, dtype=float)


def _fd_gradient(f, x, rel=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel * max(abs(x[i]), 1e-2)
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def _fd_hessian(f, x, rel=1e-4):
    k = x.size
    H = np.empty((k, k))
    h = rel * np.maximum(np.abs(x), 1e-2)
    f0 = f(x)
    for i in range(k):
        for j in range(i, k):
            ei = np.zeros(k)
            ej = np.zeros(k)
            ei[i] = h[i]
            ej[j] = h[j]
            if i == j:
                val = (f(x + ei) - 2 * f0 + f(x - ei)) / h[i] ** 2
            else:
                val = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h[i] * h[j])
            H[i, j] = H[j, i] = val
    return H


def _newton_polish(prob: _Problem, nat, max_iter=20, tol=1e-7):
    """Newton steps on the log-likelihood in natural coordinates (interior optima only)."""
    f = prob.loglik
    x = np.array(nat, dtype=float)
    fx = f(x)
    for _ in range(max_iter):
        g = _fd_gradient(f, x)
        if not np.all(np.isfinite(g)) or np.max(np.abs(g)) < tol:
            break
        H = _fd_hessian(f, x)
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)) or g @ step <= 0:
            break
        t = 1.0
        while t > 1e-6:
            cand = x + t * step
            fc = f(cand)
            if math.isfinite(fc) and fc >= fx - 1e-12:
                break
            t *= 0.5
        else:
            break
        x, fx = cand, fc
    return x


@dataclass
class FittedModel:
    family: str
    mean_params: dict
    vol_params: dict
    innovation: object  # "normal" or NigParams (standardized)
    log_likelihood: float
    aic: float
    bic: float
    n: int
    k: int
    residuals: np.ndarray = field(repr=False)
    sigma2: np.ndarray = field(repr=False)
    last_z: float = 0.0
    last_return: float = 0.0
    last_variance: float = 0.0
    mean_mode: str = "ma1"
    converged: bool = True
    gradient_max: float = math.nan
    warnings: list = field(default_factory=list)
    seed: int | None = None

    @property
    def innovation_law(self) -> str:
        return "normal" if self.innovation == "normal" else "nig"

    @property
    def mean_abs_innovation(self) -> float:
        return _innovation_mean_abs(self.innovation)

    def natural_params(self) -> np.ndarray:
        v = [self.mean_params["phi0"], self.mean_params["theta1"]]
        v += [self.vol_params[k] for k in VOL_NAMES[self.family]]
        if self.innovation != "normal":
            p = self.innovation
            v += [p.zeta, p.beta / p.alpha]
        if self.family == "EGARCH11":
            # the likelihood is parameterized with E|eps| folded into omega
            v[2] = v[2] - self.vol_params["alpha"] * self.mean_abs_innovation
        return np.array(v, dtype=float)

    def next_variance(self) -> float:
        """One-step-ahead conditional variance after the last observation."""
        vp = self.vol_params
        z, s2 = self.last_z, self.last_variance
        if self.family == "ARCH1":
            return vp["alpha0"] + vp["alpha1"] * z * z
        if self.family == "GARCH11":
            return vp["alpha0"] + vp["alpha1"] * z * z + vp["beta1"] * s2
        e = z / math.sqrt(s2)
        return math.exp(vp["omega"] + vp["beta"] * math.log(s2)
                        + vp["alpha"] * (abs(e) - self.mean_abs_innovation) + vp["gamma"] * e)

    def next_mean(self) -> float:
        c = self.mean_params["theta1"]
        carry = self.last_return if self.mean_mode == "ar1" else self.last_z
        return self.mean_params["phi0"] + c * carry

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "mean_mode": self.mean_mode,
            "mean": dict(self.mean_params),
            "volatility": dict(self.vol_params),
            "innovation": "normal" if self.innovation == "normal" else self.innovation.to_dict(),
            "log_likelihood": self.log_likelihood,
            "aic": self.aic,
            "bic": self.bic,
            "n": self.n,
            "k": self.k,
            "last_z": self.last_z,
            "last_return": self.last_return,
            "last_variance": self.last_variance,
            "converged": self.converged,
            "gradient_max": self.gradient_max,
            "warnings": list(self.warnings),
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def fit_model(returns, family: str = "GARCH11", innovation: str = "normal", *,
              mean: str = "ma1", retries: int = N_RETRIES, seed: int = 0) -> FittedModel:
    """Maximum-likelihood fit of one mean/volatility/innovation combination.

    The optimizer runs from a moment-based start plus ``retries``
    perturbed starts (deterministic given ``seed``); the best optimum is
    refined by Newton steps in natural coordinates.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    if innovation not in ("normal", "nig"):
        raise ValueError(f"unknown innovation law {innovation!r}")
    if mean not in ("ma1", "ar1"):
        raise ValueError(f"unknown mean equation {mean!r}")
    r = np.asarray(getattr(returns, "values", returns), dtype=float)
    if r.size < MIN_OBS:
        raise ModelFitError(f"need at least {MIN_OBS} observations, got {r.size}")
    if not np.all(np.isfinite(r)):
        raise ModelFitError("returns must be finite")
    if not np.var(r) > 1e-14 * max(1.0, float(np.mean(r * r))):
        raise ModelFitError("zero-variance return series: likelihood is unbounded")

    lay = _Layout(family, innovation, mean)
    prob = _Problem(r, lay)
    nat0 = _start(r, lay)
    u0 = _free_from_natural(lay, nat0)
    gen = np.random.default_rng(seed)
    starts = [u0] + [u0 + gen.normal(scale=0.5, size=u0.size) for _ in range(retries)]
    best = None
    for u in starts:
        if not prob.objective(u) < 1e299:
            continue
        res = optimize.minimize(prob.objective, u, method="BFGS",
                                options={"gtol": 1e-6, "maxiter": 2000})
        if res.fun < 1e299 and (best is None or res.fun < best.fun - 1e-10):
            best = res
    if best is None:
        raise ModelFitError(f"{family}/{innovation}: no start gave a finite likelihood")
    warnings = []
    if not best.success:
        warnings.append(f"optimizer: {best.message}")
    nat = _newton_polish(prob, _natural_from_free(lay, best.x))
    ll = prob.loglik(nat)
    if not math.isfinite(ll):
        raise ModelFitError(f"{family}/{innovation}: non-finite likelihood at optimum")
    grad = _fd_gradient(prob.loglik, nat)
    gmax = float(np.max(np.abs(grad)))
    prob.run_filter(nat)
    z, s2 = prob.z.copy(), prob.s2.copy()

    names = VOL_NAMES[family]
    vol = {k: float(v) for k, v in zip(names, nat[2:2 + len(names)])}
    innov: object = "normal"
    if innovation == "nig":
        innov = _std_nig(nat[-2], nat[-1])
    if family == "EGARCH11":
        vol["omega"] += vol["alpha"] * _innovation_mean_abs(innov)
    aic, bic = information_criteria(ll, lay.k, r.size)
    return FittedModel(
        family=family, mean_params={"phi0": float(nat[0]), "theta1": float(nat[1])},
        vol_params=vol, innovation=innov, log_likelihood=ll, aic=aic, bic=bic,
        n=int(r.size), k=lay.k, residuals=z / np.sqrt(s2), sigma2=s2,
        last_z=float(z[-1]), last_return=float(r[-1]), last_variance=float(s2[-1]),
        mean_mode=mean, converged=bool(best.success) or gmax < 1e-4,
        gradient_max=gmax, warnings=warnings, seed=seed)


def log_likelihood_at(model: FittedModel, returns, nat=None) -> float:
    """Conditional log-likelihood of ``returns`` at ``nat`` (default: the fitted values)."""
    lay = _Layout(model.family, model.innovation_law, model.mean_mode)
    prob = _Problem(np.asarray(getattr(returns, "values", returns), dtype=float), lay)
    return prob.loglik(model.natural_params() if nat is None else np.asarray(nat, dtype=float))


def likelihood_gradient(model: FittedModel, returns, rel: float = 1e-6) -> np.ndarray:
    """Central finite-difference score at the fitted parameters."""
    lay = _Layout(model.family, model.innovation_law, model.mean_mode)
    prob = _Problem(np.asarray(getattr(returns, "values", returns), dtype=float), lay)
    return _fd_gradient(prob.loglik, model.natural_params(), rel)


@dataclass
class Selection:
    family: str
    model: FittedModel
    fits: dict
    criterion: str
    warnings: list


def select_model(returns, criterion: str = "aic", innovation: str = "normal",
                 families=FAMILIES, **kw) -> Selection:
    """Fit every family and keep the one with the smallest criterion.

    Ties go to the smaller parameter count, then to the family order
    ARCH1 < GARCH11 < EGARCH11.  Failed fits are dropped with a warning.
    """
    if criterion not in ("aic", "bic"):
        raise ValueError(f"unknown criterion {criterion!r}")
    fits, warnings = {}, []
    for fam in families:
        try:
            fits[fam] = fit_model(returns, fam, innovation, **kw)
        except ModelFitError as exc:
            msg = f"{fam} fit failed: {exc}"
            logger.warning(msg)
            warnings.append(msg)
    return choose(fits, criterion, warnings)


def choose(fits: dict, criterion: str = "aic", warnings=None) -> Selection:
    """Selection rule applied to already-fitted models (or objects with aic/bic/k)."""
    if not fits:
        raise ModelFitError("every model family failed to fit")
    order = {f: i for i, f in enumerate(FAMILIES)}
    fam = min(fits, key=lambda f: (getattr(fits[f], criterion), fits[f].k, order.get(f, 99)))
    return Selection(fam, fits[fam], fits, criterion, list(warnings or []))


def simulate_model(family: str, vol_params: dict, n: int, seed: int, *, phi0: float = 0.0,
                   theta1: float = 0.0, innovation=None, burn: int = 500) -> np.ndarray:
    """Simulate returns from a mean/volatility model (normal innovations by default)."""
    g = np.random.default_rng(seed)
    total = n + burn
    if innovation is None:
        eps = g.standard_normal(total)
        mabs = _SQRT_2_OVER_PI
    else:
        eps = _nig.sample_nig(innovation, total, seed)
        mabs = _nig.mean_abs(innovation)
    vp = vol_params
    r = np.empty(total)
    if family == "ARCH1":
        s2 = vp["alpha0"] / max(1 - vp["alpha1"], 1e-3)
    elif family == "GARCH11":
        s2 = vp["alpha0"] / max(1 - vp["alpha1"] - vp["beta1"], 1e-3)
    else:
        s2 = math.exp(vp["omega"] / (1 - vp["beta"]))
    zprev = 0.0
    eprev = 0.0
    for t in range(total):
        if t > 0:
            if family == "ARCH1":
                s2 = vp["alpha0"] + vp["alpha1"] * zprev ** 2
            elif family == "GARCH11":
                s2 = vp["alpha0"] + vp["alpha1"] * zprev ** 2 + vp["beta1"] * s2
            else:
                s2 = math.exp(vp["omega"] + vp["beta"] * math.log(s2)
                              + vp["alpha"] * (abs(eprev) - mabs) + vp["gamma"] * eprev)
        z = math.sqrt(s2) * eps[t]
        r[t] = phi0 + z + theta1 * zprev
        zprev, eprev = z, eps[t]
    return r[burn:]
