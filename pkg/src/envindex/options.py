"""Risk-neutral GARCH(1,1)-NIG Monte Carlo option pricing.

Given ``F_{t-1}`` the log return is ``R_t = r' + m_t + sqrt(a_t) eps_t`` with
``a_t`` the GARCH variance, ``m_t = lambda0 sqrt(a_t) - a_t / 2`` and
``eps_t ~ NIG(alpha, beta, delta, mu)``.  The Esscher parameter
``theta_t`` solves ``MGF(1 + theta) = MGF(theta) exp(r')`` for the
conditional law of ``R_t``; under the risk-neutral measure the innovation
is ``NIG(alpha, beta + sqrt(a_t) theta_t, delta, mu)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from . import rng as _rng
from .econometrics import FittedModel
from .nig import NigParams

DEFAULT_PATHS = 10_000
SIGMA_LO, SIGMA_HI = 1e-6, 5.0


class EsscherError(RuntimeError):
    pass


@dataclass
class PricingJob:
    model: FittedModel
    S0: float
    rf: object = 0.0  # flat per-step rate or a sequence, one per step
    maturities: tuple = (1, 2, 3, 4, 5)
    strikes: tuple = ()
    N: int = DEFAULT_PATHS
    seed: int = 0
    lambda0: float = 0.0
    antithetic: bool = False
    initial_variance: float | None = None
    drift: float | None = None  # real-world rate in the return location; defaults to rf

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if any(int(t) < 1 for t in self.maturities):
            raise ValueError("maturities must be at least one step")
        if any(k <= 0 for k in self.strikes):
            raise ValueError("strikes must be positive")
        if self.model.family != "GARCH11" or self.model.innovation == "normal":
            raise ValueError("pricing needs a GARCH11 model with NIG innovations")

    @property
    def horizon(self) -> int:
        return int(max(self.maturities))

    def rates(self) -> np.ndarray:
        if np.ndim(self.rf) == 0:
            return np.full(self.horizon, float(self.rf))
        r = np.asarray(self.rf, dtype=float)
        if r.size < self.horizon:
            raise ValueError("rate curve shorter than the longest maturity")
        return r[:self.horizon]

    def start_variance(self) -> float:
        return self.model.next_variance() if self.initial_variance is None else float(self.initial_variance)


def _innovation(model) -> NigParams:
    p = getattr(model, "innovation", model)
    if not isinstance(p, NigParams):
        raise ValueError("an NIG innovation law is required")
    return p


def _conditional(p: NigParams, a, drift, lambda0):
    """Parameters of the conditional law of R given variance ``a``."""
    s = np.sqrt(a)
    loc = drift + lambda0 * s - 0.5 * a + p.mu * s
    return p.alpha / s, p.beta / s, p.delta * s, loc


def esscher_g(theta, p: NigParams, a: float, rf: float, lambda0: float = 0.0, drift=None):
    """``ln MGF(1 + theta) - ln MGF(theta) - r'`` for the conditional law of R."""
    A, B, D, loc = _conditional(p, a, rf if drift is None else drift, lambda0)
    c = B + theta
    return loc + D * (np.sqrt(A * A - c * c) - np.sqrt(A * A - (c + 1) ** 2)) - rf


def esscher_bracket(p: NigParams, a: float):
    A, B, _, _ = _conditional(p, a, 0.0, 0.0)
    return -A - B, A - B - 1.0


def esscher_shift(model, sigma: float, rf: float, lambda0: float = 0.0, drift: float | None = None,
                  tol: float = 1e-10) -> float:
    """Esscher parameter by bracketed root finding on the MGF domain.

    Parameters
    ----------
    model : FittedModel or NigParams
        Supplies the standardized innovation law.
    sigma : float
        Conditional standard deviation of the step.
    rf : float
        Per-step risk-free rate.
    drift : float, optional
        Rate in the real-world location of R; ``rf`` when omitted, in
        which case the root does not depend on ``rf``.
    """
    p = _innovation(model)
    a = float(sigma) ** 2
    drift = rf if drift is None else drift
    lo, hi = esscher_bracket(p, a)
    if not hi > lo:
        raise EsscherError(f"empty MGF domain: alpha/sqrt(a) = {p.alpha / math.sqrt(a):.4g} <= 1/2")
    span = hi - lo
    lo_, hi_ = lo + 1e-15 * max(1.0, abs(lo)), hi - 1e-15 * max(1.0, abs(hi))
    args = (p, a, rf, lambda0, drift)
    glo, ghi = esscher_g(lo_, *args), esscher_g(hi_, *args)
    if not (glo < 0 < ghi):
        raise EsscherError(f"no sign change of the Esscher equation on ({lo:.6g}, {hi:.6g}): "
                           f"g = ({glo:.3g}, {ghi:.3g}), variance {a:.3g}, rate {rf:.3g}")
    theta = optimize.brentq(esscher_g, lo_, hi_, args=args,
                            xtol=1e-15 * max(1.0, span), rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(esscher_g(theta, *args)) > tol:
        # one Newton step with a numeric slope
        h = 1e-7 * max(1.0, abs(theta))
        slope = (esscher_g(theta + h, *args) - esscher_g(theta - h, *args)) / (2 * h)
        theta -= esscher_g(theta, *args) / slope
    if abs(esscher_g(theta, *args)) > tol:
        raise EsscherError(f"Esscher root not resolved: |g| = {abs(esscher_g(theta, *args)):.3g}")
    return float(theta)


def esscher_shift_vec(p: NigParams, a: np.ndarray, rf: float, lambda0: float = 0.0, drift=None) -> np.ndarray:
    """Closed-form Esscher parameters for a vector of variances.

    Writing ``c = B + theta``, ``k = (loc - r') / D`` the equation reduces to
    ``sqrt(A^2 - c^2) - sqrt(A^2 - (c+1)^2) = -k`` whose root is
    ``c = -1/2 - (k/2) sqrt(4 A^2 / (1 + k^2) - 1)``.
    """
    A, B, D, loc = _conditional(p, a, rf if drift is None else drift, lambda0)
    k = (loc - rf) / D
    disc = 4 * A * A / (1 + k * k) - 1
    if np.any(disc <= 0):
        raise EsscherError("no risk-neutral Esscher parameter: drift outside the attainable band")
    c = -0.5 - 0.5 * k * np.sqrt(disc)
    theta = c - B
    # Newton refinement on g with the analytic slope
    for _ in range(2):
        cc = B + theta
        g = loc + D * (np.sqrt(A * A - cc * cc) - np.sqrt(A * A - (cc + 1) ** 2)) - rf
        dg = D * ((cc + 1) / np.sqrt(A * A - (cc + 1) ** 2) - cc / np.sqrt(A * A - cc * cc))
        theta = theta - g / dg
    return theta


def simulate_risk_neutral(job: PricingJob, workers: int = 1) -> np.ndarray:
    """Index levels at each maturity, shape ``(N, len(maturities))``."""
    p: NigParams = job.model.innovation
    vp = job.model.vol_params
    a0, a1, b1 = vp["alpha0"], vp["alpha1"], vp["beta1"]
    rates = job.rates()
    cols = [int(t) - 1 for t in job.maturities]
    a_start = job.start_variance()
    T = job.horizon

    def block(b, lo, hi):
        g = _rng.block_generator(job.seed, b, stream=2)
        n = hi - lo
        m = (n + 1) // 2 if job.antithetic else n
        a = np.full(m, a_start)
        logS = np.zeros(m)
        logS2 = np.zeros(m)
        a2 = np.full(m, a_start)
        out = np.empty((n, T))
        for t in range(T):
            r = rates[t]
            d = r if job.drift is None else job.drift
            theta = esscher_shift_vec(p, a, r, job.lambda0, d)
            bq = p.beta + np.sqrt(a) * theta
            gam = np.sqrt(p.alpha ** 2 - bq ** 2)
            w = g.wald(p.delta / gam, p.delta ** 2)
            z = g.standard_normal(m)
            eps = p.mu + bq * w + np.sqrt(w) * z
            s = np.sqrt(a)
            logS += d + job.lambda0 * s - 0.5 * a + s * eps
            a_next = a0 + a1 * a * eps ** 2 + b1 * a
            if job.antithetic:
                theta2 = esscher_shift_vec(p, a2, r, job.lambda0, d)
                bq2 = p.beta + np.sqrt(a2) * theta2
                # mirror the Gaussian part only
                gam2 = np.sqrt(p.alpha ** 2 - bq2 ** 2)
                w2 = g.wald(p.delta / gam2, p.delta ** 2)
                eps2 = p.mu + bq2 * w2 - np.sqrt(w2) * z
                s2 = np.sqrt(a2)
                logS2 += d + job.lambda0 * s2 - 0.5 * a2 + s2 * eps2
                a2 = a0 + a1 * a2 * eps2 ** 2 + b1 * a2
                out[:, t] = np.concatenate([logS, logS2])[:n]
            else:
                out[:, t] = logS
            a = a_next
        return job.S0 * np.exp(out[:, cols])

    return np.vstack(_rng.map_blocks(block, job.N, workers))


@dataclass
class OptionSurface:
    maturities: np.ndarray
    strikes: np.ndarray
    S0: float
    call: np.ndarray
    put: np.ndarray
    call_se: np.ndarray
    put_se: np.ndarray
    implied_vol: np.ndarray = None
    iv_status: np.ndarray = None
    discount: np.ndarray = None

    @property
    def moneyness(self) -> np.ndarray:
        return self.S0 / self.strikes

    def rows(self):
        for i, T in enumerate(self.maturities):
            for j, K in enumerate(self.strikes):
                yield [int(T), float(K), float(self.S0 / K), float(self.call[i, j]), float(self.put[i, j]),
                       float(self.call_se[i, j]), float(self.put_se[i, j]),
                       float(self.implied_vol[i, j]) if self.implied_vol is not None else math.nan]


def price_options(levels: np.ndarray, job: PricingJob) -> OptionSurface:
    """Discounted Monte Carlo call/put prices with standard errors on shared paths."""
    levels = np.asarray(levels, dtype=float)
    mats = np.asarray(job.maturities, dtype=int)
    K = np.asarray(job.strikes, dtype=float)
    if levels.ndim != 2 or levels.shape[1] != mats.size:
        raise ValueError("level matrix does not match the maturities")
    rates = job.rates()
    disc = np.exp(-np.cumsum(rates)[mats - 1])
    n = levels.shape[0]
    C = np.empty((mats.size, K.size))
    P = np.empty_like(C)
    Cse = np.empty_like(C)
    Pse = np.empty_like(C)
    for i in range(mats.size):
        ST = levels[:, i][:, None]
        cp = np.maximum(ST - K[None, :], 0.0) * disc[i]
        pp = np.maximum(K[None, :] - ST, 0.0) * disc[i]
        C[i], P[i] = cp.mean(axis=0), pp.mean(axis=0)
        if n > 1:
            Cse[i] = cp.std(axis=0, ddof=1) / math.sqrt(n)
            Pse[i] = pp.std(axis=0, ddof=1) / math.sqrt(n)
        else:
            Cse[i] = Pse[i] = math.nan
    return OptionSurface(mats, K, float(job.S0), C, P, Cse, Pse, discount=disc)


# --------------------------------------------------------------- Black-Scholes

def bs_price(S, K, T, r, sigma, side="call"):
    """Black-Scholes price with continuously compounded per-step rate ``r`` over ``T`` steps."""
    if sigma <= 0 or T <= 0:
        fwd = S - K * math.exp(-r * T)
        return max(fwd, 0.0) if side == "call" else max(-fwd, 0.0)
    vs = sigma * math.sqrt(T)
    d1 = (math.log(S / K) + (r + 0.5 * sigma * sigma) * T) / vs
    d2 = d1 - vs
    if side == "call":
        return S * stats.norm.cdf(d1) - K * math.exp(-r * T) * stats.norm.cdf(d2)
    return K * math.exp(-r * T) * stats.norm.cdf(-d2) - S * stats.norm.cdf(-d1)


@dataclass(frozen=True)
class ImpliedVol:
    value: float
    status: str  # ok | below-band | above-band | upper-bracket | lower-bracket


def implied_vol(price, S, K, T, r, side="call", tol=1e-8) -> ImpliedVol:
    """Black-Scholes implied volatility on ``[1e-6, 5]``; out-of-band prices are undefined."""
    disc_k = K * math.exp(-r * T)
    lo_band = max(S - disc_k, 0.0) if side == "call" else max(disc_k - S, 0.0)
    hi_band = S if side == "call" else disc_k
    if not (lo_band <= price <= hi_band) or not math.isfinite(price):
        return ImpliedVol(math.nan, "below-band" if price < lo_band else "above-band")
    f = lambda s: bs_price(S, K, T, r, s, side) - price
    f_lo, f_hi = f(SIGMA_LO), f(SIGMA_HI)
    if f_hi <= 0:
        return ImpliedVol(SIGMA_HI, "upper-bracket")
    if f_lo >= 0:
        return ImpliedVol(SIGMA_LO, "lower-bracket")
    s = optimize.brentq(f, SIGMA_LO, SIGMA_HI, xtol=1e-14, rtol=1e-14, maxiter=500)
    if abs(f(s)) > tol:
        return ImpliedVol(s, "tolerance")
    return ImpliedVol(float(s), "ok")


def implied_vol_surface(surface: OptionSurface, job: PricingJob, side="call") -> OptionSurface:
    """Fill ``implied_vol`` from call (default) prices; undefined cells are NaN."""
    rates = job.rates()
    iv = np.full(surface.call.shape, math.nan)
    status = np.empty(surface.call.shape, dtype=object)
    prices = surface.call if side == "call" else surface.put
    for i, T in enumerate(surface.maturities):
        r = float(np.mean(rates[:T]))
        for j, K in enumerate(surface.strikes):
            res = implied_vol(prices[i, j], surface.S0, K, int(T), r, side)
            status[i, j] = res.status
            if res.status == "ok":
                iv[i, j] = res.value
    surface.implied_vol = iv
    surface.iv_status = status
    return surface


def price_surface(job: PricingJob, workers: int = 1) -> OptionSurface:
    levels = simulate_risk_neutral(job, workers)
    return implied_vol_surface(price_options(levels, job), job)
