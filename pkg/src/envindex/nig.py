"""Normal-inverse-Gaussian distribution: density, MGF, moments, sampling, MLE.

Parameters follow the usual (alpha, beta, delta, mu) convention with
``|beta| < alpha`` and ``delta > 0``; it is the ``lambda = -1/2`` member
of the generalized hyperbolic family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from . import rng as _rng

LAMBDA = -0.5


class NigFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class NigParams:
    alpha: float
    beta: float
    delta: float
    mu: float = 0.0

    def __post_init__(self):
        if not (self.alpha > 0 and abs(self.beta) < self.alpha and self.delta > 0):
            raise ValueError(f"invalid NIG parameters {self}")

    lam = LAMBDA

    @property
    def gamma(self) -> float:
        return math.sqrt(self.alpha ** 2 - self.beta ** 2)

    @property
    def zeta(self) -> float:
        """Shape ``delta * gamma``; large values approach the normal law."""
        return self.delta * self.gamma

    def mean(self) -> float:
        return self.mu + self.delta * self.beta / self.gamma

    def var(self) -> float:
        return self.delta * self.alpha ** 2 / self.gamma ** 3

    def skew(self) -> float:
        return 3 * self.beta / (self.alpha * math.sqrt(self.zeta))

    def excess_kurtosis(self) -> float:
        return 3 * (1 + 4 * (self.beta / self.alpha) ** 2) / self.zeta

    def scaled(self, s: float, shift: float = 0.0) -> "NigParams":
        """Law of ``shift + s * X``."""
        return NigParams(self.alpha / s, self.beta / s, self.delta * s, shift + s * self.mu)

    def to_dict(self) -> dict:
        return {"lambda": LAMBDA, "alpha": self.alpha, "beta": self.beta,
                "delta": self.delta, "mu": self.mu}


def from_shape(zeta: float, rho: float, mean: float = 0.0, var: float = 1.0) -> NigParams:
    """NIG with shape ``zeta = delta*gamma``, skew ``rho = beta/alpha`` and given mean/variance."""
    if not (zeta > 0 and -1 < rho < 1 and var > 0):
        raise ValueError("need zeta > 0, |rho| < 1, var > 0")
    alpha = math.sqrt(zeta / var) / (1 - rho * rho)
    beta = rho * alpha
    gamma = alpha * math.sqrt(1 - rho * rho)
    delta = zeta / gamma
    return NigParams(alpha, beta, delta, mean - delta * beta / gamma)


def moment_match(mean: float, var: float, skew: float, exkurt: float,
                 rho_max: float = 0.95, zeta_max: float = 1e4) -> NigParams:
    """Moment estimator projected into the feasible region.

    NIG requires ``exkurt > 4 skew^2 / 3``; inputs outside are pulled in.
    """
    floor = 4 * skew * skew / 3
    if not exkurt > floor:
        exkurt = max(floor * 1.5, floor + 3 / zeta_max, 1e-3)
    zeta = min(3.0 / (exkurt - floor), zeta_max)
    rho = skew * math.sqrt(zeta) / 3
    rho = max(-rho_max, min(rho_max, rho))
    return from_shape(zeta, rho, mean, var)


def logpdf(x, p: NigParams):
    x = np.asarray(x, dtype=float)
    u = x - p.mu
    q = np.hypot(p.delta, u)
    z = p.alpha * q
    # log K1(z) = log k1e(z) - z
    return (math.log(p.alpha * p.delta / math.pi) + np.log(special.k1e(z)) - z - np.log(q)
            + p.zeta + p.beta * u)


def pdf(x, p: NigParams):
    return np.exp(logpdf(x, p))


def log_mgf(p: NigParams, u):
    u = np.asarray(u, dtype=float)
    inside = p.alpha ** 2 - (p.beta + u) ** 2
    if np.any(np.abs(p.beta + u) >= p.alpha):
        raise ValueError(f"u={u} outside the MGF domain |beta + u| < alpha")
    return p.mu * u + p.delta * (p.gamma - np.sqrt(inside))


def nig_mgf(p: NigParams, u):
    """``E[exp(u X)]``, defined for ``|beta + u| < alpha``."""
    return np.exp(log_mgf(p, u))


def mean_abs(p: NigParams) -> float:
    """``E|X|`` by quadrature."""
    s = math.sqrt(p.var())
    m = p.mean()
    f = lambda x: abs(x) * pdf(x, p)
    pts = sorted({0.0, m})
    lo, hi = m - 60 * s, m + 60 * s
    val, _ = integrate.quad(f, lo, hi, points=[x for x in pts if lo < x < hi], limit=200)
    return val


def sample_nig(p: NigParams, n: int, seed: int, stream: int = 0, workers: int = 1) -> np.ndarray:
    """I.i.d. draws ``mu + beta W + sqrt(W) Z`` with ``W ~ IG(delta/gamma, delta^2)``."""

    def block(b, lo, hi):
        g = _rng.block_generator(seed, b, stream)
        w = g.wald(p.delta / p.gamma, p.delta ** 2, size=hi - lo)
        z = g.standard_normal(hi - lo)
        return p.mu + p.beta * w + np.sqrt(w) * z

    return np.concatenate(_rng.map_blocks(block, n, workers)) if n else np.empty(0)


def _unpack(theta):
    a, v, d, mu = theta
    alpha = math.exp(a)
    beta = alpha * math.tanh(v)
    return alpha, beta, math.exp(d), mu


def _negloglik_and_grad(theta, x):
    alpha, beta, delta, mu = _unpack(theta)
    gamma = math.sqrt(max(alpha * alpha - beta * beta, 1e-300))
    u = x - mu
    q = np.hypot(delta, u)
    z = alpha * q
    k1 = special.k1e(z)
    ll = (math.log(alpha * delta / math.pi) + np.log(k1) - z - np.log(q) + delta * gamma + beta * u)
    r = special.k0e(z) / k1
    g_alpha = np.sum(-q * r) + x.size * delta * alpha / gamma
    g_beta = np.sum(u) - x.size * delta * beta / gamma
    g_delta = np.sum(-alpha * delta * r / q - 2 * delta / q ** 2) + x.size * (1 / delta + gamma)
    g_mu = np.sum(alpha * u * r / q + 2 * u / q ** 2) - x.size * beta
    t = math.tanh(theta[1])
    grad = np.array([alpha * g_alpha + beta * g_beta,
                     alpha * (1 - t * t) * g_beta,
                     delta * g_delta,
                     g_mu])
    return -float(np.sum(ll)), -grad


def nig_loglik(x, p: NigParams) -> float:
    return float(np.sum(logpdf(x, p)))


def fit_nig(samples, *, max_alpha: float = 1e4) -> NigParams:
    """Maximum-likelihood NIG fit started from projected moment estimates."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 8:
        raise NigFitError(f"need at least 8 samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise NigFitError("samples must be finite")
    m, s = float(x.mean()), float(x.std())
    if not s > 0:
        raise NigFitError("degenerate sample (zero variance)")
    y = (x - m) / s
    sk = float(np.mean(y ** 3))
    ku = float(np.mean(y ** 4)) - 3
    p0 = moment_match(0.0, 1.0, sk, ku)
    theta0 = np.array([math.log(p0.alpha), math.atanh(p0.beta / p0.alpha), math.log(p0.delta), p0.mu])
    bounds = [(math.log(1e-3), math.log(max_alpha)), (-6, 6), (math.log(1e-6), math.log(1e6)), (-50, 50)]
    theta0 = np.clip(theta0, [b[0] for b in bounds], [b[1] for b in bounds])
    best = None
    for start in (theta0, np.array([math.log(2.0), 0.0, math.log(2.0), 0.0])):
        res = optimize.minimize(_negloglik_and_grad, start, args=(y,), jac=True, method="L-BFGS-B",
                                bounds=bounds, options={"maxiter": 2000, "ftol": 1e-15, "gtol": 1e-9})
        if np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise NigFitError("NIG likelihood optimization failed")
    alpha, beta, delta, mu = _unpack(best.x)
    return NigParams(alpha, beta, delta, mu).scaled(s, m)
