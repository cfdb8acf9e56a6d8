"""Regressions and performance ratios.

Tail measures use the empirical convention throughout: at level ``q`` the
tail is the worst ``ceil(q n)`` observations, losses are positive, and
no interpolation between order statistics is done.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats


class UndefinedRatioError(ValueError):
    """The ratio's denominator is zero or its tail is empty."""


@dataclass
class RegressionResult:
    alpha: float
    beta: float
    alpha_pvalue: float
    beta_pvalue: float
    adj_r2: float
    method: str = "ols"
    weights: np.ndarray | None = None
    converged: bool = True
    iterations: int = 0
    n: int = 0

    @property
    def approximate_pvalues(self) -> bool:
        return self.method != "ols"


def stars(p: float) -> str:
    if not p == p:
        return ""
    return "***" if p < 0.001 else "**" if p < 0.01 else "*" if p < 0.05 else ""


def _check_xy(y, x):
    y = np.asarray(y, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    if y.size != x.size:
        raise ValueError(f"length mismatch: {y.size} vs {x.size}")
    if y.size < 3:
        raise ValueError("need at least 3 observations")
    if np.ptp(x) == 0:
        raise ValueError("constant regressor")
    return y, x


def _wls(y, x, w):
    sw = w.sum()
    xm = (w * x).sum() / sw
    ym = (w * y).sum() / sw
    dx = x - xm
    beta = (w * dx * (y - ym)).sum() / (w * dx * dx).sum()
    return ym - beta * xm, beta


def _inference(y, x, alpha, beta, w=None):
    n = y.size
    w = np.ones(n) if w is None else w
    resid = y - alpha - beta * x
    dof = n - 2
    s2 = (w * resid ** 2).sum() / dof
    sw = w.sum()
    xm = (w * x).sum() / sw
    sxx = (w * (x - xm) ** 2).sum()
    se_b = math.sqrt(s2 / sxx)
    se_a = math.sqrt(s2 * (1 / sw + xm * xm / sxx))
    ym = (w * y).sum() / sw
    sst = (w * (y - ym) ** 2).sum()
    ssr = (w * resid ** 2).sum()

    def pval(coef, se):
        if se == 0:
            return 0.0 if coef != 0 else 1.0
        return float(2 * stats.t.sf(abs(coef / se), dof))

    if sst == 0:
        adj = 1.0 if ssr == 0 else -math.inf
    else:
        adj = 1 - (ssr / dof) / (sst / (n - 1))
    return pval(alpha, se_a), pval(beta, se_b), float(adj)


def ols(y, x) -> RegressionResult:
    """Least-squares line ``y = alpha + beta x`` with two-sided t-test p-values."""
    y, x = _check_xy(y, x)
    a, b = _wls(y, x, np.ones_like(y))
    pa, pb, adj = _inference(y, x, a, b)
    return RegressionResult(float(a), float(b), pa, pb, adj, "ols", n=y.size)


def robust_regress(y, x, tuning: float = 4.685, max_iter: int = 100, tol: float = 1e-10) -> RegressionResult:
    """Tukey-bisquare IRLS with MAD scale, started from OLS.

    If the iteration cap is hit the last iterate is returned with
    ``converged=False``.
    """
    y, x = _check_xy(y, x)
    a, b = _wls(y, x, np.ones_like(y))
    w = np.ones_like(y)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        resid = y - a - b * x
        scale = np.median(np.abs(resid - np.median(resid))) / 0.6745
        if scale <= 0:
            w = np.ones_like(y) if np.all(resid == 0) else (resid == 0).astype(float)
            if w.sum() < 3:
                w = np.ones_like(y)
            converged = True
            break
        u = resid / (tuning * scale)
        w = np.where(np.abs(u) < 1, (1 - u * u) ** 2, 0.0)
        if np.count_nonzero(w) < 3 or np.ptp(x[w > 0]) == 0:
            break
        a_new, b_new = _wls(y, x, w)
        delta = max(abs(a_new - a), abs(b_new - b))
        a, b = a_new, b_new
        if delta < tol * max(1.0, abs(a), abs(b)):
            converged = True
            break
    pa, pb, adj = _inference(y, x, a, b, w)
    return RegressionResult(float(a), float(b), pa, pb, adj, "robust-irls", w, converged, it, y.size)


def jensen_alpha(asset, market, rf: float = 0.0, method: str = "robust") -> RegressionResult:
    """CAPM excess-return regression; ``.alpha`` is Jensen's alpha."""
    ex_a = np.asarray(asset, dtype=float) - rf
    ex_m = np.asarray(market, dtype=float) - rf
    return robust_regress(ex_a, ex_m) if method == "robust" else ols(ex_a, ex_m)


def _tail(values, q):
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("empty input")
    if not 0 < q < 1:
        raise ValueError("level must lie in (0, 1)")
    k = math.ceil(q * v.size - 1e-12)
    return v, max(k, 1)


def var_cvar(returns, q: float = 0.05) -> tuple[float, float]:
    """Empirical (VaR, CVaR) at level ``q`` on the loss scale."""
    v, k = _tail(returns, q)
    return float(-v[k - 1]), float(-v[:k].mean())


def sharpe(returns, rf: float = 0.0) -> float:
    r = np.asarray(returns, dtype=float)
    if r.size < 2:
        raise ValueError("need at least 2 observations")
    sd = r.std(ddof=1)
    if sd == 0:
        raise UndefinedRatioError("zero standard deviation")
    return float((r.mean() - rf) / sd)


def sortino(returns, target: float = 0.0) -> float:
    r = np.asarray(returns, dtype=float)
    if r.size < 2:
        raise ValueError("need at least 2 observations")
    down = np.minimum(r - target, 0.0)
    dd = math.sqrt(np.mean(down * down))
    if dd == 0:
        raise UndefinedRatioError("no observations below target")
    return float((r.mean() - target) / dd)


def expected_tail_loss(x, q: float) -> float:
    """Mean of ``-x`` over the worst ``ceil(q n)`` values of ``x``."""
    v, k = _tail(x, q)
    return float(-v[:k].mean())


def rachev(returns, rf: float = 0.0, alpha_tail: float = 0.5, beta_tail: float = 0.5) -> float:
    """Expected tail gain in the best ``alpha_tail`` over expected tail loss in the worst ``beta_tail``."""
    ex = np.asarray(returns, dtype=float) - rf
    num = expected_tail_loss(-ex, alpha_tail)
    den = expected_tail_loss(ex, beta_tail)
    if den == 0:
        raise UndefinedRatioError("zero expected tail loss")
    return float(num / den)


@dataclass
class RatioRow:
    country: str
    sharpe: float
    sortino: float
    rachev: float
    jensen_alpha: float
    var: float
    cvar: float


def _safe(fn, *a, **k):
    try:
        return fn(*a, **k)
    except UndefinedRatioError:
        return math.nan


def ratio_report(returns: dict, market, rf: float = 0.0, level: float = 0.05,
                 alpha_tail: float = 0.5, beta_tail: float = 0.5, target=None) -> list[RatioRow]:
    """Per-country performance table; undefined ratios are NaN."""
    target = rf if target is None else target
    rows = []
    for c, r in returns.items():
        v, cv = var_cvar(r, level)
        rows.append(RatioRow(c, _safe(sharpe, r, rf), _safe(sortino, r, target),
                             _safe(rachev, r, rf, alpha_tail, beta_tail),
                             jensen_alpha(r, market, rf).alpha, v, cv))
    return rows
