"""Mean-variance and mean-CVaR efficient frontiers.

Each frontier point maximizes ``gamma * E(r_p) - (1 - gamma) * risk(r_p)``
over fully invested weights (``sum w = 1``), long-only unless
``long_only=False``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .analytics import var_cvar

DEFAULT_GAMMAS = tuple(round(0.01 * i, 2) for i in range(100))
RIDGE = 1e-10


class FrontierError(RuntimeError):
    pass


@dataclass
class FrontierPoint:
    gamma: float
    weights: np.ndarray
    expected_return: float
    risk: float
    risk_measure: str
    objective: float = math.nan
    certificate: float = math.nan  # KKT residual (variance) or duality gap (CVaR)
    flags: list = field(default_factory=list)


def _moments(data):
    r = np.asarray(getattr(data, "returns", data), dtype=float)
    if r.ndim != 2 or r.shape[1] < 2:
        raise ValueError("need an (n, L) return matrix with L >= 2")
    return r, r.mean(axis=0), np.cov(r, rowvar=False)


# ------------------------------------------------------------ mean-variance QP

def _eqp(Q, c, free):
    """Minimize 0.5 w'Qw - c'w over the free coordinates subject to sum w = 1."""
    k = len(free)
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = Q[np.ix_(free, free)]
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.concatenate([c[free], [1.0]])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0] if np.linalg.cond(K) > 1e14 else np.linalg.solve(K, rhs)
    return sol[:k], sol[k]


def solve_qp_simplex(Q, c, long_only: bool = True, max_iter: int = 500):
    """Active-set solver for ``min 0.5 w'Qw - c'w`` s.t. ``sum w = 1`` (and ``w >= 0``).

    Returns ``(w, kkt_residual)``.
    """
    Q = np.asarray(Q, dtype=float)
    c = np.asarray(c, dtype=float)
    n = c.size
    if not long_only:
        w, _ = _eqp(Q, c, np.arange(n))
        return w, kkt_residual(Q, c, w, long_only)
    w = np.full(n, 1.0 / n)
    active = np.zeros(n, dtype=bool)
    for _ in range(max_iter):
        free = np.flatnonzero(~active)
        target, nu = _eqp(Q, c, free)
        p = np.zeros(n)
        p[free] = target - w[free]
        if np.max(np.abs(p)) < 1e-14:
            # multipliers of active bounds: grad_i - nu for minimization form
            grad = Q @ w - c
            lam = grad + nu  # stationarity: grad + nu * 1 - lam = 0
            lam_act = np.where(active, lam, np.inf)
            j = int(np.argmin(lam_act))
            if lam_act[j] >= -1e-13:
                break
            active[j] = False
            continue
        # step toward target, blocking on bounds
        neg = (p < 0) & ~active
        steps = np.where(neg, -w / np.where(neg, p, 1.0), np.inf)
        j = int(np.argmin(steps))
        t = min(1.0, steps[j])
        w = w + t * p
        if t < 1.0:
            w[j] = 0.0
            active[j] = True
        w[active] = 0.0
    else:
        raise FrontierError("active-set iteration limit reached")
    w = np.maximum(w, 0.0)
    w /= w.sum()
    return w, kkt_residual(Q, c, w, long_only)


def kkt_residual(Q, c, w, long_only: bool = True) -> float:
    """Max violation of stationarity, feasibility and complementarity."""
    g = Q @ w - c
    free = w > 1e-12 if long_only else np.ones_like(w, dtype=bool)
    nu = -np.mean(g[free]) if free.any() else -np.min(g)
    lam = g + nu
    res = [abs(w.sum() - 1.0), np.max(np.abs(lam[free])) if free.any() else 0.0]
    if long_only:
        res += [max(0.0, -w.min()), max(0.0, -lam[~free].min()) if (~free).any() else 0.0]
    return float(max(res))


def mean_variance_point(mu, cov, gamma: float, long_only: bool = True) -> FrontierPoint:
    mu = np.asarray(mu, dtype=float)
    cov = np.asarray(cov, dtype=float)
    flags = []
    if gamma == 1.0:
        if not long_only:
            raise FrontierError("gamma = 1 without long-only constraint is unbounded")
        w = np.zeros_like(mu)
        w[int(np.argmax(mu))] = 1.0
        res = 0.0
    else:
        Q = 2 * (1 - gamma) * cov
        if np.linalg.eigvalsh(cov).min() <= 1e-14 * max(1.0, np.trace(cov)):
            Q = Q + 2 * (1 - gamma) * RIDGE * np.eye(mu.size)
            flags.append("ridge")
        w, res = solve_qp_simplex(Q, gamma * mu, long_only)
    er = float(mu @ w)
    v = float(w @ cov @ w)
    return FrontierPoint(float(gamma), w, er, v, "variance", gamma * er - (1 - gamma) * v, res, flags)


def mean_variance_frontier(data, gammas=DEFAULT_GAMMAS, long_only: bool = True) -> list[FrontierPoint]:
    """Frontier from a scenario matrix or a return history (rows = observations)."""
    _, mu, cov = _moments(data)
    return [mean_variance_point(mu, cov, g, long_only) for g in gammas]


# ------------------------------------------------------------- mean-CVaR LP

def _cvar_dual(R, mu, gamma, q, long_only):
    """Dual of the auxiliary-variable CVaR program.

    Primal: max gamma mu'w - (1-gamma)(zeta + sum u / (q S))
            s.t. u_s >= -R_s w - zeta, u >= 0, sum w = 1, (w >= 0).
    Dual:   min lam s.t. lam >= gamma mu_i + (R' pi)_i,
            0 <= pi_s <= (1-gamma)/(q S), sum pi = 1 - gamma.
    The weights are the multipliers of the asset rows.
    """
    S, L = R.shape
    cap = (1 - gamma) / (q * S)
    cost = np.zeros(S + 1)
    cost[-1] = 1.0
    A = np.hstack([R.T, -np.ones((L, 1))])
    b = -gamma * mu
    Aeq = np.zeros((1, S + 1))
    Aeq[0, :S] = 1.0
    bounds = [(0.0, cap)] * S + [(None, None)]
    kw = dict(A_eq=Aeq, b_eq=[1 - gamma], bounds=bounds, method="highs",
              options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if long_only:
        res = optimize.linprog(cost, A_ub=A, b_ub=b, **kw)
        w = -res.ineqlin.marginals if res.status == 0 else None
    else:
        res = optimize.linprog(cost, A_eq=np.vstack([Aeq, A]), b_eq=np.concatenate([[1 - gamma], b]),
                               bounds=bounds, method="highs",
                               options=kw["options"])
        w = -res.eqlin.marginals[1:] if res.status == 0 else None
    if res.status != 0:
        raise FrontierError(f"CVaR program failed: {res.message}")
    return w, float(res.fun)


def cvar_objective(R, mu, w, gamma, q) -> tuple[float, float]:
    """(objective, CVaR) of weights ``w`` evaluated on the scenarios."""
    _, cv = var_cvar(R @ w, q)
    return gamma * float(mu @ w) - (1 - gamma) * cv, cv


def mean_cvar_point(R, gamma: float, q: float = 0.05, long_only: bool = True) -> FrontierPoint:
    R = np.asarray(R, dtype=float)
    S = R.shape[0]
    mu = R.mean(axis=0)
    if S * q < 1 - 1e-12:
        raise FrontierError(f"need at least 1/q = {1 / q:g} scenarios, got {S}")
    flags = []
    if abs(q * S - round(q * S)) > 1e-9:
        flags.append("fractional-tail")
    w, dual_obj = _cvar_dual(R, mu, gamma, q, long_only)
    if long_only:
        w = np.maximum(w, 0.0)
    w = w / w.sum()
    obj, cv = cvar_objective(R, mu, w, gamma, q)
    gap = abs(dual_obj - obj)
    if gap > 1e-6 and "fractional-tail" not in flags:
        flags.append("gap")
    return FrontierPoint(float(gamma), w, float(mu @ w), cv, f"cvar({q:g})", obj, gap, flags)


def mean_cvar_frontier(scenarios, q: float = 0.05, gammas=DEFAULT_GAMMAS,
                       long_only: bool = True, workers: int = 1) -> list[FrontierPoint]:
    R, _, _ = _moments(scenarios)
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(lambda g: mean_cvar_point(R, g, q, long_only), gammas))
    return [mean_cvar_point(R, g, q, long_only) for g in gammas]


def frontier_rows(points: list[FrontierPoint]):
    """Rows ``gamma, expected_return, risk, w_1..w_L`` for CSV output."""
    return [[p.gamma, p.expected_return, p.risk, *p.weights.tolist()] for p in points]
