"""Maximum-likelihood factor analysis of a return matrix.

The model is ``Cov(r) = B B' + D`` with unit-variance orthogonal factors.
By default the sample correlation matrix is fitted, so loadings and
uniquenesses are on the standardized scale.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

logger = logging.getLogger(__name__)

FLOOR = 0.005
RESTARTS = 10
TOL = 1e-9
EM_MAX_ITER = 2000


class FactorFitError(RuntimeError):
    pass


@dataclass
class FactorModel:
    m: int
    loadings: np.ndarray
    uniquenesses: np.ndarray
    log_likelihood: float
    lr_statistic: float
    lr_df: float
    lr_pvalue: float
    converged: bool
    n: int
    variables: tuple = ()
    mode: str = "correlation"
    means: np.ndarray = field(default=None, repr=False)
    scale: np.ndarray = field(default=None, repr=False)
    heywood: tuple = ()
    restart: int = 0

    @property
    def covariance(self) -> np.ndarray:
        b = self.loadings
        return b @ b.T + np.diag(self.uniquenesses)

    @property
    def communalities(self) -> np.ndarray:
        return np.sum(self.loadings ** 2, axis=1)

    def rotated(self, rot: np.ndarray) -> "FactorModel":
        """Same fit with loadings post-multiplied by an orthogonal matrix."""
        rot = np.asarray(rot, dtype=float)
        if not np.allclose(rot.T @ rot, np.eye(self.m), atol=1e-10):
            raise ValueError("rotation must be orthogonal")
        out = FactorModel(**{**self.__dict__, "loadings": self.loadings @ rot})
        return out

    def table(self) -> list[list]:
        """Rows ``variable, beta_1..beta_m, sigma2``."""
        return [[v, *self.loadings[i].tolist(), float(self.uniquenesses[i])]
                for i, v in enumerate(self.variables)]

    def to_dict(self) -> dict:
        return {"m": self.m, "variables": list(self.variables), "mode": self.mode,
                "loadings": self.loadings.tolist(), "uniquenesses": self.uniquenesses.tolist(),
                "log_likelihood": self.log_likelihood, "lr_statistic": self.lr_statistic,
                "lr_df": self.lr_df, "lr_pvalue": self.lr_pvalue, "converged": self.converged,
                "heywood": list(self.heywood), "n": self.n}


def degrees_of_freedom(L: int, m: int) -> float:
    return ((L - m) ** 2 - L - m) / 2


def gaussian_loglik(cov: np.ndarray, sample: np.ndarray, n: int) -> float:
    """Gaussian log-likelihood of ``n`` observations with sample covariance ``sample``."""
    L = cov.shape[0]
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        return -math.inf
    return -0.5 * n * (logdet + np.trace(np.linalg.solve(cov, sample)) + L * math.log(2 * math.pi))


def discrepancy(cov: np.ndarray, sample: np.ndarray) -> float:
    """``ln|C| + tr(C^-1 S) - ln|S| - L``, zero when ``C = S``."""
    L = cov.shape[0]
    return float(np.linalg.slogdet(cov)[1] + np.trace(np.linalg.solve(cov, sample))
                 - np.linalg.slogdet(sample)[1] - L)


def lr_test(cov: np.ndarray, sample: np.ndarray, n: int, m: int) -> tuple[float, float, float]:
    """Bartlett-corrected likelihood-ratio test of ``m`` factors against the saturated model."""
    L = sample.shape[0]
    df = degrees_of_freedom(L, m)
    stat = (n - 1 - (2 * L + 5) / 6 - 2 * m / 3) * max(discrepancy(cov, sample), 0.0)
    p = float(stats.chi2.sf(stat, df)) if df > 0 else math.nan
    return float(stat), df, p


def _em(S, psi, m, max_iter, tol):
    """EM iterations of the factor model on ``S`` from uniquenesses ``psi``."""
    L = S.shape[0]
    w, v = np.linalg.eigh(S)
    lam = v[:, -m:] * np.sqrt(np.maximum(w[-m:] - psi.mean(), 1e-3))
    prev = math.inf
    for it in range(max_iter):
        sig = lam @ lam.T + np.diag(psi)
        delta = np.linalg.solve(sig, lam).T  # m x L
        czz = delta @ S @ delta.T + np.eye(m) - delta @ lam
        cyz = S @ delta.T
        lam = np.linalg.solve(czz, cyz.T).T
        psi = np.maximum(np.diag(S - lam @ cyz.T), FLOOR * np.diag(S))
        f = discrepancy(lam @ lam.T + np.diag(psi), S)
        if abs(prev - f) < tol:
            return lam, psi, True, it + 1
        prev = f
    return lam, psi, False, max_iter


def _concentrated(psi, S, m):
    """Discrepancy minimized over loadings for fixed ``psi``, its gradient and the loadings."""
    s = 1 / np.sqrt(psi)
    w, v = np.linalg.eigh(S * np.outer(s, s))
    w, v = w[::-1], v[:, ::-1]
    rest = w[m:]
    f = float(-np.sum(np.log(rest) - rest) - (S.shape[0] - m))
    lam = (v[:, :m] * np.sqrt(np.maximum(w[:m] - 1, 0))) / s[:, None]
    g = np.diag(lam @ lam.T) + psi - np.diag(S)
    return f, g / psi ** 2, lam


def _polish(S, psi, m):
    lo = FLOOR * np.diag(S)
    res = optimize.minimize(lambda p: _concentrated(p, S, m)[:2], psi, jac=True, method="L-BFGS-B",
                            bounds=list(zip(lo, np.maximum(np.diag(S), lo * 2))),
                            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 2000})
    psi = np.maximum(res.x, lo)
    _, _, lam = _concentrated(psi, S, m)
    return lam, psi


def _fit_once(S, psi0, m, tol):
    lam, psi, _, _ = _em(S, psi0, m, EM_MAX_ITER, tol)
    lam, psi = _polish(S, psi, m)
    cov = lam @ lam.T + np.diag(psi)
    f = discrepancy(cov, S)
    # converged when one more EM sweep no longer moves the objective
    lam2, psi2, _, _ = _em(S, psi, m, 1, 0.0)
    f2 = discrepancy(lam2 @ lam2.T + np.diag(psi2), S)
    return lam, psi, f, abs(f - f2) < max(tol, 1e-9 * abs(f)) or f2 >= f


def ml_factor_fit(returns, m: int, *, variables=None, restarts: int = RESTARTS, seed: int = 0,
                  mode: str = "correlation", rotation: str | None = None, workers: int = 1) -> FactorModel:
    """Maximum-likelihood factor model with ``m`` factors.

    Parameters
    ----------
    returns : array_like, shape (n, L)
    m : int
        Number of factors; needs ``n > L > m`` and nonnegative degrees of freedom.
    restarts : int
        Starting points: one deterministic plus ``restarts - 1`` random.
    mode : {"correlation", "covariance"}
        Scale of the reported loadings and uniquenesses.  The likelihood
        fit itself is scale invariant.
    rotation : {None, "varimax"}
    """
    x = np.asarray(returns, dtype=float)
    if x.ndim != 2:
        raise ValueError("returns must be an (n, L) matrix")
    n, L = x.shape
    if not (n > L > m >= 1):
        raise ValueError(f"need n > L > m >= 1, got n={n}, L={L}, m={m}")
    if degrees_of_freedom(L, m) < 0:
        raise ValueError(f"{m} factors leave negative degrees of freedom for {L} variables")
    if mode not in ("correlation", "covariance"):
        raise ValueError(f"unknown mode {mode!r}")
    variables = tuple(variables) if variables is not None else tuple(f"v{i + 1}" for i in range(L))
    means = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    if np.any(sd == 0):
        raise ValueError("constant column")
    R = np.corrcoef(x, rowvar=False)
    np.fill_diagonal(R, 1.0)

    rng = np.random.default_rng(seed)
    starts = [np.clip((1 - 0.5 * m / L) / np.diag(np.linalg.inv(R)), 2 * FLOOR, 1.0)]
    starts += [rng.uniform(0.1, 0.9, L) for _ in range(max(restarts, 1) - 1)]

    def run(p0):
        return _fit_once(R, p0, m, TOL)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run, starts))
    else:
        results = [run(p) for p in starts]
    best = min(range(len(results)), key=lambda i: (results[i][2], i))
    lam, psi, f, ok = results[best]
    if not np.isfinite(f):
        raise FactorFitError("factor fit failed from every start")
    lam = _canonical_signs(lam)
    if rotation == "varimax":
        lam = varimax(lam)
    elif rotation not in (None, "none"):
        raise ValueError(f"unknown rotation {rotation!r}")
    cov = lam @ lam.T + np.diag(psi)
    stat, df, p = lr_test(cov, R, n, m)
    heywood = tuple(variables[i] for i in np.flatnonzero(psi <= FLOOR * (1 + 1e-9)))
    if heywood:
        logger.warning("uniqueness at floor for %s", ", ".join(heywood))
    if not ok:
        logger.warning("factor fit did not meet the convergence tolerance")
    if mode == "covariance":
        lam = lam * sd[:, None]
        psi = psi * sd ** 2
    ll = gaussian_loglik(cov, R, n)
    return FactorModel(m, lam, psi, ll, stat, df, p, bool(ok), n, variables, mode, means, sd, heywood, best)


def _canonical_signs(lam):
    """Make each loading column sum nonnegative so outputs are reproducible."""
    s = np.sign(lam.sum(axis=0))
    s[s == 0] = 1
    return lam * s


def independence_loglik(returns, mode: str = "correlation") -> float:
    """Log-likelihood of the zero-factor model ``D = diag(S)``."""
    x = np.asarray(returns, dtype=float)
    S = np.corrcoef(x, rowvar=False)
    return gaussian_loglik(np.diag(np.diag(S)), S, x.shape[0])


def order_by_uniqueness(model: FactorModel) -> list[str]:
    """Variables by uniqueness, largest first; ties alphabetical."""
    idx = sorted(range(len(model.variables)), key=lambda i: (-model.uniquenesses[i], model.variables[i]))
    return [model.variables[i] for i in idx]


def factor_scores(model: FactorModel, returns) -> np.ndarray:
    """Regression-method scores ``B' (B B' + D)^-1 (r - mean)``."""
    x = np.asarray(returns, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.loadings.shape[0]:
        raise ValueError("returns do not match the model's variables")
    means = model.means if model.means is not None else x.mean(axis=0)
    y = x - means
    if model.mode == "correlation" and model.scale is not None:
        y = y / model.scale
    return y @ np.linalg.solve(model.covariance, model.loadings)


def varimax(loadings, normalize: bool = True, tol: float = 1e-10, max_iter: int = 1000) -> np.ndarray:
    """Varimax rotation of a loading matrix (Kaiser normalization by default)."""
    a = np.asarray(loadings, dtype=float)
    p, k = a.shape
    if k < 2:
        return a.copy()
    h = np.sqrt(np.sum(a ** 2, axis=1)) if normalize else np.ones(p)
    h[h == 0] = 1
    x = a / h[:, None]
    rot = np.eye(k)
    d = 0.0
    for _ in range(max_iter):
        z = x @ rot
        u, s, vt = np.linalg.svd(x.T @ (z ** 3 - z @ np.diag(np.sum(z ** 2, axis=0)) / p))
        rot = u @ vt
        d_new = s.sum()
        if d_new < d * (1 + tol):
            break
        d = d_new
    return (x @ rot) * h[:, None]
