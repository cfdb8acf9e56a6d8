"""Joint one-step-ahead scenarios with multivariate NIG innovations.

The joint law uses one inverse-Gaussian mixing variable ``W ~ IG(1, zeta)``
shared by all countries and a correlated standard normal vector ``Z``::

    eps_l = mu_l + beta_l c_l W + sqrt(c_l W) Z_l,    c_l = delta_l / gamma_l

Each margin is NIG with the common shape ``zeta`` and the skew, mean and
variance of its univariate fit.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import nig as _nig
from . import rng as _rng
from .econometrics import FittedModel
from .nig import NigParams
from .transform import TransformParams, apply_transform, inverse_transform

logger = logging.getLogger(__name__)

DEFAULT_SCENARIOS = 10_000
REAL_WORLD = "real-world"
RISK_NEUTRAL = "risk-neutral"


def nearest_correlation(a: np.ndarray, tol: float = 1e-12, max_iter: int = 500) -> np.ndarray:
    """Nearest correlation matrix in Frobenius norm (Higham's alternating projections)."""
    a = (np.asarray(a, dtype=float) + np.asarray(a, dtype=float).T) / 2
    y = a.copy()
    ds = np.zeros_like(a)
    for _ in range(max_iter):
        r = y - ds
        w, v = np.linalg.eigh(r)
        x = (v * np.maximum(w, 0)) @ v.T
        ds = x - r
        y_new = x.copy()
        np.fill_diagonal(y_new, 1.0)
        if np.linalg.norm(y_new - y) <= tol * max(1.0, np.linalg.norm(y)):
            y = y_new
            break
        y = y_new
    # tiny negative eigenvalues left by the diagonal projection
    w, v = np.linalg.eigh((y + y.T) / 2)
    if w.min() < 0:
        y = (v * np.maximum(w, 0)) @ v.T
        d = np.sqrt(np.diag(y))
        y = y / np.outer(d, d)
    return (y + y.T) / 2


@dataclass(frozen=True)
class MvNigSpec:
    countries: tuple[str, ...]
    marginals: tuple[NigParams, ...]
    zeta: float
    correlation: np.ndarray
    projected: bool = False

    def __post_init__(self):
        object.__setattr__(self, "correlation", np.atleast_2d(np.asarray(self.correlation, dtype=float)))
        if len(self.countries) != len(self.marginals) or self.correlation.shape != (len(self.marginals),) * 2:
            raise ValueError("countries, marginals and correlation disagree in size")
        for c, p in zip(self.countries, self.marginals):
            if abs(p.zeta / self.zeta - 1) > 1e-8:
                raise ValueError(f"marginal {c} has shape {p.zeta:.6g}, not the shared {self.zeta:.6g}")

    @property
    def scales(self) -> np.ndarray:
        return np.array([p.delta / p.gamma for p in self.marginals])

    def implied_correlation(self) -> np.ndarray:
        """Correlation of the joint innovation vector (equals ``correlation`` when all skews vanish)."""
        c = self.scales
        b = np.array([p.beta for p in self.marginals])
        var_w = 1.0 / self.zeta
        cov = np.outer(b * c, b * c) * var_w + np.sqrt(np.outer(c, c)) * self.correlation
        d = np.sqrt(np.diag(cov))
        return cov / np.outer(d, d)

    def to_dict(self) -> dict:
        return {"countries": list(self.countries), "zeta": self.zeta,
                "marginals": [p.to_dict() for p in self.marginals],
                "correlation": self.correlation.tolist(), "projected": self.projected}


def fit_mvnig(residuals, countries=None) -> MvNigSpec:
    """Fit margins column by column and take the projected residual correlation.

    The shared subordinator shape is the geometric mean of the marginal
    shapes; each margin keeps its fitted mean, variance and skew
    ``beta / alpha``.
    """
    x = np.asarray(residuals, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, L = x.shape
    if n < L:
        raise ValueError(f"need at least as many rows as columns ({n} < {L})")
    if not np.all(np.isfinite(x)):
        raise ValueError("residuals must be finite")
    countries = tuple(countries) if countries is not None else tuple(f"c{i}" for i in range(L))
    fits = [_nig.fit_nig(x[:, j]) for j in range(L)]
    zeta = float(np.exp(np.mean([math.log(p.zeta) for p in fits])))
    margins = tuple(_nig.from_shape(zeta, p.beta / p.alpha, p.mean(), p.var()) for p in fits)
    if L == 1:
        return MvNigSpec(countries, (fits[0],), fits[0].zeta, np.ones((1, 1)), False)
    c = np.corrcoef(x, rowvar=False)
    projected = bool(np.linalg.eigvalsh(c).min() < 1e-10)
    corr = nearest_correlation(c)
    if projected:
        logger.warning("residual correlation not positive definite; projected")
    return MvNigSpec(countries, margins, zeta, corr, projected)


def _chol(corr: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(corr)
    return v * np.sqrt(np.maximum(w, 0))


def sample_innovations(spec: MvNigSpec, S: int, seed: int, workers: int = 1, stream: int = 1) -> np.ndarray:
    """``S x L`` draws of the joint innovation vector."""
    L = len(spec.marginals)
    root = _chol(spec.correlation)
    c = spec.scales
    mu = np.array([p.mu for p in spec.marginals])
    beta = np.array([p.beta for p in spec.marginals])

    def block(b, lo, hi):
        g = _rng.block_generator(seed, b, stream)
        w = g.wald(1.0, spec.zeta, size=hi - lo)
        z = g.standard_normal((hi - lo, L)) @ root.T
        cw = w[:, None] * c[None, :]
        return mu + beta * cw + np.sqrt(cw) * z

    return np.vstack(_rng.map_blocks(block, S, workers))


@dataclass(frozen=True)
class ScenarioMatrix:
    countries: tuple[str, ...]
    returns: np.ndarray
    measure: str = REAL_WORLD
    seed: int = 0
    source: str = "simulated"

    @property
    def S(self) -> int:
        return self.returns.shape[0]

    def column(self, country: str) -> np.ndarray:
        return self.returns[:, self.countries.index(country)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "country", "return"])
        for s in range(self.S):
            for j, c in enumerate(self.countries):
                w.writerow([s, c, repr(float(self.returns[s, j]))])
        return buf.getvalue()

    def summary(self) -> dict:
        r = self.returns
        m = r.mean(axis=0)
        sd = r.std(axis=0, ddof=1) if self.S > 1 else np.zeros(r.shape[1])
        with np.errstate(invalid="ignore", divide="ignore"):
            y = (r - m) / sd
            skew = np.mean(y ** 3, axis=0)
            kurt = np.mean(y ** 4, axis=0) - 3
            corr = np.corrcoef(r, rowvar=False) if r.shape[1] > 1 else np.ones((1, 1))
        return {"countries": list(self.countries), "S": self.S, "seed": self.seed,
                "measure": self.measure, "mean": m.tolist(), "std": sd.tolist(),
                "skewness": skew.tolist(), "excess_kurtosis": kurt.tolist(),
                "correlation": np.atleast_2d(corr).tolist()}


def conditional_moments(model: FittedModel, margin: NigParams | None = None) -> tuple[float, float]:
    """Mean and variance of the one-step-ahead return given the innovation margin."""
    m, v = model.next_mean(), model.next_variance()
    if margin is None:
        return m, v
    return m + math.sqrt(v) * margin.mean(), v * margin.var()


def sample_scenarios(spec: MvNigSpec, models, S: int = DEFAULT_SCENARIOS, seed: int = 0,
                     workers: int = 1) -> ScenarioMatrix:
    """Push joint innovations through each country's one-step mean/volatility forecast."""
    if S < 1:
        raise ValueError("S must be at least 1")
    if isinstance(models, dict):
        models = [models[c] for c in spec.countries]
    if len(models) != len(spec.marginals):
        raise ValueError("one fitted model per country is required")
    eps = sample_innovations(spec, S, seed, workers)
    mean = np.array([m.next_mean() for m in models])
    sd = np.sqrt([m.next_variance() for m in models])
    return ScenarioMatrix(spec.countries, mean + sd * eps, REAL_WORLD, int(seed))


def forward_levels(last_levels, scenarios, params) -> np.ndarray:
    """Next-period index levels ``f^-1(f(x_T) * exp(R))`` for each scenario.

    ``params`` is a single :class:`TransformParams` or one per column.
    """
    R = np.asarray(getattr(scenarios, "returns", scenarios), dtype=float)
    last = np.asarray(last_levels, dtype=float)
    if R.ndim != 2 or R.shape[1] != last.size:
        raise ValueError(f"shape mismatch: scenarios {R.shape}, levels {last.shape}")
    plist = [params] * last.size if isinstance(params, TransformParams) else list(params)
    out = np.empty_like(R)
    for j, p in enumerate(plist):
        f_next = apply_transform(p, last[j]) * np.exp(R[:, j])
        out[:, j] = inverse_transform(p, f_next)
    return out
