"""Exponential price map of index levels and log returns.

``f(x) = a * exp(b x)`` is pinned so that the smallest level in scope maps
to ``eps_min`` and the largest to 1.  A log return is then
``ln f(x_t) - ln f(x_{t-1}) = b (x_t - x_{t-1})``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .index import IndexSeries

DEFAULT_EPS_MIN = 1e-3
SCOPES = ("pooled", "per-country")


@dataclass(frozen=True)
class TransformParams:
    a: float
    b: float
    eps_min: float
    lo: float
    hi: float
    scope: str = "pooled"

    def __call__(self, x):
        return apply_transform(self, x)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "eps_min": self.eps_min, "lo": self.lo,
                "hi": self.hi, "scope": self.scope}


@dataclass(frozen=True)
class ReturnSeries:
    country: str
    years: tuple[int, ...]
    values: np.ndarray

    def __len__(self):
        return len(self.values)


def fit_exponential_map(levels, eps_min: float = DEFAULT_EPS_MIN, scope: str = "pooled") -> TransformParams:
    levels = np.asarray(levels, dtype=float).ravel()
    levels = levels[~np.isnan(levels)]
    if not 0 < eps_min < 1:
        raise ValueError("eps_min must lie strictly between 0 and 1")
    if levels.size == 0:
        raise ValueError("no levels to fit")
    lo, hi = float(levels.min()), float(levels.max())
    if not hi > lo:
        raise ValueError(f"degenerate level range [{lo}, {hi}]")
    b = math.log(1.0 / eps_min) / (hi - lo)
    # anchored at the top so f(hi) = 1 is exact; f(lo) follows to ~1 ulp
    a = math.exp(-b * hi)
    return TransformParams(a=a, b=b, eps_min=eps_min, lo=lo, hi=hi, scope=scope)


def apply_transform(p: TransformParams, x):
    # evaluated relative to hi to avoid overflow in exp(b x) for large levels
    return np.exp(p.b * (np.asarray(x, dtype=float) - p.hi))


def inverse_transform(p: TransformParams, f):
    return p.hi + np.log(np.asarray(f, dtype=float)) / p.b


def log_returns(series: IndexSeries, p: TransformParams) -> ReturnSeries:
    x = np.asarray(series.values, dtype=float)
    if x.size < 2:
        raise ValueError(f"series {series.country} too short for returns")
    if np.isnan(x).any():
        raise ValueError(f"series {series.country} has missing levels")
    r = np.diff(np.log(apply_transform(p, x)))
    return ReturnSeries(series.country, series.years[1:], r)


def fit_transforms(series: dict[str, IndexSeries], eps_min: float = DEFAULT_EPS_MIN,
                   scope: str = "pooled") -> dict[str, TransformParams]:
    """One map shared by all series (``pooled``) or one map per series."""
    if scope not in SCOPES:
        raise ValueError(f"unknown transform scope {scope!r}")
    if scope == "pooled":
        p = fit_exponential_map(np.concatenate([s.values for s in series.values()]), eps_min, scope)
        return {c: p for c in series}
    return {c: fit_exponential_map(s.values, eps_min, scope) for c, s in series.items()}
