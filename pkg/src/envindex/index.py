"""Normalized indicators, environmental indices and dollar indices.

For each year the raw indicator values are turned into cross-country
shares, averaged into an environmental index ``EI`` in (0, 1), scaled
by GDP per capita into a dollar index ``DEI`` and averaged over
countries into the global index (code ``GLOBAL``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .ingest import IndicatorPanel, PanelError

logger = logging.getLogger(__name__)

GLOBAL = "GLOBAL"

EXCLUDE_GDP = "exclude_gdp_divide_by_K_minus_1"
INCLUDE_ALL = "include_all_divide_by_K"
GDP_POLICIES = (EXCLUDE_GDP, INCLUDE_ALL)


@dataclass(frozen=True)
class IndexSeries:
    country: str
    years: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "years", tuple(int(y) for y in self.years))
        if self.values.shape != (len(self.years),):
            raise ValueError("values must have one entry per year")

    def __len__(self):
        return len(self.years)


@dataclass(frozen=True)
class EiTable:
    """EI per (country, year); ``NaN`` where the country-year was excluded."""

    countries: tuple[str, ...]
    years: tuple[int, ...]
    values: np.ndarray


@dataclass(frozen=True)
class IndexBuild:
    ei: EiTable
    gdp: np.ndarray
    deis: dict[str, IndexSeries]
    global_index: IndexSeries
    excluded: tuple[tuple[str, int], ...]


def normalize(values: np.ndarray) -> np.ndarray:
    """Cross-country shares of one year's ``(L, K)`` indicator block.

    Every column of the result sums to one.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValueError("expected an (L, K) array")
    if np.isnan(values).any():
        raise PanelError("missing value in normalization scope")
    if (values <= 0).any():
        raise PanelError("nonpositive value in normalization scope")
    return values / values.sum(axis=0, keepdims=True)


def normalize_year(panel: IndicatorPanel, year: int) -> np.ndarray:
    """Shares ``F_N`` with shape ``(L, K)`` for one year of ``panel``."""
    t = panel.years.index(year)
    block = panel.values[:, :, t]
    for i, k in np.argwhere(np.isnan(block) | (block <= 0)):
        raise PanelError(f"missing or nonpositive value at ({panel.countries[i]}, "
                         f"{panel.codes[k]}, {year})")
    return normalize(block)


def environmental_index(shares: np.ndarray, gdp_index: int | None = None,
                        gdp_policy: str = EXCLUDE_GDP) -> np.ndarray:
    """Mean of the selected normalized indicators per country.

    Under the default policy the GDP column is left out and the mean runs
    over the remaining ``K - 1`` columns; ``include_all_divide_by_K``
    averages every column.
    """
    if gdp_policy not in GDP_POLICIES:
        raise ValueError(f"unknown gdp policy {gdp_policy!r}")
    shares = np.asarray(shares, dtype=float)
    if gdp_policy == EXCLUDE_GDP and gdp_index is not None:
        shares = np.delete(shares, gdp_index, axis=1)
    if shares.shape[1] == 0:
        raise ValueError("no indicators left to average")
    return shares.mean(axis=1)


def dollarize(ei: EiTable, panel: IndicatorPanel) -> dict[str, IndexSeries]:
    """``DEI = GDP per capita * EI`` per country-year."""
    g = panel.gdp_index
    if g is None:
        raise PanelError("panel has no gdp indicator")
    out = {}
    for i, c in enumerate(ei.countries):
        pi = panel.countries.index(c)
        gdp = np.array([panel.values[pi, g, panel.years.index(y)] for y in ei.years])
        for y, gv, e in zip(ei.years, gdp, ei.values[i]):
            if np.isnan(gv) and not np.isnan(e):
                raise PanelError(f"missing gdp for ({c}, {y})")
        out[c] = IndexSeries(c, ei.years, gdp * ei.values[i])
    return out


def global_index(deis) -> IndexSeries:
    """Equally weighted mean of the country DEIs, ignoring excluded cells."""
    deis = list(deis)
    if not deis:
        raise ValueError("no series to average")
    years = deis[0].years
    for s in deis[1:]:
        if s.years != years:
            raise ValueError(f"year axis of {s.country} does not match {deis[0].country}")
    stack = np.vstack([s.values for s in deis])
    with np.errstate(invalid="ignore"):
        avg = np.nanmean(stack, axis=0) if np.isnan(stack).any() else stack.mean(axis=0)
    return IndexSeries(GLOBAL, years, avg)


def build_indices(panel: IndicatorPanel, gdp_policy: str = EXCLUDE_GDP) -> IndexBuild:
    """Run normalization, EI, DEI and GDEI year by year.

    A country-year with any indicator missing takes no part in that
    year's normalization; it is reported in ``excluded`` and carries NaN.
    """
    L, _, T = panel.values.shape
    if L < 2:
        raise PanelError("at least two countries are required")
    g = panel.gdp_index
    if g is None:
        raise PanelError("panel has no gdp indicator")
    if (panel.values[~np.isnan(panel.values)] <= 0).any():
        raise PanelError("panel contains nonpositive values; run validate_positivity first")
    mask = panel.complete_cases()
    ei = np.full((L, T), np.nan)
    for t, y in enumerate(panel.years):
        rows = np.flatnonzero(mask[:, t])
        if len(rows) < 2:
            raise PanelError(f"fewer than two complete countries in {y}")
        ei[rows, t] = environmental_index(normalize(panel.values[rows, :, t]), g, gdp_policy)
    excluded = tuple(panel.excluded_cells())
    for c, y in excluded:
        logger.warning("excluded (%s, %d): incomplete indicators", c, y)
    table = EiTable(panel.countries, panel.years, ei)
    deis = dollarize(table, panel)
    return IndexBuild(table, panel.values[:, g, :].copy(), deis,
                      global_index(deis.values()), excluded)
