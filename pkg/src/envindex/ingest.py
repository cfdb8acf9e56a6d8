"""Country x indicator x year panels: loading, validation and windowing.

Two CSV layouts are understood:

* long: ``country,indicator,year,value`` with one row per cell;
* wide: ``country,indicator,<year>,<year>,...`` with one row per
  (country, indicator) pair.

Missing cells are empty fields and are held as ``NaN`` in
:attr:`IndicatorPanel.values`.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import IO, Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

KINDS = ("environmental", "economic", "gdp")

#: The ten largest economies used as the default country list.
DEFAULT_COUNTRIES = ("US", "CN", "JP", "DE", "GB", "IN", "BR", "AU", "FR", "CA")

DEFAULT_EPS_POS = 1e-6


class PanelError(ValueError):
    """Raised for malformed or inconsistent panel input."""


class DuplicateCellError(PanelError):
    pass


class NonPositiveValueError(PanelError):
    pass


@dataclass(frozen=True)
class IndicatorId:
    code: str
    description: str = ""
    units: str = ""
    kind: str = "environmental"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PanelError(f"unknown indicator kind {self.kind!r} for {self.code}")


def load_indicator_dictionary(path=None) -> dict[str, IndicatorId]:
    """Read an indicator dictionary (JSON list of code/description/units/kind).

    Without ``path`` the bundled World Bank dictionary is used.
    """
    if path is None:
        text = resources.files("envindex.data").joinpath("indicators.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    entries = json.loads(text)
    out = {}
    for e in entries:
        ind = IndicatorId(e["code"], e.get("description", ""), e.get("units", ""), e.get("kind", "environmental"))
        if ind.code in out:
            raise PanelError(f"duplicate indicator code {ind.code!r} in dictionary")
        out[ind.code] = ind
    if sum(ind.kind == "gdp" for ind in out.values()) != 1:
        raise PanelError("indicator dictionary must contain exactly one gdp indicator")
    return out


@dataclass(frozen=True)
class IndicatorPanel:
    """Raw indicator values on a (country, indicator, year) grid.

    ``values`` has shape ``(L, K, T)``; ``NaN`` marks a missing cell.
    ``diagnostics`` collects human-readable notes from loading and
    validation (skipped cells, floored values).
    """

    countries: tuple[str, ...]
    indicators: tuple[IndicatorId, ...]
    years: tuple[int, ...]
    values: np.ndarray
    diagnostics: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "countries", tuple(self.countries))
        object.__setattr__(self, "indicators", tuple(self.indicators))
        object.__setattr__(self, "years", tuple(int(y) for y in self.years))
        shape = (len(self.countries), len(self.indicators), len(self.years))
        if values.shape != shape:
            raise PanelError(f"values shape {values.shape} does not match axes {shape}")
        if len(set(self.countries)) != len(self.countries):
            raise PanelError("duplicate country codes")
        codes = [ind.code for ind in self.indicators]
        if len(set(codes)) != len(codes):
            raise PanelError("duplicate indicator codes")
        if sum(ind.kind == "gdp" for ind in self.indicators) > 1:
            raise PanelError("at most one gdp indicator is allowed")
        if self.years and list(self.years) != list(range(self.years[0], self.years[-1] + 1)):
            raise PanelError("years must be contiguous")

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(ind.code for ind in self.indicators)

    @property
    def gdp_index(self) -> int | None:
        for k, ind in enumerate(self.indicators):
            if ind.kind == "gdp":
                return k
        return None

    def value(self, country: str, code: str, year: int) -> float:
        return float(self.values[self.countries.index(country), self.codes.index(code),
                                 self.years.index(year)])

    def equals(self, other: "IndicatorPanel") -> bool:
        """Axis and value equality, treating NaN cells as equal."""
        return (self.countries == other.countries
                and self.indicators == other.indicators
                and self.years == other.years
                and np.array_equal(self.values, other.values, equal_nan=True))

    def complete_cases(self) -> np.ndarray:
        """Boolean ``(L, T)`` mask of country-years with every indicator present."""
        return ~np.isnan(self.values).any(axis=1)

    def excluded_cells(self) -> list[tuple[str, int]]:
        mask = self.complete_cases()
        return [(c, y) for i, c in enumerate(self.countries)
                for t, y in enumerate(self.years) if not mask[i, t]]

    def select_countries(self, countries: Sequence[str]) -> "IndicatorPanel":
        missing = [c for c in countries if c not in self.countries]
        if missing:
            raise PanelError(f"countries not in panel: {missing}")
        idx = [self.countries.index(c) for c in countries]
        return replace(self, countries=tuple(countries), values=self.values[idx])


# --------------------------------------------------------------------------- io

def _text_stream(source) -> IO[str]:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def _parse_number(text: str, where: str, strict: bool, notes: list[str]) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    try:
        v = float(text)
    except ValueError:
        if strict:
            raise PanelError(f"non-numeric value {text!r} at {where}") from None
        notes.append(f"unparseable value {text!r} at {where}; treated as missing")
        return math.nan
    if not math.isfinite(v):
        if strict:
            raise PanelError(f"non-finite value {text!r} at {where}")
        notes.append(f"non-finite value {text!r} at {where}; treated as missing")
        return math.nan
    return v


def _resolve_indicators(codes: Iterable[str], dictionary) -> list[IndicatorId]:
    dictionary = load_indicator_dictionary() if dictionary is None else dictionary
    out = []
    for code in codes:
        out.append(dictionary.get(code, IndicatorId(code)))
    return out


def _assemble(cells: dict, dictionary, notes: list[str]) -> IndicatorPanel:
    if not cells:
        raise PanelError("panel contains no cells")
    countries: list[str] = []
    codes: list[str] = []
    for c, k, _ in cells:
        if c not in countries:
            countries.append(c)
        if k not in codes:
            codes.append(k)
    ys = [y for _, _, y in cells]
    years = list(range(min(ys), max(ys) + 1))
    for y in sorted(set(years) - set(ys)):
        notes.append(f"year {y} has no rows; its cells are missing")
    values = np.full((len(countries), len(codes), len(years)), np.nan)
    ci = {c: i for i, c in enumerate(countries)}
    ki = {k: i for i, k in enumerate(codes)}
    for (c, k, y), v in cells.items():
        values[ci[c], ki[k], y - years[0]] = v
    return IndicatorPanel(tuple(countries), tuple(_resolve_indicators(codes, dictionary)),
                          tuple(years), values, tuple(notes))


def load_panel(source, format: str = "long", *, dictionary=None, strict: bool = True) -> IndicatorPanel:
    """Parse a panel from CSV text, bytes or a binary/text stream.

    With ``strict=False`` non-numeric fields become missing cells and a
    diagnostic naming the row and column is recorded instead of raising.
    Indicator metadata is looked up in ``dictionary`` (default: the
    bundled one); unknown codes are kept as environmental indicators.
    """
    reader = csv.reader(_text_stream(source))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise PanelError("empty input") from None
    notes: list[str] = []
    cells: dict[tuple[str, str, int], float] = {}

    def put(key, v):
        if key in cells:
            raise DuplicateCellError(f"duplicate cell (country={key[0]}, indicator={key[1]}, year={key[2]})")
        cells[key] = v

    if format == "long":
        if header != ["country", "indicator", "year", "value"]:
            raise PanelError(f"malformed long-csv header {header!r}")
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != 4:
                raise PanelError(f"row {rowno}: expected 4 fields, got {len(row)}")
            country, code, year, value = (f.strip() for f in row)
            try:
                y = int(year)
            except ValueError:
                raise PanelError(f"row {rowno}: invalid year {year!r}") from None
            put((country, code, y), _parse_number(value, f"row {rowno}, column value", strict, notes))
    elif format == "wide":
        if len(header) < 3 or header[:2] != ["country", "indicator"]:
            raise PanelError(f"malformed wide-csv header {header!r}")
        try:
            years = [int(h) for h in header[2:]]
        except ValueError:
            raise PanelError(f"malformed wide-csv year columns {header[2:]!r}") from None
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != len(header):
                raise PanelError(f"row {rowno}: expected {len(header)} fields, got {len(row)}")
            country, code = row[0].strip(), row[1].strip()
            for y, text in zip(years, row[2:]):
                put((country, code, y), _parse_number(text, f"row {rowno}, column {y}", strict, notes))
    else:
        raise PanelError(f"unknown format {format!r}")
    for n in notes:
        logger.warning(n)
    return _assemble(cells, dictionary, notes)


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def write_panel(panel: IndicatorPanel, sink=None, format: str = "long") -> str:
    """Serialize ``panel``; returns the CSV text and writes it to ``sink`` if given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if format == "long":
        w.writerow(["country", "indicator", "year", "value"])
        for i, c in enumerate(panel.countries):
            for k, code in enumerate(panel.codes):
                for t, y in enumerate(panel.years):
                    w.writerow([c, code, y, _fmt(panel.values[i, k, t])])
    elif format == "wide":
        w.writerow(["country", "indicator", *panel.years])
        for i, c in enumerate(panel.countries):
            for k, code in enumerate(panel.codes):
                w.writerow([c, code, *(_fmt(v) for v in panel.values[i, k])])
    else:
        raise PanelError(f"unknown format {format!r}")
    text = buf.getvalue()
    if sink is not None:
        sink.write(text if isinstance(sink, io.TextIOBase) else text.encode("utf-8"))
    return text


# ------------------------------------------------------------------ validation

def validate_positivity(panel: IndicatorPanel, policy: str = "reject",
                        eps_pos: float = DEFAULT_EPS_POS) -> IndicatorPanel:
    """Enforce strictly positive indicator values.

    ``policy="reject"`` raises on the first nonpositive cell;
    ``policy="floor"`` replaces every nonpositive cell by ``eps_pos`` and
    records one diagnostic per replacement.
    """
    if policy not in ("reject", "floor"):
        raise ValueError(f"unknown positivity policy {policy!r}")
    bad = np.argwhere(panel.values <= 0)
    if bad.size == 0:
        return panel
    if policy == "reject":
        i, k, t = bad[0]
        raise NonPositiveValueError(
            f"nonpositive value {panel.values[i, k, t]!r} at ({panel.countries[i]}, "
            f"{panel.codes[k]}, {panel.years[t]})")
    if not eps_pos > 0:
        raise ValueError("eps_pos must be positive")
    values = panel.values.copy()
    notes = list(panel.diagnostics)
    for i, k, t in bad:
        msg = (f"floored {values[i, k, t]!r} to {eps_pos!r} at ({panel.countries[i]}, "
               f"{panel.codes[k]}, {panel.years[t]})")
        logger.warning(msg)
        notes.append(msg)
        values[i, k, t] = eps_pos
    return replace(panel, values=values, diagnostics=tuple(notes))


def select_window(panel: IndicatorPanel, start: int, end: int) -> IndicatorPanel:
    if start > end:
        raise PanelError(f"empty window [{start}, {end}]")
    if start < panel.years[0] or end > panel.years[-1]:
        raise PanelError(f"window [{start}, {end}] outside panel range "
                         f"[{panel.years[0]}, {panel.years[-1]}]")
    a, b = start - panel.years[0], end - panel.years[0] + 1
    return replace(panel, years=tuple(range(start, end + 1)), values=panel.values[:, :, a:b])
