import numpy as np
import pytest

from envindex.ingest import IndicatorId, IndicatorPanel

GDP = IndicatorId("NY.GDP.PCAP.KD", "GDP per capita", "constant 2015 USD", "gdp")


def make_panel(values, countries=None, years=None, gdp=True):
    """Panel from an (L, K, T) array; the last indicator is GDP when ``gdp``."""
    v = np.asarray(values, dtype=float)
    L, K, T = v.shape
    countries = countries or [f"C{i}" for i in range(L)]
    years = years or list(range(2007, 2007 + T))
    inds = [IndicatorId(f"X{k}", f"indicator {k}", "units", "environmental") for k in range(K - gdp)]
    if gdp:
        inds.append(GDP)
    return IndicatorPanel(tuple(countries), tuple(inds), tuple(years), v)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
