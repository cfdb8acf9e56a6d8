import io

import numpy as np
import pytest

from envindex import ingest
from envindex.ingest import DuplicateCellError, NonPositiveValueError, PanelError

from conftest import make_panel


def test_dictionary_has_appendix_entries():
    d = ingest.load_indicator_dictionary()
    assert len(d) == 15
    kinds = [i.kind for i in d.values()]
    assert kinds.count("gdp") == 1
    assert sum(k != "gdp" for k in kinds) == 14
    assert all(i.description and i.units for i in d.values())


def test_long_csv_echo():
    text = "country,indicator,year,value\nUS,X,2010,1.5\nUS,X,2011,2\nCN,X,2010,3\nCN,X,2011,4\n"
    p = ingest.load_panel(text)
    assert p.values.shape == (2, 1, 2)
    assert p.value("CN", "X", 2011) == 4.0
    assert p.value("US", "X", 2010) == 1.5


def test_duplicate_cell_names_triple():
    text = ("country,indicator,year,value\nUS,EN.ATM.CO2E.KT,2010,1\n"
            "US,EN.ATM.CO2E.KT,2010,2\n")
    with pytest.raises(DuplicateCellError, match="US.*EN.ATM.CO2E.KT.*2010"):
        ingest.load_panel(text)


def test_malformed_header():
    with pytest.raises(PanelError, match="header"):
        ingest.load_panel("a,b,c\n1,2,3\n")


def test_non_numeric_strict_and_lenient():
    text = "country,indicator,year,value\nUS,X,2010,abc\nCN,X,2010,2\n"
    with pytest.raises(PanelError, match="row 2"):
        ingest.load_panel(text)
    p = ingest.load_panel(text, strict=False)
    assert np.isnan(p.value("US", "X", 2010))
    assert any("row 2" in d for d in p.diagnostics)


def test_missing_value_is_nan():
    p = ingest.load_panel("country,indicator,year,value\nUS,X,2010,\nCN,X,2010,2\n")
    assert np.isnan(p.value("US", "X", 2010))


def test_bytes_and_stream_sources():
    text = "country,indicator,year,value\nUS,X,2010,1\nCN,X,2010,2\n"
    a = ingest.load_panel(text.encode())
    b = ingest.load_panel(io.BytesIO(text.encode()))
    assert a.equals(b)


@pytest.mark.parametrize("fmt", ["long", "wide"])
def test_round_trip(fmt, rng):
    v = rng.lognormal(size=(10, 3, 15))
    v[2, 1, 4] = np.nan
    p = make_panel(v)
    q = ingest.load_panel(ingest.write_panel(p, format=fmt), fmt, dictionary={i.code: i for i in p.indicators})
    assert q.years == tuple(range(2007, 2022))
    assert q.equals(p)


def test_positivity_policies():
    v = np.ones((2, 2, 3))
    p = make_panel(v, countries=["BR", "US"])
    assert ingest.validate_positivity(p, "reject").equals(p)
    assert ingest.validate_positivity(p, "floor").equals(p)
    v[0, 0, 1] = -1.3
    bad = make_panel(v, countries=["BR", "US"])
    with pytest.raises(NonPositiveValueError, match=r"\(BR, X0, 2008\)"):
        ingest.validate_positivity(bad, "reject")
    fl = ingest.validate_positivity(bad, "floor", 1e-6)
    assert fl.values[0, 0, 1] == 1e-6
    assert len(fl.diagnostics) == 1
    assert fl.values.min() > 0


def test_select_window(rng):
    p = make_panel(rng.lognormal(size=(2, 2, 15)))
    assert ingest.select_window(p, 2007, 2021).equals(p)
    w = ingest.select_window(p, 2010, 2012)
    assert w.years == (2010, 2011, 2012)
    assert np.array_equal(w.values, p.values[:, :, 3:6])
    assert ingest.select_window(w, 2010, 2012).equals(w)
    with pytest.raises(PanelError, match="outside"):
        ingest.select_window(p, 2000, 2005)


def test_year_gap_becomes_missing():
    text = "country,indicator,year,value\nUS,X,2010,1\nUS,X,2012,1\n"
    p = ingest.load_panel(text)
    assert p.years == (2010, 2011, 2012)
    assert np.isnan(p.value("US", "X", 2011))
    assert any("2011" in d for d in p.diagnostics)
    with pytest.raises(PanelError, match="contiguous"):
        make_panel(np.ones((1, 1, 2)), years=[2010, 2012])


def test_bundled_fixture_loads():
    from importlib import resources
    raw = resources.files("envindex.data").joinpath("fixture_long.csv").read_bytes()
    p = ingest.load_panel(raw)
    assert p.values.shape == (3, 15, 15)
    assert p.gdp_index is not None
    assert np.all(p.values > 0)
