"""Regenerate the bundled synthetic panel (3 countries, 2007-2021)."""

import csv
import sys
from pathlib import Path

import numpy as np

from envindex.ingest import load_indicator_dictionary

COUNTRIES = ("US", "CN", "IN")
YEARS = range(2007, 2022)
GDP_START = {"US": 52000.0, "CN": 3800.0, "IN": 1100.0}
GDP_GROWTH = {"US": 0.012, "CN": 0.07, "IN": 0.05}


def main(out: Path):
    g = np.random.default_rng(20220101)
    codes = list(load_indicator_dictionary())
    rows = []
    for c in COUNTRIES:
        for code in codes:
            if code == "NY.GDP.PCAP.KD":
                shocks = g.normal(GDP_GROWTH[c], 0.06, len(YEARS))
                shocks[1:3] -= 0.05  # a shared downturn
                level = GDP_START[c] * np.exp(np.cumsum(shocks))
            else:
                base = np.exp(g.normal(3.0, 1.5))
                level = base * np.exp(np.cumsum(g.normal(0.0, 0.08, len(YEARS))))
            for y, v in zip(YEARS, level):
                rows.append([c, code, y, f"{v:.6g}"])
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", "indicator", "year", "value"])
        w.writerows(rows)


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else
         Path(__file__).resolve().parents[1] / "src" / "envindex" / "data" / "fixture_long.csv")
