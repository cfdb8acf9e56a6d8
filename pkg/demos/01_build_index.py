# %% [markdown]
# Building dollar environmental indices from the bundled fixture
#
# Load the three-country panel, build the per-country DEIs and the global
# average, then map the levels into (0, 1] and take log returns.

# %%
from importlib import resources

import numpy as np

from envindex import index, ingest, transform

raw = resources.files("envindex.data").joinpath("fixture_long.csv").read_bytes()
panel = ingest.load_panel(raw, "long")
print(panel.countries, panel.years[0], "to", panel.years[-1], len(panel.codes), "indicators")

# %%
build = index.build_indices(panel)
for c, s in build.deis.items():
    print(c, np.round(s.values[:5], 1).tolist(), "...")
print("GLOBAL", np.round(build.global_index.values[:5], 1).tolist(), "...")

# %% [markdown]
# One exponential map is shared by every series, so returns stay comparable
# across countries.

# %%
series = {**build.deis, index.GLOBAL: build.global_index}
maps = transform.fit_transforms(series)
p = maps["US"]
print(f"a={p.a:.3e}  b={p.b:.3e}  range=[{p.lo:.1f}, {p.hi:.1f}]")
for c, s in series.items():
    r = transform.log_returns(s, maps[c])
    print(c, "mean return", round(float(r.values.mean()), 4))
