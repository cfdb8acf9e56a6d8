# %% [markdown]
# Frontiers, option prices and factor loadings on synthetic returns

# %%
import numpy as np

from envindex import factor, options, portfolio
from envindex.econometrics import FittedModel
from envindex.nig import from_shape

g = np.random.default_rng(0)
R = g.normal(0.01, 0.05, (5000, 4)) + np.array([0.0, 0.005, 0.01, 0.02])
R[:, 3] *= 1.8

for pts, name in ((portfolio.mean_variance_frontier(R), "variance"),
                  (portfolio.mean_cvar_frontier(R, 0.05, gammas=(0.0, 0.5, 0.9, 0.99)), "cvar")):
    for p in pts[:: max(1, len(pts) // 4)]:
        print(f"{name:8s} gamma={p.gamma:4.2f} E={p.expected_return:.4f} risk={p.risk:.4f}",
              np.round(p.weights, 3))

# %% [markdown]
# Put and call prices under the Esscher measure for a GARCH-NIG model.

# %%
model = FittedModel("GARCH11", {"phi0": 0.0, "theta1": 0.0}, {"alpha0": 2e-4, "alpha1": 0.1, "beta1": 0.85},
                    from_shape(2.0, -0.3), 0.0, 0.0, 0.0, 100, 7, np.zeros(1), np.zeros(1),
                    last_z=0.0, last_variance=4e-3)
job = options.PricingJob(model, 1.0, 0.01, (1, 3, 5), tuple(np.linspace(0.8, 1.2, 5)), N=20000, seed=1)
surface = options.price_surface(job)
for row in surface.rows():
    print(["%.4g" % v if isinstance(v, float) else v for v in row])

# %%
f = g.normal(size=(2000, 2))
B = g.uniform(0.3, 0.9, (8, 2))
x = f @ B.T + 0.5 * g.normal(size=(2000, 8))
fm = factor.ml_factor_fit(x, 2, variables=list("ABCDEFGH"), rotation="varimax")
print("LR p-value", round(fm.lr_pvalue, 3))
print("ordered by uniqueness", factor.order_by_uniqueness(fm))
