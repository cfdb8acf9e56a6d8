"""Command-line pipeline: panel -> indices -> models -> scenarios -> reports.

Every subcommand recomputes its upstream stages in memory and writes only
its own artifacts; ``pipeline`` writes all of them.  Each CSV starts with a
``# config_hash=...`` comment line and each JSON carries a ``config_hash``
key, so outputs can be matched to the ``config.json`` written beside them.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import analytics, econometrics, factor, index, ingest, options, portfolio, simulate, transform

logger = logging.getLogger("envindex")

STAGES = ("build-index", "transform", "fit", "simulate", "regress", "metrics",
          "frontier", "price-options", "factors")
# fields that do not change any output value
_UNHASHED = ("out", "workers")


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class RunConfig:
    data: str = ""  # empty: bundled synthetic fixture
    data_format: str = "long"
    countries: list = field(default_factory=list)  # empty: every panel country
    start_year: int = 0  # 0: first panel year
    end_year: int = 0
    positivity: str = "reject"
    eps_pos: float = ingest.DEFAULT_EPS_POS
    gdp_policy: str = index.EXCLUDE_GDP
    scope: str = "pooled"
    eps_min: float = transform.DEFAULT_EPS_MIN
    families: list = field(default_factory=lambda: list(econometrics.FAMILIES))
    innovation: str = "nig"
    criterion: str = "bic"
    mean: str = "ma1"
    scenarios: int = simulate.DEFAULT_SCENARIOS
    paths: int = options.DEFAULT_PATHS
    seed: int = 0
    workers: int = 1
    rf: float = 0.0
    level: float = 0.05
    alpha_tail: float = 0.5
    beta_tail: float = 0.5
    regression: str = "robust"
    gammas: list = field(default_factory=lambda: list(portfolio.DEFAULT_GAMMAS))
    cvar_levels: list = field(default_factory=lambda: [0.05, 0.01])
    long_only: bool = True
    option_index: str = index.GLOBAL
    maturities: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    moneyness: list = field(default_factory=lambda: [0.8, 0.85, 0.9, 0.95, 1.0, 1.05, 1.1, 1.15, 1.2])
    lambda0: float = 0.0
    antithetic: bool = False
    factors: int = 3
    rotation: str = "none"
    factor_mode: str = "correlation"
    out: str = "out"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    def resolved(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if k not in ("out",)}

    def hash(self) -> str:
        d = {k: v for k, v in dataclasses.asdict(self).items() if k not in _UNHASHED}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


# ------------------------------------------------------------------ outputs

class Writer:
    def __init__(self, cfg: RunConfig):
        self.dir = Path(cfg.out)
        self.hash = cfg.hash()
        self.cfg = cfg
        self.written: list[str] = []

    def _path(self, name):
        self.dir.mkdir(parents=True, exist_ok=True)
        self.written.append(name)
        return self.dir / name

    def csv(self, name: str, header, rows):
        buf = io.StringIO()
        buf.write(f"# config_hash={self.hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
        self._path(name).write_text(buf.getvalue())

    def json(self, name: str, obj: dict):
        obj = {"config_hash": self.hash, **obj}
        self._path(name).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")

    def config(self):
        self.json("config.json", {"config": self.cfg.resolved()})


def _cell(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if math.isnan(v) else repr(v)
    return v


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.floating, float)):
        o = float(o)
        return None if math.isnan(o) or math.isinf(o) else o
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


# ------------------------------------------------------------------- stages

class Run:
    """Lazily evaluated stage results for one configuration."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self._cache = {}

    def _get(self, key, fn, stage=None):
        if key not in self._cache:
            try:
                self._cache[key] = fn()
            except (StageError, FileNotFoundError):
                raise
            except Exception as exc:
                raise StageError(stage or key, str(exc)) from exc
        return self._cache[key]

    @property
    def panel(self) -> ingest.IndicatorPanel:
        return self._get("ingest", self._load)

    def _load(self):
        cfg = self.cfg
        if cfg.data:
            path = Path(cfg.data)
            if not path.is_file():
                raise FileNotFoundError(str(path))
            panel = ingest.load_panel(path.read_bytes(), cfg.data_format)
        else:
            src = resources.files("envindex.data").joinpath("fixture_long.csv").read_bytes()
            panel = ingest.load_panel(src, "long")
        if cfg.countries:
            panel = panel.select_countries(cfg.countries)
        if cfg.start_year or cfg.end_year:
            panel = ingest.select_window(panel, cfg.start_year or panel.years[0],
                                         cfg.end_year or panel.years[-1])
        return ingest.validate_positivity(panel, cfg.positivity, cfg.eps_pos)

    @property
    def build(self) -> index.IndexBuild:
        return self._get("build-index", lambda: index.build_indices(self.panel, self.cfg.gdp_policy))

    @property
    def series(self) -> dict:
        """Country DEIs plus the global index, in panel order."""
        b = self.build
        return {**b.deis, index.GLOBAL: b.global_index}

    @property
    def maps(self) -> dict:
        return self._get("transform", lambda: transform.fit_transforms(self.series, self.cfg.eps_min,
                                                                        self.cfg.scope))

    @property
    def returns(self) -> dict:
        def go():
            out = {}
            for c, s in self.series.items():
                if np.isnan(s.values).any():
                    raise StageError("transform", f"{c} has missing index levels")
                out[c] = transform.log_returns(s, self.maps[c])
            return out
        return self._get("returns", go, "transform")

    @property
    def countries(self) -> list[str]:
        return list(self.build.deis)

    @property
    def selections(self) -> dict:
        def go():
            cfg = self.cfg
            out = {}
            for c, r in self.returns.items():
                try:
                    out[c] = econometrics.select_model(r.values, cfg.criterion, cfg.innovation,
                                                       tuple(cfg.families), mean=cfg.mean, seed=cfg.seed)
                except Exception as exc:
                    raise StageError("fit", f"{c}: {exc}") from exc
            return out
        return self._get("fit", go)

    @property
    def mvnig(self) -> simulate.MvNigSpec:
        def go():
            cs = self.countries
            z = np.column_stack([self.selections[c].model.residuals for c in cs])
            return simulate.fit_mvnig(z, cs)
        return self._get("simulate", go)

    @property
    def scenarios(self) -> simulate.ScenarioMatrix:
        def go():
            models = {c: self.selections[c].model for c in self.countries}
            return simulate.sample_scenarios(self.mvnig, models, self.cfg.scenarios, self.cfg.seed,
                                             self.cfg.workers)
        return self._get("scenarios", go, "simulate")

    @property
    def global_scenarios(self) -> np.ndarray:
        """Global returns implied by the country scenarios through forward levels."""
        def go():
            cs = self.countries
            last = np.array([self.series[c].values[-1] for c in cs])
            lv = simulate.forward_levels(last, self.scenarios, [self.maps[c] for c in cs])
            g = self.maps[index.GLOBAL]
            x_last = self.series[index.GLOBAL].values[-1]
            return np.log(transform.apply_transform(g, lv.mean(axis=1)) / transform.apply_transform(g, x_last))
        return self._get("global-scenarios", go, "simulate")


def stage_build_index(run: Run, w: Writer):
    b = run.build
    rows = []
    for i, c in enumerate(b.ei.countries):
        for t, y in enumerate(b.ei.years):
            rows.append([c, y, b.ei.values[i, t], b.gdp[i, t], b.deis[c].values[t]])
    for t, y in enumerate(b.global_index.years):
        rows.append([index.GLOBAL, y, math.nan, math.nan, b.global_index.values[t]])
    w.csv("index.csv", ["country", "year", "ei", "gdp", "dei"], rows)
    if b.excluded or run.panel.diagnostics:
        w.json("index_diagnostics.json", {"excluded": [list(e) for e in b.excluded],
                                          "panel": list(run.panel.diagnostics)})


def stage_transform(run: Run, w: Writer):
    rows = []
    for c, s in run.series.items():
        f = transform.apply_transform(run.maps[c], s.values)
        r = run.returns[c].values
        for t, y in enumerate(s.years):
            rows.append([c, y, f[t], r[t - 1] if t else math.nan])
    w.csv("transform.csv", ["country", "year", "f_dei", "log_return"], rows)
    w.json("transform.json", {"maps": {c: p.to_dict() for c, p in run.maps.items()}})


def stage_fit(run: Run, w: Writer):
    rows, models = [], {}
    for c, sel in run.selections.items():
        best_aic = econometrics.choose(sel.fits, "aic").family
        best_bic = econometrics.choose(sel.fits, "bic").family
        for fam, m in sel.fits.items():
            rows.append([c, fam, m.innovation_law, m.log_likelihood, m.aic, m.bic, m.k,
                         int(fam == best_aic), int(fam == best_bic), int(m.converged)])
        models[c] = {"criterion": sel.criterion, "selected": sel.family, "warnings": sel.warnings,
                     "fits": {f: m.to_dict() for f, m in sel.fits.items()}}
    w.csv("fit_table.csv", ["country", "family", "innovation", "log_likelihood", "aic", "bic", "k",
                            "selected_aic", "selected_bic", "converged"], rows)
    w.json("models.json", {"models": models})


def stage_simulate(run: Run, w: Writer):
    sc = run.scenarios
    w.csv("scenarios.csv", ["scenario", "country", "return"],
          ([s, c, sc.returns[s, j]] for s in range(sc.S) for j, c in enumerate(sc.countries)))
    w.json("scenarios_summary.json", {"summary": sc.summary(), "mvnig": run.mvnig.to_dict(),
                                      "source": "simulated"})


def stage_regress(run: Run, w: Writer):
    g = run.global_scenarios
    rows = []
    for c in run.countries:
        y = run.scenarios.column(c)
        res = analytics.robust_regress(y, g) if run.cfg.regression == "robust" else analytics.ols(y, g)
        rows.append([c, res.alpha, res.alpha_pvalue, analytics.stars(res.alpha_pvalue), res.beta,
                     res.beta_pvalue, analytics.stars(res.beta_pvalue), res.adj_r2, res.method,
                     int(res.converged)])
    w.csv("regress.csv", ["country", "alpha", "alpha_pvalue", "alpha_stars", "beta", "beta_pvalue",
                          "beta_stars", "adj_r2", "method", "converged"], rows)


def stage_metrics(run: Run, w: Writer):
    cfg = run.cfg
    rets = {c: run.scenarios.column(c) for c in run.countries}
    market = run.global_scenarios
    report = analytics.ratio_report(rets, market, cfg.rf, cfg.level, cfg.alpha_tail, cfg.beta_tail)
    rows = []
    for r in report:
        ja = analytics.jensen_alpha(rets[r.country], market, cfg.rf, cfg.regression)
        rows.append([r.country, r.sharpe, r.sortino, r.rachev, r.jensen_alpha, ja.alpha_pvalue,
                     analytics.stars(ja.alpha_pvalue), r.var, r.cvar, cfg.rf, cfg.level])
    w.csv("metrics.csv", ["country", "sharpe", "sortino", "rachev", "jensen_alpha", "jensen_alpha_pvalue",
                          "jensen_alpha_stars", "var", "cvar", "rf", "level"], rows)


def stage_frontier(run: Run, w: Writer):
    cfg = run.cfg
    sc = run.scenarios
    header = ["gamma", "expected_return", "risk", *[f"w_{c}" for c in sc.countries]]
    pts = portfolio.mean_variance_frontier(sc, cfg.gammas, cfg.long_only)
    w.csv("frontier_variance.csv", header, portfolio.frontier_rows(pts))
    for q in cfg.cvar_levels:
        pts = portfolio.mean_cvar_frontier(sc, q, cfg.gammas, cfg.long_only, cfg.workers)
        w.csv(f"frontier_cvar_{q:g}.csv", header, portfolio.frontier_rows(pts))


def _pricing_model(run: Run) -> econometrics.FittedModel:
    cfg = run.cfg
    name = cfg.option_index
    if name not in run.returns:
        raise StageError("price-options", f"unknown index {name!r}")
    sel = run.selections.get(name)
    m = sel.fits.get("GARCH11") if sel else None
    if m is None or m.innovation_law != "nig":
        m = econometrics.fit_model(run.returns[name].values, "GARCH11", "nig", mean=cfg.mean, seed=cfg.seed)
    return m


def stage_price_options(run: Run, w: Writer):
    cfg = run.cfg
    def go():
        model = _pricing_model(run)
        s0 = float(transform.apply_transform(run.maps[cfg.option_index],
                                             run.series[cfg.option_index].values[-1]))
        job = options.PricingJob(model, s0, cfg.rf, tuple(cfg.maturities),
                                 tuple(s0 / m for m in cfg.moneyness), cfg.paths, cfg.seed,
                                 cfg.lambda0, cfg.antithetic)
        return job, options.price_surface(job, cfg.workers)
    try:
        job, surf = go()
    except StageError:
        raise
    except Exception as exc:
        raise StageError("price-options", f"{cfg.option_index}: {exc}") from exc
    w.csv("options.csv", ["T", "K", "moneyness", "call", "put", "call_se", "put_se", "implied_vol"],
          surf.rows())
    w.json("options.json", {"index": cfg.option_index, "S0": job.S0, "rf": cfg.rf, "N": job.N,
                            "lambda0": job.lambda0, "model": job.model.to_dict(),
                            "iv_status": surf.iv_status.tolist()})


def stage_factors(run: Run, w: Writer):
    cfg = run.cfg
    sc = run.scenarios
    L = len(sc.countries)
    m = cfg.factors
    while m > 1 and factor.degrees_of_freedom(L, m) < 0:
        m -= 1
    if m != cfg.factors:
        logger.warning("factor count %d infeasible for %d series; using %d", cfg.factors, L, m)
    try:
        fm = factor.ml_factor_fit(sc.returns, m, variables=sc.countries, seed=cfg.seed,
                                  mode=cfg.factor_mode,
                                  rotation=None if cfg.rotation == "none" else cfg.rotation,
                                  workers=cfg.workers)
    except Exception as exc:
        raise StageError("factors", str(exc)) from exc
    order = factor.order_by_uniqueness(fm)
    rows = sorted(fm.table(), key=lambda r: order.index(r[0]))
    w.csv("factors.csv", ["country", *[f"beta{j + 1}" for j in range(m)], "sigma2"], rows)
    w.csv("loadings.csv", ["country", *[f"f{j + 1}" for j in range(m)]], [r[:-1] for r in fm.table()])
    w.json("factors.json", {**fm.to_dict(), "order": order, "requested_m": cfg.factors})


_STAGE_FNS = {
    "build-index": stage_build_index, "transform": stage_transform, "fit": stage_fit,
    "simulate": stage_simulate, "regress": stage_regress, "metrics": stage_metrics,
    "frontier": stage_frontier, "price-options": stage_price_options, "factors": stage_factors,
}


def run(subcommand: str, cfg: RunConfig) -> int:
    """Run one subcommand (or ``pipeline``); returns the exit status."""
    stages = STAGES if subcommand == "pipeline" else (subcommand,)
    if any(s not in _STAGE_FNS for s in stages):
        raise ValueError(f"unknown subcommand {subcommand!r}")
    r = Run(cfg)
    w = Writer(cfg)
    try:
        for s in stages:
            logger.info("stage %s", s)
            _STAGE_FNS[s](r, w)
    except FileNotFoundError as exc:
        print(f"error: input file not found: {exc.filename or exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    w.config()
    return 0


# --------------------------------------------------------------------- argv

def _list_type(elem):
    def parse(s):
        return [elem(v) for v in s.split(",") if v.strip()]
    return parse


def _grid(s: str):
    """``start:stop:step`` (inclusive) or a comma list."""
    if ":" in s:
        a, b, h = (float(v) for v in s.split(":"))
        n = int(round((b - a) / h))
        return [round(a + i * h, 12) for i in range(n + 1)]
    return _list_type(float)(s)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="envindex", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in (*STAGES, "pipeline"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat JSON config; flags override its values")
        for f in dataclasses.fields(RunConfig):
            flag = "--" + f.name.replace("_", "-")
            default = RunConfig().__dict__[f.name]
            if isinstance(default, bool):
                sp.add_argument(flag, action=argparse.BooleanOptionalAction, default=None)
            elif isinstance(default, list):
                elem = int if f.name == "maturities" else str if f.name in ("countries", "families") else float
                kind = _grid if f.name == "gammas" else _list_type(elem)
                sp.add_argument(flag, type=kind, default=None, metavar="LIST")
            else:
                sp.add_argument(flag, type=type(default), default=None)
    return p


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    base = {}
    if ns.config:
        path = Path(ns.config)
        if not path.is_file():
            raise FileNotFoundError(str(path))
        base = json.loads(path.read_text())
    for f in dataclasses.fields(RunConfig):
        v = getattr(ns, f.name, None)
        if v is not None:
            base[f.name] = v
    return RunConfig.from_dict(base)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    ns = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(ns)
    except FileNotFoundError as exc:
        print(f"error: input file not found: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError) as exc:
        print(f"error: bad configuration: {exc}", file=sys.stderr)
        return 2
    return run(ns.command, cfg)


if __name__ == "__main__":
    sys.exit(main())
