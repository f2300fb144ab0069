"""Command line: ``ghicopula {synth,fit,simulate,score,report}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .artifacts import (
    canonical_json,
    content_hash,
    copulas_from_payload,
    copulas_payload,
    read_artifact,
    write_artifact,
)
from .bounds import BoundsModel, envelope_violations, historical_extrema
from .calendar_io import DAYS, HourlyPanel, Site, export_csv, ingest_csv
from .config import RunConfig, load_config
from .copulas import empirical_dependence
from .daily import REGIMES, DailyModel, daily_bounds, fit_daily, simulate_daily
from .errors import ConfigError, DataError, GhiError, HorizonMismatch, NumericalError, SeedMissing
from .marginals import MarginalModel
from .pipeline import FitConfig, FittedModel, fit_model, intraday_pairs, noon_pairs, pit_panel
from .scenarios import ScenarioSet, benchmark_da, benchmark_hs, simulate
from .scoring import (
    EvalConfig,
    build_report,
    correlation_weights,
    crps_from_quantiles,
    dm_test,
    ensemble_quantiles,
    score_model,
)
from .synth import SynthConfig, synth_panel

log = logging.getLogger("ghicopula")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4
ARTIFACTS = ("bounds.json", "marginals.json", "copulas.json", "daily.json", "fit_log.json")
SCENARIO_DIR = "scenarios"


@contextmanager
def stage(name: str):
    """Tag errors with the pipeline stage they come from."""
    try:
        yield
    except GhiError as exc:
        exc.args = (f"[{name}] {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        raise
    except FileNotFoundError as exc:
        raise DataError(f"[{name}] file not found: {exc.filename or exc}") from exc


class Outputs:
    """Tracks files written by a command so a failure can remove them."""

    def __init__(self, root: Path):
        self.root = root
        self.written: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.written.append(p)
        return p

    def rollback(self):
        for p in reversed(self.written):
            if p.exists():
                p.unlink()
            side = p.with_suffix(".json")
            if p.suffix == ".npy" and side.exists():
                side.unlink()


def _out_dir(cfg: RunConfig, override: str | None) -> Path:
    out = Path(override) if override else cfg.resolve(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _site(cfg: RunConfig) -> Site:
    return Site(cfg.latitude, cfg.longitude, cfg.site_name)


def _load_panel(cfg: RunConfig) -> HourlyPanel:
    path = cfg.resolve(cfg.data)
    if path is None:
        raise ConfigError("config key 'data' is required")
    return ingest_csv(path, site=_site(cfg))


def _split(cfg: RunConfig, panel: HourlyPanel) -> tuple[HourlyPanel, HourlyPanel]:
    learn, test = cfg.split(panel.years)
    return panel.subset(learn), panel.subset(test)


def _fit_hash(out: Path) -> str:
    hashes = [read_artifact(out / name)["content_hash"] for name in ARTIFACTS[:4]]
    return content_hash(hashes)


def _load_fitted(out: Path) -> tuple[FittedModel, dict[str, DailyModel]]:
    for name in ARTIFACTS[:4]:
        if not (out / name).exists():
            raise ConfigError(f"artifact {out / name} missing; run 'fit' first")
    bounds = BoundsModel.from_dict(read_artifact(out / "bounds.json", "bounds")["payload"])
    marginals = MarginalModel.from_dict(read_artifact(out / "marginals.json", "marginals")["payload"])
    intraday, noon = copulas_from_payload(read_artifact(out / "copulas.json", "copulas")["payload"])
    daily = {r: DailyModel.from_dict(d) for r, d in read_artifact(out / "daily.json", "daily")["payload"].items()}
    return FittedModel(bounds, marginals, intraday, noon), daily


# --------------------------------------------------------------------------
# commands

def cmd_synth(cfg: RunConfig, args, outs: Outputs) -> None:
    seed = args.seed if args.seed is not None else cfg.seed
    if seed is None:
        raise SeedMissing("synth needs --seed or a seed in the config")
    scfg = SynthConfig(latitude=cfg.latitude, longitude=cfg.longitude)
    with stage("synth"):
        panel = synth_panel(cfg.synthetic_years, seed, scfg)
        export_csv(panel, outs.path("synthetic.csv"), header_comment=f"config_hash={cfg.hash} seed={seed}")
    log.info("wrote %d synthetic years to %s", cfg.synthetic_years, outs.root / "synthetic.csv")


def _tail_table(u: np.ndarray, daylight: np.ndarray, seed: int = 0) -> list[dict]:
    rows = []
    rng = np.random.default_rng(seed)
    pairs_by_role = {f"{j}-{j + 1}": intraday_pairs(u, j) for j in range(23) if (daylight[:, j] & daylight[:, j + 1]).any()}
    pairs_by_role["noon-noon"] = noon_pairs(u)
    for role, pairs in pairs_by_role.items():
        if pairs.shape[0] < 100:
            continue
        diag = empirical_dependence(pairs, n_boot=100, rng=rng)
        rows.append({"pair": role, "n": diag.n, "lambda_l": diag.lambda_l, "lambda_u": diag.lambda_u})
    return rows


def cmd_fit(cfg: RunConfig, args, outs: Outputs) -> None:
    with stage("ingest"):
        panel = _load_panel(cfg)
        learn, _ = _split(cfg, panel)
    with stage("fit"), warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fitted = fit_model(learn, FitConfig(cfg.tau_upper, cfg.tau_lower, families=cfg.families))
    with stage("envelope"):
        viol = envelope_violations(fitted.bounds, learn)
    with stage("daily"):
        toa_daily = learn.toa_climatology().sum(axis=1)
        daily = {r: fit_daily(learn.daily_sums(), r, toa_daily, fitted.bounds) for r in REGIMES}
    with stage("diagnostics"):
        u = pit_panel(learn.ghi, fitted.bounds, fitted.marginals)
        tail = _tail_table(u, fitted.marginals.daylight)
    h = cfg.hash
    write_artifact(outs.path("bounds.json"), "bounds", fitted.bounds.to_dict(), h)
    write_artifact(outs.path("marginals.json"), "marginals", fitted.marginals.to_dict(), h)
    write_artifact(outs.path("copulas.json"), "copulas", copulas_payload(fitted.intraday, fitted.noon), h)
    write_artifact(outs.path("daily.json"), "daily", {r: m.to_dict() for r, m in daily.items()}, h)
    fit_log = {
        "learn_years": list(learn.years),
        "envelope_violations": viol,
        "diagnostics": fitted.diagnostics,
        "tail_dependence": tail,
        "warnings": sorted({str(w.message) for w in caught}),
    }
    write_artifact(outs.path("fit_log.json"), "fit_log", json.loads(canonical_json(fit_log)), h)
    with open(outs.path("tail_dependence.csv"), "w") as fh:
        fh.write(f"# config_hash={h}\npair,n,lambda_l,lambda_u\n")
        for r in tail:
            fh.write(f"{r['pair']},{r['n']},{r['lambda_l']:.6f},{r['lambda_u']:.6f}\n")
    log.info("fit done: %d learn years, envelope violations %s", len(learn.years), viol)


def _simulate_one(job):
    out, fam, var, m, seed, cfg_hash, fit_hash = job
    fitted, _ = _load_fitted(out)
    bundle = fitted.bundle(fam, var)
    scen = simulate(bundle, m, seed)
    scen.meta.update(config_hash=cfg_hash, fit_hash=fit_hash)
    return str(scen.save(out / SCENARIO_DIR / bundle.name))


def cmd_simulate(cfg: RunConfig, args, outs: Outputs) -> None:
    seed = args.seed if args.seed is not None else cfg.seed
    if seed is None:
        raise SeedMissing("simulate needs --seed or a seed in the config")
    out = outs.root
    with stage("load"):
        fitted, daily = _load_fitted(out)
        fit_hash = _fit_hash(out)
        panel = _load_panel(cfg)
        learn, _ = _split(cfg, panel)
    (out / SCENARIO_DIR).mkdir(exist_ok=True)
    jobs = [(out, fam, var, cfg.m, seed, cfg.hash, fit_hash) for fam in cfg.families for var in cfg.variants]
    for fam, var in [(j[1], j[2]) for j in jobs]:
        outs.path(f"{SCENARIO_DIR}/{fitted.bundle(fam, var).name}.npy")
    with stage("simulate"):
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as pool:
                list(pool.map(_simulate_one, jobs))
        else:
            for job in jobs:
                _simulate_one(job)
        meta = {"config_hash": cfg.hash, "fit_hash": fit_hash}
        hs = benchmark_hs(learn.ghi, cfg.m, seed)
        hs.meta.update(meta)
        hs.save(outs.path(f"{SCENARIO_DIR}/HS.npy"))
        source = "gumbel" if "gumbel" in cfg.families else cfg.families[0]
        var = "C2" if "C2" in cfg.variants else cfg.variants[0]
        base = ScenarioSet.load(out / SCENARIO_DIR / fitted.bundle(source, var).name, mmap=True)
        da = benchmark_da(np.asarray(base.daily_totals()), fitted.bounds)
        da.meta.update(meta, source=base.name)
        da.seed = seed
        da.save(outs.path(f"{SCENARIO_DIR}/DA.npy"))
    with stage("simulate-daily"):
        upper_daily = daily_bounds(fitted.bounds)[1]
        for r, model in daily.items():
            sims = simulate_daily(model, 1, seed, m=cfg.daily_m, upper_daily=upper_daily)
            with open(outs.path(f"{SCENARIO_DIR}/daily_{r}.csv"), "w") as fh:
                fh.write(f"# config_hash={cfg.hash} fit_hash={fit_hash} seed={seed} "
                         f"toa_exceedances={sims.toa_exceedances} envelope_violations={sims.envelope_violations}\n")
                fh.write("scenario,d,ghi_daily_whm2\n")
                fh.write("".join(f"{k},{d},{v:.17g}\n" for k, d, v in sims.to_rows()))
    log.info("simulated %d scenario years for %d models", cfg.m, len(jobs) + 2)


def _score_one(job):
    path, test, upper, daylight, weights, ecfg = job
    scen = ScenarioSet.load(path, mmap=True)
    return score_model(scen.name, np.asarray(scen.ghi), test, upper, daylight, weights, ecfg)


def _read_daily_csv(path: Path) -> tuple[np.ndarray, dict]:
    header = path.open().readline().lstrip("# ").split()
    info = dict(kv.split("=", 1) for kv in header if "=" in kv)
    data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
    m = int(data[:, 0].max()) + 1
    return data[:, 2].reshape(m, -1), info


def cmd_score(cfg: RunConfig, args, outs: Outputs) -> None:
    out = outs.root
    sdir = out / SCENARIO_DIR
    with stage("load"):
        fitted, _ = _load_fitted(out)
        panel = _load_panel(cfg)
        learn, test = _split(cfg, panel)
        paths = sorted(sdir.glob("*.npy"))
        if not paths:
            raise ConfigError(f"no scenario sets in {sdir}; run 'simulate' first")
        metas = {p.stem: json.loads(p.with_suffix(".json").read_text()) for p in paths}
        fit_hashes = {m.get("fit_hash") for m in metas.values()}
        if len(fit_hashes) > 1 and not args.allow_mixed:
            raise HorizonMismatch(f"scenario sets come from different fits {sorted(map(str, fit_hashes))}; "
                                  "pass --allow-mixed to score them together")
        if {m["n_days"] for m in metas.values()} != {DAYS}:
            raise HorizonMismatch("scenario sets must each cover one 365-day year")
    ecfg = EvalConfig(main_hours=cfg.main_hours, kappa_hours=cfg.kappa_hours)
    weights = correlation_weights(learn.ghi, cfg.main_hours)
    jobs = [(p, test.ghi, fitted.bounds.upper, fitted.marginals.daylight, weights, ecfg) for p in paths]
    with stage("score"):
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as pool:
                losses = list(pool.map(_score_one, jobs))
        else:
            losses = [_score_one(j) for j in jobs]
        order = ["HS", "DA"] + [f"{v}-{n}" for v in ("C1", "C2") for n in ("Gaussian", "Gumbel", "BB1")]
        losses.sort(key=lambda ml: order.index(ml.name) if ml.name in order else len(order))
        report = build_report(losses)
    report.to_csv(outs.path("scores.csv"), header_comment=f"config_hash={cfg.hash}")
    outs.path("scores.txt").write_text(f"# config_hash={cfg.hash}\n{report.table()}\n")
    with stage("score-daily"):
        obs = test.daily_sums()
        dlosses, dinfo = {}, {}
        for r in REGIMES:
            p = sdir / f"daily_{r}.csv"
            if not p.exists():
                continue
            sims, info = _read_daily_csv(p)
            q = ensemble_quantiles(sims)
            dlosses[r] = {w: np.concatenate([crps_from_quantiles(q, obs[y], weight=w) for y in range(obs.shape[0])])
                          for w in ("v1", "v2", "v3")}
            dinfo[r] = info
        if dlosses:
            ref = "M1" if "M1" in dlosses else next(iter(dlosses))
            best = {w: min(dlosses, key=lambda r: dlosses[r][w].mean()) for w in ("v1", "v2", "v3")}
            with open(outs.path("daily_scores.csv"), "w") as fh:
                fh.write(f"# config_hash={cfg.hash}\n")
                fh.write("regime,weight,score_normalized,dm_vs_best_p,toa_exceedances,envelope_violations\n")
                for r, ls in dlosses.items():
                    for w, v in ls.items():
                        p_val = 1.0 if r == best[w] else dm_test(v, dlosses[best[w]][w])[1]
                        fh.write(f"{r},{w},{v.mean() / dlosses[ref][w].mean():.6f},{p_val:.6g},"
                                 f"{dinfo[r].get('toa_exceedances')},{dinfo[r].get('envelope_violations')}\n")
    print(report.table())


def cmd_report(cfg: RunConfig, args, outs: Outputs) -> None:
    out = outs.root
    with stage("load"):
        fitted, daily = _load_fitted(out)
        panel = _load_panel(cfg)
        learn, _ = _split(cfg, panel)
    b = fitted.bounds
    gmax, gmin = historical_extrema(learn, "max"), historical_extrema(learn, "min")
    with open(outs.path("envelope.csv"), "w") as fh:
        fh.write(f"# config_hash={cfg.hash}\nd,h,toa,lower,upper,hist_min,hist_max\n")
        for d in range(DAYS):
            for h in range(24):
                fh.write(f"{d + 1},{h},{b.toa[d, h]:.6f},{b.lower[d, h]:.6f},{b.upper[d, h]:.6f},"
                         f"{gmin[d, h]:.6f},{gmax[d, h]:.6f}\n")
    with stage("report"):
        u = pit_panel(learn.ghi, b, fitted.marginals)
        rng = np.random.default_rng(0)
        with open(outs.path("quantile_dependence.csv"), "w") as fh:
            fh.write(f"# config_hash={cfg.hash}\npair,q,lambda_q,band_lo,band_hi\n")
            for role, pairs in (("11-12", intraday_pairs(u, 11)), ("noon-noon", noon_pairs(u))):
                diag = empirical_dependence(pairs, n_boot=200, rng=rng)
                for row in zip(diag.q, diag.lambda_q, diag.band_lo, diag.band_hi):
                    fh.write(f"{role}," + ",".join(f"{x:.6f}" for x in row) + "\n")
        lo_d, hi_d = daily_bounds(b)
        toa_d = b.toa.sum(axis=1)
        seed = cfg.seed if cfg.seed is not None else 0
        with open(outs.path("daily_paths.csv"), "w") as fh:
            fh.write(f"# config_hash={cfg.hash} seed={seed}\nregime,day,ghi_daily_whm2,lower,upper,toa\n")
            for r, model in daily.items():
                path = simulate_daily(model, 5, seed).values[0]
                for t, v in enumerate(path):
                    d = t % DAYS
                    fh.write(f"{r},{t + 1},{v:.6f},{lo_d[d]:.6f},{hi_d[d]:.6f},{toa_d[d]:.6f}\n")
        sdir = out / SCENARIO_DIR
        paths = sorted(sdir.glob("C2-*.npy")) or sorted(sdir.glob("*.npy"))
        if paths:
            scen = ScenarioSet.load(paths[0], mmap=True)
            k = min(5, scen.m)
            with open(outs.path("hourly_paths.csv"), "w") as fh:
                fh.write(f"# config_hash={cfg.hash} model={scen.name}\nscenario,d,h,ghi_whm2,lower,upper\n")
                for s in range(k):
                    g = np.asarray(scen.ghi[s])
                    for d in range(DAYS):
                        for h in range(24):
                            fh.write(f"{s},{d + 1},{h},{g[d, h]:.6f},{b.lower[d, h]:.6f},{b.upper[d, h]:.6f}\n")
    log.info("report data written to %s", out)


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "simulate": cmd_simulate, "score": cmd_score, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ghicopula", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key = value run configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=1, help="worker processes for simulate/score")
        p.add_argument("--out", default=None, help="output directory (overrides the config)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "score":
            p.add_argument("--allow-mixed", action="store_true", help="score scenario sets from different fits")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    outs = None
    try:
        cfg = load_config(args.config)
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        outs = Outputs(_out_dir(cfg, args.out))
        COMMANDS[args.command](cfg, args, outs)
    except (ConfigError, DataError, NumericalError, FileNotFoundError) as exc:
        if outs is not None:
            outs.rollback()
        code = EXIT_CONFIG if isinstance(exc, ConfigError) else EXIT_NUMERICAL if isinstance(exc, NumericalError) else EXIT_DATA
        print(f"ghicopula {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
