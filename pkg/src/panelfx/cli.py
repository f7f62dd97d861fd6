"""Batch command-line front-end.

    panelfx <command> --config <path> [--out <dir>] [--seed N]
            [--windows 3m,18m] [--threads N]

Commands: ingest, estimate, intensity, cohorts, revenue, simulate,
robustness, report. Configuration lives in a JSON file; CLI flags override
config keys. Every run echoes its resolved configuration and input digests
into a manifest in the output directory. Exit codes: 0 success, 2 missing
input, 3 config validation failure.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import os
import sys
from pathlib import Path

import pandas as pd

from . import __version__
from .cohorts import RevenueModel, ad_impact, assign_deciles, ecommerce_impact, summarize_frame
from .ingest import (
    PanelDataset,
    apply_filters,
    default_outlier_rule,
    parse_panel,
    unique_visitor_subsample,
    write_panel_csv,
)
from .panel import WINDOW_LABELS, MetricKind
from .pipeline import PipelineConfig, run_pipeline
from .robustness import (
    crossed_did_table,
    donor_variant_rerun,
    eu_share_analysis,
    exclusion_window_rerun,
    threshold_sweep,
)
from .simkit import SimConfig, generate_panel

COMMANDS = (
    "ingest",
    "estimate",
    "intensity",
    "cohorts",
    "revenue",
    "simulate",
    "robustness",
    "report",
)

EXIT_MISSING_INPUT = 2
EXIT_BAD_CONFIG = 3


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class MissingInputError(FileNotFoundError):
    pass


DEFAULT_CONFIG = {
    "input": None,
    "out": None,
    "enforcement_date": "2018-05-25",
    "start_date": "2017-07-01",
    "windows": list(WINDOW_LABELS),
    "metrics": [m.value for m in MetricKind],
    "min_avg_weekly_visits": 1000.0,
    "unique_visitor_floor": 5000.0,
    "outlier_filter": True,
    "donor_k": 5,
    "same_industry": True,
    "weight_mode": "simplex",
    "inference": "hc1",
    "n_placebo": 99,
    "seed": 0,
    "threads": 1,
    "sim": {},
    "revenue": {},
    "robustness": {
        "thresholds": [700, 800, 900, 1000, 1100, 1200, 1300, 1400, 1500, 1600, 1700, 1800, 1900, 2000],
        "exclude_days": 30,
        "donor_variants": ["no_industry", "k10"],
    },
}


def load_config(path: str | None, overrides: dict) -> dict:
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise MissingInputError(f"config file not found: {p}")
        try:
            user = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        for key, value in user.items():
            if key not in cfg:
                raise ConfigError(key, "unknown config key")
            if isinstance(cfg[key], dict) and isinstance(value, dict):
                cfg[key].update(value)
            else:
                cfg[key] = value
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = value
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    for label in cfg["windows"]:
        if label not in WINDOW_LABELS:
            raise ConfigError("windows", f"unknown window label {label!r}")
    for m in cfg["metrics"]:
        try:
            MetricKind(m)
        except ValueError:
            raise ConfigError("metrics", f"unknown metric {m!r}") from None
    for key in ("enforcement_date", "start_date"):
        try:
            dt.date.fromisoformat(cfg[key])
        except ValueError:
            raise ConfigError(key, f"not an ISO date: {cfg[key]!r}") from None
    if cfg["weight_mode"] not in ("simplex", "unconstrained"):
        raise ConfigError("weight_mode", f"unknown mode {cfg['weight_mode']!r}")
    if cfg["inference"] not in ("hc1", "placebo"):
        raise ConfigError("inference", f"unknown inference {cfg['inference']!r}")
    if int(cfg["donor_k"]) < 1:
        raise ConfigError("donor_k", "must be >= 1")
    if int(cfg["threads"]) < 1:
        raise ConfigError("threads", "must be >= 1")


def pipeline_config(cfg: dict) -> PipelineConfig:
    return PipelineConfig(
        windows=tuple(cfg["windows"]),
        metrics=tuple(MetricKind(m) for m in cfg["metrics"]),
        k=int(cfg["donor_k"]),
        same_industry=bool(cfg["same_industry"]),
        mode=cfg["weight_mode"],
        inference=cfg["inference"],
        n_placebo=int(cfg["n_placebo"]),
        enforcement_date=dt.date.fromisoformat(cfg["enforcement_date"]),
        start_date=dt.date.fromisoformat(cfg["start_date"]),
        threads=int(cfg["threads"]),
    )


def _out_dir(cfg: dict) -> Path:
    root = cfg.get("out") or os.environ.get("PANELFX_OUT") or "panelfx-out"
    out = Path(root)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, cfg: dict, inputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "created": dt.datetime.now(dt.timezone.utc).isoformat(),
        "config": cfg,
        "inputs": {
            str(p): hashlib.sha256(p.read_bytes()).hexdigest() for p in inputs if p.exists()
        },
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))


def _require_input(cfg: dict) -> Path:
    if not cfg.get("input"):
        raise MissingInputError("no input file configured (config key 'input')")
    path = Path(cfg["input"])
    if not path.exists():
        raise MissingInputError(f"input file not found: {path}")
    return path


def _load_filtered(cfg: dict) -> tuple[PanelDataset, dict, Path]:
    path = _require_input(cfg)
    dataset = parse_panel(path)
    rule = default_outlier_rule if cfg["outlier_filter"] else None
    filtered, report = apply_filters(dataset, float(cfg["min_avg_weekly_visits"]), outlier_rule=rule)
    return filtered, report.to_dict(), path


def _require_artifact(out: Path, name: str) -> Path:
    path = out / name
    if not path.exists():
        raise MissingInputError(f"missing artifact: {path} (run the producing command first)")
    return path


# -- commands ---------------------------------------------------------------


def cmd_ingest(cfg: dict) -> None:
    out = _out_dir(cfg)
    filtered, report, path = _load_filtered(cfg)
    write_panel_csv(filtered, out / "panel_filtered.csv")
    (out / "filter_report.json").write_text(json.dumps(report, indent=2))
    uniques = unique_visitor_subsample(filtered, float(cfg["unique_visitor_floor"]))
    (out / "unique_visitor_subsample.json").write_text(
        json.dumps({"instance_ids": sorted(uniques.instances)}, indent=2)
    )
    _write_manifest(out, "ingest", cfg, [path])


def cmd_estimate(cfg: dict) -> None:
    out = _out_dir(cfg)
    filtered, report, path = _load_filtered(cfg)
    results = run_pipeline(filtered, pipeline_config(cfg))
    results["instance_effects"].to_csv(out / "effects_instances.csv", index=False)
    results["website_effects"].to_csv(out / "effects_websites.csv", index=False)
    results["intensity_effects"].to_csv(out / "effects_intensity.csv", index=False)
    (out / "synth_weights.json").write_text(json.dumps(results["synth_audit"], indent=2))
    (out / "filter_report.json").write_text(json.dumps(report, indent=2))
    _write_manifest(out, "estimate", cfg, [path])


def cmd_intensity(cfg: dict) -> None:
    out = _out_dir(cfg)
    src = _require_artifact(out, "effects_intensity.csv")
    df = pd.read_csv(src)
    (out / "intensity_summary.csv").write_text(
        df.groupby(["intensity_metric", "window"])["delta"]
        .agg(["mean", "median", "count"])
        .reset_index()
        .to_csv(index=False)
    )
    _write_manifest(out, "intensity", cfg, [src])


def cmd_cohorts(cfg: dict) -> None:
    out = _out_dir(cfg)
    src = _require_artifact(out, "effects_websites.csv")
    effects = pd.read_csv(src)
    filtered, _, path = _load_filtered(cfg)

    meta = []
    for wid, iids in filtered.websites.items():
        inst = filtered.instances[iids[0]]
        meta.append(
            {"website_id": wid, "industry": inst.industry,
             "industry_rank": inst.industry_rank, "user_country": inst.user_country}
        )
    meta = pd.DataFrame(meta)
    if not meta.empty:
        meta["rank_decile"] = assign_deciles(meta["industry_rank"].to_numpy())
    effects = effects.merge(meta, on="website_id", how="left")

    summarize_frame(effects).to_csv(out / "summary_all.csv", index=False)
    for key in ("industry", "rank_decile", "user_country"):
        if key in effects.columns and effects[key].notna().any():
            summarize_frame(effects, by=key).to_csv(out / f"summary_by_{key}.csv", index=False)
            plot = (
                effects.groupby([key, "metric", "window"])["delta"].mean().reset_index()
                .rename(columns={key: "x", "delta": "y"})
            )
            plot.to_csv(out / f"plotdata_{key}.csv", index=False)
    _write_manifest(out, "cohorts", cfg, [src, path])


def cmd_revenue(cfg: dict) -> None:
    out = _out_dir(cfg)
    r = cfg["revenue"]
    results = {}
    if "ecommerce" in r:
        params = r["ecommerce"]
        model = RevenueModel(kind="ecommerce", years=float(params.get("years", 1.5)),
                             visits_per_year=float(params["visits_per_year"]),
                             conversion_rate=float(params["conversion_rate"]),
                             revenue_per_purchase=float(params["revenue_per_purchase"]))
        results["ecommerce"] = ecommerce_impact(model, float(params["delta_total_visits"]))
    if "adbased" in r:
        params = r["adbased"]
        model = RevenueModel(kind="adbased", years=float(params.get("years", 1.5)),
                             page_impressions_per_year=float(params["page_impressions_per_year"]),
                             ads_per_page=float(params["ads_per_page"]),
                             ad_price=float(params["ad_price"]))
        results["adbased"] = ad_impact(model, float(params["delta_page_impressions"]))
    if not results:
        raise ConfigError("revenue", "configure an 'ecommerce' and/or 'adbased' model")
    (out / "revenue.json").write_text(json.dumps(results, indent=2))
    _write_manifest(out, "revenue", cfg, [])


def cmd_simulate(cfg: dict) -> None:
    out = _out_dir(cfg)
    sim = dict(cfg["sim"])
    sim.setdefault("seed", int(cfg["seed"]))
    if "metrics" in sim:
        sim["metrics"] = tuple(MetricKind(m) for m in sim["metrics"])
    if "industries" in sim:
        sim["industries"] = tuple(sim["industries"])
    try:
        config = SimConfig(**sim)
    except (TypeError, ValueError) as exc:
        raise ConfigError("sim", str(exc)) from exc
    dataset, truth = generate_panel(config)
    write_panel_csv(dataset, out / "panel.csv")
    (out / "ground_truth.json").write_text(json.dumps(truth.to_dict(), indent=2))
    _write_manifest(out, "simulate", cfg, [])


def cmd_robustness(cfg: dict) -> None:
    out = _out_dir(cfg)
    raw_path = _require_input(cfg)
    raw = parse_panel(raw_path)
    rule = default_outlier_rule if cfg["outlier_filter"] else None
    rcfg = cfg["robustness"]
    pcfg = pipeline_config(cfg)

    sweep = threshold_sweep(raw, [float(t) for t in rcfg["thresholds"]],
                            base=float(cfg["min_avg_weekly_visits"]), outlier_rule=rule)
    sweep.to_csv(out / "threshold_sweep.csv", index=False)

    filtered, _ = apply_filters(raw, float(cfg["min_avg_weekly_visits"]), outlier_rule=rule)
    excl = exclusion_window_rerun(filtered, pcfg, exclude_days=int(rcfg["exclude_days"]))
    excl["comparison"].to_csv(out / "exclusion_rerun.csv", index=False)

    for split, name in (("website_base", "crossed_did_websites.csv"),
                        ("user_base", "crossed_did_users.csv")):
        crossed_did_table(filtered, pcfg, split_by=split).to_csv(out / name, index=False)

    try:
        eu = eu_share_analysis(filtered, pcfg)
        eu["decile_table"].to_csv(out / "eu_share_deciles.csv", index=False)
        eu["regression"].to_csv(out / "eu_share_regression.csv", index=False)
    except ValueError:
        pass  # no usable control group for the EU-share diagnostics

    for variant in rcfg["donor_variants"]:
        res = donor_variant_rerun(filtered, variant, pcfg)
        res["comparison"].to_csv(out / f"donor_variant_{variant}.csv", index=False)
        (out / f"donor_variant_{variant}_config.json").write_text(
            json.dumps(res["config_diff"], indent=2)
        )
    _write_manifest(out, "robustness", cfg, [raw_path])


def cmd_report(cfg: dict) -> None:
    out = _out_dir(cfg)
    websites = pd.read_csv(_require_artifact(out, "effects_websites.csv"))
    intensity_path = out / "effects_intensity.csv"

    summarize_frame(websites).to_csv(out / "report_quantity_summary.csv", index=False)

    if intensity_path.exists() and intensity_path.stat().st_size > 0:
        try:
            intensity = pd.read_csv(intensity_path)
        except pd.errors.EmptyDataError:
            intensity = pd.DataFrame()
        if not intensity.empty:
            quantity = websites.pivot_table(index=["website_id", "window"],
                                            columns="metric", values="delta").reset_index()
            rows = []
            for (metric, window), g in intensity.groupby(["intensity_metric", "window"]):
                merged = g.merge(quantity, on=["website_id", "window"])
                qcol = g["quantity_metric"].iloc[0]
                if qcol not in merged.columns:
                    continue
                for group, sel in (("all", merged),
                                   ("gain", merged[merged[qcol] >= 0]),
                                   ("lose", merged[merged[qcol] < 0])):
                    if sel.empty:
                        continue
                    rows.append({
                        "intensity_metric": metric, "window": window, "group": group,
                        "share": len(sel) / len(merged),
                        "median_effect": float(sel["delta"].median()),
                        "mean_effect": float(sel["delta"].mean()),
                    })
            pd.DataFrame(rows).to_csv(out / "report_intensity_summary.csv", index=False)
    _write_manifest(out, "report", cfg, [])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="panelfx", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="path to a JSON config file")
    parser.add_argument("--input", help="input panel CSV (overrides config)")
    parser.add_argument("--out", help="output directory (overrides config and PANELFX_OUT)")
    parser.add_argument("--seed", type=int, help="seed for simulate/placebo")
    parser.add_argument("--windows", help="comma-separated window labels, e.g. 3m,18m")
    parser.add_argument("--threads", type=int, help="worker threads for per-instance work")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        "input": args.input,
        "out": args.out,
        "seed": args.seed,
        "threads": args.threads,
        "windows": args.windows.split(",") if args.windows else None,
    }
    try:
        cfg = load_config(args.config, overrides)
        handler = globals()[f"cmd_{args.command}"]
        handler(cfg)
    except MissingInputError as exc:
        _error(cfg_out(args), "missing_input", str(exc))
        return EXIT_MISSING_INPUT
    except ConfigError as exc:
        _error(cfg_out(args), "config_error", str(exc), field=exc.field)
        return EXIT_BAD_CONFIG
    return 0


def cfg_out(args) -> Path | None:
    root = args.out or os.environ.get("PANELFX_OUT")
    return Path(root) if root else None


def _error(out: Path | None, kind: str, message: str, **extra) -> None:
    payload = {"error": kind, "message": message, **extra}
    print(json.dumps(payload), file=sys.stderr)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(json.dumps(payload, indent=2))


if __name__ == "__main__":
    sys.exit(main())
