"""End-to-end estimation over a panel dataset.

For every treated instance and metric: select donors, fit synthetic-control
weights on the pre-period, synthesize the counterfactual, and estimate one
effect per expanding window. Instance effects are then merged to websites,
intensity effects derived from the quantity effects, and cohort summaries
produced.

Per-instance work is pure and fans out to a thread pool when requested;
results are merged by sorted keys so the output is identical for any
thread count.
"""

from __future__ import annotations

import datetime as dt
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import effects as fx
from . import synth
from .regression import ols
from .ingest import PanelDataset, pre_treatment_shares
from .panel import (
    DEFAULT_ENFORCEMENT_DATE,
    DEFAULT_START_DATE,
    WINDOW_LABELS,
    AnalysisWindow,
    MetricKind,
    window_bounds,
)

__all__ = ["PipelineConfig", "run_instance_effects", "merge_to_websites", "derive_intensity", "run_pipeline"]

EFFECT_COLUMNS = [
    "instance_id",
    "website_id",
    "metric",
    "window",
    "beta3",
    "delta",
    "std_err",
    "p_value",
    "significant_5pct",
]


@dataclass(frozen=True)
class PipelineConfig:
    windows: tuple[str, ...] = WINDOW_LABELS
    metrics: tuple[MetricKind, ...] = tuple(MetricKind)
    k: int = 5
    same_industry: bool = True
    mode: str = "simplex"
    inference: str = "hc1"  # hc1 | placebo
    n_placebo: int = 99
    enforcement_date: dt.date = DEFAULT_ENFORCEMENT_DATE
    start_date: dt.date = DEFAULT_START_DATE
    threads: int = 1
    donor_selection: str = "industry"  # industry | no_industry | eu_share_match
    exclude_days_around_enforcement: int = 0

    def analysis_windows(self) -> list[AnalysisWindow]:
        return [window_bounds(l, self.enforcement_date, self.start_date) for l in self.windows]


def _series_long_enough(inst, metric: MetricKind, windows, cadence: str) -> bool:
    ts = inst.get(metric)
    if ts is None:
        return False
    needed = max(w.indices(cadence)[1][-1] for w in windows) + 1
    return len(ts) >= needed


def _excluded_mask(cfg: PipelineConfig, cadence: str, length: int) -> np.ndarray:
    """Boolean mask of observations dropped by the enforcement-band exclusion."""
    keep = np.ones(length, dtype=bool)
    if cfg.exclude_days_around_enforcement <= 0:
        return ~keep  # nothing excluded
    lo = cfg.enforcement_date - dt.timedelta(days=cfg.exclude_days_around_enforcement)
    hi = cfg.enforcement_date + dt.timedelta(days=cfg.exclude_days_around_enforcement)
    excluded = np.zeros(length, dtype=bool)
    for i in range(length):
        if cadence == "weekly":
            a = cfg.start_date + dt.timedelta(days=7 * i)
            b = a + dt.timedelta(days=6)
        else:
            m = cfg.start_date.month - 1 + i
            a = dt.date(cfg.start_date.year + m // 12, m % 12 + 1, 1)
            m += 1
            b = dt.date(cfg.start_date.year + m // 12, m % 12 + 1, 1) - dt.timedelta(days=1)
        excluded[i] = not (b < lo or a > hi)
    return excluded


def _window_indices(cfg: PipelineConfig, window: AnalysisWindow, cadence: str, length: int):
    pre, post = window.indices(cadence)
    excluded = _excluded_mask(cfg, cadence, length)
    if excluded.any():
        pre = pre[~excluded[pre]]
        post = post[~excluded[post]]
    return pre, post


def _estimate_unit(cfg, windows, cadence, treated_log, synth_log, length):
    rows = []
    for w in windows:
        pre, post = _window_indices(cfg, w, cadence, length)
        est = _estimate_on_indices(treated_log, synth_log, pre, post, w.label)
        rows.append(est)
    return rows


def _estimate_on_indices(treated_log, synth_log, pre, post, label):
    y = np.concatenate([treated_log[pre], treated_log[post], synth_log[pre], synth_log[post]])
    X = fx.stacked_design(len(pre), len(post))
    fit = ols(y, X, robust="HC1")
    beta3 = float(fit.params[3])
    return {
        "window": label,
        "beta3": beta3,
        "delta": float(np.expm1(beta3)),
        "std_err": float(fit.std_errors[3]),
        "p_value": float(fit.p_values[3]),
    }


def _fit_one(cfg, windows, metric, cadence, pre_sel, unit, pool):
    """Synth fit + per-window effects for one (pseudo-)treated unit."""
    donors_pool = [c for c in pool if c.instance_id != unit.instance_id]
    dp = _select(cfg, unit, donors_pool, metric, pre_sel)
    donors = [next(c for c in donors_pool if c.instance_id == d) for d in dp.donor_ids]
    weights = synth.fit_instance_weights(unit, donors, metric, pre_sel, mode=cfg.mode)
    donors_full = np.stack([np.log1p(d.get(metric).values) for d in donors], axis=1)
    length = min(donors_full.shape[0], len(unit.get(metric)))
    synth_log = synth.synthesize(weights, donors_full[:length])
    treated_log = np.log1p(unit.get(metric).values[:length])
    rows = _estimate_unit(cfg, windows, cadence, treated_log, synth_log, length)
    return rows, weights, dp


def _select(cfg, unit, pool, metric, pre_sel):
    if cfg.donor_selection == "eu_share_match":
        target = getattr(unit, "_eu_share", 0.0)
        ranked = sorted(
            pool, key=lambda c: (abs(getattr(c, "_eu_share", 0.0) - target), c.instance_id)
        )
        pool = ranked[: max(2 * cfg.k, cfg.k + 1)]
        return synth.select_donors(unit, pool, metric, pre_sel, k=cfg.k, same_industry=False)
    same_industry = cfg.same_industry and cfg.donor_selection == "industry"
    return synth.select_donors(unit, pool, metric, pre_sel, k=cfg.k, same_industry=same_industry)


def run_instance_effects(
    dataset: PanelDataset, cfg: PipelineConfig | None = None
) -> tuple[pd.DataFrame, list[dict]]:
    """Per-instance effect table plus a JSON-ready synth-weights audit trail."""
    cfg = cfg or PipelineConfig()
    windows = cfg.analysis_windows()
    treated = dataset.treated()
    controls = dataset.controls()
    if not controls:
        raise ValueError("dataset has no control instances")

    if cfg.donor_selection == "eu_share_match":
        _attach_eu_shares(dataset, windows[0])

    records: list[dict] = []
    audit: list[dict] = []
    placebo: dict[tuple[str, str], list[float]] = {}

    for metric in cfg.metrics:
        cadence = metric.cadence
        pre_sel, _ = _window_indices(cfg, windows[0], cadence, _min_len(dataset, metric))
        pool = [c for c in controls if _series_long_enough(c, metric, windows, cadence)]
        units = [t for t in treated if _series_long_enough(t, metric, windows, cadence)]
        if len(pool) < 2:
            continue

        def work(unit):
            return unit.instance_id, _fit_one(cfg, windows, metric, cadence, pre_sel, unit, pool)

        results = _run_maybe_parallel(work, units, cfg.threads)
        for iid in sorted(results):
            rows, weights, dp = results[iid]
            inst = dataset.instances[iid]
            audit.append({"metric": metric.value, **weights.to_dict(treated_id=iid),
                          "industry_matched": dp.industry_matched})
            for r in rows:
                records.append(
                    {"instance_id": iid, "website_id": inst.website_id, "metric": metric.value, **r}
                )

        if cfg.inference == "placebo":
            pseudo = pool[: cfg.n_placebo] if cfg.n_placebo else pool
            results = _run_maybe_parallel(
                lambda u: (u.instance_id, _fit_one(cfg, windows, metric, cadence, pre_sel, u, pool)),
                pseudo,
                cfg.threads,
            )
            for iid in sorted(results):
                for r in results[iid][0]:
                    placebo.setdefault((metric.value, r["window"]), []).append(r["beta3"])

    df = pd.DataFrame.from_records(records)
    if df.empty:
        return pd.DataFrame(columns=EFFECT_COLUMNS), audit
    if cfg.inference == "placebo":
        df["p_value"] = [
            fx.placebo_rank_p(b3, np.array(placebo[(m, w)]))
            for b3, m, w in zip(df["beta3"], df["metric"], df["window"])
        ]
    df["significant_5pct"] = df["p_value"] < fx.SIGNIFICANCE_LEVEL
    df = df[EFFECT_COLUMNS].sort_values(["website_id", "instance_id", "metric", "window"])
    return df.reset_index(drop=True), audit


def _min_len(dataset: PanelDataset, metric: MetricKind) -> int:
    lengths = [len(i.get(metric)) for i in dataset.instances.values() if i.get(metric)]
    if not lengths:
        return 0
    return min(lengths)


def _run_maybe_parallel(work, units, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return dict(pool.map(work, units))
    return dict(map(work, units))


def _attach_eu_shares(dataset: PanelDataset, window: AnalysisWindow) -> None:
    """Stamp each instance with its website's pre-period EU traffic share."""
    pre = window.pre_indices()
    for wid, iids in dataset.websites.items():
        insts = [dataset.instances[i] for i in iids]
        try:
            shares = pre_treatment_shares(insts, pre)
        except ValueError:
            continue
        eu_share = sum(
            s for i, s in shares.shares.items() if dataset.instances[i].user_base.value == "EU"
        )
        for inst in insts:
            object.__setattr__(inst, "_eu_share", eu_share)


def merge_to_websites(
    effects_df: pd.DataFrame, dataset: PanelDataset, cfg: PipelineConfig | None = None
) -> pd.DataFrame:
    """Share-weighted merge of instance effects into website effects.

    The website p-value is taken from the instance with the largest
    pre-period share; for single-instance websites this is the instance
    p-value itself.
    """
    cfg = cfg or PipelineConfig()
    pre = cfg.analysis_windows()[0].pre_indices()
    shares_by_site: dict[str, dict[str, float]] = {}
    for wid, iids in dataset.websites.items():
        try:
            s = pre_treatment_shares([dataset.instances[i] for i in iids], pre)
            shares_by_site[wid] = s.shares
        except ValueError:
            continue

    rows = []
    for (wid, metric, window), g in effects_df.groupby(
        ["website_id", "metric", "window"], sort=True
    ):
        shares = shares_by_site.get(wid)
        if shares is None:
            continue
        deltas = dict(zip(g["instance_id"], g["delta"]))
        merged = fx.merge_website(wid, MetricKind(metric), window, deltas, shares)
        dominant = max(merged.components, key=lambda c: (c[2], c[0]))[0]
        p = float(g.set_index("instance_id").loc[dominant, "p_value"])
        rows.append(
            {
                "website_id": wid,
                "metric": metric,
                "window": window,
                "delta": merged.delta,
                "p_value": p,
                "significant_5pct": p < fx.SIGNIFICANCE_LEVEL,
                "n_instances": len(merged.components),
            }
        )
    return pd.DataFrame(rows)


def derive_intensity(website_df: pd.DataFrame) -> pd.DataFrame:
    """Intensity effects per website and window from the quantity effects."""
    rows = []
    for (wid, window), g in website_df.groupby(["website_id", "window"], sort=True):
        by_metric = dict(zip(g["metric"], g["delta"]))
        dv = by_metric.get(MetricKind.TOTAL_VISITS.value)
        if dv is None or dv <= -1:
            continue
        for quantity, intensity_name in (
            (MetricKind.UNIQUE_VISITORS, "visits_per_unique"),
            (MetricKind.PAGE_IMPRESSIONS, "page_impressions_per_visit"),
            (MetricKind.TIME_ON_SITE, "time_per_visit"),
            (MetricKind.BOUNCING_VISITORS, "bounce_rate"),
        ):
            dq = by_metric.get(quantity.value)
            if dq is None:
                continue
            if quantity is MetricKind.UNIQUE_VISITORS:
                if dq <= -1:
                    continue
                delta = fx.visits_per_unique_effect(dv, dq)
            else:
                delta = fx.intensity_effect(dq, dv)
            rows.append(
                {
                    "website_id": wid,
                    "intensity_metric": intensity_name,
                    "window": window,
                    "delta": delta,
                    "quantity_metric": quantity.value,
                }
            )
    return pd.DataFrame(rows)


def run_pipeline(dataset: PanelDataset, cfg: PipelineConfig | None = None) -> dict:
    """ingest -> synth -> estimate -> merge -> intensity, as one call."""
    cfg = cfg or PipelineConfig()
    instance_df, audit = run_instance_effects(dataset, cfg)
    website_df = merge_to_websites(instance_df, dataset, cfg)
    intensity_df = derive_intensity(website_df)
    return {
        "instance_effects": instance_df,
        "website_effects": website_df,
        "intensity_effects": intensity_df,
        "synth_audit": audit,
    }
