"""Robustness analyses: threshold sweeps, enforcement-band exclusion,
EU-share diagnostics, crossed mean comparisons, and donor-rule variants.

Every rerun variant goes through the same pipeline code path as the base
analysis; only the configuration differs, and each report carries the
configuration diff that produced it.
"""

from __future__ import annotations

import dataclasses
import datetime as dt

import numpy as np
import pandas as pd

from .cohorts import assign_deciles
from .ingest import PanelDataset, apply_filters, pre_treatment_shares
from .panel import Base, MetricKind, window_bounds
from .pipeline import PipelineConfig, run_pipeline
from .regression import ols, welch_ttest

__all__ = [
    "threshold_sweep",
    "exclusion_window_rerun",
    "eu_share_analysis",
    "crossed_did_table",
    "donor_variant_rerun",
]


def _instance_mean_visits(dataset: PanelDataset) -> np.ndarray:
    return np.array(
        [
            float(inst.get(MetricKind.TOTAL_VISITS).values.mean())
            for _, inst in sorted(dataset.instances.items())
            if inst.get(MetricKind.TOTAL_VISITS) is not None
        ]
    )


def threshold_sweep(
    raw_dataset: PanelDataset,
    thresholds: list[float],
    base: float = 1000.0,
    outlier_rule=None,
    alpha: float = 0.05,
) -> pd.DataFrame:
    """Refilter the raw sample at each threshold and test the composition shift.

    Each row compares the instance-level mean total visits of the refiltered
    sample against the base sample with a Welch two-sample t-test. The base
    threshold reproduces the base sample exactly, so its t-test degenerates
    to t = 0, p = 1.0.
    """
    base_ds, _ = apply_filters(raw_dataset, base, outlier_rule=outlier_rule)
    base_visits = _instance_mean_visits(base_ds)
    rows = []
    for thr in thresholds:
        ds, _ = apply_filters(raw_dataset, thr, outlier_rule=outlier_rule)
        visits = _instance_mean_visits(ds)
        if len(visits) < 2 or len(base_visits) < 2:
            t, p = np.nan, np.nan  # too few instances for a comparison
        else:
            t, p = welch_ttest(visits, base_visits)
        rows.append(
            {
                "threshold": thr,
                "is_base": thr == base,
                "n_instances": len(ds),
                "added": max(len(ds) - len(base_ds), 0),
                "removed": max(len(base_ds) - len(ds), 0),
                "mean_visits": float(visits.mean()) if visits.size else np.nan,
                "std_visits": float(visits.std(ddof=1)) if visits.size > 1 else np.nan,
                "t_stat": t,
                "p_value": p,
                "significant": p < alpha,
            }
        )
    return pd.DataFrame(rows)


def _paired_comparison(base_df: pd.DataFrame, variant_df: pd.DataFrame, alpha: float) -> pd.DataFrame:
    """Per-window mean/median pairs plus a Welch t-test of the two effect sets."""
    rows = []
    for window in sorted(base_df["window"].unique()):
        a = base_df.loc[base_df["window"] == window, "delta"].to_numpy()
        b = variant_df.loc[variant_df["window"] == window, "delta"].to_numpy()
        if np.array_equal(a, b):
            t, p = 0.0, 1.0
        else:
            t, p = welch_ttest(a, b)
        rows.append(
            {
                "window": window,
                "base_mean": float(a.mean()),
                "base_median": float(np.median(a)),
                "variant_mean": float(b.mean()),
                "variant_median": float(np.median(b)),
                "t_stat": t,
                "p_value": p,
                "significant": p < alpha,
            }
        )
    return pd.DataFrame(rows)


def _config_diff(base: PipelineConfig, variant: PipelineConfig) -> dict:
    diff = {}
    for f in dataclasses.fields(PipelineConfig):
        a, b = getattr(base, f.name), getattr(variant, f.name)
        if a != b:
            diff[f.name] = {"base": str(a), "variant": str(b)}
    return diff


def exclusion_window_rerun(
    dataset: PanelDataset,
    cfg: PipelineConfig | None = None,
    exclude_days: int = 30,
    metric: MetricKind = MetricKind.TOTAL_VISITS,
    alpha: float = 0.05,
) -> dict:
    """Rerun the estimation dropping the +/-N-day band around enforcement.

    Returns the per-window paired comparison of website effects plus the
    configuration diff; the excluded band never overlaps retained weeks by
    construction of the index masks.
    """
    cfg = cfg or PipelineConfig(metrics=(metric,))
    variant_cfg = dataclasses.replace(cfg, exclude_days_around_enforcement=exclude_days)
    base = run_pipeline(dataset, cfg)["website_effects"]
    variant = run_pipeline(dataset, variant_cfg)["website_effects"]
    return {
        "comparison": _paired_comparison(base, variant, alpha),
        "config_diff": _config_diff(cfg, variant_cfg),
    }


def _control_pre_post_visits(dataset: PanelDataset, cfg: PipelineConfig):
    window = window_bounds(cfg.windows[-1], cfg.enforcement_date, cfg.start_date)
    pre, post = window.pre_indices(), window.post_indices()
    rows = []
    for wid, iids in dataset.websites.items():
        insts = [dataset.instances[i] for i in iids]
        controls = [i for i in insts if not i.is_treated]
        if not controls:
            continue
        ctrl = controls[0]
        visits = ctrl.get(MetricKind.TOTAL_VISITS)
        if visits is None or len(visits) <= post[-1]:
            continue
        try:
            shares = pre_treatment_shares(insts, pre)
        except ValueError:
            continue
        eu_share = sum(
            s for i, s in shares.shares.items() if dataset.instances[i].user_base is Base.EU
        )
        rows.append(
            {
                "website_id": wid,
                "eu_share": eu_share,
                "pre_visits": float(visits.values[pre].mean()),
                "post_visits": float(visits.values[post].mean()),
            }
        )
    return pd.DataFrame(rows)


def eu_share_analysis(dataset: PanelDataset, cfg: PipelineConfig | None = None) -> dict:
    """Spillover diagnostics on the control group.

    (a) a decile table of pre/post average control traffic by the website's
    pre-period EU traffic share, and (b) an OLS of log(1 + post visits) on
    log(1 + pre visits) and the EU share. Websites with no observed EU
    traffic form their own decile-0 row.
    """
    cfg = cfg or PipelineConfig()
    df = _control_pre_post_visits(dataset, cfg)
    if df.empty:
        raise ValueError("no control instances with usable pre/post visits")

    no_eu = df[df["eu_share"] == 0]
    with_eu = df[df["eu_share"] > 0].copy()
    rows = []
    if not no_eu.empty:
        rows.append(_decile_row("0", no_eu))
    if not with_eu.empty:
        ranks = with_eu["eu_share"].rank(method="first").to_numpy().astype(int)
        with_eu["decile"] = assign_deciles(ranks) if len(with_eu) >= 10 else 1
        for dec, g in with_eu.groupby("decile", sort=True):
            rows.append(_decile_row(str(int(dec)), g))
    decile_table = pd.DataFrame(rows)

    y = np.log1p(df["post_visits"].to_numpy())
    X = np.column_stack(
        [np.ones(len(df)), np.log1p(df["pre_visits"].to_numpy()), df["eu_share"].to_numpy()]
    )
    fit = ols(y, X, robust="const")
    regression = pd.DataFrame(
        {
            "term": ["intercept", "log1p_pre_visits", "eu_share"],
            "estimate": fit.params,
            "std_err": fit.std_errors,
            "p_value": fit.p_values,
        }
    )
    return {"decile_table": decile_table, "regression": regression}


def _decile_row(label: str, g: pd.DataFrame) -> dict:
    return {
        "decile": label,
        "n": len(g),
        "eu_share_min": float(g["eu_share"].min()),
        "eu_share_max": float(g["eu_share"].max()),
        "pre_visits": float(g["pre_visits"].mean()),
        "post_visits": float(g["post_visits"].mean()),
        "difference": float((g["post_visits"] - g["pre_visits"]).mean()),
    }


def crossed_did_table(
    dataset: PanelDataset,
    cfg: PipelineConfig | None = None,
    split_by: str = "website_base",
) -> pd.DataFrame:
    """2x2 pre/post mean-visit comparison with row differences and the DiD.

    split_by="website_base" compares EU vs NonEU websites for one user base;
    split_by="user_base" compares the two user bases on NonEU websites.
    The last row carries the difference-in-difference value.
    """
    cfg = cfg or PipelineConfig()
    window = window_bounds(cfg.windows[-1], cfg.enforcement_date, cfg.start_date)
    pre_idx, post_idx = window.pre_indices(), window.post_indices()

    if split_by == "website_base":
        groups = [
            ("EU websites / NonEU users", lambda i: i.website_base is Base.EU and i.user_base is Base.NONEU),
            ("NonEU websites / NonEU users", lambda i: i.website_base is Base.NONEU and i.user_base is Base.NONEU),
        ]
    elif split_by == "user_base":
        groups = [
            ("NonEU websites / EU users", lambda i: i.website_base is Base.NONEU and i.user_base is Base.EU),
            ("NonEU websites / NonEU users", lambda i: i.website_base is Base.NONEU and i.user_base is Base.NONEU),
        ]
    else:
        raise ValueError(f"unknown split {split_by!r}")

    rows = []
    diffs = []
    for name, pred in groups:
        pre_means, post_means = [], []
        for _, inst in sorted(dataset.instances.items()):
            visits = inst.get(MetricKind.TOTAL_VISITS)
            if visits is None or not pred(inst) or len(visits) <= post_idx[-1]:
                continue
            pre_means.append(visits.values[pre_idx].mean())
            post_means.append(visits.values[post_idx].mean())
        pre_avg = float(np.mean(pre_means)) if pre_means else np.nan
        post_avg = float(np.mean(post_means)) if post_means else np.nan
        diff = post_avg - pre_avg
        diffs.append(diff)
        rows.append(
            {"group": name, "n": len(pre_means), "pre_visits": pre_avg,
             "post_visits": post_avg, "difference": diff}
        )
    rows.append(
        {"group": "difference-in-difference", "n": sum(r["n"] for r in rows),
         "pre_visits": np.nan, "post_visits": np.nan, "difference": diffs[0] - diffs[1]}
    )
    return pd.DataFrame(rows)


def donor_variant_rerun(
    dataset: PanelDataset,
    variant: str,
    cfg: PipelineConfig | None = None,
    metric: MetricKind = MetricKind.TOTAL_VISITS,
    alpha: float = 0.05,
) -> dict:
    """Rerun estimation under an alternative donor-selection rule.

    variant is one of "no_industry" (drop the industry requirement),
    "eu_share_match" (match donors on the website's EU traffic share), or
    "k10" (ten donors instead of five). "default" reruns the base rule and
    serves as the identity check.
    """
    cfg = cfg or PipelineConfig(metrics=(metric,))
    if variant == "no_industry":
        variant_cfg = dataclasses.replace(cfg, donor_selection="no_industry", same_industry=False)
    elif variant == "eu_share_match":
        variant_cfg = dataclasses.replace(cfg, donor_selection="eu_share_match")
    elif variant == "k10":
        variant_cfg = dataclasses.replace(cfg, k=10)
    elif variant == "default":
        variant_cfg = cfg
    else:
        raise ValueError(f"unknown donor variant {variant!r}")

    base = run_pipeline(dataset, cfg)["website_effects"]
    out = run_pipeline(dataset, variant_cfg)["website_effects"]
    return {
        "comparison": _paired_comparison(base, out, alpha),
        "config_diff": _config_diff(cfg, variant_cfg),
    }
