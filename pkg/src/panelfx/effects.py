"""Per-instance treatment effects and their aggregation to websites.

The effect for one instance is the interaction coefficient of a two-unit
panel-differences regression: the treated series is stacked with its
synthesized counterfactual, and the coefficient on (unit dummy x post dummy)
is the log-point effect. Relative effects use the exact transform
delta = exp(beta3) - 1, which keeps the ratio algebra for the usage
intensity metrics internally consistent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panel import AnalysisWindow, MetricKind
from .regression import ols

__all__ = [
    "EffectEstimate",
    "WebsiteEffect",
    "estimate_effect",
    "placebo_rank_p",
    "merge_website",
    "intensity_effect",
    "visits_per_unique_effect",
    "gain_lose_split",
]

SIGNIFICANCE_LEVEL = 0.05


@dataclass(frozen=True)
class EffectEstimate:
    instance_id: str
    metric: MetricKind
    window: str
    beta3: float
    delta: float
    std_err: float
    p_value: float

    @property
    def significant_5pct(self) -> bool:
        return self.p_value < SIGNIFICANCE_LEVEL


@dataclass(frozen=True)
class WebsiteEffect:
    website_id: str
    metric: MetricKind
    window: str
    delta: float
    components: tuple[tuple[str, float, float], ...]  # (instance_id, delta, share)


def stacked_design(n_pre: int, n_post: int) -> np.ndarray:
    """Design matrix for the stacked two-unit panel.

    Rows: treated pre, treated post, control pre, control post.
    Columns: intercept, unit dummy, post dummy, interaction.
    """
    n = n_pre + n_post
    unit = np.r_[np.ones(n), np.zeros(n)]
    post = np.r_[np.zeros(n_pre), np.ones(n_post), np.zeros(n_pre), np.ones(n_post)]
    return np.column_stack([np.ones(2 * n), unit, post, unit * post])


def estimate_effect(
    treated_log: np.ndarray,
    synth_log: np.ndarray,
    window: AnalysisWindow,
    cadence: str = "weekly",
    robust: str = "HC1",
) -> EffectEstimate:
    """OLS fit of the two-unit panel regression over one analysis window.

    Both inputs are full-length log-scale series; the window picks out the
    pre and post indices for the given cadence. beta3 is the interaction
    coefficient, its standard error is HC1-robust by default.
    """
    pre_idx, post_idx = window.indices(cadence)
    if len(pre_idx) < 2 or len(post_idx) < 2:
        raise ValueError("window must contain at least 2 pre and 2 post points")
    treated_log = np.asarray(treated_log, dtype=float)
    synth_log = np.asarray(synth_log, dtype=float)
    needed = post_idx[-1] + 1
    if len(treated_log) < needed or len(synth_log) < needed:
        raise ValueError(f"series shorter than the window ({needed} points needed)")

    y = np.concatenate(
        [treated_log[pre_idx], treated_log[post_idx], synth_log[pre_idx], synth_log[post_idx]]
    )
    if np.ptp(y) == 0:
        raise ValueError("degenerate (constant) stacked design")
    X = stacked_design(len(pre_idx), len(post_idx))
    fit = ols(y, X, robust=robust)
    beta3 = float(fit.params[3])
    return EffectEstimate(
        instance_id="",
        metric=MetricKind.TOTAL_VISITS,
        window=window.label,
        beta3=beta3,
        delta=float(np.expm1(beta3)),
        std_err=float(fit.std_errors[3]),
        p_value=float(fit.p_values[3]),
    )


def placebo_rank_p(beta3_treated: float, placebo_beta3: np.ndarray) -> float:
    """Two-sided placebo p-value with plus-one correction.

    p = (1 + #{|placebo| >= |treated|}) / (1 + n_placebo), so the smallest
    attainable p with n placebos is 1/(n+1) and p is never 0.
    """
    placebo_beta3 = np.asarray(placebo_beta3, dtype=float)
    if len(placebo_beta3) == 0:
        raise ValueError("no placebo estimates provided")
    r = int(np.sum(np.abs(placebo_beta3) >= abs(beta3_treated)))
    return (1 + r) / (1 + len(placebo_beta3))


def merge_website(
    website_id: str,
    metric: MetricKind,
    window: str,
    instance_deltas: dict[str, float],
    shares: dict[str, float],
) -> WebsiteEffect:
    """Share-weighted mean of per-instance deltas.

    Shares are the instances' pre-period traffic fractions; they are
    renormalized over the instances that carry an effect (a website whose
    second instance sits in the control group contributes only its treated
    instance).
    """
    if not instance_deltas:
        raise ValueError("no instance effects to merge")
    missing = [i for i in instance_deltas if i not in shares]
    if missing:
        raise ValueError(f"no share for instance(s) {missing}")
    total = sum(shares[i] for i in instance_deltas)
    if total <= 0:
        raise ValueError("shares of the merged instances sum to zero")
    components = tuple(
        (iid, float(d), shares[iid] / total) for iid, d in sorted(instance_deltas.items())
    )
    delta = sum(d * s for _, d, s in components)
    return WebsiteEffect(website_id, metric, window, float(delta), components)


def intensity_effect(delta_quantity: float, delta_total_visits: float) -> float:
    """Relative effect on a usage-intensity ratio from its two quantity effects.

    For page impressions per visit, time per visit, and bounce rate the
    numerator effect is the paired quantity metric and the denominator
    effect is total visits: (1 + dq) / (1 + dv) - 1.
    """
    if delta_total_visits <= -1:
        raise ValueError("total-visits delta <= -1; ratio undefined")
    return (1 + delta_quantity) / (1 + delta_total_visits) - 1


def visits_per_unique_effect(delta_total_visits: float, delta_unique_visitors: float) -> float:
    """Visits per unique visitor: total visits over unique visitors, so the
    roles flip relative to the other intensity ratios."""
    if delta_unique_visitors <= -1:
        raise ValueError("unique-visitors delta <= -1; ratio undefined")
    return (1 + delta_total_visits) / (1 + delta_unique_visitors) - 1


def gain_lose_split(
    quantity_deltas: dict[str, float],
    intensity_deltas: dict[str, float],
) -> dict:
    """Partition websites by the sign of the quantity effect and summarize the
    paired intensity effect per group.

    Zero quantity deltas count as gains so the two groups partition every
    website. Groups can be empty; their summaries are then None.
    """
    keys = sorted(quantity_deltas)
    gain = [k for k in keys if quantity_deltas[k] >= 0]
    lose = [k for k in keys if quantity_deltas[k] < 0]
    n = len(keys)

    def group_summary(members):
        if not members:
            return {"share": 0.0, "mean": None, "median": None, "n": 0}
        vals = np.array([intensity_deltas[k] for k in members if k in intensity_deltas])
        return {
            "share": len(members) / n,
            "mean": float(vals.mean()) if vals.size else None,
            "median": float(np.median(vals)) if vals.size else None,
            "n": len(members),
        }

    return {"gain": group_summary(gain), "lose": group_summary(lose)}
