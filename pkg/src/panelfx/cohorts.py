"""Cohort aggregation and revenue translation.

Website-level effects are summarized per cohort (all websites, industry,
rank decile, user country) as mean, median, share-negative, and
share-significant. Effects translate to money through two simple revenue
models: visits x conversion x basket for commerce sites, and page
impressions x ad load x price per impression for ad-funded sites.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

import numpy as np
import pandas as pd

__all__ = [
    "CohortSummary",
    "RevenueModel",
    "summarize",
    "assign_deciles",
    "ecommerce_impact",
    "ad_impact",
]


@dataclass(frozen=True)
class CohortSummary:
    cohort: str
    metric: str
    window: str
    mean_delta: float
    median_delta: float
    share_negative: float
    share_significant: float
    n: int

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("empty cohort")
        for name in ("share_negative", "share_significant"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} out of [0, 1]: {v}")


def summarize(
    deltas: np.ndarray,
    p_values: np.ndarray,
    cohort: str = "all",
    metric: str = "",
    window: str = "",
    alpha: float = 0.05,
) -> CohortSummary:
    """Mean/median effect, share of negatives, and share significant at alpha."""
    deltas = np.asarray(deltas, dtype=float)
    p_values = np.asarray(p_values, dtype=float)
    if deltas.size == 0:
        raise ValueError("empty effect set")
    if deltas.shape != p_values.shape:
        raise ValueError("deltas and p-values differ in length")
    return CohortSummary(
        cohort=cohort,
        metric=metric,
        window=window,
        mean_delta=float(deltas.mean()),
        median_delta=float(np.median(deltas)),
        share_negative=float(np.mean(deltas < 0)),
        share_significant=float(np.mean(p_values < alpha)),
        n=int(deltas.size),
    )


def summarize_frame(effects: pd.DataFrame, by: str | None = None) -> pd.DataFrame:
    """Cohort summaries from an effects table with columns
    delta, p_value, metric, window (plus the grouping column, if any)."""
    keys = ["metric", "window"] + ([by] if by else [])
    rows = []
    for key, g in effects.groupby(keys, sort=True):
        key = key if isinstance(key, tuple) else (key,)
        s = summarize(
            g["delta"].to_numpy(),
            g["p_value"].to_numpy(),
            cohort=str(key[2]) if by else "all",
            metric=str(key[0]),
            window=str(key[1]),
        )
        rows.append(s.__dict__)
    return pd.DataFrame(rows)


def assign_deciles(ranks: np.ndarray) -> np.ndarray:
    """Map popularity ranks (low = popular) to deciles 1..10.

    Sorting is ascending, so decile 1 holds the lowest 10% of rank numbers.
    Websites at exact decile edges go to the lower decile index; ties in
    rank value keep their input-order stability but the assignment depends
    on rank values only.
    """
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise ValueError("empty rank input")
    if np.any(ranks < 1):
        raise ValueError("ranks must be positive")
    n = ranks.size
    order = np.argsort(ranks, kind="stable")
    position = np.empty(n, dtype=int)
    position[order] = np.arange(n)
    # decile of the j-th smallest rank: edges at exact multiples of n/10
    # fall to the lower decile
    deciles = np.minimum(np.ceil((position + 1) * 10 / n).astype(int), 10)
    return np.maximum(deciles, 1)


@dataclass(frozen=True)
class RevenueModel:
    """Parameters of a yearly revenue baseline.

    kind="ecommerce" uses visits_per_year, conversion_rate and
    revenue_per_purchase; kind="adbased" uses page_impressions_per_year,
    ads_per_page and ad_price (dollars per single impression).
    """

    kind: str
    visits_per_year: float = 0.0
    conversion_rate: float = 0.0
    revenue_per_purchase: float = 0.0
    page_impressions_per_year: float = 0.0
    ads_per_page: float = 0.0
    ad_price: float = 0.0
    years: float = 1.0

    def __post_init__(self):
        if self.kind not in ("ecommerce", "adbased"):
            raise ValueError(f"unknown revenue model kind {self.kind!r}")
        if self.years <= 0:
            raise ValueError("years must be positive")
        required = (
            ("visits_per_year", "conversion_rate", "revenue_per_purchase")
            if self.kind == "ecommerce"
            else ("page_impressions_per_year", "ads_per_page", "ad_price")
        )
        for name in required:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


def _to_cents(x: float) -> float:
    return float(Decimal(repr(x)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def ecommerce_impact(model: RevenueModel, delta_total_visits: float) -> dict[str, float]:
    """Yearly baseline revenue and its change from a relative visits effect.

    baseline = visits x conversion x revenue-per-purchase; the change scales
    linearly in both the effect and the number of years. Dollar outputs are
    rounded to the cent.
    """
    if model.kind != "ecommerce":
        raise ValueError("model kind must be 'ecommerce'")
    baseline = model.visits_per_year * model.conversion_rate * model.revenue_per_purchase
    change = delta_total_visits * baseline * model.years
    return {"baseline_revenue": _to_cents(baseline), "revenue_change": _to_cents(change)}


def ad_impact(model: RevenueModel, delta_page_impressions: float) -> dict[str, float]:
    """Yearly baseline ad revenue and its change from a page-impressions effect.

    baseline = page impressions x ads per page x price per impression.
    """
    if model.kind != "adbased":
        raise ValueError("model kind must be 'adbased'")
    baseline = model.page_impressions_per_year * model.ads_per_page * model.ad_price
    change = delta_page_impressions * baseline * model.years
    return {"baseline_revenue": _to_cents(baseline), "revenue_change": _to_cents(change)}
