"""Panel ingestion: CSV parsing, sample filters, and pre-period shares.

Input files carry one row per (instance, date, metric):

    instance_id, website_id, user_base{EU,NONEU}, website_base{EU,NONEU},
    user_country, industry, global_rank, country_rank, industry_rank,
    date(ISO-8601), metric, value

Filtering mirrors the sample-derivation rules: drop instances below the
average-weekly-visits threshold, instances dark for a full calendar month,
and instances flagged by a (pluggable) outlier rule. The unique-visitor
subsample additionally requires every observed month to clear a reporting
floor.
"""

from __future__ import annotations

import datetime as dt
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .panel import (
    Base,
    MetricKind,
    TimeSeries,
    WebsiteInstance,
    month_index,
)

__all__ = [
    "PanelDataset",
    "FilterReport",
    "InstanceShares",
    "parse_panel",
    "apply_filters",
    "unique_visitor_subsample",
    "pre_treatment_shares",
    "default_outlier_rule",
    "write_panel_csv",
]

CSV_COLUMNS = [
    "instance_id",
    "website_id",
    "user_base",
    "website_base",
    "user_country",
    "industry",
    "global_rank",
    "country_rank",
    "industry_rank",
    "date",
    "metric",
    "value",
]

_META_COLUMNS = CSV_COLUMNS[1:9]


@dataclass(frozen=True)
class PanelDataset:
    instances: dict[str, WebsiteInstance]
    provenance: dict[str, str] = field(default_factory=dict)

    @property
    def websites(self) -> dict[str, list[str]]:
        idx: dict[str, list[str]] = {}
        for iid, inst in sorted(self.instances.items()):
            idx.setdefault(inst.website_id, []).append(iid)
        return idx

    def treated(self) -> list[WebsiteInstance]:
        return [i for _, i in sorted(self.instances.items()) if i.is_treated]

    def controls(self) -> list[WebsiteInstance]:
        return [i for _, i in sorted(self.instances.items()) if not i.is_treated]

    def subset(self, instance_ids) -> "PanelDataset":
        keep = set(instance_ids)
        return PanelDataset(
            instances={i: inst for i, inst in self.instances.items() if i in keep},
            provenance=dict(self.provenance),
        )

    def __len__(self) -> int:
        return len(self.instances)


@dataclass
class FilterReport:
    """Per-rule exclusion bookkeeping; retained + excluded = input per rule."""

    input_count: int = 0
    rule_counts: dict[str, int] = field(default_factory=dict)
    excluded: list[tuple[str, str]] = field(default_factory=list)  # (instance_id, reason)

    def record(self, instance_id: str, reason: str) -> None:
        self.excluded.append((instance_id, reason))
        self.rule_counts[reason] = self.rule_counts.get(reason, 0) + 1

    @property
    def retained_count(self) -> int:
        return self.input_count - len(self.excluded)

    def to_dict(self) -> dict:
        return {
            "input_count": self.input_count,
            "retained_count": self.retained_count,
            "rule_counts": dict(self.rule_counts),
            "excluded": [{"instance_id": i, "reason": r} for i, r in self.excluded],
        }


@dataclass(frozen=True)
class InstanceShares:
    website_id: str
    shares: dict[str, float]  # instance_id -> pre-period traffic fraction

    def __post_init__(self):
        total = sum(self.shares.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"shares sum to {total}, not 1")


class PanelParseError(ValueError):
    pass


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def parse_panel(path: str | Path, start_date: dt.date | None = None) -> PanelDataset:
    """Parse a panel CSV into one WebsiteInstance per (website, user-base).

    Exact duplicate rows (the same website appearing in several source country
    lists) collapse to one; conflicting duplicates for the same
    (instance, date, metric) are rejected. Each metric series must sit on a
    gapless weekly or monthly grid.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    df = pd.read_csv(path, dtype={"instance_id": str, "website_id": str})
    missing = [c for c in CSV_COLUMNS if c not in df.columns]
    if missing:
        raise PanelParseError(f"missing columns: {missing}")
    if df.empty:
        return PanelDataset(instances={}, provenance={path.name: _file_digest(path)})

    df = df.drop_duplicates()
    dupes = df.duplicated(subset=["instance_id", "date", "metric"])
    if dupes.any():
        row = df.index[dupes][0]
        raise PanelParseError(
            f"conflicting duplicate (instance_id, date, metric) at input line {row + 2}"
        )
    try:
        df["date"] = pd.to_datetime(df["date"], format="%Y-%m-%d").dt.date
    except (ValueError, TypeError) as exc:
        raise PanelParseError(f"malformed date column: {exc}") from exc
    bad_metric = ~df["metric"].isin([m.value for m in MetricKind])
    if bad_metric.any():
        row = df.index[bad_metric][0]
        raise PanelParseError(
            f"unknown metric {df.loc[row, 'metric']!r} at input line {row + 2}"
        )
    if df["value"].isna().any() or (df["value"] < 0).any():
        row = df.index[(df["value"].isna()) | (df["value"] < 0)][0]
        raise PanelParseError(f"missing or negative value at input line {row + 2}")

    instances: dict[str, WebsiteInstance] = {}
    for iid, group in df.groupby("instance_id", sort=True):
        meta = group[_META_COLUMNS].drop_duplicates()
        if len(meta) > 1:
            raise PanelParseError(f"inconsistent metadata for instance {iid}")
        meta = meta.iloc[0]
        series: dict[MetricKind, TimeSeries] = {}
        for metric_name, rows in group.groupby("metric"):
            metric = MetricKind(metric_name)
            rows = rows.sort_values("date")
            dates = list(rows["date"])
            _check_grid(iid, metric, dates, start_date)
            series[metric] = TimeSeries(
                metric=metric,
                cadence=metric.cadence,
                start_date=dates[0],
                values=rows["value"].to_numpy(dtype=float),
            )
        instances[str(iid)] = WebsiteInstance(
            instance_id=str(iid),
            website_id=str(meta["website_id"]),
            user_base=Base(meta["user_base"]),
            website_base=Base(meta["website_base"]),
            industry=str(meta["industry"]),
            global_rank=int(meta["global_rank"]),
            country_rank=int(meta["country_rank"]),
            industry_rank=int(meta["industry_rank"]),
            user_country=str(meta["user_country"]),
            series=series,
        )

    for wid, iids in PanelDataset(instances).websites.items():
        if len(iids) > 2:
            raise PanelParseError(f"website {wid} has {len(iids)} instances (max 2)")
        bases = {instances[i].user_base for i in iids}
        if len(bases) != len(iids):
            raise PanelParseError(f"website {wid} instances share a user base")

    return PanelDataset(instances=instances, provenance={path.name: _file_digest(path)})


def _check_grid(iid, metric, dates, start_date):
    if metric.cadence == "weekly":
        for prev, cur in zip(dates, dates[1:]):
            if (cur - prev).days != 7:
                raise PanelParseError(
                    f"instance {iid} metric {metric.value}: gap between {prev} and {cur}"
                )
    else:
        for prev, cur in zip(dates, dates[1:]):
            if month_index(cur.year, cur.month, prev) != 1:
                raise PanelParseError(
                    f"instance {iid} metric {metric.value}: non-consecutive months "
                    f"{prev} and {cur}"
                )
    if start_date is not None and dates[0] != start_date:
        raise PanelParseError(
            f"instance {iid} metric {metric.value}: series starts {dates[0]}, "
            f"expected {start_date}"
        )


def default_outlier_rule(visits: TimeSeries, n_mad: float = 6.0, run: int = 2) -> bool:
    """Flag instances with unexplained multi-week spikes or crashes.

    A week is suspicious when its log-visits deviates from the rolling
    9-week median by more than ``n_mad`` median absolute deviations; the
    instance is flagged when ``run`` or more consecutive weeks are
    suspicious.
    """
    x = np.log1p(visits.values)
    if len(x) < 9:
        return False
    med = pd.Series(x).rolling(9, center=True, min_periods=1).median().to_numpy()
    dev = np.abs(x - med)
    mad = np.median(dev)
    if mad == 0:
        return False
    hits = dev > n_mad * mad
    streak = 0
    for h in hits:
        streak = streak + 1 if h else 0
        if streak >= run:
            return True
    return False


def apply_filters(
    dataset: PanelDataset,
    min_avg_weekly_visits: float = 1000.0,
    outlier_rule=default_outlier_rule,
) -> tuple[PanelDataset, FilterReport]:
    """Apply the sample filters in sequence and report every exclusion.

    Thresholds are strict ("< 1,000"), so exact-threshold instances stay.
    Pass ``outlier_rule=None`` to disable the outlier screen.
    """
    report = FilterReport(input_count=len(dataset))
    survivors: dict[str, WebsiteInstance] = {}
    for iid, inst in sorted(dataset.instances.items()):
        visits = inst.get(MetricKind.TOTAL_VISITS)
        if visits is None or visits.values.mean() < min_avg_weekly_visits:
            report.record(iid, "below_threshold")
            continue
        if _has_zero_month(visits):
            report.record(iid, "monthly_gap")
            continue
        if outlier_rule is not None and outlier_rule(visits):
            report.record(iid, "outlier")
            continue
        survivors[iid] = inst
    return (
        PanelDataset(instances=survivors, provenance=dict(dataset.provenance)),
        report,
    )


def _has_zero_month(visits: TimeSeries) -> bool:
    """True when some full calendar month covered by the series has zero visits.

    Weeks are binned to the month containing their start date; only months
    whose every day lies inside the series span count.
    """
    start = visits.start_date
    end = start + dt.timedelta(days=7 * len(visits) - 1)
    totals: dict[int, float] = {}
    for i, v in enumerate(visits.values):
        wk = start + dt.timedelta(days=7 * i)
        totals.setdefault(month_index(wk.year, wk.month, start), 0.0)
        totals[month_index(wk.year, wk.month, start)] += v
    for idx, total in totals.items():
        y = start.year + (start.month - 1 + idx) // 12
        m = (start.month - 1 + idx) % 12 + 1
        first = dt.date(y, m, 1)
        last = (dt.date(y + m // 12, m % 12 + 1, 1) - dt.timedelta(days=1))
        if first >= start and last <= end and total == 0:
            return True
    return False


def unique_visitor_subsample(dataset: PanelDataset, floor: float = 5000.0) -> PanelDataset:
    """Keep instances whose unique-visitor series clears the floor every month.

    Instances lacking the series drop out (the vendor does not report below
    the floor). The comparison is strict: a month exactly at the floor stays.
    """
    survivors: dict[str, WebsiteInstance] = {}
    for iid, inst in sorted(dataset.instances.items()):
        uniques = inst.get(MetricKind.UNIQUE_VISITORS)
        if uniques is None:
            continue
        if uniques.values.min() < floor:
            continue
        survivors[iid] = inst
    return PanelDataset(instances=survivors, provenance=dict(dataset.provenance))


def pre_treatment_shares(
    instances: list[WebsiteInstance], pre_indices: np.ndarray
) -> InstanceShares:
    """Pre-period traffic fractions of a website's instances, on raw visits."""
    if not instances:
        raise ValueError("no instances given")
    wid = instances[0].website_id
    if any(i.website_id != wid for i in instances):
        raise ValueError("instances belong to different websites")
    means = {}
    for inst in instances:
        visits = inst.get(MetricKind.TOTAL_VISITS)
        if visits is None:
            raise ValueError(f"instance {inst.instance_id} lacks a visits series")
        means[inst.instance_id] = float(visits.values[pre_indices].mean())
    total = sum(means.values())
    if total <= 0:
        raise ValueError("all-zero pre-period visits; shares undefined")
    return InstanceShares(website_id=wid, shares={i: m / total for i, m in means.items()})


def dataset_to_frame(dataset: PanelDataset) -> pd.DataFrame:
    """Flatten a dataset back to the long CSV layout, sorted for stable output."""
    records = []
    for iid, inst in sorted(dataset.instances.items()):
        for metric in MetricKind:
            ts = inst.get(metric)
            if ts is None:
                continue
            for i, v in enumerate(ts.values):
                if ts.cadence == "weekly":
                    d = ts.start_date + dt.timedelta(days=7 * i)
                else:
                    m = ts.start_date.month - 1 + i
                    d = dt.date(ts.start_date.year + m // 12, m % 12 + 1, 1)
                records.append(
                    (
                        iid,
                        inst.website_id,
                        inst.user_base.value,
                        inst.website_base.value,
                        inst.user_country,
                        inst.industry,
                        inst.global_rank,
                        inst.country_rank,
                        inst.industry_rank,
                        d.isoformat(),
                        metric.value,
                        v,
                    )
                )
    return pd.DataFrame.from_records(records, columns=CSV_COLUMNS)


def write_panel_csv(dataset: PanelDataset, path: str | Path) -> None:
    dataset_to_frame(dataset).to_csv(path, index=False)
