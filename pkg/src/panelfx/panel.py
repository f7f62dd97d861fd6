"""Core domain types: metrics, time series, website-instances, analysis windows.

Everything here is immutable after construction and shared freely by the
estimation modules. The calendar is anchored so that week 1 starts on the
first observed day (2017-07-01 by default) and the policy enforcement date
(2018-05-25 by default) falls inside week 47, making weeks 1-46 the
pre-period.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = [
    "MetricKind",
    "Base",
    "Treatment",
    "TimeSeries",
    "WebsiteInstance",
    "AnalysisWindow",
    "DEFAULT_START_DATE",
    "DEFAULT_ENFORCEMENT_DATE",
    "WINDOW_LABELS",
    "POST_END_WEEKS",
    "assign_treatment",
    "window_bounds",
    "log1p_transform",
    "week_of_date",
    "week_start",
    "month_index",
]

DEFAULT_START_DATE = dt.date(2017, 7, 1)
DEFAULT_ENFORCEMENT_DATE = dt.date(2018, 5, 25)

WINDOW_LABELS = ("3m", "6m", "9m", "12m", "18m")

# Post-period end weeks under the default calendar (46 pre weeks).
POST_END_WEEKS = {"3m": 60, "6m": 73, "9m": 86, "12m": 99, "18m": 125}

# Number of post-period weeks per label; used to place the end week when the
# enforcement date (and hence the pre-period length) is reconfigured.
_POST_WEEK_COUNTS = {label: end - 46 for label, end in POST_END_WEEKS.items()}


class Base(str, Enum):
    """Location base of a website or of its user population."""

    EU = "EU"
    NONEU = "NONEU"


class Treatment(str, Enum):
    TREATED = "treated"
    CONTROL = "control"


class MetricKind(str, Enum):
    """The five user-quantity metrics, each with a fixed cadence."""

    TOTAL_VISITS = "total_visits"
    UNIQUE_VISITORS = "unique_visitors"
    PAGE_IMPRESSIONS = "page_impressions"
    TIME_ON_SITE = "time_on_site_min"
    BOUNCING_VISITORS = "bouncing_visitors"

    @property
    def cadence(self) -> str:
        return "monthly" if self is MetricKind.UNIQUE_VISITORS else "weekly"

    @property
    def intensity_name(self) -> str | None:
        """Name of the usage-intensity ratio this metric feeds, if any."""
        return _INTENSITY_NAMES.get(self)


_INTENSITY_NAMES = {
    MetricKind.UNIQUE_VISITORS: "visits_per_unique",
    MetricKind.PAGE_IMPRESSIONS: "page_impressions_per_visit",
    MetricKind.TIME_ON_SITE: "time_per_visit",
    MetricKind.BOUNCING_VISITORS: "bounce_rate",
}


def assign_treatment(website_base: Base, user_base: Base) -> Treatment:
    """Treatment assignment from the 2x2 website-base x user-base matrix.

    The policy applies unless both the website and its users are outside the
    regulated region, so only (NonEU, NonEU) lands in the control group.
    """
    website_base = Base(website_base)
    user_base = Base(user_base)
    if website_base is Base.NONEU and user_base is Base.NONEU:
        return Treatment.CONTROL
    return Treatment.TREATED


def week_of_date(day: dt.date, start_date: dt.date = DEFAULT_START_DATE) -> int:
    """1-based index of the week containing ``day``."""
    offset = (day - start_date).days
    if offset < 0:
        raise ValueError(f"{day} precedes the observation start {start_date}")
    return offset // 7 + 1


def week_start(week: int, start_date: dt.date = DEFAULT_START_DATE) -> dt.date:
    if week < 1:
        raise ValueError("week indices are 1-based")
    return start_date + dt.timedelta(days=7 * (week - 1))


def month_index(year: int, month: int, start_date: dt.date = DEFAULT_START_DATE) -> int:
    """0-based index of a calendar month relative to the observation start."""
    return (year - start_date.year) * 12 + (month - start_date.month)


def _month_of_index(idx: int, start_date: dt.date = DEFAULT_START_DATE) -> tuple[int, int]:
    m = start_date.month - 1 + idx
    return start_date.year + m // 12, m % 12 + 1


@dataclass(frozen=True)
class TimeSeries:
    """One metric for one unit on a regular weekly or monthly grid.

    Missing observations must be explicit (zeros or pre-flagged); the values
    array is contiguous with no gaps.
    """

    metric: MetricKind
    cadence: str
    start_date: dt.date
    values: np.ndarray

    def __post_init__(self):
        if self.cadence not in ("weekly", "monthly"):
            raise ValueError(f"unknown cadence {self.cadence!r}")
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) < 1:
            raise ValueError("values must be a non-empty 1-d array")
        neg = np.flatnonzero(values < 0)
        if neg.size:
            raise ValueError(f"negative value at index {neg[0]}")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)


def log1p_transform(series: TimeSeries) -> TimeSeries:
    """Return the series with every value v replaced by ln(v + 1).

    Dates and length are preserved; the transform is strictly monotone and
    inverted by exp(.) - 1.
    """
    neg = np.flatnonzero(np.asarray(series.values) < 0)
    if neg.size:
        raise ValueError(f"negative value at index {neg[0]}")
    return TimeSeries(
        metric=series.metric,
        cadence=series.cadence,
        start_date=series.start_date,
        values=np.log1p(series.values),
    )


@dataclass(frozen=True)
class AnalysisWindow:
    """An expanding estimation window: a fixed pre-period plus one of five
    progressively longer post-periods.

    Weekly indexing is 1-based; ``pre_weeks`` is inclusive on both ends and
    identical across the five labels. Monthly metrics use full calendar
    months only: the month containing the enforcement date is dropped, and
    the post months run to the last full month inside the weekly span.
    """

    label: str
    pre_weeks: tuple[int, int]
    post_end_week: int
    enforcement_date: dt.date = DEFAULT_ENFORCEMENT_DATE
    start_date: dt.date = DEFAULT_START_DATE

    @property
    def enforcement_week(self) -> int:
        return self.pre_weeks[1] + 1

    # -- weekly index helpers (0-based into a values array) ------------------

    def pre_indices(self) -> np.ndarray:
        lo, hi = self.pre_weeks
        return np.arange(lo - 1, hi)

    def post_indices(self) -> np.ndarray:
        return np.arange(self.pre_weeks[1], self.post_end_week)

    # -- monthly index helpers ----------------------------------------------

    def pre_month_indices(self) -> np.ndarray:
        boundary = month_index(
            self.enforcement_date.year, self.enforcement_date.month, self.start_date
        )
        return np.arange(0, boundary)

    def post_month_indices(self) -> np.ndarray:
        boundary = month_index(
            self.enforcement_date.year, self.enforcement_date.month, self.start_date
        )
        end_day = week_start(self.post_end_week, self.start_date) + dt.timedelta(days=6)
        # last full calendar month ending on or before the window's last day
        last = month_index(end_day.year, end_day.month, self.start_date)
        y, m = _month_of_index(last, self.start_date)
        next_month = dt.date(y + m // 12, m % 12 + 1, 1)
        if next_month - dt.timedelta(days=1) > end_day:
            last -= 1
        return np.arange(boundary + 1, last + 1)

    def indices(self, cadence: str) -> tuple[np.ndarray, np.ndarray]:
        """(pre, post) 0-based index arrays for the given cadence."""
        if cadence == "weekly":
            return self.pre_indices(), self.post_indices()
        if cadence == "monthly":
            return self.pre_month_indices(), self.post_month_indices()
        raise ValueError(f"unknown cadence {cadence!r}")


def window_bounds(
    label: str,
    enforcement_date: dt.date = DEFAULT_ENFORCEMENT_DATE,
    start_date: dt.date = DEFAULT_START_DATE,
) -> AnalysisWindow:
    """Construct the analysis window for one of the five post-period labels.

    Under the default calendar the post-period end weeks are fixed at
    {3m: 60, 6m: 73, 9m: 86, 12m: 99, 18m: 125}. With a different
    enforcement date the same post-period week counts are kept and shifted.
    """
    if label not in WINDOW_LABELS:
        raise ValueError(f"unknown window label {label!r}; expected one of {WINDOW_LABELS}")
    enf_week = week_of_date(enforcement_date, start_date)
    pre_end = enf_week - 1
    if pre_end < 1:
        raise ValueError("enforcement date leaves no pre-period")
    return AnalysisWindow(
        label=label,
        pre_weeks=(1, pre_end),
        post_end_week=pre_end + _POST_WEEK_COUNTS[label],
        enforcement_date=enforcement_date,
        start_date=start_date,
    )


@dataclass(frozen=True)
class WebsiteInstance:
    """One (website, user-base) pair with its metric series and metadata.

    Treatment status is a pure function of (website_base, user_base); it is
    computed at construction and cannot disagree with the assignment matrix.
    """

    instance_id: str
    website_id: str
    user_base: Base
    website_base: Base
    industry: str
    global_rank: int
    country_rank: int
    industry_rank: int
    user_country: str
    series: dict[MetricKind, TimeSeries] = field(default_factory=dict)
    treatment: Treatment = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "user_base", Base(self.user_base))
        object.__setattr__(self, "website_base", Base(self.website_base))
        for name in ("global_rank", "country_rank", "industry_rank"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        object.__setattr__(
            self, "treatment", assign_treatment(self.website_base, self.user_base)
        )

    @property
    def is_treated(self) -> bool:
        return self.treatment is Treatment.TREATED

    def get(self, metric: MetricKind) -> TimeSeries | None:
        return self.series.get(metric)
