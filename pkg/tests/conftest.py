"""Shared fixtures: tiny hand-built instances and small simulated panels."""

import datetime as dt

import numpy as np
import pytest

from panelfx.ingest import PanelDataset
from panelfx.panel import (
    DEFAULT_START_DATE,
    Base,
    MetricKind,
    TimeSeries,
    WebsiteInstance,
)
from panelfx.simkit import SimConfig, generate_panel


def make_instance(
    instance_id,
    visits,
    website_id=None,
    user_base=Base.NONEU,
    website_base=Base.NONEU,
    industry="news",
    rank=1,
    extra_series=None,
    start_date=DEFAULT_START_DATE,
):
    """One instance with a weekly visits series and optional extra metrics."""
    series = {
        MetricKind.TOTAL_VISITS: TimeSeries(
            metric=MetricKind.TOTAL_VISITS,
            cadence="weekly",
            start_date=start_date,
            values=np.asarray(visits, dtype=float),
        )
    }
    if extra_series:
        series.update(extra_series)
    return WebsiteInstance(
        instance_id=instance_id,
        website_id=website_id or instance_id.split("-")[0],
        user_base=user_base,
        website_base=website_base,
        industry=industry,
        global_rank=rank,
        country_rank=rank,
        industry_rank=rank,
        user_country="US" if user_base is Base.NONEU else "DE",
        series=series,
    )


@pytest.fixture(scope="session")
def small_panel():
    """12 treated + 12 control instances, all five metrics, known -10% effect."""
    cfg = SimConfig(n_treated=12, n_control=12, noise_sigma=0.05, seed=42)
    return generate_panel(cfg)


@pytest.fixture(scope="session")
def visits_panel():
    """Visits-only panel, a bit larger, for pipeline-level tests."""
    cfg = SimConfig(
        n_treated=20,
        n_control=20,
        noise_sigma=0.05,
        seed=7,
        metrics=(MetricKind.TOTAL_VISITS,),
    )
    return generate_panel(cfg)


def dataset_of(*instances):
    return PanelDataset(instances={i.instance_id: i for i in instances})
