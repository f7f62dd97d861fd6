"""CSV parsing, sample filters, and pre-period share computation."""

import datetime as dt

import numpy as np
import pandas as pd
import pytest

from panelfx.ingest import (
    PanelParseError,
    apply_filters,
    dataset_to_frame,
    default_outlier_rule,
    parse_panel,
    pre_treatment_shares,
    unique_visitor_subsample,
    write_panel_csv,
)
from panelfx.panel import DEFAULT_START_DATE, Base, MetricKind, TimeSeries

from conftest import dataset_of, make_instance


@pytest.fixture
def round_trip_panel(small_panel, tmp_path):
    dataset, _ = small_panel
    path = tmp_path / "panel.csv"
    write_panel_csv(dataset, path)
    return dataset, path


class TestParsing:
    def test_round_trip_preserves_values(self, round_trip_panel):
        original, path = round_trip_panel
        parsed = parse_panel(path)
        assert sorted(parsed.instances) == sorted(original.instances)
        for iid, inst in original.instances.items():
            for metric in MetricKind:
                ts = inst.get(metric)
                if ts is None:
                    continue
                np.testing.assert_array_equal(
                    parsed.instances[iid].get(metric).values, ts.values
                )
            assert parsed.instances[iid].industry == inst.industry
            assert parsed.instances[iid].treatment == inst.treatment

    def test_exact_duplicates_collapse(self, round_trip_panel, tmp_path):
        original, path = round_trip_panel
        df = pd.read_csv(path)
        doubled = tmp_path / "doubled.csv"
        pd.concat([df, df.head(50)]).to_csv(doubled, index=False)
        parsed = parse_panel(doubled)
        assert sorted(parsed.instances) == sorted(original.instances)

    def test_conflicting_duplicates_rejected(self, round_trip_panel, tmp_path):
        _, path = round_trip_panel
        df = pd.read_csv(path)
        clash = df.head(1).copy()
        clash["value"] += 1
        bad = tmp_path / "clash.csv"
        pd.concat([df, clash]).to_csv(bad, index=False)
        with pytest.raises(PanelParseError, match="duplicate"):
            parse_panel(bad)

    def test_unknown_metric_rejected(self, round_trip_panel, tmp_path):
        _, path = round_trip_panel
        df = pd.read_csv(path)
        df.loc[3, "metric"] = "page_views"
        bad = tmp_path / "metric.csv"
        df.to_csv(bad, index=False)
        with pytest.raises(PanelParseError, match="unknown metric"):
            parse_panel(bad)

    def test_negative_value_rejected(self, round_trip_panel, tmp_path):
        _, path = round_trip_panel
        df = pd.read_csv(path)
        df.loc[5, "value"] = -1
        bad = tmp_path / "neg.csv"
        df.to_csv(bad, index=False)
        with pytest.raises(PanelParseError, match="negative"):
            parse_panel(bad)

    def test_weekly_gap_rejected(self, round_trip_panel, tmp_path):
        _, path = round_trip_panel
        df = pd.read_csv(path)
        weekly = df[df["metric"] == "total_visits"]
        df = df.drop(weekly.index[3])
        bad = tmp_path / "gap.csv"
        df.to_csv(bad, index=False)
        with pytest.raises(PanelParseError, match="gap"):
            parse_panel(bad)

    def test_inconsistent_metadata_rejected(self, round_trip_panel, tmp_path):
        _, path = round_trip_panel
        df = pd.read_csv(path)
        iid = df.loc[0, "instance_id"]
        df.loc[df[df["instance_id"] == iid].index[-1], "industry"] = "other"
        bad = tmp_path / "meta.csv"
        df.to_csv(bad, index=False)
        with pytest.raises(PanelParseError, match="inconsistent metadata"):
            parse_panel(bad)

    def test_three_instances_per_website_rejected(self, tmp_path):
        rows = []
        for iid, ub in (("a-EU", "EU"), ("a-NONEU", "NONEU"), ("a-X", "EU")):
            for week in range(3):
                d = DEFAULT_START_DATE + dt.timedelta(days=7 * week)
                rows.append(
                    {
                        "instance_id": iid, "website_id": "a", "user_base": ub,
                        "website_base": "EU", "user_country": "DE",
                        "industry": "news", "global_rank": 1, "country_rank": 1,
                        "industry_rank": 1, "date": d.isoformat(),
                        "metric": "total_visits", "value": 100,
                    }
                )
        bad = tmp_path / "three.csv"
        pd.DataFrame(rows).to_csv(bad, index=False)
        with pytest.raises(PanelParseError, match="instances"):
            parse_panel(bad)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            parse_panel(tmp_path / "nope.csv")

    def test_missing_columns(self, tmp_path):
        bad = tmp_path / "cols.csv"
        bad.write_text("instance_id,value\nx,1\n")
        with pytest.raises(PanelParseError, match="missing columns"):
            parse_panel(bad)

    def test_frame_is_sorted_and_stable(self, round_trip_panel):
        original, _ = round_trip_panel
        f1 = dataset_to_frame(original)
        f2 = dataset_to_frame(original)
        assert f1.equals(f2)
        assert list(f1["instance_id"]) == sorted(f1["instance_id"])


class TestFilters:
    def test_threshold_is_strict(self):
        at = make_instance("at", np.full(20, 1000.0))
        below = make_instance("below", np.full(20, 999.9))
        filtered, report = apply_filters(dataset_of(at, below), outlier_rule=None)
        assert sorted(filtered.instances) == ["at"]
        assert report.rule_counts == {"below_threshold": 1}
        assert report.retained_count == 1

    def test_zero_month_filtered(self):
        # weeks 5-9 start in August 2017 and are all zero
        values = np.full(30, 5000.0)
        values[4:9] = 0.0
        dark = make_instance("dark", values)
        ok = make_instance("ok", np.full(30, 5000.0))
        filtered, report = apply_filters(dataset_of(dark, ok), outlier_rule=None)
        assert sorted(filtered.instances) == ["ok"]
        assert report.rule_counts == {"monthly_gap": 1}

    def test_outlier_rule_flags_spike_run(self):
        rng = np.random.default_rng(14)
        values = 2000.0 * rng.lognormal(0.0, 0.05, 52)
        spiky = values.copy()
        spiky[20:23] *= 50.0
        assert default_outlier_rule(
            make_instance("s", spiky).get(MetricKind.TOTAL_VISITS)
        )
        assert not default_outlier_rule(
            make_instance("c", values).get(MetricKind.TOTAL_VISITS)
        )
        # a single-week spike is tolerated
        single = values.copy()
        single[20] *= 50.0
        assert not default_outlier_rule(
            make_instance("o", single).get(MetricKind.TOTAL_VISITS)
        )

    def test_outlier_rule_ignores_constant_series(self):
        # zero dispersion means no meaningful deviation scale
        assert not default_outlier_rule(
            make_instance("flat", np.full(52, 2000.0)).get(MetricKind.TOTAL_VISITS)
        )

    def test_filter_order_and_bookkeeping(self):
        tiny = make_instance("tiny", np.full(20, 10.0))
        ok = make_instance("ok", np.full(20, 5000.0))
        ds, report = apply_filters(dataset_of(tiny, ok))
        assert report.input_count == 2
        assert report.retained_count == len(ds) == 1
        assert report.to_dict()["excluded"] == [
            {"instance_id": "tiny", "reason": "below_threshold"}
        ]


class TestUniqueVisitorSubsample:
    def _with_uniques(self, iid, monthly):
        ts = TimeSeries(
            metric=MetricKind.UNIQUE_VISITORS,
            cadence="monthly",
            start_date=DEFAULT_START_DATE,
            values=np.asarray(monthly, dtype=float),
        )
        return make_instance(
            iid, np.full(20, 9000.0), extra_series={MetricKind.UNIQUE_VISITORS: ts}
        )

    def test_floor_is_strict_per_month(self):
        keep = self._with_uniques("keep", [5000.0, 6000.0])
        drop = self._with_uniques("drop", [5000.0, 4999.9])
        missing = make_instance("missing", np.full(20, 9000.0))
        sub = unique_visitor_subsample(dataset_of(keep, drop, missing))
        assert sorted(sub.instances) == ["keep"]


class TestShares:
    def test_shares_sum_to_one(self):
        a = make_instance("w-EU", np.full(46, 300.0), website_id="w", user_base=Base.EU)
        b = make_instance("w-NONEU", np.full(46, 100.0), website_id="w")
        s = pre_treatment_shares([a, b], np.arange(46))
        assert s.shares == pytest.approx({"w-EU": 0.75, "w-NONEU": 0.25})

    def test_mixed_websites_rejected(self):
        a = make_instance("a", np.full(10, 1.0))
        b = make_instance("b", np.full(10, 1.0))
        with pytest.raises(ValueError, match="different websites"):
            pre_treatment_shares([a, b], np.arange(10))

    def test_all_zero_rejected(self):
        a = make_instance("w-EU", np.zeros(10), website_id="w", user_base=Base.EU)
        with pytest.raises(ValueError, match="all-zero"):
            pre_treatment_shares([a], np.arange(10))
