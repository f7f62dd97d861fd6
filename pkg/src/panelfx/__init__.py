"""panelfx: policy-impact estimation on panel web-traffic data.

Builds synthetic controls for treated units, estimates treatment effects
with a two-unit panel-differences regression over expanding post-treatment
windows, merges instance effects to websites, derives usage-intensity
effects, aggregates cohorts, translates effects into revenue, and ships a
simulation oracle plus robustness reruns to validate the whole stack.
"""

__version__ = "0.1.0"

from .panel import (  # noqa: F401
    AnalysisWindow,
    Base,
    MetricKind,
    TimeSeries,
    Treatment,
    WebsiteInstance,
    assign_treatment,
    log1p_transform,
    window_bounds,
)
