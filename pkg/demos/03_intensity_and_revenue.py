"""From quantity effects to usage intensity and revenue: the ratio algebra
that turns per-metric deltas into per-visit intensities and dollar impacts.

Run with:  python3 demos/03_intensity_and_revenue.py
"""

from panelfx.cohorts import RevenueModel, ad_impact, ecommerce_impact
from panelfx.effects import intensity_effect, visits_per_unique_effect

# ---------------------------------------------------------------------------
# Quantity effects for one hypothetical website (relative changes).
# ---------------------------------------------------------------------------
delta_visits = -0.098
delta_uniques = -0.042
delta_pages = -0.145
delta_time = -0.120
delta_bounces = -0.080

print("quantity effects:")
for name, d in [
    ("total visits", delta_visits),
    ("unique visitors", delta_uniques),
    ("page impressions", delta_pages),
    ("time on site", delta_time),
    ("bouncing visitors", delta_bounces),
]:
    print(f"  {name:<18} {d:+.3f}")

# ---------------------------------------------------------------------------
# Intensity ratios: each pairs a quantity metric with total visits, except
# visits-per-unique where the roles flip.
# ---------------------------------------------------------------------------
print("\nusage-intensity effects:")
print(f"  visits per unique      {visits_per_unique_effect(delta_visits, delta_uniques):+.3f}")
print(f"  pages per visit        {intensity_effect(delta_pages, delta_visits):+.3f}")
print(f"  time per visit         {intensity_effect(delta_time, delta_visits):+.3f}")
print(f"  bounce rate            {intensity_effect(delta_bounces, delta_visits):+.3f}")

# consistency check: intensity and visits effects recompose the quantity one
di = intensity_effect(delta_pages, delta_visits)
assert abs((1 + di) * (1 + delta_visits) - 1 - delta_pages) < 1e-12

# ---------------------------------------------------------------------------
# Revenue translation over 1.5 years for two business models.
# ---------------------------------------------------------------------------
shop = RevenueModel(
    kind="ecommerce",
    visits_per_year=50_000_000,
    conversion_rate=0.02,
    revenue_per_purchase=80.0,
    years=1.5,
)
out = ecommerce_impact(shop, delta_visits)
print(f"\necommerce: baseline ${out['baseline_revenue']:,.2f}/yr, "
      f"change ${out['revenue_change']:,.2f} over {shop.years} years")

publisher = RevenueModel(
    kind="adbased",
    page_impressions_per_year=250_000_000,
    ads_per_page=6.0,
    ad_price=0.008,
    years=1.5,
)
out = ad_impact(publisher, delta_pages)
print(f"ad-funded: baseline ${out['baseline_revenue']:,.2f}/yr, "
      f"change ${out['revenue_change']:,.2f} over {publisher.years} years")
