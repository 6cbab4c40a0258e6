#!/usr/bin/env python3
"""End-to-end desk experiment against the demo fleet.

Starts the simulated retailers, a coordinator and one agent per region,
crawls every retailer for a few compressed waves, then writes the full set
of variation reports (summary, fits, locations, pairwise grid, third
parties) plus a persona comparison.
"""
import argparse
import json
import random
import sys
import time
from decimal import Decimal
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
from make_demo_policies import REGIONS, build  # noqa: E402

from pricescope import analytics, crawl, sim  # noqa: E402
from pricescope.analytics import PersonaObservation  # noqa: E402
from pricescope.coordinator import CheckRequest, CoordinatorConfig  # noqa: E402
from pricescope.extract import apply_selector, parse_price  # noqa: E402
from pricescope.harness import start_desk_harness  # noqa: E402
from pricescope.protocol import PersonaProfile  # noqa: E402


def crawl_everything(harness, policies, waves, period, out_dir):
    t0 = time.monotonic()
    for policy in policies:
        catalog = [(harness.fleet.product_url(policy.domain, c.product_id),
                    policy.selector()) for c in policy.catalog]
        plan = crawl.make_plan(policy.domain, catalog, cap=100, waves=waves,
                               period=period, seed=7)
        reports = crawl.run_plan(plan, harness.coordinator, concurrency=4)
        crawl.save_reports(reports, out_dir / f"waves-{policy.domain}.json")
        done = sum(1 for r in reports if not r.skipped)
        print(f"  {policy.domain}: {done}/{len(reports)} waves")
    print(f"crawl finished in {time.monotonic() - t0:.1f}s")


def write_reports(harness, out_dir):
    profiles = analytics.profiles_from_observations(
        harness.store.replay(), harness.rates)
    domains = sorted({p.domain for p in profiles})

    summary = []
    for domain in domains:
        s = analytics.retailer_summary(domain, profiles)
        summary.append({
            "domain": s.domain, "n_products": s.n_products,
            "n_profiles": s.n_profiles,
            "variation_extent": str(s.variation_extent),
            "ratio_stats": {k: str(v) for k, v in s.ratio_stats.items()}})
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))

    fits = []
    locations = sorted({o.vantage for p in profiles for o in p.observations})
    for domain in domains:
        mine = [p for p in profiles if p.domain == domain]
        for location in locations:
            pairs = analytics.fit_pairs_for_location(mine, location)
            if len(pairs) >= 5:
                m = analytics.fit_variation_model(domain, location, pairs)
                fits.append({"domain": domain, "location": location,
                             "a": round(m.a, 6), "b": round(m.b, 4),
                             "class": m.klass, "residual": m.residual})
    (out_dir / "fits.json").write_text(json.dumps(fits, indent=2))

    locrep = analytics.location_ratios(profiles)
    (out_dir / "locations.json").write_text(json.dumps({
        "stats": {loc: {k: str(v) for k, v in st.items()}
                  for loc, st in locrep.stats.items()},
        "never_cheapest": locrep.never_cheapest}, indent=2))

    snapshots = {}
    for p in profiles:
        for obs in p.observations:
            if harness.store.snapshots.exists(obs.snapshot_ref):
                snapshots.setdefault(p.domain, []).append(
                    harness.store.snapshots.get(obs.snapshot_ref))
    (out_dir / "thirdparty.json").write_text(
        json.dumps(analytics.third_party_scan(snapshots), indent=2))

    grid = analytics.pairwise_grid(domains[0], profiles)
    (out_dir / "grid.json").write_text(json.dumps(
        {f"{i}|{j}": [[str(x), str(y)] for x, y in pts]
         for (i, j), pts in grid.items()}, indent=2))
    print(f"reports in {out_dir}: summary, fits, locations, thirdparty, grid")


def persona_experiment(harness, out_dir):
    """Same vantage, same window, different login cookie bundles."""
    domain = "ebookhut.test"
    policy = harness.fleet.policy(domain)
    item = policy.catalog[0]
    uri = harness.fleet.product_url(domain, item.product_id)
    personas = {
        "anonymous": PersonaProfile(name="anonymous"),
        "logged-in": PersonaProfile(name="logged-in",
                                    cookies=(("logged_in", "1"),
                                             ("session", "demo")),
                                    logged_in_as="reader-1"),
    }
    results = {}
    vantage = next(iter(harness.coordinator.agents()))
    for name, profile in personas.items():
        req = CheckRequest(product_uri=uri, selector=policy.selector(),
                           requester=f"persona/{name}", profile=profile)
        observations = harness.coordinator.run_direct_check(
            req, vantages=[vantage, vantage][:1] + [
                a for a in harness.coordinator.agents() if a != vantage][:1])
        mine = [o for o in observations if o.vantage == vantage]
        results[name] = PersonaObservation(
            profile=profile, money=mine[0].money if mine else None,
            error=None if mine else "no observation")
    comparison = analytics.persona_compare(uri, vantage, results)
    (out_dir / "persona.json").write_text(json.dumps(comparison, indent=2))
    print(f"persona comparison: any_difference={comparison['any_difference']}")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="./desk-run")
    parser.add_argument("--waves", type=int, default=3)
    parser.add_argument("--period", type=float, default=2.0)
    parser.add_argument("--seed", type=int, default=13)
    args = parser.parse_args()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    policies = build(random.Random(args.seed))
    harness = start_desk_harness(
        policies, {region: region for region in REGIONS},
        out_dir / "store",
        config=CoordinatorConfig(go_lead=0.05, ready_timeout=5,
                                 fetch_deadline=5))
    try:
        print(f"fleet: {len(policies)} retailers, "
              f"{len(harness.agents)} vantage agents")
        crawl_everything(harness, policies, args.waves, args.period, out_dir)
        write_reports(harness, out_dir)
        persona_experiment(harness, out_dir)
    finally:
        harness.stop()


if __name__ == "__main__":
    main()
