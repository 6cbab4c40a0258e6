#!/usr/bin/env python3
"""Record frontend test fixtures from a live run of the backend stack.

Starts the simulated fleet, coordinator (with HTTP API) and regional
agents, submits a check exactly the way the extension does, and saves the
wire responses plus the rendered region pages and the policy ground truth.
Run from the repository root; outputs are committed under test/fixtures.
"""
import json
import time
from decimal import Decimal
from pathlib import Path

import requests

from pricescope import sim
from pricescope.coordinator import CoordinatorConfig
from pricescope.extract import canonical_format
from pricescope.harness import start_desk_harness

OUT = Path(__file__).parent.parent / "test" / "fixtures"

REGIONS = {
    "us-east": sim.RegionRule(Decimal(1), Decimal(0), "USD", "en-US"),
    "fi": sim.RegionRule(Decimal("1.3"), Decimal(0), "EUR", "fi-FI"),
    "br": sim.RegionRule(Decimal("1.1"), Decimal(5), "BRL", "pt-BR"),
}

POLICY = sim.PricingPolicy(
    domain="shopalpha.test",
    catalog=[
        sim.CatalogItem("p1", "Walnut Desk Organizer", Decimal("49.00")),
        sim.CatalogItem("p2", "Brass Bookend Pair", Decimal("32.50")),
        sim.CatalogItem("p3", "Linen Cable Tray", Decimal("18.75")),
    ],
    region_rules=REGIONS,
    fx_rates={"USD/EUR": Decimal("0.77"), "USD/BRL": Decimal("1.98")},
)


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    harness = start_desk_harness(
        [POLICY], {region: region for region in REGIONS},
        OUT.parent / "_fixture_store",
        config=CoordinatorConfig(go_lead=0.05, ready_timeout=5,
                                 fetch_deadline=5, repetitions=1,
                                 rep_spacing=0.0),
        with_api=True)
    try:
        fleet_url = harness.fleet.product_url("shopalpha.test", "p1")
        for region in REGIONS:
            page = requests.get(fleet_url, headers={"X-Sim-Region": region},
                                timeout=5).text
            (OUT / f"page-{region}.html").write_text(page, encoding="utf-8")

        host, port = harness.coordinator.api_address
        api = f"http://{host}:{port}"
        submit = requests.post(
            f"{api}/v1/checks",
            json={"product_uri": fleet_url,
                  "selector": POLICY.selector().to_json()},
            headers={"X-Installation-Id": "fixture-install"}, timeout=5)
        (OUT / "submit-response.json").write_text(
            json.dumps(submit.json(), indent=2))
        check_id = submit.json()["check_id"]
        deadline = time.time() + 30
        while True:
            status = requests.get(f"{api}/v1/checks/{check_id}",
                                  timeout=5).json()
            if status["status"] in ("done", "failed"):
                break
            assert time.time() < deadline
            time.sleep(0.1)
        assert status["status"] == "done", status
        status["product_uri"] = "http://shopalpha.test/product/p1"
        (OUT / "check-status.json").write_text(json.dumps(status, indent=2))

        truth = {}
        for region in REGIONS:
            money = sim.price_for(POLICY, "p1", region)
            truth[region] = {
                "canonical": canonical_format(money),
                "display_text": sim.format_price_text(
                    money, REGIONS[region].locale),
            }
        (OUT / "policy-truth.json").write_text(json.dumps({
            "product_uri": "http://shopalpha.test/product/p1",
            "selector_expression": POLICY.selector().expression,
            "regions": truth}, indent=2))
        print(f"fixtures written to {OUT}")
        for path in sorted(OUT.iterdir()):
            print(f"  {path.name}")
    finally:
        harness.stop()


if __name__ == "__main__":
    main()
