"""Acceptance suite: one test per exit criterion, one printed verdict each.

Everything runs against the simulated retailer fleet with known injected
policies; tolerances are stated inline next to each assertion.
"""
import datetime as dt
import os
import random
import re
import signal
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

import pytest

from conftest import NetHarness, const_fetcher, fake_page, price_selector
from pricescope import analytics, crawl, sim
from pricescope.analytics import (ADDITIVE, FLAT, MIXED, MULTIPLICATIVE,
                                  product_profile, profiles_from_observations,
                                  ratio_stats)
from pricescope.coordinator import CoordinatorConfig
from pricescope.extract import (Money, RawPriceText, apply_selector,
                                parse_price)
from pricescope.fx import load_rate_table
from pricescope.harness import start_desk_harness
from pricescope.pagedom import parse_document
from pricescope.store import ObservationStore, PriceObservation, ReplayQuery

DAY = dt.date(2013, 2, 1)
DAY_EPOCH = 1359676800.0


def report(name: str, passed: bool, detail: str = "") -> None:
    print(f"\nACCEPTANCE {name}: {'PASS' if passed else 'FAIL'} {detail}")
    assert passed, f"{name}: {detail}"


# -- helpers -------------------------------------------------------------------

def desk_profiles(policy, regions, rates, waves=1):
    """Render + extract + profile every product, bypassing the network."""
    profiles = []
    for wave in range(waves):
        for item in policy.catalog:
            observations = []
            for region in regions:
                money = sim.price_for(policy, item.product_id, region)
                page = sim.render_product_page(policy, item, money, region)
                raw = apply_selector(page, policy.selector())
                extracted = parse_price(raw, page_context=page)
                observations.append(PriceObservation(
                    check_id=f"{item.product_id}-w{wave}", vantage=region,
                    money=extracted, fetched_at=DAY_EPOCH + 60,
                    fetch_latency=0.01, snapshot_ref="0" * 64,
                    product_uri=f"http://{policy.domain}/product/{item.product_id}",
                    domain=policy.domain))
            profiles.append(product_profile(observations, rates))
    return profiles


def naive_symbol_extract(page: str):
    """Reference extractor: first currency-symbol-adjacent number on the
    page, the approach per-retailer selectors exist to beat."""
    doc = parse_document(page)
    text = " ".join(t for _, t in doc.iter_text_nodes())
    m = re.search(r"(R\$|[$€£¥])\s?[\d.,  ]*\d|[\d.,  ]*\d\s?(R\$|[$€£¥])",
                  text)
    if not m:
        return None
    try:
        return parse_price(RawPriceText(m.group(0)), page_context=page)
    except Exception:
        return None


MAGNITUDE_REGIONS = ["us-east", "us-west", "uk", "de", "fi", "br"]


def build_magnitude_fleet(rng: random.Random, n_retailers=21, n_products=12):
    """Retailers with one baseline region and five multipliers drawn from
    [1.10, 1.30]; single display currency so ratios are exact."""
    policies, injected = [], {}
    for k in range(n_retailers):
        rules = {}
        top = Decimal(1)
        for i, region in enumerate(MAGNITUDE_REGIONS):
            if i == 0:
                mult = Decimal(1)
            else:
                mult = Decimal(str(round(rng.uniform(1.10, 1.30), 4)))
            top = max(top, mult)
            rules[region] = sim.RegionRule(mult, Decimal(0), "USD", "en-US")
        catalog = [
            sim.CatalogItem(f"p{i:03d}", f"Item {k}-{i}",
                            Decimal(str(round(rng.uniform(20, 500), 2))))
            for i in range(n_products)]
        domain = f"simshop-{k:02d}.test"
        policies.append(sim.PricingPolicy(
            domain=domain, catalog=catalog, region_rules=rules,
            template=sim.TEMPLATE_CLASSIC if k % 2 else sim.TEMPLATE_MINIMAL,
            seed=k))
        injected[domain] = top
    return policies, injected


# -- criteria -------------------------------------------------------------------

def test_injected_magnitude_recovery(tmp_path):
    started = time.monotonic()
    rng = random.Random(20130201)
    policies, injected = build_magnitude_fleet(rng)
    harness = start_desk_harness(
        policies, {region: region for region in MAGNITUDE_REGIONS},
        tmp_path / "store",
        config=CoordinatorConfig(go_lead=0.03, ready_timeout=5,
                                 fetch_deadline=5))
    try:
        plans = []
        for policy in policies:
            catalog = [(harness.fleet.product_url(policy.domain, c.product_id),
                        policy.selector()) for c in policy.catalog]
            plans.append(crawl.make_plan(policy.domain, catalog, cap=100,
                                         waves=7, period=2.0, seed=11))
        with ThreadPoolExecutor(max_workers=len(plans)) as pool:
            all_reports = list(pool.map(
                lambda plan: crawl.run_plan(plan, harness.coordinator,
                                            concurrency=4), plans))
        for reports in all_reports:
            starts = [r.started_at for r in reports]
            assert starts == sorted(starts) and len(starts) == 7
            assert all(b - a >= 2.0 - 1e-3
                       for a, b in zip(starts, starts[1:]))
            assert not any(r.skipped for r in reports)

        observations = list(harness.store.replay())
        expected = 21 * 12 * len(MAGNITUDE_REGIONS) * 7
        assert len(observations) >= expected * 0.995, \
            f"expected ~{expected} observations, got {len(observations)}"

        profiles = profiles_from_observations(observations, harness.rates)
        worst = Decimal(0)
        for domain, top in injected.items():
            summary = analytics.retailer_summary(domain, profiles)
            median = summary.ratio_stats["median"]
            rel = abs(median - top) / top
            worst = max(worst, rel)
            assert rel <= Decimal("0.001"), \
                f"{domain}: median {median} vs injected {top}"
            # the fleet-wide envelope: every median in the 10%-30% band
            assert Decimal("1.10") * Decimal("0.999") <= median \
                <= Decimal("1.30") * Decimal("1.001")
            assert summary.variation_extent == 1
        elapsed = time.monotonic() - started
        assert elapsed < 300, f"runtime {elapsed:.0f}s exceeds 5 min"
        report("injected-magnitude-recovery", True,
               f"(21 domains, {len(observations)} obs, worst rel err "
               f"{worst:.2E}, {elapsed:.0f}s)")
    finally:
        harness.stop()


def test_currency_gate_soundness():
    regions = {
        "us": sim.RegionRule(Decimal(1), Decimal(0), "USD", "en-US"),
        "de": sim.RegionRule(Decimal(1), Decimal(0), "EUR", "de"),
        "uk": sim.RegionRule(Decimal(1), Decimal(0), "GBP", "en-GB"),
        "br": sim.RegionRule(Decimal(1), Decimal(0), "BRL", "pt-BR"),
        "jp": sim.RegionRule(Decimal(1), Decimal(0), "JPY", "ja"),
    }
    rng = random.Random(99)
    catalog = [sim.CatalogItem(f"p{i:04d}", f"Item {i}",
                               Decimal(str(round(rng.uniform(5, 2000), 2))))
               for i in range(1000)]
    policy = sim.PricingPolicy(
        domain="localized.test", catalog=catalog, region_rules=regions,
        fx_rates={"USD/EUR": Decimal("0.77"), "USD/GBP": Decimal("0.64"),
                  "USD/BRL": Decimal("1.98"), "USD/JPY": Decimal("93.6")})
    rates = load_rate_table(sim.publish_rate_windows([policy], DAY))
    profiles = desk_profiles(policy, list(regions), rates)
    passes = sum(1 for p in profiles if p.gate.passed)
    report("currency-gate-soundness", passes == 0,
           f"({passes}/1000 gate passes; zero tolerance)")


def test_classification_recovery():
    def synthesize(rng, klass, noise):
        if klass == MULTIPLICATIVE:
            a, b = rng.uniform(1.05, 2.0), 0.0
        elif klass == ADDITIVE:
            a, b = 1.0, rng.uniform(1, 20)
        elif klass == MIXED:
            a, b = rng.uniform(1.05, 2.0), rng.uniform(1, 20)
        else:
            a, b = 1.0, 0.0
        xs = [10 * 10 ** rng.uniform(0, 1.3) for _ in range(60)]
        pairs = []
        for x in xs:
            y = a * x + b
            if noise:
                y *= 1 + rng.uniform(-noise, noise)
            pairs.append((x, y))
        return a, b, pairs

    classes = (MULTIPLICATIVE, ADDITIVE, MIXED, FLAT)

    rng = random.Random(20130201)
    for klass in classes:
        for _ in range(50):
            a, b, pairs = synthesize(rng, klass, noise=0.0)
            model = analytics.fit_variation_model("d", "loc", pairs)
            assert model.klass == klass, (klass, model)
            assert abs(model.a - a) <= 1e-9 * max(1.0, abs(a))
            assert abs(model.b - b) <= 1e-9 * max(1.0, abs(b))

    rng = random.Random(20130202)
    correct = total = 0
    for klass in classes:
        for _ in range(50):
            _, _, pairs = synthesize(rng, klass, noise=0.01)
            model = analytics.fit_variation_model("d", "loc", pairs)
            total += 1
            correct += (model.klass == klass)
    accuracy = correct / total
    report("classification", accuracy >= 0.95,
           f"(noise-free 200/200 exact to 1e-9; 1% noise {correct}/{total})")


def test_extent_metric():
    flat = sim.PricingPolicy(
        domain="flat.test",
        catalog=[sim.CatalogItem(f"p{i}", f"I{i}", Decimal(10 + i))
                 for i in range(20)],
        region_rules={r: sim.RegionRule(Decimal(1), Decimal(0), "USD", "en-US")
                      for r in ("a", "b", "c")})
    discriminating = sim.PricingPolicy(
        domain="varies.test",
        catalog=[sim.CatalogItem(f"p{i}", f"I{i}", Decimal(10 + i))
                 for i in range(20)],
        region_rules={
            "a": sim.RegionRule(Decimal(1), Decimal(0), "USD", "en-US"),
            "b": sim.RegionRule(Decimal("1.25"), Decimal(0), "USD", "en-US"),
            "c": sim.RegionRule(Decimal("1.1"), Decimal(0), "USD", "en-US")})
    flat_profiles = desk_profiles(flat, ["a", "b", "c"], rates=None)
    vary_profiles = desk_profiles(discriminating, ["a", "b", "c"], rates=None)
    flat_extent = analytics.retailer_summary("flat.test",
                                             flat_profiles).variation_extent
    vary_extent = analytics.retailer_summary("varies.test",
                                             vary_profiles).variation_extent
    report("extent-metric", flat_extent == 0 and vary_extent == 1,
           f"(flat {flat_extent}, discriminating {vary_extent})")


def test_synchrony_under_jitter(tmp_path):
    window = 5.0
    net = NetHarness(tmp_path / "store", sync_window=window, go_lead=0.4,
                     ready_timeout=6.0)
    try:
        for i in range(14):
            jitter_rng = random.Random(1000 + i)
            latency_rng = random.Random(2000 + i)

            def laggy(uri, headers, cookies, deadline,
                      rng=latency_rng):
                time.sleep(rng.uniform(0, 0.15))
                return 200, fake_page("$10.00")

            net.spawn_agent(f"v{i:02d}", laggy,
                            handling_delay=lambda rng=jitter_rng:
                            rng.uniform(0, 0.25))
        net.wait_registered()

        def run_wave(i):
            results = net.coordinator.fan_out(
                f"jit{i}", 0, f"http://shop.test/p{i}", price_selector(),
                None, sync_window=window)
            ok = [r for r in results if r.status == "ok"]
            assert len(ok) == 14, f"wave {i}: {len(ok)} ok"
            starts = [r.started_at for r in ok]
            return max(starts) - min(starts)

        with ThreadPoolExecutor(max_workers=10) as pool:
            spreads = list(pool.map(run_wave, range(100)))
        in_window = sum(1 for s in spreads if s <= window)
        report("synchrony", in_window == 100,
               f"({in_window}/100 waves within {window}s window, "
               f"max spread {max(spreads):.3f}s)")
    finally:
        net.stop()


def oracle_quantile(values, q):
    xs = sorted(Fraction(v) for v in values)
    if len(xs) == 1:
        return xs[0]
    pos = Fraction(q) * (len(xs) - 1)
    lower = pos.numerator // pos.denominator
    frac = pos - lower
    if frac == 0:
        return xs[lower]
    return xs[lower] + frac * (xs[lower + 1] - xs[lower])


def test_quartile_oracle():
    rng = random.Random(20130201)
    checked = 0
    for _ in range(1000):
        size = max(1, int(10 ** rng.uniform(0, 4)))
        values = [Decimal(rng.randint(100, 500000)) / 100
                  for _ in range(size)]
        stats = ratio_stats(values)
        for q, key in (("0.25", "q25"), ("0.5", "median"), ("0.75", "q75")):
            assert Fraction(stats[key]) == oracle_quantile(values, q), \
                (size, q)
        assert stats["min"] == min(values)
        assert stats["max"] == max(values)
        checked += 1
    report("quartile-oracle", checked == 1000,
           f"({checked}/1000 multisets, exact equality)")


def test_extraction_robustness():
    rng = random.Random(5)
    regions = {
        "us": sim.RegionRule(Decimal(1), Decimal(0), "USD", "en-US"),
        "fi": sim.RegionRule(Decimal("1.2"), Decimal(0), "EUR", "fi-FI"),
    }
    selector_hits = naive_hits = total = 0
    for k in range(10):
        template = sim.TEMPLATE_CLASSIC if k < 6 else sim.TEMPLATE_MINIMAL
        policy = sim.PricingPolicy(
            domain=f"deco{k}.test",
            catalog=[sim.CatalogItem(f"p{i}", f"I{i}",
                                     Decimal(str(round(rng.uniform(20, 90), 2))))
                     for i in range(5)],
            region_rules=regions, template=template,
            fx_rates={"USD/EUR": Decimal("0.77")})
        for item in policy.catalog:
            for region in regions:
                truth = sim.price_for(policy, item.product_id, region)
                page = sim.render_product_page(policy, item, truth, region)
                total += 1
                raw = apply_selector(page, policy.selector())
                if parse_price(raw, page_context=page) == truth:
                    selector_hits += 1
                naive = naive_symbol_extract(page)
                if naive == truth:
                    naive_hits += 1
    report("extraction-robustness",
           selector_hits == total and naive_hits < total,
           f"(selector {selector_hits}/{total}, naive grep "
           f"{naive_hits}/{total})")


def test_location_ranking():
    premium = "fi"
    exceptions = {"except-0.test", "except-1.test"}
    all_profiles = []
    for k in range(6):
        domain = f"rank-{k}.test" if k < 4 else f"except-{k - 4}.test"
        if domain in exceptions:
            mults = {"fi": Decimal(1), "ny": Decimal("1.15"),
                     "br": Decimal("1.05")}
        else:
            mults = {"fi": Decimal("1.30"), "ny": Decimal("1.15"),
                     "br": Decimal(1)}
        policy = sim.PricingPolicy(
            domain=domain,
            catalog=[sim.CatalogItem(f"p{i}", f"I{i}", Decimal(15 + 3 * i))
                     for i in range(8)],
            region_rules={r: sim.RegionRule(m, Decimal(0), "USD", "en-US")
                          for r, m in mults.items()})
        all_profiles.extend(desk_profiles(policy, list(mults), rates=None))
    never = analytics.location_ratios(all_profiles).never_cheapest
    flagged = {d for d, locs in never.items() if premium in locs}
    expected = {f"rank-{k}.test" for k in range(4)}
    report("location-ranking", flagged == expected,
           f"(never-cheapest[{premium}] on {sorted(flagged)}, "
           f"exceptions {sorted(exceptions)} exempt)")


def test_store_durability(tmp_path):
    store_dir = tmp_path / "store"
    child = subprocess.Popen(
        [sys.executable, str(Path(__file__).parent / "durability_child.py"),
         str(store_dir)],
        stdout=subprocess.PIPE, text=True,
        cwd=str(Path(__file__).parent.parent))
    acked = []
    for line in child.stdout:
        if line.startswith("acked "):
            _, check_id, vantage, rep = line.split()
            acked.append((check_id, vantage, int(rep)))
        if len(acked) >= 300:
            break
    os.kill(child.pid, signal.SIGKILL)
    child.wait()
    assert len(acked) >= 300

    # restart on the same store and keep crawling
    harness = NetHarness(store_dir)
    try:
        harness.spawn_agent("a", const_fetcher("$10.00"))
        harness.spawn_agent("b", const_fetcher("$11.00"))
        harness.wait_registered()
        from pricescope.coordinator import CheckRequest
        harness.coordinator.run_direct_check(CheckRequest(
            product_uri="http://shop.test/product/after-restart",
            selector=price_selector(), requester="restart"))
        replayed = [(o.check_id, o.vantage, o.rep)
                    for o in harness.store.replay()]
    finally:
        harness.stop()
    replay_set = set(replayed)
    missing = [a for a in acked if a not in replay_set]
    duplicated = len(replayed) != len(replay_set)
    report("store-durability", not missing and not duplicated,
           f"({len(acked)} acked before SIGKILL, {len(missing)} missing, "
           f"duplicates={duplicated}, {len(replayed)} total after restart)")
