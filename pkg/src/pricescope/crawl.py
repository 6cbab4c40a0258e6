"""Systematic crawling of flagged retailers: sampled product lists fanned
out through the coordinator in repeated waves.

Waves run strictly in sequence per plan (period apart, measured start to
start); a missed wave is recorded as skipped and never back-filled. Products
that fail at every vantage three waves running are dropped as dead links.
Observations flow through exactly the same extraction and gating path as
crowd checks.
"""
from __future__ import annotations

import json
import random
import re
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from urllib.parse import urljoin

from . import analytics
from .coordinator import CheckRequest, Coordinator
from .extract import PriceSelector
from .pagedom import parse_document
from .protocol import QuorumFailure
from .store import PriceObservation

MAX_CONSECUTIVE_FAILURES = 3


class CrawlError(Exception):
    pass


class EmptyCatalog(CrawlError):
    pass


class NoMatches(CrawlError):
    pass


class AgentSetUnavailable(CrawlError):
    pass


@dataclass
class CrawlPlan:
    domain: str
    products: list[tuple[str, PriceSelector]]
    wave_period: float = 24 * 3600.0
    wave_count: int = 7
    vantages: list[str] | None = None
    seed: int = 0
    product_cap: int = 100
    plan_id: str = field(default_factory=lambda: uuid.uuid4().hex[:12])

    def __post_init__(self):
        if not 1 <= len(self.products) <= self.product_cap:
            raise ValueError(
                f"plan must hold 1..{self.product_cap} products, "
                f"got {len(self.products)}")
        if self.wave_count < 1:
            raise ValueError("wave_count must be >= 1")


@dataclass
class WaveReport:
    plan_id: str
    wave_index: int
    started_at: float
    profiles: list[analytics.ProductProfile] = field(default_factory=list)
    failures: int = 0
    skipped: bool = False
    reason: str | None = None


def sample_products(catalog: Sequence[tuple[str, PriceSelector]], cap: int,
                    seed: int) -> list[tuple[str, PriceSelector]]:
    """Uniform sample without replacement, deterministic for a fixed seed."""
    if not catalog:
        raise EmptyCatalog("catalog is empty")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    rng = random.Random(seed)
    k = min(cap, len(catalog))
    return rng.sample(list(catalog), k)


def catalog_ingest(listing_pages: Sequence[str], link_pattern: str,
                   selector: PriceSelector,
                   base_url: str = "") -> list[tuple[str, PriceSelector]]:
    """Build a catalog from listing pages: product links matching the
    pattern, each paired with the retailer's confirmed selector."""
    pattern = re.compile(link_pattern)
    seen: set[str] = set()
    catalog: list[tuple[str, PriceSelector]] = []
    for page in listing_pages:
        doc = parse_document(page)
        for el in doc.iter_elements():
            if el.tag != "a":
                continue
            href = el.attrs.get("href", "")
            if not href or not pattern.search(href):
                continue
            uri = urljoin(base_url, href) if base_url else href
            if uri not in seen:
                seen.add(uri)
                catalog.append((uri, selector))
    if not catalog:
        raise NoMatches(f"no links matched {link_pattern!r}")
    return catalog


def make_plan(domain: str, catalog: Sequence[tuple[str, PriceSelector]],
              cap: int = 100, waves: int = 7, period: float = 24 * 3600.0,
              seed: int = 0, vantages: list[str] | None = None) -> CrawlPlan:
    products = sample_products(catalog, cap, seed)
    return CrawlPlan(domain=domain, products=products, wave_period=period,
                     wave_count=waves, vantages=vantages, seed=seed,
                     product_cap=cap)


def run_plan(plan: CrawlPlan, coordinator: Coordinator,
             concurrency: int = 4,
             sleep=time.sleep, now=time.time) -> list[WaveReport]:
    """Execute every wave of a plan; returns one report per wave."""
    reports: list[WaveReport] = []
    dead: set[str] = set()
    consecutive_failures: dict[str, int] = {}
    next_start = now()
    for wave_index in range(plan.wave_count):
        wait = next_start - now()
        if wait > 0:
            sleep(wait)
        started_at = now()
        next_start = started_at + plan.wave_period
        report = WaveReport(plan_id=plan.plan_id, wave_index=wave_index,
                            started_at=started_at)
        try:
            _check_agents(plan, coordinator)
        except AgentSetUnavailable as exc:
            report.skipped = True
            report.reason = str(exc)
            reports.append(report)
            continue
        live = [(uri, sel) for uri, sel in plan.products if uri not in dead]
        order = list(live)
        random.Random(f"{plan.seed}:{wave_index}").shuffle(order)
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            futures = {
                pool.submit(_run_product, plan, coordinator, wave_index,
                            uri, sel): uri
                for uri, sel in order}
            for future, uri in futures.items():
                observations = future.result()
                if observations:
                    consecutive_failures[uri] = 0
                    profile = _profile_or_none(observations, coordinator)
                    if profile is not None:
                        report.profiles.append(profile)
                    else:
                        report.failures += 1
                else:
                    report.failures += 1
                    count = consecutive_failures.get(uri, 0) + 1
                    consecutive_failures[uri] = count
                    if count >= MAX_CONSECUTIVE_FAILURES:
                        dead.add(uri)
        report.profiles.sort(key=lambda p: p.product_uri)
        reports.append(report)
    return reports


def _check_agents(plan: CrawlPlan, coordinator: Coordinator) -> None:
    registered = set(coordinator.agents())
    if plan.vantages is not None:
        missing = [v for v in plan.vantages if v not in registered]
        if missing:
            raise AgentSetUnavailable(f"agents missing at wave start: {missing}")
        if len(plan.vantages) < 2:
            raise AgentSetUnavailable("plan needs >= 2 vantage points")
    elif len(registered) < 2:
        raise AgentSetUnavailable(
            f"only {len(registered)} agents registered at wave start")


def _run_product(plan: CrawlPlan, coordinator: Coordinator, wave_index: int,
                 uri: str, selector: PriceSelector) -> list[PriceObservation]:
    req = CheckRequest(product_uri=uri, selector=selector,
                       requester=f"crawl/{plan.plan_id}/w{wave_index}")
    try:
        return coordinator.run_direct_check(
            req, vantages=plan.vantages, plan_id=plan.plan_id,
            wave_index=wave_index, domain=plan.domain)
    except QuorumFailure:
        return []


def _profile_or_none(observations, coordinator):
    try:
        return analytics.product_profile(observations, coordinator.rates)
    except analytics.InsufficientObservations:
        return None


# -- plan / report files -------------------------------------------------------

def plan_to_dict(plan: CrawlPlan) -> dict:
    return {
        "plan_id": plan.plan_id,
        "domain": plan.domain,
        "products": [{"uri": uri, "selector": sel.to_json()}
                     for uri, sel in plan.products],
        "wave_period": plan.wave_period,
        "wave_count": plan.wave_count,
        "vantages": plan.vantages,
        "seed": plan.seed,
        "product_cap": plan.product_cap,
    }


def plan_from_dict(data: dict) -> CrawlPlan:
    return CrawlPlan(
        plan_id=data["plan_id"],
        domain=data["domain"],
        products=[(p["uri"], PriceSelector.from_json(p["selector"]))
                  for p in data["products"]],
        wave_period=float(data["wave_period"]),
        wave_count=int(data["wave_count"]),
        vantages=data.get("vantages"),
        seed=int(data.get("seed", 0)),
        product_cap=int(data.get("product_cap", 100)),
    )


def save_plan(plan: CrawlPlan, path: str | Path) -> None:
    Path(path).write_text(json.dumps(plan_to_dict(plan), indent=2),
                          encoding="utf-8")


def load_plan(path: str | Path) -> CrawlPlan:
    return plan_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def report_to_dict(report: WaveReport) -> dict:
    return {
        "plan_id": report.plan_id,
        "wave_index": report.wave_index,
        "started_at": report.started_at,
        "skipped": report.skipped,
        "reason": report.reason,
        "failures": report.failures,
        "products": [{
            "uri": p.product_uri,
            "wave": list(p.wave),
            "max_min_ratio": str(p.max_min_ratio),
            "gate_passed": p.gate.passed,
            "observations": len(p.observations),
            "min_price_mid": str(p.min_price.midpoint),
        } for p in report.profiles],
    }


def save_reports(reports: Sequence[WaveReport], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps([report_to_dict(r) for r in reports], indent=2),
        encoding="utf-8")
