"""Command-line entry points.

Subcommands: serve (coordinator), agent, replay, crawl plan/run,
analyze summary|fit|grid|locations|thirdparty, sim serve|rates, fx verify.
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import re
import signal
import sys
import threading
import time
from pathlib import Path

from . import analytics, crawl, sim
from .agent import AgentConfig, VantageAgent
from .coordinator import Coordinator, CoordinatorConfig
from .extract import PriceSelector, DOM_PATH
from .fx import load_rate_table, validate_rate_file
from .store import ObservationStore, ReplayQuery

REPORT_SCHEMA_VERSION = 1


def _parse_period(text: str) -> float:
    m = re.fullmatch(r"(\d+(?:\.\d+)?)([smhd]?)", text.strip())
    if not m:
        raise argparse.ArgumentTypeError(f"bad period {text!r} (e.g. 24h, 90m, 2s)")
    value = float(m.group(1))
    unit = {"": 1, "s": 1, "m": 60, "h": 3600, "d": 86400}[m.group(2)]
    return value * unit


def _parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text)


def _wait_forever():
    stop = threading.Event()

    def handler(signum, frame):
        stop.set()

    signal.signal(signal.SIGINT, handler)
    signal.signal(signal.SIGTERM, handler)
    while not stop.is_set():
        stop.wait(0.5)


def cmd_serve(args) -> int:
    store = ObservationStore(args.store)
    rates = load_rate_table(args.rates, reference=args.reference) \
        if args.rates else None
    config = CoordinatorConfig(
        host=args.host, agent_port=args.agent_port, api_port=args.api_port,
        sync_window=args.sync_window, repetitions=args.repetitions,
        rep_spacing=args.rep_spacing, go_lead=args.go_lead,
        reference=args.reference)
    coordinator = Coordinator(store, rates=rates, config=config)
    coordinator.start()
    print(f"agents:  {coordinator.agent_address[0]}:{coordinator.agent_address[1]}")
    print(f"api:     http://{coordinator.api_address[0]}:{coordinator.api_address[1]}")
    try:
        _wait_forever()
    finally:
        coordinator.stop()
    return 0


def cmd_agent(args) -> int:
    host, _, port = args.coordinator.rpartition(":")
    config = AgentConfig(
        agent_id=args.id, country=args.country, city=args.city,
        coordinator=(host or "127.0.0.1", int(port)),
        fetch_deadline=args.deadline, politeness_delay=args.politeness)
    agent = VantageAgent(config)
    agent.start()
    print(f"agent {args.id} registered with {args.coordinator}")
    try:
        _wait_forever()
    finally:
        agent.stop()
    return 0


def cmd_replay(args) -> int:
    store = ObservationStore(args.store)
    query = ReplayQuery(
        domain=args.domain, product_uri=args.product, vantage=args.vantage,
        date_from=_parse_date(args.date_from) if args.date_from else None,
        date_to=_parse_date(args.date_to) if args.date_to else None)
    count = 0
    for obs in store.replay(query):
        sys.stdout.write(json.dumps(obs.to_record()) + "\n")
        count += 1
    print(f"replayed {count} observations", file=sys.stderr)
    return 0


def _read_catalog_file(path: str) -> list[tuple[str, PriceSelector]]:
    catalog = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        uri, _, expr = line.partition("\t")
        if not expr:
            raise SystemExit(f"catalog line missing selector: {line!r}")
        catalog.append((uri, PriceSelector(kind=DOM_PATH, expression=expr)))
    return catalog


def cmd_crawl_plan(args) -> int:
    catalog = _read_catalog_file(args.catalog_file)
    plan = crawl.make_plan(
        domain=args.domain, catalog=catalog, cap=args.cap, waves=args.waves,
        period=args.period, seed=args.seed,
        vantages=args.vantages.split(",") if args.vantages else None)
    crawl.save_plan(plan, args.out)
    print(f"plan {plan.plan_id}: {len(plan.products)} products, "
          f"{plan.wave_count} waves -> {args.out}")
    return 0


def cmd_crawl_run(args) -> int:
    plan = crawl.load_plan(args.plan)
    store = ObservationStore(args.store)
    rates = load_rate_table(args.rates) if args.rates else None
    config = CoordinatorConfig(host=args.host, agent_port=args.agent_port,
                               go_lead=args.go_lead)
    coordinator = Coordinator(store, rates=rates, config=config)
    coordinator.start(with_api=False)
    print(f"waiting for {args.wait_agents} agents on "
          f"{coordinator.agent_address[0]}:{coordinator.agent_address[1]} ...")
    if not coordinator.wait_for_agents(args.wait_agents, timeout=args.wait_timeout):
        print("agent set unavailable", file=sys.stderr)
        coordinator.stop()
        return 1
    try:
        reports = crawl.run_plan(plan, coordinator, concurrency=args.concurrency)
    finally:
        coordinator.stop()
    crawl.save_reports(reports, args.out)
    done = sum(1 for r in reports if not r.skipped)
    print(f"{done}/{len(reports)} waves completed -> {args.out}")
    return 0


def _load_profiles(args):
    store = ObservationStore(args.store)
    rates = load_rate_table(args.rates) if args.rates else None
    query = ReplayQuery(
        domain=args.domain,
        date_from=_parse_date(args.date_from) if args.date_from else None,
        date_to=_parse_date(args.date_to) if args.date_to else None)
    profiles = analytics.profiles_from_observations(store.replay(query), rates)
    return store, profiles


def _write_report(args, kind: str, data) -> None:
    report = {"schema_version": REPORT_SCHEMA_VERSION, "kind": kind,
              "generated_at": time.time(), "params": {
                  "domain": args.domain, "from": args.date_from,
                  "to": args.date_to}, "data": data}
    text = json.dumps(report, indent=2, default=str)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(text)


def cmd_analyze(args) -> int:
    store, profiles = _load_profiles(args)
    if not profiles:
        print("no profiles matched", file=sys.stderr)
        return 1
    csv_rows: list[tuple] = []
    if args.mode == "summary":
        domains = sorted({p.domain for p in profiles})
        data = []
        for domain in domains:
            s = analytics.retailer_summary(domain, profiles)
            data.append({"domain": s.domain, "n_products": s.n_products,
                         "n_profiles": s.n_profiles,
                         "variation_extent": str(s.variation_extent),
                         "ratio_stats": {k: str(v)
                                         for k, v in s.ratio_stats.items()}})
        points = analytics.ratio_vs_price(profiles)
        csv_rows = [("min_price", "max_min_ratio")] + [
            (str(x), str(y)) for x, y in points]
    elif args.mode == "fit":
        data = []
        locations = sorted({o.vantage for p in profiles
                            for o in p.observations})
        domains = sorted({p.domain for p in profiles})
        for domain in domains:
            mine = [p for p in profiles if p.domain == domain]
            for location in locations:
                pairs = analytics.fit_pairs_for_location(mine, location)
                if len(pairs) < 5:
                    continue
                m = analytics.fit_variation_model(domain, location, pairs)
                data.append({"domain": m.domain, "location": m.location,
                             "a": m.a, "b": m.b, "residual": m.residual,
                             "class": m.klass, "degenerate": m.degenerate})
        csv_rows = [("domain", "location", "a", "b", "class")] + [
            (d["domain"], d["location"], d["a"], d["b"], d["class"])
            for d in data]
    elif args.mode == "grid":
        if not args.domain:
            print("grid needs --domain", file=sys.stderr)
            return 1
        grid = analytics.pairwise_grid(args.domain, profiles)
        data = {"locations": sorted({i for i, _ in grid}),
                "cells": {f"{i}|{j}": [[str(x), str(y)] for x, y in pts]
                          for (i, j), pts in grid.items()}}
        csv_rows = [("row", "col", "x", "y")] + [
            (i, j, str(x), str(y))
            for (i, j), pts in grid.items() for x, y in pts]
    elif args.mode == "locations":
        report = analytics.location_ratios(profiles)
        data = {"stats": {loc: {k: str(v) for k, v in st.items()}
                          for loc, st in report.stats.items()},
                "never_cheapest": report.never_cheapest}
        csv_rows = [("product", "location", "rho")] + [
            (r.product_uri, r.location, str(r.rho)) for r in report.ratios]
    elif args.mode == "thirdparty":
        snapshots: dict[str, list[str]] = {}
        for p in profiles:
            for obs in p.observations:
                if store.snapshots.exists(obs.snapshot_ref):
                    snapshots.setdefault(p.domain, []).append(
                        store.snapshots.get(obs.snapshot_ref))
        data = analytics.third_party_scan(snapshots)
        csv_rows = [("third_party", "fraction")] + [
            (tp, f) for tp, f in data.items()]
    else:
        raise SystemExit(f"unknown analyze mode {args.mode}")
    _write_report(args, args.mode, data)
    if args.csv_out and csv_rows:
        with open(args.csv_out, "w", newline="", encoding="utf-8") as f:
            csv.writer(f).writerows(csv_rows)
        print(f"wrote {args.csv_out}")
    return 0


def cmd_sim_serve(args) -> int:
    policies = sim.load_policies(args.policies)
    if not policies:
        print(f"no policy files in {args.policies}", file=sys.stderr)
        return 1
    fleet = sim.serve_fleet(policies, host=args.host, base_port=args.base_port)
    for domain in fleet.domains:
        print(f"{domain}: {fleet.url(domain)}")
    try:
        _wait_forever()
    finally:
        fleet.stop()
    return 0


def cmd_sim_rates(args) -> int:
    policies = sim.load_policies(args.policies)
    date = _parse_date(args.date) if args.date else dt.date.today()
    lines = sim.publish_rate_windows(policies, date)
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {len(lines)} rate windows to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_fx_verify(args) -> int:
    problems = validate_rate_file(args.rates, reference=args.reference)
    if problems:
        for p in problems:
            print(f"PROBLEM: {p}")
        return 1
    print("rate table ok")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pricescope")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the coordinator")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--agent-port", type=int, default=7710)
    p.add_argument("--api-port", type=int, default=7711)
    p.add_argument("--store", default="./store")
    p.add_argument("--rates", default=None)
    p.add_argument("--reference", default="USD")
    p.add_argument("--sync-window", type=float, default=5.0)
    p.add_argument("--go-lead", type=float, default=1.0)
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--rep-spacing", type=float, default=600.0)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("agent", help="run a vantage-point agent")
    p.add_argument("--id", required=True)
    p.add_argument("--country", default="")
    p.add_argument("--city", default="")
    p.add_argument("--coordinator", default="127.0.0.1:7710")
    p.add_argument("--politeness", type=float, default=2.0)
    p.add_argument("--deadline", type=float, default=20.0)
    p.set_defaults(func=cmd_agent)

    p = sub.add_parser("replay", help="stream stored observations as JSONL")
    p.add_argument("--store", default="./store")
    p.add_argument("--domain", default=None)
    p.add_argument("--product", default=None)
    p.add_argument("--vantage", default=None)
    p.add_argument("--from", dest="date_from", default=None)
    p.add_argument("--to", dest="date_to", default=None)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("crawl", help="crawl planning and execution")
    crawl_sub = p.add_subparsers(dest="crawl_command", required=True)
    cp = crawl_sub.add_parser("plan", help="sample a catalog into a plan")
    cp.add_argument("--domain", required=True)
    cp.add_argument("--catalog-file", required=True)
    cp.add_argument("--cap", type=int, default=100)
    cp.add_argument("--waves", type=int, default=7)
    cp.add_argument("--period", type=_parse_period, default=24 * 3600.0)
    cp.add_argument("--seed", type=int, default=0)
    cp.add_argument("--vantages", default=None,
                    help="comma-separated agent ids (default: all)")
    cp.add_argument("--out", required=True)
    cp.set_defaults(func=cmd_crawl_plan)
    cr = crawl_sub.add_parser("run", help="execute a saved plan")
    cr.add_argument("--plan", required=True)
    cr.add_argument("--store", default="./store")
    cr.add_argument("--rates", default=None)
    cr.add_argument("--host", default="127.0.0.1")
    cr.add_argument("--agent-port", type=int, default=7710)
    cr.add_argument("--go-lead", type=float, default=1.0)
    cr.add_argument("--wait-agents", type=int, default=2)
    cr.add_argument("--wait-timeout", type=float, default=60.0)
    cr.add_argument("--concurrency", type=int, default=4)
    cr.add_argument("--out", required=True)
    cr.set_defaults(func=cmd_crawl_run)

    p = sub.add_parser("analyze", help="compute variation reports")
    p.add_argument("mode", choices=["summary", "fit", "grid", "locations",
                                    "thirdparty"])
    p.add_argument("--store", default="./store")
    p.add_argument("--rates", default=None)
    p.add_argument("--domain", default=None)
    p.add_argument("--from", dest="date_from", default=None)
    p.add_argument("--to", dest="date_to", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--csv-out", default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sim", help="mock retailer fleet")
    sim_sub = p.add_subparsers(dest="sim_command", required=True)
    ss = sim_sub.add_parser("serve", help="serve policies as live endpoints")
    ss.add_argument("--policies", required=True)
    ss.add_argument("--host", default="127.0.0.1")
    ss.add_argument("--base-port", type=int, default=8200)
    ss.set_defaults(func=cmd_sim_serve)
    sr = sim_sub.add_parser("rates", help="publish rate windows for policies")
    sr.add_argument("--policies", required=True)
    sr.add_argument("--date", default=None)
    sr.add_argument("--out", default=None)
    sr.set_defaults(func=cmd_sim_rates)

    p = sub.add_parser("fx", help="rate table utilities")
    fx_sub = p.add_subparsers(dest="fx_command", required=True)
    fv = fx_sub.add_parser("verify", help="validate a rate table file")
    fv.add_argument("--rates", required=True)
    fv.add_argument("--reference", default="USD")
    fv.set_defaults(func=cmd_fx_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
