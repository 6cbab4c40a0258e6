"""Desk-scale verification harness: a live fleet, coordinator and one local
agent per simulated region, wired together on localhost.

This is how every pipeline claim gets checked against known ground truth
without geo-distributed infrastructure.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from pathlib import Path

from .agent import AgentConfig, VantageAgent
from .coordinator import Coordinator, CoordinatorConfig
from .fx import RateTable, load_rate_table
from .sim import Fleet, PricingPolicy, publish_rate_windows, region_fetcher, serve_fleet
from .store import ObservationStore


@dataclass
class DeskHarness:
    fleet: Fleet
    coordinator: Coordinator
    agents: list[VantageAgent]
    store: ObservationStore
    rates: RateTable | None

    def stop(self) -> None:
        for agent in self.agents:
            agent.stop()
        self.coordinator.stop()
        self.fleet.stop()


def start_desk_harness(policies: list[PricingPolicy],
                       agent_regions: dict[str, str],
                       store_dir: str | Path,
                       config: CoordinatorConfig | None = None,
                       rate_date: dt.date | None = None,
                       politeness: float = 0.0,
                       fetch_deadline: float = 10.0,
                       with_api: bool = False) -> DeskHarness:
    """Start fleet + coordinator + one agent per (agent id -> region)."""
    fleet = serve_fleet(policies)
    rate_lines = publish_rate_windows(policies, rate_date or dt.date.today())
    rates = load_rate_table(rate_lines) if rate_lines else None
    store = ObservationStore(store_dir)
    coordinator = Coordinator(store, rates=rates,
                              config=config or CoordinatorConfig(go_lead=0.05))
    coordinator.start(with_api=with_api)
    host, port = coordinator.agent_address
    agents = []
    for agent_id, region in agent_regions.items():
        agent = VantageAgent(AgentConfig(
            agent_id=agent_id, country=region, city=region,
            coordinator=(host, port), politeness_delay=politeness,
            fetch_deadline=fetch_deadline, fetcher=region_fetcher(region)))
        agent.start()
        agents.append(agent)
    if not coordinator.wait_for_agents(len(agents), timeout=10):
        raise RuntimeError("agents failed to register")
    return DeskHarness(fleet=fleet, coordinator=coordinator, agents=agents,
                       store=store, rates=rates)
