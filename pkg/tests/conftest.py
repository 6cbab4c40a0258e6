import pytest

from pricescope.agent import AgentConfig, VantageAgent
from pricescope.coordinator import Coordinator, CoordinatorConfig
from pricescope.extract import DOM_PATH, PriceSelector
from pricescope.store import ObservationStore

PRICE_PATH = "body/div[1]/span[1]"


def fake_page(price_text: str, lang: str = "en") -> str:
    return (f'<html lang="{lang}"><body><div class="product">'
            f"<span>{price_text}</span></div></body></html>")


def price_selector(expression: str = PRICE_PATH) -> PriceSelector:
    return PriceSelector(kind=DOM_PATH, expression=expression)


def const_fetcher(price_text: str, lang: str = "en"):
    def fetch(uri, headers, cookies, deadline):
        return 200, fake_page(price_text, lang)
    return fetch


class NetHarness:
    """Coordinator plus programmatically spawned agents, fast defaults."""

    def __init__(self, store_dir, rates=None, **config_overrides):
        defaults = dict(go_lead=0.05, ready_timeout=3.0, fetch_deadline=3.0,
                        repetitions=1, rep_spacing=0.0)
        defaults.update(config_overrides)
        self.store = ObservationStore(store_dir)
        self.coordinator = Coordinator(self.store, rates=rates,
                                       config=CoordinatorConfig(**defaults))
        self.coordinator.start()
        self.agents: list[VantageAgent] = []

    def spawn_agent(self, agent_id, fetcher, country="", politeness=0.0,
                    clock_offset=0.0, handling_delay=None,
                    fetch_deadline=3.0) -> VantageAgent:
        host, port = self.coordinator.agent_address
        agent = VantageAgent(AgentConfig(
            agent_id=agent_id, country=country, city=country,
            coordinator=(host, port), politeness_delay=politeness,
            clock_offset=clock_offset, handling_delay=handling_delay,
            fetch_deadline=fetch_deadline, fetcher=fetcher))
        agent.start()
        self.agents.append(agent)
        return agent

    def wait_registered(self):
        assert self.coordinator.wait_for_agents(len(self.agents), timeout=10)

    def stop(self):
        for agent in self.agents:
            agent.stop()
        self.coordinator.stop()


@pytest.fixture
def net(tmp_path):
    harness = NetHarness(tmp_path / "store")
    yield harness
    harness.stop()


@pytest.fixture
def net_factory(tmp_path):
    harnesses = []

    def build(rates=None, **overrides):
        harness = NetHarness(tmp_path / f"store{len(harnesses)}",
                             rates=rates, **overrides)
        harnesses.append(harness)
        return harness

    yield build
    for harness in harnesses:
        harness.stop()
