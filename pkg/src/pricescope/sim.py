"""Mock retailer fleet serving product pages under known pricing policies.

Every behaviour the pipeline must detect is injectable here: per-region
multipliers and surcharges, localized display currencies with fixed
conversion rates, persona- and login-keyed overrides, and sticky A/B noise.
Pages embed the price at a deterministic node per template, plus decoy
prices so naive symbol-grepping extractors fail.
"""
from __future__ import annotations

import datetime as dt
import hashlib
import json
import random
import threading
import uuid
from collections import deque
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .currencies import decimal_style
from .extract import Money, PriceSelector, DOM_PATH

TEMPLATE_CLASSIC = "classic"
TEMPLATE_MINIMAL = "minimal"

# dom-path of the real price node per page template (canonical explicit
# indices, the same shape highlight capture emits)
TEMPLATE_PRICE_PATHS = {
    TEMPLATE_CLASSIC: "body[1]/div[2]/span[1]",
    TEMPLATE_MINIMAL: "body[1]/div[1]/span[1]",
}

ZERO_DECIMAL_CURRENCIES = {"JPY", "KRW"}

_DISPLAY_SYMBOLS = {
    "USD": "$", "EUR": "€", "GBP": "£", "BRL": "R$", "JPY": "¥",
}

# locales whose grouping separator is a non-breaking space
_SPACE_GROUPING_LANGS = {"fi", "fr", "sv", "pl", "cs", "nb", "no", "ru", "uk"}


class SimError(Exception):
    pass


class UnknownProduct(SimError):
    pass


class UnknownRegion(SimError):
    pass


class BindFailure(SimError):
    pass


@dataclass(frozen=True)
class CatalogItem:
    product_id: str
    name: str
    base: Decimal
    currency: str = "USD"


@dataclass(frozen=True)
class RegionRule:
    multiplier: Decimal = Decimal(1)
    surcharge: Decimal = Decimal(0)
    display_currency: str = "USD"
    locale: str = "en-US"

    def __post_init__(self):
        if self.multiplier <= 0:
            raise ValueError("multiplier must be positive")


@dataclass(frozen=True)
class PersonaRule:
    """Price override keyed on a cookie or header name=value predicate."""

    cookie: str | None = None       # "tier=affluent"
    header: str | None = None       # "X-Shopper-Tier: gold"
    multiplier: Decimal = Decimal(1)
    surcharge: Decimal = Decimal(0)

    def matches(self, headers: dict[str, str], cookies: dict[str, str]) -> bool:
        if self.cookie is None and self.header is None:
            return False
        if self.cookie is not None:
            name, _, value = self.cookie.partition("=")
            if cookies.get(name) != value:
                return False
        if self.header is not None:
            name, _, value = self.header.partition(":")
            lowered = {k.lower(): v for k, v in headers.items()}
            if lowered.get(name.strip().lower(), "").strip() != value.strip():
                return False
        return True


@dataclass
class PricingPolicy:
    domain: str
    catalog: list[CatalogItem]
    region_rules: dict[str, RegionRule]
    persona_rules: list[PersonaRule] = field(default_factory=list)
    ab_probability: float = 0.0
    ab_amplitude: Decimal = Decimal("0.05")
    template: str = TEMPLATE_CLASSIC
    seed: int = 0
    default_region: str = ""
    fx_rates: dict[str, Decimal] = field(default_factory=dict)
    third_parties: list[str] = field(default_factory=list)
    region_networks: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.ab_probability <= 1:
            raise ValueError("ab probability must be in [0, 1]")
        if self.ab_amplitude < 0:
            raise ValueError("ab amplitude must be >= 0")
        if self.template not in TEMPLATE_PRICE_PATHS:
            raise ValueError(f"unknown template {self.template!r}")
        if not self.default_region:
            self.default_region = next(iter(self.region_rules))
        self._items = {item.product_id: item for item in self.catalog}

    def item(self, product_id: str) -> CatalogItem:
        try:
            return self._items[product_id]
        except KeyError:
            raise UnknownProduct(
                f"{product_id!r} not in {self.domain} catalog") from None

    def selector(self) -> PriceSelector:
        return PriceSelector(kind=DOM_PATH,
                             expression=TEMPLATE_PRICE_PATHS[self.template])

    def rate(self, from_currency: str, to_currency: str) -> Decimal:
        if from_currency == to_currency:
            return Decimal(1)
        direct = self.fx_rates.get(f"{from_currency}/{to_currency}")
        if direct is not None:
            return direct
        inverse = self.fx_rates.get(f"{to_currency}/{from_currency}")
        if inverse is not None:
            return Decimal(1) / inverse
        raise SimError(f"no sim rate {from_currency}->{to_currency} "
                       f"for {self.domain}")


def session_rng(policy: PricingPolicy, session_id: str) -> random.Random:
    digest = hashlib.sha256(f"{policy.seed}:{session_id}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def price_for(policy: PricingPolicy, product_id: str, region: str,
              headers: dict[str, str] | None = None,
              cookies: dict[str, str] | None = None,
              rng: random.Random | None = None) -> Money:
    """Ground-truth price: persona override, then region rule, then display
    conversion, then (optionally) the session's sticky A/B arm."""
    item = policy.item(product_id)
    rule = policy.region_rules.get(region)
    if rule is None:
        raise UnknownRegion(f"{region!r} not priced by {policy.domain}")
    base = item.base
    for persona in policy.persona_rules:
        if persona.matches(headers or {}, cookies or {}):
            base = base * persona.multiplier + persona.surcharge
            break
    price = base * rule.multiplier + rule.surcharge
    price = price * policy.rate(item.currency, rule.display_currency)
    if rng is not None and policy.ab_probability > 0:
        if rng.random() < policy.ab_probability:
            arm = 1 if rng.random() < 0.5 else -1
            price = price * (1 + arm * policy.ab_amplitude)
    places = Decimal(1) if rule.display_currency in ZERO_DECIMAL_CURRENCIES \
        else Decimal("0.01")
    return Money(price.quantize(places, rounding=ROUND_HALF_UP),
                 rule.display_currency)


# -- locale-aware rendering ---------------------------------------------------

def format_price_text(money: Money, locale: str) -> str:
    """Render an amount the way the locale's shoppers see it."""
    amount = money.amount
    if money.currency in ZERO_DECIMAL_CURRENCIES:
        whole, frac = str(int(amount.to_integral_value(ROUND_HALF_UP))), ""
    else:
        q = amount.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
        whole, frac = divmod_str(q)
    style = decimal_style(locale) or "period"
    lang = locale.split("-")[0].lower()
    if style == "comma":
        group = " " if lang in _SPACE_GROUPING_LANGS else "."
        decimal_sep = ","
    else:
        group = ","
        decimal_sep = "."
    grouped = _group_digits(whole, group)
    number = grouped + (decimal_sep + frac if frac else "")
    symbol = _DISPLAY_SYMBOLS.get(money.currency)
    if symbol is None:
        return f"{money.currency} {number}"
    if style == "comma":
        return f"{number} {symbol}"
    return f"{symbol}{number}"


def divmod_str(q: Decimal) -> tuple[str, str]:
    text = str(q)
    if "." in text:
        whole, frac = text.split(".")
        return whole, frac
    return text, ""


def _group_digits(digits: str, sep: str) -> str:
    out = []
    for i, ch in enumerate(reversed(digits)):
        if i and i % 3 == 0:
            out.append(sep)
        out.append(ch)
    return "".join(reversed(out))


def render_product_page(policy: PricingPolicy, item: CatalogItem,
                        money: Money, region: str) -> str:
    rule = policy.region_rules[region]
    lang = rule.locale.split("-")[0].lower()
    price_text = format_price_text(money, rule.locale)
    recs = _recommendations(policy, item, region)
    rec_divs = "\n".join(
        f'<div><a href="/product/{r.product_id}">{r.name}</a> '
        f'<span>{format_price_text(p, rule.locale)}</span></div>'
        for r, p in recs)
    promo = format_price_text(Money(Decimal("5.00"), money.currency)
                              if money.currency not in ZERO_DECIMAL_CURRENCIES
                              else Money(Decimal(500), money.currency),
                              rule.locale)
    trackers = "\n".join(f'<script src="{url}"></script>'
                         for url in policy.third_parties)
    if policy.template == TEMPLATE_CLASSIC:
        return f"""<!DOCTYPE html>
<html lang="{lang}">
<head><meta charset="utf-8"><title>{item.name} - {policy.domain}</title></head>
<body>
<div class="masthead">
  <a href="/">{policy.domain}</a>
  <span class="promo">Gift cards from {promo}</span>
</div>
<div class="product">
  <h1>{item.name}</h1>
  <span class="price">{price_text}</span>
  <p>Ships from our {region} warehouse.</p>
</div>
<div class="recommendations">
  <h2>You may also like</h2>
  {rec_divs}
</div>
{trackers}
</body>
</html>
"""
    return f"""<!DOCTYPE html>
<html lang="{lang}">
<head><meta charset="utf-8"><title>{item.name} - {policy.domain}</title></head>
<body>
<div class="product">
  <h1>{item.name}</h1>
  <span class="price">{price_text}</span>
</div>
<div class="recommendations">
  {rec_divs}
</div>
{trackers}
</body>
</html>
"""


def _recommendations(policy: PricingPolicy, item: CatalogItem,
                     region: str) -> list[tuple[CatalogItem, Money]]:
    others = [c for c in policy.catalog if c.product_id != item.product_id]
    picks = others[:2]
    return [(r, price_for(policy, r.product_id, region)) for r in picks]


def render_listing_page(policy: PricingPolicy) -> str:
    links = "\n".join(
        f'<li><a href="/product/{item.product_id}">{item.name}</a></li>'
        for item in policy.catalog)
    return f"""<!DOCTYPE html>
<html lang="en">
<head><meta charset="utf-8"><title>{policy.domain}</title></head>
<body>
<h1>{policy.domain} catalog</h1>
<ul>
{links}
</ul>
</body>
</html>
"""


# -- HTTP fleet ----------------------------------------------------------------

class _SimHandler(BaseHTTPRequestHandler):
    policy: PricingPolicy = None   # bound per server
    request_log: deque = None
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        pass

    def _cookies(self) -> dict[str, str]:
        cookies = {}
        for header in self.headers.get_all("Cookie") or []:
            for part in header.split(";"):
                name, _, value = part.strip().partition("=")
                if name:
                    cookies[name] = value
        return cookies

    def _resolve_region(self) -> str:
        explicit = self.headers.get("X-Sim-Region")
        if explicit:
            if explicit not in self.policy.region_rules:
                raise UnknownRegion(explicit)
            return explicit
        client = self.client_address[0]
        for prefix, region in self.policy.region_networks.items():
            if client.startswith(prefix):
                return region
        return self.policy.default_region

    def _respond(self, code: int, body: str,
                 set_cookie: str | None = None) -> None:
        data = body.encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "text/html; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        if set_cookie:
            self.send_header("Set-Cookie", set_cookie)
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.request_log is not None:
            self.request_log.append({
                "path": self.path,
                "headers": {k: v for k, v in self.headers.items()},
                "cookies": self._cookies(),
            })
        try:
            if self.path in ("/", "/products", "/products/"):
                self._respond(200, render_listing_page(self.policy))
                return
            if self.path.startswith("/product/"):
                product_id = self.path.rsplit("/", 1)[-1]
                cookies = self._cookies()
                region = self._resolve_region()
                session = cookies.get("simsession")
                set_cookie = None
                if session is None:
                    session = uuid.uuid4().hex
                    set_cookie = f"simsession={session}; Path=/"
                money = price_for(
                    self.policy, product_id, region,
                    headers={k: v for k, v in self.headers.items()},
                    cookies=cookies,
                    rng=session_rng(self.policy, session))
                item = self.policy.item(product_id)
                page = render_product_page(self.policy, item, money, region)
                self._respond(200, page, set_cookie=set_cookie)
                return
            self._respond(404, "<html><body>not found</body></html>")
        except UnknownProduct:
            self._respond(404, "<html><body>no such product</body></html>")
        except UnknownRegion as exc:
            self._respond(400, f"<html><body>unknown region {exc}</body></html>")
        except SimError as exc:
            self._respond(500, f"<html><body>{exc}</body></html>")


class _FleetServer(ThreadingHTTPServer):
    request_queue_size = 128
    daemon_threads = True

    def handle_error(self, request, client_address):
        import sys
        exc = sys.exc_info()[1]
        if isinstance(exc, (BrokenPipeError, ConnectionResetError)):
            return  # client gave up mid-response
        super().handle_error(request, client_address)


@dataclass
class RetailerEndpoint:
    policy: PricingPolicy
    server: ThreadingHTTPServer
    thread: threading.Thread
    request_log: deque

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"


class Fleet:
    """Running set of simulated retailer endpoints."""

    def __init__(self, endpoints: dict[str, RetailerEndpoint]):
        self._endpoints = endpoints

    @property
    def domains(self) -> list[str]:
        return list(self._endpoints)

    def url(self, domain: str) -> str:
        return self._endpoints[domain].url

    def product_url(self, domain: str, product_id: str) -> str:
        return f"{self.url(domain)}/product/{product_id}"

    def listing_url(self, domain: str) -> str:
        return f"{self.url(domain)}/products"

    def policy(self, domain: str) -> PricingPolicy:
        return self._endpoints[domain].policy

    def request_log(self, domain: str) -> deque:
        return self._endpoints[domain].request_log

    def stop(self) -> None:
        for ep in self._endpoints.values():
            ep.server.shutdown()
            ep.server.server_close()


def serve_fleet(policies: list[PricingPolicy], host: str = "127.0.0.1",
                base_port: int = 0) -> Fleet:
    """Serve each policy at its own endpoint; ephemeral ports when
    base_port is 0."""
    domains = [p.domain for p in policies]
    if len(set(domains)) != len(domains):
        raise ValueError("duplicate policy domains")
    endpoints: dict[str, RetailerEndpoint] = {}
    for i, policy in enumerate(policies):
        port = base_port + i if base_port else 0
        log: deque = deque(maxlen=200)
        handler = type("BoundSimHandler", (_SimHandler,),
                       {"policy": policy, "request_log": log})
        try:
            server = _FleetServer((host, port), handler)
        except OSError as exc:
            for ep in endpoints.values():
                ep.server.shutdown()
                ep.server.server_close()
            raise BindFailure(f"cannot bind {host}:{port}: {exc}") from exc
        thread = threading.Thread(target=server.serve_forever,
                                  name=f"sim-{policy.domain}", daemon=True)
        thread.start()
        endpoints[policy.domain] = RetailerEndpoint(
            policy=policy, server=server, thread=thread, request_log=log)
    return Fleet(endpoints)


def region_fetcher(region: str, base=None):
    """Fetcher wrapper stamping the region test header on every request.

    Desk-scale stand-in for geo-distributed agents: the fleet resolves
    region from this header before any address-block lookup.
    """
    if base is None:
        from .agent import http_fetch
        base = http_fetch

    def fetch(uri: str, headers: dict, cookies: dict,
              deadline: float) -> tuple[int, str]:
        stamped = dict(headers)
        stamped["X-Sim-Region"] = region
        return base(uri, stamped, cookies, deadline)

    return fetch


# -- rate window publication ------------------------------------------------------

def publish_rate_windows(policies: list[PricingPolicy], date: dt.date,
                         spread: Decimal = Decimal("0.01")) -> list[str]:
    """Rate records bracketing every fixed sim rate, so pure currency
    localization can never pass the gate."""
    pairs: dict[tuple[str, str], list[Decimal]] = {}
    for policy in policies:
        for key, rate in policy.fx_rates.items():
            base, quote = key.split("/")
            pairs.setdefault((base, quote), []).append(rate)
    lines = []
    one = Decimal(1)
    for (base, quote), rates in sorted(pairs.items()):
        low = min(rates) * (one - spread)
        high = max(rates) * (one + spread)
        lines.append(f"{date.isoformat()},{base},{quote},{low},{high}")
    return lines


# -- policy files -------------------------------------------------------------------

def policy_to_dict(policy: PricingPolicy) -> dict:
    return {
        "domain": policy.domain,
        "template": policy.template,
        "seed": policy.seed,
        "default_region": policy.default_region,
        "catalog": [{"id": c.product_id, "name": c.name, "base": str(c.base),
                     "currency": c.currency} for c in policy.catalog],
        "regions": {name: {"multiplier": str(r.multiplier),
                           "surcharge": str(r.surcharge),
                           "display_currency": r.display_currency,
                           "locale": r.locale}
                    for name, r in policy.region_rules.items()},
        "persona_rules": [{"cookie": p.cookie, "header": p.header,
                           "multiplier": str(p.multiplier),
                           "surcharge": str(p.surcharge)}
                          for p in policy.persona_rules],
        "ab": {"probability": policy.ab_probability,
               "amplitude": str(policy.ab_amplitude)},
        "fx": {k: str(v) for k, v in policy.fx_rates.items()},
        "third_parties": list(policy.third_parties),
        "region_networks": dict(policy.region_networks),
    }


def policy_from_dict(data: dict) -> PricingPolicy:
    return PricingPolicy(
        domain=data["domain"],
        template=data.get("template", TEMPLATE_CLASSIC),
        seed=int(data.get("seed", 0)),
        default_region=data.get("default_region", ""),
        catalog=[CatalogItem(product_id=c["id"], name=c.get("name", c["id"]),
                             base=Decimal(c["base"]),
                             currency=c.get("currency", "USD"))
                 for c in data["catalog"]],
        region_rules={name: RegionRule(
            multiplier=Decimal(r.get("multiplier", "1")),
            surcharge=Decimal(r.get("surcharge", "0")),
            display_currency=r.get("display_currency", "USD"),
            locale=r.get("locale", "en-US"))
            for name, r in data["regions"].items()},
        persona_rules=[PersonaRule(
            cookie=p.get("cookie"), header=p.get("header"),
            multiplier=Decimal(p.get("multiplier", "1")),
            surcharge=Decimal(p.get("surcharge", "0")))
            for p in data.get("persona_rules", [])],
        ab_probability=float(data.get("ab", {}).get("probability", 0.0)),
        ab_amplitude=Decimal(data.get("ab", {}).get("amplitude", "0.05")),
        fx_rates={k: Decimal(v) for k, v in data.get("fx", {}).items()},
        third_parties=list(data.get("third_parties", [])),
        region_networks=dict(data.get("region_networks", {})),
    )


def load_policies(directory: str | Path) -> list[PricingPolicy]:
    policies = []
    for path in sorted(Path(directory).glob("*.json")):
        policies.append(policy_from_dict(
            json.loads(path.read_text(encoding="utf-8"))))
    return policies


def save_policy(policy: PricingPolicy, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{policy.domain.replace('/', '_')}.json"
    path.write_text(json.dumps(policy_to_dict(policy), indent=2),
                    encoding="utf-8")
    return path
