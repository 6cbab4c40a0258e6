"""Variation statistics over replayed observations.

Everything here is a pure function of observation streams: per-product
max/min ratios (pessimistic against the currency gate), per-retailer extent
and magnitude summaries, per-location ratios and never-cheapest flags,
multiplicative/additive model fits, third-party presence, and persona
comparisons.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal
from typing import Iterable, Mapping, Sequence
from urllib.parse import urlsplit

from . import fx
from .extract import Money, canonical_format
from .pagedom import parse_document
from .protocol import PersonaProfile, QuorumFailure
from .store import PriceObservation

MULTIPLICATIVE = "multiplicative"
ADDITIVE = "additive"
MIXED = "mixed"
FLAT = "flat"

# |a-1| below this is "no factor"; |b| below this is "no surcharge"
FACTOR_THRESHOLD = 0.01
SURCHARGE_THRESHOLD = 0.5


class AnalyticsError(Exception):
    pass


class InsufficientObservations(AnalyticsError):
    pass


class InsufficientPairs(AnalyticsError):
    pass


# -- quantiles ---------------------------------------------------------------

def quantile(values: Sequence[Decimal], q: Decimal | str | float) -> Decimal:
    """Linear interpolation between closest ranks, exact in Decimal."""
    if not values:
        raise ValueError("quantile of empty sequence")
    q = Decimal(str(q))
    if not 0 <= q <= 1:
        raise ValueError(f"quantile {q} outside [0, 1]")
    xs = sorted(values)
    pos = q * (len(xs) - 1)
    lower = int(pos)
    frac = pos - lower
    if frac == 0:
        return +xs[lower]
    return xs[lower] + frac * (xs[lower + 1] - xs[lower])


def ratio_stats(ratios: Sequence[Decimal]) -> dict[str, Decimal]:
    return {
        "min": min(ratios),
        "q25": quantile(ratios, "0.25"),
        "median": quantile(ratios, "0.5"),
        "q75": quantile(ratios, "0.75"),
        "max": max(ratios),
    }


# -- product profiles --------------------------------------------------------

@dataclass(frozen=True)
class ProductProfile:
    """All gated observations for one product in one wave."""

    product_uri: str
    domain: str
    wave: tuple[str, int]  # (check_id, rep)
    observations: tuple[PriceObservation, ...]
    intervals: tuple[fx.RefInterval, ...]  # aligned with observations
    excluded: tuple[tuple[str, str], ...]  # (vantage, reason), never deleted
    min_price: fx.RefInterval
    min_vantage: str
    max_min_ratio: Decimal
    gate: fx.GateVerdict

    def midpoints(self) -> dict[str, Decimal]:
        return {o.vantage: i.midpoint
                for o, i in zip(self.observations, self.intervals)}


def _convert_all(observations: Sequence[PriceObservation],
                 rates: fx.RateTable | None):
    converted = []
    excluded = []
    if rates is None:
        currencies = [o.money.currency for o in observations]
        modal = max(sorted(set(currencies)), key=currencies.count)
        for o in observations:
            if o.money.currency != modal:
                excluded.append((o.vantage, "no rate table for "
                                 f"{o.money.currency}->{modal}"))
            else:
                interval = fx.RefInterval(lo=o.money.amount, hi=o.money.amount)
                converted.append((o, fx._Converted(
                    amount=o.money.amount, currency=modal, interval=interval)))
        return converted, excluded
    for o in observations:
        try:
            converted.append((o, fx.convert(o.money.amount, o.money.currency,
                                            rates, o.date())))
        except fx.MissingRate as exc:
            excluded.append((o.vantage, str(exc)))
    return converted, excluded


def product_profile(observations: Sequence[PriceObservation],
                    rates: fx.RateTable | None) -> ProductProfile:
    """Profile one product-wave: pessimistic max/min ratio plus gate verdict.

    The ratio is the worst case over genuine pairs only, so it can never
    overstate variation relative to the gate; with no genuine pair it is 1.
    """
    if len(observations) < 2:
        raise InsufficientObservations(
            f"need >= 2 observations, have {len(observations)}")
    converted, excluded = _convert_all(observations, rates)
    if len(converted) < 2:
        raise InsufficientObservations(
            f"only {len(converted)} convertible observations "
            f"(excluded: {[v for v, _ in excluded]})")
    items = [c for _, c in converted]
    gate = fx.gate_pairs(items)
    one = Decimal(1)
    ratio = one
    for i, a in enumerate(items):
        for j, b in enumerate(items):
            if i != j and fx.pair_is_genuine(a, b):
                r = fx.pessimistic_pair_ratio(a, b)
                if r > ratio:
                    ratio = r
    min_obs, min_conv = min(
        converted, key=lambda pair: (pair[1].interval.midpoint,
                                     pair[1].interval.lo, pair[0].vantage))
    first = observations[0]
    return ProductProfile(
        product_uri=first.product_uri, domain=first.domain,
        wave=first.wave_key,
        observations=tuple(o for o, _ in converted),
        intervals=tuple(c.interval for _, c in converted),
        excluded=tuple(excluded),
        min_price=min_conv.interval, min_vantage=min_obs.vantage,
        max_min_ratio=ratio, gate=gate)


def group_waves(observations: Iterable[PriceObservation],
                ) -> dict[tuple[str, str, int], list[PriceObservation]]:
    """Group a replay stream by (product, wave); one profile per wave."""
    groups: dict[tuple[str, str, int], list[PriceObservation]] = {}
    for obs in observations:
        key = (obs.product_uri, obs.check_id, obs.rep)
        groups.setdefault(key, []).append(obs)
    return groups


def profiles_from_observations(observations: Iterable[PriceObservation],
                               rates: fx.RateTable | None,
                               ) -> list[ProductProfile]:
    profiles = []
    for group in group_waves(observations).values():
        try:
            profiles.append(product_profile(group, rates))
        except InsufficientObservations:
            continue  # single-observation waves are rejected, not deleted
    return profiles


# -- retailer summaries --------------------------------------------------------

@dataclass(frozen=True)
class RetailerSummary:
    domain: str
    n_products: int
    n_profiles: int
    variation_extent: Decimal  # fraction of wave-profiles with gate passed
    ratio_stats: dict[str, Decimal]


def retailer_summary(domain: str,
                     profiles: Sequence[ProductProfile]) -> RetailerSummary:
    mine = [p for p in profiles if p.domain == domain]
    if not mine:
        raise AnalyticsError(f"no profiles for domain {domain!r}")
    passed = sum(1 for p in mine if p.gate.passed)
    ratios = [p.max_min_ratio for p in mine]
    return RetailerSummary(
        domain=domain,
        n_products=len({p.product_uri for p in mine}),
        n_profiles=len(mine),
        variation_extent=Decimal(passed) / Decimal(len(mine)),
        ratio_stats=ratio_stats(ratios))


def ratio_vs_price(profiles: Sequence[ProductProfile],
                   ) -> list[tuple[Decimal, Decimal]]:
    """One (min price midpoint, max/min ratio) point per product-wave."""
    return [(p.min_price.midpoint, p.max_min_ratio) for p in profiles]


def band_maxima(points: Sequence[tuple[Decimal, Decimal]],
                edges: Sequence[Decimal]) -> list[Decimal | None]:
    """Max ratio per price band [edges[i], edges[i+1]); None if band empty."""
    out: list[Decimal | None] = [None] * (len(edges) - 1)
    for price, ratio in points:
        for i in range(len(edges) - 1):
            if edges[i] <= price < edges[i + 1]:
                if out[i] is None or ratio > out[i]:
                    out[i] = ratio
                break
    return out


# -- model fitting -------------------------------------------------------------

@dataclass(frozen=True)
class VariationModel:
    """Least-squares relation price_at_location = a * min_price + b."""

    domain: str
    location: str
    a: float
    b: float
    residual: float  # RMS relative error of the fit
    klass: str
    degenerate: bool = False


def classify(a: float, b: float) -> str:
    factor = abs(a - 1.0)
    surcharge = abs(b)
    if factor < FACTOR_THRESHOLD and surcharge < SURCHARGE_THRESHOLD:
        return FLAT
    if factor < FACTOR_THRESHOLD and surcharge >= SURCHARGE_THRESHOLD:
        return ADDITIVE
    if factor > FACTOR_THRESHOLD and surcharge < SURCHARGE_THRESHOLD:
        return MULTIPLICATIVE
    return MIXED


def fit_variation_model(domain: str, location: str,
                        pairs: Sequence[tuple[float, float]]) -> VariationModel:
    if len(pairs) < 5:
        raise InsufficientPairs(f"need >= 5 pairs, have {len(pairs)}")
    xs = [float(x) for x, _ in pairs]
    ys = [float(y) for _, y in pairs]
    if any(x <= 0 for x in xs):
        raise ValueError("min prices must be positive")
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    if sxx == 0.0:
        # all min prices equal: slope/intercept split is unidentifiable
        return VariationModel(domain=domain, location=location, a=0.0, b=my,
                              residual=_rms_relative(xs, ys, 0.0, my),
                              klass=MIXED, degenerate=True)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    a = sxy / sxx
    b = my - a * mx
    return VariationModel(domain=domain, location=location, a=a, b=b,
                          residual=_rms_relative(xs, ys, a, b),
                          klass=classify(a, b))


def _rms_relative(xs, ys, a, b) -> float:
    err = [((a * x + b) - y) / y for x, y in zip(xs, ys)]
    return math.sqrt(sum(e * e for e in err) / len(err))


def fit_pairs_for_location(profiles: Sequence[ProductProfile],
                           location: str) -> list[tuple[float, float]]:
    pairs = []
    for p in profiles:
        mids = p.midpoints()
        if location in mids:
            pairs.append((float(p.min_price.midpoint), float(mids[location])))
    return pairs


# -- location attribution --------------------------------------------------------

@dataclass(frozen=True)
class LocationRatio:
    product_uri: str
    wave: tuple[str, int]
    location: str
    rho: Decimal


@dataclass(frozen=True)
class LocationReport:
    ratios: tuple[LocationRatio, ...]
    stats: dict[str, dict[str, Decimal]]
    never_cheapest: dict[str, list[str]]  # domain -> locations


def location_ratios(profiles: Sequence[ProductProfile]) -> LocationReport:
    """Per-location price ratios over the per-product minimum.

    rho is 1 exactly at the argmin location (all-tied products give 1
    everywhere); never_cheapest flags locations with rho > 1 on every
    product-wave of a domain.
    """
    ratios: list[LocationRatio] = []
    by_location: dict[str, list[Decimal]] = {}
    cheapest_somewhere: dict[str, set[str]] = {}
    seen_locations: dict[str, set[str]] = {}
    for p in profiles:
        mids = p.midpoints()
        vmin = min(mids.values())
        for location, v in sorted(mids.items()):
            rho = v / vmin
            ratios.append(LocationRatio(product_uri=p.product_uri,
                                        wave=p.wave, location=location,
                                        rho=rho))
            by_location.setdefault(location, []).append(rho)
            seen_locations.setdefault(p.domain, set()).add(location)
            if rho == 1:
                cheapest_somewhere.setdefault(p.domain, set()).add(location)
    stats = {loc: ratio_stats(rs) for loc, rs in by_location.items()}
    never_cheapest = {
        domain: sorted(locs - cheapest_somewhere.get(domain, set()))
        for domain, locs in seen_locations.items()}
    never_cheapest = {d: ls for d, ls in never_cheapest.items() if ls}
    return LocationReport(ratios=tuple(ratios), stats=stats,
                          never_cheapest=never_cheapest)


def pairwise_grid(domain: str, profiles: Sequence[ProductProfile],
                  locations: Sequence[str] | None = None,
                  ) -> dict[tuple[str, str], list[tuple[Decimal, Decimal]]]:
    """Grid cell (i, j) holds (rho_j, rho_i) per product observed at both."""
    mine = [p for p in profiles if p.domain == domain]
    rho_maps: list[dict[str, Decimal]] = []
    seen: set[str] = set()
    for p in mine:
        mids = p.midpoints()
        vmin = min(mids.values())
        rho_maps.append({loc: v / vmin for loc, v in mids.items()})
        seen.update(mids)
    locs = list(locations) if locations is not None else sorted(seen)
    if len(locs) < 2:
        raise AnalyticsError("pairwise grid needs >= 2 locations")
    grid: dict[tuple[str, str], list[tuple[Decimal, Decimal]]] = {
        (i, j): [] for i in locs for j in locs if i != j}
    for rhos in rho_maps:
        for i in locs:
            for j in locs:
                if i != j and i in rhos and j in rhos:
                    grid[(i, j)].append((rhos[j], rhos[i]))
    return grid


# -- third parties ----------------------------------------------------------------

_TWO_LEVEL_SUFFIXES = {
    "co.uk", "org.uk", "ac.uk", "com.au", "net.au", "com.br", "co.jp",
    "co.nz", "co.za", "com.mx", "com.ar", "co.in", "com.sg", "com.tr",
    "co.kr", "com.cn",
}


def registrable_domain(host: str) -> str:
    host = host.strip().lower().rstrip(".")
    host = host.rsplit(":", 1)[0] if ":" in host and host.count(":") == 1 else host
    labels = host.split(".")
    if len(labels) >= 3 and ".".join(labels[-2:]) in _TWO_LEVEL_SUFFIXES:
        return ".".join(labels[-3:])
    if len(labels) >= 2:
        return ".".join(labels[-2:])
    return host


def third_party_scan(snapshots_by_domain: Mapping[str, Sequence[str]],
                     ) -> dict[str, float]:
    """Fraction of retailers embedding each third-party registrable domain.

    External script/img/iframe references count; same registrable domain
    (any port) is first-party.
    """
    present: dict[str, set[str]] = {}
    for retailer, snapshots in snapshots_by_domain.items():
        own = registrable_domain(retailer)
        for snapshot in snapshots:
            doc = parse_document(snapshot)
            for el in doc.iter_elements():
                if el.tag not in ("script", "img", "iframe"):
                    continue
                src = el.attrs.get("src", "")
                host = urlsplit(src).hostname
                if not host:
                    continue  # relative reference: same site
                third = registrable_domain(host)
                if third != own:
                    present.setdefault(third, set()).add(retailer)
    total = len(snapshots_by_domain)
    return {third: len(retailers) / total
            for third, retailers in sorted(present.items())}


# -- persona comparison --------------------------------------------------------------

@dataclass(frozen=True)
class PersonaObservation:
    profile: PersonaProfile
    money: Money | None
    error: str | None = None


def persona_compare(product_uri: str, vantage: str,
                    results: Mapping[str, PersonaObservation]) -> dict:
    """Compare same-vantage, same-window prices across personas.

    Same currency is expected, so comparison is exact; differing pairs are
    attributed to the profile fields that differ (names only, never values).
    """
    priced = {name: r for name, r in results.items() if r.money is not None}
    if len(priced) < 2:
        raise QuorumFailure(
            f"need >= 2 persona prices, have {len(priced)}")
    prices = {name: canonical_format(r.money) for name, r in priced.items()}
    failures = {name: r.error or "no price"
                for name, r in results.items() if r.money is None}
    differences = []
    names = sorted(priced)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            ra, rb = priced[a], priced[b]
            if ra.money == rb.money:
                continue
            differences.append({
                "personas": [a, b],
                "prices": [prices[a], prices[b]],
                "fields": _differing_fields(ra.profile, rb.profile),
                "currency_mismatch": ra.money.currency != rb.money.currency,
            })
    return {
        "product_uri": product_uri,
        "vantage": vantage,
        "prices": prices,
        "failures": failures,
        "differences": differences,
        "any_difference": bool(differences),
    }


def _differing_fields(a: PersonaProfile, b: PersonaProfile) -> list[str]:
    fields = []
    ha, hb = a.headers_dict(), b.headers_dict()
    for name in sorted(set(ha) | set(hb)):
        if ha.get(name) != hb.get(name):
            fields.append(f"header:{name}")
    ca, cb = a.cookies_dict(), b.cookies_dict()
    for name in sorted(set(ca) | set(cb)):
        if ca.get(name) != cb.get(name):
            fields.append(f"cookie:{name}")
    if a.logged_in_as != b.logged_in_as:
        fields.append("logged_in_as")
    return fields
