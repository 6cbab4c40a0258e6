"""Currency normalization with daily extreme-rate intervals.

Every observed price converts to an interval in the reference currency,
bounded by the day's lowest and highest quotes. A price pair counts as
genuine variation only when the intervals are strictly disjoint, so no
difference explainable by currency translation alone ever passes the gate.
Same-currency pairs compare exactly: the realized rate cancels out.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Sequence

# Displayed prices round to the cent; treat reference amounts closer than
# half a cent as equal.
EQUALITY_TOLERANCE = Decimal("0.005")


class FxError(Exception):
    pass


class DuplicateRecord(FxError):
    pass


class MissingReferenceCurrency(FxError):
    pass


class MissingRate(FxError):
    pass


@dataclass(frozen=True)
class RateWindow:
    """Daily low/high quotes for one currency pair."""

    date: dt.date
    base: str
    quote: str
    low: Decimal
    high: Decimal

    def __post_init__(self):
        if not (0 < self.low <= self.high):
            raise ValueError(f"bad rate window {self.low}..{self.high}")

    def inverse(self) -> "RateWindow":
        one = Decimal(1)
        return RateWindow(date=self.date, base=self.quote, quote=self.base,
                          low=one / self.high, high=one / self.low)


@dataclass(frozen=True)
class RefInterval:
    """Reference-currency bounds of one converted price."""

    lo: Decimal
    hi: Decimal

    def __post_init__(self):
        if not (0 < self.lo <= self.hi):
            raise ValueError(f"bad interval {self.lo}..{self.hi}")

    @property
    def midpoint(self) -> Decimal:
        return (self.lo + self.hi) / 2

    def scaled(self, k: Decimal) -> "RefInterval":
        return RefInterval(lo=self.lo * k, hi=self.hi * k)


@dataclass(frozen=True)
class GateVerdict:
    """Outcome of the currency gate for one set of observations.

    observed_gap and max_currency_gap describe the pair most in excess of
    its currency-explainable threshold; passed holds exactly when that pair
    (and hence some pair) shows variation beyond any in-window rate choice.
    """

    passed: bool
    observed_gap: Decimal
    max_currency_gap: Decimal


class RateTable:
    """Immutable lookup of daily rate windows, reference-currency centric."""

    def __init__(self, windows: Iterable[RateWindow], reference: str = "USD"):
        self.reference = reference.upper()
        self._windows: dict[tuple[str, str, dt.date], RateWindow] = {}
        seen_reference = False
        for w in windows:
            key = (w.base, w.quote, w.date)
            if key in self._windows:
                raise DuplicateRecord(f"duplicate rate record for {key}")
            self._windows[key] = w
            if self.reference in (w.base, w.quote):
                seen_reference = True
        if not seen_reference:
            raise MissingReferenceCurrency(
                f"no record involves reference currency {self.reference}")
        # synthesize missing inverse pairs
        for w in list(self._windows.values()):
            inv_key = (w.quote, w.base, w.date)
            if inv_key not in self._windows:
                self._windows[inv_key] = w.inverse()

    def currencies(self) -> set[str]:
        return {b for b, _, _ in self._windows} | {q for _, q, _ in self._windows}

    def window(self, base: str, quote: str, date: dt.date) -> RateWindow:
        """Direct window, or a conservative composition via the reference."""
        base, quote = base.upper(), quote.upper()
        if base == quote:
            one = Decimal(1)
            return RateWindow(date=date, base=base, quote=quote, low=one, high=one)
        direct = self._windows.get((base, quote, date))
        if direct is not None:
            return direct
        leg1 = self._windows.get((base, self.reference, date))
        leg2 = self._windows.get((self.reference, quote, date))
        if leg1 is not None and leg2 is not None:
            return RateWindow(date=date, base=base, quote=quote,
                              low=leg1.low * leg2.low, high=leg1.high * leg2.high)
        raise MissingRate(f"no rate for {base}->{quote} on {date.isoformat()}")


def parse_rate_records(lines: Iterable[str]) -> list[RateWindow]:
    """Parse "date,base,quote,low,high" records, one per line."""
    windows = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 5:
            raise FxError(f"malformed rate record on line {lineno}: {line!r}")
        date_s, base, quote, low_s, high_s = parts
        try:
            windows.append(RateWindow(
                date=dt.date.fromisoformat(date_s),
                base=base.upper(), quote=quote.upper(),
                low=Decimal(low_s), high=Decimal(high_s)))
        except (ValueError, ArithmeticError) as exc:
            raise FxError(f"bad rate record on line {lineno}: {exc}") from exc
    return windows


def load_rate_table(source: Iterable[str] | str | Path,
                    reference: str = "USD") -> RateTable:
    """Build a RateTable from a record stream or a file path."""
    if isinstance(source, (str, Path)):
        lines: Iterable[str] = Path(source).read_text(encoding="utf-8").splitlines()
    else:
        lines = source
    return RateTable(parse_rate_records(lines), reference=reference)


def to_reference_interval(amount: Decimal, currency: str, table: RateTable,
                          date: dt.date) -> RefInterval:
    """Convert an amount into the reference currency as an interval."""
    currency = currency.upper()
    if currency == table.reference:
        return RefInterval(lo=amount, hi=amount)
    w = table.window(currency, table.reference, date)
    return RefInterval(lo=amount * w.low, hi=amount * w.high)


def _ratio(num: Decimal, den: Decimal) -> Decimal:
    return num / den


@dataclass(frozen=True)
class _Converted:
    amount: Decimal
    currency: str
    interval: RefInterval


def gate_pairs(items: Sequence[_Converted]) -> GateVerdict:
    """Apply the strict-gap rule over all ordered pairs of converted prices.

    Pair selection and the passed flag use exact cross-multiplied Decimal
    comparisons; only the reported ratios involve division.
    """
    if len(items) < 2:
        raise ValueError("gate needs at least 2 observations")
    best: tuple[Decimal, Decimal] | None = None  # score as fraction num/den
    best_observed: tuple[Decimal, Decimal] | None = None
    best_threshold: tuple[Decimal, Decimal] | None = None
    for i, a in enumerate(items):
        for j, b in enumerate(items):
            if i == j:
                continue
            if a.currency == b.currency:
                # realized rate cancels: compare raw amounts exactly
                num, den = a.amount, b.amount
                observed = (a.amount, b.amount)
                threshold = (Decimal(1), Decimal(1))
            else:
                bound = b.interval.hi + EQUALITY_TOLERANCE
                num, den = a.interval.lo, bound
                observed = (a.interval.lo, b.interval.hi)
                threshold = (bound, b.interval.hi)
            if best is None or num * best[1] > best[0] * den:
                best = (num, den)
                best_observed, best_threshold = observed, threshold
    assert best is not None and best_observed and best_threshold
    return GateVerdict(passed=best[0] > best[1],
                       observed_gap=_ratio(*best_observed),
                       max_currency_gap=_ratio(*best_threshold))


def pessimistic_pair_ratio(a: _Converted, b: _Converted) -> Decimal:
    """Worst-case ratio of a over b given any in-window rates (floored at 1)."""
    if a.currency == b.currency:
        r = _ratio(a.amount, b.amount)
    else:
        r = _ratio(a.interval.lo, b.interval.hi)
    return max(Decimal(1), r)


def pair_is_genuine(a: _Converted, b: _Converted) -> bool:
    """True when a is higher than b beyond any currency-translation reading."""
    if a.currency == b.currency:
        return a.amount > b.amount
    return a.interval.lo > b.interval.hi + EQUALITY_TOLERANCE


def convert(amount: Decimal, currency: str, table: RateTable,
            date: dt.date) -> _Converted:
    return _Converted(amount=amount, currency=currency.upper(),
                      interval=to_reference_interval(amount, currency, table, date))


def currency_gate(prices: Sequence[tuple[Decimal, str]], table: RateTable,
                  date: dt.date) -> GateVerdict:
    """Gate verdict for same-wave prices given as (amount, currency)."""
    items = [convert(amount, cur, table, date) for amount, cur in prices]
    return gate_pairs(items)


def validate_rate_file(path: str | Path, reference: str = "USD") -> list[str]:
    """Return human-readable problems found in a rate record file."""
    problems: list[str] = []
    try:
        windows = parse_rate_records(Path(path).read_text(encoding="utf-8").splitlines())
    except FxError as exc:
        return [str(exc)]
    seen: set[tuple[str, str, dt.date]] = set()
    reference = reference.upper()
    has_reference = False
    for w in windows:
        key = (w.base, w.quote, w.date)
        if key in seen:
            problems.append(f"duplicate record for {w.base}->{w.quote} on {w.date}")
        seen.add(key)
        if reference in (w.base, w.quote):
            has_reference = True
    if not windows:
        problems.append("file contains no rate records")
    elif not has_reference:
        problems.append(f"reference currency {reference} never appears")
    for w in windows:
        inv = (w.quote, w.base, w.date)
        if inv in seen:
            other = next(x for x in windows
                         if (x.base, x.quote, x.date) == inv)
            prod_lo = w.low * other.low
            prod_hi = w.high * other.high
            if not (prod_lo <= 1 <= prod_hi):
                problems.append(
                    f"inconsistent inverse pair {w.base}<->{w.quote} on {w.date}")
    return problems
