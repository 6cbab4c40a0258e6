"""Template-free price extraction and locale-aware price text parsing.

A recorded selector (element path or text anchor) locates the price node on
any later fetch of the page; the raw text is then parsed into an exact
decimal amount plus ISO currency. No per-retailer scraping templates.
"""
from __future__ import annotations

import re
import time
from dataclasses import dataclass, field
from decimal import Decimal, ROUND_HALF_UP

from .currencies import SymbolTable, decimal_style, load_table
from .pagedom import Document, normalize_ws, parse_document, parse_path, resolve_path

DOM_PATH = "dom-path"
TEXT_ANCHOR = "text-anchor"

ANCHOR_OFFSET_SEP = "@@"

_DEFAULT_TABLE = load_table()


class ExtractError(Exception):
    """Base class for extraction failures."""


class SelectorMiss(ExtractError):
    """The addressed node is absent (page layout changed)."""


class SelectorAmbiguous(ExtractError):
    """A text anchor matched more than one region."""


class UnparseablePrice(ExtractError):
    """No consistent numeric reading of the price text."""


class UnknownCurrency(ExtractError):
    """No currency symbol and no usable page context."""


@dataclass(frozen=True)
class PriceSelector:
    """User-recorded locator for a price node, evaluable on any fetch."""

    kind: str
    expression: str
    recorded_at: float = field(default_factory=time.time)

    def __post_init__(self):
        if self.kind not in (DOM_PATH, TEXT_ANCHOR):
            raise ValueError(f"unknown selector kind {self.kind!r}")
        if not self.expression.strip():
            raise ValueError("selector expression is empty")
        if self.kind == DOM_PATH:
            parse_path(self.expression)  # raises PathSyntaxError if malformed

    def to_json(self) -> dict:
        return {"kind": self.kind, "expression": self.expression,
                "recorded_at": self.recorded_at}

    @classmethod
    def from_json(cls, data: dict) -> "PriceSelector":
        return cls(kind=data["kind"], expression=data["expression"],
                   recorded_at=float(data.get("recorded_at", 0.0)))


@dataclass(frozen=True)
class Money:
    """Exact decimal amount in an ISO-4217 currency. Never a binary float."""

    amount: Decimal
    currency: str

    def __post_init__(self):
        amount = self.amount if isinstance(self.amount, Decimal) else Decimal(str(self.amount))
        if amount <= 0:
            raise ValueError(f"amount must be positive, got {amount}")
        exponent = amount.as_tuple().exponent
        if exponent < -4:
            raise ValueError(f"amount {amount} has more than 4 fraction digits")
        if exponent > -2:
            amount = amount.quantize(Decimal("0.01"))
        object.__setattr__(self, "amount", amount)
        object.__setattr__(self, "currency", self.currency.upper())
        if not re.fullmatch(r"[A-Z]{3}", self.currency):
            raise ValueError(f"bad currency code {self.currency!r}")


@dataclass(frozen=True)
class RawPriceText:
    """Price text as found on the page, with an optional locale hint."""

    text: str
    locale_hint: str | None = None

    def __post_init__(self):
        if not normalize_ws(self.text):
            raise ValueError("price text is empty")


def canonical_format(m: Money) -> str:
    """Stable "CODE amount" rendering: 2 fraction digits, period, no grouping."""
    return f"{m.currency} {m.amount.quantize(Decimal('0.01'), rounding=ROUND_HALF_UP)}"


# --- selector application -------------------------------------------------

def apply_selector(page: str, sel: PriceSelector,
                   table: SymbolTable | None = None) -> RawPriceText:
    """Extract the selector's text region from a page snapshot."""
    doc = parse_document(page)
    if sel.kind == DOM_PATH:
        node = resolve_path(doc, sel.expression)
        if node is None:
            raise SelectorMiss(f"no node at {sel.expression!r}")
        text = node.text_content()
        if not text:
            raise SelectorMiss(f"node at {sel.expression!r} has no text")
    else:
        text = _apply_text_anchor(doc, sel.expression)
    return RawPriceText(text=text, locale_hint=_locale_hint(doc, text, table))


def _split_anchor(expression: str) -> tuple[str, int]:
    anchor, sep, tail = expression.rpartition(ANCHOR_OFFSET_SEP)
    if sep and tail.lstrip("-").isdigit():
        return anchor, int(tail)
    return expression, 0


def _apply_text_anchor(doc: Document, expression: str) -> str:
    anchor, offset = _split_anchor(expression)
    anchor = normalize_ws(anchor)
    if not anchor:
        raise SelectorMiss("empty anchor text")
    nodes = list(doc.iter_text_nodes())
    hits = [i for i, (_, text) in enumerate(nodes) if anchor in text]
    if not hits:
        raise SelectorMiss(f"anchor {anchor!r} not found")
    if len(hits) > 1:
        raise SelectorAmbiguous(f"anchor {anchor!r} matches {len(hits)} regions")
    target = hits[0] + offset
    if not 0 <= target < len(nodes):
        raise SelectorMiss(f"anchor offset {offset} runs past the page")
    return nodes[target][1]


def _locale_hint(doc: Document, text: str,
                 table: SymbolTable | None) -> str | None:
    table = table or _DEFAULT_TABLE
    lang = doc.page_language()
    if lang:
        return lang
    symbol = table.find_symbol(text)
    if symbol:
        return table.default_locale(symbol)
    return None


# --- currency detection ---------------------------------------------------

def detect_currency(raw: RawPriceText, page_context: str | None = None,
                    table: SymbolTable | None = None) -> str:
    """Resolve the ISO currency code for a raw price text.

    Explicit ISO codes in the text win; then the symbol table, with page
    context disambiguating multi-country symbols like "$"; then a code or
    symbol found in the page context alone.
    """
    table = table or _DEFAULT_TABLE
    code = table.find_code(raw.text)
    if code:
        return code
    symbol = table.find_symbol(raw.text)
    if symbol:
        candidates = table.codes_for(symbol)
        if len(candidates) > 1 and page_context:
            context_code = table.find_code(page_context)
            if context_code in candidates:
                return context_code
        return candidates[0]
    if page_context:
        code = table.find_code(page_context)
        if code:
            return code
        symbol = table.find_symbol(page_context)
        if symbol:
            return table.default_code(symbol)
    raise UnknownCurrency(f"no currency symbol or context for {raw.text!r}")


# --- numeric parsing ------------------------------------------------------

_GROUPING_JUNK = "    '’"
_REGION_RE = re.compile(r"\d(?:[\d.,    '’]*\d)?")


def parse_price(raw: RawPriceText, page_context: str | None = None,
                table: SymbolTable | None = None) -> Money:
    """Parse a raw price text into Money.

    Thousands/decimal separators are resolved by the locale hint when
    present; otherwise: with both "." and "," the rightmost is the decimal
    separator; a lone separator before exactly 3 digits is grouping when the
    grouped reading exceeds 999; a lone separator before 2 digits is decimal.
    """
    table = table or _DEFAULT_TABLE
    if not any(ch.isdigit() for ch in raw.text):
        raise UnparseablePrice(f"no digits in {raw.text!r}")
    region = _pick_region(raw.text, table)
    style = decimal_style(raw.locale_hint)
    amount = _interpret_number(region, style)
    if amount is None and style is not None:
        amount = _interpret_number(region, None)
    if amount is None or amount <= 0:
        raise UnparseablePrice(f"no consistent numeric reading of {raw.text!r}")
    currency = detect_currency(raw, page_context, table)
    return Money(amount=amount, currency=currency)


def _pick_region(text: str, table: SymbolTable) -> str:
    text = normalize_ws(text)
    regions = []
    for m in _REGION_RE.finditer(text):
        after = text[m.end():m.end() + 2].strip()
        if after.startswith("%"):
            continue  # percentages are never prices
        regions.append(m)
    if not regions:
        raise UnparseablePrice(f"no numeric region in {text!r}")
    if len(regions) == 1:
        return regions[0].group(0)
    markers = [sym for sym in table.symbols_by_length()] + sorted(table.known_codes)
    for m in regions:
        before = text[:m.start()].rstrip()
        after = text[m.end():].lstrip()
        for marker in markers:
            if before.endswith(marker) or after.startswith(marker):
                return m.group(0)
    raise UnparseablePrice(f"ambiguous numeric regions in {text!r}")


def _strip_grouping(intpart: str, gchar: str) -> str | None:
    groups = intpart.split(gchar)
    if len(groups) == 1:
        return intpart if intpart.isdigit() else None
    if not (1 <= len(groups[0]) <= 3 and groups[0].isdigit()):
        return None
    if all(len(g) == 3 and g.isdigit() for g in groups[1:]):
        return "".join(groups)
    return None


def _interpret_number(region: str, style: str | None) -> Decimal | None:
    cleaned = []
    for i, ch in enumerate(region):
        if ch in _GROUPING_JUNK:
            prev_digit = i > 0 and region[i - 1].isdigit()
            next_digit = i + 1 < len(region) and region[i + 1].isdigit()
            if not (prev_digit and next_digit):
                return None
            continue
        cleaned.append(ch)
    s = "".join(cleaned).strip(".,")
    if not s:
        return None
    dots, commas = s.count("."), s.count(",")

    if dots and commas:
        if style == "comma":
            dchar = ","
        elif style == "period":
            dchar = "."
        else:
            dchar = s[max(s.rfind("."), s.rfind(","))]
        gchar = "," if dchar == "." else "."
        if s.count(dchar) != 1:
            return None
        intpart, frac = s.split(dchar)
        if not (1 <= len(frac) <= 4 and frac.isdigit()):
            return None
        if gchar not in intpart:
            return None
        digits = _strip_grouping(intpart, gchar)
        if digits is None:
            return None
        return Decimal(f"{digits}.{frac}")

    if not dots and not commas:
        return Decimal(s) if s.isdigit() else None

    sep = "." if dots else ","
    count = dots or commas
    if count > 1:
        digits = _strip_grouping(s, sep)
        return Decimal(digits) if digits is not None else None
    head, tail = s.split(sep)
    if not ((head == "" or head.isdigit()) and tail.isdigit()):
        return None
    if style == "comma":
        if sep == ",":
            return Decimal(f"{head or '0'}.{tail}") if 1 <= len(tail) <= 4 else None
        digits = _strip_grouping(s, ".")
        return Decimal(digits) if digits is not None else None
    if style == "period":
        if sep == ".":
            return Decimal(f"{head or '0'}.{tail}") if 1 <= len(tail) <= 4 else None
        digits = _strip_grouping(s, ",")
        return Decimal(digits) if digits is not None else None
    # hint-free disambiguation
    if len(tail) == 3:
        grouped = _strip_grouping(s, sep)
        if grouped is not None and Decimal(grouped) > 999:
            return Decimal(grouped)
        return Decimal(f"{head or '0'}.{tail}")
    if 1 <= len(tail) <= 4:
        return Decimal(f"{head or '0'}.{tail}")
    return None
