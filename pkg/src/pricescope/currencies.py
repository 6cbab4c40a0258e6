"""Currency symbol table and locale separator conventions.

The table is loaded from a one-record-per-line config file
(``symbol,ISO code,default locale``). A symbol listed on several lines is
ambiguous (e.g. "$"); the first line wins as the default and the other codes
become candidates that page context may select instead.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

# Shipped defaults, same format the loader accepts from disk.
DEFAULT_TABLE = """\
$,USD,en-US
$,CAD,en-CA
$,AUD,en-AU
$,NZD,en-NZ
€,EUR,de
£,GBP,en-GB
R$,BRL,pt-BR
¥,JPY,ja
kr,SEK,sv
zł,PLN,pl
Fr,CHF,de-CH
₹,INR,en-IN
"""

# Languages whose decimal separator is the comma (grouping via "." or space).
_COMMA_DECIMAL_LANGS = {
    "de", "fr", "it", "es", "pt", "fi", "sv", "nl", "da", "no", "nb", "pl",
    "cs", "sk", "sl", "hr", "hu", "ro", "ru", "tr", "el", "bg", "lt", "lv",
    "et", "is", "id", "vi", "ca", "uk",
}

# Full-tag overrides where the region breaks the language default.
_STYLE_OVERRIDES = {
    "es-mx": "period",
    "es-us": "period",
    "de-ch": "period",  # Swiss convention: 1'234.56
    "en-za": "comma",
    "en-in": "period",
}

_ISO_CODE_RE = re.compile(r"\b([A-Z]{3})\b")


def decimal_style(locale_tag: str | None) -> str | None:
    """Map a locale tag to "comma" or "period" decimal convention.

    Returns None for unknown tags so callers fall back to the
    hint-free disambiguation rules.
    """
    if not locale_tag:
        return None
    tag = locale_tag.strip().lower().replace("_", "-")
    if tag in _STYLE_OVERRIDES:
        return _STYLE_OVERRIDES[tag]
    lang = tag.split("-", 1)[0]
    if lang in _COMMA_DECIMAL_LANGS:
        return "comma"
    if lang:
        return "period"
    return None


@dataclass
class SymbolTable:
    """Currency symbol/code lookup built from config records."""

    # symbol -> ordered list of (code, default_locale); first entry is default
    symbols: dict[str, list[tuple[str, str]]] = field(default_factory=dict)

    def add(self, symbol: str, code: str, locale: str) -> None:
        entries = self.symbols.setdefault(symbol, [])
        if all(c != code for c, _ in entries):
            entries.append((code, locale))

    @property
    def known_codes(self) -> set[str]:
        return {code for entries in self.symbols.values() for code, _ in entries}

    def codes_for(self, symbol: str) -> list[str]:
        return [code for code, _ in self.symbols.get(symbol, [])]

    def default_code(self, symbol: str) -> str | None:
        entries = self.symbols.get(symbol)
        return entries[0][0] if entries else None

    def default_locale(self, symbol: str) -> str | None:
        entries = self.symbols.get(symbol)
        return entries[0][1] if entries else None

    def symbols_by_length(self) -> list[str]:
        # Longest first so "R$" is tried before "$".
        return sorted(self.symbols, key=len, reverse=True)

    def find_symbol(self, text: str) -> str | None:
        for sym in self.symbols_by_length():
            if sym in text:
                return sym
        return None

    def find_code(self, text: str) -> str | None:
        """First known ISO code appearing as a standalone token."""
        for match in _ISO_CODE_RE.finditer(text):
            if match.group(1) in self.known_codes:
                return match.group(1)
        return None


def parse_table(text: str) -> SymbolTable:
    table = SymbolTable()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3 or not all(parts):
            raise ValueError(f"malformed currency record on line {lineno}: {line!r}")
        symbol, code, locale = parts
        table.add(symbol, code.upper(), locale)
    return table


def load_table(path: str | Path | None = None) -> SymbolTable:
    """Load the symbol table from ``path``, or the shipped defaults."""
    if path is None:
        return parse_table(DEFAULT_TABLE)
    return parse_table(Path(path).read_text(encoding="utf-8"))
