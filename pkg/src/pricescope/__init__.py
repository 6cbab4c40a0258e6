"""Distributed price-variation detection.

Synchronized multi-vantage price checks, currency-artifact gating, crawl
scheduling and variation analytics, all verifiable against a mock retailer
fleet with known injected pricing policies.
"""

__version__ = "0.1.0"

from .extract import (Money, PriceSelector, RawPriceText, apply_selector,
                      canonical_format, detect_currency, parse_price)
from .fx import (GateVerdict, RateTable, RateWindow, RefInterval,
                 currency_gate, load_rate_table, to_reference_interval)
from .protocol import FetchResult, PersonaProfile, QuorumFailure, VantagePoint
from .store import CheckRecord, ObservationStore, PriceObservation, ReplayQuery

__all__ = [
    "Money", "PriceSelector", "RawPriceText", "apply_selector",
    "canonical_format", "detect_currency", "parse_price",
    "GateVerdict", "RateTable", "RateWindow", "RefInterval",
    "currency_gate", "load_rate_table", "to_reference_interval",
    "FetchResult", "PersonaProfile", "QuorumFailure", "VantagePoint",
    "CheckRecord", "ObservationStore", "PriceObservation", "ReplayQuery",
    "__version__",
]
