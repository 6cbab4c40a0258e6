"""Append-only observation store with content-addressed page snapshots.

Observations land in a JSON Lines log (one record per line, schema
versioned); page bodies go to a snapshot directory keyed by body hash so
identical pages dedup naturally. Appends are flushed to the kernel before
being acknowledged, and a torn trailing line (crash mid-write) is discarded
on open, so replay after a crash returns every acknowledged observation
exactly once.
"""
from __future__ import annotations

import datetime as dt
import hashlib
import json
import os
import threading
from dataclasses import dataclass, replace
from decimal import Decimal
from pathlib import Path
from typing import Iterator

from .extract import Money, PriceSelector

SCHEMA_VERSION = 1

FLAG_NOISE_SUSPECT = "NoiseSuspect"
FLAG_SHIPPING_UNKNOWN = "ShippingIncludedUnknown"
FLAG_TAX_UNKNOWN = "TaxIncludedUnknown"

DEFAULT_FLAGS = frozenset({FLAG_SHIPPING_UNKNOWN, FLAG_TAX_UNKNOWN})


@dataclass(frozen=True)
class PriceObservation:
    """One extracted price from one vantage in one wave."""

    check_id: str
    vantage: str
    money: Money
    fetched_at: float
    fetch_latency: float
    snapshot_ref: str
    product_uri: str
    domain: str
    rep: int = 0
    country: str = ""
    gate_flags: frozenset[str] = DEFAULT_FLAGS
    plan_id: str | None = None
    wave_index: int | None = None

    @property
    def wave_key(self) -> tuple[str, int]:
        return (self.check_id, self.rep)

    def date(self) -> dt.date:
        return dt.datetime.fromtimestamp(self.fetched_at, dt.timezone.utc).date()

    def to_record(self) -> dict:
        return {
            "v": SCHEMA_VERSION,
            "check_id": self.check_id,
            "vantage": self.vantage,
            "amount": str(self.money.amount),
            "currency": self.money.currency,
            "fetched_at": self.fetched_at,
            "fetch_latency": self.fetch_latency,
            "snapshot_ref": self.snapshot_ref,
            "product_uri": self.product_uri,
            "domain": self.domain,
            "rep": self.rep,
            "country": self.country,
            "gate_flags": sorted(self.gate_flags),
            "plan_id": self.plan_id,
            "wave_index": self.wave_index,
        }

    @classmethod
    def from_record(cls, record: dict) -> "PriceObservation":
        return cls(
            check_id=record["check_id"],
            vantage=record["vantage"],
            money=Money(Decimal(record["amount"]), record["currency"]),
            fetched_at=record["fetched_at"],
            fetch_latency=record["fetch_latency"],
            snapshot_ref=record["snapshot_ref"],
            product_uri=record["product_uri"],
            domain=record["domain"],
            rep=record.get("rep", 0),
            country=record.get("country", ""),
            gate_flags=frozenset(record.get("gate_flags", [])),
            plan_id=record.get("plan_id"),
            wave_index=record.get("wave_index"),
        )

    def with_flag(self, flag: str) -> "PriceObservation":
        return replace(self, gate_flags=self.gate_flags | {flag})


@dataclass(frozen=True)
class CheckRecord:
    """Durable registration of one accepted check request."""

    check_id: str
    product_uri: str
    domain: str
    selector: PriceSelector
    requester: str
    submitted_at: float
    profile_name: str | None = None
    requester_country: str | None = None

    def to_record(self) -> dict:
        return {
            "v": SCHEMA_VERSION,
            "check_id": self.check_id,
            "product_uri": self.product_uri,
            "domain": self.domain,
            "selector": self.selector.to_json(),
            "requester": self.requester,
            "submitted_at": self.submitted_at,
            "profile_name": self.profile_name,
            "requester_country": self.requester_country,
        }

    @classmethod
    def from_record(cls, record: dict) -> "CheckRecord":
        return cls(
            check_id=record["check_id"],
            product_uri=record["product_uri"],
            domain=record["domain"],
            selector=PriceSelector.from_json(record["selector"]),
            requester=record["requester"],
            submitted_at=record["submitted_at"],
            profile_name=record.get("profile_name"),
            requester_country=record.get("requester_country"),
        )


class AppendLog:
    """Append-only JSONL file; appends are acknowledged once in the kernel."""

    def __init__(self, path: str | Path, fsync: bool = False):
        self.path = Path(path)
        self.fsync = fsync
        self._lock = threading.Lock()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._truncate_torn_tail()
        self._fd = os.open(self.path, os.O_WRONLY | os.O_CREAT | os.O_APPEND)

    def _truncate_torn_tail(self) -> None:
        if not self.path.exists():
            return
        size = self.path.stat().st_size
        if size == 0:
            return
        with open(self.path, "rb+") as f:
            f.seek(-1, os.SEEK_END)
            if f.read(1) == b"\n":
                return
            # walk back to the last complete line
            pos = size
            chunk = 4096
            while pos > 0:
                step = min(chunk, pos)
                f.seek(pos - step)
                data = f.read(step)
                nl = data.rfind(b"\n")
                if nl != -1:
                    f.truncate(pos - step + nl + 1)
                    return
                pos -= step
            f.truncate(0)

    def append(self, record: dict) -> None:
        line = (json.dumps(record, separators=(",", ":"), sort_keys=True) + "\n").encode("utf-8")
        with self._lock:
            os.write(self._fd, line)
            if self.fsync:
                os.fsync(self._fd)

    def close(self) -> None:
        with self._lock:
            if self._fd >= 0:
                os.close(self._fd)
                self._fd = -1

    def iter_records(self) -> Iterator[dict]:
        if not self.path.exists():
            return
        with open(self.path, "rb") as f:
            for line in f:
                if not line.endswith(b"\n"):
                    break  # torn tail never acknowledged
                line = line.strip()
                if line:
                    yield json.loads(line)

    def iter_offsets(self) -> Iterator[tuple[int, dict]]:
        if not self.path.exists():
            return
        with open(self.path, "rb") as f:
            offset = f.tell()
            for line in f:
                if not line.endswith(b"\n"):
                    break
                if line.strip():
                    yield offset, json.loads(line)
                offset += len(line)

    def read_at_offsets(self, offsets: Iterator[int] | list[int]) -> Iterator[dict]:
        with open(self.path, "rb") as f:
            for offset in offsets:
                f.seek(offset)
                yield json.loads(f.readline())


class SnapshotStore:
    """Content-addressed page snapshot directory (UTF-8 text bodies)."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, ref: str) -> Path:
        return self.root / f"{ref}.html"

    def put(self, body: str) -> str:
        data = body.encode("utf-8")
        ref = hashlib.sha256(data).hexdigest()
        path = self._path(ref)
        if not path.exists():
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, path)  # atomic; rewriting identical content is harmless
        return ref

    def get(self, ref: str) -> str:
        return self._path(ref).read_text(encoding="utf-8")

    def exists(self, ref: str) -> bool:
        return self._path(ref).exists()


@dataclass
class ReplayQuery:
    domain: str | None = None
    product_uri: str | None = None
    date_from: dt.date | None = None
    date_to: dt.date | None = None
    vantage: str | None = None

    def matches(self, record: dict) -> bool:
        if self.domain is not None and record["domain"] != self.domain:
            return False
        if self.product_uri is not None and record["product_uri"] != self.product_uri:
            return False
        if self.vantage is not None and record["vantage"] != self.vantage:
            return False
        if self.date_from is not None or self.date_to is not None:
            day = dt.datetime.fromtimestamp(
                record["fetched_at"], dt.timezone.utc).date()
            if self.date_from is not None and day < self.date_from:
                return False
            if self.date_to is not None and day > self.date_to:
                return False
        return True


class ObservationStore:
    """Directory bundling the observation log, check log and snapshots."""

    def __init__(self, root: str | Path, fsync: bool = False):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.observations = AppendLog(self.root / "observations.jsonl", fsync=fsync)
        self.checks = AppendLog(self.root / "checks.jsonl", fsync=fsync)
        self.snapshots = SnapshotStore(self.root / "snapshots")

    def append_observation(self, obs: PriceObservation) -> None:
        self.observations.append(obs.to_record())

    def append_check(self, check: CheckRecord) -> None:
        self.checks.append(check.to_record())

    def load_checks(self) -> dict[str, CheckRecord]:
        return {r["check_id"]: CheckRecord.from_record(r)
                for r in self.checks.iter_records()}

    def replay(self, query: ReplayQuery | None = None) -> Iterator[PriceObservation]:
        """Stream observations in (check_id, vantage, rep) order.

        Two passes: a scan collecting (sort key, byte offset) for matching
        records, then seek-reads in key order, so memory stays bounded by the
        keys rather than the full records.
        """
        query = query or ReplayQuery()
        index: list[tuple[str, str, int, int]] = []
        for offset, record in self.observations.iter_offsets():
            if query.matches(record):
                index.append((record["check_id"], record["vantage"],
                              record.get("rep", 0), offset))
        if not index:
            return
        index.sort()
        records = self.observations.read_at_offsets(
            offset for _, _, _, offset in index)
        for record in records:
            yield PriceObservation.from_record(record)

    def close(self) -> None:
        self.observations.close()
        self.checks.close()
