"""Coordinator-agent wire protocol and the types that cross it.

Messages are length-prefixed JSON frames over a persistent TCP connection:
REGISTER on connect, then PREPARE/READY/GO/RESULT per wave. PREPARE carries
the fetch job; agents answer READY once they can start the fetch
immediately; GO names the shared start deadline; RESULT returns the page or
the failure.
"""
from __future__ import annotations

import json
import socket
import struct
from dataclasses import dataclass

MAX_FRAME = 64 * 1024 * 1024

MSG_REGISTER = "register"
MSG_REGISTERED = "registered"
MSG_PREPARE = "prepare"
MSG_READY = "ready"
MSG_GO = "go"
MSG_RESULT = "result"

STATUS_OK = "ok"
STATUS_HTTP_ERROR = "http-error"
STATUS_TIMEOUT = "timeout"
STATUS_SELECTOR_MISS = "selector-miss"


class ProtocolError(Exception):
    pass


class QuorumFailure(Exception):
    """Fewer than 2 usable results: no comparison is possible."""


def send_frame(sock: socket.socket, message: dict) -> None:
    data = json.dumps(message, separators=(",", ":")).encode("utf-8")
    if len(data) > MAX_FRAME:
        raise ProtocolError(f"frame of {len(data)} bytes exceeds limit")
    sock.sendall(struct.pack(">I", len(data)) + data)


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            return None
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_frame(sock: socket.socket) -> dict | None:
    """Read one frame; None on clean EOF."""
    header = _recv_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME:
        raise ProtocolError(f"frame of {length} bytes exceeds limit")
    payload = _recv_exact(sock, length)
    if payload is None:
        raise ProtocolError("connection closed mid-frame")
    return json.loads(payload.decode("utf-8"))


@dataclass(frozen=True)
class VantagePoint:
    """One geographically placed measurement agent."""

    id: str
    country: str
    city: str
    endpoint: str = ""

    def to_json(self) -> dict:
        return {"id": self.id, "country": self.country, "city": self.city,
                "endpoint": self.endpoint}

    @classmethod
    def from_json(cls, data: dict) -> "VantagePoint":
        return cls(id=data["id"], country=data.get("country", ""),
                   city=data.get("city", ""), endpoint=data.get("endpoint", ""))


@dataclass(frozen=True)
class PersonaProfile:
    """Fetch profile emulating a user class: headers, cookies, login state.

    Cookie values are session material: they travel to agents for fetching
    but never into reports or logs (see public_record).
    """

    name: str
    headers: tuple[tuple[str, str], ...] = ()
    cookies: tuple[tuple[str, str], ...] = ()
    logged_in_as: str | None = None

    def __post_init__(self):
        names = [k.lower() for k, _ in self.headers]
        if len(names) != len(set(names)):
            raise ValueError("duplicate header names in profile")

    def headers_dict(self) -> dict[str, str]:
        return dict(self.headers)

    def cookies_dict(self) -> dict[str, str]:
        return dict(self.cookies)

    def to_wire(self) -> dict:
        return {"name": self.name, "headers": list(self.headers),
                "cookies": list(self.cookies), "logged_in_as": self.logged_in_as}

    @classmethod
    def from_wire(cls, data: dict | None) -> "PersonaProfile | None":
        if data is None:
            return None
        return cls(name=data.get("name", "default"),
                   headers=tuple((k, v) for k, v in data.get("headers", [])),
                   cookies=tuple((k, v) for k, v in data.get("cookies", [])),
                   logged_in_as=data.get("logged_in_as"))

    def public_record(self) -> dict:
        """Redacted form safe for reports: no cookie or header values."""
        return {"name": self.name,
                "headers": [k for k, _ in self.headers],
                "cookies": [k for k, _ in self.cookies],
                "logged_in_as": self.logged_in_as}

    def fingerprint(self) -> str:
        return json.dumps(self.to_wire(), sort_keys=True)


@dataclass(frozen=True)
class FetchResult:
    """One agent's outcome for one wave."""

    vantage: str
    status: str
    started_at: float = 0.0
    fetched_at: float = 0.0
    latency: float = 0.0
    page: str | None = None
    status_code: int | None = None
    error: str | None = None

    def __post_init__(self):
        if self.status == STATUS_OK and self.page is None:
            raise ValueError("ok result must carry a page")

    def to_wire(self, wave_id: str) -> dict:
        return {"type": MSG_RESULT, "wave_id": wave_id, "vantage": self.vantage,
                "status": self.status, "started_at": self.started_at,
                "fetched_at": self.fetched_at, "latency": self.latency,
                "page": self.page, "status_code": self.status_code,
                "error": self.error}

    @classmethod
    def from_wire(cls, data: dict) -> "FetchResult":
        return cls(vantage=data["vantage"], status=data["status"],
                   started_at=data.get("started_at", 0.0),
                   fetched_at=data.get("fetched_at", 0.0),
                   latency=data.get("latency", 0.0),
                   page=data.get("page"),
                   status_code=data.get("status_code"),
                   error=data.get("error"))


def register_message(vantage: VantagePoint) -> dict:
    return {"type": MSG_REGISTER, **vantage.to_json()}


def prepare_message(wave_id: str, uri: str, selector_json: dict,
                    profile: PersonaProfile | None,
                    fetch_deadline: float) -> dict:
    return {"type": MSG_PREPARE, "wave_id": wave_id, "uri": uri,
            "selector": selector_json,
            "profile": profile.to_wire() if profile else None,
            "fetch_deadline": fetch_deadline}


def ready_message(wave_id: str, vantage: str) -> dict:
    return {"type": MSG_READY, "wave_id": wave_id, "vantage": vantage}


def go_message(wave_id: str, start_at: float) -> dict:
    return {"type": MSG_GO, "wave_id": wave_id, "start_at": start_at}
