"""Vantage-point agent: synchronized fetches on behalf of the coordinator.

Each fetch uses a fresh connection with exactly the profile's headers and
cookies; nothing is shared between profiles or waves. Politeness spacing per
target domain is paid before READY, so once GO arrives the fetch can start
right at the shared deadline.
"""
from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass
from typing import Callable
from urllib.parse import urlsplit

import requests

from . import protocol
from .protocol import FetchResult, PersonaProfile, VantagePoint

Fetcher = Callable[[str, dict, dict, float], tuple[int, str]]


class FetchTimeout(Exception):
    pass


def http_fetch(uri: str, headers: dict, cookies: dict,
               deadline: float) -> tuple[int, str]:
    """Plain GET with a fresh connection; returns (status code, body text)."""
    try:
        resp = requests.get(uri, headers=headers, cookies=cookies,
                            timeout=deadline, allow_redirects=True)
    except requests.Timeout as exc:
        raise FetchTimeout(str(exc)) from exc
    except requests.RequestException as exc:
        # unreachable hosts and connection resets count as timeouts
        raise FetchTimeout(str(exc)) from exc
    resp.encoding = resp.encoding or "utf-8"
    return resp.status_code, resp.text


@dataclass
class AgentConfig:
    agent_id: str
    country: str = ""
    city: str = ""
    coordinator: tuple[str, int] = ("127.0.0.1", 7710)
    fetch_deadline: float = 20.0
    politeness_delay: float = 2.0
    clock_offset: float = 0.0  # injected skew for harness runs
    handling_delay: Callable[[], float] | None = None  # injected jitter
    fetcher: Fetcher = http_fetch


@dataclass
class _WaveTask:
    wave_id: str
    uri: str
    selector: dict
    profile: PersonaProfile | None
    fetch_deadline: float


class VantageAgent:
    """Agent process core; one persistent coordinator connection."""

    def __init__(self, config: AgentConfig):
        self.config = config
        self._sock: socket.socket | None = None
        self._send_lock = threading.Lock()
        self._tasks: dict[str, _WaveTask] = {}
        self._tasks_lock = threading.Lock()
        self._domain_slots: dict[str, float] = {}
        self._slots_lock = threading.Lock()
        self._fetch_locks: dict[tuple[str, str], threading.Lock] = {}
        self._stopped = threading.Event()
        self._reader: threading.Thread | None = None

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        sock = socket.create_connection(self.config.coordinator, timeout=10)
        sock.settimeout(None)
        self._sock = sock
        self._send(protocol.register_message(self.vantage_point()))
        ack = protocol.recv_frame(sock)
        if not ack or ack.get("type") != protocol.MSG_REGISTERED:
            raise protocol.ProtocolError(f"registration rejected: {ack!r}")
        self._reader = threading.Thread(target=self._read_loop,
                                        name=f"agent-{self.config.agent_id}",
                                        daemon=True)
        self._reader.start()

    def stop(self) -> None:
        self._stopped.set()
        if self._sock is not None:
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._sock.close()
            self._sock = None

    def vantage_point(self) -> VantagePoint:
        return VantagePoint(id=self.config.agent_id, country=self.config.country,
                            city=self.config.city)

    def local_now(self) -> float:
        return time.time() + self.config.clock_offset

    # -- wire handling ------------------------------------------------------

    def _send(self, message: dict) -> None:
        if self._sock is None:
            return
        with self._send_lock:
            protocol.send_frame(self._sock, message)

    def _read_loop(self) -> None:
        try:
            while not self._stopped.is_set():
                msg = protocol.recv_frame(self._sock)
                if msg is None:
                    return
                kind = msg.get("type")
                if kind == protocol.MSG_PREPARE:
                    threading.Thread(target=self._on_prepare, args=(msg,),
                                     daemon=True).start()
                elif kind == protocol.MSG_GO:
                    threading.Thread(target=self._on_go, args=(msg,),
                                     daemon=True).start()
        except (OSError, protocol.ProtocolError):
            return

    def _jitter(self) -> None:
        if self.config.handling_delay is not None:
            delay = self.config.handling_delay()
            if delay > 0:
                time.sleep(delay)

    def _on_prepare(self, msg: dict) -> None:
        self._jitter()
        task = _WaveTask(
            wave_id=msg["wave_id"],
            uri=msg["uri"],
            selector=msg.get("selector") or {},
            profile=PersonaProfile.from_wire(msg.get("profile")),
            fetch_deadline=float(msg.get("fetch_deadline")
                                 or self.config.fetch_deadline),
        )
        with self._tasks_lock:
            self._tasks[task.wave_id] = task
        self._reserve_politeness_slot(task.uri)
        self._send(protocol.ready_message(task.wave_id, self.config.agent_id))

    def _reserve_politeness_slot(self, uri: str) -> None:
        """Pay per-domain spacing now so the fetch can start at GO time."""
        delay = self.config.politeness_delay
        if delay <= 0:
            return
        domain = urlsplit(uri).netloc
        with self._slots_lock:
            now = time.time()
            slot = max(now, self._domain_slots.get(domain, 0.0) + delay)
            self._domain_slots[domain] = slot
        wait = slot - time.time()
        if wait > 0:
            time.sleep(wait)

    def _on_go(self, msg: dict) -> None:
        wave_id = msg["wave_id"]
        with self._tasks_lock:
            task = self._tasks.pop(wave_id, None)
        if task is None:
            return
        result = self.perform_fetch(task, float(msg["start_at"]))
        self._send(result.to_wire(wave_id))

    # -- fetching -----------------------------------------------------------

    def _fetch_lock(self, uri: str, profile: PersonaProfile | None) -> threading.Lock:
        key = (uri, profile.fingerprint() if profile else "")
        with self._tasks_lock:
            return self._fetch_locks.setdefault(key, threading.Lock())

    def perform_fetch(self, task: _WaveTask, start_at: float) -> FetchResult:
        wait = start_at - self.local_now()
        if wait > 0:
            time.sleep(wait)
        lock = self._fetch_lock(task.uri, task.profile)
        with lock:
            started = self.local_now()
            headers = task.profile.headers_dict() if task.profile else {}
            cookies = task.profile.cookies_dict() if task.profile else {}
            t0 = time.monotonic()
            try:
                status_code, body = self.config.fetcher(
                    task.uri, headers, cookies, task.fetch_deadline)
            except FetchTimeout as exc:
                return FetchResult(vantage=self.config.agent_id,
                                   status=protocol.STATUS_TIMEOUT,
                                   started_at=started,
                                   fetched_at=self.local_now(),
                                   latency=time.monotonic() - t0,
                                   error=str(exc))
            latency = time.monotonic() - t0
        if status_code >= 400:
            return FetchResult(vantage=self.config.agent_id,
                               status=protocol.STATUS_HTTP_ERROR,
                               started_at=started, fetched_at=self.local_now(),
                               latency=latency, status_code=status_code,
                               error=f"http {status_code}")
        return FetchResult(vantage=self.config.agent_id, status=protocol.STATUS_OK,
                           started_at=started, fetched_at=self.local_now(),
                           latency=latency, page=body, status_code=status_code)


def run_agent(config: AgentConfig) -> VantageAgent:
    """Start an agent and reconnect-free serve until stopped."""
    agent = VantageAgent(config)
    agent.start()
    return agent
