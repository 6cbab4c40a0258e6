"""Coordinator: accepts checks, fans them out to agents inside a tight
synchronization window, extracts prices from the returned pages, and serves
results back over a small HTTP API.

Barrier per wave: PREPARE to every agent, collect READY, then broadcast GO
with a shared start deadline. Agents that miss READY or start outside the
window are recorded as timeouts so the synchrony invariant holds for every
stored wave.
"""
from __future__ import annotations

import queue
import socket
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import urlsplit

import json

from . import analytics, protocol
from .extract import (ExtractError, PriceSelector, apply_selector,
                      canonical_format, parse_price)
from .fx import RateTable
from .protocol import (FetchResult, PersonaProfile, QuorumFailure,
                       VantagePoint, STATUS_OK, STATUS_TIMEOUT)
from .store import (CheckRecord, ObservationStore, PriceObservation,
                    FLAG_NOISE_SUSPECT)


class CoordinatorError(Exception):
    pass


class InvalidUri(CoordinatorError):
    pass


class RateLimited(CoordinatorError):
    pass


@dataclass(frozen=True)
class CheckRequest:
    product_uri: str
    selector: PriceSelector
    requester: str
    submitted_at: float = field(default_factory=time.time)
    profile: PersonaProfile | None = None
    requester_country: str | None = None

    def domain(self) -> str:
        return urlsplit(self.product_uri).netloc or ""


@dataclass
class CoordinatorConfig:
    host: str = "127.0.0.1"
    agent_port: int = 0
    api_port: int = 0
    sync_window: float = 5.0
    go_lead: float = 1.0
    ready_timeout: float = 15.0
    fetch_deadline: float = 20.0
    repetitions: int = 3
    rep_spacing: float = 600.0
    dedup_window: float = 60.0
    rate_limit_per_min: int = 12
    check_workers: int = 8
    reference: str = "USD"


@dataclass
class _CheckState:
    check_id: str
    request: CheckRequest
    status: str = "queued"  # queued | running | done | failed
    error: str | None = None
    prices: dict[str, dict] = field(default_factory=dict)
    gate: dict | None = None
    reps_done: int = 0
    first_money: dict[str, str] = field(default_factory=dict)
    plan_id: str | None = None
    wave_index: int | None = None
    domain_override: str | None = None

    @property
    def domain(self) -> str:
        return self.domain_override or self.request.domain()

    def public(self) -> dict:
        return {"check_id": self.check_id, "status": self.status,
                "error": self.error, "prices": self.prices,
                "gate": self.gate, "reps_done": self.reps_done,
                "product_uri": self.request.product_uri}


class AgentLink:
    """Coordinator-side endpoint of one agent connection."""

    def __init__(self, sock: socket.socket, vantage: VantagePoint,
                 on_close=None):
        self.sock = sock
        self.vantage = vantage
        self._send_lock = threading.Lock()
        self._queues: dict[str, queue.Queue] = {}
        self._queues_lock = threading.Lock()
        self._on_close = on_close
        self.alive = True
        self._reader = threading.Thread(target=self._read_loop,
                                        name=f"link-{vantage.id}", daemon=True)

    def start(self) -> None:
        self._reader.start()

    def send(self, message: dict) -> bool:
        try:
            with self._send_lock:
                protocol.send_frame(self.sock, message)
            return True
        except OSError:
            self._close()
            return False

    def open_wave(self, wave_id: str) -> None:
        with self._queues_lock:
            self._queues[wave_id] = queue.Queue()

    def close_wave(self, wave_id: str) -> None:
        with self._queues_lock:
            self._queues.pop(wave_id, None)

    def expect(self, wave_id: str, timeout: float) -> dict | None:
        with self._queues_lock:
            q = self._queues.get(wave_id)
        if q is None:
            return None
        try:
            return q.get(timeout=max(0.0, timeout))
        except queue.Empty:
            return None

    def _read_loop(self) -> None:
        try:
            while True:
                msg = protocol.recv_frame(self.sock)
                if msg is None:
                    break
                wave_id = msg.get("wave_id")
                if wave_id is None:
                    continue
                with self._queues_lock:
                    q = self._queues.get(wave_id)
                if q is not None:
                    q.put(msg)
        except (OSError, protocol.ProtocolError):
            pass
        finally:
            self._close()

    def _close(self) -> None:
        if not self.alive:
            return
        self.alive = False
        try:
            self.sock.close()
        except OSError:
            pass
        with self._queues_lock:
            for q in self._queues.values():
                q.put(None)
        if self._on_close is not None:
            self._on_close(self)


class Coordinator:
    def __init__(self, store: ObservationStore, rates: RateTable | None = None,
                 config: CoordinatorConfig | None = None):
        self.store = store
        self.rates = rates
        self.config = config or CoordinatorConfig()
        self._links: dict[str, AgentLink] = {}
        self._links_lock = threading.Lock()
        self._checks: dict[str, _CheckState] = {}
        self._checks_lock = threading.Lock()
        self._dedup: dict[tuple, tuple[str, float]] = {}
        self._submissions: dict[str, list[float]] = {}
        self._agent_server: socket.socket | None = None
        self._api_server: ThreadingHTTPServer | None = None
        self._executor: ThreadPoolExecutor | None = None
        self._stopped = threading.Event()
        self.agent_address: tuple[str, int] | None = None
        self.api_address: tuple[str, int] | None = None

    # -- lifecycle ----------------------------------------------------------

    def start(self, with_api: bool = True) -> None:
        self._executor = ThreadPoolExecutor(
            max_workers=self.config.check_workers, thread_name_prefix="check")
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((self.config.host, self.config.agent_port))
        server.listen(64)
        self._agent_server = server
        self.agent_address = server.getsockname()
        threading.Thread(target=self._accept_loop, name="agent-accept",
                         daemon=True).start()
        if with_api:
            self._api_server = _make_api_server(self, self.config.host,
                                                self.config.api_port)
            self.api_address = self._api_server.server_address
            threading.Thread(target=self._api_server.serve_forever,
                             name="api", daemon=True).start()

    def stop(self) -> None:
        self._stopped.set()
        if self._api_server is not None:
            self._api_server.shutdown()
            self._api_server.server_close()
        if self._agent_server is not None:
            self._agent_server.close()
        with self._links_lock:
            links = list(self._links.values())
        for link in links:
            link._close()
        if self._executor is not None:
            self._executor.shutdown(wait=False, cancel_futures=True)
        self.store.close()

    def _accept_loop(self) -> None:
        while not self._stopped.is_set():
            try:
                conn, _ = self._agent_server.accept()
            except OSError:
                return
            threading.Thread(target=self._register_agent, args=(conn,),
                             daemon=True).start()

    def _register_agent(self, conn: socket.socket) -> None:
        try:
            conn.settimeout(10)
            msg = protocol.recv_frame(conn)
            conn.settimeout(None)
            if not msg or msg.get("type") != protocol.MSG_REGISTER:
                conn.close()
                return
            vantage = VantagePoint.from_json(msg)
            link = AgentLink(conn, vantage, on_close=self._drop_link)
            with self._links_lock:
                old = self._links.get(vantage.id)
                self._links[vantage.id] = link
            if old is not None:
                old._close()
            link.start()
            link.send({"type": protocol.MSG_REGISTERED})
        except (OSError, protocol.ProtocolError):
            conn.close()

    def _drop_link(self, link: AgentLink) -> None:
        with self._links_lock:
            if self._links.get(link.vantage.id) is link:
                del self._links[link.vantage.id]

    def agents(self) -> dict[str, VantagePoint]:
        with self._links_lock:
            return {vid: link.vantage for vid, link in self._links.items()}

    def wait_for_agents(self, count: int, timeout: float = 10.0) -> bool:
        deadline = time.time() + timeout
        while time.time() < deadline:
            if len(self.agents()) >= count:
                return True
            time.sleep(0.02)
        return len(self.agents()) >= count

    # -- check intake ---------------------------------------------------------

    def submit_check(self, req: CheckRequest, enforce_limits: bool = True) -> str:
        """Queue a check; duplicate submissions within the dedup window
        return the original id."""
        self._validate_request(req)
        key = (req.product_uri, req.selector.kind, req.selector.expression,
               req.requester)
        now = time.time()
        with self._checks_lock:
            hit = self._dedup.get(key)
            if hit is not None and now - hit[1] < self.config.dedup_window:
                return hit[0]
            if enforce_limits:
                window = [t for t in self._submissions.get(req.requester, [])
                          if now - t < 60.0]
                if len(window) >= self.config.rate_limit_per_min:
                    raise RateLimited(
                        f"requester {req.requester!r} exceeded "
                        f"{self.config.rate_limit_per_min} checks/min")
                window.append(now)
                self._submissions[req.requester] = window
            check_id = uuid.uuid4().hex[:16]
            self._dedup[key] = (check_id, now)
            state = _CheckState(check_id=check_id, request=req)
            self._checks[check_id] = state
        self.store.append_check(CheckRecord(
            check_id=check_id, product_uri=req.product_uri, domain=req.domain(),
            selector=req.selector, requester=req.requester,
            submitted_at=req.submitted_at,
            profile_name=req.profile.name if req.profile else None,
            requester_country=req.requester_country))
        self._executor.submit(self._run_queued, check_id)
        return check_id

    def _validate_request(self, req: CheckRequest) -> None:
        parts = urlsplit(req.product_uri)
        if parts.scheme not in ("http", "https") or not parts.netloc:
            raise InvalidUri(f"not an http(s) URI: {req.product_uri!r}")
        if not req.requester:
            raise ValueError("requester must be non-empty")

    def status(self, check_id: str) -> dict | None:
        with self._checks_lock:
            state = self._checks.get(check_id)
            return state.public() if state else None

    def run_direct_check(self, req: CheckRequest,
                         vantages: list[str] | None = None,
                         plan_id: str | None = None,
                         wave_index: int | None = None,
                         domain: str | None = None,
                         ) -> list[PriceObservation]:
        """Register and execute a check synchronously, one repetition.

        Internal orchestration path used by the crawl scheduler: no rate
        limiting or dedup, but the check is registered so every observation
        can be re-extracted from its snapshot later. `domain` overrides the
        URI-derived retailer identity (desk fleets all live on localhost).
        """
        self._validate_request(req)
        check_id = uuid.uuid4().hex[:16]
        state = _CheckState(check_id=check_id, request=req,
                            plan_id=plan_id, wave_index=wave_index,
                            domain_override=domain)
        with self._checks_lock:
            self._checks[check_id] = state
        self.store.append_check(CheckRecord(
            check_id=check_id, product_uri=req.product_uri,
            domain=state.domain, selector=req.selector,
            requester=req.requester, submitted_at=req.submitted_at,
            profile_name=req.profile.name if req.profile else None))
        return self.run_check(state, repetitions=1, vantages=vantages)

    # -- wave execution -------------------------------------------------------

    def _run_queued(self, check_id: str) -> None:
        with self._checks_lock:
            state = self._checks.get(check_id)
        if state is None:
            return
        try:
            self.run_check(state, repetitions=self.config.repetitions,
                           rep_spacing=self.config.rep_spacing)
        except Exception as exc:  # keep worker pool alive
            with self._checks_lock:
                state.status = "failed"
                state.error = str(exc)

    def run_check(self, state: _CheckState, repetitions: int = 1,
                  rep_spacing: float = 0.0,
                  vantages: list[str] | None = None) -> list[PriceObservation]:
        """Execute a check synchronously; answer comes from the first
        repetition, later repetitions only enrich the store."""
        req = state.request
        with self._checks_lock:
            state.status = "running"
        first_rep_observations: list[PriceObservation] = []
        for rep in range(repetitions):
            if rep > 0 and rep_spacing > 0:
                if self._stopped.wait(rep_spacing):
                    break  # shutting down: skip remaining repetitions
            try:
                results = self.fan_out(state.check_id, rep, req.product_uri,
                                       req.selector, req.profile, vantages)
            except QuorumFailure as exc:
                if rep == 0:
                    with self._checks_lock:
                        state.status = "failed"
                        state.error = str(exc)
                    raise
                continue
            observations = self.collect_and_extract(state, rep, results)
            if rep == 0:
                first_rep_observations = observations
                self._finish_first_rep(state, results, observations)
            with self._checks_lock:
                state.reps_done = rep + 1
        return first_rep_observations

    def _select_links(self, vantages: list[str] | None) -> list[AgentLink]:
        with self._links_lock:
            if vantages is None:
                return [l for l in self._links.values() if l.alive]
            missing = [v for v in vantages if v not in self._links]
            if missing:
                raise QuorumFailure(f"agents not registered: {missing}")
            return [self._links[v] for v in vantages]

    def fan_out(self, check_id: str, rep: int, uri: str,
                selector: PriceSelector, profile: PersonaProfile | None,
                vantages: list[str] | None = None,
                sync_window: float | None = None) -> list[FetchResult]:
        """Run one synchronized wave; one FetchResult per vantage."""
        cfg = self.config
        window = sync_window if sync_window is not None else cfg.sync_window
        links = self._select_links(vantages)
        if len(links) < 2:
            raise QuorumFailure(f"need >= 2 vantage points, have {len(links)}")
        wave_id = f"{check_id}/{rep}"
        for link in links:
            link.open_wave(wave_id)
        try:
            prep = protocol.prepare_message(wave_id, uri, selector.to_json(),
                                            profile, cfg.fetch_deadline)
            for link in links:
                link.send(prep)
            ready_deadline = time.time() + cfg.ready_timeout
            ready_links: list[AgentLink] = []
            results: dict[str, FetchResult] = {}
            for link in links:
                msg = link.expect(wave_id, ready_deadline - time.time())
                if msg is not None and msg.get("type") == protocol.MSG_READY:
                    ready_links.append(link)
                else:
                    results[link.vantage.id] = FetchResult(
                        vantage=link.vantage.id, status=STATUS_TIMEOUT,
                        error="no READY before deadline")
            if ready_links:
                start_at = time.time() + cfg.go_lead
                go = protocol.go_message(wave_id, start_at)
                for link in ready_links:
                    link.send(go)
                result_deadline = (start_at + cfg.fetch_deadline
                                   + window + 2.0)
                for link in ready_links:
                    msg = link.expect(wave_id, result_deadline - time.time())
                    if msg is not None and msg.get("type") == protocol.MSG_RESULT:
                        results[link.vantage.id] = FetchResult.from_wire(msg)
                    else:
                        results[link.vantage.id] = FetchResult(
                            vantage=link.vantage.id, status=STATUS_TIMEOUT,
                            error="no RESULT before deadline")
        finally:
            for link in links:
                link.close_wave(wave_id)
        ordered = [results[link.vantage.id] for link in links]
        ordered = _enforce_sync_window(ordered, window)
        if sum(1 for r in ordered if r.status == STATUS_OK) < 2:
            raise QuorumFailure(
                f"wave {wave_id} got fewer than 2 ok results")
        return ordered

    # -- extraction & persistence ---------------------------------------------

    def collect_and_extract(self, state: _CheckState, rep: int,
                            results: list[FetchResult]) -> list[PriceObservation]:
        req = state.request
        observations: list[PriceObservation] = []
        agents = self.agents()
        for result in results:
            if result.status != STATUS_OK:
                self._record_price_entry(state, result.vantage, error=(
                    f"{result.status}: {result.error or ''}".strip()), rep=rep)
                continue
            try:
                raw = apply_selector(result.page, req.selector)
                money = parse_price(raw, page_context=result.page)
            except ExtractError as exc:
                self._record_price_entry(
                    state, result.vantage,
                    error=f"{type(exc).__name__}: {exc}", rep=rep)
                continue
            snapshot_ref = self.store.snapshots.put(result.page)
            vantage = agents.get(result.vantage)
            obs = PriceObservation(
                check_id=state.check_id, vantage=result.vantage, money=money,
                fetched_at=result.fetched_at, fetch_latency=result.latency,
                snapshot_ref=snapshot_ref, product_uri=req.product_uri,
                domain=state.domain, rep=rep,
                country=vantage.country if vantage else "",
                plan_id=state.plan_id, wave_index=state.wave_index)
            obs = self._apply_noise_flag(state, obs)
            self.store.append_observation(obs)
            observations.append(obs)
        return observations

    def _apply_noise_flag(self, state: _CheckState,
                          obs: PriceObservation) -> PriceObservation:
        key = obs.vantage
        seen = state.first_money.get(key)
        mine = canonical_format(obs.money)
        if seen is None:
            state.first_money[key] = mine
            return obs
        if seen != mine:
            return obs.with_flag(FLAG_NOISE_SUSPECT)
        return obs

    def _record_price_entry(self, state: _CheckState, vantage: str,
                            error: str, rep: int) -> None:
        if rep == 0:
            with self._checks_lock:
                state.prices[vantage] = {"error": error}

    def _finish_first_rep(self, state: _CheckState, results: list[FetchResult],
                          observations: list[PriceObservation]) -> None:
        with self._checks_lock:
            for obs in observations:
                state.prices[obs.vantage] = {
                    "price": canonical_format(obs.money),
                    "country": obs.country,
                }
            state.gate = self._gate_json(observations)
            state.status = "done"

    def _gate_json(self, observations: list[PriceObservation]) -> dict | None:
        if len(observations) < 2:
            return None
        try:
            profile = analytics.product_profile(observations, self.rates)
        except analytics.InsufficientObservations:
            return None
        return {"passed": profile.gate.passed,
                "observed_gap": _round_ratio(profile.gate.observed_gap),
                "max_currency_gap": _round_ratio(profile.gate.max_currency_gap),
                "max_min_ratio": _round_ratio(profile.max_min_ratio)}


def _round_ratio(value) -> str:
    from decimal import Decimal
    return str(Decimal(value).quantize(Decimal("0.000001")))


def _enforce_sync_window(results: list[FetchResult],
                         window: float) -> list[FetchResult]:
    """Demote results that started outside the window to timeouts."""
    ok_starts = [r.started_at for r in results if r.status == STATUS_OK]
    if not ok_starts:
        return results
    barrier = min(ok_starts)
    adjusted: list[FetchResult] = []
    for r in results:
        if r.status == STATUS_OK and r.started_at - barrier > window:
            adjusted.append(FetchResult(
                vantage=r.vantage, status=STATUS_TIMEOUT,
                started_at=r.started_at, fetched_at=r.fetched_at,
                latency=r.latency, error="missed sync window"))
        else:
            adjusted.append(r)
    return adjusted


# -- requester API -----------------------------------------------------------

class _ApiHandler(BaseHTTPRequestHandler):
    coordinator: Coordinator = None  # set by _make_api_server
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet
        pass

    def _send_json(self, code: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers",
                         "Content-Type, X-Installation-Id, X-Requester-Country")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(body)

    def do_OPTIONS(self):
        self._send_json(204, {})

    def do_GET(self):
        if self.path in ("/v1/ping", "/v1/ping/"):
            self._send_json(200, {"ok": True,
                                  "agents": len(self.coordinator.agents())})
            return
        if self.path.startswith("/v1/checks/"):
            check_id = self.path.rsplit("/", 1)[-1]
            status = self.coordinator.status(check_id)
            if status is None:
                self._send_json(404, {"error": "unknown check id"})
            else:
                self._send_json(200, status)
            return
        self._send_json(404, {"error": "not found"})

    def do_POST(self):
        if self.path.rstrip("/") != "/v1/checks":
            self._send_json(404, {"error": "not found"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length) or b"{}")
            selector = PriceSelector.from_json(payload["selector"])
            requester = (payload.get("requester")
                         or self.headers.get("X-Installation-Id")
                         or "")
            req = CheckRequest(
                product_uri=payload["product_uri"],
                selector=selector,
                requester=requester,
                profile=PersonaProfile.from_wire(payload.get("profile")),
                requester_country=self.headers.get("X-Requester-Country"))
            check_id = self.coordinator.submit_check(req)
        except RateLimited as exc:
            self._send_json(429, {"error": str(exc)})
            return
        except (KeyError, ValueError, InvalidUri, json.JSONDecodeError) as exc:
            self._send_json(400, {"error": str(exc)})
            return
        self._send_json(200, {"check_id": check_id})


class _ApiServer(ThreadingHTTPServer):
    request_queue_size = 128
    daemon_threads = True

    def handle_error(self, request, client_address):
        import sys
        exc = sys.exc_info()[1]
        if isinstance(exc, (BrokenPipeError, ConnectionResetError)):
            return
        super().handle_error(request, client_address)


def _make_api_server(coordinator: Coordinator, host: str,
                     port: int) -> ThreadingHTTPServer:
    handler = type("BoundApiHandler", (_ApiHandler,),
                   {"coordinator": coordinator})
    return _ApiServer((host, port), handler)
