"""Server state, bundle ingestion and the JSON-over-HTTP front end."""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, urlparse

from ..detect import DetectionRule, builtin_rules, evaluate, load_rules
from ..measured_log import MalformedLine
from ..os_agent import AttestationBundle
from ..tpm import AkPublic
from .challenge import DEFAULT_TTL, ChallengeCache, LegacyNonceCache
from .events import parse_log
from .registry import DeviceRegistry, DuplicateDevice, UnknownDevice
from .store import Forwarder, SessionStore
from .verify import verify_bundle

log = logging.getLogger(__name__)

MAX_BODY = 64 * 1024 * 1024


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class ServerConfig:
    data_dir: Path
    sink_dir: Path
    host: str = "127.0.0.1"
    port: int = 8080
    nonce_ttl: float = DEFAULT_TTL
    legacy_client_nonce: bool = False
    rules_dir: Optional[Path] = None


@dataclass
class ServerState:
    registry: DeviceRegistry
    cache: object
    store: SessionStore
    forwarder: Forwarder
    rules: list[DetectionRule] = field(default_factory=list)

    @classmethod
    def from_config(cls, config: ServerConfig, clock=None) -> "ServerState":
        data_dir = Path(config.data_dir)
        kwargs = {"clock": clock} if clock is not None else {}
        if config.legacy_client_nonce:
            log.warning("legacy client nonce mode: nonces are chosen by the client")
            cache = LegacyNonceCache(**kwargs)
        else:
            cache = ChallengeCache(config.nonce_ttl, **kwargs)
        rules = load_rules(config.rules_dir) if config.rules_dir is not None else builtin_rules()
        return cls(DeviceRegistry(data_dir / "devices.json"), cache, SessionStore(data_dir),
                   Forwarder(config.sink_dir), rules)


def failure_record(device_id: str, session_id: Optional[str], reason: str) -> dict:
    doc = {"device_id": device_id, "verdict": "attestation_failed", "reason": reason,
           "received_at": _now_iso()}
    if session_id:
        doc["session_id"] = session_id
    return doc


def ingest(state: ServerState, bundle: AttestationBundle) -> dict:
    """Verify, then either store and analyse the session or record only the failure."""
    verdict = verify_bundle(state.registry, state.cache, bundle)
    if not verdict.attested:
        record = failure_record(bundle.device_id, bundle.session_id, verdict.failure_reason)
        state.store.save_failure(record)
        state.store.append_index({**record, "attested": False})
        state.forwarder.forward(bundle.device_id, bundle.session_id, [{"record_type": "failure", **record}])
        return {"attested": False, "reason": verdict.failure_reason, "session_id": bundle.session_id}

    try:
        events = parse_log(bundle.raw_log, bundle.device_id)
    except MalformedLine as exc:
        # The chain verified but the content does not parse: keep the gate
        # closed and report it as an ingestion failure.
        reason = f"MalformedLog: {exc}"
        record = failure_record(bundle.device_id, bundle.session_id, reason)
        record["verdict"] = "ingestion_failed"
        state.store.save_failure(record)
        state.store.append_index({**record, "attested": True})
        state.forwarder.forward(bundle.device_id, bundle.session_id, [{"record_type": "failure", **record}])
        return {"attested": True, "error": reason, "events": 0, "alerts": 0, "session_id": bundle.session_id}

    session_id = events[0].session_id if events else bundle.session_id
    event_docs = [e.to_dict() for e in events]
    alerts = evaluate(state.rules, event_docs, bundle.device_id, session_id)
    alert_docs = [a.to_dict() for a in alerts]
    received_at = _now_iso()
    state.store.save_attested(bundle.device_id, session_id, bundle.to_dict(), event_docs,
                              {**verdict.to_dict(), "received_at": received_at,
                               "events": len(event_docs), "alerts": len(alert_docs)})
    state.forwarder.forward(
        bundle.device_id, session_id,
        [{"record_type": "event", "device_id": bundle.device_id, **e} for e in event_docs]
        + [{"record_type": "alert", **a} for a in alert_docs])
    state.store.append_index({"device_id": bundle.device_id, "session_id": session_id, "attested": True,
                              "received_at": received_at, "events": len(event_docs),
                              "alerts": len(alert_docs)})
    return {
        "attested": True,
        "session_id": session_id,
        "events": len(event_docs),
        "alerts": len(alert_docs),
        "alert_summary": [{"rule": a.rule, "severity": a.severity, "groups": len(a.groups)} for a in alerts],
    }


# -- HTTP -------------------------------------------------------------------

class _Handler(BaseHTTPRequestHandler):
    server: "PeacockHTTPServer"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        log.info("%s %s", self.address_string(), fmt % args)

    def _send(self, status: int, doc: dict) -> None:
        body = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _json_body(self):
        length = int(self.headers.get("Content-Length") or 0)
        if length <= 0 or length > MAX_BODY:
            raise ValueError("missing or oversized body")
        return json.loads(self.rfile.read(length))

    def do_GET(self):
        url = urlparse(self.path)
        query = parse_qs(url.query)
        state = self.server.state
        if url.path == "/api/v1/health":
            return self._send(200, {"status": "ok"})
        if url.path == "/api/v1/challenge":
            device_id = (query.get("device_id") or [""])[0]
            if device_id not in state.registry:
                return self._send(404, {"error": "UnknownDevice"})
            ch = state.cache.issue(device_id)
            return self._send(200, {"nonce_hex": ch.nonce.hex(), "expires_at": ch.expires_at})
        if url.path == "/api/v1/sessions":
            device_id = (query.get("device_id") or [None])[0]
            return self._send(200, {"sessions": state.store.sessions(device_id)})
        self._send(404, {"error": "not found"})

    def do_POST(self):
        url = urlparse(self.path)
        state = self.server.state
        try:
            doc = self._json_body()
        except (ValueError, UnicodeDecodeError) as exc:
            return self._send(400, {"error": f"invalid JSON body: {exc}"})
        if url.path == "/api/v1/devices":
            try:
                ak = AkPublic.from_dict(doc["ak_public"])
                device_id = str(doc.get("device_id") or ak.device_id)
                state.registry.register(device_id, ak, bool(doc.get("replace", False)))
            except DuplicateDevice:
                return self._send(409, {"error": "DuplicateDevice"})
            except (KeyError, TypeError, ValueError) as exc:
                return self._send(400, {"error": f"invalid enrollment: {exc}"})
            return self._send(201, {"device_id": device_id})
        if url.path == "/api/v1/attest":
            try:
                bundle = AttestationBundle.from_dict(doc)
            except (KeyError, TypeError, ValueError) as exc:
                return self._send(400, {"error": f"invalid bundle: {exc}"})
            with self.server.track():
                return self._send(200, ingest(state, bundle))
        self._send(404, {"error": "not found"})


class PeacockHTTPServer(ThreadingHTTPServer):
    daemon_threads = False
    block_on_close = True

    def __init__(self, address, state: ServerState):
        super().__init__(address, _Handler)
        self.state = state
        self._inflight = 0
        self._cond = threading.Condition()

    def track(self):
        server = self

        class _Track:
            def __enter__(self):
                with server._cond:
                    server._inflight += 1

            def __exit__(self, *exc):
                with server._cond:
                    server._inflight -= 1
                    server._cond.notify_all()

        return _Track()

    def drain(self, timeout: float = 30.0) -> bool:
        """Wait for in-flight ingests (and their sink writes) to finish."""
        with self._cond:
            return self._cond.wait_for(lambda: self._inflight == 0, timeout)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


def make_server(config: ServerConfig, state: Optional[ServerState] = None) -> PeacockHTTPServer:
    return PeacockHTTPServer((config.host, config.port), state or ServerState.from_config(config))


class BackgroundServer:
    """Run a server on a thread; used by ``peacock run`` and the tests."""

    def __init__(self, config: ServerConfig, state: Optional[ServerState] = None):
        self.httpd = make_server(config, state)
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        return self.httpd.url

    @property
    def state(self) -> ServerState:
        return self.httpd.state

    def __enter__(self) -> "BackgroundServer":
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        self.httpd.shutdown()
        self.httpd.drain()
        self.httpd.server_close()
        self._thread.join(timeout=5)
