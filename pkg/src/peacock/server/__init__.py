"""Verifier server: enrollment, challenges, bundle verification, parsing and forwarding."""

from .app import BackgroundServer, PeacockHTTPServer, ServerConfig, ServerState, failure_record, ingest, make_server
from .challenge import Challenge, ChallengeCache, LegacyNonceCache, issue_challenge, legacy_nonce
from .events import INCOMPLETE, ParsedEvent, parse_log
from .registry import DeviceRegistry, DuplicateDevice, UnknownDevice, register_device
from .store import Forwarder, SessionStore, forward, safe_component
from .verify import FAILURE_REASONS, AttestationVerdict, verify_bundle

__all__ = [
    "AttestationVerdict", "BackgroundServer", "Challenge", "ChallengeCache", "DeviceRegistry",
    "DuplicateDevice", "FAILURE_REASONS", "Forwarder", "INCOMPLETE", "LegacyNonceCache", "ParsedEvent",
    "PeacockHTTPServer", "ServerConfig", "ServerState", "SessionStore", "UnknownDevice",
    "failure_record", "forward", "ingest", "issue_challenge", "legacy_nonce", "make_server",
    "parse_log", "register_device", "safe_component", "verify_bundle",
]
