"""Nonce issuance and single-use consumption.

``ChallengeCache`` is the default verifier-issued mode. ``LegacyNonceCache``
accepts client-generated nonces whose first eight bytes are a big-endian
unix timestamp; it is weaker (the client picks the value) and only used
when explicitly enabled.
"""

from __future__ import annotations

import os
import struct
import threading
import time
from dataclasses import dataclass
from typing import Callable, Optional

from ..tpm import NONCE_SIZE

DEFAULT_TTL = 120.0
LEGACY_SKEW = 300.0
NONCE_MISMATCH = "NonceMismatch"
NONCE_STALE = "NonceExpiredOrReplayed"


@dataclass(frozen=True)
class Challenge:
    nonce: bytes
    device_id: str
    issued_at: float
    expires_at: float


class ChallengeCache:
    def __init__(self, ttl: float = DEFAULT_TTL, clock: Callable[[], float] = time.time,
                 rng: Callable[[int], bytes] = os.urandom):
        self.ttl = float(ttl)
        self.clock = clock
        self.rng = rng
        self._lock = threading.Lock()
        self._issued: dict[bytes, Challenge] = {}
        self._consumed: set[bytes] = set()

    def issue(self, device_id: str) -> Challenge:
        with self._lock:
            now = self.clock()
            self._prune(now)
            while True:
                nonce = self.rng(NONCE_SIZE)
                if nonce not in self._issued and nonce not in self._consumed:
                    break
            ch = Challenge(nonce, device_id, now, now + self.ttl)
            self._issued[nonce] = ch
            return ch

    def consume(self, device_id: str, nonce: bytes) -> Optional[str]:
        """Check-and-consume in one step. ``None`` on success, else a failure reason."""
        with self._lock:
            if nonce in self._consumed:
                return NONCE_STALE
            ch = self._issued.get(nonce)
            if ch is None or ch.device_id != device_id:
                return NONCE_MISMATCH
            del self._issued[nonce]
            self._consumed.add(nonce)
            if self.clock() > ch.expires_at:
                return NONCE_STALE
            return None

    def __len__(self) -> int:
        with self._lock:
            return len(self._issued)

    def _prune(self, now: float) -> None:
        # expired challenges move to the consumed set so they keep reporting as stale
        for nonce in [n for n, c in self._issued.items() if now > c.expires_at]:
            del self._issued[nonce]
            self._consumed.add(nonce)


def legacy_nonce(now: Optional[float] = None, rng: Callable[[int], bytes] = os.urandom) -> bytes:
    now = time.time() if now is None else now
    return struct.pack(">Q", int(now)) + rng(NONCE_SIZE - 8)


class LegacyNonceCache:
    """Client-chosen nonces: accepted once, and only within the skew window."""

    def __init__(self, skew: float = LEGACY_SKEW, clock: Callable[[], float] = time.time):
        self.skew = float(skew)
        self.clock = clock
        self._lock = threading.Lock()
        self._seen: dict[bytes, float] = {}

    def issue(self, device_id: str) -> Challenge:
        now = self.clock()
        return Challenge(legacy_nonce(now), device_id, now, now + self.skew)

    def consume(self, device_id: str, nonce: bytes) -> Optional[str]:
        if len(nonce) != NONCE_SIZE:
            return NONCE_MISMATCH
        stamp = struct.unpack(">Q", nonce[:8])[0]
        with self._lock:
            now = self.clock()
            for n in [n for n, t in self._seen.items() if now - t > 2 * self.skew]:
                del self._seen[n]
            if abs(now - stamp) > self.skew or nonce in self._seen:
                return NONCE_STALE
            self._seen[nonce] = now
            return None


def issue_challenge(cache: ChallengeCache, registry, device_id: str) -> Challenge:
    registry.lookup(device_id)
    return cache.issue(device_id)
