"""Bundle verification: pinned key, quote signature, nonce, PCR digest, log chain."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..measured_log import chain_evaluate, split_log
from ..os_agent import AttestationBundle
from ..tpm import verify_quote
from .registry import DeviceRegistry, UnknownDevice

UNKNOWN_DEVICE = "UnknownDevice"
BAD_SIGNATURE = "BadSignature"
PCR_INCONSISTENT = "PcrDigestInconsistent"
CHAIN_MISMATCH = "ChainMismatch"
FAILURE_REASONS = (UNKNOWN_DEVICE, BAD_SIGNATURE, "NonceMismatch", "NonceExpiredOrReplayed",
                   PCR_INCONSISTENT, CHAIN_MISMATCH)


@dataclass(frozen=True)
class AttestationVerdict:
    attested: bool
    failure_reason: Optional[str] = None
    recomputed_pcr: bytes = b""

    def __post_init__(self):
        if self.attested and self.failure_reason is not None:
            raise ValueError("an attested verdict carries no failure reason")

    def to_dict(self) -> dict:
        doc = {"attested": self.attested, "recomputed_pcr_hex": self.recomputed_pcr.hex()}
        if self.failure_reason is not None:
            doc["reason"] = self.failure_reason
        return doc


def _fail(reason: str, recomputed: bytes = b"") -> AttestationVerdict:
    return AttestationVerdict(False, reason, recomputed)


def verify_bundle(registry: DeviceRegistry, cache, bundle: AttestationBundle) -> AttestationVerdict:
    """Fail-fast checks. The nonce is consumed only once the signature holds,
    so a forged bundle cannot burn a legitimate device's challenge."""
    try:
        pinned = registry.lookup(bundle.device_id).ak_public
    except UnknownDevice:
        return _fail(UNKNOWN_DEVICE)
    if not pinned.same_key(bundle.ak_public) or bundle.quote.device_id != bundle.device_id:
        return _fail(BAD_SIGNATURE)
    check = verify_quote(pinned, bundle.quote, bundle.nonce)
    if not check:
        return _fail(check.reason or BAD_SIGNATURE)
    stale = cache.consume(bundle.device_id, bundle.nonce)
    if stale is not None:
        return _fail(stale)
    if bundle.pcr_value != bundle.quote.pcr_value:
        return _fail(PCR_INCONSISTENT)
    try:
        recomputed = chain_evaluate(split_log(bundle.raw_log))
    except UnicodeEncodeError:
        # lone surrogates from JSON escapes: no honest agent writes these
        return _fail(CHAIN_MISMATCH)
    if recomputed != bundle.quote.pcr_value:
        return _fail(CHAIN_MISMATCH, recomputed)
    return AttestationVerdict(True, None, recomputed)
