"""Post-boot collector: read the exported log, quote the TPM, ship the bundle.

The OS agent does no verification of its own; a bundle built over a
tampered log is still built and submitted, and the server decides.
"""

from __future__ import annotations

import json
import urllib.error
import urllib.parse
import urllib.request
import uuid
from dataclasses import dataclass
from typing import Mapping, Optional

from .agent import EXPORT_PATH
from .measured_log import Header, MalformedLine, chain_evaluate, parse_entry, split_log
from .tpm import AkPublic, Quote, SoftTPM


class CollectError(Exception):
    pass


class LogMissing(CollectError):
    pass


class HeaderMissing(CollectError):
    pass


class TransportError(OSError):
    pass


@dataclass(frozen=True)
class AttestationBundle:
    device_id: str
    session_id: str
    raw_log: str
    ak_public: AkPublic
    quote: Quote
    pcr_value: bytes
    nonce: bytes
    derived_pcr_digest: bytes

    def to_dict(self) -> dict:
        return {
            "device_id": self.device_id,
            "session_id": self.session_id,
            "raw_log": self.raw_log,
            "ak_public": self.ak_public.to_dict(),
            "quote": self.quote.to_dict(),
            "pcr_value_hex": self.pcr_value.hex(),
            "nonce_hex": self.nonce.hex(),
            "derived_pcr_digest_hex": self.derived_pcr_digest.hex(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "AttestationBundle":
        """Decode the wire form; raises ``ValueError`` (or ``KeyError``) on schema errors."""
        if not isinstance(doc, Mapping):
            raise ValueError("bundle must be a JSON object")
        raw_log = doc["raw_log"]
        if not isinstance(raw_log, str):
            raise ValueError("raw_log must be a string")
        return cls(
            device_id=str(doc["device_id"]),
            session_id=str(doc["session_id"]),
            raw_log=raw_log,
            ak_public=AkPublic.from_dict(doc["ak_public"]),
            quote=Quote.from_dict(doc["quote"]),
            pcr_value=bytes.fromhex(doc["pcr_value_hex"]),
            nonce=bytes.fromhex(doc["nonce_hex"]),
            derived_pcr_digest=bytes.fromhex(doc["derived_pcr_digest_hex"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "AttestationBundle":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Receipt:
    http_status: int
    verdict: str
    body: dict


def session_id_of(raw_log: str) -> str:
    lines = split_log(raw_log)
    if not lines:
        raise HeaderMissing("log is empty")
    try:
        first = parse_entry(lines[0])
    except MalformedLine as exc:
        raise HeaderMissing(f"first record is not a header: {exc}") from None
    if not isinstance(first.body, Header):
        raise HeaderMissing("first record is not a header")
    return first.body.session_id


def collect(esp: Mapping[str, bytes], path: str = EXPORT_PATH) -> tuple[str, str]:
    """Return (raw_log, session_id) from the ESP file map."""
    if path not in esp:
        raise LogMissing(f"no log at {path}")
    raw_log = esp[path].decode("utf-8")
    sid = session_id_of(raw_log)
    uuid.UUID(sid)
    return raw_log, sid


def build_bundle(raw_log: str, tpm: SoftTPM, nonce: bytes, device_id: str,
                 pcr_index: int = 23) -> AttestationBundle:
    quote = tpm.quote(pcr_index, nonce)
    return AttestationBundle(
        device_id=device_id,
        session_id=session_id_of(raw_log),
        raw_log=raw_log,
        ak_public=tpm.ak_public,
        quote=quote,
        pcr_value=quote.pcr_value,
        nonce=bytes(nonce),
        derived_pcr_digest=chain_evaluate(split_log(raw_log)),
    )


# -- HTTP client ------------------------------------------------------------

def _request(method: str, url: str, body: Optional[dict] = None, timeout: float = 30.0) -> tuple[int, dict]:
    data = json.dumps(body).encode("utf-8") if body is not None else None
    req = urllib.request.Request(url, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            status, payload = resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        status, payload = exc.code, exc.read()
    except (urllib.error.URLError, OSError) as exc:
        raise TransportError(f"{method} {url}: {exc}") from exc
    try:
        doc = json.loads(payload or b"{}")
    except ValueError:
        doc = {"error": payload.decode("utf-8", "replace")}
    return status, doc


def submit(bundle: AttestationBundle, server_url: str) -> Receipt:
    """POST the bundle once; retrying is left to the caller."""
    status, doc = _request("POST", server_url.rstrip("/") + "/api/v1/attest", bundle.to_dict())
    verdict = "attested" if doc.get("attested") else "attestation_failed"
    if status >= 400:
        verdict = "rejected"
    return Receipt(status, verdict, doc)


def enroll(server_url: str, ak_public: AkPublic, replace: bool = False) -> tuple[int, dict]:
    return _request("POST", server_url.rstrip("/") + "/api/v1/devices",
                    {"device_id": ak_public.device_id, "ak_public": ak_public.to_dict(), "replace": replace})


def request_challenge(server_url: str, device_id: str) -> bytes:
    query = urllib.parse.urlencode({"device_id": device_id})
    status, doc = _request("GET", server_url.rstrip("/") + "/api/v1/challenge?" + query)
    if status != 200:
        raise TransportError(f"challenge refused ({status}): {doc.get('error', doc)}")
    return bytes.fromhex(doc["nonce_hex"])
