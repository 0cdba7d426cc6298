"""Software TPM: a SHA-256 PCR bank, an attestation key and signed quotes."""

from __future__ import annotations

import base64
import hashlib
import os
import struct
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec, ed25519

from .measured_log import DIGEST_SIZE, ZERO_DIGEST, extend

PCR_COUNT = 24
NONCE_SIZE = 32
QUOTE_MAGIC = b"PCK1"
DEFAULT_ALGORITHM = "ecdsa-p256-sha256"

_P256_ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551


class TpmError(Exception):
    pass


class InvalidPcrIndex(TpmError, IndexError):
    pass


class BadNonceLength(TpmError, ValueError):
    pass


# -- signature schemes ------------------------------------------------------

class _EcdsaP256:
    name = "ecdsa-p256-sha256"

    @staticmethod
    def derive(seed: bytes):
        scalar = int.from_bytes(hashlib.sha256(b"peacock-ak-p256" + seed).digest(), "big")
        return ec.derive_private_key(scalar % (_P256_ORDER - 1) + 1, ec.SECP256R1())

    @staticmethod
    def public_bytes(private_key) -> bytes:
        return private_key.public_key().public_bytes(
            serialization.Encoding.X962, serialization.PublicFormat.UncompressedPoint)

    @staticmethod
    def sign(private_key, payload: bytes) -> bytes:
        return private_key.sign(payload, ec.ECDSA(hashes.SHA256()))

    @staticmethod
    def verify(key: bytes, signature: bytes, payload: bytes) -> bool:
        try:
            pub = ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256R1(), key)
            pub.verify(signature, payload, ec.ECDSA(hashes.SHA256()))
        except (InvalidSignature, ValueError):
            return False
        return True


class _Ed25519:
    """Signs SHA-256(payload) with Ed25519."""

    name = "ed25519-sha256"

    @staticmethod
    def derive(seed: bytes):
        return ed25519.Ed25519PrivateKey.from_private_bytes(
            hashlib.sha256(b"peacock-ak-ed25519" + seed).digest())

    @staticmethod
    def public_bytes(private_key) -> bytes:
        return private_key.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw)

    @staticmethod
    def sign(private_key, payload: bytes) -> bytes:
        return private_key.sign(hashlib.sha256(payload).digest())

    @staticmethod
    def verify(key: bytes, signature: bytes, payload: bytes) -> bool:
        try:
            ed25519.Ed25519PublicKey.from_public_bytes(key).verify(
                signature, hashlib.sha256(payload).digest())
        except (InvalidSignature, ValueError):
            return False
        return True


SCHEMES = {s.name: s for s in (_EcdsaP256, _Ed25519)}


# -- wire types -------------------------------------------------------------

@dataclass(frozen=True)
class AkPublic:
    algorithm: str
    key: bytes
    device_id: str
    created_at: str

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "key_b64": base64.b64encode(self.key).decode("ascii"),
                "device_id": self.device_id, "created_at": self.created_at}

    @classmethod
    def from_dict(cls, doc: dict) -> "AkPublic":
        if doc.get("algorithm") not in SCHEMES:
            raise ValueError(f"unsupported AK algorithm {doc.get('algorithm')!r}")
        key = base64.b64decode(doc["key_b64"], validate=True)
        if not key:
            raise ValueError("empty AK public key")
        return cls(doc["algorithm"], key, str(doc["device_id"]), str(doc.get("created_at", "")))

    def same_key(self, other: "AkPublic") -> bool:
        return self.algorithm == other.algorithm and self.key == other.key


@dataclass(frozen=True)
class Quote:
    device_id: str
    pcr_index: int
    pcr_value: bytes
    nonce: bytes
    counter: int
    signature: bytes = b""
    magic: bytes = QUOTE_MAGIC

    def payload(self) -> bytes:
        dev = self.device_id.encode("utf-8")
        return (self.magic + struct.pack(">H", len(dev)) + dev + bytes([self.pcr_index])
                + self.pcr_value + self.nonce + struct.pack(">Q", self.counter))

    def to_dict(self) -> dict:
        return {
            "magic": self.magic.decode("ascii", "replace"),
            "device_id": self.device_id,
            "pcr_index": self.pcr_index,
            "pcr_value_hex": self.pcr_value.hex(),
            "nonce_hex": self.nonce.hex(),
            "counter": self.counter,
            "signature_b64": base64.b64encode(self.signature).decode("ascii"),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Quote":
        pcr_index = int(doc["pcr_index"])
        if not 0 <= pcr_index < 256:
            raise ValueError("pcr_index out of range")
        return cls(
            device_id=str(doc["device_id"]),
            pcr_index=pcr_index,
            pcr_value=bytes.fromhex(doc["pcr_value_hex"]),
            nonce=bytes.fromhex(doc["nonce_hex"]),
            counter=int(doc["counter"]),
            signature=base64.b64decode(doc["signature_b64"], validate=True),
            magic=str(doc["magic"]).encode("ascii"),
        )


@dataclass(frozen=True)
class QuoteCheck:
    accepted: bool
    reason: Optional[str] = None  # "BadSignature" | "NonceMismatch"

    def __bool__(self) -> bool:
        return self.accepted


# -- the TPM ----------------------------------------------------------------

@dataclass
class SoftTPM:
    device_id: str
    seed: bytes
    algorithm: str = DEFAULT_ALGORITHM
    created_at: str = ""
    pcrs: list[bytes] = field(default_factory=lambda: [ZERO_DIGEST] * PCR_COUNT)
    counter: int = 0

    def __post_init__(self):
        if self.algorithm not in SCHEMES:
            raise TpmError(f"unsupported algorithm {self.algorithm!r}")
        self._scheme = SCHEMES[self.algorithm]
        self._key = self._scheme.derive(self.seed)

    @property
    def ak_public(self) -> AkPublic:
        return AkPublic(self.algorithm, self._scheme.public_bytes(self._key), self.device_id, self.created_at)

    def _check_index(self, index: int) -> None:
        if not isinstance(index, int) or not 0 <= index < PCR_COUNT:
            raise InvalidPcrIndex(f"PCR index {index!r} outside 0..{PCR_COUNT - 1}")

    def pcr_read(self, index: int) -> bytes:
        self._check_index(index)
        return self.pcrs[index]

    def pcr_extend(self, index: int, measurement: bytes) -> bytes:
        self._check_index(index)
        if len(measurement) != DIGEST_SIZE:
            raise TpmError("measurement must be a 32-byte digest")
        self.pcrs[index] = extend(self.pcrs[index], measurement)
        return self.pcrs[index]

    def quote(self, index: int, nonce: bytes) -> Quote:
        self._check_index(index)
        if len(nonce) != NONCE_SIZE:
            raise BadNonceLength(f"nonce must be {NONCE_SIZE} bytes, got {len(nonce)}")
        self.counter += 1
        unsigned = Quote(self.device_id, index, self.pcrs[index], bytes(nonce), self.counter)
        sig = self._scheme.sign(self._key, unsigned.payload())
        return Quote(self.device_id, index, self.pcrs[index], bytes(nonce), self.counter, sig)

    # Simulator state persistence (seed, registers, counter); lets the CLI
    # quote a boot after the process that ran it has exited.
    def state_dict(self) -> dict:
        return {"device_id": self.device_id, "seed_hex": self.seed.hex(), "algorithm": self.algorithm,
                "created_at": self.created_at, "pcrs_hex": [p.hex() for p in self.pcrs],
                "counter": self.counter}

    @classmethod
    def from_state(cls, doc: dict) -> "SoftTPM":
        tpm = cls(doc["device_id"], bytes.fromhex(doc["seed_hex"]), doc.get("algorithm", DEFAULT_ALGORITHM),
                  doc.get("created_at", ""))
        tpm.pcrs = [bytes.fromhex(p) for p in doc["pcrs_hex"]]
        tpm.counter = int(doc["counter"])
        return tpm


def create_tpm(device_id: str, rng_seed: Optional[int | bytes] = None,
               algorithm: str = DEFAULT_ALGORITHM, created_at: Optional[str] = None) -> SoftTPM:
    """Fresh TPM. A given seed makes the AK reproducible; ``None`` draws one from the OS."""
    if rng_seed is None:
        seed = os.urandom(32)
    elif isinstance(rng_seed, int):
        seed = rng_seed.to_bytes(8, "big", signed=False)
    else:
        seed = bytes(rng_seed)
    if created_at is None:
        created_at = datetime.now(timezone.utc).replace(microsecond=0).isoformat()
    return SoftTPM(device_id, seed, algorithm, created_at)


def verify_quote(ak_public: AkPublic, quote: Quote, expected_nonce: bytes) -> QuoteCheck:
    scheme = SCHEMES.get(ak_public.algorithm)
    if scheme is None or quote.magic != QUOTE_MAGIC:
        return QuoteCheck(False, "BadSignature")
    try:
        payload = quote.payload()
    except (ValueError, struct.error):
        return QuoteCheck(False, "BadSignature")
    if not scheme.verify(ak_public.key, quote.signature, payload):
        return QuoteCheck(False, "BadSignature")
    if quote.nonce != expected_nonce:
        return QuoteCheck(False, "NonceMismatch")
    return QuoteCheck(True)
