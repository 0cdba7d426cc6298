"""Pinned attestation keys, one per device."""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from ..tpm import AkPublic


class DuplicateDevice(Exception):
    pass


class UnknownDevice(KeyError):
    pass


@dataclass(frozen=True)
class DeviceRecord:
    ak_public: AkPublic
    enrolled_at: str


def _now_iso() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


class DeviceRegistry:
    """Thread-safe device -> AK map; persisted to ``path`` when one is given."""

    def __init__(self, path: Optional[Path] = None):
        self._lock = threading.Lock()
        self._devices: dict[str, DeviceRecord] = {}
        self.path = Path(path) if path is not None else None
        if self.path is not None and self.path.exists():
            doc = json.loads(self.path.read_text("utf-8"))
            for device_id, rec in doc.items():
                self._devices[device_id] = DeviceRecord(AkPublic.from_dict(rec["ak_public"]), rec["enrolled_at"])

    def register(self, device_id: str, ak_public: AkPublic, replace: bool = False) -> DeviceRecord:
        if not device_id:
            raise ValueError("device_id must be non-empty")
        with self._lock:
            if device_id in self._devices and not replace:
                raise DuplicateDevice(device_id)
            rec = DeviceRecord(ak_public, _now_iso())
            self._devices[device_id] = rec
            self._save()
            return rec

    def lookup(self, device_id: str) -> DeviceRecord:
        with self._lock:
            try:
                return self._devices[device_id]
            except KeyError:
                raise UnknownDevice(device_id) from None

    def __contains__(self, device_id: str) -> bool:
        with self._lock:
            return device_id in self._devices

    def _save(self) -> None:
        if self.path is None:
            return
        doc = {d: {"ak_public": r.ak_public.to_dict(), "enrolled_at": r.enrolled_at}
               for d, r in self._devices.items()}
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, indent=2, sort_keys=True), "utf-8")
        os.replace(tmp, self.path)


def register_device(registry: DeviceRegistry, device_id: str, ak_public: AkPublic,
                    replace: bool = False) -> DeviceRecord:
    return registry.register(device_id, ak_public, replace)
