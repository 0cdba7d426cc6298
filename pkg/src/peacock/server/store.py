"""On-disk session store and the file-drop sink forwarder."""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
import threading
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Optional

_SAFE = re.compile(r"[A-Za-z0-9][A-Za-z0-9._-]{0,127}")


def safe_component(name: Optional[str]) -> str:
    """A path component derived from untrusted ids; odd ids are replaced by a digest."""
    if name and _SAFE.fullmatch(name) and name not in (".", ".."):
        return name
    return "x-" + hashlib.sha256((name or "").encode("utf-8")).hexdigest()[:16]


def _ndjson(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _KeyedLocks:
    def __init__(self):
        self._guard = threading.Lock()
        self._locks: dict[str, threading.Lock] = defaultdict(threading.Lock)

    def __call__(self, key: str) -> threading.Lock:
        with self._guard:
            return self._locks[key]


class Forwarder:
    """Appends NDJSON records to ``<device_id>_<session_id>.ndjson`` in ``sink_dir``.

    Each append rewrites the file through a temp file and a rename, so a
    reader never sees a partial line.
    """

    def __init__(self, sink_dir: Path):
        self.sink_dir = Path(sink_dir)
        self._locks = _KeyedLocks()

    def path_for(self, device_id: str, session_id: Optional[str]) -> Path:
        return self.sink_dir / f"{safe_component(device_id)}_{safe_component(session_id or 'unknown')}.ndjson"

    def forward(self, device_id: str, session_id: Optional[str], records: list[dict]) -> Path:
        path = self.path_for(device_id, session_id)
        with self._locks(path.name):
            existing = path.read_text("utf-8") if path.exists() else ""
            _atomic_write(path, existing + _ndjson(records))
        return path


def forward(sink_dir, device_id: str, session_id: Optional[str], records: list[dict]) -> Path:
    return Forwarder(sink_dir).forward(device_id, session_id, records)


class SessionStore:
    """``<root>/<device>/<session>/{bundle.json,events.ndjson,verdict.json}`` plus ``index.ndjson``."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / "index.ndjson"
        self._lock = threading.Lock()
        self._index: list[dict] = self._read_index()

    def _read_index(self) -> list[dict]:
        if not self.index_path.exists():
            return []
        out = []
        for line in self.index_path.read_text("utf-8").splitlines():
            if line.strip():
                out.append(json.loads(line))
        return out

    def session_dir(self, device_id: str, session_id: str) -> Path:
        return self.root / safe_component(device_id) / safe_component(session_id)

    def save_attested(self, device_id: str, session_id: str, bundle_doc: dict,
                      events: list[dict], verdict: dict) -> Path:
        d = self.session_dir(device_id, session_id)
        _atomic_write(d / "bundle.json", json.dumps(bundle_doc, indent=2, sort_keys=True))
        _atomic_write(d / "events.ndjson", _ndjson(events))
        _atomic_write(d / "verdict.json", json.dumps(verdict, indent=2, sort_keys=True))
        return d

    def save_failure(self, record: dict) -> Path:
        path = self.root / safe_component(record.get("device_id")) / "failures.ndjson"
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        return path

    def append_index(self, entry: dict) -> None:
        with self._lock:
            with open(self.index_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
                fh.flush()
            self._index.append(dict(entry))

    def sessions(self, device_id: Optional[str] = None) -> list[dict]:
        with self._lock:
            return [dict(e) for e in self._index if device_id is None or e.get("device_id") == device_id]
