"""The UEFI monitoring agent: proxy hooks, call logging, measurement, hook integrity."""

from __future__ import annotations

import hashlib
import json
import logging
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .measured_log import (
    CheckCaller,
    Enter,
    Exit,
    Halt,
    Header,
    HookCheck,
    RawLogEntry,
    entry_digest,
    format_entry,
)
from .sim.environment import Call, CallResult, Handler, ImageDescriptor, SimEnvironment
from .tpm import PCR_COUNT, InvalidPcrIndex, SoftTPM

log = logging.getLogger(__name__)

EXPORT_PATH = "\\EFI\\peacock\\boot.log"
AGENT_IMAGE = ImageDescriptor("5B1E7C3A-2D4F-4A8B-9C6E-0F1A2B3C4D5E", "FirmwareVolume",
                              0x7F700000, 0x7F740000)
FAIL_SECURE = "fail-secure"
FAIL_OPEN = "fail-open"
AGENT_IMAGE_HANDLE = 0x7E800018
_NO_CALLER = object()


class AlreadyInstalled(RuntimeError):
    pass


@dataclass(frozen=True)
class AgentConfig:
    whitelist: frozenset[str] = frozenset()
    policy: str = FAIL_OPEN
    monitored_services: Optional[frozenset[str]] = None
    pcr_index: int = 23

    def __post_init__(self):
        if self.policy not in (FAIL_SECURE, FAIL_OPEN):
            raise ValueError(f"policy must be {FAIL_SECURE!r} or {FAIL_OPEN!r}")
        if not 0 <= self.pcr_index < PCR_COUNT:
            raise InvalidPcrIndex(f"pcr_index {self.pcr_index} outside 0..{PCR_COUNT - 1}")

    @classmethod
    def from_dict(cls, doc: dict) -> "AgentConfig":
        monitored = doc.get("monitored_services")
        return cls(
            whitelist=frozenset(doc.get("whitelist", ())),
            policy=doc.get("policy", FAIL_OPEN),
            monitored_services=frozenset(monitored) if monitored is not None else None,
            pcr_index=int(doc.get("pcr_index", 23)),
        )

    @classmethod
    def load(cls, path) -> "AgentConfig":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))

    def to_dict(self) -> dict:
        doc = {"whitelist": sorted(self.whitelist), "policy": self.policy, "pcr_index": self.pcr_index}
        if self.monitored_services is not None:
            doc["monitored_services"] = sorted(self.monitored_services)
        return doc


@dataclass
class HookRecord:
    service: str
    original_target: int
    proxy: int


@dataclass
class HookSet:
    records: dict[str, HookRecord] = field(default_factory=dict)
    install_order: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class IntegrityVerdict:
    service: str
    hooked_by: str
    whitelisted: bool


@dataclass
class BootTranscript:
    entries: list[RawLogEntry] = field(default_factory=list)
    lines: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.lines)

    def text(self) -> str:
        return "\n".join(self.lines)


class ProxyHandler(Handler):
    def __init__(self, agent: "PeacockAgent", service: str, address: int, next_target: int):
        self.agent = agent
        self.service = service
        self.address = address
        self.next_target = next_target
        self.owner = AGENT_IMAGE.identity
        self.active = True

    def __call__(self, env, call):
        if not self.active:
            return env.dispatch(self.next_target, call)
        return self.agent.intercept(env, call, self)


def measure_entry(tpm: SoftTPM, pcr_index: int, entry) -> bytes:
    line = format_entry(entry) if isinstance(entry, RawLogEntry) else entry
    return tpm.pcr_extend(pcr_index, entry_digest(line))


def session_id_for_seed(seed: Optional[int | str]) -> str:
    if seed is None:
        return str(uuid.uuid4())
    digest = hashlib.sha256(f"peacock-session:{seed}".encode()).digest()
    return str(uuid.UUID(bytes=digest[:16], version=4))


class PeacockAgent:
    def __init__(self, tpm: SoftTPM, config: AgentConfig | None = None,
                 session_id: str | None = None, seed: int | None = 0):
        self.tpm = tpm
        self.config = config or AgentConfig()
        self.session_id = session_id or session_id_for_seed(seed)
        self.transcript = BootTranscript()
        self.hookset = HookSet()
        self.env: SimEnvironment | None = None
        self.lid = 0
        self.cid = 0
        self._proxies: dict[str, ProxyHandler] = {}
        self._last_caller: object = _NO_CALLER
        self._reported: set[tuple[str, int]] = set()

    @property
    def installed(self) -> bool:
        return self.env is not None

    # -- records ------------------------------------------------------------

    def emit(self, body, cid: int = 0) -> RawLogEntry:
        self.lid += 1
        entry = RawLogEntry(self.lid, self.env.advance(), cid, body)
        line = format_entry(entry)
        measure_entry(self.tpm, self.config.pcr_index, line)
        self.transcript.entries.append(entry)
        self.transcript.lines.append(line)
        return entry

    def _monitored(self, service: str) -> bool:
        ms = self.config.monitored_services
        return ms is None or service in ms

    # -- operations ---------------------------------------------------------

    def install_hooks(self, env: SimEnvironment) -> HookSet:
        if self.installed:
            raise AlreadyInstalled("agent hooks already installed")
        self.env = env
        # reserved handle: installing the agent must not shift handles seen by other images
        env.load_image(AGENT_IMAGE, handle=AGENT_IMAGE_HANDLE)
        meta = env.firmware_meta
        self.emit(Header(self.session_id, str(meta.get("vendor", "")), str(meta.get("version", "")),
                         str(meta.get("release_date", ""))))
        for table in (env.boot_table, env.runtime_table):
            for name, slot in table.entries.items():
                if not self._monitored(name):
                    continue
                proxy = ProxyHandler(self, name, env.code_address(AGENT_IMAGE), slot.current_target)
                env.register_handler(proxy)
                self.hookset.records[name] = HookRecord(name, slot.current_target, proxy.address)
                self.hookset.install_order.append(name)
                self._proxies[name] = proxy
                slot.current_target = proxy.address
            table.refresh_crc()
        env.after_action.append(self._after_action)
        return self.hookset

    def intercept(self, env: SimEnvironment, call: Call, proxy: ProxyHandler) -> CallResult:
        self.cid += 1
        cid = self.cid
        caller = call.caller
        key = caller.identity if caller is not None else None
        if key != self._last_caller:
            self._last_caller = key
            if caller is None:
                self.emit(CheckCaller("Unknown", "Unknown", 0, 0), cid)
            else:
                self.emit(CheckCaller("GUID" if caller.is_guid else "Path", caller.identity,
                                      caller.start_address, caller.end_address), cid)
        self.emit(Enter(call.service, proxy.next_target, call.args), cid)
        result = env.dispatch(proxy.next_target, call)
        self.emit(Exit(call.service, proxy.next_target, result.outs, result.status), cid)
        return result

    def _after_action(self, env: SimEnvironment) -> None:
        if not env.halted:
            self.check_hook_integrity(env)

    def check_hook_integrity(self, env: SimEnvironment | None = None) -> list[IntegrityVerdict]:
        env = env or self.env
        verdicts: list[IntegrityVerdict] = []
        for table in (env.boot_table, env.runtime_table):
            for name, slot in table.entries.items():
                proxy = self._proxies.get(name)
                expected = proxy.address if proxy is not None else slot.original_target
                current = slot.current_target
                if current == expected or (name, current) in self._reported:
                    continue
                handler = env.handlers.get(current)
                hooked_by = (handler.owner if handler is not None else None) or "Unknown"
                allowed = hooked_by in self.config.whitelist
                verdicts.append(IntegrityVerdict(name, hooked_by, allowed))
                self._reported.add((name, current))
                self.emit(HookCheck(name, hooked_by, allowed))
                if allowed:
                    if proxy is not None:
                        self._rehook(env, table, name, slot)
                    continue
                log.warning("unauthorized hook on %s by %s", name, hooked_by)
                if self.config.policy == FAIL_SECURE:
                    self.emit(Halt(f"Unauthorized hook on {name} by {hooked_by}"))
                    env.halted = True
                    return verdicts
        return verdicts

    def _rehook(self, env, table, name, slot) -> None:
        old = self._proxies[name]
        old.active = False
        proxy = ProxyHandler(self, name, env.code_address(AGENT_IMAGE), slot.current_target)
        env.register_handler(proxy)
        self._proxies[name] = proxy
        self.hookset.records[name].proxy = proxy.address
        slot.current_target = proxy.address
        table.refresh_crc()

    def finalize_and_export(self, env: SimEnvironment | None = None,
                            transcript: BootTranscript | None = None) -> str:
        env = env or self.env
        transcript = transcript or self.transcript
        env.esp_files[EXPORT_PATH] = transcript.text().encode("utf-8")
        return EXPORT_PATH
