"""Deterministic simulated DXE environment.

Service tables hold *handler addresses*; every address resolves to a handler
object in ``SimEnvironment.handlers``. Invoking a service dispatches to the
slot's current target, so anything that rewrites a slot (the monitoring
agent, a bootkit) sits in the call path exactly as with real
function-pointer hooking.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

from . import services as svc
from .crc import crc32

GUID_RE = re.compile(r"[0-9A-F]{8}-[0-9A-F]{4}-[0-9A-F]{4}-[0-9A-F]{4}-[0-9A-F]{12}")
ORIGINS = ("FirmwareVolume", "ESP", "OpROM", "Shell")
DEFAULT_TICK_STRIDE = 997


class SimError(Exception):
    pass


class UnknownService(SimError, KeyError):
    pass


class ScenarioReferenceError(SimError):
    """An action references an image the scenario never declared (or loaded)."""


class HaltedBoot(SimError):
    """Boot stopped by a fail-secure policy; ``transcript`` holds what was logged."""

    def __init__(self, reason: str, transcript=None):
        super().__init__(reason)
        self.reason = reason
        self.transcript = transcript


@dataclass(frozen=True)
class ImageDescriptor:
    identity: str
    origin: str
    start_address: int
    end_address: int

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown image origin {self.origin!r}")
        if not self.start_address < self.end_address:
            raise ValueError(f"{self.identity}: start_address must be below end_address")
        if self.origin == "FirmwareVolume" and not GUID_RE.fullmatch(self.identity):
            raise ValueError(f"firmware volume image needs a canonical GUID, got {self.identity!r}")

    @property
    def is_guid(self) -> bool:
        return bool(GUID_RE.fullmatch(self.identity))


# -- service tables ---------------------------------------------------------

@dataclass
class Slot:
    current_target: int
    original_target: int


@dataclass
class ServiceTable:
    kind: str
    entries: dict[str, Slot]
    header_crc32: int = 0

    def serialize(self) -> bytes:
        out = bytearray()
        for name, slot in self.entries.items():
            out += name.encode("ascii")
            out += struct.pack("<Q", slot.current_target)
        return bytes(out)

    def crc_valid(self) -> bool:
        return self.header_crc32 == compute_table_crc32(self)

    def refresh_crc(self) -> None:
        self.header_crc32 = compute_table_crc32(self)

    def snapshot(self) -> tuple:
        return (self.header_crc32, tuple((n, s.current_target, s.original_target) for n, s in self.entries.items()))


def compute_table_crc32(table: ServiceTable) -> int:
    return crc32(table.serialize())


# -- calls and handlers -----------------------------------------------------

Pairs = tuple[tuple[str, str], ...]


@dataclass
class Call:
    service: str
    caller: Optional[ImageDescriptor]
    args: Pairs
    forced_status: Optional[str] = None
    outs_override: Optional[dict[str, str]] = None
    nested: tuple = ()


@dataclass(frozen=True)
class CallResult:
    status: str
    outs: Pairs = ()


class Handler:
    """Something a table slot can point at."""

    address: int
    owner: Optional[str] = None

    def __call__(self, env: "SimEnvironment", call: Call) -> CallResult:
        raise NotImplementedError


class FirmwareHandler(Handler):
    """Built-in pass-through implementation of one service."""

    def __init__(self, service: str, address: int):
        self.service = service
        self.address = address

    def __call__(self, env, call):
        for action in call.nested:
            env.execute(action)
        status, outs = _firmware_semantics(env, call)
        outs = dict(outs)
        if call.outs_override:
            outs.update(call.outs_override)
        if call.forced_status is not None:
            status = call.forced_status
        ordered = tuple((n, outs.get(n, "0")) for n in svc.output_names(call.service))
        extra = tuple((n, v) for n, v in outs.items() if n not in svc.output_names(call.service))
        return CallResult(status, ordered + extra)


class HookHandler(Handler):
    """A third-party hook: runs in ``owner``'s image and chains to the previous target."""

    def __init__(self, service: str, owner: str, address: int, next_target: int):
        self.service = service
        self.owner = owner
        self.address = address
        self.next_target = next_target

    def __call__(self, env, call):
        return env.dispatch(self.next_target, call)


def _arg(call: Call, name: str, default: str = "0") -> str:
    for n, v in call.args:
        if n == name:
            return v
    return default


def _firmware_semantics(env: "SimEnvironment", call: Call) -> tuple[str, dict[str, str]]:
    s = call.service
    if s in ("LocateProtocol", "HandleProtocol", "OpenProtocol"):
        guid = _arg(call, "Protocol").upper()
        if guid in env.protocols:
            return svc.STATUS_SUCCESS, {"Interface": format(env.protocols[guid], "X")}
        return (svc.STATUS_NOT_FOUND if s == "LocateProtocol" else "Unsupported"), {"Interface": "0"}
    if s == "LocateHandleBuffer":
        guid = _arg(call, "Protocol").upper()
        if guid in env.protocols:
            return svc.STATUS_SUCCESS, {"NoHandles": str(env.protocol_handles.get(guid, 1)),
                                        "Buffer": format(env.allocate(0x40), "X")}
        return svc.STATUS_NOT_FOUND, {"NoHandles": "0", "Buffer": "0"}
    if s == "InstallProtocolInterface":
        guid = _arg(call, "Protocol").upper()
        env.protocols[guid] = int(_arg(call, "Interface"), 16) or env.allocate(0x20)
        env.protocol_handles[guid] = env.protocol_handles.get(guid, 0) + 1
        return svc.STATUS_SUCCESS, {"Handle": format(env.new_handle(), "X")}
    if s in ("AllocatePool", "AllocatePages"):
        key = "Buffer" if s == "AllocatePool" else "Memory"
        return svc.STATUS_SUCCESS, {key: format(env.allocate(0x100), "X")}
    if s in ("CreateEvent", "CreateEventEx"):
        handle = env.new_handle()
        if s == "CreateEventEx":
            env.event_registrations.append(
                {"group_guid": _arg(call, "EventGroup").upper(),
                 "registrant": call.caller.identity if call.caller else "Unknown"})
        return svc.STATUS_SUCCESS, {"Event": format(handle, "X")}
    if s == "LoadImage":
        path = _arg(call, "DevicePath")
        image = env.images.get(path)
        if image is None:
            return svc.STATUS_NOT_FOUND, {"ImageHandle": "0"}
        env.load_image(image)
        return svc.STATUS_SUCCESS, {"ImageHandle": format(env.image_handles[image.identity], "X")}
    if s == "StartImage":
        return svc.STATUS_SUCCESS, {"ExitDataSize": "0"}
    if s == "GetVariable":
        key = (_arg(call, "VariableName"), _arg(call, "VendorGuid").upper())
        if key not in env.nvram:
            return svc.STATUS_NOT_FOUND, {"DataSize": "0"}
        attrs, data = env.nvram[key]
        return svc.STATUS_SUCCESS, {"Attributes": attrs, "DataSize": format(len(data), "X"),
                                    "Data": data.hex().upper() or "0"}
    if s == "SetVariable":
        key = (_arg(call, "VariableName"), _arg(call, "VendorGuid").upper())
        data_hex = _arg(call, "Data", "")
        data = bytes.fromhex(data_hex) if data_hex not in ("", "0") else b""
        if not data:
            if key not in env.nvram:
                return svc.STATUS_NOT_FOUND, {}
            del env.nvram[key]
        else:
            env.nvram[key] = (_arg(call, "Attributes"), data)
        return svc.STATUS_SUCCESS, {}
    if s == "ExitBootServices":
        env.boot_services_exited = True
        return svc.STATUS_SUCCESS, {}
    return svc.STATUS_SUCCESS, {}


# -- environment ------------------------------------------------------------

@dataclass
class SimEnvironment:
    firmware_meta: dict
    boot_table: ServiceTable
    runtime_table: ServiceTable
    handlers: dict[int, Handler] = field(default_factory=dict)
    images: dict[str, ImageDescriptor] = field(default_factory=dict)
    loaded_images: list[ImageDescriptor] = field(default_factory=list)
    image_handles: dict[str, int] = field(default_factory=dict)
    nvram: dict[tuple[str, str], tuple[str, bytes]] = field(default_factory=dict)
    esp_files: dict[str, bytes] = field(default_factory=dict)
    event_registrations: list[dict] = field(default_factory=list)
    protocols: dict[str, int] = field(default_factory=dict)
    protocol_handles: dict[str, int] = field(default_factory=dict)
    tick: int = 0
    tick_stride: int = DEFAULT_TICK_STRIDE
    halted: bool = False
    boot_services_exited: bool = False
    results: list[tuple[str, CallResult]] = field(default_factory=list)
    after_action: list[Callable[["SimEnvironment"], None]] = field(default_factory=list)
    _next_handle: int = 0x7E8A0018
    _heap: int = 0x7D000000
    _image_cursor: dict[str, int] = field(default_factory=dict)
    _hook_undo: dict[str, list] = field(default_factory=dict)

    # tables
    def table_for(self, service: str) -> ServiceTable:
        if service in self.boot_table.entries:
            return self.boot_table
        if service in self.runtime_table.entries:
            return self.runtime_table
        raise UnknownService(service)

    def slot(self, service: str) -> Slot:
        return self.table_for(service).entries[service]

    def all_slots(self) -> Iterable[tuple[str, Slot]]:
        yield from self.boot_table.entries.items()
        yield from self.runtime_table.entries.items()

    # clock and allocators
    def advance(self) -> int:
        self.tick += self.tick_stride
        return self.tick

    def new_handle(self) -> int:
        h = self._next_handle
        self._next_handle += 0x18
        return h

    def allocate(self, size: int) -> int:
        addr = self._heap
        self._heap += (size + 0xF) & ~0xF
        return addr

    def code_address(self, image: ImageDescriptor) -> int:
        """Next free handler address inside ``image``'s loaded range."""
        off = self._image_cursor.get(image.identity, 0x1000)
        addr = image.start_address + off
        if addr >= image.end_address:
            addr = image.start_address + 0x10 + (off % max(image.end_address - image.start_address - 0x10, 1))
        self._image_cursor[image.identity] = off + 0x40
        return addr

    def register_handler(self, handler: Handler) -> int:
        while handler.address in self.handlers:
            handler.address += 4
        self.handlers[handler.address] = handler
        return handler.address

    # images
    def declare_image(self, image: ImageDescriptor) -> None:
        self.images[image.identity] = image

    def load_image(self, image: ImageDescriptor, handle: Optional[int] = None) -> None:
        """Mark ``image`` loaded. A fixed ``handle`` leaves the shared allocator untouched."""
        self.images.setdefault(image.identity, image)
        if image.identity not in self.image_handles:
            self.image_handles[image.identity] = self.new_handle() if handle is None else handle
            self.loaded_images.append(image)

    def is_loaded(self, identity: str) -> bool:
        return identity in self.image_handles

    def image_for_handle(self, handle: int) -> Optional[ImageDescriptor]:
        for ident, h in self.image_handles.items():
            if h == handle:
                return self.images[ident]
        return None

    # dispatch
    def dispatch(self, target: int, call: Call) -> CallResult:
        return self.handlers[target](self, call)

    def invoke(self, call: Call) -> CallResult:
        if self.halted:
            raise HaltedBoot("boot halted")
        result = self.dispatch(self.slot(call.service).current_target, call)
        self.results.append((call.service, result))
        return result

    def execute(self, action) -> None:
        """Run one scenario action, then the post-action observers."""
        if self.halted:
            raise HaltedBoot("boot halted")
        action.run(self)
        for observer in list(self.after_action):
            observer(self)
        if self.halted:
            raise HaltedBoot("boot halted")


def build_environment(firmware_meta: dict | None = None,
                      service_addresses: dict[str, int] | None = None,
                      tick_stride: int = DEFAULT_TICK_STRIDE) -> SimEnvironment:
    """Fresh environment: full 45 + 20 inventory, every slot on its firmware handler."""
    overrides = service_addresses or {}
    for name in overrides:
        if name not in svc.ALL_SERVICES:
            raise UnknownService(name)
    handlers: dict[int, Handler] = {}

    def table(kind: str, names: tuple[str, ...]) -> ServiceTable:
        entries = {}
        for name in names:
            addr = overrides.get(name, svc.default_service_address(name))
            if addr in handlers:
                raise ValueError(f"duplicate service address {addr:X}")
            handlers[addr] = FirmwareHandler(name, addr)
            entries[name] = Slot(addr, addr)
        t = ServiceTable(kind, entries)
        t.refresh_crc()
        return t

    env = SimEnvironment(
        firmware_meta=dict(firmware_meta or {}),
        boot_table=table("Boot", svc.BOOT_SERVICES),
        runtime_table=table("Runtime", svc.RUNTIME_SERVICES),
        tick_stride=tick_stride,
    )
    env.handlers.update(handlers)
    return env


def _image(env: SimEnvironment, image) -> ImageDescriptor:
    if isinstance(image, ImageDescriptor):
        return image
    try:
        return env.images[image]
    except KeyError:
        raise ScenarioReferenceError(f"undeclared image {image!r}") from None


def apply_external_hook(env: SimEnvironment, service: str, by_image, recompute_crc: bool) -> int:
    """Point ``service`` at a hook owned by ``by_image``; returns the hook's address."""
    table = env.table_for(service)
    image = _image(env, by_image)
    if not env.is_loaded(image.identity):
        raise ScenarioReferenceError(f"image {image.identity!r} is not loaded")
    slot = table.entries[service]
    env._hook_undo.setdefault(service, []).append((slot.current_target, table.header_crc32))
    hook = HookHandler(service, image.identity, env.code_address(image), slot.current_target)
    addr = env.register_handler(hook)
    slot.current_target = addr
    if recompute_crc:
        table.refresh_crc()
    return addr


def remove_external_hook(env: SimEnvironment, service: str) -> None:
    """Undo the most recent ``apply_external_hook`` on ``service``."""
    table = env.table_for(service)
    try:
        target, crc = env._hook_undo[service].pop()
    except (KeyError, IndexError):
        raise SimError(f"no external hook recorded on {service}") from None
    table.entries[service].current_target = target
    table.header_crc32 = crc
