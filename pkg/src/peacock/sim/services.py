"""Boot and Runtime Services inventory with per-service argument schemas."""

from __future__ import annotations

from dataclasses import dataclass

# Category -> services, in table order. Counts follow the UEFI 2.10 grouping:
# boot 9/5/18/6/7 = 45, runtime 8/4/2/6 = 20.
BOOT_SERVICE_GROUPS: dict[str, tuple[str, ...]] = {
    "Event, Timer, and Task Priority Services": (
        "CreateEvent", "CreateEventEx", "CloseEvent", "SignalEvent", "WaitForEvent",
        "CheckEvent", "SetTimer", "RaiseTPL", "RestoreTPL",
    ),
    "Memory Allocation Services": (
        "AllocatePages", "FreePages", "GetMemoryMap", "AllocatePool", "FreePool",
    ),
    "Protocol Handler Services": (
        "InstallProtocolInterface", "UninstallProtocolInterface", "ReinstallProtocolInterface",
        "RegisterProtocolNotify", "LocateHandle", "HandleProtocol", "Reserved",
        "LocateDevicePath", "OpenProtocol", "CloseProtocol", "OpenProtocolInformation",
        "ConnectController", "DisconnectController", "ProtocolsPerHandle",
        "LocateHandleBuffer", "LocateProtocol", "InstallMultipleProtocolInterfaces",
        "UninstallMultipleProtocolInterfaces",
    ),
    "Image Services": (
        "LoadImage", "StartImage", "UnloadImage", "ImageEntryPoint", "Exit", "ExitBootServices",
    ),
    "Miscellaneous Boot Services": (
        "SetWatchdogTimer", "Stall", "CopyMem", "SetMem", "GetNextMonotonicCount",
        "InstallConfigurationTable", "CalculateCrc32",
    ),
}

RUNTIME_SERVICE_GROUPS: dict[str, tuple[str, ...]] = {
    "Variable Services": (
        "GetVariable", "GetNextVariableName", "SetVariable", "QueryVariableInfo",
        "ReservedVariable1", "ReservedVariable2", "ReservedVariable3", "ReservedVariable4",
    ),
    "Time Services": ("GetTime", "SetTime", "GetWakeupTime", "SetWakeupTime"),
    "Virtual Memory Services": ("SetVirtualAddressMap", "ConvertPointer"),
    "Miscellaneous Runtime Services": (
        "GetNextHighMonotonicCount", "ResetSystem", "UpdateCapsule",
        "QueryCapsuleCapabilities", "ReservedMisc1", "ReservedMisc2",
    ),
}

BOOT_SERVICES: tuple[str, ...] = tuple(s for g in BOOT_SERVICE_GROUPS.values() for s in g)
RUNTIME_SERVICES: tuple[str, ...] = tuple(s for g in RUNTIME_SERVICE_GROUPS.values() for s in g)
ALL_SERVICES: tuple[str, ...] = BOOT_SERVICES + RUNTIME_SERVICES

# Default firmware implementation addresses. Boot services live in the DXE
# core image, runtime services in the runtime driver region.
BOOT_SERVICES_BASE = 0x7F6A0000
RUNTIME_SERVICES_BASE = 0x7FF40000
_SLOT_STRIDE = 0x6E2

STATUS_SUCCESS = "Success"
STATUS_NOT_FOUND = "Not Found"
STATUS_INVALID_PARAMETER = "Invalid Parameter"


@dataclass(frozen=True)
class Param:
    name: str
    out: bool = False


def _p(*spec: str) -> tuple[Param, ...]:
    # "Name" is an input, "Name*" an output that also appears on entry.
    return tuple(Param(s.rstrip("*"), s.endswith("*")) for s in spec)


# Named argument schemas for modelled services. Unlisted services take an
# opaque key/value list and report no outputs.
ARG_SCHEMAS: dict[str, tuple[Param, ...]] = {
    "CreateEvent": _p("Type", "NotifyTpl", "NotifyFunction", "NotifyContext", "Event*"),
    "CreateEventEx": _p("Type", "NotifyTpl", "NotifyFunction", "NotifyContext", "EventGroup", "Event*"),
    "SignalEvent": _p("Event"),
    "CloseEvent": _p("Event"),
    "AllocatePool": _p("PoolType", "Size", "Buffer*"),
    "FreePool": _p("Buffer"),
    "AllocatePages": _p("Type", "MemoryType", "Pages", "Memory*"),
    "InstallProtocolInterface": _p("Handle*", "Protocol", "InterfaceType", "Interface"),
    "RegisterProtocolNotify": _p("Protocol", "Event", "Registration*"),
    "LocateHandle": _p("SearchType", "Protocol", "SearchKey", "BufferSize*", "Buffer*"),
    "HandleProtocol": _p("Handle", "Protocol", "Interface*"),
    "LocateDevicePath": _p("Protocol", "DevicePath*", "Device*"),
    "OpenProtocol": _p("Handle", "Protocol", "Interface*", "AgentHandle", "ControllerHandle", "Attributes"),
    "CloseProtocol": _p("Handle", "Protocol", "AgentHandle", "ControllerHandle"),
    "LocateHandleBuffer": _p("SearchType", "Protocol", "SearchKey", "NoHandles*", "Buffer*"),
    "LocateProtocol": _p("Protocol", "Registration", "Interface*"),
    "LoadImage": _p("BootPolicy", "ParentImageHandle", "DevicePath", "SourceBuffer", "SourceSize", "ImageHandle*"),
    "StartImage": _p("ImageHandle", "ImagePath", "ExitDataSize*"),
    "UnloadImage": _p("ImageHandle"),
    "ExitBootServices": _p("ImageHandle", "MapKey"),
    "GetVariable": _p("VariableName", "VendorGuid", "Attributes*", "DataSize*", "Data*"),
    "SetVariable": _p("VariableName", "VendorGuid", "Attributes", "DataSize", "Data"),
    "GetNextVariableName": _p("VariableNameSize*", "VariableName*", "VendorGuid*"),
    "GetTime": _p("Time*", "Capabilities*"),
    "ResetSystem": _p("ResetType", "ResetStatus"),
    "Stall": _p("Microseconds"),
    "SetWatchdogTimer": _p("Timeout", "WatchdogCode"),
}


def service_kind(service: str) -> str:
    if service in BOOT_SERVICES:
        return "Boot"
    if service in RUNTIME_SERVICES:
        return "Runtime"
    raise KeyError(service)


def default_service_address(service: str) -> int:
    if service in BOOT_SERVICES:
        return BOOT_SERVICES_BASE + 0x10E + BOOT_SERVICES.index(service) * _SLOT_STRIDE
    return RUNTIME_SERVICES_BASE + 0x10E + RUNTIME_SERVICES.index(service) * _SLOT_STRIDE


def output_names(service: str) -> tuple[str, ...]:
    return tuple(p.name for p in ARG_SCHEMAS.get(service, ()) if p.out)
