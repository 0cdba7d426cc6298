"""Scenario documents (JSON) and the interpreter that replays them."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

from . import services as svc
from .environment import (
    Call,
    HaltedBoot,
    ImageDescriptor,
    ScenarioReferenceError,
    SimEnvironment,
    apply_external_hook,
)

BUILTIN_SCENARIOS = ("baseline", "glupteba", "blacklotus", "lojax", "mosaicregressor")

EFI_GLOBAL_VARIABLE = "8BE4DF61-93CA-11D2-AA0D-00E098032B8C"


class ScenarioError(ValueError):
    pass


def _text(value: Any) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return format(value, "X")
    return str(value)


def build_args(service: str, given: dict[str, Any] | list) -> tuple[tuple[str, str], ...]:
    """Order arguments by the service schema, filling unspecified slots with '0'."""
    if isinstance(given, list):
        given = {k: v for k, v in given}
    given = dict(given)
    schema = svc.ARG_SCHEMAS.get(service)
    if schema is None:
        return tuple((k, _text(v)) for k, v in given.items())
    out = [(p.name, _text(given.pop(p.name, "0"))) for p in schema]
    out.extend((k, _text(v)) for k, v in given.items())
    return tuple(out)


# -- actions ----------------------------------------------------------------

class Action:
    def actors(self) -> list[str]:
        return []

    def children(self) -> list["Action"]:
        return []

    def run(self, env: SimEnvironment) -> None:
        raise NotImplementedError


def _caller(env: SimEnvironment, identity: Optional[str]) -> Optional[ImageDescriptor]:
    if identity is None:
        return None
    image = env.images.get(identity)
    if image is None:
        raise ScenarioReferenceError(f"undeclared image {identity!r}")
    if not env.is_loaded(identity):
        raise ScenarioReferenceError(f"image {identity!r} calls a service before it is loaded")
    return image


@dataclass
class InvokeService(Action):
    service: str
    caller: Optional[str]
    args: dict = field(default_factory=dict)
    forced_status: Optional[str] = None
    outs: Optional[dict] = None
    nested: list = field(default_factory=list)

    def actors(self):
        return [self.caller] if self.caller else []

    def children(self):
        return self.nested

    def run(self, env):
        env.advance()
        env.invoke(Call(self.service, _caller(env, self.caller), build_args(self.service, self.args),
                        self.forced_status, {k: _text(v) for k, v in (self.outs or {}).items()} or None,
                        tuple(self.nested)))


@dataclass
class LoadImage(Action):
    """Load ``image``. With a caller this goes through LoadImage/StartImage;
    without one the DXE dispatcher loads it directly (no service call)."""

    image: str
    caller: Optional[str] = None
    start: bool = True
    nested: list = field(default_factory=list)

    def actors(self):
        return [self.image] + ([self.caller] if self.caller else [])

    def children(self):
        return self.nested

    def run(self, env):
        env.advance()
        image = env.images.get(self.image)
        if image is None:
            raise ScenarioReferenceError(f"undeclared image {self.image!r}")
        if self.caller is None:
            env.load_image(image)
            for action in self.nested:
                env.execute(action)
            return
        caller = _caller(env, self.caller)
        parent = format(env.image_handles[caller.identity], "X")
        result = env.invoke(Call("LoadImage", caller, build_args("LoadImage", {
            "BootPolicy": "0", "ParentImageHandle": parent, "DevicePath": image.identity,
        })))
        if result.status != svc.STATUS_SUCCESS or not self.start:
            return
        handle = format(env.image_handles[image.identity], "X")
        env.invoke(Call("StartImage", caller, build_args("StartImage", {
            "ImageHandle": handle, "ImagePath": image.identity,
        }), nested=tuple(self.nested)))


@dataclass
class ExternalHook(Action):
    service: str
    by_image: str
    recompute_crc: bool = True

    def actors(self):
        return [self.by_image]

    def run(self, env):
        env.advance()
        apply_external_hook(env, self.service, self.by_image, self.recompute_crc)


@dataclass
class SetVariable(Action):
    caller: Optional[str]
    name: str
    vendor_guid: str = EFI_GLOBAL_VARIABLE
    data: str = "01"
    attributes: str = "7"

    def actors(self):
        return [self.caller] if self.caller else []

    def run(self, env):
        env.advance()
        data = self.data
        env.invoke(Call("SetVariable", _caller(env, self.caller), build_args("SetVariable", {
            "VariableName": self.name, "VendorGuid": self.vendor_guid, "Attributes": self.attributes,
            "DataSize": format(len(data) // 2, "X"), "Data": data.upper() or "0",
        })))


@dataclass
class GetVariable(Action):
    caller: Optional[str]
    name: str
    vendor_guid: str = EFI_GLOBAL_VARIABLE

    def actors(self):
        return [self.caller] if self.caller else []

    def run(self, env):
        env.advance()
        env.invoke(Call("GetVariable", _caller(env, self.caller), build_args("GetVariable", {
            "VariableName": self.name, "VendorGuid": self.vendor_guid,
        })))


@dataclass
class CreateEventEx(Action):
    caller: Optional[str]
    group_guid: str
    notify_function: str = "0"
    notify_tpl: str = "8"
    type: str = "200"

    def actors(self):
        return [self.caller] if self.caller else []

    def run(self, env):
        env.advance()
        image = _caller(env, self.caller)
        notify = self.notify_function
        if notify == "0" and image is not None:
            notify = format(env.code_address(image), "X")
        env.invoke(Call("CreateEventEx", image, build_args("CreateEventEx", {
            "Type": self.type, "NotifyTpl": self.notify_tpl, "NotifyFunction": notify,
            "NotifyContext": "0", "EventGroup": self.group_guid,
        })))


@dataclass
class DropEspFile(Action):
    caller: Optional[str]
    path: str
    data: str = ""

    def actors(self):
        return [self.caller] if self.caller else []

    def run(self, env):
        env.advance()
        _caller(env, self.caller)
        env.esp_files[self.path] = self.data.encode("utf-8")


_ACTION_TYPES = {
    "invoke": InvokeService,
    "load_image": LoadImage,
    "external_hook": ExternalHook,
    "set_variable": SetVariable,
    "get_variable": GetVariable,
    "create_event_ex": CreateEventEx,
    "drop_esp_file": DropEspFile,
}


def action_from_dict(doc: dict, path: str = "actions") -> Action:
    doc = dict(doc)
    op = doc.pop("op", None)
    cls = _ACTION_TYPES.get(op)
    if cls is None:
        raise ScenarioError(f"{path}: unknown action op {op!r}")
    if "nested" in doc:
        doc["nested"] = [action_from_dict(d, f"{path}.nested[{i}]") for i, d in enumerate(doc["nested"])]
    if cls is InvokeService and doc.get("service") not in svc.ALL_SERVICES:
        raise ScenarioError(f"{path}: unknown service {doc.get('service')!r}")
    try:
        return cls(**doc)
    except TypeError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


# -- scenario ---------------------------------------------------------------

@dataclass
class Scenario:
    name: str
    firmware_meta: dict
    images: list[ImageDescriptor]
    actions: list[Action]
    description: str = ""
    service_addresses: dict[str, int] = field(default_factory=dict)
    tick_stride: int = 997

    def walk(self):
        stack = list(reversed(self.actions))
        while stack:
            action = stack.pop()
            yield action
            stack.extend(reversed(action.children()))

    def check_references(self) -> None:
        declared = {img.identity for img in self.images}
        for action in self.walk():
            for actor in action.actors():
                if actor not in declared:
                    raise ScenarioReferenceError(f"{self.name}: undeclared image {actor!r}")


def _int(value) -> int:
    return int(value, 16) if isinstance(value, str) else int(value)


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        images = [ImageDescriptor(d["identity"], d["origin"], _int(d["start_address"]), _int(d["end_address"]))
                  for d in doc.get("images", [])]
        sc = Scenario(
            name=doc["name"],
            firmware_meta=dict(doc.get("firmware_meta", {})),
            images=images,
            actions=[action_from_dict(a, f"actions[{i}]") for i, a in enumerate(doc.get("actions", []))],
            description=doc.get("description", ""),
            service_addresses={k: _int(v) for k, v in doc.get("service_addresses", {}).items()},
            tick_stride=int(doc.get("tick_stride", 997)),
        )
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"invalid scenario document: {exc}") from None
    sc.check_references()
    return sc


def load_scenario(ref: Union[str, Path]) -> Scenario:
    """Load a scenario by builtin name or file path."""
    if isinstance(ref, str) and ref in BUILTIN_SCENARIOS:
        text = resources.files("peacock.sim").joinpath("scenarios", f"{ref}.json").read_text("utf-8")
    else:
        text = Path(ref).read_text("utf-8")
    return scenario_from_dict(json.loads(text))


def declare_images(env: SimEnvironment, scenario: Scenario) -> None:
    for image in scenario.images:
        env.declare_image(image)


def run_scenario(env: SimEnvironment, scenario: Scenario, agent=None):
    """Replay ``scenario`` on ``env``; returns the agent transcript (or None without an agent).

    Raises ``HaltedBoot`` carrying the partial transcript when a fail-secure
    agent stops the boot.
    """
    scenario.check_references()
    declare_images(env, scenario)
    if agent is not None and not agent.installed:
        agent.install_hooks(env)
    try:
        for action in scenario.actions:
            env.execute(action)
    except HaltedBoot as exc:
        exc.transcript = agent.transcript if agent is not None else None
        raise
    return agent.transcript if agent is not None else None
