"""Rule documents: schema validation, predicate trees and glob matching.

A rule document::

    {
      "name": "...", "severity": "info|medium|high|critical", "description": "...",
      "where": {"all": [{"field": "event_type", "op": "eq", "value": "LoadImage"}, ...]},
      "group_by": ["caller", "event_type"],
      "threshold": {"count": 3, "window": 10000, "by": ["caller"]}     # optional
    }

``where`` nodes are ``{"all": [...]}``, ``{"any": [...]}``, ``{"not": node}`` or a
predicate ``{"field", "op", "value"}`` with ``op`` one of eq, neq, glob, exists.
An absent or empty ``where`` matches every event.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional, Union

EVENT_FIELDS = (
    "original_log", "uefi_timestamp", "event_type", "caller", "caller_start_address",
    "caller_end_address", "hooked_service", "hooked_by_driver", "whitelisted_hooking_driver",
    "status", "args", "service_address", "session_id", "log_id", "call_id",
)
SEVERITIES = ("info", "medium", "high", "critical")
OPS = ("eq", "neq", "glob", "exists")
_RULE_KEYS = {"name", "severity", "description", "where", "group_by", "threshold"}


class RuleSchemaError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


# -- value rendering --------------------------------------------------------

def args_text(args: Any) -> str:
    """Canonical ``Name:'value', ...`` rendering used for matching on ``args``."""
    if isinstance(args, str):
        return args
    if isinstance(args, Mapping):
        items = args.items()
    else:
        items = args or ()
    return ", ".join(f"{k}:'{v}'" for k, v in items)


def value_text(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (Mapping, list, tuple)):
        return args_text(value)
    return str(value)


def field_text(event: Mapping, name: str) -> str:
    return value_text(event.get(name))


# -- glob -------------------------------------------------------------------

@lru_cache(maxsize=512)
def _glob_regex(pattern: str) -> re.Pattern:
    parts = []
    for ch in pattern:
        if ch == "*":
            parts.append(".*")
        elif ch == "?":
            parts.append(".")
        else:
            parts.append(re.escape(ch))
    return re.compile("".join(parts), re.IGNORECASE | re.DOTALL)


def match_glob(pattern: str, value: str) -> bool:
    """Case-insensitive glob: ``*`` any run (path separators included), ``?`` one char."""
    return _glob_regex(pattern).fullmatch(value) is not None


# -- predicate trees --------------------------------------------------------

@dataclass(frozen=True)
class Predicate:
    field: str
    op: str
    value: Any

    def __call__(self, event: Mapping) -> bool:
        text = field_text(event, self.field)
        if self.op == "exists":
            return bool(text) == bool(self.value)
        want = value_text(self.value)
        if self.op == "eq":
            return text.casefold() == want.casefold()
        if self.op == "neq":
            return text.casefold() != want.casefold()
        return match_glob(want, text)


@dataclass(frozen=True)
class All:
    children: tuple

    def __call__(self, event):
        return all(c(event) for c in self.children)


@dataclass(frozen=True)
class Any_:
    children: tuple

    def __call__(self, event):
        return any(c(event) for c in self.children)


@dataclass(frozen=True)
class Not:
    child: Any

    def __call__(self, event):
        return not self.child(event)


Node = Union[Predicate, All, Any_, Not]


@dataclass(frozen=True)
class Threshold:
    count: int
    window: int
    by: tuple[str, ...] = ("caller",)


@dataclass(frozen=True)
class DetectionRule:
    name: str
    severity: str
    where: Node
    group_by: tuple[str, ...]
    description: str = ""
    threshold: Optional[Threshold] = None
    document: Optional[dict] = None

    def matches(self, event: Mapping) -> bool:
        return self.where(event)


def _compile_node(node: Any, path: str) -> Node:
    if not isinstance(node, Mapping):
        raise RuleSchemaError(path, "expected an object")
    keys = set(node)
    if keys <= {"all"} or keys == {"any"}:
        key = "any" if "any" in keys else "all"
        items = node.get(key, [])
        if not isinstance(items, list):
            raise RuleSchemaError(f"{path}.{key}", "expected a list")
        children = tuple(_compile_node(c, f"{path}.{key}[{i}]") for i, c in enumerate(items))
        return All(children) if key == "all" else Any_(children)
    if keys == {"not"}:
        return Not(_compile_node(node["not"], f"{path}.not"))
    if "field" in keys or "op" in keys:
        extra = keys - {"field", "op", "value"}
        if extra:
            raise RuleSchemaError(path, f"unknown keys {sorted(extra)}")
        field = node.get("field")
        if field not in EVENT_FIELDS:
            raise RuleSchemaError(f"{path}.field", f"unknown event field {field!r}")
        op = node.get("op")
        if op not in OPS:
            raise RuleSchemaError(f"{path}.op", f"unknown operator {op!r}")
        if "value" not in node:
            if op != "exists":
                raise RuleSchemaError(f"{path}.value", "missing value")
        value = node.get("value", True)
        if op == "glob" and not isinstance(value, str):
            raise RuleSchemaError(f"{path}.value", "glob patterns must be strings")
        if isinstance(value, (Mapping, list)):
            raise RuleSchemaError(f"{path}.value", "values must be scalars")
        return Predicate(field, op, value)
    raise RuleSchemaError(path, f"unrecognised node keys {sorted(keys)}")


def _fields(value: Any, path: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(f, str) for f in value):
        raise RuleSchemaError(path, "expected a list of field names")
    for i, f in enumerate(value):
        if f not in EVENT_FIELDS:
            raise RuleSchemaError(f"{path}[{i}]", f"unknown event field {f!r}")
    return tuple(value)


def compile_rule(document: Mapping, path: str = "$") -> DetectionRule:
    if not isinstance(document, Mapping):
        raise RuleSchemaError(path, "rule must be an object")
    extra = set(document) - _RULE_KEYS
    if extra:
        raise RuleSchemaError(path, f"unknown keys {sorted(extra)}")
    name = document.get("name")
    if not isinstance(name, str) or not name:
        raise RuleSchemaError(f"{path}.name", "required non-empty string")
    severity = document.get("severity", "medium")
    if severity not in SEVERITIES:
        raise RuleSchemaError(f"{path}.severity", f"must be one of {SEVERITIES}")
    where = document.get("where") or {}
    threshold = None
    if document.get("threshold") is not None:
        t = document["threshold"]
        if not isinstance(t, Mapping) or set(t) - {"count", "window", "by"}:
            raise RuleSchemaError(f"{path}.threshold", "expected {count, window, by}")
        try:
            count, window = int(t["count"]), int(t["window"])
        except (KeyError, TypeError, ValueError):
            raise RuleSchemaError(f"{path}.threshold", "count and window must be integers") from None
        if count < 1 or window < 0:
            raise RuleSchemaError(f"{path}.threshold", "count >= 1 and window >= 0 required")
        threshold = Threshold(count, window, _fields(t.get("by", ["caller"]), f"{path}.threshold.by"))
    return DetectionRule(
        name=name,
        severity=severity,
        where=_compile_node(where, f"{path}.where"),
        group_by=_fields(document.get("group_by", []), f"{path}.group_by"),
        description=str(document.get("description", "")),
        threshold=threshold,
        document=dict(document),
    )


def _compile_many(doc: Any, origin: str) -> list[DetectionRule]:
    if isinstance(doc, list):
        return [compile_rule(d, f"{origin}[{i}]") for i, d in enumerate(doc)]
    return [compile_rule(doc, origin)]


def load_rules(directory: Union[str, Path]) -> list[DetectionRule]:
    """Compile every ``*.json`` file in ``directory`` (one rule or an array per file)."""
    rules: list[DetectionRule] = []
    for path in sorted(Path(directory).glob("*.json")):
        try:
            doc = json.loads(path.read_text("utf-8"))
        except ValueError as exc:
            raise RuleSchemaError(str(path), f"invalid JSON: {exc}") from None
        rules.extend(_compile_many(doc, path.name))
    return rules


def builtin_rules() -> list[DetectionRule]:
    text = resources.files("peacock.detect").joinpath("builtin_rules.json").read_text("utf-8")
    return _compile_many(json.loads(text), "builtin_rules.json")
