"""Filter -> (optional burst window) -> group-by count -> sort, one alert per matching rule."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional, Sequence

from .rules import DetectionRule, Threshold, value_text


@dataclass(frozen=True)
class AlertGroup:
    keys: dict
    count: int

    def to_dict(self) -> dict:
        return {"keys": dict(self.keys), "count": self.count}


@dataclass(frozen=True)
class Alert:
    rule: str
    severity: str
    session_id: Optional[str]
    device_id: Optional[str]
    groups: tuple[AlertGroup, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"rule": self.rule, "severity": self.severity, "device_id": self.device_id,
                "session_id": self.session_id, "groups": [g.to_dict() for g in self.groups]}


def _key_value(value: Any) -> Any:
    # dict-valued fields (args) group by their canonical text
    if isinstance(value, (Mapping, list, tuple)):
        return value_text(value)
    return value


def _in_burst(events: Sequence[Mapping], threshold: Threshold) -> list[Mapping]:
    """Events falling inside some window of ``threshold.window`` ticks that holds
    at least ``threshold.count`` events of the same ``by`` group."""
    buckets: dict[tuple, list[tuple[int, int]]] = defaultdict(list)
    for idx, e in enumerate(events):
        key = tuple(value_text(e.get(f)) for f in threshold.by)
        buckets[key].append((int(e.get("uefi_timestamp") or 0), idx))
    keep: set[int] = set()
    for items in buckets.values():
        items.sort()
        hi = 0
        for lo in range(len(items)):
            if hi < lo:
                hi = lo
            while hi + 1 < len(items) and items[hi + 1][0] - items[lo][0] <= threshold.window:
                hi += 1
            if hi - lo + 1 >= threshold.count:
                keep.update(idx for _, idx in items[lo:hi + 1])
    return [e for i, e in enumerate(events) if i in keep]


def evaluate_rule(rule: DetectionRule, events: Sequence[Mapping],
                  device_id: Optional[str] = None, session_id: Optional[str] = None) -> Optional[Alert]:
    matched = [e for e in events if rule.matches(e)]
    if rule.threshold is not None:
        matched = _in_burst(matched, rule.threshold)
    if not matched:
        return None
    counts: dict[tuple, int] = {}
    for e in matched:
        key = tuple(_key_value(e.get(f)) for f in rule.group_by)
        counts[key] = counts.get(key, 0) + 1
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], tuple(value_text(v) for v in kv[0])))
    groups = tuple(AlertGroup(dict(zip(rule.group_by, key)), n) for key, n in ordered)
    if session_id is None:
        sessions = {e.get("session_id") for e in matched}
        session_id = sessions.pop() if len(sessions) == 1 else None
    return Alert(rule.name, rule.severity, session_id, device_id, groups)


def evaluate(rules: Iterable[DetectionRule], events: Iterable[Mapping],
             device_id: Optional[str] = None, session_id: Optional[str] = None) -> list[Alert]:
    events = [e if isinstance(e, Mapping) else e.to_dict() for e in events]
    alerts = []
    for rule in rules:
        alert = evaluate_rule(rule, events, device_id, session_id)
        if alert is not None:
            alerts.append(alert)
    return alerts
