"""Reference implementations written independently of the package code.

They favour the most literal reading of each definition over speed.
"""

from __future__ import annotations

import hashlib


def crc32_bitwise(data: bytes) -> int:
    crc = 0xFFFFFFFF
    for byte in data:
        for bit in range(8):
            b = (byte >> bit) & 1
            top = (crc ^ b) & 1
            crc >>= 1
            if top:
                crc ^= 0xEDB88320
    return crc ^ 0xFFFFFFFF


def chain_oracle(lines) -> bytes:
    state = b"\x00" * 32
    for line in lines:
        m = hashlib.sha256(line.encode("utf-8")).digest()
        state = hashlib.sha256(state + m).digest()
    return state


def glob_oracle(pattern: str, text: str) -> bool:
    p, t = pattern.lower(), text.lower()
    memo = {}

    def go(i, j):
        if (i, j) in memo:
            return memo[(i, j)]
        if i == len(p):
            r = j == len(t)
        elif p[i] == "*":
            r = go(i + 1, j) or (j < len(t) and go(i, j + 1))
        elif j < len(t) and (p[i] == "?" or p[i] == t[j]):
            r = go(i + 1, j + 1)
        else:
            r = False
        memo[(i, j)] = r
        return r

    return go(0, 0)


def _text(v) -> str:
    if v is None:
        return ""
    if v is True:
        return "true"
    if v is False:
        return "false"
    if isinstance(v, dict):
        return ", ".join("%s:'%s'" % (k, x) for k, x in v.items())
    return str(v)


def where_oracle(node, event) -> bool:
    if not node:
        return True
    if "all" in node:
        return all(where_oracle(c, event) for c in node["all"])
    if "any" in node:
        return any(where_oracle(c, event) for c in node["any"])
    if "not" in node:
        return not where_oracle(node["not"], event)
    have = _text(event.get(node["field"]))
    op = node["op"]
    if op == "exists":
        return (have != "") == bool(node.get("value", True))
    want = _text(node["value"])
    if op == "eq":
        return have.lower() == want.lower()
    if op == "neq":
        return have.lower() != want.lower()
    return glob_oracle(want, have)


def detect_oracle(rule_docs, events):
    """[{rule, severity, groups: [(keys-tuple, count)]}] by brute force."""
    out = []
    for rule in rule_docs:
        hits = [e for e in events if where_oracle(rule.get("where"), e)]
        th = rule.get("threshold")
        if th:
            by = th.get("by", ["caller"])
            keep = []
            for e in hits:
                key = [_text(e.get(f)) for f in by]
                same = [x for x in hits if [_text(x.get(f)) for f in by] == key]
                ok = False
                for start in same:
                    t0 = start["uefi_timestamp"]
                    inside = [x for x in same if t0 <= x["uefi_timestamp"] <= t0 + th["window"]]
                    if len(inside) >= th["count"] and any(x is e for x in inside):
                        ok = True
                        break
                if ok:
                    keep.append(e)
            hits = keep
        if not hits:
            continue
        counts = {}
        for e in hits:
            key = tuple(_text(e.get(f)) for f in rule.get("group_by", []))
            counts[key] = counts.get(key, 0) + 1
        groups = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        out.append({"rule": rule["name"], "severity": rule["severity"], "groups": groups})
    return out
