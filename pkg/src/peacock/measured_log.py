"""Raw agent log records: formatting, strict parsing and hash chaining.

One record is one physical line::

    line := "(LID:" int ") (T:" int ") (CID:" int ") " body

where ``body`` is one of the record kinds below. ``format_entry`` and
``parse_entry`` are exact inverses. See ``docs/log-grammar.md`` for the
full EBNF.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)

GUID_RE = re.compile(r"[0-9A-F]{8}-[0-9A-F]{4}-[0-9A-F]{4}-[0-9A-F]{4}-[0-9A-F]{12}")
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_SERVICE_RE = _NAME_RE
_FORBIDDEN_IN_VALUE = ("'", "\n", "\r")


class MalformedLine(ValueError):
    """A log line does not match the record grammar."""

    def __init__(self, offset: int, expected: str, line: str = ""):
        self.offset = offset
        self.expected = expected
        self.line = line
        super().__init__(f"malformed log line at offset {offset}: expected {expected}")


# -- record bodies ----------------------------------------------------------

Pairs = tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class Header:
    session_id: str
    vendor: str
    version: str
    release_date: str


@dataclass(frozen=True)
class CheckCaller:
    """Caller identification. ``kind`` is ``GUID``, ``Path`` or ``Unknown``."""

    kind: str
    identity: str
    start_address: int
    end_address: int


@dataclass(frozen=True)
class Enter:
    service: str
    service_address: int
    args: Pairs = ()


@dataclass(frozen=True)
class Exit:
    service: str
    service_address: int
    outs: Pairs = ()
    ret_status: str = "Success"


@dataclass(frozen=True)
class HookCheck:
    service: str
    hooked_by: str
    whitelisted: bool


@dataclass(frozen=True)
class Halt:
    reason: str


Body = Union[Header, CheckCaller, Enter, Exit, HookCheck, Halt]


@dataclass(frozen=True)
class RawLogEntry:
    lid: int
    t: int
    cid: int
    body: Body = field(default=None)  # type: ignore[assignment]


# -- formatting -------------------------------------------------------------

def _q(value: str) -> str:
    value = str(value)
    for ch in _FORBIDDEN_IN_VALUE:
        if ch in value:
            raise ValueError(f"log values may not contain {ch!r}: {value!r}")
    return f"'{value}'"


def _hex(value: int) -> str:
    if value < 0:
        raise ValueError("addresses are unsigned")
    return format(value, "X")


def _pairs(pairs: Pairs) -> str:
    out = []
    for name, value in pairs:
        if not _NAME_RE.fullmatch(name) or name == "RetStatus":
            raise ValueError(f"invalid argument name {name!r}")
        out.append(f", {name}:{_q(value)}")
    return "".join(out)


def format_body(body: Body) -> str:
    if isinstance(body, Header):
        return (
            f"[PeacockHeader] SessionID:{_q(body.session_id)}, Vendor:{_q(body.vendor)}, "
            f"Version:{_q(body.version)}, ReleaseDate:{_q(body.release_date)}"
        )
    if isinstance(body, CheckCaller):
        if body.kind == "GUID" and not GUID_RE.fullmatch(body.identity):
            raise ValueError(f"not a canonical GUID: {body.identity!r}")
        if body.kind not in ("GUID", "Path", "Unknown"):
            raise ValueError(f"unknown caller kind {body.kind!r}")
        return (
            f"[CheckCaller] Caller {body.kind} - {_q(body.identity)}, "
            f"start address {_hex(body.start_address)}, end address {_hex(body.end_address)}"
        )
    if isinstance(body, Enter):
        return (
            f"Enter {body.service} - Service Address:{_q(_hex(body.service_address))}"
            f"{_pairs(body.args)}"
        )
    if isinstance(body, Exit):
        return (
            f"Exit {body.service} - Service Address:{_q(_hex(body.service_address))}"
            f"{_pairs(body.outs)}, RetStatus:{_q(body.ret_status)}"
        )
    if isinstance(body, HookCheck):
        flag = "true" if body.whitelisted else "false"
        return (
            f"[HookCheck] Service:{_q(body.service)}, HookedBy:{_q(body.hooked_by)}, "
            f"Whitelisted:'{flag}'"
        )
    if isinstance(body, Halt):
        return f"[Halt] Reason:{_q(body.reason)}"
    raise TypeError(f"not a log record body: {body!r}")


def format_entry(entry: RawLogEntry) -> str:
    for n in (entry.lid, entry.t, entry.cid):
        if n < 0:
            raise ValueError("LID/T/CID are non-negative")
    return f"(LID:{entry.lid}) (T:{entry.t}) (CID:{entry.cid}) {format_body(entry.body)}"


# -- parsing ----------------------------------------------------------------

class _Cursor:
    def __init__(self, line: str):
        self.s = line
        self.i = 0

    def fail(self, expected: str, at: int | None = None):
        raise MalformedLine(self.i if at is None else at, expected, self.s)

    def lit(self, text: str) -> None:
        if not self.s.startswith(text, self.i):
            self.fail(repr(text))
        self.i += len(text)

    def peek(self, text: str) -> bool:
        return self.s.startswith(text, self.i)

    def integer(self) -> int:
        j = self.i
        while j < len(self.s) and self.s[j].isdigit() and self.s[j].isascii():
            j += 1
        digits = self.s[self.i:j]
        if not digits or (len(digits) > 1 and digits[0] == "0"):
            self.fail("decimal integer")
        self.i = j
        return int(digits)

    def hexnum(self) -> int:
        j = self.i
        while j < len(self.s) and self.s[j] in "0123456789ABCDEF":
            j += 1
        digits = self.s[self.i:j]
        if not digits or (len(digits) > 1 and digits[0] == "0"):
            self.fail("uppercase hex number")
        self.i = j
        return int(digits, 16)

    def quoted(self) -> str:
        self.lit("'")
        j = self.s.find("'", self.i)
        if j < 0:
            self.fail("closing quote", len(self.s))
        value = self.s[self.i:j]
        bad = [k for k, ch in enumerate(value) if ch in "\n\r"]
        if bad:
            self.fail("quoted value", self.i + bad[0])
        self.i = j + 1
        return value

    def quoted_hex(self) -> int:
        self.lit("'")
        value = self.hexnum()
        self.lit("'")
        return value

    def guid(self) -> str:
        start = self.i
        m = GUID_RE.match(self.s, self.i)
        if not m:
            self.fail("GUID", start)
        self.i = m.end()
        return m.group(0)

    def name(self, what: str = "name") -> str:
        m = _NAME_RE.match(self.s, self.i)
        if not m:
            self.fail(what)
        self.i = m.end()
        return m.group(0)

    def bool_text(self) -> bool:
        for text, value in (("'true'", True), ("'false'", False)):
            if self.peek(text):
                self.i += len(text)
                return value
        self.fail("'true' or 'false'")

    def end(self) -> None:
        if self.i != len(self.s):
            self.fail("end of line")


def _parse_pairs(c: _Cursor, allow_ret: bool) -> tuple[Pairs, str | None]:
    pairs: list[tuple[str, str]] = []
    while c.peek(", "):
        c.lit(", ")
        name = c.name("argument name")
        c.lit(":")
        value = c.quoted()
        if name == "RetStatus":
            if not allow_ret:
                c.fail("argument name other than RetStatus")
            return tuple(pairs), value
        pairs.append((name, value))
    return tuple(pairs), None


def _parse_body(c: _Cursor) -> Body:
    if c.peek("[PeacockHeader] "):
        c.lit("[PeacockHeader] SessionID:")
        sid = c.quoted()
        c.lit(", Vendor:")
        vendor = c.quoted()
        c.lit(", Version:")
        version = c.quoted()
        c.lit(", ReleaseDate:")
        date = c.quoted()
        return Header(sid, vendor, version, date)
    if c.peek("[CheckCaller] "):
        c.lit("[CheckCaller] Caller ")
        for kind in ("GUID", "Path", "Unknown"):
            if c.peek(kind + " "):
                c.lit(kind + " - '")
                break
        else:
            c.fail("GUID, Path or Unknown")
        if kind == "GUID":
            identity = c.guid()
            c.lit("'")
        else:
            c.i -= 1
            identity = c.quoted()
        c.lit(", start address ")
        start = c.hexnum()
        c.lit(", end address ")
        end = c.hexnum()
        return CheckCaller(kind, identity, start, end)
    if c.peek("[HookCheck] "):
        c.lit("[HookCheck] Service:")
        service = c.quoted()
        c.lit(", HookedBy:")
        by = c.quoted()
        c.lit(", Whitelisted:")
        return HookCheck(service, by, c.bool_text())
    if c.peek("[Halt] "):
        c.lit("[Halt] Reason:")
        return Halt(c.quoted())
    if c.peek("Enter "):
        c.lit("Enter ")
        service = c.name("service name")
        c.lit(" - Service Address:")
        addr = c.quoted_hex()
        args, _ = _parse_pairs(c, allow_ret=False)
        return Enter(service, addr, args)
    if c.peek("Exit "):
        c.lit("Exit ")
        service = c.name("service name")
        c.lit(" - Service Address:")
        addr = c.quoted_hex()
        at = c.i
        outs, status = _parse_pairs(c, allow_ret=True)
        if status is None:
            c.fail("RetStatus", at if c.i == at else c.i)
        return Exit(service, addr, outs, status)
    c.fail("record body")


def parse_entry(line: str) -> RawLogEntry:
    """Parse one physical line; raises ``MalformedLine`` with the byte offset."""
    c = _Cursor(line)
    c.lit("(LID:")
    lid = c.integer()
    c.lit(") (T:")
    t = c.integer()
    c.lit(") (CID:")
    cid = c.integer()
    c.lit(") ")
    body = _parse_body(c)
    c.end()
    if lid < 1:
        c.fail("positive LID", 5)
    return RawLogEntry(lid, t, cid, body)


def split_log(raw_log: str) -> list[str]:
    """Split log text into lines; a single trailing newline is tolerated."""
    if raw_log == "":
        return []
    lines = raw_log.split("\n")
    if lines[-1] == "":
        lines.pop()
    return lines


def join_log(lines: Sequence[str]) -> str:
    return "\n".join(lines)


# -- hash chain -------------------------------------------------------------

Line = Union[str, bytes]


def entry_digest(line: Line) -> bytes:
    # surrogateescape maps undecodable bytes read from disk back to themselves
    data = line.encode("utf-8", "surrogateescape") if isinstance(line, str) else line
    return hashlib.sha256(data).digest()


def extend(state: bytes, measurement: bytes) -> bytes:
    return hashlib.sha256(state + measurement).digest()


def chain_evaluate(lines: Iterable[Line], initial: bytes = ZERO_DIGEST) -> bytes:
    """Fold ``state = SHA256(state || SHA256(line))`` over ``lines``."""
    if len(initial) != DIGEST_SIZE:
        raise ValueError("chain state must be 32 bytes")
    state = initial
    sha = hashlib.sha256
    for line in lines:
        data = line.encode("utf-8", "surrogateescape") if isinstance(line, str) else line
        state = sha(state + sha(data).digest()).digest()
    return state
