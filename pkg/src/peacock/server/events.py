"""Attested raw logs to structured events, one per Enter record."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from ..measured_log import CheckCaller, Enter, Exit, Header, HookCheck, parse_entry, split_log

INCOMPLETE = "Incomplete"


def hex_address(value: int) -> str:
    return f"0x{value:X}"


@dataclass(frozen=True)
class ParsedEvent:
    original_log: str
    uefi_timestamp: int
    event_type: str
    caller: str
    caller_start_address: str
    caller_end_address: str
    hooked_service: bool
    hooked_by_driver: str
    whitelisted_hooking_driver: bool
    status: str
    args: dict = field(default_factory=dict)
    service_address: str = "0x0"
    session_id: str = ""
    log_id: int = 0
    call_id: int = 0

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["args"] = dict(self.args)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ParsedEvent":
        return cls(**{k: doc[k] for k in cls.__dataclass_fields__})


def parse_log(raw_log: str, device_id: str = "") -> list[ParsedEvent]:
    """Structure an attested transcript.

    Callers come from the nearest preceding CheckCaller. Hook fields reflect
    HookCheck records seen earlier in the log for the same service. Outputs
    from the CID-matched Exit overwrite same-named entry arguments.
    """
    lines = split_log(raw_log)
    entries = [parse_entry(line) for line in lines]
    exits = {}
    for e in entries:
        if isinstance(e.body, Exit):
            exits.setdefault((e.cid, e.body.service), e.body)

    session_id = ""
    caller = ("Unknown", 0, 0)
    hooks: dict[str, HookCheck] = {}
    events: list[ParsedEvent] = []
    for line, e in zip(lines, entries):
        body = e.body
        if isinstance(body, Header):
            session_id = body.session_id
        elif isinstance(body, CheckCaller):
            caller = (body.identity, body.start_address, body.end_address)
        elif isinstance(body, HookCheck):
            hooks[body.service] = body
        elif isinstance(body, Enter):
            ex = exits.get((e.cid, body.service))
            args = dict(body.args)
            if ex is not None:
                args.update(ex.outs)
            hook = hooks.get(body.service)
            events.append(ParsedEvent(
                original_log=line,
                uefi_timestamp=e.t,
                event_type=body.service,
                caller=caller[0],
                caller_start_address=hex_address(caller[1]),
                caller_end_address=hex_address(caller[2]),
                hooked_service=hook is not None,
                hooked_by_driver=hook.hooked_by if hook is not None else "",
                whitelisted_hooking_driver=hook.whitelisted if hook is not None else False,
                status=ex.ret_status if ex is not None else INCOMPLETE,
                args=args,
                service_address=hex_address(body.service_address),
                session_id=session_id,
                log_id=e.lid,
                call_id=e.cid,
            ))
    return events
