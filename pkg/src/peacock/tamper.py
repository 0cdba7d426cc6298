"""Single-step log mutations for negative attestation tests. Lines are 1-based."""

from __future__ import annotations

from .measured_log import join_log, split_log

MUTATIONS = ("flip", "delete", "duplicate", "swap", "truncate")


class OutOfRange(IndexError):
    pass


def _check_line(lines: list[str], line: int, need_next: bool = False) -> None:
    last = len(lines) - (1 if need_next else 0)
    if not 1 <= line <= last:
        raise OutOfRange(f"line {line} outside 1..{last}")


def flip_byte(lines: list[str], line: int, byte: int = 0, mask: int = 0x01) -> list[str]:
    """XOR one byte of ``line``. Masks below 0x80 keep ASCII lines ASCII."""
    _check_line(lines, line)
    data = bytearray(lines[line - 1].encode("utf-8"))
    if not 0 <= byte < len(data):
        raise OutOfRange(f"byte {byte} outside 0..{len(data) - 1} of line {line}")
    if not 0 < mask < 0x100:
        raise ValueError("mask must be a nonzero byte")
    data[byte] ^= mask
    out = list(lines)
    out[line - 1] = data.decode("utf-8", "surrogateescape")
    return out


def delete_line(lines: list[str], line: int) -> list[str]:
    _check_line(lines, line)
    return lines[:line - 1] + lines[line:]


def duplicate_line(lines: list[str], line: int) -> list[str]:
    _check_line(lines, line)
    return lines[:line] + [lines[line - 1]] + lines[line:]


def swap_lines(lines: list[str], line: int) -> list[str]:
    """Swap ``line`` with the one after it."""
    _check_line(lines, line, need_next=True)
    out = list(lines)
    out[line - 1], out[line] = out[line], out[line - 1]
    return out


def truncate(lines: list[str], line: int) -> list[str]:
    """Drop ``line`` and everything after it."""
    _check_line(lines, line)
    return lines[:line - 1]


def mutate(raw_log: str, mutation: str, line: int, byte: int = 0) -> str:
    lines = split_log(raw_log)
    if mutation == "flip":
        out = flip_byte(lines, line, byte)
    elif mutation == "delete":
        out = delete_line(lines, line)
    elif mutation == "duplicate":
        out = duplicate_line(lines, line)
    elif mutation == "swap":
        out = swap_lines(lines, line)
    elif mutation == "truncate":
        out = truncate(lines, line)
    else:
        raise ValueError(f"unknown mutation {mutation!r}; expected one of {MUTATIONS}")
    return join_log(out)
