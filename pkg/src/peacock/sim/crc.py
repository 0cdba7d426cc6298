"""Table-driven CRC-32/IEEE (reflected, poly 0xEDB88320), as used by UEFI table headers."""

from __future__ import annotations

POLY = 0xEDB88320


def _make_table() -> tuple[int, ...]:
    table = []
    for n in range(256):
        c = n
        for _ in range(8):
            c = (c >> 1) ^ POLY if c & 1 else c >> 1
        table.append(c)
    return tuple(table)


_TABLE = _make_table()


def crc32(data: bytes, crc: int = 0) -> int:
    """CRC-32 of ``data``; pass a previous result as ``crc`` to continue a stream."""
    crc ^= 0xFFFFFFFF
    for b in data:
        crc = _TABLE[(crc ^ b) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFF
