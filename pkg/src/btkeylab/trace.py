"""Bit-exact btsnoop capture writer/reader for the simulated HCI traffic.

The file layout is the standard one: 8-octet magic "btsnoop\\0", 32-bit
version 1, 32-bit datalink 1002 (HCI UART / H4), then records of
original length, included length, packet flags, cumulative drops, and a
64-bit microsecond timestamp, all big-endian, followed by the H4 payload.

Record flags carry the direction (bit 0: 0 = host-to-controller "sent",
1 = controller-to-host "received") and the command/event marker (bit 1).
Timestamps are simulation microseconds plus a fixed epoch offset (the
microseconds between year 0 and the Unix epoch), so a trace for seed S is
byte-identical on every run yet opens with sane times in standard tools.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum

from . import hci
from .core import DeviceAddress

BTSNOOP_MAGIC = b"btsnoop\x00"
BTSNOOP_VERSION = 1
DATALINK_H4 = 1002
# microseconds between year 0 and 1970-01-01, the btsnoop timestamp epoch
EPOCH_OFFSET_US = 0x00DCDDB30F2F8000

_FILE_HEADER = struct.Struct(">8sII")
_RECORD_HEADER = struct.Struct(">IIIIq")

FLAG_DIRECTION_RECEIVED = 0x01
FLAG_COMMAND_OR_EVENT = 0x02


class TraceFormatError(Exception):
    """Base class for btsnoop format failures."""


class BadMagicError(TraceFormatError):
    pass


class BadVersionError(TraceFormatError):
    pass


class TruncatedRecordError(TraceFormatError):
    pass


class NonMonotoneTimestampsError(Exception):
    """Packets handed to the writer must be in non-decreasing time order."""


class Direction(Enum):
    HOST_TO_CONTROLLER = "sent"
    CONTROLLER_TO_HOST = "received"


@dataclass(frozen=True)
class TracedPacket:
    """One captured packet. `device` is in-memory attribution only; the file
    format carries just direction, time, and bytes."""

    packet: hci.HciPacket
    direction: Direction
    timestamp_us: int
    device: DeviceAddress | None = field(default=None, compare=False)


def _flags_for(packet: hci.HciPacket, direction: Direction) -> int:
    flags = 0
    if direction == Direction.CONTROLLER_TO_HOST:
        flags |= FLAG_DIRECTION_RECEIVED
    if hci.is_command(packet) or hci.is_event(packet):
        flags |= FLAG_COMMAND_OR_EVENT
    return flags


def write_trace(packets) -> bytes:
    """Serialize traced packets to btsnoop bytes; deterministic for equal input."""
    out = [_FILE_HEADER.pack(BTSNOOP_MAGIC, BTSNOOP_VERSION, DATALINK_H4)]
    last_ts = None
    for tp in packets:
        if last_ts is not None and tp.timestamp_us < last_ts:
            raise NonMonotoneTimestampsError(
                f"timestamp {tp.timestamp_us} after {last_ts}"
            )
        last_ts = tp.timestamp_us
        payload = hci.encode(tp.packet)
        out.append(
            _RECORD_HEADER.pack(
                len(payload),
                len(payload),
                _flags_for(tp.packet, tp.direction),
                0,
                tp.timestamp_us + EPOCH_OFFSET_US,
            )
        )
        out.append(payload)
    return b"".join(out)


def read_trace(data: bytes) -> list[TracedPacket]:
    """Parse btsnoop bytes back into traced packets (RAW for unknown HCI)."""
    if len(data) < _FILE_HEADER.size:
        raise BadMagicError("file shorter than btsnoop header")
    magic, version, datalink = _FILE_HEADER.unpack_from(data, 0)
    if magic != BTSNOOP_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != BTSNOOP_VERSION:
        raise BadVersionError(f"unsupported version {version}")
    if datalink != DATALINK_H4:
        raise TraceFormatError(f"unsupported datalink {datalink}")

    packets = []
    offset = _FILE_HEADER.size
    while offset < len(data):
        if len(data) - offset < _RECORD_HEADER.size:
            raise TruncatedRecordError("record header truncated")
        _orig_len, incl_len, flags, _drops, timestamp = _RECORD_HEADER.unpack_from(data, offset)
        offset += _RECORD_HEADER.size
        if len(data) - offset < incl_len:
            raise TruncatedRecordError(
                f"record declares {incl_len} payload octets, {len(data) - offset} remain"
            )
        payload = data[offset : offset + incl_len]
        offset += incl_len
        direction = (
            Direction.CONTROLLER_TO_HOST
            if flags & FLAG_DIRECTION_RECEIVED
            else Direction.HOST_TO_CONTROLLER
        )
        packets.append(
            TracedPacket(
                packet=hci.decode(payload),
                direction=direction,
                timestamp_us=timestamp - EPOCH_OFFSET_US,
            )
        )
    return packets
