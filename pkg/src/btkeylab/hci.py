"""Typed HCI command/event model with bit-exact H4 (UART) framing.

This is the boundary where keys are requested, faults are injected, and
traces are captured. Only the handful of commands and events involved in
authentication/encryption failure handling are modeled as typed packets;
everything else round-trips through RAW passthrough variants so traces can
carry packets the simulator does not understand.

Opcodes, event codes, and parameter layouts follow the public HCI wire
format, so emitted traces open in standard dissectors.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Union

from .core import KEY_LEN, DeviceAddress, ErrorCode, KeyType

# H4 packet indicators
INDICATOR_COMMAND = 0x01
INDICATOR_ACL_DATA = 0x02
INDICATOR_EVENT = 0x04

# Command opcodes (OGF << 10 | OCF)
OPCODE_DISCONNECT = 0x0406
OPCODE_LINK_KEY_REQUEST_REPLY = 0x040B
OPCODE_LINK_KEY_REQUEST_NEGATIVE_REPLY = 0x040C
OPCODE_AUTHENTICATION_REQUESTED = 0x0411
OPCODE_LE_ENABLE_ENCRYPTION = 0x2019

# Event codes
EVENT_DISCONNECTION_COMPLETE = 0x05
EVENT_AUTHENTICATION_COMPLETE = 0x06
EVENT_ENCRYPTION_CHANGE = 0x08
EVENT_LINK_KEY_REQUEST = 0x17
EVENT_LINK_KEY_NOTIFICATION = 0x18

MAX_PARAMETER_LEN = 255
MAX_ACL_PAYLOAD_LEN = 0xFFFF

# Link_Key_Notification key-type octet values
_KEY_TYPE_TO_WIRE = {
    KeyType.COMBINATION: 0x00,
    KeyType.UNAUTHENTICATED: 0x04,
    KeyType.AUTHENTICATED: 0x05,
}
_WIRE_TO_KEY_TYPE = {v: k for k, v in _KEY_TYPE_TO_WIRE.items()}


class HciCodecError(Exception):
    """Base class for encode/decode failures."""


class OversizedParametersError(HciCodecError):
    """Payload exceeds the framing's length field."""


class TruncatedPacketError(HciCodecError):
    """Declared length exceeds the remaining bytes."""


class BadIndicatorError(HciCodecError):
    """First octet is not a known H4 packet indicator."""


def _check_handle(handle: int) -> None:
    if not 0 <= handle <= 0xFFFF:
        raise ValueError(f"connection handle out of range: {handle:#x}")


def _check_key(key: bytes) -> None:
    if len(key) != KEY_LEN:
        raise ValueError(f"key must be {KEY_LEN} octets, got {len(key)}")


# Addresses are stored in display order and serialized little-endian,
# matching BD_ADDR wire order.
def _addr_to_wire(addr: DeviceAddress) -> bytes:
    return bytes(reversed(addr.octets))


def _addr_from_wire(data: bytes) -> DeviceAddress:
    return DeviceAddress(bytes(reversed(data)))


# ---------------------------------------------------------------------------
# Commands


@dataclass(frozen=True)
class LinkKeyRequestReply:
    peer: DeviceAddress
    key: bytes

    def __post_init__(self):
        _check_key(self.key)


@dataclass(frozen=True)
class LinkKeyRequestNegativeReply:
    peer: DeviceAddress


@dataclass(frozen=True)
class AuthenticationRequested:
    handle: int

    def __post_init__(self):
        _check_handle(self.handle)


@dataclass(frozen=True)
class Disconnect:
    handle: int
    reason: ErrorCode

    def __post_init__(self):
        _check_handle(self.handle)


@dataclass(frozen=True)
class LeEnableEncryption:
    """LE encryption start with the given LTK.

    The wire format carries Random_Number and Encrypted_Diversifier fields;
    both are zero here, as they are for LE Secure Connections keys.
    """

    handle: int
    ltk: bytes

    def __post_init__(self):
        _check_handle(self.handle)
        _check_key(self.ltk)


@dataclass(frozen=True)
class RawCommand:
    """Passthrough for commands the simulator does not model."""

    opcode: int
    parameters: bytes


# ---------------------------------------------------------------------------
# Events


@dataclass(frozen=True)
class LinkKeyRequest:
    peer: DeviceAddress


@dataclass(frozen=True)
class AuthenticationComplete:
    handle: int
    status: ErrorCode

    def __post_init__(self):
        _check_handle(self.handle)


@dataclass(frozen=True)
class EncryptionChange:
    handle: int
    status: ErrorCode
    enabled: bool

    def __post_init__(self):
        _check_handle(self.handle)
        if self.status != ErrorCode.SUCCESS and self.enabled:
            raise ValueError("encryption cannot be enabled with a failure status")


@dataclass(frozen=True)
class DisconnectionComplete:
    handle: int
    reason: ErrorCode

    def __post_init__(self):
        _check_handle(self.handle)


@dataclass(frozen=True)
class LinkKeyNotification:
    peer: DeviceAddress
    key: bytes
    key_type: KeyType

    def __post_init__(self):
        _check_key(self.key)


@dataclass(frozen=True)
class RawEvent:
    """Passthrough for events the simulator does not model."""

    event_code: int
    parameters: bytes


@dataclass(frozen=True)
class AclData:
    """ACL data packet; payload is opaque (no L2CAP modeling)."""

    handle: int
    payload: bytes
    flags: int = 0  # PB/BC bits, upper nibble of the handle word

    def __post_init__(self):
        if not 0 <= self.handle <= 0x0FFF:
            raise ValueError(f"ACL handle out of range: {self.handle:#x}")
        if not 0 <= self.flags <= 0xF:
            raise ValueError(f"ACL flags out of range: {self.flags:#x}")


HciCommand = Union[
    LinkKeyRequestReply,
    LinkKeyRequestNegativeReply,
    AuthenticationRequested,
    Disconnect,
    LeEnableEncryption,
    RawCommand,
]

HciEvent = Union[
    LinkKeyRequest,
    AuthenticationComplete,
    EncryptionChange,
    DisconnectionComplete,
    LinkKeyNotification,
    RawEvent,
]

HciPacket = Union[HciCommand, HciEvent, AclData]

COMMAND_TYPES = (
    LinkKeyRequestReply,
    LinkKeyRequestNegativeReply,
    AuthenticationRequested,
    Disconnect,
    LeEnableEncryption,
    RawCommand,
)

EVENT_TYPES = (
    LinkKeyRequest,
    AuthenticationComplete,
    EncryptionChange,
    DisconnectionComplete,
    LinkKeyNotification,
    RawEvent,
)


def is_command(packet: HciPacket) -> bool:
    return isinstance(packet, COMMAND_TYPES)


def is_event(packet: HciPacket) -> bool:
    return isinstance(packet, EVENT_TYPES)


# ---------------------------------------------------------------------------
# Encoding


def _command_body(packet: HciCommand) -> tuple[int, bytes]:
    if isinstance(packet, LinkKeyRequestReply):
        return OPCODE_LINK_KEY_REQUEST_REPLY, _addr_to_wire(packet.peer) + packet.key
    if isinstance(packet, LinkKeyRequestNegativeReply):
        return OPCODE_LINK_KEY_REQUEST_NEGATIVE_REPLY, _addr_to_wire(packet.peer)
    if isinstance(packet, AuthenticationRequested):
        return OPCODE_AUTHENTICATION_REQUESTED, struct.pack("<H", packet.handle)
    if isinstance(packet, Disconnect):
        return OPCODE_DISCONNECT, struct.pack("<HB", packet.handle, packet.reason)
    if isinstance(packet, LeEnableEncryption):
        # handle, Random_Number (8, zero), EDIV (2, zero), LTK
        return OPCODE_LE_ENABLE_ENCRYPTION, struct.pack("<H8sH", packet.handle, bytes(8), 0) + packet.ltk
    if isinstance(packet, RawCommand):
        return packet.opcode, packet.parameters
    raise TypeError(f"not an HCI command: {packet!r}")


def _event_body(packet: HciEvent) -> tuple[int, bytes]:
    if isinstance(packet, LinkKeyRequest):
        return EVENT_LINK_KEY_REQUEST, _addr_to_wire(packet.peer)
    if isinstance(packet, AuthenticationComplete):
        return EVENT_AUTHENTICATION_COMPLETE, struct.pack("<BH", packet.status, packet.handle)
    if isinstance(packet, EncryptionChange):
        return EVENT_ENCRYPTION_CHANGE, struct.pack(
            "<BHB", packet.status, packet.handle, 1 if packet.enabled else 0
        )
    if isinstance(packet, DisconnectionComplete):
        # status octet is 0x00: the disconnection event itself succeeded
        return EVENT_DISCONNECTION_COMPLETE, struct.pack("<BHB", 0, packet.handle, packet.reason)
    if isinstance(packet, LinkKeyNotification):
        return (
            EVENT_LINK_KEY_NOTIFICATION,
            _addr_to_wire(packet.peer) + packet.key + bytes([_KEY_TYPE_TO_WIRE[packet.key_type]]),
        )
    if isinstance(packet, RawEvent):
        return packet.event_code, packet.parameters
    raise TypeError(f"not an HCI event: {packet!r}")


def encode(packet: HciPacket) -> bytes:
    """Serialize a packet to H4 bytes (indicator octet + packet body)."""
    if is_command(packet):
        opcode, params = _command_body(packet)
        if len(params) > MAX_PARAMETER_LEN:
            raise OversizedParametersError(f"{len(params)} parameter octets exceed {MAX_PARAMETER_LEN}")
        return struct.pack("<BHB", INDICATOR_COMMAND, opcode, len(params)) + params
    if is_event(packet):
        event_code, params = _event_body(packet)
        if len(params) > MAX_PARAMETER_LEN:
            raise OversizedParametersError(f"{len(params)} parameter octets exceed {MAX_PARAMETER_LEN}")
        return struct.pack("<BBB", INDICATOR_EVENT, event_code, len(params)) + params
    if isinstance(packet, AclData):
        if len(packet.payload) > MAX_ACL_PAYLOAD_LEN:
            raise OversizedParametersError(f"{len(packet.payload)} ACL octets exceed {MAX_ACL_PAYLOAD_LEN}")
        handle_word = packet.handle | (packet.flags << 12)
        return struct.pack("<BHH", INDICATOR_ACL_DATA, handle_word, len(packet.payload)) + packet.payload
    raise TypeError(f"not an HCI packet: {packet!r}")


# ---------------------------------------------------------------------------
# Decoding


def _try_error_code(value: int) -> ErrorCode | None:
    try:
        return ErrorCode(value)
    except ValueError:
        return None


def _decode_command(opcode: int, params: bytes) -> HciCommand:
    # Any mismatch with the expected layout falls through to RAW passthrough.
    if opcode == OPCODE_LINK_KEY_REQUEST_REPLY and len(params) == 22:
        return LinkKeyRequestReply(peer=_addr_from_wire(params[:6]), key=params[6:22])
    if opcode == OPCODE_LINK_KEY_REQUEST_NEGATIVE_REPLY and len(params) == 6:
        return LinkKeyRequestNegativeReply(peer=_addr_from_wire(params))
    if opcode == OPCODE_AUTHENTICATION_REQUESTED and len(params) == 2:
        return AuthenticationRequested(handle=struct.unpack("<H", params)[0])
    if opcode == OPCODE_DISCONNECT and len(params) == 3:
        handle, reason = struct.unpack("<HB", params)
        code = _try_error_code(reason)
        if code is not None:
            return Disconnect(handle=handle, reason=code)
    if opcode == OPCODE_LE_ENABLE_ENCRYPTION and len(params) == 28:
        handle, rand, ediv = struct.unpack("<H8sH", params[:12])
        if rand == bytes(8) and ediv == 0:
            return LeEnableEncryption(handle=handle, ltk=params[12:28])
    return RawCommand(opcode=opcode, parameters=params)


def _decode_event(event_code: int, params: bytes) -> HciEvent:
    if event_code == EVENT_LINK_KEY_REQUEST and len(params) == 6:
        return LinkKeyRequest(peer=_addr_from_wire(params))
    if event_code == EVENT_AUTHENTICATION_COMPLETE and len(params) == 3:
        status, handle = struct.unpack("<BH", params)
        code = _try_error_code(status)
        if code is not None:
            return AuthenticationComplete(handle=handle, status=code)
    if event_code == EVENT_ENCRYPTION_CHANGE and len(params) == 4:
        status, handle, enabled = struct.unpack("<BHB", params)
        code = _try_error_code(status)
        if code is not None and enabled in (0, 1):
            if not (code != ErrorCode.SUCCESS and enabled):
                return EncryptionChange(handle=handle, status=code, enabled=bool(enabled))
    if event_code == EVENT_DISCONNECTION_COMPLETE and len(params) == 4:
        status, handle, reason = struct.unpack("<BHB", params)
        code = _try_error_code(reason)
        if status == 0 and code is not None:
            return DisconnectionComplete(handle=handle, reason=code)
    if event_code == EVENT_LINK_KEY_NOTIFICATION and len(params) == 23:
        key_type = _WIRE_TO_KEY_TYPE.get(params[22])
        if key_type is not None:
            return LinkKeyNotification(
                peer=_addr_from_wire(params[:6]), key=params[6:22], key_type=key_type
            )
    return RawEvent(event_code=event_code, parameters=params)


def decode(data: bytes) -> HciPacket:
    """Parse one H4-framed packet.

    Unknown opcodes/event codes (or known ones with unexpected layouts) come
    back as RAW variants preserving the exact parameter bytes.
    """
    if len(data) < 1:
        raise TruncatedPacketError("empty packet")
    indicator = data[0]
    if indicator == INDICATOR_COMMAND:
        if len(data) < 4:
            raise TruncatedPacketError("command header truncated")
        opcode, plen = struct.unpack("<HB", data[1:4])
        if len(data) - 4 < plen:
            raise TruncatedPacketError(f"command declares {plen} parameter octets, {len(data) - 4} present")
        if len(data) - 4 > plen:
            raise HciCodecError(f"{len(data) - 4 - plen} trailing octets after command parameters")
        return _decode_command(opcode, data[4:])
    if indicator == INDICATOR_EVENT:
        if len(data) < 3:
            raise TruncatedPacketError("event header truncated")
        event_code, plen = data[1], data[2]
        if len(data) - 3 < plen:
            raise TruncatedPacketError(f"event declares {plen} parameter octets, {len(data) - 3} present")
        if len(data) - 3 > plen:
            raise HciCodecError(f"{len(data) - 3 - plen} trailing octets after event parameters")
        return _decode_event(event_code, data[3:])
    if indicator == INDICATOR_ACL_DATA:
        if len(data) < 5:
            raise TruncatedPacketError("ACL header truncated")
        handle_word, dlen = struct.unpack("<HH", data[1:5])
        if len(data) - 5 < dlen:
            raise TruncatedPacketError(f"ACL declares {dlen} payload octets, {len(data) - 5} present")
        if len(data) - 5 > dlen:
            raise HciCodecError(f"{len(data) - 5 - dlen} trailing octets after ACL payload")
        return AclData(handle=handle_word & 0x0FFF, flags=handle_word >> 12, payload=data[5:])
    raise BadIndicatorError(f"unknown packet indicator {indicator:#04x}")
