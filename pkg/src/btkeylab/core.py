"""Domain vocabulary: addresses, key taxonomy, error codes, clock, key store."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum, IntEnum

KEY_LEN = 16  # link keys and LTKs are 128-bit

_ADDRESS_RE = re.compile(r"^([0-9A-Fa-f]{2}:){5}[0-9A-Fa-f]{2}$")


@dataclass(frozen=True, order=True)
class DeviceAddress:
    """6-octet device identifier, rendered as colon-separated uppercase hex."""

    octets: bytes

    def __post_init__(self):
        if len(self.octets) != 6:
            raise ValueError(f"device address must be 6 octets, got {len(self.octets)}")

    @classmethod
    def parse(cls, text: str) -> "DeviceAddress":
        if not _ADDRESS_RE.match(text):
            raise ValueError(f"invalid device address: {text!r}")
        return cls(bytes(int(part, 16) for part in text.split(":")))

    def __str__(self) -> str:
        return ":".join(f"{b:02X}" for b in self.octets)

    def __repr__(self) -> str:
        return f"DeviceAddress({str(self)})"


class Transport(Enum):
    BT_CLASSIC = "bt"
    BLE = "ble"


class KeyType(Enum):
    COMBINATION = "combination"
    UNAUTHENTICATED = "unauthenticated"
    AUTHENTICATED = "authenticated"


class ErrorCode(IntEnum):
    """HCI error codes; the numeric values are part of the wire format."""

    SUCCESS = 0x00
    AUTHENTICATION_FAILURE = 0x05
    PIN_OR_KEY_MISSING = 0x06
    REMOTE_USER_TERMINATED = 0x13


@dataclass(frozen=True)
class LinkKeyRecord:
    """A stored 128-bit key plus its security classification."""

    peer: DeviceAddress
    key: bytes
    key_type: KeyType
    bonded: bool
    transport: Transport

    def __post_init__(self):
        if len(self.key) != KEY_LEN:
            raise ValueError(f"link key must be {KEY_LEN} octets, got {len(self.key)}")


class SimClock:
    """Monotone microsecond clock advanced only by the scheduler."""

    def __init__(self) -> None:
        self._now_us = 0

    @property
    def now_us(self) -> int:
        return self._now_us

    def advance(self, delta_us: int) -> int:
        if delta_us < 0:
            raise ValueError("clock cannot go backwards")
        self._now_us += delta_us
        return self._now_us


@dataclass(frozen=True)
class KeyDeletion:
    """Audit record for a key-store deletion (attempted or effective).

    Silent deletion of bonded keys is the behavior under study, so every
    present-to-absent transition must be traceable to exactly one of these.
    """

    peer: DeviceAddress
    transport: Transport
    existed: bool
    bonded: bool
    user_initiated: bool
    timestamp_us: int


class KeyStore:
    """Per-device key store: at most one record per (peer, transport)."""

    def __init__(self, clock: SimClock | None = None) -> None:
        self._records: dict[tuple[DeviceAddress, Transport], LinkKeyRecord] = {}
        self._clock = clock
        self.deletions: list[KeyDeletion] = []

    def __len__(self) -> int:
        return len(self._records)

    def put(self, record: LinkKeyRecord) -> None:
        """Insert or replace the record for (record.peer, record.transport)."""
        self._records[(record.peer, record.transport)] = record

    def get(self, peer: DeviceAddress, transport: Transport) -> LinkKeyRecord | None:
        return self._records.get((peer, transport))

    def delete(
        self,
        peer: DeviceAddress,
        transport: Transport,
        *,
        user_initiated: bool = False,
    ) -> KeyDeletion:
        """Remove the record for (peer, transport), auditing the attempt.

        Deleting an absent key is a no-op but still audited, so scenarios can
        distinguish "key was deleted" from "deletion was attempted".
        """
        previous = self._records.pop((peer, transport), None)
        audit = KeyDeletion(
            peer=peer,
            transport=transport,
            existed=previous is not None,
            bonded=previous.bonded if previous else False,
            user_initiated=user_initiated,
            timestamp_us=self._clock.now_us if self._clock else 0,
        )
        self.deletions.append(audit)
        return audit

    def records(self) -> list[LinkKeyRecord]:
        return list(self._records.values())
