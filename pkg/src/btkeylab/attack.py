"""Machine-in-the-middle attacker node and the HCI key fault injector.

A MitM that interposed on pairing ends up with two independent keys, one
shared with each victim. If it is ever absent when the victims connect
directly, those keys mismatch and authentication fails, which is exactly
the event host stacks are supposed to warn about.

The injector substitutes keys inside decoded HCI commands at one device's
host/controller boundary, leaving every other field untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from . import hci
from .core import KEY_LEN, DeviceAddress, LinkKeyRecord


class InjectionTarget(Enum):
    LINK_KEY_REQUEST_REPLY = "link_key_request_reply"
    LE_ENABLE_ENCRYPTION = "le_enable_encryption"


@dataclass(frozen=True)
class FaultRule:
    """Key substitution applied to matching commands during a step window.

    `window` is a half-open [start, stop) range of scenario script steps, so
    scripted runs can toggle between the wrong key and the original one.
    """

    target_command: InjectionTarget
    replacement_key: bytes
    match_peer: DeviceAddress | None = None
    window: tuple[int, int] = (0, 1 << 62)

    def __post_init__(self):
        if len(self.replacement_key) != KEY_LEN:
            raise ValueError(f"replacement key must be {KEY_LEN} octets")
        if self.window[0] >= self.window[1]:
            raise ValueError(f"empty injection window {self.window}")

    def active_at(self, step: int) -> bool:
        return self.window[0] <= step < self.window[1]


@dataclass(frozen=True)
class InjectionAudit:
    """One matched packet; `replaced` is False when the rule was a no-op."""

    step: int
    target: InjectionTarget
    peer: DeviceAddress | None
    original_key: bytes
    replacement_key: bytes
    replaced: bool
    timestamp_us: int = 0
    packet_index: int | None = None


def inject(
    rule: FaultRule,
    packet: hci.HciCommand,
    step: int,
    *,
    peer: DeviceAddress | None = None,
) -> tuple[hci.HciCommand, InjectionAudit | None]:
    """Apply one fault rule to one outgoing command.

    Non-matching packets pass through unchanged with no audit. Matching
    packets have only their key field replaced; a replacement equal to the
    existing key is flagged as a no-op but still audited, so audit count
    equals match count.

    `peer` supplies connection context for commands that carry a handle
    rather than an address.
    """
    if not rule.active_at(step):
        return packet, None

    if rule.target_command == InjectionTarget.LINK_KEY_REQUEST_REPLY and isinstance(
        packet, hci.LinkKeyRequestReply
    ):
        if rule.match_peer is not None and packet.peer != rule.match_peer:
            return packet, None
        original = packet.key
        replaced = original != rule.replacement_key
        if replaced:
            packet = hci.LinkKeyRequestReply(peer=packet.peer, key=rule.replacement_key)
        audit = InjectionAudit(
            step=step,
            target=rule.target_command,
            peer=packet.peer,
            original_key=original,
            replacement_key=rule.replacement_key,
            replaced=replaced,
        )
        return packet, audit

    if rule.target_command == InjectionTarget.LE_ENABLE_ENCRYPTION and isinstance(
        packet, hci.LeEnableEncryption
    ):
        if rule.match_peer is not None and peer != rule.match_peer:
            return packet, None
        original = packet.ltk
        replaced = original != rule.replacement_key
        if replaced:
            packet = hci.LeEnableEncryption(handle=packet.handle, ltk=rule.replacement_key)
        audit = InjectionAudit(
            step=step,
            target=rule.target_command,
            peer=peer,
            original_key=original,
            replacement_key=rule.replacement_key,
            replaced=replaced,
        )
        return packet, audit

    return packet, None


@dataclass
class MitmNode:
    """Attacker holding one key per victim (upstream with A, downstream with B).

    `present` models omnipresence: when True the attacker interposes on every
    connection attempt between the victims and relays; when False the victims
    connect directly and their mismatched keys collide.
    """

    address: DeviceAddress
    present: bool = True
    upstream_key: LinkKeyRecord | None = None
    downstream_key: LinkKeyRecord | None = None

    def __post_init__(self):
        self._check_distinct()

    def _check_distinct(self) -> None:
        if (
            self.upstream_key is not None
            and self.downstream_key is not None
            and self.upstream_key.key == self.downstream_key.key
        ):
            raise ValueError("attack premise requires two distinct keys")

    def key_for(self, victim: DeviceAddress, transport) -> bytes | None:
        """The segment key shared with this victim, if any."""
        for record in (self.upstream_key, self.downstream_key):
            if record is not None and record.peer == victim and record.transport == transport:
                return record.key
        return None

    def store_segment_key(self, record: LinkKeyRecord) -> None:
        """Store or replace the key shared with record.peer.

        An existing slot for the same victim is replaced (re-pairing);
        otherwise the first empty slot is taken, upstream first.
        """
        if self.upstream_key is not None and self.upstream_key.peer == record.peer:
            self.upstream_key = record
        elif self.downstream_key is not None and self.downstream_key.peer == record.peer:
            self.downstream_key = record
        elif self.upstream_key is None:
            self.upstream_key = record
        else:
            self.downstream_key = record
        self._check_distinct()
