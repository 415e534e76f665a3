"""Reference host state machine and the authentication-failure decision table.

The decision table maps (key type, bonded) to the required host action; all
three bonded rows demand a security-failure warning to the user, and the
non-bonded rows offer two options each with one recommended. The reference
host implements exactly that, always disconnects with reason
AUTHENTICATION_FAILURE, and never deletes a bonded key on its own.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from . import hci
from .core import (
    DeviceAddress,
    ErrorCode,
    KeyStore,
    KeyType,
    LinkKeyRecord,
    SimClock,
    Transport,
)
from .linklayer import Connection


class UserSurfaceKind(Enum):
    """What the user saw, abstracted to warning categories."""

    SECURITY_FAILURE_WARNING = "security_failure_warning"
    REPAIR_CONSENT_PROMPT = "repair_consent_prompt"
    GENERIC_ERROR_TEXT = "generic_error_text"
    TRANSIENT_INDICATOR = "transient_indicator"
    SILENT_KEY_DELETION = "silent_key_deletion"
    NONE = "none"


@dataclass(frozen=True)
class UserSurfaceEvent:
    kind: UserSurfaceKind
    peer: DeviceAddress
    timestamp_us: int
    text: str | None = None


class FailureAction(Enum):
    NOTIFY_SECURITY_FAILURE = "notify_security_failure"
    AUTO_REPAIR = "auto_repair"
    ASK_USER_THEN_REPAIR = "ask_user_then_repair"


class OptionPolicy(Enum):
    """Selects among the decision table's options for non-bonded rows."""

    RECOMMENDED = "recommended"
    OPTION_1 = "option_1"
    OPTION_2 = "option_2"


@dataclass(frozen=True)
class FailureDecision:
    key_type: KeyType
    bonded: bool
    action: FailureAction
    recommended: bool

    def __post_init__(self):
        if self.bonded and self.action != FailureAction.NOTIFY_SECURITY_FAILURE:
            raise ValueError("bonded keys always require a security-failure notification")


# non-bonded rows: (option 1, option 2, recommended option number)
_NON_BONDED_ROWS = {
    KeyType.COMBINATION: (FailureAction.AUTO_REPAIR, FailureAction.ASK_USER_THEN_REPAIR, 2),
    KeyType.UNAUTHENTICATED: (FailureAction.AUTO_REPAIR, FailureAction.ASK_USER_THEN_REPAIR, 1),
    KeyType.AUTHENTICATED: (FailureAction.AUTO_REPAIR, FailureAction.ASK_USER_THEN_REPAIR, 2),
}


def decide_failure_action(
    key_type: KeyType,
    bonded: bool,
    policy: OptionPolicy = OptionPolicy.RECOMMENDED,
) -> FailureDecision:
    """Resolve one row of the authentication-failure decision table."""
    if bonded:
        return FailureDecision(
            key_type=key_type,
            bonded=True,
            action=FailureAction.NOTIFY_SECURITY_FAILURE,
            recommended=True,
        )
    option1, option2, recommended_option = _NON_BONDED_ROWS[key_type]
    if policy == OptionPolicy.OPTION_1:
        chosen, chosen_option = option1, 1
    elif policy == OptionPolicy.OPTION_2:
        chosen, chosen_option = option2, 2
    else:
        chosen_option = recommended_option
        chosen = option1 if recommended_option == 1 else option2
    return FailureDecision(
        key_type=key_type,
        bonded=False,
        action=chosen,
        recommended=chosen_option == recommended_option,
    )


@dataclass(frozen=True)
class RepairRequest:
    """A pairing the host wants to (re-)initiate after a failure.

    Re-pairing without user interaction happens in Just Works mode, so the
    minted key defaults to unauthenticated.
    """

    peer: DeviceAddress
    transport: Transport
    key_type: KeyType = KeyType.UNAUTHENTICATED


@dataclass
class Reaction:
    """Everything a host does in response to one HCI event."""

    commands: list[hci.HciCommand] = field(default_factory=list)
    user_events: list[UserSurfaceEvent] = field(default_factory=list)
    repairs: list[RepairRequest] = field(default_factory=list)


class HostPolicy:
    """Failure-reaction policy plugged into the host state machine."""

    def disconnect_reason(self) -> ErrorCode:
        return ErrorCode.AUTHENTICATION_FAILURE

    def on_failure(self, host: "Host", conn: Connection, peer: DeviceAddress,
                   record: LinkKeyRecord, reaction: Reaction) -> None:
        raise NotImplementedError


class ReferencePolicy(HostPolicy):
    """Spec-compliant behavior per the decision table."""

    def __init__(self, option_policy: OptionPolicy = OptionPolicy.RECOMMENDED) -> None:
        self.option_policy = option_policy

    def on_failure(self, host, conn, peer, record, reaction):
        decision = decide_failure_action(record.key_type, record.bonded, self.option_policy)
        if decision.action == FailureAction.NOTIFY_SECURITY_FAILURE:
            reaction.user_events.append(host._surface(UserSurfaceKind.SECURITY_FAILURE_WARNING, peer))
        elif decision.action == FailureAction.AUTO_REPAIR:
            reaction.repairs.append(RepairRequest(peer=peer, transport=conn.transport))
        else:  # ASK_USER_THEN_REPAIR
            reaction.user_events.append(host._surface(UserSurfaceKind.REPAIR_CONSENT_PROMPT, peer))
            if host.consent_queue and host.consent_queue.popleft():
                reaction.repairs.append(RepairRequest(peer=peer, transport=conn.transport))


class Host:
    """Host state machine: one HCI event at a time, no reentrancy.

    The failure policy is pluggable; mechanics shared by all stacks (key
    request replies, key notifications, scripted user actions) live here.
    """

    def __init__(
        self,
        address: DeviceAddress,
        clock: SimClock,
        policy: HostPolicy,
    ) -> None:
        self.address = address
        self.clock = clock
        self.policy = policy
        self.keystore = KeyStore(clock)
        self.user_events: list[UserSurfaceEvent] = []
        self.consent_queue: deque[bool] = deque()

    def _surface(self, kind: UserSurfaceKind, peer: DeviceAddress, text: str | None = None) -> UserSurfaceEvent:
        event = UserSurfaceEvent(kind=kind, peer=peer, timestamp_us=self.clock.now_us, text=text)
        self.user_events.append(event)
        return event

    def peer_of(self, conn: Connection) -> DeviceAddress:
        # the scheduler hands the connection alongside each event; the peer
        # is whichever claimed endpoint is not us
        return conn.responder if conn.initiator == self.address else conn.initiator

    # -- host-initiated procedures

    def on_connected(self, conn: Connection) -> Reaction:
        """Kick off authentication (BT) or encryption (BLE) on a new link."""
        reaction = Reaction()
        peer = self.peer_of(conn)
        if conn.transport == Transport.BT_CLASSIC:
            reaction.commands.append(hci.AuthenticationRequested(handle=conn.handle))
        else:
            record = self.keystore.get(peer, Transport.BLE)
            if record is not None:
                reaction.commands.append(hci.LeEnableEncryption(handle=conn.handle, ltk=record.key))
            else:
                # no LTK: go straight to pairing, there is nothing to encrypt with
                reaction.repairs.append(RepairRequest(peer=peer, transport=Transport.BLE))
        return reaction

    def on_link_key_request(self, peer: DeviceAddress) -> hci.HciCommand:
        """Single response per request: the stored key, or a negative reply."""
        record = self.keystore.get(peer, Transport.BT_CLASSIC)
        if record is not None:
            return hci.LinkKeyRequestReply(peer=peer, key=record.key)
        return hci.LinkKeyRequestNegativeReply(peer=peer)

    # -- event handling

    def handle_event(self, conn: Connection, event: hci.HciEvent) -> Reaction:
        if isinstance(event, hci.AuthenticationComplete):
            if event.status != ErrorCode.SUCCESS:
                return self._on_failure(conn, event.status)
        elif isinstance(event, hci.EncryptionChange):
            if not event.enabled:
                return self._on_failure(conn, event.status)
        elif isinstance(event, hci.LinkKeyNotification):
            peer = self.peer_of(conn)
            self.keystore.put(
                LinkKeyRecord(
                    peer=peer,
                    key=event.key,
                    key_type=event.key_type,
                    bonded=True,
                    transport=conn.transport,
                )
            )
        return Reaction()

    def _on_failure(self, conn: Connection, status: ErrorCode) -> Reaction:
        peer = self.peer_of(conn)
        reaction = Reaction()
        record = self.keystore.get(peer, conn.transport)
        if record is None:
            # nothing paired for this peer: initiate a fresh pairing rather
            # than grading a trust relationship that does not exist
            reaction.repairs.append(RepairRequest(peer=peer, transport=conn.transport))
        else:
            self.policy.on_failure(self, conn, peer, record, reaction)
        reaction.commands.append(
            hci.Disconnect(handle=conn.handle, reason=self.policy.disconnect_reason())
        )
        return reaction

    # -- scripted user actions

    def user_reset(self, peer: DeviceAddress) -> None:
        """Explicit user-initiated removal of the pairing entry."""
        for transport in Transport:
            if self.keystore.get(peer, transport) is not None:
                self.keystore.delete(peer, transport, user_initiated=True)

    def queue_consent(self, accept: bool) -> None:
        self.consent_queue.append(accept)
