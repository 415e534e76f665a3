"""Simulated link between two controllers.

BT mutual authentication runs as a keyed challenge-response over whatever
keys the two controllers obtained from their hosts; BLE encryption start
compares session confirmation tags derived from each side's LTK. Both
procedures only care whether the keys match, which is the unit of analysis
here, so a single keyed-MAC construction stands in for the real ciphers.

Detach forwards its reason code verbatim to both hosts; the miscoding bug
under study originates in the host's DISCONNECT command, never here.
"""

from __future__ import annotations

import hashlib
import hmac
import random
from dataclasses import dataclass, field
from enum import Enum

from . import hci
from .core import KEY_LEN, DeviceAddress, ErrorCode, KeyType, Transport


class InvalidStateError(Exception):
    """Operation attempted in a connection state that does not allow it."""


class ConnectionState(Enum):
    IDLE = "idle"
    CONNECTED = "connected"
    AUTHENTICATING = "authenticating"
    ENCRYPTED = "encrypted"
    DETACHED = "detached"


@dataclass
class Connection:
    """One simulated link; DETACHED is terminal.

    Addresses are as claimed at connection setup: with an interposed
    attacker the peer a device believes it talks to is not the device on
    the other end of the segment.
    """

    handle: int
    initiator: DeviceAddress
    responder: DeviceAddress
    transport: Transport
    state: ConnectionState = ConnectionState.CONNECTED
    detach_reason: ErrorCode | None = None

    def _transition(self, new_state: ConnectionState) -> None:
        if self.state == ConnectionState.DETACHED:
            raise InvalidStateError("connection is detached")
        if new_state == ConnectionState.ENCRYPTED:
            allowed = (
                ConnectionState.AUTHENTICATING
                if self.transport == Transport.BT_CLASSIC
                else ConnectionState.CONNECTED
            )
            if self.state != allowed:
                raise InvalidStateError(f"cannot encrypt from {self.state}")
        self.state = new_state


def auth_response(key: bytes, challenge: bytes, claimant: DeviceAddress) -> int:
    """32-bit challenge response: first 4 octets of HMAC-SHA-256.

    key = link key / LTK, message = challenge || claimant address octets.
    The construction is fixed so independent implementations agree.
    """
    if len(key) != KEY_LEN:
        raise ValueError(f"key must be {KEY_LEN} octets")
    if len(challenge) != 16:
        raise ValueError("challenge must be 16 octets")
    mac = hmac.new(key, challenge + claimant.octets, hashlib.sha256).digest()
    return int.from_bytes(mac[:4], "big")


@dataclass(frozen=True)
class AuthChallenge:
    challenge: bytes
    claimant: DeviceAddress
    expected_response: int


@dataclass
class AuthOutcome:
    status: ErrorCode
    initiator_events: list[hci.HciEvent] = field(default_factory=list)
    challenges: tuple[AuthChallenge, ...] = ()


@dataclass
class EncryptionOutcome:
    status: ErrorCode
    enabled: bool
    initiator_events: list[hci.HciEvent] = field(default_factory=list)
    responder_events: list[hci.HciEvent] = field(default_factory=list)
    session_nonce: bytes = b""


@dataclass
class PairingOutcome:
    key: bytes
    initiator_events: list[hci.HciEvent] = field(default_factory=list)
    responder_events: list[hci.HciEvent] = field(default_factory=list)


def _draw_challenge(rng: random.Random) -> bytes:
    return rng.getrandbits(128).to_bytes(16, "big")


def run_bt_authentication(
    conn: Connection,
    initiator_key: bytes | None,
    responder_key: bytes | None,
    rng: random.Random,
) -> AuthOutcome:
    """Mutual challenge-response, modeled as one atomic exchange.

    Keys are whatever each controller obtained via LINK_KEY_REQUEST (possibly
    fault-injected); None means the host replied negatively. Only the
    initiator's host receives AUTHENTICATION_COMPLETE; a responder learns of
    a failure solely through the eventual disconnect reason.
    """
    if conn.transport != Transport.BT_CLASSIC:
        raise InvalidStateError("BT authentication on a non-BT connection")
    if conn.state != ConnectionState.CONNECTED:
        raise InvalidStateError(f"authentication requires CONNECTED, got {conn.state}")

    conn._transition(ConnectionState.AUTHENTICATING)

    if initiator_key is None or responder_key is None:
        conn._transition(ConnectionState.CONNECTED)
        status = ErrorCode.PIN_OR_KEY_MISSING
        return AuthOutcome(
            status=status,
            initiator_events=[hci.AuthenticationComplete(handle=conn.handle, status=status)],
        )

    # each side verifies the other: responder challenges initiator and
    # vice versa, with the verifier's stored key defining the expectation
    challenges = []
    matched = True
    for verifier_key, claimant_key, claimant_addr in (
        (responder_key, initiator_key, conn.initiator),
        (initiator_key, responder_key, conn.responder),
    ):
        challenge = _draw_challenge(rng)
        expected = auth_response(verifier_key, challenge, claimant_addr)
        actual = auth_response(claimant_key, challenge, claimant_addr)
        challenges.append(
            AuthChallenge(challenge=challenge, claimant=claimant_addr, expected_response=expected)
        )
        if actual != expected:
            matched = False

    if matched:
        conn._transition(ConnectionState.ENCRYPTED)
        status = ErrorCode.SUCCESS
    else:
        conn._transition(ConnectionState.CONNECTED)
        status = ErrorCode.AUTHENTICATION_FAILURE

    return AuthOutcome(
        status=status,
        initiator_events=[hci.AuthenticationComplete(handle=conn.handle, status=status)],
        challenges=tuple(challenges),
    )


def run_ble_encryption_start(
    conn: Connection,
    initiator_ltk: bytes,
    responder_ltk: bytes | None,
    rng: random.Random,
) -> EncryptionOutcome:
    """BLE encryption start: compare per-connection session confirmation tags.

    Matching tags report encryption on to both hosts. A mismatch reports
    encryption still off to the initiator host only; a responder with no LTK
    at all yields PIN_OR_KEY_MISSING instead, so "key deleted on peer" stays
    distinguishable from "key substituted".
    """
    if conn.transport != Transport.BLE:
        raise InvalidStateError("BLE encryption start on a non-BLE connection")
    if conn.state != ConnectionState.CONNECTED:
        raise InvalidStateError(f"encryption start requires CONNECTED, got {conn.state}")

    nonce = _draw_challenge(rng)

    if responder_ltk is None:
        return EncryptionOutcome(
            status=ErrorCode.PIN_OR_KEY_MISSING,
            enabled=False,
            initiator_events=[
                hci.EncryptionChange(
                    handle=conn.handle, status=ErrorCode.PIN_OR_KEY_MISSING, enabled=False
                )
            ],
            session_nonce=nonce,
        )

    tag_initiator = auth_response(initiator_ltk, nonce, conn.initiator)
    tag_responder = auth_response(responder_ltk, nonce, conn.initiator)

    if tag_initiator == tag_responder:
        conn._transition(ConnectionState.ENCRYPTED)
        event = hci.EncryptionChange(handle=conn.handle, status=ErrorCode.SUCCESS, enabled=True)
        return EncryptionOutcome(
            status=ErrorCode.SUCCESS,
            enabled=True,
            initiator_events=[event],
            responder_events=[event],
            session_nonce=nonce,
        )

    return EncryptionOutcome(
        status=ErrorCode.AUTHENTICATION_FAILURE,
        enabled=False,
        initiator_events=[
            hci.EncryptionChange(
                handle=conn.handle, status=ErrorCode.AUTHENTICATION_FAILURE, enabled=False
            )
        ],
        session_nonce=nonce,
    )


def run_pairing(
    conn: Connection,
    key_type: KeyType,
    rng: random.Random,
) -> PairingOutcome:
    """Mint a fresh shared key on an unauthenticated link (Just Works style).

    The cryptography of pairing is out of scope; its HCI-observable effect is
    a LINK_KEY_NOTIFICATION on both hosts followed by an encrypted link, and
    that is what this produces (for BLE the notification stands in for LTK
    distribution).
    """
    if conn.state != ConnectionState.CONNECTED:
        raise InvalidStateError(f"pairing requires CONNECTED, got {conn.state}")

    key = rng.getrandbits(128).to_bytes(16, "big")
    if conn.transport == Transport.BT_CLASSIC:
        conn._transition(ConnectionState.AUTHENTICATING)
    conn._transition(ConnectionState.ENCRYPTED)
    return PairingOutcome(
        key=key,
        initiator_events=[
            hci.LinkKeyNotification(peer=conn.responder, key=key, key_type=key_type)
        ],
        responder_events=[
            hci.LinkKeyNotification(peer=conn.initiator, key=key, key_type=key_type)
        ],
    )


def detach(conn: Connection, reason: ErrorCode) -> list[hci.HciEvent]:
    """Terminate the link; both hosts see DISCONNECTION_COMPLETE with `reason`.

    The reason is forwarded verbatim, never rewritten: reason transparency is
    what makes the host-side miscoding observable at the responder.
    """
    if conn.state == ConnectionState.DETACHED:
        raise InvalidStateError("connection already detached")
    conn.state = ConnectionState.DETACHED
    conn.detach_reason = reason
    return [hci.DisconnectionComplete(handle=conn.handle, reason=reason)]
