"""Deterministic single-threaded scenario execution.

One scenario is one event loop: script steps run in order, each step's
message cascade drains to quiescence before the next starts, and the clock
advances a fixed tick per traced packet. Everything random (setup keys,
challenges, minted pairing keys) comes from one PRNG seeded by the config,
so a scenario's trace is byte-reproducible.

Connection attempts route through the attacker when one is declared and
present: the initiator then talks to the attacker posing as the responder
while the attacker runs a second segment to the real responder, each
segment authenticating with its own key.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from . import hci, linklayer
from .attack import FaultRule, InjectionAudit, MitmNode, inject
from .compliance import ComplianceVerdict, NoFailureInScenarioError, grade
from .core import (
    DeviceAddress,
    ErrorCode,
    KeyDeletion,
    KeyStore,
    LinkKeyRecord,
    SimClock,
    Transport,
)
from .host import Host, RepairRequest, UserSurfaceEvent
from .linklayer import Connection, ConnectionState
from .profiles import StackProfile, builtin_profiles, get_profile, make_policy
from .scenario import (
    ConnectStep,
    DeviceRole,
    InjectFaultStep,
    MitmPresentStep,
    ScenarioConfig,
    UserConsentStep,
    UserResetStep,
)
from .trace import Direction, TracedPacket

PACKET_TICK_US = 100
STEP_TICK_US = 1000

# repair pairings can trigger follow-up repairs; anything deeper than this
# is a scripting bug, not a legitimate cascade
_MAX_REPAIR_ROUNDS = 8


class ScenarioExecutionError(Exception):
    pass


@dataclass
class SimDevice:
    address: DeviceAddress
    host: Host | None = None
    mitm: MitmNode | None = None
    fault_rules: list[FaultRule] = field(default_factory=list)


@dataclass(frozen=True)
class Segment:
    """One physical hop of a (possibly relayed) connection attempt.

    Claimed addresses are what the endpoints believe; with an interposed
    attacker they differ from the actual devices on the segment.
    """

    init_dev: SimDevice
    resp_dev: SimDevice
    init_addr: DeviceAddress
    resp_addr: DeviceAddress
    transport: Transport


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    trace_packets: list[TracedPacket]
    connections: list[Connection]
    user_events: dict[DeviceAddress, list[UserSurfaceEvent]]
    key_deletions: dict[DeviceAddress, list[KeyDeletion]]
    injection_audits: list[InjectionAudit]
    keystores: dict[DeviceAddress, KeyStore]
    mitm: MitmNode | None
    consent_steps_executed: int
    legitimate_reset: bool
    end_time_us: int

    def dut_events(self) -> list[UserSurfaceEvent]:
        return self.user_events[self.config.dut_address()]

    def dut_deletions(self) -> list[KeyDeletion]:
        return self.key_deletions[self.config.dut_address()]


@dataclass
class ScenarioRun:
    config: ScenarioConfig
    result: ScenarioResult
    verdict: ComplianceVerdict | None  # None when nothing gradeable failed

    @property
    def exit_status(self) -> int:
        if self.verdict is not None and self.verdict.violations:
            return 1
        return 0


class Simulator:
    def __init__(
        self,
        config: ScenarioConfig,
        registry: dict[str, StackProfile] | None = None,
    ) -> None:
        self.config = config
        self.registry = registry if registry is not None else builtin_profiles()
        self.clock = SimClock()
        self.rng = random.Random(config.seed)
        self.trace: list[TracedPacket] = []
        self.connections: list[Connection] = []
        self.audits: list[InjectionAudit] = []
        self.devices: dict[DeviceAddress, SimDevice] = {}
        self.mitm_device: SimDevice | None = None
        self._segments: dict[int, Segment] = {}
        self._next_handle = 1
        self._step = -1  # setup happens before step 0
        self._pending_repairs: list[tuple[SimDevice, RepairRequest]] = []
        self._consent_steps = 0
        self._reset_seen = False

        for spec in config.devices:
            if spec.role == DeviceRole.MITM:
                device = SimDevice(address=spec.address, mitm=MitmNode(address=spec.address))
                self.mitm_device = device
            else:
                profile = get_profile(spec.profile, self.registry)
                policy = make_policy(profile, spec.option_policy)
                device = SimDevice(
                    address=spec.address, host=Host(spec.address, self.clock, policy)
                )
            self.devices[spec.address] = device

        self._seed_pairings()

    # -- setup ---------------------------------------------------------

    def _mint_key(self) -> bytes:
        return self.rng.getrandbits(128).to_bytes(16, "big")

    def _seed_pairings(self) -> None:
        for pairing in self.config.pairings:
            host_a = self.devices[pairing.a].host
            host_b = self.devices[pairing.b].host
            if host_a is None or host_b is None:
                raise ScenarioExecutionError("pairings must be between host devices")
            if pairing.via_mitm:
                key_am = self._mint_key()
                key_mb = self._mint_key()
                while key_mb == key_am:
                    key_mb = self._mint_key()
                mitm = self.mitm_device.mitm
                host_a.keystore.put(
                    LinkKeyRecord(pairing.b, key_am, pairing.key_type, pairing.bonded, pairing.transport)
                )
                mitm.store_segment_key(
                    LinkKeyRecord(pairing.a, key_am, pairing.key_type, pairing.bonded, pairing.transport)
                )
                host_b.keystore.put(
                    LinkKeyRecord(pairing.a, key_mb, pairing.key_type, pairing.bonded, pairing.transport)
                )
                mitm.store_segment_key(
                    LinkKeyRecord(pairing.b, key_mb, pairing.key_type, pairing.bonded, pairing.transport)
                )
            else:
                key = self._mint_key()
                host_a.keystore.put(
                    LinkKeyRecord(pairing.b, key, pairing.key_type, pairing.bonded, pairing.transport)
                )
                host_b.keystore.put(
                    LinkKeyRecord(pairing.a, key, pairing.key_type, pairing.bonded, pairing.transport)
                )

    # -- plumbing ------------------------------------------------------

    def _trace(self, device: SimDevice, packet: hci.HciPacket, direction: Direction) -> int:
        self.clock.advance(PACKET_TICK_US)
        self.trace.append(
            TracedPacket(
                packet=packet,
                direction=direction,
                timestamp_us=self.clock.now_us,
                device=device.address,
            )
        )
        return len(self.trace) - 1

    def _claimed_peer(self, device: SimDevice, seg: Segment) -> DeviceAddress:
        return seg.resp_addr if device is seg.init_dev else seg.init_addr

    def _send_host_command(
        self, device: SimDevice, seg: Segment, cmd: hci.HciCommand
    ) -> hci.HciCommand:
        """Host-to-controller boundary: fault injection, then capture."""
        peer = self._claimed_peer(device, seg)
        matched: list[InjectionAudit] = []
        for rule in device.fault_rules:
            cmd, audit = inject(rule, cmd, max(self._step, 0), peer=peer)
            if audit is not None:
                matched.append(audit)
        index = self._trace(device, cmd, Direction.HOST_TO_CONTROLLER)
        for audit in matched:
            self.audits.append(
                replace(audit, timestamp_us=self.clock.now_us, packet_index=index)
            )
        return cmd

    def _deliver_event(self, device: SimDevice, seg: Segment, conn: Connection, event) -> None:
        self._trace(device, event, Direction.CONTROLLER_TO_HOST)
        if device.host is not None:
            reaction = device.host.handle_event(conn, event)
            self._process_reaction(device, seg, conn, reaction)
        else:
            self._mitm_handle_event(device, seg, conn, event)

    def _process_reaction(self, device: SimDevice, seg: Segment, conn: Connection, reaction) -> None:
        for cmd in reaction.commands:
            sent = self._send_host_command(device, seg, cmd)
            if isinstance(sent, hci.AuthenticationRequested):
                self._authenticate_bt(seg, conn)
            elif isinstance(sent, hci.Disconnect):
                self._detach(seg, conn, sent.reason)
            elif isinstance(sent, hci.LeEnableEncryption):
                self._start_ble_encryption(seg, conn, sent.ltk)
        for repair in reaction.repairs:
            self._pending_repairs.append((device, repair))

    # -- connection procedures ------------------------------------------

    def _new_connection(self, seg: Segment) -> Connection:
        conn = Connection(
            handle=self._next_handle,
            initiator=seg.init_addr,
            responder=seg.resp_addr,
            transport=seg.transport,
        )
        self._next_handle += 1
        self.connections.append(conn)
        self._segments[conn.handle] = seg
        return conn

    def _route(self, initiator: DeviceAddress, responder: DeviceAddress, transport: Transport) -> list[Segment]:
        init_dev = self.devices[initiator]
        resp_dev = self.devices[responder]
        mitm = self.mitm_device
        if (
            mitm is not None
            and mitm.mitm.present
            and initiator != mitm.address
            and responder != mitm.address
        ):
            return [
                Segment(init_dev, mitm, initiator, responder, transport),
                Segment(mitm, resp_dev, initiator, responder, transport),
            ]
        return [Segment(init_dev, resp_dev, initiator, responder, transport)]

    def _connect(self, initiator: DeviceAddress, responder: DeviceAddress, transport: Transport) -> None:
        for seg in self._route(initiator, responder, transport):
            conn = self._new_connection(seg)
            if seg.transport == Transport.BT_CLASSIC:
                self._start_bt(seg, conn)
            else:
                self._start_ble(seg, conn)

    def _start_bt(self, seg: Segment, conn: Connection) -> None:
        if seg.init_dev.host is not None:
            reaction = seg.init_dev.host.on_connected(conn)
            self._process_reaction(seg.init_dev, seg, conn, reaction)
        else:
            self._send_host_command(seg.init_dev, seg, hci.AuthenticationRequested(handle=conn.handle))
            self._authenticate_bt(seg, conn)

    def _start_ble(self, seg: Segment, conn: Connection) -> None:
        if seg.init_dev.host is not None:
            reaction = seg.init_dev.host.on_connected(conn)
            self._process_reaction(seg.init_dev, seg, conn, reaction)
        else:
            mitm = seg.init_dev.mitm
            ltk = mitm.key_for(self._claimed_peer(seg.init_dev, seg), Transport.BLE)
            if ltk is not None:
                sent = self._send_host_command(
                    seg.init_dev, seg, hci.LeEnableEncryption(handle=conn.handle, ltk=ltk)
                )
                self._start_ble_encryption(seg, conn, sent.ltk)
            else:
                self._pending_repairs.append(
                    (seg.init_dev, RepairRequest(peer=self._claimed_peer(seg.init_dev, seg), transport=Transport.BLE))
                )

    def _obtain_bt_key(self, device: SimDevice, seg: Segment, conn: Connection) -> bytes | None:
        peer = self._claimed_peer(device, seg)
        self._trace(device, hci.LinkKeyRequest(peer=peer), Direction.CONTROLLER_TO_HOST)
        if device.host is not None:
            reply = device.host.on_link_key_request(peer)
        else:
            key = device.mitm.key_for(peer, conn.transport)
            if key is not None:
                reply = hci.LinkKeyRequestReply(peer=peer, key=key)
            else:
                reply = hci.LinkKeyRequestNegativeReply(peer=peer)
        reply = self._send_host_command(device, seg, reply)
        if isinstance(reply, hci.LinkKeyRequestReply):
            return reply.key
        return None

    def _authenticate_bt(self, seg: Segment, conn: Connection) -> None:
        initiator_key = self._obtain_bt_key(seg.init_dev, seg, conn)
        responder_key = self._obtain_bt_key(seg.resp_dev, seg, conn)
        outcome = linklayer.run_bt_authentication(conn, initiator_key, responder_key, self.rng)
        for event in outcome.initiator_events:
            self._deliver_event(seg.init_dev, seg, conn, event)

    def _start_ble_encryption(self, seg: Segment, conn: Connection, initiator_ltk: bytes) -> None:
        resp = seg.resp_dev
        if resp.host is not None:
            record = resp.host.keystore.get(self._claimed_peer(resp, seg), Transport.BLE)
            responder_ltk = record.key if record is not None else None
        else:
            responder_ltk = resp.mitm.key_for(self._claimed_peer(resp, seg), Transport.BLE)
        outcome = linklayer.run_ble_encryption_start(conn, initiator_ltk, responder_ltk, self.rng)
        for event in outcome.responder_events:
            self._deliver_event(seg.resp_dev, seg, conn, event)
        for event in outcome.initiator_events:
            self._deliver_event(seg.init_dev, seg, conn, event)

    def _detach(self, seg: Segment, conn: Connection, reason: ErrorCode) -> None:
        events = linklayer.detach(conn, reason)
        for device in (seg.init_dev, seg.resp_dev):
            for event in events:
                self._deliver_event(device, seg, conn, event)

    def _mitm_handle_event(self, device: SimDevice, seg: Segment, conn: Connection, event) -> None:
        mitm = device.mitm
        victim = self._claimed_peer(device, seg)
        if isinstance(event, hci.LinkKeyNotification):
            mitm.store_segment_key(
                LinkKeyRecord(
                    peer=victim,
                    key=event.key,
                    key_type=event.key_type,
                    bonded=True,
                    transport=conn.transport,
                )
            )
            return
        failed = (
            isinstance(event, hci.AuthenticationComplete) and event.status != ErrorCode.SUCCESS
        ) or (isinstance(event, hci.EncryptionChange) and not event.enabled)
        if failed:
            # attacker keeps its own stack honest: clean 0x05 disconnect,
            # then pair the segment if it has no key for this victim yet
            if mitm.key_for(victim, conn.transport) is None:
                self._pending_repairs.append(
                    (device, RepairRequest(peer=victim, transport=conn.transport))
                )
            sent = self._send_host_command(
                device, seg, hci.Disconnect(handle=conn.handle, reason=ErrorCode.AUTHENTICATION_FAILURE)
            )
            self._detach(seg, conn, sent.reason)

    # -- pairing (fresh and repair) --------------------------------------

    def _live_segment_conn(self, seg_devices: tuple[SimDevice, SimDevice], transport: Transport) -> Connection | None:
        for conn in reversed(self.connections):
            if conn.state != ConnectionState.CONNECTED or conn.transport != transport:
                continue
            seg = self._segments[conn.handle]
            if (seg.init_dev, seg.resp_dev) == seg_devices:
                return conn
        return None

    def _pair(self, device: SimDevice, repair: RepairRequest) -> None:
        """Run a pairing from `device` toward repair.peer, attacker-routed.

        The requesting device always mints a fresh key on its segment. On a
        relayed attempt the attacker's far segment reuses its existing key
        when it has one (no need to disturb the other victim) and pairs
        otherwise.
        """
        for seg in self._route(device.address, repair.peer, repair.transport):
            initiating = seg.init_dev
            if initiating is not device:
                claimed = self._claimed_peer(initiating, seg)
                if initiating.host is not None:
                    has_key = initiating.host.keystore.get(claimed, seg.transport) is not None
                else:
                    has_key = initiating.mitm.key_for(claimed, seg.transport) is not None
                if has_key:
                    conn = self._new_connection(seg)
                    if seg.transport == Transport.BT_CLASSIC:
                        self._start_bt(seg, conn)
                    else:
                        self._start_ble(seg, conn)
                    continue
            conn = self._live_segment_conn((seg.init_dev, seg.resp_dev), seg.transport)
            if conn is None:
                conn = self._new_connection(seg)
            outcome = linklayer.run_pairing(conn, repair.key_type, self.rng)
            for event in outcome.initiator_events:
                self._deliver_event(seg.init_dev, seg, conn, event)
            for event in outcome.responder_events:
                self._deliver_event(seg.resp_dev, seg, conn, event)

    def _drain_repairs(self) -> None:
        for _ in range(_MAX_REPAIR_ROUNDS):
            if not self._pending_repairs:
                return
            pending, self._pending_repairs = self._pending_repairs, []
            for device, repair in pending:
                self._pair(device, repair)
        if self._pending_repairs:
            raise ScenarioExecutionError("repair cascade did not settle")

    # -- script execution -------------------------------------------------

    def _execute_step(self, step) -> None:
        if isinstance(step, InjectFaultStep):
            self.devices[step.device].fault_rules.append(step.rule)
        elif isinstance(step, MitmPresentStep):
            self.mitm_device.mitm.present = step.present
        elif isinstance(step, UserResetStep):
            host = self.devices[step.device].host
            if host is None:
                raise ScenarioExecutionError("user_reset targets a non-host device")
            host.user_reset(step.peer)
            self._reset_seen = True
        elif isinstance(step, UserConsentStep):
            host = self.devices[step.device].host
            if host is None:
                raise ScenarioExecutionError("user_consent targets a non-host device")
            host.queue_consent(step.accept)
            self._consent_steps += 1
        elif isinstance(step, ConnectStep):
            transport = self.config.resolve_transport(step)
            self._connect(step.initiator, step.responder, transport)
        else:
            raise ScenarioExecutionError(f"unknown step {step!r}")

    def run(self) -> ScenarioResult:
        for index, step in enumerate(self.config.script):
            self._step = index
            self.clock.advance(STEP_TICK_US)
            self._execute_step(step)
            self._drain_repairs()
        hosts = {
            addr: dev.host for addr, dev in self.devices.items() if dev.host is not None
        }
        return ScenarioResult(
            config=self.config,
            trace_packets=self.trace,
            connections=self.connections,
            user_events={addr: host.user_events for addr, host in hosts.items()},
            key_deletions={addr: host.keystore.deletions for addr, host in hosts.items()},
            injection_audits=self.audits,
            keystores={addr: host.keystore for addr, host in hosts.items()},
            mitm=self.mitm_device.mitm if self.mitm_device else None,
            consent_steps_executed=self._consent_steps,
            legitimate_reset=self._reset_seen,
            end_time_us=self.clock.now_us,
        )


# ---------------------------------------------------------------------------
# High-level entry points


def execute_scenario(
    config: ScenarioConfig, registry: dict[str, StackProfile] | None = None
) -> ScenarioResult:
    return Simulator(config, registry).run()


def grade_result(result: ScenarioResult) -> ComplianceVerdict | None:
    """Grade the DUT's observables; None when nothing gradeable failed."""
    config = result.config
    pairing = config.dut_pairing()
    dut = config.dut_address()
    try:
        return grade(
            pairing.key_type,
            pairing.bonded,
            events=result.user_events[dut],
            trace=result.trace_packets,
            keystore_delta=result.key_deletions[dut],
            scenario_id=config.scenario_id,
            profile=config.device(dut).profile,
            legitimate_reset=result.legitimate_reset,
        )
    except NoFailureInScenarioError:
        return None


def run_scenario(
    config: ScenarioConfig, registry: dict[str, StackProfile] | None = None
) -> ScenarioRun:
    result = execute_scenario(config, registry)
    return ScenarioRun(config=config, result=result, verdict=grade_result(result))


def run_scenario_with_profile(
    config: ScenarioConfig,
    profile: StackProfile,
    registry: dict[str, StackProfile] | None = None,
) -> ScenarioRun:
    registry = dict(registry if registry is not None else builtin_profiles())
    registry[profile.name] = profile
    return run_scenario(config.with_dut_profile(profile.name), registry)


def matrix_cell_runner(config: ScenarioConfig, profile_name: str):
    """Run one matrix cell: UNSUPPORTED for transport mismatches, ERROR on
    per-cell failures, otherwise the graded summary symbol."""
    from .compliance import CellStatus, MatrixCell

    try:
        profile = get_profile(profile_name)
        if config.dut_pairing().transport not in profile.supported_transports:
            return MatrixCell(status=CellStatus.UNSUPPORTED, detail="connection type not supported")
        run = run_scenario_with_profile(config, profile)
        if run.verdict is None:
            return MatrixCell(status=CellStatus.ERROR, detail="scenario produced no gradeable failure")
        return MatrixCell(
            status=CellStatus.GRADED,
            symbol=run.verdict.summary_symbol,
            verdict=run.verdict,
        )
    except Exception as exc:  # per-cell isolation is the contract
        return MatrixCell(status=CellStatus.ERROR, detail=str(exc))
