"""Declarative scenario configs: the repo's regression corpus format.

Scenarios are JSON documents. The full surface:

    {
      "id": "bonded-mismatch/google-android",
      "seed": 2021,
      "devices": [
        {"address": "AA:00:00:00:00:01", "role": "host", "profile": "google-android"},
        {"address": "BB:00:00:00:00:02", "role": "host", "profile": "reference"},
        {"address": "CC:00:00:00:00:03", "role": "mitm"}
      ],
      "dut": "AA:00:00:00:00:01",
      "pairings": [
        {"a": "AA:...", "b": "BB:...", "key_type": "authenticated",
         "bonded": true, "transport": "bt", "via_mitm": false}
      ],
      "script": [
        {"op": "inject_fault", "device": "AA:...", "target": "link_key_request_reply",
         "match_peer": "BB:...", "replacement_key": "00112233445566778899aabbccddeeff",
         "window": [1, 2]},
        {"op": "connect", "initiator": "AA:...", "responder": "BB:..."},
        {"op": "mitm_present", "present": false},
        {"op": "user_reset", "device": "AA:...", "peer": "BB:..."},
        {"op": "user_consent", "device": "AA:...", "accept": true},
        {"op": "reconnect", "initiator": "AA:...", "responder": "BB:..."}
      ],
      "outputs": {"trace": "out/run.btsnoop", "report": "out/run.jsonl"}
    }

Roles: "host" (requires "profile"), "peripheral" (shorthand for a host with
the peripheral profile), "mitm". The optional "dut" names the graded device
and defaults to the first host. A host device may set "option_policy"
("recommended" | "option_1" | "option_2") to pick decision-table options;
it applies to the reference profile. Fault windows are half-open [start,
stop) ranges over script step indices. user_consent steps must precede the
failure whose consent prompt they answer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any

from .attack import FaultRule, InjectionTarget
from .core import DeviceAddress, KeyType, Transport
from .host import OptionPolicy


class ConfigError(Exception):
    """Invalid scenario config, with a field path in the message."""

    def __init__(self, path: str, message: str) -> None:
        self.path = path
        super().__init__(f"{path}: {message}")


class DeviceRole(Enum):
    HOST = "host"
    PERIPHERAL = "peripheral"
    MITM = "mitm"


@dataclass(frozen=True)
class DeviceSpec:
    address: DeviceAddress
    role: DeviceRole
    profile: str | None = None
    option_policy: OptionPolicy = OptionPolicy.RECOMMENDED


@dataclass(frozen=True)
class PairingSpec:
    a: DeviceAddress
    b: DeviceAddress
    key_type: KeyType
    bonded: bool
    transport: Transport
    via_mitm: bool = False


@dataclass(frozen=True)
class ConnectStep:
    initiator: DeviceAddress
    responder: DeviceAddress
    transport: Transport | None = None  # defaults to the pairing's transport
    reconnect: bool = False


@dataclass(frozen=True)
class InjectFaultStep:
    device: DeviceAddress
    rule: FaultRule


@dataclass(frozen=True)
class MitmPresentStep:
    present: bool


@dataclass(frozen=True)
class UserResetStep:
    device: DeviceAddress
    peer: DeviceAddress


@dataclass(frozen=True)
class UserConsentStep:
    device: DeviceAddress
    accept: bool


Step = ConnectStep | InjectFaultStep | MitmPresentStep | UserResetStep | UserConsentStep


@dataclass(frozen=True)
class OutputSpec:
    trace: str | None = None
    report: str | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str
    seed: int
    devices: tuple[DeviceSpec, ...]
    pairings: tuple[PairingSpec, ...]
    script: tuple[Step, ...]
    outputs: OutputSpec = OutputSpec()
    dut: DeviceAddress | None = None

    def device(self, address: DeviceAddress) -> DeviceSpec:
        for spec in self.devices:
            if spec.address == address:
                return spec
        raise KeyError(str(address))

    def dut_address(self) -> DeviceAddress:
        if self.dut is not None:
            return self.dut
        for spec in self.devices:
            if spec.role in (DeviceRole.HOST, DeviceRole.PERIPHERAL):
                return spec.address
        raise ConfigError("devices", "no host device to grade")

    def dut_pairing(self) -> PairingSpec:
        dut = self.dut_address()
        for pairing in self.pairings:
            if dut in (pairing.a, pairing.b):
                return pairing
        raise ConfigError("pairings", f"no pairing involves the DUT {dut}")

    def pairings_between(self, a: DeviceAddress, b: DeviceAddress) -> list[PairingSpec]:
        return [p for p in self.pairings if {p.a, p.b} == {a, b}]

    def resolve_transport(self, step: "ConnectStep") -> Transport:
        if step.transport is not None:
            return step.transport
        transports = {p.transport for p in self.pairings_between(step.initiator, step.responder)}
        if len(transports) == 1:
            return transports.pop()
        raise ConfigError(
            "script",
            f"connect {step.initiator} -> {step.responder} needs an explicit transport "
            f"({'no pairing' if not transports else 'both transports paired'})",
        )

    def with_dut_profile(self, profile_name: str) -> "ScenarioConfig":
        dut = self.dut_address()
        devices = tuple(
            replace(spec, profile=profile_name, role=DeviceRole.HOST)
            if spec.address == dut
            else spec
            for spec in self.devices
        )
        return replace(self, devices=devices)


# ---------------------------------------------------------------------------
# Parsing


def _expect(mapping: Any, path: str) -> dict:
    if not isinstance(mapping, dict):
        raise ConfigError(path, f"expected an object, got {type(mapping).__name__}")
    return mapping


def _require(mapping: dict, key: str, path: str) -> Any:
    if key not in mapping:
        raise ConfigError(f"{path}.{key}", "missing required field")
    return mapping[key]


def _parse_address(value: Any, path: str) -> DeviceAddress:
    if not isinstance(value, str):
        raise ConfigError(path, "expected an address string")
    try:
        return DeviceAddress.parse(value)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _parse_enum(enum_cls, value: Any, path: str):
    try:
        return enum_cls(value)
    except ValueError:
        options = ", ".join(repr(m.value) for m in enum_cls)
        raise ConfigError(path, f"expected one of {options}, got {value!r}") from None


def _parse_key(value: Any, path: str) -> bytes:
    if not isinstance(value, str):
        raise ConfigError(path, "expected a hex key string")
    try:
        key = bytes.fromhex(value)
    except ValueError:
        raise ConfigError(path, f"invalid hex: {value!r}") from None
    if len(key) != 16:
        raise ConfigError(path, f"key must be 16 octets, got {len(key)}")
    return key


def _parse_bool(value: Any, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(path, f"expected a boolean, got {value!r}")
    return value


def _parse_device(raw: Any, path: str) -> DeviceSpec:
    raw = _expect(raw, path)
    address = _parse_address(_require(raw, "address", path), f"{path}.address")
    role = _parse_enum(DeviceRole, _require(raw, "role", path), f"{path}.role")
    profile = raw.get("profile")
    if role == DeviceRole.HOST and not profile:
        raise ConfigError(f"{path}.profile", "host devices require a profile name")
    if role == DeviceRole.PERIPHERAL:
        profile = profile or "peripheral"
    if profile is not None and not isinstance(profile, str):
        raise ConfigError(f"{path}.profile", "expected a profile name string")
    option_policy = OptionPolicy.RECOMMENDED
    if "option_policy" in raw:
        option_policy = _parse_enum(OptionPolicy, raw["option_policy"], f"{path}.option_policy")
    return DeviceSpec(address=address, role=role, profile=profile, option_policy=option_policy)


def _parse_pairing(raw: Any, path: str) -> PairingSpec:
    raw = _expect(raw, path)
    return PairingSpec(
        a=_parse_address(_require(raw, "a", path), f"{path}.a"),
        b=_parse_address(_require(raw, "b", path), f"{path}.b"),
        key_type=_parse_enum(KeyType, _require(raw, "key_type", path), f"{path}.key_type"),
        bonded=_parse_bool(_require(raw, "bonded", path), f"{path}.bonded"),
        transport=_parse_enum(Transport, _require(raw, "transport", path), f"{path}.transport"),
        via_mitm=_parse_bool(raw.get("via_mitm", False), f"{path}.via_mitm"),
    )


def _parse_step(raw: Any, path: str) -> Step:
    raw = _expect(raw, path)
    op = _require(raw, "op", path)
    if op in ("connect", "reconnect"):
        transport = None
        if "transport" in raw:
            transport = _parse_enum(Transport, raw["transport"], f"{path}.transport")
        return ConnectStep(
            initiator=_parse_address(_require(raw, "initiator", path), f"{path}.initiator"),
            responder=_parse_address(_require(raw, "responder", path), f"{path}.responder"),
            transport=transport,
            reconnect=op == "reconnect",
        )
    if op == "inject_fault":
        window_raw = raw.get("window", [0, 1 << 62])
        if (
            not isinstance(window_raw, (list, tuple))
            or len(window_raw) != 2
            or not all(isinstance(v, int) for v in window_raw)
        ):
            raise ConfigError(f"{path}.window", "expected [start, stop] step indices")
        match_peer = None
        if raw.get("match_peer") is not None:
            match_peer = _parse_address(raw["match_peer"], f"{path}.match_peer")
        try:
            rule = FaultRule(
                target_command=_parse_enum(
                    InjectionTarget, _require(raw, "target", path), f"{path}.target"
                ),
                replacement_key=_parse_key(
                    _require(raw, "replacement_key", path), f"{path}.replacement_key"
                ),
                match_peer=match_peer,
                window=(window_raw[0], window_raw[1]),
            )
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from None
        return InjectFaultStep(
            device=_parse_address(_require(raw, "device", path), f"{path}.device"),
            rule=rule,
        )
    if op == "mitm_present":
        return MitmPresentStep(present=_parse_bool(_require(raw, "present", path), f"{path}.present"))
    if op == "user_reset":
        return UserResetStep(
            device=_parse_address(_require(raw, "device", path), f"{path}.device"),
            peer=_parse_address(_require(raw, "peer", path), f"{path}.peer"),
        )
    if op == "user_consent":
        return UserConsentStep(
            device=_parse_address(_require(raw, "device", path), f"{path}.device"),
            accept=_parse_bool(_require(raw, "accept", path), f"{path}.accept"),
        )
    raise ConfigError(f"{path}.op", f"unknown step op {op!r}")


def parse_config(source: str | dict) -> ScenarioConfig:
    """Parse and validate a scenario config from JSON text or a dict."""
    if isinstance(source, str):
        try:
            raw = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ConfigError("$", f"invalid JSON: {exc}") from None
    else:
        raw = source
    raw = _expect(raw, "$")

    scenario_id = _require(raw, "id", "$")
    if not isinstance(scenario_id, str) or not scenario_id:
        raise ConfigError("$.id", "expected a non-empty string")
    seed = _require(raw, "seed", "$")
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 1 << 64:
        raise ConfigError("$.seed", "expected a 64-bit unsigned integer")

    devices_raw = _require(raw, "devices", "$")
    if not isinstance(devices_raw, list) or not devices_raw:
        raise ConfigError("$.devices", "expected a non-empty list")
    devices = tuple(_parse_device(d, f"$.devices[{i}]") for i, d in enumerate(devices_raw))
    addresses = [d.address for d in devices]
    if len(set(addresses)) != len(addresses):
        raise ConfigError("$.devices", "duplicate device addresses")
    known = set(addresses)
    mitm_declared = any(d.role == DeviceRole.MITM for d in devices)

    def _check_known(addr: DeviceAddress, path: str) -> DeviceAddress:
        if addr not in known:
            raise ConfigError(path, f"references undeclared device {addr}")
        return addr

    pairings_raw = raw.get("pairings", [])
    if not isinstance(pairings_raw, list):
        raise ConfigError("$.pairings", "expected a list")
    pairings = []
    for i, p in enumerate(pairings_raw):
        pairing = _parse_pairing(p, f"$.pairings[{i}]")
        _check_known(pairing.a, f"$.pairings[{i}].a")
        _check_known(pairing.b, f"$.pairings[{i}].b")
        if pairing.via_mitm and not mitm_declared:
            raise ConfigError(f"$.pairings[{i}].via_mitm", "requires a declared mitm device")
        pairings.append(pairing)

    script_raw = raw.get("script", [])
    if not isinstance(script_raw, list):
        raise ConfigError("$.script", "expected a list")
    script = []
    for i, s in enumerate(script_raw):
        step = _parse_step(s, f"$.script[{i}]")
        for attr in ("initiator", "responder", "device", "peer"):
            value = getattr(step, attr, None)
            if isinstance(value, DeviceAddress):
                _check_known(value, f"$.script[{i}].{attr}")
        script.append(step)

    outputs_raw = raw.get("outputs", {})
    outputs_raw = _expect(outputs_raw, "$.outputs")
    outputs = OutputSpec(trace=outputs_raw.get("trace"), report=outputs_raw.get("report"))

    dut = None
    if raw.get("dut") is not None:
        dut = _check_known(_parse_address(raw["dut"], "$.dut"), "$.dut")

    config = ScenarioConfig(
        scenario_id=scenario_id,
        seed=seed,
        devices=devices,
        pairings=tuple(pairings),
        script=tuple(script),
        outputs=outputs,
        dut=dut,
    )
    config.dut_address()  # must exist
    for i, step in enumerate(config.script):
        if isinstance(step, MitmPresentStep) and not mitm_declared:
            raise ConfigError(f"$.script[{i}]", "mitm_present requires a declared mitm device")
        if isinstance(step, ConnectStep):
            try:
                config.resolve_transport(step)
            except ConfigError as exc:
                raise ConfigError(f"$.script[{i}]", str(exc)) from None
    return config


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# ---------------------------------------------------------------------------
# Serialization (round-trips through parse_config)


def _step_to_dict(step: Step) -> dict:
    if isinstance(step, ConnectStep):
        out = {
            "op": "reconnect" if step.reconnect else "connect",
            "initiator": str(step.initiator),
            "responder": str(step.responder),
        }
        if step.transport is not None:
            out["transport"] = step.transport.value
        return out
    if isinstance(step, InjectFaultStep):
        out = {
            "op": "inject_fault",
            "device": str(step.device),
            "target": step.rule.target_command.value,
            "replacement_key": step.rule.replacement_key.hex(),
            "window": list(step.rule.window),
        }
        if step.rule.match_peer is not None:
            out["match_peer"] = str(step.rule.match_peer)
        return out
    if isinstance(step, MitmPresentStep):
        return {"op": "mitm_present", "present": step.present}
    if isinstance(step, UserResetStep):
        return {"op": "user_reset", "device": str(step.device), "peer": str(step.peer)}
    if isinstance(step, UserConsentStep):
        return {"op": "user_consent", "device": str(step.device), "accept": step.accept}
    raise TypeError(f"unknown step {step!r}")


def config_to_dict(config: ScenarioConfig) -> dict:
    out: dict = {
        "id": config.scenario_id,
        "seed": config.seed,
        "devices": [],
        "pairings": [],
        "script": [_step_to_dict(s) for s in config.script],
    }
    for spec in config.devices:
        device: dict = {"address": str(spec.address), "role": spec.role.value}
        if spec.profile is not None:
            device["profile"] = spec.profile
        if spec.option_policy != OptionPolicy.RECOMMENDED:
            device["option_policy"] = spec.option_policy.value
        out["devices"].append(device)
    for pairing in config.pairings:
        out["pairings"].append(
            {
                "a": str(pairing.a),
                "b": str(pairing.b),
                "key_type": pairing.key_type.value,
                "bonded": pairing.bonded,
                "transport": pairing.transport.value,
                "via_mitm": pairing.via_mitm,
            }
        )
    if config.outputs.trace or config.outputs.report:
        outputs = {}
        if config.outputs.trace:
            outputs["trace"] = config.outputs.trace
        if config.outputs.report:
            outputs["report"] = config.outputs.report
        out["outputs"] = outputs
    if config.dut is not None:
        out["dut"] = str(config.dut)
    return out


def serialize_config(config: ScenarioConfig) -> str:
    return json.dumps(config_to_dict(config), indent=2) + "\n"
