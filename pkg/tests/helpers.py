"""Shared scenario builders for the test suite."""

from __future__ import annotations

from pathlib import Path

from btkeylab.scenario import ScenarioConfig, parse_config

REPO_ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = REPO_ROOT / "scenarios"
DATA = Path(__file__).resolve().parent / "data"

DUT = "AA:00:00:00:00:01"
PEER = "BB:00:00:00:00:02"
MITM = "CC:00:00:00:00:03"
WRONG_KEY = "deadbeefdeadbeefdeadbeefdeadbeef"


def mismatch_config(
    profile: str = "reference",
    *,
    transport: str = "bt",
    key_type: str = "authenticated",
    bonded: bool = True,
    seed: int = 7,
    option_policy: str | None = None,
    consent: bool | None = None,
    reconnect: bool = False,
    scenario_id: str | None = None,
) -> ScenarioConfig:
    """Injected key mismatch on the DUT's first connect, optional reconnect."""
    dut_device: dict = {"address": DUT, "role": "host", "profile": profile}
    if option_policy is not None:
        dut_device["option_policy"] = option_policy
    target = "link_key_request_reply" if transport == "bt" else "le_enable_encryption"
    script: list[dict] = []
    if consent is not None:
        script.append({"op": "user_consent", "device": DUT, "accept": consent})
    inject_at = len(script) + 1
    script.append(
        {
            "op": "inject_fault",
            "device": DUT,
            "target": target,
            "match_peer": PEER,
            "replacement_key": WRONG_KEY,
            "window": [inject_at, inject_at + 1],
        }
    )
    script.append({"op": "connect", "initiator": DUT, "responder": PEER})
    if reconnect:
        script.append({"op": "reconnect", "initiator": DUT, "responder": PEER})
    return parse_config(
        {
            "id": scenario_id or f"test-mismatch/{profile}",
            "seed": seed,
            "devices": [
                dut_device,
                {"address": PEER, "role": "host", "profile": "reference"},
            ],
            "dut": DUT,
            "pairings": [
                {
                    "a": DUT,
                    "b": PEER,
                    "key_type": key_type,
                    "bonded": bonded,
                    "transport": transport,
                    "via_mitm": False,
                }
            ],
            "script": script,
        }
    )


def relay_config(*, present: bool, seed: int = 11) -> ScenarioConfig:
    """Victims paired through the attacker; one connect attempt."""
    return parse_config(
        {
            "id": "test-relay",
            "seed": seed,
            "devices": [
                {"address": DUT, "role": "host", "profile": "reference"},
                {"address": PEER, "role": "host", "profile": "reference"},
                {"address": MITM, "role": "mitm"},
            ],
            "dut": DUT,
            "pairings": [
                {
                    "a": DUT,
                    "b": PEER,
                    "key_type": "unauthenticated",
                    "bonded": True,
                    "transport": "bt",
                    "via_mitm": True,
                }
            ],
            "script": [
                {"op": "mitm_present", "present": present},
                {"op": "connect", "initiator": DUT, "responder": PEER},
            ],
        }
    )
