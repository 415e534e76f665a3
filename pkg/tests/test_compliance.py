import pytest

from btkeylab.compliance import (
    CellStatus,
    CheckResult,
    NoFailureInScenarioError,
    SummarySymbol,
    grade,
    summarize_user_surface,
    verdict_matrix,
)
from btkeylab.core import DeviceAddress, KeyType
from btkeylab.engine import grade_result, run_scenario
from btkeylab.host import UserSurfaceEvent, UserSurfaceKind
from btkeylab.profiles import builtin_profiles
from btkeylab.scenario import load_config, parse_config

from helpers import DUT, PEER, SCENARIOS, mismatch_config, relay_config

A = DeviceAddress.parse(DUT)


def run_and_grade(config):
    run = run_scenario(config)
    assert run.verdict is not None
    return run


class TestGrade:
    def test_reference_bonded_mismatch_all_pass(self):
        run = run_and_grade(mismatch_config("reference"))
        assert all(c.result == CheckResult.PASS for c in run.verdict.checks)
        assert run.verdict.summary_symbol == SummarySymbol.SECURITY_WARNING

    def test_google_android_violations(self):
        run = run_and_grade(mismatch_config("google-android"))
        cited = {c.check_id for c in run.verdict.violations}
        assert {"C1", "C3"} <= cited
        assert run.verdict.summary_symbol == SummarySymbol.PAIRING_REMOVED

    def test_samsung_android_violations(self):
        run = run_and_grade(mismatch_config("samsung-android"))
        cited = {c.check_id for c in run.verdict.violations}
        assert {"C1", "C2"} <= cited
        assert run.verdict.summary_symbol == SummarySymbol.ERROR_TEXT

    def test_non_bonded_auto_repair_warns_c5_only(self):
        run = run_and_grade(
            mismatch_config("reference", key_type="unauthenticated", bonded=False)
        )
        assert run.verdict.violations == []
        assert [c.check_id for c in run.verdict.warnings] == ["C5"]

    def test_consented_repair_does_not_warn(self):
        run = run_and_grade(
            mismatch_config(
                "reference",
                key_type="authenticated",
                bonded=False,
                option_policy="option_2",
                consent=True,
            )
        )
        assert run.verdict.check("C5").result == CheckResult.PASS
        assert run.verdict.violations == []

    def test_no_failure_raises(self):
        run = run_scenario(relay_config(present=True))
        with pytest.raises(NoFailureInScenarioError):
            grade(
                KeyType.UNAUTHENTICATED,
                True,
                events=run.result.dut_events(),
                trace=run.result.trace_packets,
                keystore_delta=run.result.dut_deletions(),
            )
        assert run.verdict is None

    def test_user_reset_downgrades_pin_or_key_missing(self):
        # peer resets its pairing, DUT reconnects: the missing-key failure is
        # legitimate and not gradeable
        config = parse_config(
            {
                "id": "test-reset",
                "seed": 5,
                "devices": [
                    {"address": DUT, "role": "host", "profile": "reference"},
                    {"address": PEER, "role": "host", "profile": "reference"},
                ],
                "dut": PEER,
                "pairings": [
                    {"a": DUT, "b": PEER, "key_type": "authenticated",
                     "bonded": True, "transport": "bt"}
                ],
                "script": [
                    {"op": "user_reset", "device": DUT, "peer": PEER},
                    {"op": "connect", "initiator": PEER, "responder": DUT},
                ],
            }
        )
        run = run_scenario(config)
        assert run.verdict is None

    def test_evidence_indices_resolve(self):
        run = run_and_grade(mismatch_config("google-android"))
        sizes = {
            "packet": len(run.result.trace_packets),
            "user_event": len(run.result.dut_events()),
            "key_deletion": len(run.result.dut_deletions()),
        }
        for check in run.verdict.checks:
            assert check.result == CheckResult.PASS or check.evidence
            for evidence in check.evidence:
                assert 0 <= evidence.index < sizes[evidence.kind]

    def test_reference_grid_soundness(self):
        # full decision-table grid: no violations from the reference host
        for key_type in ("combination", "unauthenticated", "authenticated"):
            for bonded in (True, False):
                for policy in ("option_1", "option_2"):
                    run = run_and_grade(
                        mismatch_config(
                            "reference", key_type=key_type, bonded=bonded, option_policy=policy
                        )
                    )
                    assert run.verdict.violations == [], (key_type, bonded, policy)


class TestSummary:
    def test_priority_order(self):
        def ev(kind):
            return UserSurfaceEvent(kind=kind, peer=A, timestamp_us=0)

        assert summarize_user_surface([]) == SummarySymbol.NO_INDICATION
        assert summarize_user_surface([ev(UserSurfaceKind.TRANSIENT_INDICATOR)]) == SummarySymbol.INDICATOR_ONLY
        assert (
            summarize_user_surface(
                [ev(UserSurfaceKind.TRANSIENT_INDICATOR), ev(UserSurfaceKind.GENERIC_ERROR_TEXT)]
            )
            == SummarySymbol.ERROR_TEXT
        )
        assert (
            summarize_user_surface(
                [ev(UserSurfaceKind.GENERIC_ERROR_TEXT), ev(UserSurfaceKind.SECURITY_FAILURE_WARNING)]
            )
            == SummarySymbol.SECURITY_WARNING
        )
        assert (
            summarize_user_surface(
                [ev(UserSurfaceKind.SECURITY_FAILURE_WARNING), ev(UserSurfaceKind.SILENT_KEY_DELETION)]
            )
            == SummarySymbol.PAIRING_REMOVED
        )


class TestVerdictMatrix:
    def test_empty_matrix(self):
        matrix = verdict_matrix([], [])
        assert matrix.cells == {}
        assert matrix.render_text() == "(empty matrix)"

    def test_single_cell(self):
        matrix = verdict_matrix(["reference"], [mismatch_config("reference", scenario_id="one")])
        cell = matrix.cell("one", "reference")
        assert cell.status == CellStatus.GRADED
        assert cell.symbol == SummarySymbol.SECURITY_WARNING

    def test_ble_scenario_unsupported_for_bt_only_profiles(self):
        config = load_config(SCENARIOS / "matrix" / "ble-mismatch.json")
        matrix = verdict_matrix(["ios", "macos", "gnome-bluez", "google-android"], [config])
        for profile in ("ios", "macos", "gnome-bluez"):
            assert matrix.cell("ble-mismatch", profile).status == CellStatus.UNSUPPORTED
        assert matrix.cell("ble-mismatch", "google-android").status == CellStatus.GRADED

    def test_invalid_key_effect_row(self):
        config = load_config(SCENARIOS / "matrix" / "bonded-mismatch.json")
        matrix = verdict_matrix(list(builtin_profiles()), [config])
        expected = {
            "macos": SummarySymbol.INDICATOR_ONLY,
            "gnome-bluez": SummarySymbol.INDICATOR_ONLY,
            "windows": SummarySymbol.ERROR_TEXT,
            "ios": SummarySymbol.ERROR_TEXT,
            "samsung-android": SummarySymbol.ERROR_TEXT,
            "google-android": SummarySymbol.PAIRING_REMOVED,
            "peripheral": SummarySymbol.NO_INDICATION,
            "reference": SummarySymbol.SECURITY_WARNING,
        }
        for profile, symbol in expected.items():
            assert matrix.cell("bonded-mismatch", profile).symbol == symbol

    def test_render_text_alignment(self):
        config = load_config(SCENARIOS / "matrix" / "bonded-mismatch.json")
        matrix = verdict_matrix(["reference", "macos"], [config])
        text = matrix.render_text()
        lines = text.splitlines()
        assert lines[0].startswith("scenario")
        assert "SECURITY_WARNING" in text and "INDICATOR_ONLY" in text


class TestGradeResult:
    def test_profile_recorded(self):
        run = run_scenario(mismatch_config("windows"))
        verdict = grade_result(run.result)
        assert verdict.profile == "windows"
        assert verdict.scenario_id == "test-mismatch/windows"
