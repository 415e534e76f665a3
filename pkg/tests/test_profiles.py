import pytest

from btkeylab import hci
from btkeylab.core import DeviceAddress, ErrorCode, Transport
from btkeylab.engine import run_scenario
from btkeylab.host import UserSurfaceKind
from btkeylab.linklayer import ConnectionState
from btkeylab.profiles import (
    FailureBehavior,
    StackProfile,
    UnknownProfileError,
    builtin_profiles,
    get_profile,
    run_with_profile,
)

from helpers import DUT, PEER, mismatch_config

DUT_ADDR = DeviceAddress.parse(DUT)
PEER_ADDR = DeviceAddress.parse(PEER)


class TestRegistry:
    def test_builtin_names(self):
        assert set(builtin_profiles()) == {
            "google-android",
            "samsung-android",
            "ios",
            "macos",
            "gnome-bluez",
            "windows",
            "peripheral",
            "reference",
        }

    def test_google_android_properties(self):
        profile = get_profile("google-android")
        assert profile.on_auth_failure == FailureBehavior.SILENT_DELETE_PAIRING
        assert profile.disconnect_reason_bug
        assert not profile.key_survives_failure

    def test_samsung_android_properties(self):
        profile = get_profile("samsung-android")
        assert profile.error_text == "Couldn't connect."
        assert profile.disconnect_reason_bug
        assert profile.key_survives_failure

    def test_error_texts(self):
        assert get_profile("ios").error_text == "Connection Unsuccessful"
        assert get_profile("windows").error_text == (
            "An unexpected error occurred. Please contact your system administrator."
        )

    def test_indicator_profiles(self):
        assert get_profile("macos").on_auth_failure == FailureBehavior.INDICATOR_ONLY
        assert get_profile("gnome-bluez").on_auth_failure == FailureBehavior.INDICATOR_ONLY

    def test_peripheral_no_indication(self):
        assert get_profile("peripheral").on_auth_failure == FailureBehavior.NO_INDICATION

    def test_reference_is_spec_compliant(self):
        assert get_profile("reference").spec_compliant

    def test_unknown_profile(self):
        with pytest.raises(UnknownProfileError):
            get_profile("nokia-3310")

    def test_invariant_silent_delete_key_cannot_survive(self):
        with pytest.raises(ValueError):
            StackProfile(
                name="x",
                on_auth_failure=FailureBehavior.SILENT_DELETE_PAIRING,
                key_survives_failure=True,
            )

    def test_invariant_generic_error_needs_text(self):
        with pytest.raises(ValueError):
            StackProfile(name="x", on_auth_failure=FailureBehavior.GENERIC_ERROR)


# expected user-surface kinds on a bonded BT key mismatch, per profile
FIDELITY = [
    ("google-android", [UserSurfaceKind.SILENT_KEY_DELETION], False),
    ("samsung-android", [UserSurfaceKind.GENERIC_ERROR_TEXT], True),
    ("ios", [UserSurfaceKind.GENERIC_ERROR_TEXT], True),
    ("macos", [UserSurfaceKind.TRANSIENT_INDICATOR], True),
    ("gnome-bluez", [UserSurfaceKind.TRANSIENT_INDICATOR], True),
    ("windows", [UserSurfaceKind.GENERIC_ERROR_TEXT], True),
    ("peripheral", [], True),
    ("reference", [UserSurfaceKind.SECURITY_FAILURE_WARNING], True),
]


class TestProfileFidelity:
    @pytest.mark.parametrize("profile,kinds,key_survives", FIDELITY)
    def test_mismatch_user_surface(self, profile, kinds, key_survives):
        run = run_scenario(mismatch_config(profile))
        result = run.result
        assert [e.kind for e in result.dut_events()] == kinds
        record = result.keystores[DUT_ADDR].get(PEER_ADDR, Transport.BT_CLASSIC)
        assert (record is not None) == key_survives

    def test_samsung_displays_exact_text(self):
        run = run_scenario(mismatch_config("samsung-android"))
        (event,) = run.result.dut_events()
        assert event.text == "Couldn't connect."

    def test_silent_deletion_cooccurs_with_audit(self):
        run = run_scenario(mismatch_config("google-android"))
        (event,) = run.result.dut_events()
        assert event.kind == UserSurfaceKind.SILENT_KEY_DELETION
        deletions = [d for d in run.result.dut_deletions() if d.existed]
        assert len(deletions) == 1 and deletions[0].peer == event.peer

    @pytest.mark.parametrize("profile", ["google-android", "samsung-android"])
    def test_reason_bug_puts_0x13_on_the_wire(self, profile):
        run = run_scenario(mismatch_config(profile))
        disconnects = [
            tp.packet for tp in run.result.trace_packets if isinstance(tp.packet, hci.Disconnect)
        ]
        assert disconnects and all(
            d.reason == ErrorCode.REMOTE_USER_TERMINATED for d in disconnects
        )
        # linklayer reason transparency: the responder sees the bug verbatim
        responder_views = [
            tp.packet.reason
            for tp in run.result.trace_packets
            if isinstance(tp.packet, hci.DisconnectionComplete) and tp.device == PEER_ADDR
        ]
        assert responder_views == [ErrorCode.REMOTE_USER_TERMINATED]

    @pytest.mark.parametrize("profile", ["ios", "macos", "gnome-bluez", "windows", "peripheral"])
    def test_no_reason_bug_profiles_send_0x05(self, profile):
        run = run_scenario(mismatch_config(profile))
        disconnects = [
            tp.packet for tp in run.result.trace_packets if isinstance(tp.packet, hci.Disconnect)
        ]
        assert disconnects and all(
            d.reason == ErrorCode.AUTHENTICATION_FAILURE for d in disconnects
        )


class TestKeyToggle:
    def test_ios_reconnect_succeeds_after_key_restored(self):
        run = run_scenario(mismatch_config("ios", reconnect=True))
        connections = run.result.connections
        assert connections[0].state == ConnectionState.DETACHED
        assert connections[-1].state == ConnectionState.ENCRYPTED

    def test_google_android_reconnect_requires_new_pairing(self):
        run = run_scenario(mismatch_config("google-android", reconnect=True))
        packets = [tp.packet for tp in run.result.trace_packets]
        assert any(isinstance(p, hci.LinkKeyRequestNegativeReply) for p in packets)
        assert any(isinstance(p, hci.LinkKeyNotification) for p in packets)
        assert run.result.connections[-1].state == ConnectionState.ENCRYPTED


class TestRunWithProfile:
    def test_substitutes_dut_policy(self):
        config = mismatch_config("reference")
        run = run_with_profile("macos", config)
        assert [e.kind for e in run.result.dut_events()] == [UserSurfaceKind.TRANSIENT_INDICATOR]
        assert run.verdict.profile == "macos"

    def test_accepts_profile_object(self):
        custom = StackProfile(
            name="custom-silent",
            on_auth_failure=FailureBehavior.NO_INDICATION,
        )
        run = run_with_profile(custom, mismatch_config("reference"))
        assert run.result.dut_events() == []

    def test_unknown_profile_name(self):
        with pytest.raises(UnknownProfileError):
            run_with_profile("nokia-3310", mismatch_config("reference"))
