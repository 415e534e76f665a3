"""Pluggable emulations of how real host stacks react to key-mismatch failures.

Each profile captures three observables: what (if anything) the user is
shown, whether the stored pairing survives, and whether the stack miscodes
its DISCONNECT reason as "remote user terminated" instead of
"authentication failure". The error texts are the English strings the
stacks actually display.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .core import ErrorCode, Transport
from .host import Host, HostPolicy, OptionPolicy, Reaction, ReferencePolicy, UserSurfaceKind


class UnknownProfileError(Exception):
    """Requested profile name is not in the registry."""


class FailureBehavior(Enum):
    SILENT_DELETE_PAIRING = "silent_delete_pairing"
    GENERIC_ERROR = "generic_error"
    INDICATOR_ONLY = "indicator_only"
    NO_INDICATION = "no_indication"
    SPEC_COMPLIANT = "spec_compliant"  # routes to the reference host policy


@dataclass(frozen=True)
class StackProfile:
    name: str
    on_auth_failure: FailureBehavior
    error_text: str | None = None
    disconnect_reason_bug: bool = False
    key_survives_failure: bool = True
    supported_transports: frozenset[Transport] = frozenset(Transport)

    def __post_init__(self):
        if self.on_auth_failure == FailureBehavior.SILENT_DELETE_PAIRING and self.key_survives_failure:
            raise ValueError("silent deletion implies the key does not survive")
        if self.on_auth_failure == FailureBehavior.GENERIC_ERROR and not self.error_text:
            raise ValueError("generic-error behavior requires the displayed text")

    @property
    def spec_compliant(self) -> bool:
        return self.on_auth_failure == FailureBehavior.SPEC_COMPLIANT


_BT_ONLY = frozenset({Transport.BT_CLASSIC})

REFERENCE_PROFILE = "reference"

_BUILTINS = (
    StackProfile(
        name="google-android",
        on_auth_failure=FailureBehavior.SILENT_DELETE_PAIRING,
        disconnect_reason_bug=True,
        key_survives_failure=False,
    ),
    StackProfile(
        name="samsung-android",
        on_auth_failure=FailureBehavior.GENERIC_ERROR,
        error_text="Couldn't connect.",
        disconnect_reason_bug=True,
    ),
    StackProfile(
        name="ios",
        on_auth_failure=FailureBehavior.GENERIC_ERROR,
        error_text="Connection Unsuccessful",
        supported_transports=_BT_ONLY,
    ),
    StackProfile(
        name="macos",
        on_auth_failure=FailureBehavior.INDICATOR_ONLY,
        supported_transports=_BT_ONLY,
    ),
    StackProfile(
        name="gnome-bluez",
        on_auth_failure=FailureBehavior.INDICATOR_ONLY,
        supported_transports=_BT_ONLY,
    ),
    StackProfile(
        name="windows",
        on_auth_failure=FailureBehavior.GENERIC_ERROR,
        error_text="An unexpected error occurred. Please contact your system administrator.",
        supported_transports=_BT_ONLY,
    ),
    StackProfile(
        name="peripheral",
        on_auth_failure=FailureBehavior.NO_INDICATION,
    ),
    StackProfile(
        name=REFERENCE_PROFILE,
        on_auth_failure=FailureBehavior.SPEC_COMPLIANT,
    ),
)


def builtin_profiles() -> dict[str, StackProfile]:
    """Registry of the built-in stack profiles, keyed by unique name."""
    return {profile.name: profile for profile in _BUILTINS}


def get_profile(name: str, registry: dict[str, StackProfile] | None = None) -> StackProfile:
    registry = registry if registry is not None else builtin_profiles()
    try:
        return registry[name]
    except KeyError:
        raise UnknownProfileError(
            f"unknown profile {name!r}; available: {', '.join(sorted(registry))}"
        ) from None


class ProfilePolicy(HostPolicy):
    """Host failure policy that replays an observed stack behavior."""

    def __init__(self, profile: StackProfile) -> None:
        if profile.spec_compliant:
            raise ValueError("use ReferencePolicy for the spec-compliant profile")
        self.profile = profile

    def disconnect_reason(self) -> ErrorCode:
        if self.profile.disconnect_reason_bug:
            return ErrorCode.REMOTE_USER_TERMINATED
        return ErrorCode.AUTHENTICATION_FAILURE

    def on_failure(self, host: Host, conn, peer, record, reaction: Reaction) -> None:
        behavior = self.profile.on_auth_failure
        if behavior == FailureBehavior.SILENT_DELETE_PAIRING:
            host.keystore.delete(peer, conn.transport)
            reaction.user_events.append(host._surface(UserSurfaceKind.SILENT_KEY_DELETION, peer))
        elif behavior == FailureBehavior.GENERIC_ERROR:
            reaction.user_events.append(
                host._surface(UserSurfaceKind.GENERIC_ERROR_TEXT, peer, text=self.profile.error_text)
            )
        elif behavior == FailureBehavior.INDICATOR_ONLY:
            reaction.user_events.append(host._surface(UserSurfaceKind.TRANSIENT_INDICATOR, peer))
        # NO_INDICATION: nothing surfaces at all


def make_policy(
    profile: StackProfile,
    option_policy: OptionPolicy = OptionPolicy.RECOMMENDED,
) -> HostPolicy:
    if profile.spec_compliant:
        return ReferencePolicy(option_policy)
    return ProfilePolicy(profile)


def run_with_profile(profile, scenario_config, registry=None):
    """Execute a scenario with `profile` substituted for the DUT host policy.

    Accepts a profile name or a StackProfile; raises UnknownProfileError for
    unregistered names. Returns the ScenarioResult (imported lazily to keep
    profiles free of engine dependencies).
    """
    from .engine import run_scenario_with_profile

    if isinstance(profile, str):
        profile = get_profile(profile, registry)
    return run_scenario_with_profile(scenario_config, profile, registry=registry)
