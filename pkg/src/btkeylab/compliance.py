"""Oracle grading executed scenarios against the authentication-failure rules.

Five checks:

  C1 bonded-warning      bonded key failures must surface a security warning
  C2 reason-coding       post-failure DISCONNECT must carry 0x05, never 0x13
  C3 bonded-key-retention bonded keys may only vanish via explicit user reset
  C4 termination         the failed connection must actually come down
  C5 tofu-weakening      re-pairing without user consent is spec-permitted
                         but trust-on-first-use-defeating, so it warns

C3 fires for bonded keys only; non-bonded keys are disposable. C5 yields a
WARNING rather than a VIOLATION because automatic re-pairing is a sanctioned
option for non-bonded keys, just a dangerous one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Callable, Sequence

from . import hci
from .core import ErrorCode, KeyDeletion, KeyType, Transport
from .host import UserSurfaceEvent, UserSurfaceKind

if TYPE_CHECKING:
    from .trace import TracedPacket


class NoFailureInScenarioError(Exception):
    """Grading requires at least one authentication/encryption failure."""


class CheckResult(Enum):
    PASS = "pass"
    VIOLATION = "violation"
    WARNING = "warning"


class SummarySymbol(Enum):
    """Per-scenario legend symbol derived from the user-surface events alone."""

    NO_INDICATION = "no_indication"
    INDICATOR_ONLY = "indicator_only"
    ERROR_TEXT = "error_text"
    PAIRING_REMOVED = "pairing_removed"
    SECURITY_WARNING = "security_warning"


CHECK_DESCRIPTIONS = {
    "C1": "bonded-warning: bonded key failure must produce a security-failure warning",
    "C2": "reason-coding: post-failure DISCONNECT must carry AUTHENTICATION_FAILURE",
    "C3": "bonded-key-retention: bonded key deleted without user reset",
    "C4": "termination: failed connection must be disconnected",
    "C5": "tofu-weakening: re-pairing executed without user consent",
}


@dataclass(frozen=True)
class Evidence:
    """Reference into the scenario artifacts backing a check result."""

    kind: str  # "packet" | "user_event" | "key_deletion"
    index: int


@dataclass(frozen=True)
class Check:
    check_id: str
    result: CheckResult
    evidence: tuple[Evidence, ...] = ()
    detail: str = ""


@dataclass
class ComplianceVerdict:
    scenario_id: str
    checks: list[Check]
    summary_symbol: SummarySymbol
    profile: str | None = None

    @property
    def violations(self) -> list[Check]:
        return [c for c in self.checks if c.result == CheckResult.VIOLATION]

    @property
    def warnings(self) -> list[Check]:
        return [c for c in self.checks if c.result == CheckResult.WARNING]

    def check(self, check_id: str) -> Check:
        for c in self.checks:
            if c.check_id == check_id:
                return c
        raise KeyError(check_id)


def summarize_user_surface(events: Sequence[UserSurfaceEvent]) -> SummarySymbol:
    """Most severe observable first: deletion > warning > text > indicator."""
    kinds = {e.kind for e in events}
    if UserSurfaceKind.SILENT_KEY_DELETION in kinds:
        return SummarySymbol.PAIRING_REMOVED
    if UserSurfaceKind.SECURITY_FAILURE_WARNING in kinds:
        return SummarySymbol.SECURITY_WARNING
    if UserSurfaceKind.GENERIC_ERROR_TEXT in kinds:
        return SummarySymbol.ERROR_TEXT
    if UserSurfaceKind.TRANSIENT_INDICATOR in kinds:
        return SummarySymbol.INDICATOR_ONLY
    return SummarySymbol.NO_INDICATION


def _is_failure_packet(packet: hci.HciPacket, legitimate_reset: bool) -> bool:
    if isinstance(packet, hci.AuthenticationComplete) and packet.status != ErrorCode.SUCCESS:
        pass
    elif isinstance(packet, hci.EncryptionChange) and not packet.enabled:
        pass
    else:
        return False
    # a missing key after an explicit, scripted user reset is legitimate
    if legitimate_reset and packet.status == ErrorCode.PIN_OR_KEY_MISSING:
        return False
    return True


def grade(
    key_type: KeyType,
    bonded: bool,
    events: Sequence[UserSurfaceEvent],
    trace: Sequence["TracedPacket"],
    keystore_delta: Sequence[KeyDeletion],
    *,
    scenario_id: str = "",
    profile: str | None = None,
    legitimate_reset: bool = False,
) -> ComplianceVerdict:
    """Grade one executed scenario's observables for the device under test.

    `trace` is the scenario's packet sequence, `events` the DUT's
    user-surface events, `keystore_delta` the DUT's key deletions. Evidence
    indices point into those three sequences respectively.
    """
    failures = [
        i for i, tp in enumerate(trace) if _is_failure_packet(tp.packet, legitimate_reset)
    ]
    if not failures:
        raise NoFailureInScenarioError(
            "scenario contained no gradeable authentication/encryption failure"
        )
    first_failure = failures[0]
    failure_handle = trace[first_failure].packet.handle
    checks: list[Check] = []

    # C1: bonded failures demand a security warning
    if bonded:
        warning_idx = [
            i for i, e in enumerate(events) if e.kind == UserSurfaceKind.SECURITY_FAILURE_WARNING
        ]
        if warning_idx:
            checks.append(
                Check("C1", CheckResult.PASS, tuple(Evidence("user_event", i) for i in warning_idx))
            )
        else:
            checks.append(
                Check(
                    "C1",
                    CheckResult.VIOLATION,
                    (Evidence("packet", first_failure),),
                    "bonded key failure produced no security-failure warning",
                )
            )
    else:
        checks.append(Check("C1", CheckResult.PASS, (), "not required for non-bonded keys"))

    # C2: every post-failure DISCONNECT must carry AUTHENTICATION_FAILURE
    miscoded = [
        i
        for i, tp in enumerate(trace)
        if i > first_failure
        and isinstance(tp.packet, hci.Disconnect)
        and tp.packet.reason != ErrorCode.AUTHENTICATION_FAILURE
    ]
    if miscoded:
        checks.append(
            Check(
                "C2",
                CheckResult.VIOLATION,
                tuple(Evidence("packet", i) for i in miscoded),
                "DISCONNECT after failure carried "
                + ", ".join(trace[i].packet.reason.name for i in miscoded),
            )
        )
    else:
        correct = [
            i
            for i, tp in enumerate(trace)
            if i > first_failure and isinstance(tp.packet, hci.Disconnect)
        ]
        checks.append(Check("C2", CheckResult.PASS, tuple(Evidence("packet", i) for i in correct)))

    # C3: bonded keys may only be deleted by an explicit user reset
    if bonded:
        illegitimate = [
            i
            for i, d in enumerate(keystore_delta)
            if d.existed and d.bonded and not d.user_initiated
        ]
        if illegitimate:
            checks.append(
                Check(
                    "C3",
                    CheckResult.VIOLATION,
                    tuple(Evidence("key_deletion", i) for i in illegitimate),
                    "bonded key deleted without a scripted user reset",
                )
            )
        else:
            checks.append(Check("C3", CheckResult.PASS))
    else:
        checks.append(Check("C3", CheckResult.PASS, (), "non-bonded keys are disposable"))

    # C4: the failed connection must come down
    disconnects = [
        i
        for i, tp in enumerate(trace)
        if i > first_failure
        and isinstance(tp.packet, hci.DisconnectionComplete)
        and tp.packet.handle == failure_handle
    ]
    if disconnects:
        checks.append(Check("C4", CheckResult.PASS, (Evidence("packet", disconnects[0]),)))
    else:
        checks.append(
            Check(
                "C4",
                CheckResult.VIOLATION,
                (Evidence("packet", first_failure),),
                "connection left established after failure",
            )
        )

    # C5: re-pairing after a failure without user consent weakens TOFU
    repair_notifications = [
        i
        for i, tp in enumerate(trace)
        if i > first_failure and isinstance(tp.packet, hci.LinkKeyNotification)
    ]
    consent_prompts = [
        i for i, e in enumerate(events) if e.kind == UserSurfaceKind.REPAIR_CONSENT_PROMPT
    ]
    if repair_notifications and not consent_prompts:
        checks.append(
            Check(
                "C5",
                CheckResult.WARNING,
                tuple(Evidence("packet", i) for i in repair_notifications),
                "re-pairing executed without user consent (spec-permitted for "
                "non-bonded keys, but defeats trust on first use)",
            )
        )
    else:
        checks.append(Check("C5", CheckResult.PASS))

    return ComplianceVerdict(
        scenario_id=scenario_id,
        profile=profile,
        checks=checks,
        summary_symbol=summarize_user_surface(events),
    )


# ---------------------------------------------------------------------------
# Verdict matrix


class CellStatus(Enum):
    GRADED = "graded"
    UNSUPPORTED = "unsupported"  # connection type not supported by the stack
    ERROR = "error"


@dataclass(frozen=True)
class MatrixCell:
    status: CellStatus
    symbol: SummarySymbol | None = None
    verdict: ComplianceVerdict | None = None
    detail: str = ""

    def label(self) -> str:
        if self.status == CellStatus.GRADED:
            return self.symbol.name
        if self.status == CellStatus.UNSUPPORTED:
            return "UNSUPPORTED"
        return "ERROR"


@dataclass
class VerdictMatrix:
    scenario_ids: list[str]
    profile_names: list[str]
    cells: dict[tuple[str, str], MatrixCell] = field(default_factory=dict)

    def cell(self, scenario_id: str, profile: str) -> MatrixCell:
        return self.cells[(scenario_id, profile)]

    def verdicts(self) -> list[ComplianceVerdict]:
        return [
            c.verdict
            for c in self.cells.values()
            if c.status == CellStatus.GRADED and c.verdict is not None
        ]

    def render_text(self) -> str:
        """Aligned text table: scenarios down, profiles across."""
        if not self.scenario_ids or not self.profile_names:
            return "(empty matrix)"
        header = ["scenario"] + self.profile_names
        rows = [header]
        for sid in self.scenario_ids:
            rows.append([sid] + [self.cell(sid, p).label() for p in self.profile_names])
        widths = [max(len(row[col]) for row in rows) for col in range(len(header))]
        lines = []
        for i, row in enumerate(rows):
            lines.append("  ".join(cell.ljust(widths[col]) for col, cell in enumerate(row)).rstrip())
            if i == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines)


def verdict_matrix(
    profiles: Sequence[str],
    scenarios: Sequence,
    runner: Callable | None = None,
) -> VerdictMatrix:
    """Cross-product execution: one summary symbol per (scenario, profile) cell.

    Transport mismatches become UNSUPPORTED cells; per-cell execution errors
    are captured as ERROR cells rather than aborting the whole matrix.
    """
    from .engine import matrix_cell_runner

    run_cell = runner if runner is not None else matrix_cell_runner
    matrix = VerdictMatrix(
        scenario_ids=[s.scenario_id for s in scenarios],
        profile_names=list(profiles),
    )
    for scenario in scenarios:
        for profile in profiles:
            matrix.cells[(scenario.scenario_id, profile)] = run_cell(scenario, profile)
    return matrix
