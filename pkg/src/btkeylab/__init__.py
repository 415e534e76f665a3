"""btkeylab: deterministic Bluetooth key-mismatch simulator and compliance lab.

Reproduces machine-in-the-middle key substitution at the HCI boundary and
grades host-stack reactions against the Bluetooth 5.2 authentication-failure
action table, with bit-exact btsnoop traces of every simulated packet.
"""

from .attack import FaultRule, InjectionTarget, MitmNode
from .compliance import (
    CheckResult,
    ComplianceVerdict,
    SummarySymbol,
    grade,
    verdict_matrix,
)
from .core import (
    DeviceAddress,
    ErrorCode,
    KeyStore,
    KeyType,
    LinkKeyRecord,
    SimClock,
    Transport,
)
from .engine import ScenarioResult, ScenarioRun, execute_scenario, run_scenario
from .host import (
    FailureAction,
    FailureDecision,
    OptionPolicy,
    UserSurfaceEvent,
    UserSurfaceKind,
    decide_failure_action,
)
from .linklayer import Connection, ConnectionState, auth_response
from .profiles import StackProfile, builtin_profiles, run_with_profile
from .scenario import ScenarioConfig, load_config, parse_config, serialize_config
from .trace import Direction, TracedPacket, read_trace, write_trace

__version__ = "0.1.0"

__all__ = [
    "CheckResult",
    "ComplianceVerdict",
    "Connection",
    "ConnectionState",
    "DeviceAddress",
    "Direction",
    "ErrorCode",
    "FailureAction",
    "FailureDecision",
    "FaultRule",
    "InjectionTarget",
    "KeyStore",
    "KeyType",
    "LinkKeyRecord",
    "MitmNode",
    "OptionPolicy",
    "ScenarioConfig",
    "ScenarioResult",
    "ScenarioRun",
    "SimClock",
    "StackProfile",
    "SummarySymbol",
    "TracedPacket",
    "Transport",
    "UserSurfaceEvent",
    "UserSurfaceKind",
    "auth_response",
    "builtin_profiles",
    "decide_failure_action",
    "execute_scenario",
    "grade",
    "load_config",
    "parse_config",
    "read_trace",
    "run_scenario",
    "run_with_profile",
    "serialize_config",
    "verdict_matrix",
    "write_trace",
]
