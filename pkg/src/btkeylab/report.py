"""Machine-readable verdict reports (JSON Lines) and text rendering.

Every line is one JSON object with a "type" discriminator:

  {"type": "check", "scenario_id": ..., "profile": ..., "check_id": "C1",
   "result": "pass" | "violation" | "warning",
   "evidence": [{"kind": "packet" | "user_event" | "key_deletion", "index": N}, ...],
   "detail": "..."}

  {"type": "summary", "scenario_id": ..., "profile": ...,
   "summary_symbol": ..., "violations": N, "warnings": N}

  {"type": "cell", "scenario_id": ..., "profile": ...,
   "status": "graded" | "unsupported" | "error",
   "symbol": ... | null, "detail": "..."}   (matrix runs only)

Records are emitted in a fixed order, so a report for a given seed is
byte-identical across runs.
"""

from __future__ import annotations

import json
from typing import IO, Iterable

from .compliance import CellStatus, ComplianceVerdict, VerdictMatrix


def _check_records(verdict: ComplianceVerdict) -> Iterable[dict]:
    for check in verdict.checks:
        yield {
            "type": "check",
            "scenario_id": verdict.scenario_id,
            "profile": verdict.profile,
            "check_id": check.check_id,
            "result": check.result.value,
            "evidence": [{"kind": e.kind, "index": e.index} for e in check.evidence],
            "detail": check.detail,
        }
    yield {
        "type": "summary",
        "scenario_id": verdict.scenario_id,
        "profile": verdict.profile,
        "summary_symbol": verdict.summary_symbol.value,
        "violations": len(verdict.violations),
        "warnings": len(verdict.warnings),
    }


def verdict_records(verdict: ComplianceVerdict) -> list[dict]:
    return list(_check_records(verdict))


def matrix_records(matrix: VerdictMatrix) -> list[dict]:
    records: list[dict] = []
    for sid in matrix.scenario_ids:
        for profile in matrix.profile_names:
            cell = matrix.cell(sid, profile)
            records.append(
                {
                    "type": "cell",
                    "scenario_id": sid,
                    "profile": profile,
                    "status": cell.status.value,
                    "symbol": cell.symbol.value if cell.symbol is not None else None,
                    "detail": cell.detail,
                }
            )
            if cell.status == CellStatus.GRADED and cell.verdict is not None:
                records.extend(_check_records(cell.verdict))
    return records


def write_records(records: Iterable[dict], stream: IO[str]) -> None:
    for record in records:
        stream.write(json.dumps(record, sort_keys=True) + "\n")


def render_report(records: Iterable[dict]) -> str:
    import io

    buf = io.StringIO()
    write_records(records, buf)
    return buf.getvalue()


def render_verdict_text(verdict: ComplianceVerdict) -> str:
    """Human-readable per-scenario summary."""
    lines = [f"scenario {verdict.scenario_id} (profile: {verdict.profile or '-'})"]
    for check in verdict.checks:
        marker = {"pass": "ok", "violation": "VIOLATION", "warning": "warning"}[check.result.value]
        detail = f"  {check.detail}" if check.detail else ""
        lines.append(f"  {check.check_id} {marker}{detail}")
    lines.append(f"  summary: {verdict.summary_symbol.name}")
    return "\n".join(lines)
