"""Matplotlib rendering of verdicts and matrices, written next to reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.patches import Patch

from .compliance import (
    CellStatus,
    CheckResult,
    ComplianceVerdict,
    SummarySymbol,
    VerdictMatrix,
)

_SYMBOL_COLORS = {
    SummarySymbol.SECURITY_WARNING: "#2e7d32",
    SummarySymbol.INDICATOR_ONLY: "#90caf9",
    SummarySymbol.ERROR_TEXT: "#ffb74d",
    SummarySymbol.PAIRING_REMOVED: "#c62828",
    SummarySymbol.NO_INDICATION: "#9e9e9e",
}

_RESULT_COLORS = {
    CheckResult.PASS: "#2e7d32",
    CheckResult.WARNING: "#ffb74d",
    CheckResult.VIOLATION: "#c62828",
}

_SAVE_OPTS = {"dpi": 120, "metadata": {"Software": "btkeylab"}}


def render_verdict_figure(verdict: ComplianceVerdict, path) -> None:
    """One bar per check, colored by result, summary symbol in the title."""
    fig, ax = plt.subplots(figsize=(7, 2.4))
    ids = [c.check_id for c in verdict.checks]
    colors = [_RESULT_COLORS[c.result] for c in verdict.checks]
    ax.bar(ids, [1] * len(ids), color=colors, edgecolor="black", linewidth=0.5)
    ax.set_yticks([])
    ax.set_ylim(0, 1.4)
    for i, check in enumerate(verdict.checks):
        ax.text(i, 1.08, check.result.value, ha="center", fontsize=8)
    title = f"{verdict.scenario_id}"
    if verdict.profile:
        title += f"  [{verdict.profile}]"
    ax.set_title(f"{title}  ->  {verdict.summary_symbol.name}", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def render_matrix_figure(matrix: VerdictMatrix, path) -> None:
    """Grid of scenarios x profiles, cells colored by summary symbol."""
    n_rows = max(len(matrix.scenario_ids), 1)
    n_cols = max(len(matrix.profile_names), 1)
    fig, ax = plt.subplots(figsize=(1.6 + 1.25 * n_cols, 1.2 + 0.7 * n_rows))
    for r, sid in enumerate(matrix.scenario_ids):
        for c, profile in enumerate(matrix.profile_names):
            cell = matrix.cell(sid, profile)
            if cell.status == CellStatus.GRADED:
                color = _SYMBOL_COLORS[cell.symbol]
                label = cell.symbol.name.replace("_", "\n").lower()
            elif cell.status == CellStatus.UNSUPPORTED:
                color, label = "#eeeeee", "x"
            else:
                color, label = "#fce4ec", "error"
            ax.add_patch(plt.Rectangle((c, n_rows - 1 - r), 1, 1, color=color, ec="white"))
            ax.text(c + 0.5, n_rows - 1 - r + 0.5, label, ha="center", va="center", fontsize=7)
    ax.set_xlim(0, n_cols)
    ax.set_ylim(0, n_rows)
    ax.set_xticks([i + 0.5 for i in range(n_cols)])
    ax.set_xticklabels(matrix.profile_names, rotation=30, ha="right", fontsize=8)
    ax.set_yticks([n_rows - 1 - i + 0.5 for i in range(len(matrix.scenario_ids))])
    ax.set_yticklabels(matrix.scenario_ids, fontsize=8)
    ax.set_title("invalid-key handling by stack profile", fontsize=10)
    handles = [Patch(color=color, label=symbol.name.lower()) for symbol, color in _SYMBOL_COLORS.items()]
    handles.append(Patch(color="#eeeeee", label="unsupported"))
    ax.legend(handles=handles, loc="upper left", bbox_to_anchor=(1.01, 1.0), fontsize=7)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)
