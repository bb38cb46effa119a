"""Run traces: the step-by-step record a run leaves behind.

Two renderings share one structure: an analyst-facing text table (one row
per step, one column per claim, a join column, the worklist after the step)
and machine-readable JSON lines. The JSON form carries every join with its
operands, so a trace can be replayed from its first row and checked against
the final state bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import assessment as asmt
from .errors import ScenarioError

__all__ = [
    "ClaimColumn",
    "ColumnRegistry",
    "JoinRecord",
    "TraceStep",
    "RunTrace",
    "render_table",
    "to_json_lines",
    "replay_json_lines",
]


@dataclass(frozen=True)
class ClaimColumn:
    label: str
    node: str
    key: str


class ColumnRegistry:
    """Stable claim-column order: seeded claims first (declaration order),
    then generated claims as they appear. Shared across epochs so tables
    stay aligned."""

    def __init__(self):
        self._columns: list[ClaimColumn] = []
        self._seen: set[tuple[str, str]] = set()

    def add(self, label: str, node: str, key: str) -> None:
        slot = (node, key)
        if slot in self._seen:
            return
        self._seen.add(slot)
        self._columns.append(ClaimColumn(label=label, node=node, key=key))

    @property
    def columns(self) -> tuple[ClaimColumn, ...]:
        return tuple(self._columns)


@dataclass(frozen=True)
class JoinRecord:
    node: str
    key: str
    label: str
    old: asmt.Assessment
    contributed: asmt.Assessment
    new: asmt.Assessment

    @property
    def absorbed(self) -> bool:
        return self.new == self.old

    def expression(self) -> str:
        expr = f"{asmt.pretty(self.old)} ⊔ {asmt.pretty(self.contributed)}"
        if self.absorbed:
            expr += f" = {asmt.pretty(self.new)}"
        return expr


@dataclass(frozen=True)
class TraceStep:
    index: int
    epoch: int
    node: str | None
    action: str
    # (label, assessment) for every claim column, in column order; None value
    # marks a claim that does not exist (yet, or any more) at this step.
    assessments: tuple[tuple[str, asmt.Assessment | None], ...]
    joins: tuple[JoinRecord, ...]
    worklist_after: tuple[str, ...]
    ac_changed: bool
    evidence_only: bool = False
    diagnostics: tuple[str, ...] = ()
    enqueued: tuple[tuple[str, str], ...] = ()  # (node, cause) audit


@dataclass
class RunTrace:
    epoch: int
    columns: tuple[ClaimColumn, ...] = ()
    steps: list[TraceStep] = field(default_factory=list)


def _join_cell(step: TraceStep) -> str:
    """Join column: expressions of the claims that moved, or, when nothing
    moved, the absorbing expressions that prove it. Multiple expressions get
    their claim labels as prefixes."""
    if step.node is None:
        return "-"
    shown = [j for j in step.joins if not j.absorbed]
    if not shown:
        shown = list(step.joins)
    if not shown:
        return "-"
    if len(shown) == 1:
        return shown[0].expression()
    return "; ".join(f"{j.label}: {j.expression()}" for j in shown)


def _worklist_cell(members: tuple[str, ...]) -> str:
    if not members:
        return "∅"
    return "{" + ", ".join(members) + "}"


def render_table(trace: RunTrace) -> str:
    """Fixed-width text table, one row per step. Unchanged claim cells print
    a middle dot; claims that do not exist print a dash."""
    labels = [c.label for c in trace.columns]
    header = ["Step", "Node", "Action", *labels, "Join", "W after step"]
    rows: list[list[str]] = []
    previous: dict[str, asmt.Assessment | None] = {}
    for step in trace.steps:
        cells = [str(step.index), step.node or "-", step.action]
        current = dict(step.assessments)
        for label in labels:
            value = current.get(label)
            if value is None:
                cells.append("-")
            elif step.index != trace.steps[0].index and previous.get(label) == value:
                cells.append("·")
            else:
                cells.append(asmt.pretty(value))
        previous = current
        cells.append(_join_cell(step))
        cells.append(_worklist_cell(step.worklist_after))
        rows.append(cells)

    widths = [len(h) for h in header]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))

    def fmt(row: list[str]) -> str:
        return " | ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()

    lines = [fmt(header)]
    lines.append("-+-".join("-" * w for w in widths))
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines) + "\n"


def to_json_lines(trace: RunTrace) -> str:
    out = []
    for step in trace.steps:
        payload = {
            "step": step.index,
            "epoch": trace.epoch,
            "node": step.node,
            "action": step.action,
            "assessments": {
                label: (asmt.to_json(value) if value is not None else None)
                for label, value in step.assessments
            },
            "joins": [
                {
                    "node": j.node,
                    "claim": j.key,
                    "label": j.label,
                    "old": asmt.to_json(j.old),
                    "contributed": asmt.to_json(j.contributed),
                    "new": asmt.to_json(j.new),
                    "absorbed": j.absorbed,
                }
                for j in step.joins
            ],
            "worklist_after": list(step.worklist_after),
            "ac_changed": step.ac_changed,
            "evidence_only": step.evidence_only,
            "diagnostics": list(step.diagnostics),
        }
        out.append(json.dumps(payload, ensure_ascii=False, sort_keys=True))
    return "\n".join(out) + ("\n" if out else "")


def replay_json_lines(text: str, kind: asmt.DomainKind) -> dict[str, list]:
    """Re-derive the final assessments from a JSON trace.

    Within each epoch, starts from that epoch's first row and folds every
    recorded join, checking that old values chain correctly and that
    old ⊔ contributed really is the recorded new value. Returns the final
    label -> serialized-assessment map. Raises ScenarioError on any drift.
    """
    steps = [json.loads(line) for line in text.splitlines() if line.strip()]
    if not steps:
        return {}
    current: dict[str, list] = {}
    for step in steps:
        if step["node"] is None:
            # Snapshot rows (epoch start, revision) carry full state; the
            # replay re-baselines on them instead of folding joins.
            current = {label: value
                       for label, value in step["assessments"].items()
                       if value is not None}
            continue
        for join_rec in step["joins"]:
            label = join_rec["label"]
            old = asmt.from_json(kind, join_rec["old"])
            contributed = asmt.from_json(kind, join_rec["contributed"])
            new = asmt.from_json(kind, join_rec["new"])
            if asmt.join(old, contributed) != new:
                raise ScenarioError(
                    f"step {step['step']} records a join that does not hold "
                    f"for {label}")
            if label in current:
                chained = asmt.from_json(kind, current[label])
                if chained != old:
                    raise ScenarioError(
                        f"step {step['step']} join for {label} starts from "
                        f"{join_rec['old']} but the replayed value is "
                        f"{current[label]}")
            current[label] = join_rec["new"]
        # New claims can also appear at their creation step without a join
        # only as bottom; pick up any assessments the row shows that replay
        # has no record of.
        for label, value in step["assessments"].items():
            if value is not None and label not in current:
                current[label] = value
    return current
