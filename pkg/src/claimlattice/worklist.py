"""The worklist engine: seed, process, propagate, stabilize.

The loop is the classic chaotic iteration shape. A node comes off the
worklist, its transformer runs, and its extended successors are enqueued
exactly when the node's assessment view changed; evidence-only growth never
wakes anyone. The worklist is an ordered set: membership is policy-free,
ordering is the policy's whole job.

Every run enforces its termination budget and two soundness checks: the
frame property (a step touches only its own node's claim table) and enqueue
justification (every non-seed enqueue names the change that caused it).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import count
from typing import Mapping, Sequence

from . import assessment as asmt
from .agent import AgentBackend
from .errors import BudgetExceeded, InvariantViolation, ScenarioError, UnknownNode
from .graph import EvaluationGraph, extended_predecessors, extended_successors
from .queries import QuerySpec
from .state import AnalysisState, assessment_projection
from .trace import ColumnRegistry, JoinRecord, RunTrace, TraceStep
from .transformer import ClaimPolicy, process_node

log = logging.getLogger(__name__)

__all__ = [
    "ClaimCaps",
    "TerminationBudget",
    "BaseWorklist",
    "OrderPolicy",
    "FifoPolicy",
    "LifoPolicy",
    "WtoPolicy",
    "GoalDirectedPolicy",
    "FeedbackPriorityPolicy",
    "ScriptedOrderPolicy",
    "parse_policy",
    "POLICY_NAMES",
    "weak_topological_order",
    "flatten_wto",
    "initial_worklist",
    "RunResult",
    "run",
]


@dataclass(frozen=True)
class ClaimCaps:
    """Per-node claim budgets; the sum is the K term of the step budget."""

    default: int = 16
    per_node: Mapping[str, int] = field(default_factory=dict)

    def cap_for(self, node: str) -> int:
        return self.per_node.get(node, self.default)

    def total(self, nodes: Sequence[str]) -> int:
        return sum(self.cap_for(n) for n in nodes)


@dataclass(frozen=True)
class TerminationBudget:
    """Hard limits a correct run can never hit.

    With at most ``claim_capacity`` claims ever in play and a domain of
    height ``height``, at most claim_capacity insertions plus
    height * claim_capacity strict raises can change any assessment view, so
    worklist-triggering events are bounded by their sum. The step cap backs
    that up against engine bugs with a generous multiple.
    """

    height: int
    claim_capacity: int
    max_trigger_events: int
    hard_step_cap: int

    @classmethod
    def for_run(
        cls,
        kind: asmt.DomainKind,
        caps: ClaimCaps,
        nodes: Sequence[str],
        hard_step_cap: int | None = None,
    ) -> "TerminationBudget":
        height = asmt.domain_height(kind)
        capacity = caps.total(nodes)
        max_events = capacity + height * capacity
        if hard_step_cap is None:
            hard_step_cap = max(10 * max_events, 16)
        return cls(height=height, claim_capacity=capacity,
                   max_trigger_events=max_events, hard_step_cap=hard_step_cap)


# --- worklist structures -----------------------------------------------------

class BaseWorklist:
    """Ordered set of pending nodes. Subclasses choose what pop returns;
    membership and deduplication are common."""

    def __init__(self):
        self._items: list[str] = []
        self._member: set[str] = set()
        self._via_feedback: set[str] = set()

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, node: str) -> bool:
        return node in self._member

    def push(self, node: str, *, feedback: bool = False) -> bool:
        """Add a node; returns True only when it was not already pending."""
        if feedback:
            self._via_feedback.add(node)
        if node in self._member:
            return False
        self._member.add(node)
        self._items.append(node)
        return True

    def _take(self, index: int) -> str:
        node = self._items.pop(index)
        self._member.discard(node)
        self._via_feedback.discard(node)
        return node

    def pop(self) -> str:
        raise NotImplementedError

    def members(self) -> tuple[str, ...]:
        """Policy-eye view of the pending set, used for trace rows."""
        return tuple(self._items)

    def finish(self) -> None:
        """Hook called when the loop drains; policies may object."""


class FifoWorklist(BaseWorklist):
    def pop(self) -> str:
        return self._take(0)


class LifoWorklist(BaseWorklist):
    def pop(self) -> str:
        return self._take(len(self._items) - 1)


class RankedWorklist(BaseWorklist):
    def __init__(self, rank: Mapping[str, int]):
        super().__init__()
        self._rank = dict(rank)

    def _key(self, node: str) -> tuple:
        return (self._rank.get(node, len(self._rank)), node)

    def pop(self) -> str:
        best = min(range(len(self._items)), key=lambda i: self._key(self._items[i]))
        return self._take(best)

    def members(self) -> tuple[str, ...]:
        return tuple(sorted(self._items, key=self._key))


class FeedbackFirstWorklist(BaseWorklist):
    """Feedback-edge arrivals outrank everything else; ties go by node id."""

    def _key(self, node: str) -> tuple:
        return (0 if node in self._via_feedback else 1, node)

    def pop(self) -> str:
        best = min(range(len(self._items)), key=lambda i: self._key(self._items[i]))
        return self._take(best)

    def members(self) -> tuple[str, ...]:
        return tuple(sorted(self._items, key=self._key))


class ScriptedWorklist(BaseWorklist):
    """Pops follow a pinned node sequence; any divergence from what the run
    actually needs is a scenario bug and says so."""

    def __init__(self, steps: Sequence[str]):
        super().__init__()
        self._steps = list(steps)
        self._cursor = 0

    def pop(self) -> str:
        if self._cursor >= len(self._steps):
            raise ScenarioError(
                "scripted order ran out of steps with work still pending: "
                + ", ".join(self._items))
        node = self._steps[self._cursor]
        self._cursor += 1
        if node not in self._member:
            raise ScenarioError(
                f"scripted order names {node!r} at position {self._cursor}, "
                "but it is not pending")
        return self._take(self._items.index(node))

    def finish(self) -> None:
        if self._cursor < len(self._steps):
            leftover = self._steps[self._cursor:]
            raise ScenarioError(
                "scripted order has unused steps after stabilization: "
                + ", ".join(leftover))


# --- ordering policies -------------------------------------------------------

class OrderPolicy:
    name = "base"
    goal_probes = False
    goal_node: str | None = None

    def build(self, graph: EvaluationGraph) -> BaseWorklist:
        raise NotImplementedError

    def seed_nodes(self, candidates: Sequence[str]) -> Sequence[str]:
        return candidates


class FifoPolicy(OrderPolicy):
    name = "fifo"

    def build(self, graph: EvaluationGraph) -> BaseWorklist:
        return FifoWorklist()


class LifoPolicy(OrderPolicy):
    name = "lifo"

    def build(self, graph: EvaluationGraph) -> BaseWorklist:
        return LifoWorklist()


class WtoPolicy(OrderPolicy):
    name = "wto"

    def build(self, graph: EvaluationGraph) -> BaseWorklist:
        order = flatten_wto(weak_topological_order(graph))
        return RankedWorklist({node: i for i, node in enumerate(order)})


class FeedbackPriorityPolicy(OrderPolicy):
    name = "feedback-priority"

    def build(self, graph: EvaluationGraph) -> BaseWorklist:
        return FeedbackFirstWorklist()


class GoalDirectedPolicy(OrderPolicy):
    """Start from the goal node only; pull in extended predecessors lazily
    whenever a processed node still sees nothing but bottoms upstream."""

    name = "goal-directed"
    goal_probes = True

    def __init__(self, goal_node: str):
        self.goal_node = goal_node

    def build(self, graph: EvaluationGraph) -> BaseWorklist:
        return FifoWorklist()

    def seed_nodes(self, candidates: Sequence[str]) -> Sequence[str]:
        return [self.goal_node]


class ScriptedOrderPolicy(OrderPolicy):
    name = "scripted-order"

    def __init__(self, steps: Sequence[str]):
        self.steps = tuple(steps)

    def build(self, graph: EvaluationGraph) -> BaseWorklist:
        return ScriptedWorklist(self.steps)


POLICY_NAMES = ("fifo", "lifo", "wto", "goal-directed", "feedback-priority",
                "scripted-order")


def parse_policy(
    name: str,
    *,
    steps: Sequence[str] | None = None,
    goal_node: str | None = None,
) -> OrderPolicy:
    if name == "fifo":
        return FifoPolicy()
    if name == "lifo":
        return LifoPolicy()
    if name == "wto":
        return WtoPolicy()
    if name == "feedback-priority":
        return FeedbackPriorityPolicy()
    if name == "goal-directed":
        if not goal_node:
            raise ValueError("goal-directed ordering needs a goal node")
        return GoalDirectedPolicy(goal_node)
    if name == "scripted-order":
        if not steps:
            raise ValueError("scripted-order needs an explicit step list")
        return ScriptedOrderPolicy(steps)
    raise ValueError(f"unknown worklist policy {name!r}")


# --- weak topological order --------------------------------------------------

def weak_topological_order(graph: EvaluationGraph):
    """Bourdoncle-style hierarchical ordering over the extended edges.

    Returns a nested tuple: plain node ids interleaved with component tuples
    whose first element is the component head. Deterministic because roots
    and successors are always visited in node-id order.
    """
    nodes = sorted(graph.all_nodes)
    succs: dict[str, list[str]] = {n: [] for n in nodes}
    for src, dst in sorted(graph.extended_edges):
        succs[src].append(dst)

    dfn: dict[str, float] = dict.fromkeys(nodes, 0)
    stack: list[str] = []
    counter = count(1)

    def visit(vertex: str, partition: list) -> float:
        stack.append(vertex)
        number = next(counter)
        dfn[vertex] = number
        head: float = number
        loop = False
        for succ in succs[vertex]:
            minimum = visit(succ, partition) if dfn[succ] == 0 else dfn[succ]
            if minimum <= head:
                head = minimum
                loop = True
        if head == dfn[vertex]:
            dfn[vertex] = float("inf")
            element = stack.pop()
            if loop:
                while element != vertex:
                    dfn[element] = 0
                    element = stack.pop()
                partition.insert(0, component(vertex))
            else:
                partition.insert(0, vertex)
        return head

    def component(vertex: str) -> tuple:
        members: list = []
        for succ in succs[vertex]:
            if dfn[succ] == 0:
                visit(succ, members)
        members.insert(0, vertex)
        return tuple(members)

    partition: list = []
    for vertex in nodes:
        if dfn[vertex] == 0:
            visit(vertex, partition)
    return tuple(partition)


def flatten_wto(ordering) -> list[str]:
    out: list[str] = []
    for element in ordering:
        if isinstance(element, tuple):
            out.extend(flatten_wto(element))
        else:
            out.append(element)
    return out


# --- the engine --------------------------------------------------------------

def initial_worklist(
    graph: EvaluationGraph,
    state: AnalysisState,
    queries: Mapping[str, QuerySpec],
    declared_order: Sequence[str] | None = None,
) -> list[str]:
    """Exactly the nodes with something to do at step zero: a claim already
    present, or a generative query that could mint one."""
    order = list(declared_order) if declared_order is not None else sorted(
        graph.all_nodes)
    seeds = []
    for node in order:
        if node not in graph.all_nodes:
            raise UnknownNode(f"declared order names unknown node {node!r}")
        spec = queries.get(node)
        if state.nodes[node].entries or (spec is not None and spec.gen):
            seeds.append(node)
    return seeds


@dataclass
class RunResult:
    state: AnalysisState
    trace: RunTrace
    steps: int
    trigger_events: int


def _column_snapshot(columns: ColumnRegistry,
                     state: AnalysisState) -> tuple[tuple[str, asmt.Assessment | None], ...]:
    cells = []
    for column in columns.columns:
        entry = state.nodes[column.node].entries.get(column.key)
        cells.append((column.label, entry.assessment if entry else None))
    return tuple(cells)


def _register_columns(columns: ColumnRegistry, state: AnalysisState,
                      order: Sequence[str]) -> None:
    for node in order:
        for key, entry in state.nodes[node].entries.items():
            columns.add(entry.claim.label, node, key)


def run(
    graph: EvaluationGraph,
    state: AnalysisState,
    *,
    goal: str,
    queries: Mapping[str, QuerySpec],
    backend: AgentBackend,
    caps: ClaimCaps,
    policy: OrderPolicy,
    budget: TerminationBudget,
    declared_order: Sequence[str] | None = None,
    excerpt_cap: int = 8,
    agent_retries: int = 1,
    epoch: int = 1,
    seeds: Sequence[str] | None = None,
    columns: ColumnRegistry | None = None,
    init_action: str = "init",
    extra_trigger_allowance: int = 0,
    mid_run=None,
    check_invariants: bool = True,
) -> RunResult:
    """Drive the worklist to empty and return the stabilized state.

    ``seeds`` overrides the computed initial worklist (used when an epoch
    resumes after revision); ``columns`` carries the claim-column order
    across epochs. ``extra_trigger_allowance`` widens the trigger budget for
    re-raises a mid-run revision legitimately re-enables. ``mid_run`` is an
    optional hook with an ``after_step(state, step_index, epoch)`` method; it
    may return (new_state, nodes_to_enqueue, trigger_allowance_delta) to
    apply an in-flight revision between steps.
    """
    order = list(declared_order) if declared_order is not None else sorted(
        graph.all_nodes)
    if columns is None:
        columns = ColumnRegistry()
    _register_columns(columns, state, order)

    worklist = policy.build(graph)
    if seeds is None:
        seed_list = list(policy.seed_nodes(initial_worklist(
            graph, state, queries, order)))
    else:
        seed_list = [n for n in order if n in set(seeds)]
    for node in seed_list:
        worklist.push(node)

    trace = RunTrace(epoch=epoch)
    trace.steps.append(TraceStep(
        index=0,
        epoch=epoch,
        node=None,
        action=init_action,
        assessments=_column_snapshot(columns, state),
        joins=(),
        worklist_after=worklist.members(),
        ac_changed=False,
        enqueued=tuple((n, "seed") for n in seed_list),
    ))

    steps_done = 0
    trigger_events = 0
    trigger_budget = budget.max_trigger_events + extra_trigger_allowance

    while len(worklist):
        if steps_done >= budget.hard_step_cap:
            raise BudgetExceeded(
                f"hard step cap {budget.hard_step_cap} reached with work pending")
        node = worklist.pop()
        before = state
        before_view = assessment_projection(state.nodes[node])
        state, report = process_node(
            graph, state, node,
            goal=goal,
            queries=queries,
            backend=backend,
            policy=ClaimPolicy(cap=caps.cap_for(node)),
            epoch=epoch,
            step=steps_done + 1,
            excerpt_cap=excerpt_cap,
            agent_retries=agent_retries,
        )
        steps_done += 1

        if check_invariants:
            for other in before.nodes:
                if other == node:
                    continue
                if state.nodes[other] is not before.nodes[other] \
                        and state.nodes[other] != before.nodes[other]:
                    raise InvariantViolation(
                        f"step {steps_done} at {node!r} modified node {other!r}")

        after_view = assessment_projection(state.nodes[node])
        ac_changed = after_view != before_view
        if check_invariants and ac_changed != report.ac_changed:
            raise InvariantViolation(
                f"step {steps_done} at {node!r}: transformer and engine disagree "
                "on whether the assessment view changed")

        enqueued: list[tuple[str, str]] = []
        if ac_changed:
            trigger_events += 1
            if trigger_events > trigger_budget:
                raise BudgetExceeded(
                    f"assessment-change events exceeded the budget of "
                    f"{trigger_budget}")
            # Forward flow enqueues before feedback re-examination; the split
            # fixes the FIFO ordering (and the rendered worklist column).
            for succ in sorted(dst for src, dst in graph.context_edges
                               if src == node):
                if worklist.push(succ):
                    enqueued.append((succ, "ac_change"))
            for succ in sorted(dst for src, dst in graph.feedback_edges
                               if src == node):
                if worklist.push(succ, feedback=True):
                    enqueued.append((succ, "ac_change"))

        if policy.goal_probes:
            # Lazy upstream expansion: pull in predecessors that have never
            # produced anything, so the goal's support gets built on demand.
            for pred in sorted(extended_predecessors(graph, node)):
                table = state.nodes[pred].entries
                spec = queries.get(pred)
                has_work = bool(table) or (spec is not None and bool(spec.gen))
                all_bottom = all(
                    entry.assessment == asmt.bottom(state.kind)
                    for entry in table.values())
                if has_work and all_bottom and pred not in worklist:
                    if worklist.push(pred):
                        enqueued.append((pred, "goal_probe"))

        for update in report.updates:
            if update.inserted:
                columns.add(update.label, node, update.key)

        trace.steps.append(TraceStep(
            index=steps_done,
            epoch=epoch,
            node=node,
            action=report.action,
            assessments=_column_snapshot(columns, state),
            joins=tuple(JoinRecord(
                node=u.node, key=u.key, label=u.label,
                old=u.old, contributed=u.contributed, new=u.new,
            ) for u in report.updates),
            worklist_after=worklist.members(),
            ac_changed=ac_changed,
            evidence_only=report.evidence_only_change,
            diagnostics=report.diagnostics,
            enqueued=tuple(enqueued),
        ))

        if mid_run is not None:
            outcome = mid_run.after_step(state, steps_done, epoch)
            if outcome is not None:
                state, wake, allowance = outcome
                trigger_budget += allowance
                _register_columns(columns, state, order)
                revision_enqueued = []
                for woken in wake:
                    if worklist.push(woken):
                        revision_enqueued.append((woken, "revision"))
                trace.steps.append(TraceStep(
                    index=steps_done,
                    epoch=epoch,
                    node=None,
                    action="revision",
                    assessments=_column_snapshot(columns, state),
                    joins=(),
                    worklist_after=worklist.members(),
                    ac_changed=False,
                    enqueued=tuple(revision_enqueued),
                ))

    worklist.finish()
    trace.columns = columns.columns
    log.info("stabilized after %d step(s), %d trigger event(s)",
             steps_done, trigger_events)
    return RunResult(state=state, trace=trace, steps=steps_done,
                     trigger_events=trigger_events)
