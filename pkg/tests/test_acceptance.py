"""Acceptance gate: one test per shipped guarantee.

Each test body runs inside the ``criterion`` recorder, so the terminal
summary ends with one PASS/FAIL line per guarantee. The expensive artifacts
(the golden run, the revision run, the 200 generated termination runs) are
built once per session and cached at module level, because the soundness
audit re-reads the very traces the other criteria produced.
"""

import inspect
import itertools
import json
import random
import time
from contextlib import contextmanager

import pytest

from claimlattice import assessment as asmt
from claimlattice.assessment import (
    ConfidenceBasis,
    DomainKind,
    GradedValue,
    Strength,
    StratifiedPolarity,
)
from claimlattice.cli import execute
from claimlattice.graph import extended_successors
from claimlattice.revision import STATUS_STABILIZED
from claimlattice.scenario import load_scenario
from claimlattice.state import EvidenceStatus, assessment_projection
from claimlattice.trace import render_table, replay_json_lines, to_json_lines
from claimlattice.worklist import (
    FifoPolicy,
    LifoPolicy,
    OrderPolicy,
    RankedWorklist,
    TerminationBudget,
    run,
)

from conftest import GOLDEN, GOLDEN_REVISION
from genutil import generate_scenario
from test_assessment import (
    assert_laws,
    oracle_height,
    oracle_summary,
    random_stratified,
)

W = Strength.WEAK
S = Strength.STRONG
B = Strength.BOT


def graded(sup, ref):
    return GradedValue(sup, ref)


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL summary line per guarantee, then re-raise."""

    @contextmanager
    def record(number: int, name: str):
        lines = getattr(request.config, "_criterion_lines", None)
        if lines is None:
            lines = []
            request.config._criterion_lines = lines
        try:
            yield
        except BaseException:
            lines.append(f"FAIL criterion {number} ({name})")
            raise
        lines.append(f"PASS criterion {number} ({name})")

    return record


# --- shared artifacts --------------------------------------------------------

_bank: dict[str, object] = {}


def golden_run():
    if "golden" not in _bank:
        scenario = load_scenario(GOLDEN)
        started = time.perf_counter()
        result = execute(scenario)
        _bank["golden"] = (scenario, result, time.perf_counter() - started)
    return _bank["golden"]


def revision_run():
    if "revision" not in _bank:
        scenario = load_scenario(GOLDEN_REVISION)
        _bank["revision"] = (scenario, execute(scenario), 0.0)
    return _bank["revision"]


def termination_runs():
    if "termination" not in _bank:
        runs = []
        started = time.perf_counter()
        for seed in range(200):
            gen = generate_scenario(seed, visit_sensitive=True)
            budget = TerminationBudget.for_run(
                gen.kind, gen.caps, sorted(gen.graph.all_nodes))
            result = run(
                gen.graph, gen.fresh_state(),
                goal="the goal",
                queries=gen.queries,
                backend=gen.fresh_backend(),
                caps=gen.caps,
                policy=FifoPolicy(),
                budget=budget,
                declared_order=gen.declared_order,
            )
            runs.append((gen, budget, result))
        _bank["termination"] = (runs, time.perf_counter() - started)
    return _bank["termination"]


def final_assessments(state):
    out = {}
    for node_state in state.nodes.values():
        for entry in node_state.entries.values():
            out[entry.claim.label] = entry.assessment
    return out


# --- criterion 1: golden trace ------------------------------------------------

# (step, node, action, assessments that moved, worklist after the step)
GOLDEN_STEPS = (
    (1, "n_1", "broad parser review",
     {"c_P": graded(W, B)}, ("n_2", "n_3", "n_4", "n_C", "n_5")),
    (2, "n_2", "broad verifier review",
     {"c_Vℓ": graded(S, B), "c_Vs": graded(B, W)}, ("n_3", "n_4", "n_C", "n_5")),
    (3, "n_3", "inspect processor src.",
     {"c_U": graded(B, S)}, ("n_4", "n_C", "n_5")),
    (4, "n_4", "inspect rejection branch",
     {"c_R": graded(S, B)}, ("n_C", "n_5")),
    (5, "n_C", "compose current evidence",
     {"c_C": graded(B, W)}, ("n_5", "n_1", "n_2")),
    (6, "n_5", "compose whole-goal",
     {"c_G": graded(B, W)}, ("n_1", "n_2")),
    (7, "n_1", "targeted parser search",
     {"c_P": graded(W, S)}, ("n_2", "n_C")),
    (8, "n_2", "re-check verifier scope",
     {"c_Vs": graded(B, S)}, ("n_C",)),
    (9, "n_C", "compose revised context",
     {"c_C": graded(B, S)}, ("n_5", "n_1", "n_2")),
    (10, "n_5", "compose revised goal",
     {"c_G": graded(B, S)}, ("n_1", "n_2")),
    (11, "n_1", "reprocess (no change)", {}, ("n_2",)),
    (12, "n_2", "reprocess (no change)", {}, ()),
)

GOLDEN_FINAL = {
    "c_P": graded(W, S),
    "c_Vℓ": graded(S, B),
    "c_Vs": graded(B, S),
    "c_U": graded(B, S),
    "c_R": graded(S, B),
    "c_C": graded(B, S),
    "c_G": graded(B, S),
}

EXPECTED_TABLE = """\
Step | Node | Action                   | c_P   | c_Vℓ  | c_Vs  | c_U   | c_R   | c_C   | c_G   | Join                                                     | W after step
-----+------+--------------------------+-------+-------+-------+-------+-------+-------+-------+----------------------------------------------------------+-------------------------------
0    | -    | init                     | ⊥²    | ⊥²    | ⊥²    | ⊥²    | ⊥²    | ⊥²    | ⊥²    | -                                                        | {n_1, n_2, n_3, n_4, n_C, n_5}
1    | n_1  | broad parser review      | ⟨w,⊥⟩ | ·     | ·     | ·     | ·     | ·     | ·     | ⊥² ⊔ ⟨w,⊥⟩                                               | {n_2, n_3, n_4, n_C, n_5}
2    | n_2  | broad verifier review    | ·     | ⟨s,⊥⟩ | ⟨⊥,w⟩ | ·     | ·     | ·     | ·     | c_Vℓ: ⊥² ⊔ ⟨s,⊥⟩; c_Vs: ⊥² ⊔ ⟨⊥,w⟩                       | {n_3, n_4, n_C, n_5}
3    | n_3  | inspect processor src.   | ·     | ·     | ·     | ⟨⊥,s⟩ | ·     | ·     | ·     | ⊥² ⊔ ⟨⊥,s⟩                                               | {n_4, n_C, n_5}
4    | n_4  | inspect rejection branch | ·     | ·     | ·     | ·     | ⟨s,⊥⟩ | ·     | ·     | ⊥² ⊔ ⟨s,⊥⟩                                               | {n_C, n_5}
5    | n_C  | compose current evidence | ·     | ·     | ·     | ·     | ·     | ⟨⊥,w⟩ | ·     | ⊥² ⊔ ⟨⊥,w⟩                                               | {n_5, n_1, n_2}
6    | n_5  | compose whole-goal       | ·     | ·     | ·     | ·     | ·     | ·     | ⟨⊥,w⟩ | ⊥² ⊔ ⟨⊥,w⟩                                               | {n_1, n_2}
7    | n_1  | targeted parser search   | ⟨w,s⟩ | ·     | ·     | ·     | ·     | ·     | ·     | ⟨w,⊥⟩ ⊔ ⟨⊥,s⟩                                            | {n_2, n_C}
8    | n_2  | re-check verifier scope  | ·     | ·     | ⟨⊥,s⟩ | ·     | ·     | ·     | ·     | ⟨⊥,w⟩ ⊔ ⟨⊥,s⟩                                            | {n_C}
9    | n_C  | compose revised context  | ·     | ·     | ·     | ·     | ·     | ⟨⊥,s⟩ | ·     | ⟨⊥,w⟩ ⊔ ⟨⊥,s⟩                                            | {n_5, n_1, n_2}
10   | n_5  | compose revised goal     | ·     | ·     | ·     | ·     | ·     | ·     | ⟨⊥,s⟩ | ⟨⊥,w⟩ ⊔ ⟨⊥,s⟩                                            | {n_1, n_2}
11   | n_1  | reprocess (no change)    | ·     | ·     | ·     | ·     | ·     | ·     | ·     | ⟨w,s⟩ ⊔ ⟨⊥,s⟩ = ⟨w,s⟩                                    | {n_2}
12   | n_2  | reprocess (no change)    | ·     | ·     | ·     | ·     | ·     | ·     | ·     | c_Vℓ: ⟨s,⊥⟩ ⊔ ⟨s,⊥⟩ = ⟨s,⊥⟩; c_Vs: ⟨⊥,s⟩ ⊔ ⟨⊥,s⟩ = ⟨⊥,s⟩ | ∅
"""


def test_criterion_1_golden_trace(criterion):
    """The shipped review scenario replays all twelve steps exactly."""
    with criterion(1, "golden trace"):
        scenario, result, elapsed = golden_run()
        assert elapsed < 1.0
        assert result.status == STATUS_STABILIZED
        assert len(result.traces) == 1
        trace = result.traces[0]

        snapshot = trace.steps[0]
        assert snapshot.index == 0 and snapshot.node is None
        assert snapshot.action == "init"
        assert snapshot.worklist_after == (
            "n_1", "n_2", "n_3", "n_4", "n_C", "n_5")
        bottom = asmt.bottom(scenario.kind)
        assert all(cell == bottom for _, cell in snapshot.assessments)

        assert len(trace.steps) == 13
        for expected, step in zip(GOLDEN_STEPS, trace.steps[1:], strict=True):
            number, node, action, moved_expected, worklist_after = expected
            assert step.index == number
            assert step.node == node
            assert step.action == action
            assert step.worklist_after == worklist_after
            moved = {j.label: j.new for j in step.joins if not j.absorbed}
            assert moved == moved_expected
            assert step.ac_changed == bool(moved_expected)
        # Steps 11 and 12 must absorb: joins recorded, none of them moving.
        for step in trace.steps[11:]:
            assert step.joins and all(j.absorbed for j in step.joins)

        assert final_assessments(result.state) == GOLDEN_FINAL
        assert trace.steps[-1].worklist_after == ()
        assert render_table(trace) == EXPECTED_TABLE


# --- criterion 2: lattice laws -------------------------------------------------

def test_criterion_2_lattice_laws(criterion):
    """Join laws hold exhaustively on the small domains, randomly on the big one."""
    with criterion(2, "lattice laws"):
        started = time.perf_counter()
        for kind in (DomainKind.FOUR, DomainKind.GRADED):
            elements = asmt.enumerate_domain(kind)
            for x, y, z in itertools.product(elements, repeat=3):
                assert_laws(x, y, z, kind)
        rng = random.Random(0xACC2)
        for _ in range(10_000):
            assert_laws(random_stratified(rng), random_stratified(rng),
                        random_stratified(rng), DomainKind.STRATIFIED)
        assert time.perf_counter() - started < 10.0


# --- criterion 3: stratified summary oracle ------------------------------------

def test_criterion_3_summary_oracle(criterion):
    with criterion(3, "stratified summary oracle"):
        rng = random.Random(0xACC3)
        for _ in range(10_000):
            records = [
                (Strength(rng.randint(0, 2)), ConfidenceBasis(rng.randint(0, 4)))
                for _ in range(rng.randint(0, 6))
            ]
            summary = asmt.summarize_polarity(records)
            assert summary == oracle_summary(records)
            assert all(summary.levels[i] >= summary.levels[i + 1]
                       for i in range(len(summary.levels) - 1))
        # A strong-but-unvetted record must not mask a weak checked one.
        spread = asmt.summarize_polarity([
            (Strength.STRONG, ConfidenceBasis.MODEL),
            (Strength.WEAK, ConfidenceBasis.CHECKED),
        ])
        assert spread == StratifiedPolarity((S, W, W, W, W))
        assert spread.levels[ConfidenceBasis.MODEL] == Strength.STRONG
        assert spread.levels[ConfidenceBasis.CHECKED] == Strength.WEAK


# --- criterion 4: termination bound --------------------------------------------

def test_criterion_4_termination_bound(criterion):
    """Every generated run drains its worklist within the event budget."""
    with criterion(4, "termination bound"):
        runs, elapsed = termination_runs()
        assert len(runs) == 200
        for gen, budget, result in runs:
            capacity = gen.caps.total(sorted(gen.graph.all_nodes))
            height = asmt.domain_height(gen.kind)
            assert budget.max_trigger_events == capacity + height * capacity
            assert result.trigger_events <= budget.max_trigger_events
            assert result.trace.steps[-1].worklist_after == ()
        assert elapsed < 60.0


# --- criterion 5: frame and trigger soundness -----------------------------------

def test_criterion_5_frame_and_trigger_soundness(criterion):
    """Nothing off-node moved, and every wake-up traces back to a change."""
    with criterion(5, "frame and trigger soundness"):
        # The frame and agreement assertions are on by default, so the runs
        # audited here already completed under them without a violation.
        assert inspect.signature(run).parameters["check_invariants"].default is True

        scenario, golden_result, _ = golden_run()
        audits = [(scenario.graph, trace) for trace in golden_result.traces]
        runs, _ = termination_runs()
        audits.extend((gen.graph, result.trace) for gen, _, result in runs)

        assert len(audits) == 201
        for graph, trace in audits:
            for step in trace.steps:
                if step.node is None:
                    assert all(cause == "seed" for _, cause in step.enqueued)
                    continue
                for target, cause in step.enqueued:
                    assert cause == "ac_change"
                    assert step.ac_changed
                    assert target in extended_successors(graph, step.node)


# --- criterion 6: order confluence ----------------------------------------------

class ShuffledPolicy(OrderPolicy):
    name = "shuffled"

    def __init__(self, seed: int):
        self.seed = seed

    def build(self, graph):
        nodes = sorted(graph.all_nodes)
        random.Random(self.seed).shuffle(nodes)
        return RankedWorklist({node: i for i, node in enumerate(nodes)})


def test_criterion_6_order_confluence(criterion):
    """Visit-insensitive scenarios stabilize to one answer under any order."""
    with criterion(6, "order confluence"):
        for seed in range(50):
            gen = generate_scenario(1000 + seed, visit_sensitive=False)
            budget = TerminationBudget.for_run(
                gen.kind, gen.caps, sorted(gen.graph.all_nodes))
            policies = [FifoPolicy(), LifoPolicy()]
            policies.extend(ShuffledPolicy(17 * seed + i) for i in range(10))
            reference = None
            for policy in policies:
                result = run(
                    gen.graph, gen.fresh_state(),
                    goal="the goal",
                    queries=gen.queries,
                    backend=gen.fresh_backend(),
                    caps=gen.caps,
                    policy=policy,
                    budget=budget,
                    declared_order=gen.declared_order,
                )
                projection = {node: assessment_projection(ns)
                              for node, ns in result.state.nodes.items()}
                if reference is None:
                    reference = projection
                else:
                    assert projection == reference


# --- criterion 7: epochal revision ----------------------------------------------

def test_criterion_7_epochal_revision(criterion):
    """Lowering between epochs resets the claim, flags its evidence, and
    leaves a journal that reconstructs what was overwritten."""
    with criterion(7, "epochal revision"):
        scenario, result, _ = revision_run()
        assert result.status == STATUS_STABILIZED
        assert len(result.traces) == 2
        first, second = result.traces

        snapshot = second.steps[0]
        assert snapshot.node is None and snapshot.action == "revision"
        assert dict(snapshot.assessments)["c_P"] == asmt.bottom(scenario.kind)

        assert any(record.status is EvidenceStatus.SUPERSEDED
                   for record in result.state.evidence.values())

        budget = TerminationBudget.for_run(
            scenario.kind, scenario.caps, sorted(scenario.graph.all_nodes))
        epoch2_events = sum(1 for step in second.steps if step.ac_changed)
        assert epoch2_events <= budget.max_trigger_events

        pre_revision = dict(first.steps[-1].assessments)["c_P"]
        lowered = [e for e in result.revision_log if e.action == "lower"]
        assert len(lowered) == 1
        assert lowered[0].claim_label == "c_P"
        assert lowered[0].old_assessment == pre_revision == graded(W, S)

        assert final_assessments(result.state)["c_P"] == graded(B, S)


# --- criterion 8: height oracle ---------------------------------------------------

def test_criterion_8_height_oracle(criterion):
    with criterion(8, "height oracle"):
        expected = {DomainKind.FOUR: 2, DomainKind.GRADED: 4,
                    DomainKind.STRATIFIED: 20}
        for kind, height in expected.items():
            elements = asmt.enumerate_domain(kind)
            assert asmt.domain_height(kind) == oracle_height(elements, asmt.leq)
            assert asmt.domain_height(kind) == height


# --- criterion 9: trace replay round-trip ----------------------------------------

def test_criterion_9_trace_replay(criterion):
    """Serialized traces fold back to the exact final assessments."""
    with criterion(9, "trace replay round-trip"):
        for fetch in (golden_run, revision_run):
            scenario, result, _ = fetch()
            text = "".join(to_json_lines(trace) for trace in result.traces)
            replayed = replay_json_lines(text, scenario.kind)
            expected = {
                label: asmt.to_json(value)
                for label, value in final_assessments(result.state).items()
            }
            assert json.dumps(replayed, sort_keys=True) == \
                json.dumps(expected, sort_keys=True)
