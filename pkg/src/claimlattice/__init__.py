"""Worklist engine for claim-based, evidence-tracking program review.

The package models a review as claims attached to the nodes of an evaluation
graph. Agent backends supply assessments and evidence; the engine owns
propagation, ordering, budgets, and revision, and every run leaves a
replayable trace.
"""

from .assessment import (
    Assessment,
    ConfidenceBasis,
    DomainKind,
    FourValue,
    GradedValue,
    StratifiedPolarity,
    StratifiedValue,
    Strength,
    bottom,
    domain_height,
    enumerate_domain,
    join,
    leq,
    pretty,
    summarize_polarity,
)
from .agent import RemoteAgent, ScriptedAgent
from .errors import (
    AgentTransportError,
    BudgetExceeded,
    ClaimLatticeError,
    MalformedResponse,
    NoScriptEntry,
    ParseError,
    ScenarioError,
    ValidationError,
)
from .graph import EvaluationGraph, ProgramGraph, validate_graph
from .revision import (
    BoundedMove,
    BoundedRevision,
    EpochConfig,
    RevisionGuard,
    RevisionLimits,
    RevisionPlan,
    RevisionTarget,
    apply_revision,
    run_epochs,
)
from .scenario import Scenario, build_backend, build_initial_state, load_scenario
from .state import (
    AnalysisState,
    Claim,
    EvidenceRecord,
    EvidenceSeed,
    canonicalize_claim,
    initial_state,
)
from .trace import render_table, replay_json_lines, to_json_lines
from .transformer import process_node
from .worklist import (
    ClaimCaps,
    TerminationBudget,
    parse_policy,
    run,
    weak_topological_order,
)

__version__ = "0.1.0"

__all__ = [
    "Assessment", "ConfidenceBasis", "DomainKind", "FourValue", "GradedValue",
    "StratifiedPolarity", "StratifiedValue", "Strength", "bottom",
    "domain_height", "enumerate_domain", "join", "leq", "pretty",
    "summarize_polarity",
    "RemoteAgent", "ScriptedAgent",
    "AgentTransportError", "BudgetExceeded", "ClaimLatticeError",
    "MalformedResponse", "NoScriptEntry", "ParseError", "ScenarioError",
    "ValidationError",
    "EvaluationGraph", "ProgramGraph", "validate_graph",
    "BoundedMove", "BoundedRevision", "EpochConfig", "RevisionGuard",
    "RevisionLimits", "RevisionPlan", "RevisionTarget", "apply_revision",
    "run_epochs",
    "Scenario", "build_backend", "build_initial_state", "load_scenario",
    "AnalysisState", "Claim", "EvidenceRecord", "EvidenceSeed",
    "canonicalize_claim", "initial_state",
    "render_table", "replay_json_lines", "to_json_lines",
    "process_node",
    "ClaimCaps", "TerminationBudget", "parse_policy", "run",
    "weak_topological_order",
    "__version__",
]
