import pytest

from claimlattice import assessment as asmt
from claimlattice.graph import EvaluationGraph, ProgramGraph
from claimlattice.queries import EvalQuery, QuerySpec
from claimlattice.state import Claim, ClaimOrigin, initial_state

GOLDEN = "scenarios/opaque_review.scenario"
GOLDEN_REVISION = "scenarios/opaque_review_revision.scenario"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criterion_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


def chain_graph(*nodes: str, feedback: tuple[tuple[str, str], ...] = ()) -> EvaluationGraph:
    """Linear context chain n0 -> n1 -> ... with optional feedback edges."""
    edges = frozenset(zip(nodes, nodes[1:]))
    return EvaluationGraph(
        program=ProgramGraph(
            nodes=frozenset(nodes),
            edges=frozenset(),
            sources={n: f"// source of {n}" for n in nodes},
        ),
        aux_nodes=frozenset(),
        context_edges=edges,
        feedback_edges=frozenset(feedback),
        neighborhood={n: frozenset({n}) for n in nodes},
    )


def seeded_claim(node: str, text: str, label: str | None = None) -> Claim:
    from claimlattice.state import canonicalize_claim
    key = canonicalize_claim(text)
    return Claim(key=key, text=text, origin=ClaimOrigin.SEEDED, node=node,
                 label=label or key)


def plain_queries(graph: EvaluationGraph) -> dict[str, QuerySpec]:
    return {n: QuerySpec(eval=EvalQuery(id=f"eval@{n}")) for n in graph.all_nodes}


@pytest.fixture
def two_node():
    """m -> n context chain, one claim at each node, graded domain."""
    graph = chain_graph("m", "n")
    claims = (seeded_claim("m", "claim at m holds", "cm"),
              seeded_claim("n", "claim at n holds", "cn"))
    state = initial_state(graph, asmt.DomainKind.GRADED, claims)
    return graph, claims, state
