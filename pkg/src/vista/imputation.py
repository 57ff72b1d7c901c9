"""Knowledge-driven gap reconstruction: context extraction, graph-scored
behavior and method selection with machine-checkable rationales, method
execution, and explanation composition.

Every selection records the exact prior used, as a fraction of integer
edge counts, so any outcome can be re-derived from the graph snapshot it
was computed against.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import (
    InvalidParameter,
    MalformedOracleOutput,
    NoCandidates,
)
from .functions import execute, linear_spec
from .kg import BehaviorNode, FunctionNode, SdKg, to_dot, top_k
from .knowledge import STATIC_KINDS, KnowledgeUnit
from .oracle import Oracle, format_rows
from .prompts import extract_id
from .records import AisRecord

DEFAULT_SHORTLIST = 5

#: Patterns the human-facing explanation must never leak.
_NODE_ID_PATTERNS = re.compile(
    r"(Movement_Pattern_\d+|Function_\d+|vessel_\w+|\bnode[ _]?\d+\b)", re.IGNORECASE
)


@dataclass
class GapContext:
    """Everything a worker needs to reconstruct one masked segment."""

    vessel_id: str
    segment_index: int
    timestamps: list[int]
    before: list[AisRecord] = field(default_factory=list)  # known, ascending
    after: list[AisRecord] = field(default_factory=list)  # known, ascending


@dataclass
class ImputationOutcome:
    vessel_id: str
    segment_index: int
    points: list[tuple[float, float, int]]  # (lat, lon, timestamp)
    behavior_id: int | None
    behavior_tokens: list[str]
    graph_support: list[tuple[int, int, int]]  # (src, dst, weight)
    contextual_justification: str
    function_id: int | None
    function_iel: dict | None
    statistical_support: str
    reasoning: str
    regulatory_rule_cue: str
    operational_protocol_rationale: str
    fallback_used: bool
    behavior_priors: dict[int, Fraction] = field(default_factory=dict)
    function_priors: dict[int, Fraction] = field(default_factory=dict)
    kg_revision: int = 0

    def to_json_dict(self) -> dict:
        return {
            "vessel_id": self.vessel_id,
            "segment_index": self.segment_index,
            "points": [[lat, lon, ts] for lat, lon, ts in self.points],
            "behavior": {
                "id": self.behavior_id,
                "tokens": list(self.behavior_tokens),
                "graph_support": [list(edge) for edge in self.graph_support],
                "contextual_justification": self.contextual_justification,
            },
            "function": {
                "id": self.function_id,
                "iel": self.function_iel,
                "statistical_support": self.statistical_support,
                "reasoning": self.reasoning,
            },
            "explanation": {
                "regulatory_rule_cue": self.regulatory_rule_cue,
                "operational_protocol_rationale": self.operational_protocol_rationale,
            },
            "fallback_used": self.fallback_used,
        }


def extract_context(
    units: list[KnowledgeUnit | None], gap_index: int
) -> tuple[KnowledgeUnit | None, KnowledgeUnit | None]:
    """Nearest present units strictly before and after the gap index."""
    before = next(
        (units[i] for i in range(gap_index - 1, -1, -1) if units[i] is not None), None
    )
    after = next(
        (units[i] for i in range(gap_index + 1, len(units)) if units[i] is not None),
        None,
    )
    return before, after


def _static_query_ids(
    kg: SdKg,
    context: tuple[KnowledgeUnit | None, KnowledgeUnit | None],
    include_vessel_id: bool,
) -> list[int]:
    """Union of the context units' static members resolved to graph nodes.

    Vessel identity is excluded by default: its edges only describe one hull
    and would dominate the multiplicative prior.
    """
    members: dict[tuple[str, str], None] = {}
    for unit in context:
        if unit is None:
            continue
        for kind, value in unit.static.members():
            if kind == "vessel_id" and not include_vessel_id:
                continue
            members[(kind, value)] = None
    ids = []
    for kind, value in members:
        node_id = kg.static_node_id(kind, value)
        if node_id is not None:
            ids.append(node_id)
    return ids


def _boundary_text(context) -> str:
    before, after = context
    lines = []
    lines.append(
        "before: " + (before.behavior.describe() if before else "absent")
    )
    lines.append("after: " + (after.behavior.describe() if after else "absent"))
    return "\n".join(lines)


def _context_vessel_lines(context) -> str:
    members: dict[str, str] = {}
    for unit in context:
        if unit is None:
            continue
        for kind, value in unit.static.members():
            members.setdefault(kind, value)
    return "\n".join(f"{kind}={members[kind]}" for kind in STATIC_KINDS if kind in members)


def _movement_text(kg: SdKg, shortlist: list[tuple[int, Fraction]]) -> str:
    lines = []
    for node_id, prior in shortlist:
        node = kg.node(node_id)
        lines.append(
            f"Movement_Pattern_{node_id}: {node.tokens.describe()}"
            f" | prior={float(prior):.6f} (= {prior.numerator}/{prior.denominator})"
        )
    return "\n".join(lines)


def _functions_text(kg: SdKg, behavior_id: int, shortlist) -> str:
    lines = []
    for node_id, prior in shortlist:
        node = kg.node(node_id)
        weight = kg.bf_weight(behavior_id, node_id)
        description = node.description or "no description recorded"
        lines.append(
            f"Function_{node_id}: family={node.spec.family} | weight={weight}"
            f" | prior={float(prior):.6f} (= {prior.numerator}/{prior.denominator})"
            f" | {description}"
        )
    return "\n".join(lines)


def _parse_support_edges(text: str) -> list[tuple[int, int, int]]:
    return [
        (int(src), int(dst), int(weight))
        for src, dst, weight in re.findall(r"\((\d+)->(\d+),w=(\d+)\)", text)
    ]


@dataclass
class BehaviorSelection:
    node_id: int
    graph_support: list[tuple[int, int, int]]
    contextual_justification: str
    priors: dict[int, Fraction]
    query_ids: list[int]


def estimate_behavior(
    kg: SdKg,
    context: tuple[KnowledgeUnit | None, KnowledgeUnit | None],
    oracle: Oracle,
    k: int = DEFAULT_SHORTLIST,
    include_vessel_id: bool = False,
) -> BehaviorSelection:
    """Shortlist behaviors by graph prior and let the oracle pick one.

    The selected id must come from the shortlist and every cited support
    edge must exist in the subgraph shown to the oracle.
    """
    if context[0] is None and context[1] is None:
        raise NoCandidates("no contextual knowledge on either side of the gap")
    query_ids = _static_query_ids(kg, context, include_vessel_id)
    if not query_ids:
        raise NoCandidates("context attributes missing from the graph")
    candidates = kg.candidate_behaviors(query_ids)
    if not candidates:
        raise NoCandidates("no behavior candidates linked to the context")
    priors = kg.behavior_prior(query_ids, candidates)
    shortlist = top_k(priors, k)
    shortlist_ids = {node_id for node_id, _ in shortlist}
    fragment = kg.induced_subgraph(set(query_ids) | shortlist_ids)
    variables = {
        "top_k": str(k),
        "boundary_text": _boundary_text(context),
        "dot_text": to_dot(fragment),
        "movement_text": _movement_text(kg, shortlist),
        "context_vessels": _context_vessel_lines(context),
    }
    parsed = oracle.ask("behavior_select", variables)
    selected = extract_id(parsed["Selected Movement ID"])
    if selected not in shortlist_ids:
        raise MalformedOracleOutput(
            f"selected movement {selected} not in shortlist {sorted(shortlist_ids)}"
        )
    support = _parse_support_edges(parsed["Graph Support"])
    fragment_edges = {(src, dst): weight for src, dst, weight, _ in fragment.edges}
    for src, dst, weight in support:
        if fragment_edges.get((src, dst)) != weight:
            raise MalformedOracleOutput(
                f"cited edge ({src}->{dst},w={weight}) not in the evidence subgraph"
            )
    return BehaviorSelection(
        node_id=selected,
        graph_support=support,
        contextual_justification=parsed["Contextual Justification"],
        priors=priors,
        query_ids=query_ids,
    )


@dataclass
class MethodSelection:
    node_id: int
    statistical_support: str
    reasoning: str
    priors: dict[int, Fraction]


def select_method(
    kg: SdKg,
    behavior_id: int,
    oracle: Oracle,
    k: int = DEFAULT_SHORTLIST,
    rows_text: str = "",
) -> MethodSelection:
    candidates = kg.candidate_functions(behavior_id)
    if not candidates:
        raise NoCandidates(f"behavior {behavior_id} has no linked methods")
    priors = kg.function_prior(behavior_id, candidates)
    shortlist = top_k(priors, k)
    shortlist_ids = {node_id for node_id, _ in shortlist}
    fragment = kg.induced_subgraph({behavior_id} | shortlist_ids)
    behavior_node = kg.node(behavior_id)
    variables = {
        "dot_text": to_dot(fragment),
        "functions_text": _functions_text(kg, behavior_id, shortlist),
        "movement_text": behavior_node.tokens.describe(),
        "rows_text": rows_text,
    }
    parsed = oracle.ask("method_select", variables)
    selected = extract_id(parsed["Selected Function ID"])
    if selected not in shortlist_ids:
        raise MalformedOracleOutput(
            f"selected function {selected} not in shortlist {sorted(shortlist_ids)}"
        )
    support = parsed["Statistical Support"]
    if not re.search(r"\d", support):
        raise MalformedOracleOutput("statistical support carries no probability value")
    return MethodSelection(
        node_id=selected,
        statistical_support=support,
        reasoning=parsed["Reasoning"],
        priors=priors,
    )


# --- anchors and execution ----------------------------------------------------


def _median_step(timestamps: list[int]) -> int:
    steps = sorted(b - a for a, b in zip(timestamps, timestamps[1:]))
    return steps[len(steps) // 2] if steps else 10


def _dead_reckon(records: list[AisRecord], target_time: int) -> tuple[float, float]:
    """Project a position to ``target_time`` from the two nearest known fixes.

    Constant-turn dead reckoning: course gives the tangent, the course
    difference between the two fixes gives the turn rate, and the chord
    length (arc-corrected) gives the path speed. Falls back to holding
    position when only one fix exists.
    """
    anchor = records[0] if target_time <= records[0].timestamp else records[-1]
    if len(records) < 2:
        return (anchor.lat, anchor.lon)
    if target_time <= records[0].timestamp:
        r0, r1 = records[0], records[1]
    else:
        r0, r1 = records[-2], records[-1]
    dt = r1.timestamp - r0.timestamp
    course0 = r0.course if r0.course is not None else 0.0
    course1 = r1.course if r1.course is not None else course0
    delta = (course1 - course0 + 180.0) % 360.0 - 180.0
    omega = math.radians(delta) / dt  # rad/s
    chord = math.hypot(r1.lat - r0.lat, r1.lon - r0.lon)
    half = omega * dt / 2.0
    arc_factor = half / math.sin(half) if abs(half) > 1e-12 else 1.0
    speed = chord * arc_factor / dt  # degrees of path per second
    heading = math.radians(anchor.course if anchor.course is not None else course0)
    span = target_time - anchor.timestamp
    if abs(omega) < 1e-18:
        return (
            anchor.lat + speed * span * math.cos(heading),
            anchor.lon + speed * span * math.sin(heading),
        )
    h_end = heading + omega * span
    lat = anchor.lat + (speed / omega) * (math.sin(h_end) - math.sin(heading))
    lon = anchor.lon + (speed / omega) * (math.cos(heading) - math.cos(h_end))
    return (lat, lon)


def _gap_anchors(gap: GapContext) -> tuple[tuple[float, float, int], tuple[float, float, int], bool]:
    """Boundary anchors for execution; a missing side is dead-reckoned.

    Returns ((lat, lon, t) before, (lat, lon, t) after, synthesized_flag).
    """
    if not gap.before and not gap.after:
        raise NoCandidates("gap has no known neighbors on either side")
    step = _median_step(gap.timestamps)
    synthesized = False
    if gap.before:
        rec = gap.before[-1]
        before = (rec.lat, rec.lon, rec.timestamp)
    else:
        t_before = gap.timestamps[0] - step
        lat, lon = _dead_reckon(gap.after, t_before)
        before = (lat, lon, t_before)
        synthesized = True
    if gap.after:
        rec = gap.after[0]
        after = (rec.lat, rec.lon, rec.timestamp)
    else:
        t_after = gap.timestamps[-1] + step
        lat, lon = _dead_reckon(gap.before, t_after)
        after = (lat, lon, t_after)
        synthesized = True
    return before, after, synthesized


def execute_imputation(
    kg: SdKg, function_id: int, gap: GapContext
) -> list[tuple[float, float, int]]:
    """Run the selected method over the gap's retained time grid."""
    node = kg.node(function_id)
    if not isinstance(node, FunctionNode):
        raise InvalidParameter(f"node {function_id} is not a function node")
    before, after, _ = _gap_anchors(gap)
    offsets = [0.0]
    offsets += [float(t - before[2]) for t in gap.timestamps]
    offsets.append(float(after[2] - before[2]))
    points = execute(node.spec, (before[0], before[1]), (after[0], after[1]), offsets)
    return [
        (lat, lon, t) for (lat, lon), t in zip(points, gap.timestamps)
    ]


def _fallback_points(gap: GapContext) -> list[tuple[float, float, int]]:
    """Linear interpolation between the nearest known fixes.

    With fixes on only one side the line through the two nearest fixes is
    extended across the gap; a single fix holds position.
    """
    if gap.before and gap.after:
        p0, p1 = gap.before[-1], gap.after[0]
    elif len(gap.before) >= 2:
        p0, p1 = gap.before[-2], gap.before[-1]
    elif len(gap.after) >= 2:
        p0, p1 = gap.after[0], gap.after[1]
    elif gap.before or gap.after:
        rec = (gap.before or gap.after)[-1]
        return [(rec.lat, rec.lon, t) for t in gap.timestamps]
    else:
        raise NoCandidates("gap has no known neighbors on either side")
    span = p1.timestamp - p0.timestamp
    points = []
    for t in gap.timestamps:
        u = (t - p0.timestamp) / span
        points.append(
            (
                p0.lat + u * (p1.lat - p0.lat),
                p0.lon + u * (p1.lon - p0.lon),
                t,
            )
        )
    return points


def compose_explanation(
    kg: SdKg,
    behavior_id: int,
    function_id: int,
    static_ids: list[int],
    boundary_text: str,
    oracle: Oracle,
) -> dict[str, str]:
    """Two-field human explanation over the evidence subgraph; node ids must
    not leak into the text."""
    fragment = kg.induced_subgraph(set(static_ids) | {behavior_id, function_id})
    behavior_node = kg.node(behavior_id)
    function_node = kg.node(function_id)
    statics = [kg.node(node_id) for node_id in sorted(static_ids)]
    variables = {
        "dot_text": to_dot(fragment),
        "movement_desc": behavior_node.tokens.describe(),
        "function_desc": function_node.description
        or f"{function_node.spec.family} interpolation rule",
        "vessels_desc_block": "\n".join(
            f"{node.attr_kind}={node.value}" for node in statics
        ),
        "vessels_behavior_pattern": boundary_text,
    }
    parsed = oracle.ask("explain", variables)
    cue = parsed["Regulatory Rule Cue"]
    rationale = parsed["Operational Protocol Rationale"]
    for text in (cue, rationale):
        match = _NODE_ID_PATTERNS.search(text)
        if match:
            raise MalformedOracleOutput(
                f"explanation leaks node identifier {match.group(0)!r}"
            )
    return {
        "regulatory_rule_cue": cue,
        "operational_protocol_rationale": rationale,
    }


def _fallback_outcome(gap: GapContext, reason: str, revision: int) -> ImputationOutcome:
    points = _fallback_points(gap)
    return ImputationOutcome(
        vessel_id=gap.vessel_id,
        segment_index=gap.segment_index,
        points=points,
        behavior_id=None,
        behavior_tokens=[],
        graph_support=[],
        contextual_justification=f"fallback: {reason}",
        function_id=None,
        function_iel=linear_spec().to_json_dict(),
        statistical_support="fallback: no graph evidence available",
        reasoning="fallback: linear interpolation between nearest known fixes",
        regulatory_rule_cue="Undetermined",
        operational_protocol_rationale=(
            "fallback reconstruction: straight constant-speed transit between"
            f" the nearest known fixes ({reason})"
        ),
        fallback_used=True,
        kg_revision=revision,
    )


def _neighbor_rows_text(gap: GapContext) -> str:
    rows = []
    for rec in (gap.before[-3:] + gap.after[:3]):
        rows.append(
            {
                "t": rec.timestamp,
                "lat": f"{rec.lat:.6f}",
                "lon": f"{rec.lon:.6f}",
                "sog": f"{rec.speed:.3f}" if rec.speed is not None else "",
                "cog": f"{rec.course:.3f}" if rec.course is not None else "",
            }
        )
    return format_rows(rows)


def impute_gap(
    kg: SdKg,
    units: list[KnowledgeUnit | None],
    gap: GapContext,
    oracle: Oracle,
    k: int = DEFAULT_SHORTLIST,
    include_vessel_id: bool = False,
) -> ImputationOutcome:
    """Full reconstruction of one masked segment.

    ``NoCandidates`` anywhere along the knowledge path selects the linear
    fallback (clearly flagged in the outcome); anything else propagates for
    the workflow layer to retry.
    """
    revision = kg.revision
    context = extract_context(units, gap.segment_index)
    try:
        behavior = estimate_behavior(
            kg, context, oracle, k=k, include_vessel_id=include_vessel_id
        )
        method = select_method(
            kg, behavior.node_id, oracle, k=k, rows_text=_neighbor_rows_text(gap)
        )
        points = execute_imputation(kg, method.node_id, gap)
        explanation = compose_explanation(
            kg,
            behavior.node_id,
            method.node_id,
            behavior.query_ids,
            _boundary_text(context),
            oracle,
        )
    except NoCandidates as exc:
        return _fallback_outcome(gap, str(exc), revision)
    behavior_node: BehaviorNode = kg.node(behavior.node_id)
    function_node: FunctionNode = kg.node(method.node_id)
    tokens = list(behavior_node.tokens.tokens()) + [
        behavior_node.tokens.duration_token()
    ]
    return ImputationOutcome(
        vessel_id=gap.vessel_id,
        segment_index=gap.segment_index,
        points=points,
        behavior_id=behavior.node_id,
        behavior_tokens=tokens,
        graph_support=behavior.graph_support,
        contextual_justification=behavior.contextual_justification,
        function_id=method.node_id,
        function_iel=function_node.spec.to_json_dict(),
        statistical_support=method.statistical_support,
        reasoning=method.reasoning,
        regulatory_rule_cue=explanation["regulatory_rule_cue"],
        operational_protocol_rationale=explanation["operational_protocol_rationale"],
        fallback_used=False,
        behavior_priors=behavior.priors,
        function_priors=method.priors,
        kg_revision=revision,
    )
