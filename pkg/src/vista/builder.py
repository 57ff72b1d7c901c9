"""Imputation-method construction: retrieval-first proposal, bounded
fit-and-refine validation, and description generation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .encoder import format_segment_rows
from .errors import (
    EvaluationError,
    MalformedOracleOutput,
    UnsupportedConstruct,
    ValidationExhausted,
)
from .functions import (
    DEFAULT_FIT_THRESHOLD,
    DEFAULT_MAX_PROPOSALS,
    FitReport,
    FunctionSpec,
    fitting_error,
)
from .kg import SdKg, top_k
from .knowledge import BehaviorTuple
from .oracle import Oracle

log = logging.getLogger(__name__)


@dataclass
class Proposal:
    spec: FunctionSpec
    description: str
    reused: bool  # True when retrieved from the graph instead of generated


def _spec_from_parsed(parsed: dict) -> FunctionSpec:
    return FunctionSpec(
        lat_expr=parsed["lat"],
        lon_expr=parsed["lon"],
        params=tuple(sorted(parsed["params"].items())),
        family=parsed.get("family", "custom"),
        origin="oracle-generated",
    )


def _builder_variables(segment, behavior: BehaviorTuple | None, feedback: str) -> dict:
    return {
        "trajectory_data": format_segment_rows(segment),
        "pattern": behavior.describe() if behavior is not None else "",
        "feedback_text_description": feedback,
    }


def propose(
    segment,
    static_tuple,
    behavior: BehaviorTuple,
    kg: SdKg,
    oracle: Oracle,
    fit_threshold: float = DEFAULT_FIT_THRESHOLD,
) -> Proposal:
    """Reuse the best already-known method when it fits, else generate one.

    Retrieval goes through the behavior node's function edges with the same
    prior construction used at imputation time; the top candidate is accepted
    only if its fitting error on this segment clears the threshold.
    """
    behavior_id = kg.behavior_node_id(behavior)
    if behavior_id is not None:
        candidates = kg.candidate_functions(behavior_id)
        if candidates:
            priors = kg.function_prior(behavior_id, candidates)
            best_id, _prior = top_k(priors, 1)[0]
            node = kg.node(best_id)
            try:
                report = fitting_error(node.spec, segment)
            except EvaluationError:
                report = None
            if report is not None and report.error <= fit_threshold:
                return Proposal(spec=node.spec, description=node.description, reused=True)
    parsed = oracle.ask("method_builder", _builder_variables(segment, behavior, ""))
    return Proposal(
        spec=_spec_from_parsed(parsed),
        description=parsed.get("description", ""),
        reused=False,
    )


def _feedback_text(
    attempt: int, report: FitReport | None, threshold: float, tried: list[str]
) -> str:
    if report is None:
        detail = "the previous proposal could not be evaluated"
    else:
        detail = (
            f"fitting error {report.error:.6g} exceeded threshold {threshold:g}"
            f" (lat MAE {report.mae_lat:.6g}, lon MAE {report.mae_lon:.6g})"
        )
    return (
        f"Feedback: attempt {attempt} rejected; {detail}.\n"
        f"tried families: {', '.join(tried)}"
    )


def validate_and_refine(
    func: FunctionSpec,
    segment,
    oracle: Oracle,
    *,
    fit_threshold: float = DEFAULT_FIT_THRESHOLD,
    max_proposals: int = DEFAULT_MAX_PROPOSALS,
    behavior: BehaviorTuple | None = None,
) -> tuple[FunctionSpec, FitReport]:
    """Score proposals against the segment until one fits or the budget ends.

    The given function counts as the first proposal. On exhaustion the best
    attempt (lowest error) rides along in the raised error.
    """
    tried: list[str] = []
    best: tuple[float, FunctionSpec, FitReport] | None = None
    current: FunctionSpec | None = func
    report: FitReport | None = None
    for attempt in range(1, max_proposals + 1):
        if current is not None:
            tried.append(current.family)
            try:
                report = fitting_error(current, segment)
                report.attempts = attempt
            except EvaluationError as exc:
                log.debug("proposal %d failed to evaluate: %s", attempt, exc)
                report = None
            if report is not None:
                if report.error <= fit_threshold:
                    report.accepted = True
                    return current, report
                if best is None or report.error < best[0]:
                    best = (report.error, current, report)
        if attempt == max_proposals:
            break
        feedback = _feedback_text(attempt, report, fit_threshold, tried)
        try:
            parsed = oracle.ask(
                "method_builder", _builder_variables(segment, behavior, feedback)
            )
            current = _spec_from_parsed(parsed)
        except (MalformedOracleOutput, UnsupportedConstruct) as exc:
            log.debug("refinement %d unparseable: %s", attempt + 1, exc)
            current = None
    if best is None:
        raise ValidationExhausted(
            f"no proposal for segment {segment.vessel_id}/{segment.segment_index}"
            " could be evaluated",
            best_spec=None,
            best_report=None,
        )
    error, spec, report = best
    report.accepted = False
    report.attempts = max_proposals
    raise ValidationExhausted(
        f"best fitting error {error:.6g} still above {fit_threshold:g}"
        f" after {max_proposals} proposals",
        best_spec=spec,
        best_report=report,
    )


def describe(
    spec: FunctionSpec,
    behavior: BehaviorTuple,
    oracle: Oracle,
    existing: str = "",
) -> str:
    """Produce d(f); an already-present description is reused verbatim."""
    if existing:
        return existing
    tokens = ", ".join(behavior.tokens())
    return (
        f"{spec.family} imputation rule for movements showing {tokens};"
        f" anchors at the gap boundaries and evaluates per normalized time"
        f" step; parameters: "
        + (
            ", ".join(f"{name}={value:g}" for name, value in spec.params)
            if spec.params
            else "none"
        )
    )
