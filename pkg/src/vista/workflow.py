"""Batch workflow layer: stack scheduling, bounded retries with
quarantine, de-redundancy, and the two end-to-end drivers (graph build
and gap imputation).

Jobs are popped in micro-batches of at most ``batch_size`` and executed on
a thread pool of the same width, so the per-stage concurrency never
exceeds the batch size. Any job error is an anomaly: the job re-enters the
stack with its retry counter bumped until the stage limit, then lands in
quarantine with its full attempt log. Graph and vocabulary commits run on
a single consumer thread, which is the only writer.
"""

from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import builder, encoder, imputation
from .errors import MalformedOracleOutput, VistaError
from .functions import FunctionSpec, ImputationMethod, probe_equivalent
from .geofence import GeofenceIndex
from .imputation import GapContext, ImputationOutcome
from .kg import SdKg
from .knowledge import BehaviorTuple, KnowledgeUnit, is_canonical
from .oracle import Oracle
from .records import MinimalSegment, ObservationMask, VesselSequence
from .segments import compute_mask, partition

log = logging.getLogger(__name__)


@dataclass
class SchedulerConfig:
    """Knobs shared by both workflow drivers."""

    batch_size: int = 8
    extract_retries: int = 3  # bound on extraction re-queues
    impute_retries: int = 3  # bound on imputation re-queues
    refine_proposals: int = 3  # proposals per segment inside the method builder
    fit_threshold: float = 3e-3  # degrees
    m: int = 20
    shortlist_k: int = 5
    include_vessel_id: bool = False

    def __post_init__(self):
        for name in (
            "batch_size",
            "extract_retries",
            "impute_retries",
            "refine_proposals",
            "m",
            "shortlist_k",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.fit_threshold <= 0:
            raise ValueError("fit_threshold must be positive")


@dataclass
class Job:
    vessel_id: str
    segment_index: int
    payload: object
    kind: str
    retry_count: int = 0
    sort_time: int = 0


@dataclass
class QuarantineRecord:
    vessel_id: str
    segment_index: int
    kind: str
    final_error: str
    attempt_log: list[tuple[float, str]]

    def to_json_dict(self) -> dict:
        return {
            "vessel_id": self.vessel_id,
            "segment_index": self.segment_index,
            "kind": self.kind,
            "final_error": self.final_error,
            "attempt_log": [[ts, err] for ts, err in self.attempt_log],
        }


class JobStack:
    """LIFO stack with atomic batch pop."""

    def __init__(self):
        self._items: list = []
        self._lock = threading.Lock()

    def push(self, item) -> None:
        with self._lock:
            self._items.append(item)

    def pop_batch(self, limit: int) -> list:
        with self._lock:
            if not self._items:
                return []
            take = min(limit, len(self._items))
            batch = self._items[-take:]
            del self._items[-take:]
            return list(reversed(batch))

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)


class ConcurrencyProbe:
    """Tracks the high-water mark of simultaneously running jobs."""

    def __init__(self):
        self._lock = threading.Lock()
        self._active = 0
        self.high_water = 0

    def __enter__(self):
        with self._lock:
            self._active += 1
            self.high_water = max(self.high_water, self._active)
        return self

    def __exit__(self, *exc):
        with self._lock:
            self._active -= 1
        return False


@dataclass
class RunStats:
    scheduled: int = 0
    committed: int = 0
    retried: int = 0
    quarantined: int = 0
    wall_ms: float = 0.0
    kg_nodes: int = 0
    kg_edges: int = 0
    high_water: int = 0
    stage_ms: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "scheduled": self.scheduled,
            "committed": self.committed,
            "retried": self.retried,
            "quarantined": self.quarantined,
            "wall_ms": self.wall_ms,
            "kg_nodes": self.kg_nodes,
            "kg_edges": self.kg_edges,
            "high_water": self.high_water,
            "stage_ms": dict(self.stage_ms),
        }


@dataclass
class BuildResult:
    kg: SdKg
    units: dict[str, list[KnowledgeUnit | None]]
    quarantine: list[QuarantineRecord]
    stats: RunStats


@dataclass
class ImputeResult:
    outcomes: list[ImputationOutcome]
    quarantine: list[QuarantineRecord]
    stats: RunStats


def _run_stage(
    stack: JobStack,
    worker,
    on_success,
    retry_limit: int,
    batch_size: int,
    stats: RunStats,
    probe: ConcurrencyProbe,
    quarantine: list[QuarantineRecord],
    attempt_logs: dict,
) -> None:
    """Pop micro-batches, run them in parallel, guard, retry, quarantine."""

    def _guarded(job: Job):
        with probe:
            return worker(job)

    with ThreadPoolExecutor(max_workers=batch_size) as pool:
        while True:
            batch = stack.pop_batch(batch_size)
            if not batch:
                break
            futures = [(job, pool.submit(_guarded, job)) for job in batch]
            for job, future in futures:
                key = (job.vessel_id, job.segment_index, job.kind)
                try:
                    result = future.result()
                except VistaError as exc:
                    attempt_logs.setdefault(key, []).append((time.time(), str(exc)))
                    if job.retry_count < retry_limit:
                        job.retry_count += 1
                        stats.retried += 1
                        stack.push(job)
                    else:
                        stats.quarantined += 1
                        quarantine.append(
                            QuarantineRecord(
                                vessel_id=job.vessel_id,
                                segment_index=job.segment_index,
                                kind=job.kind,
                                final_error=str(exc),
                                attempt_log=attempt_logs.pop(key),
                            )
                        )
                else:
                    attempt_logs.pop(key, None)
                    on_success(job, result)


# --- de-redundancy ------------------------------------------------------------

_ATTR_TO_KIND = {
    "speed": "speed",
    "course": "course",
    "heading": "heading",
    "intent": "intent",
}


class FunctionRegistry:
    """Probe-equivalence classes over method specs.

    The representative of each класс is its content-minimal member so the
    final graph does not depend on worker scheduling order.
    """

    def __init__(self, kg: SdKg | None = None):
        self._reps: list[FunctionSpec] = []
        if kg is not None:
            for node in kg.function_nodes():
                self._reps.append(node.spec)

    def representative(self, spec: FunctionSpec) -> FunctionSpec:
        for known in self._reps:
            if known == spec or probe_equivalent(known, spec):
                return known
        self._reps.append(spec)
        return spec


def _tokens_by_kind(units: list[KnowledgeUnit]) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {kind: [] for kind in _ATTR_TO_KIND}
    for unit in units:
        for kind, token in zip(
            ("speed", "course", "heading", "intent"), unit.behavior.tokens()
        ):
            if token not in out[kind]:
                out[kind].append(token)
    return out


def _canonical_behavior(
    behavior: BehaviorTuple, vocabs: encoder.VocabularyStore
) -> BehaviorTuple:
    return BehaviorTuple(
        speed_pattern=vocabs.canonical("speed", behavior.speed_pattern),
        course_pattern=vocabs.canonical("course", behavior.course_pattern),
        heading_pattern=vocabs.canonical("heading", behavior.heading_pattern),
        intent=vocabs.canonical("intent", behavior.intent),
        duration_lower=behavior.duration_lower,
    )


def apply_token_merges(
    parsed: dict, presented: dict[str, list[str]], vocabs: encoder.VocabularyStore
) -> None:
    """Fold oracle-proposed merges into the vocabularies.

    Proposals touching tokens that were never presented, or violating the
    token grammar, are dropped; the oracle advises, the store decides.
    """
    for attribute, groups in parsed.get("behavior", {}).items():
        kind = _ATTR_TO_KIND.get(attribute)
        if kind is None:
            continue
        offered = set(presented.get(kind, []))
        for primary, redundant in groups.items():
            if not is_canonical(primary):
                continue
            safe = [
                token
                for token in redundant
                if token in offered and is_canonical(token) and token != primary
            ]
            if safe:
                vocabs.merge(kind, primary, safe)


def deredundancy(
    units: list[KnowledgeUnit],
    vocabs: encoder.VocabularyStore,
    kg: SdKg,
    oracle: Oracle,
    registry: FunctionRegistry,
) -> list[KnowledgeUnit]:
    """Canonicalize a validated micro-batch before it touches the graph.

    Token pass: exact normalization already happened at extraction; the
    dedup oracle may additionally merge synonyms, and a malformed response
    simply skips that refinement. Function pass: probe-equivalent specs
    collapse onto their class representative.
    """
    presented = _tokens_by_kind(units)
    vb_lines = [
        f"[{kind}]: {', '.join(tokens)}" for kind, tokens in presented.items() if tokens
    ]
    vf_lines = [
        f"F{i}: family={unit.func.spec.family} | lat={unit.func.spec.lat_expr}"
        f" | lon={unit.func.spec.lon_expr} | params={dict(unit.func.spec.params)}"
        for i, unit in enumerate(units)
        if unit.func is not None
    ]
    try:
        parsed = oracle.ask(
            "dedup",
            {
                "vb_data_text": "\n".join(vb_lines),
                "vf_data_text": "\n".join(vf_lines),
            },
        )
        apply_token_merges(parsed, presented, vocabs)
    except (MalformedOracleOutput, VistaError) as exc:
        log.warning("dedup oracle pass skipped for batch: %s", exc)
    cleaned: list[KnowledgeUnit] = []
    for unit in units:
        behavior = _canonical_behavior(unit.behavior, vocabs)
        func = unit.func
        if func is not None:
            rep = registry.representative(func.spec)
            if rep != func.spec:
                func = type(func)(spec=rep, description=func.description)
        cleaned.append(
            KnowledgeUnit(
                static=unit.static,
                behavior=behavior,
                func=func,
                source=unit.source,
            )
        )
    return cleaned


def _global_dedup_pass(
    kg: SdKg, vocabs: encoder.VocabularyStore, oracle: Oracle
) -> tuple[dict[BehaviorTuple, BehaviorTuple], dict[FunctionSpec, FunctionSpec]]:
    """End-of-build consolidation across batches that never met.

    Returns the applied rewrite maps so committed units can be re-aligned
    with the merged graph.
    """
    presented = {kind: vocabs.tokens(kind) for kind in _ATTR_TO_KIND}
    vb_lines = [
        f"[{kind}]: {', '.join(tokens)}" for kind, tokens in presented.items() if tokens
    ]
    try:
        parsed = oracle.ask(
            "dedup", {"vb_data_text": "\n".join(vb_lines), "vf_data_text": ""}
        )
        apply_token_merges(parsed, presented, vocabs)
    except (MalformedOracleOutput, VistaError) as exc:
        log.warning("global dedup oracle pass skipped: %s", exc)

    behavior_map: dict[BehaviorTuple, BehaviorTuple] = {}
    for node in sorted(kg.behavior_nodes(), key=lambda n: n.node_id):
        target = _canonical_behavior(node.tokens, vocabs)
        if target == node.tokens:
            continue
        behavior_map[node.tokens] = target
        existing = kg.behavior_node_id(target)
        if existing is None:
            kg.rename_behavior_node(node.node_id, target)
        else:
            kg.merge_behavior_nodes(existing, node.node_id)

    function_map: dict[FunctionSpec, FunctionSpec] = {}
    nodes = sorted(
        kg.function_nodes(), key=lambda n: (n.spec.sort_key(), n.node_id)
    )
    kept: list = []
    for node in nodes:
        for rep in kept:
            if probe_equivalent(rep.spec, node.spec):
                function_map[node.spec] = rep.spec
                kg.merge_function_nodes(rep.node_id, node.node_id)
                break
        else:
            kept.append(node)
    return behavior_map, function_map


# --- graph construction driver -------------------------------------------------


def run_build(
    dataset: list[VesselSequence],
    kg: SdKg,
    config: SchedulerConfig,
    oracle: Oracle,
    geofence: GeofenceIndex | None = None,
    vocabs: encoder.VocabularyStore | None = None,
) -> BuildResult:
    """Extract a knowledge unit from every complete segment and commit them.

    Stage 1 (extraction) runs batch-parallel; stage 2 (de-redundancy plus
    graph commits) runs on one consumer thread fed by the validated-batch
    stack, concurrently with stage 1. A global dedup pass closes the build.
    """
    started = time.perf_counter()
    geofence = geofence or GeofenceIndex.empty()
    vocabs = vocabs or encoder.VocabularyStore()
    stats = RunStats()
    probe = ConcurrencyProbe()
    quarantine: list[QuarantineRecord] = []
    attempt_logs: dict = {}

    compute_stack = JobStack()
    dedup_stack = JobStack()
    units: dict[str, list[KnowledgeUnit | None]] = {}

    jobs: list[Job] = []
    for sequence in dataset:
        segments = partition(sequence, config.m)
        mask = compute_mask(segments) if segments else None
        units[sequence.vessel_id] = [None] * len(segments)
        for segment, bit in zip(segments, mask.bits if mask else []):
            if bit == 1:
                jobs.append(
                    Job(
                        vessel_id=segment.vessel_id,
                        segment_index=segment.segment_index,
                        payload=segment,
                        kind="extract",
                        sort_time=segment.records[0].timestamp,
                    )
                )
    jobs.sort(key=lambda job: (job.sort_time, job.vessel_id, job.segment_index))
    for job in jobs:
        compute_stack.push(job)
    stats.scheduled = len(jobs)

    registry = FunctionRegistry(kg)
    committed_units: list[KnowledgeUnit] = []
    consumer_done = threading.Event()
    extraction_done = threading.Event()

    def extract_worker(job: Job) -> KnowledgeUnit:
        segment: MinimalSegment = job.payload
        static_tuple = encoder.encode_static(segment, geofence)
        behavior = encoder.abstract_behavior(
            segment, vocabs, oracle, context=static_tuple.spatial_context
        )
        proposal = builder.propose(
            segment, static_tuple, behavior, kg, oracle, config.fit_threshold
        )
        spec, _report = builder.validate_and_refine(
            proposal.spec,
            segment,
            oracle,
            fit_threshold=config.fit_threshold,
            max_proposals=config.refine_proposals,
            behavior=behavior,
        )
        description = builder.describe(
            spec,
            behavior,
            oracle,
            existing=proposal.description if spec == proposal.spec else "",
        )
        unit = KnowledgeUnit(
            static=static_tuple,
            behavior=behavior,
            func=ImputationMethod(spec, description),
            source=(segment.vessel_id, segment.segment_index),
        )
        _guard_unit(unit)
        return unit

    def on_extracted(job: Job, unit: KnowledgeUnit) -> None:
        dedup_stack.push((job, unit))

    def consumer() -> None:
        while True:
            batch = dedup_stack.pop_batch(config.batch_size)
            if not batch:
                if extraction_done.is_set() and len(dedup_stack) == 0:
                    break
                time.sleep(0.001)
                continue
            batch_jobs = [job for job, _ in batch]
            cleaned = deredundancy(
                [unit for _, unit in batch], vocabs, kg, oracle, registry
            )
            for job, unit in zip(batch_jobs, cleaned):
                kg.upsert_unit(unit)
                units[unit.source[0]][unit.source[1]] = unit
                committed_units.append(unit)
                stats.committed += 1
        consumer_done.set()

    consumer_thread = threading.Thread(target=consumer, name="kg-commit")
    consumer_thread.start()
    stage1_started = time.perf_counter()
    _run_stage(
        compute_stack,
        extract_worker,
        on_extracted,
        config.extract_retries,
        config.batch_size,
        stats,
        probe,
        quarantine,
        attempt_logs,
    )
    extraction_done.set()
    stats.stage_ms["extraction"] = (time.perf_counter() - stage1_started) * 1000.0
    consumer_thread.join()

    dedup_started = time.perf_counter()
    behavior_map, function_map = _global_dedup_pass(kg, vocabs, oracle)
    if behavior_map or function_map:
        for vessel_units in units.values():
            for i, unit in enumerate(vessel_units):
                if unit is None:
                    continue
                behavior = behavior_map.get(unit.behavior, unit.behavior)
                func = unit.func
                if func is not None and func.spec in function_map:
                    func = type(func)(function_map[func.spec], func.description)
                if behavior is not unit.behavior or func is not unit.func:
                    vessel_units[i] = KnowledgeUnit(
                        static=unit.static,
                        behavior=behavior,
                        func=func,
                        source=unit.source,
                    )
    stats.stage_ms["deredundancy"] = (time.perf_counter() - dedup_started) * 1000.0

    stats.wall_ms = (time.perf_counter() - started) * 1000.0
    stats.kg_nodes = kg.node_count()
    stats.kg_edges = kg.edge_count()
    stats.high_water = probe.high_water
    return BuildResult(kg=kg, units=units, quarantine=quarantine, stats=stats)


def _guard_unit(unit: KnowledgeUnit) -> None:
    """Anomaly guard for extraction output: non-empty, well-formed, complete."""
    if unit.static is None or unit.behavior is None or unit.func is None:
        raise MalformedOracleOutput("knowledge unit has a missing component")
    for token in unit.behavior.tokens():
        if not token or not is_canonical(token):
            raise MalformedOracleOutput(f"non-canonical behavior token {token!r}")
    if not unit.func.spec.lat_expr or not unit.func.spec.lon_expr:
        raise MalformedOracleOutput("method spec has an empty expression")


# --- imputation driver ----------------------------------------------------------


def _known_neighbors(
    sequence: VesselSequence, start_ts: int, end_ts: int, window: int = 5
) -> tuple[list[AisRecord], list[AisRecord]]:
    before = [
        rec
        for rec in sequence.records
        if rec.timestamp < start_ts and rec.has_position()
    ][-window:]
    after = [
        rec for rec in sequence.records if rec.timestamp > end_ts and rec.has_position()
    ][:window]
    return before, after


def derive_context_units(
    dataset: list[VesselSequence],
    masks: dict[str, ObservationMask],
    config: SchedulerConfig,
    oracle: Oracle,
    geofence: GeofenceIndex | None = None,
    vocabs: encoder.VocabularyStore | None = None,
) -> dict[str, list[KnowledgeUnit | None]]:
    """Rebuild context-only units (no methods) for every complete segment.

    Used when imputation runs against a stored graph without the build-time
    unit collection.
    """
    geofence = geofence or GeofenceIndex.empty()
    vocabs = vocabs or encoder.VocabularyStore()
    units: dict[str, list[KnowledgeUnit | None]] = {}
    for sequence in dataset:
        segments = partition(sequence, config.m)
        mask = masks.get(sequence.vessel_id)
        vessel_units: list[KnowledgeUnit | None] = [None] * len(segments)
        for k, segment in enumerate(segments):
            bit = mask.bits[k] if mask and k < len(mask.bits) else (
                1 if segment.is_complete() else 0
            )
            if bit != 1 or not segment.is_complete():
                continue
            static_tuple = encoder.encode_static(segment, geofence)
            behavior = encoder.abstract_behavior(
                segment, vocabs, oracle, context=static_tuple.spatial_context
            )
            vessel_units[k] = KnowledgeUnit(
                static=static_tuple,
                behavior=behavior,
                func=None,
                source=(segment.vessel_id, k),
            )
        units[sequence.vessel_id] = vessel_units
    return units


def run_impute(
    dataset: list[VesselSequence],
    masks: dict[str, ObservationMask],
    kg: SdKg,
    units: dict[str, list[KnowledgeUnit | None]] | None,
    config: SchedulerConfig,
    oracle: Oracle,
    outcome_sink=None,
    geofence: GeofenceIndex | None = None,
) -> ImputeResult:
    """Reconstruct every masked segment, batch-parallel with retries.

    ``outcome_sink`` receives each outcome dict as it completes (single
    writer; calls are serialized).
    """
    started = time.perf_counter()
    if units is None:
        units = derive_context_units(
            dataset, masks, config, oracle, geofence=geofence
        )
    stats = RunStats()
    probe = ConcurrencyProbe()
    quarantine: list[QuarantineRecord] = []
    attempt_logs: dict = {}
    stack = JobStack()

    jobs: list[Job] = []
    for sequence in dataset:
        mask = masks.get(sequence.vessel_id)
        if mask is None:
            continue
        segments = partition(sequence, config.m)
        for k, segment in enumerate(segments):
            if k >= len(mask.bits) or mask.bits[k] == 1:
                continue
            if any(rec.has_position() for rec in segment.records):
                log.warning(
                    "vessel %s segment %d has partial attributes only;"
                    " excluded from imputation",
                    sequence.vessel_id,
                    k,
                )
                continue
            timestamps = segment.timestamps()
            before, after = _known_neighbors(
                sequence, timestamps[0], timestamps[-1]
            )
            gap = GapContext(
                vessel_id=sequence.vessel_id,
                segment_index=k,
                timestamps=timestamps,
                before=before,
                after=after,
            )
            jobs.append(
                Job(
                    vessel_id=sequence.vessel_id,
                    segment_index=k,
                    payload=gap,
                    kind="impute",
                    sort_time=timestamps[0],
                )
            )
    jobs.sort(key=lambda job: (job.sort_time, job.vessel_id, job.segment_index))
    for job in jobs:
        stack.push(job)
    stats.scheduled = len(jobs)

    outcomes: list[ImputationOutcome] = []
    sink_lock = threading.Lock()

    def impute_worker(job: Job) -> ImputationOutcome:
        gap: GapContext = job.payload
        outcome = imputation.impute_gap(
            kg,
            units.get(job.vessel_id, []),
            gap,
            oracle,
            k=config.shortlist_k,
            include_vessel_id=config.include_vessel_id,
        )
        _guard_outcome(outcome, kg, len(gap.timestamps))
        return outcome

    def on_imputed(job: Job, outcome: ImputationOutcome) -> None:
        with sink_lock:
            outcomes.append(outcome)
            stats.committed += 1
            if outcome_sink is not None:
                outcome_sink(outcome.to_json_dict())

    _run_stage(
        stack,
        impute_worker,
        on_imputed,
        config.impute_retries,
        config.batch_size,
        stats,
        probe,
        quarantine,
        attempt_logs,
    )

    stats.wall_ms = (time.perf_counter() - started) * 1000.0
    stats.stage_ms["imputation"] = stats.wall_ms
    stats.kg_nodes = kg.node_count()
    stats.kg_edges = kg.edge_count()
    stats.high_water = probe.high_water
    return ImputeResult(outcomes=outcomes, quarantine=quarantine, stats=stats)


def _guard_outcome(outcome: ImputationOutcome, kg: SdKg, expected_len: int) -> None:
    """Anomaly guard for imputation output: non-empty and executable."""
    if not outcome.points or len(outcome.points) != expected_len:
        raise MalformedOracleOutput(
            f"outcome has {len(outcome.points)} points, expected {expected_len}"
        )
    if outcome.fallback_used:
        return
    if outcome.behavior_id is None or not kg.has_node(outcome.behavior_id):
        raise MalformedOracleOutput("selected behavior is not in the graph")
    if outcome.function_id is None or not kg.has_node(outcome.function_id):
        raise MalformedOracleOutput("selected function is not in the graph")
