"""Static and spatial encoding plus behavior abstraction.

Turns a complete segment into the canonical static tuple (discrete fields
by per-segment mode, continuous fields by fixed-width bins, spatial
context by modal geofence category) and, with the oracle's help, into a
behavior tuple drawn from controlled vocabularies.
"""

from __future__ import annotations

import threading
from collections import Counter
from dataclasses import dataclass, field

from .errors import IncompleteSegment, InvalidParameter
from .geofence import GeofenceIndex
from .knowledge import (
    BehaviorTuple,
    StaticTuple,
    canonical_token,
    duration_bin_lower,
)
from .oracle import Oracle, format_rows
from .records import MinimalSegment

# Bin widths and open-ended thresholds for the continuous attributes.
DRAUGHT_BIN = (2.0, 12.0)
LENGTH_BIN = (50.0, 300.0)
WIDTH_BIN = (5.0, 30.0)


def _bin_token(value: float, width: float, open_from: float) -> str:
    """Half-open fixed-width bins with one open-ended bin at the top."""
    if value >= open_from:
        return f"[{_fmt(open_from)},inf)"
    lower = width * int(value // width)
    return f"[{_fmt(lower)},{_fmt(lower + width)})"


def _fmt(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else str(value)


def draught_bin(value: float) -> str:
    return _bin_token(value, *DRAUGHT_BIN)


def length_bin(value: float) -> str:
    return _bin_token(value, *LENGTH_BIN)


def width_bin(value: float) -> str:
    return _bin_token(value, *WIDTH_BIN)


def _mode(values: list) -> object:
    """Majority value; ties resolve to the earliest record's value."""
    counts = Counter(values)
    best = max(counts.values())
    for value in values:
        if counts[value] == best:
            return value
    raise AssertionError("unreachable")


def encode_static(segment: MinimalSegment, geofence: GeofenceIndex) -> StaticTuple:
    if not segment.is_complete():
        raise IncompleteSegment(
            f"segment {segment.vessel_id}/{segment.segment_index} has missing fields"
        )
    records = segment.records
    contexts = [geofence.lookup(rec.lat, rec.lon) for rec in records]
    return StaticTuple(
        vessel_id=str(_mode([rec.vessel_id for rec in records])),
        nav_status=str(_mode([rec.nav_status for rec in records])),
        cargo_type=str(_mode([rec.cargo_type for rec in records])),
        draught_bin=draught_bin(float(_mode([rec.draught for rec in records]))),
        length_bin=length_bin(float(_mode([rec.length for rec in records]))),
        width_bin=width_bin(float(_mode([rec.width for rec in records]))),
        ship_type=str(_mode([rec.ship_type for rec in records])),
        spatial_context=str(_mode(contexts)),
    )


def duration_token(segment: MinimalSegment) -> int:
    """Lower bound of the segment's 50 s duration bin."""
    if len(segment.records) < 2:
        raise InvalidParameter("duration needs at least two records")
    return duration_bin_lower(segment.span_seconds())


VOCAB_KINDS = ("speed", "course", "heading", "intent")

_SEED_TOKENS = {
    "speed": ("stable", "increasing", "decreasing", "variable"),
    "course": ("stable", "gradual", "sharp"),
    "heading": ("stable", "gradual", "sharp"),
    "intent": ("navigating", "maneuvering", "approaching"),
}


@dataclass
class Vocabulary:
    """One controlled token set with its redundancy merge map."""

    kind: str
    tokens: list[str] = field(default_factory=list)
    merge_map: dict[str, str] = field(default_factory=dict)

    def canonical(self, token: str) -> str:
        return self.merge_map.get(token, token)

    def add(self, token: str) -> str:
        token = self.canonical(token)
        if token not in self.tokens:
            self.tokens.append(token)
        return token

    def merge(self, primary: str, redundant: list[str]) -> None:
        """Collapse redundant tokens into ``primary`` and chase old mappings."""
        if primary not in self.tokens:
            self.tokens.append(primary)
        for token in redundant:
            if token == primary:
                continue
            self.merge_map[token] = primary
            if token in self.tokens:
                self.tokens.remove(token)
        # Re-point chains (a -> b, then b -> c) at their final target.
        for source, target in list(self.merge_map.items()):
            seen = {source}
            while target in self.merge_map and target not in seen:
                seen.add(target)
                target = self.merge_map[target]
            self.merge_map[source] = target


class VocabularyStore:
    """The four behavior vocabularies behind one writer lock."""

    def __init__(self, seed_tokens: bool = True):
        self._lock = threading.Lock()
        self.vocabs = {kind: Vocabulary(kind) for kind in VOCAB_KINDS}
        if seed_tokens:
            for kind, tokens in _SEED_TOKENS.items():
                self.vocabs[kind].tokens.extend(tokens)

    def canonical(self, kind: str, token: str) -> str:
        return self.vocabs[kind].canonical(token)

    def add(self, kind: str, token: str) -> str:
        with self._lock:
            return self.vocabs[kind].add(token)

    def merge(self, kind: str, primary: str, redundant: list[str]) -> None:
        with self._lock:
            self.vocabs[kind].merge(primary, redundant)

    def tokens(self, kind: str) -> list[str]:
        return list(self.vocabs[kind].tokens)

    def dict_text(self, kind: str) -> str:
        return "[" + ", ".join(self.vocabs[kind].tokens) + "]"


def format_segment_rows(
    segment: MinimalSegment, context: str | None = None
) -> str:
    """Tabular text view of a segment for prompt payloads."""
    t0 = segment.records[0].timestamp
    rows = []
    for rec in segment.records:
        row = {
            "t": rec.timestamp - t0,
            "lat": f"{rec.lat:.6f}" if rec.lat is not None else "",
            "lon": f"{rec.lon:.6f}" if rec.lon is not None else "",
            "sog": f"{rec.speed:.3f}" if rec.speed is not None else "",
            "cog": f"{rec.course:.3f}" if rec.course is not None else "",
            "hdg": f"{rec.heading:.3f}" if rec.heading is not None else "",
            "nav": rec.nav_status or "",
            "type": rec.ship_type or "",
        }
        if context is not None:
            row["ctx"] = context
        rows.append(row)
    return format_rows(rows)


def abstract_behavior(
    segment: MinimalSegment,
    vocabs: VocabularyStore,
    oracle: Oracle,
    context: str | None = None,
) -> BehaviorTuple:
    """Ask the oracle for the four pattern tokens and bind the duration bin.

    Returned tokens are normalized to the token grammar and folded through
    the merge maps; genuinely new tokens grow their vocabulary.
    """
    if not segment.is_complete():
        raise IncompleteSegment("behavior abstraction needs a complete segment")
    variables = {
        "trajectory_data": format_segment_rows(segment, context),
        "speed_dict": vocabs.dict_text("speed"),
        "course_dict": vocabs.dict_text("course"),
        "heading_dict": vocabs.dict_text("heading"),
        "intent_dict": vocabs.dict_text("intent"),
    }
    parsed = oracle.ask("behavior_abstraction", variables)
    tokens: dict[str, str] = {}
    for kind, key in zip(VOCAB_KINDS, ("speed_pattern", "course_pattern", "heading_pattern", "intent")):
        raw, _explanation = parsed[key]
        tokens[kind] = vocabs.add(kind, canonical_token(raw))
    return BehaviorTuple(
        speed_pattern=tokens["speed"],
        course_pattern=tokens["course"],
        heading_pattern=tokens["heading"],
        intent=tokens["intent"],
        duration_lower=duration_token(segment),
    )
