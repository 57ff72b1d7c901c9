"""Knowledge units: the (static attributes, behavior pattern, method)
triples distilled from complete segments.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .functions import ImputationMethod

#: Attribute kinds of the static tuple, in canonical order.
STATIC_KINDS = (
    "vessel_id",
    "nav_status",
    "cargo_type",
    "draught_bin",
    "length_bin",
    "width_bin",
    "ship_type",
    "spatial_context",
)

#: Long-duration cutoff in seconds: spans at or above collapse into one bin.
DURATION_OPEN_LOWER = 3600
DURATION_BIN_WIDTH = 50

_TOKEN_RE = re.compile(r"^[a-z0-9]+( [a-z0-9]+)*$")


def canonical_token(raw: str) -> str:
    """Normalize to the token grammar: lowercase words joined by single spaces."""
    cleaned = re.sub(r"[^a-z0-9 ]+", " ", raw.lower())
    return " ".join(cleaned.split())


def is_canonical(token: str) -> bool:
    return bool(_TOKEN_RE.match(token))


def duration_bin_lower(span_seconds: int) -> int:
    if span_seconds >= DURATION_OPEN_LOWER:
        return DURATION_OPEN_LOWER
    return DURATION_BIN_WIDTH * (span_seconds // DURATION_BIN_WIDTH)


def duration_bin_token(lower: int) -> str:
    if lower >= DURATION_OPEN_LOWER:
        return f"[{DURATION_OPEN_LOWER},inf)"
    return f"[{lower},{lower + DURATION_BIN_WIDTH})"


@dataclass(frozen=True, slots=True)
class StaticTuple:
    """Per-segment static attributes, already canonicalized and binned."""

    vessel_id: str
    nav_status: str
    cargo_type: str
    draught_bin: str
    length_bin: str
    width_bin: str
    ship_type: str
    spatial_context: str

    def members(self) -> tuple[tuple[str, str], ...]:
        """(kind, value) pairs in canonical order."""
        return tuple((kind, getattr(self, kind)) for kind in STATIC_KINDS)

    def to_json_dict(self) -> dict:
        return {kind: getattr(self, kind) for kind in STATIC_KINDS}

    @classmethod
    def from_json_dict(cls, data: dict) -> "StaticTuple":
        return cls(**{kind: data[kind] for kind in STATIC_KINDS})


@dataclass(frozen=True, slots=True)
class BehaviorTuple:
    """Behavior pattern: four vocabulary tokens plus the duration bin."""

    speed_pattern: str
    course_pattern: str
    heading_pattern: str
    intent: str
    duration_lower: int

    def tokens(self) -> tuple[str, str, str, str]:
        return (
            self.speed_pattern,
            self.course_pattern,
            self.heading_pattern,
            self.intent,
        )

    def duration_token(self) -> str:
        return duration_bin_token(self.duration_lower)

    def describe(self) -> str:
        return (
            f"speed {self.speed_pattern} | course {self.course_pattern}"
            f" | heading {self.heading_pattern} | intent {self.intent}"
            f" | duration {self.duration_token()}"
        )

    def to_json_dict(self) -> dict:
        return {
            "speed_pattern": self.speed_pattern,
            "course_pattern": self.course_pattern,
            "heading_pattern": self.heading_pattern,
            "intent": self.intent,
            "duration_lower": self.duration_lower,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "BehaviorTuple":
        return cls(
            speed_pattern=data["speed_pattern"],
            course_pattern=data["course_pattern"],
            heading_pattern=data["heading_pattern"],
            intent=data["intent"],
            duration_lower=int(data["duration_lower"]),
        )


@dataclass
class KnowledgeUnit:
    """The semantic unit distilled from one complete segment.

    ``func`` is ``None`` for context-only units (derived at imputation time
    purely to describe a gap's neighbors); such units are never committed
    to the graph.
    """

    static: StaticTuple
    behavior: BehaviorTuple
    func: ImputationMethod | None
    source: tuple[str, int]  # (vessel_id, segment_index)
