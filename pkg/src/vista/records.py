"""Core AIS data model: records, per-vessel sequences, fixed-length segments
and the segment-level observation mask.

A record's field is *absent* when its attribute is ``None``; there are no
magic sentinel values (real AIS feeds use them inconsistently, which makes
completeness untestable). ``vessel_id`` and ``timestamp`` are always
present: even a record whose position was removed keeps its place on the
time grid so imputers know the gap's schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import EmptyInput, InvalidParameter

#: Names of the attributes that participate in the completeness check.
OPTIONAL_FIELDS = (
    "lat",
    "lon",
    "heading",
    "course",
    "speed",
    "nav_status",
    "cargo_type",
    "draught",
    "length",
    "width",
    "ship_type",
)


@dataclass(frozen=True, slots=True)
class AisRecord:
    """One AIS position report. ``None`` marks an absent attribute."""

    vessel_id: str
    timestamp: int  # UTC epoch seconds
    lat: float | None = None
    lon: float | None = None
    heading: float | None = None  # degrees [0, 360)
    course: float | None = None  # degrees [0, 360)
    speed: float | None = None  # knots, >= 0
    nav_status: str | None = None
    cargo_type: str | None = None
    draught: float | None = None  # meters, >= 0
    length: float | None = None  # meters, > 0
    width: float | None = None  # meters, > 0
    ship_type: str | None = None

    def __post_init__(self):
        if self.lat is not None and not -90.0 <= self.lat <= 90.0:
            raise InvalidParameter(f"latitude out of range: {self.lat}")
        if self.lon is not None and not -180.0 <= self.lon <= 180.0:
            raise InvalidParameter(f"longitude out of range: {self.lon}")
        if self.heading is not None and not 0.0 <= self.heading < 360.0:
            raise InvalidParameter(f"heading out of range: {self.heading}")
        if self.course is not None and not 0.0 <= self.course < 360.0:
            raise InvalidParameter(f"course out of range: {self.course}")
        if self.speed is not None and self.speed < 0.0:
            raise InvalidParameter(f"negative speed: {self.speed}")
        if self.draught is not None and self.draught < 0.0:
            raise InvalidParameter(f"negative draught: {self.draught}")
        if self.length is not None and self.length <= 0.0:
            raise InvalidParameter(f"non-positive length: {self.length}")
        if self.width is not None and self.width <= 0.0:
            raise InvalidParameter(f"non-positive width: {self.width}")

    def is_complete(self) -> bool:
        return all(getattr(self, name) is not None for name in OPTIONAL_FIELDS)

    def has_position(self) -> bool:
        return self.lat is not None and self.lon is not None

    def cleared(self) -> "AisRecord":
        """Copy with every optional attribute removed; the time slot survives."""
        return replace(self, **{name: None for name in OPTIONAL_FIELDS})


@dataclass(frozen=True, slots=True)
class VesselSequence:
    """Time-ordered record sequence of a single vessel."""

    vessel_id: str
    records: tuple[AisRecord, ...]

    def __post_init__(self):
        if not self.records:
            raise EmptyInput("vessel sequence has no records")
        for rec in self.records:
            if rec.vessel_id != self.vessel_id:
                raise InvalidParameter(
                    f"record vessel {rec.vessel_id!r} in sequence {self.vessel_id!r}"
                )
        times = [rec.timestamp for rec in self.records]
        for a, b in zip(times, times[1:]):
            if a >= b:
                raise InvalidParameter(
                    f"timestamps not strictly increasing: {a} then {b}"
                )

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True, slots=True)
class MinimalSegment:
    """Fixed-length block of consecutive records: the atomic unit of missingness."""

    vessel_id: str
    segment_index: int
    records: tuple[AisRecord, ...]
    m: int

    def __post_init__(self):
        if len(self.records) != self.m:
            raise InvalidParameter(
                f"segment holds {len(self.records)} records, expected m={self.m}"
            )
        times = [rec.timestamp for rec in self.records]
        for a, b in zip(times, times[1:]):
            if a >= b:
                raise InvalidParameter("segment timestamps not strictly increasing")

    def is_complete(self) -> bool:
        return all(rec.is_complete() for rec in self.records)

    def timestamps(self) -> list[int]:
        return [rec.timestamp for rec in self.records]

    def span_seconds(self) -> int:
        return self.records[-1].timestamp - self.records[0].timestamp


@dataclass(slots=True)
class ObservationMask:
    """Per-segment completeness bits plus the per-record evaluation flags.

    ``bits[k] == 1`` iff every record of segment k has all attributes
    present. ``internal[k][j] == 1`` flags records whose coordinates were
    removed and therefore need evaluation after imputation; only the
    metrics layer consumes it.
    """

    vessel_id: str
    m: int
    bits: list[int]
    internal: list[list[int]] = field(default_factory=list)
    seed: int | None = None
    removal_prob: float | None = None

    def gap_indices(self) -> list[int]:
        return [k for k, bit in enumerate(self.bits) if bit == 0]

    def to_json_dict(self) -> dict:
        return {
            "vessel_id": self.vessel_id,
            "m": self.m,
            "bits": list(self.bits),
            "seed": self.seed,
            "removal_prob": self.removal_prob,
        }
