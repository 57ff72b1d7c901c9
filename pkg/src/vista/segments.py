"""Segmentation, masking and synthetic track generation.

Partitioning covers the longest prefix divisible by the segment length;
a trailing remainder is excluded from both knowledge extraction and
imputation and surfaced through a warning (and through
``partition_with_remainder`` for callers that want the leftover records).
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .errors import EmptyInput, InvalidParameter
from .records import AisRecord, MinimalSegment, ObservationMask, VesselSequence

log = logging.getLogger(__name__)


def partition_with_remainder(
    sequence: VesselSequence, m: int
) -> tuple[list[MinimalSegment], list[AisRecord]]:
    """Split a sequence into floor(T/m) segments plus the leftover records."""
    if m < 2:
        raise InvalidParameter(f"segment length must be >= 2, got {m}")
    if len(sequence) == 0:
        raise EmptyInput("cannot partition an empty sequence")
    count = len(sequence) // m
    segments = [
        MinimalSegment(
            vessel_id=sequence.vessel_id,
            segment_index=k,
            records=tuple(sequence.records[k * m : (k + 1) * m]),
            m=m,
        )
        for k in range(count)
    ]
    remainder = list(sequence.records[count * m :])
    return segments, remainder


def partition(sequence: VesselSequence, m: int) -> list[MinimalSegment]:
    segments, remainder = partition_with_remainder(sequence, m)
    if remainder:
        log.warning(
            "vessel %s: %d trailing records (< m=%d) excluded from segmentation",
            sequence.vessel_id,
            len(remainder),
            m,
        )
    return segments


def compute_mask(segments: list[MinimalSegment]) -> ObservationMask:
    """Derive the completeness bits and per-record evaluation flags.

    A record is flagged for evaluation when its segment is incomplete and
    the record itself lost its coordinates (the only values the pipeline
    reconstructs).
    """
    if not segments:
        raise EmptyInput("no segments to mask")
    vessel_id = segments[0].vessel_id
    m = segments[0].m
    bits: list[int] = []
    internal: list[list[int]] = []
    for seg in segments:
        complete = seg.is_complete()
        bits.append(1 if complete else 0)
        if complete:
            internal.append([0] * seg.m)
        else:
            internal.append([0 if rec.has_position() else 1 for rec in seg.records])
    return ObservationMask(vessel_id=vessel_id, m=m, bits=bits, internal=internal)


def apply_block_missingness(
    segments: list[MinimalSegment], removal_prob: float, rng_seed: int
) -> tuple[list[MinimalSegment], ObservationMask]:
    """Remove whole segments independently with the given probability.

    A removed segment keeps its timestamps (the gap's schedule) but loses
    every other attribute. Deterministic for a fixed seed.
    """
    if not 0.0 <= removal_prob <= 1.0:
        raise InvalidParameter(f"removal probability out of [0, 1]: {removal_prob}")
    if not segments:
        raise EmptyInput("no segments")
    rng = np.random.default_rng(rng_seed)
    draws = rng.random(len(segments))
    masked: list[MinimalSegment] = []
    for seg, draw in zip(segments, draws):
        if draw < removal_prob:
            masked.append(
                MinimalSegment(
                    vessel_id=seg.vessel_id,
                    segment_index=seg.segment_index,
                    records=tuple(rec.cleared() for rec in seg.records),
                    m=seg.m,
                )
            )
        else:
            masked.append(seg)
    mask = compute_mask(masked)
    mask.seed = rng_seed
    mask.removal_prob = removal_prob
    return masked, mask


def _course_degrees(dlat: float, dlon: float) -> float:
    """Flat-plane course: 0 = increasing latitude, clockwise toward east."""
    return math.degrees(math.atan2(dlon, dlat)) % 360.0


# Nominal knots per (degree/second): one degree ~ 60 nautical miles.
_KNOTS_PER_DEG_S = 3600.0 * 60.0

_STATIC_DEFAULTS = dict(
    nav_status="under way using engine",
    cargo_type="none",
    draught=5.3,
    length=120.0,
    width=20.0,
    ship_type="cargo",
)


def generate_synthetic_track(
    kind: str,
    n: int,
    *,
    vessel_id: str = "V0",
    start: tuple[float, float] = (55.0, 10.0),
    velocity: tuple[float, float] = (0.001, 0.002),
    speed: float = 5e-4,
    heading0: float = 45.0,
    turn_rate: float = 0.0,
    sigma: float = 0.0,
    dt: int = 10,
    t0: int = 1_700_000_000,
    rng_seed: int = 0,
    **static_overrides,
) -> VesselSequence:
    """Build a fully complete track with analytically known ground truth.

    kinds:
      constant-velocity  linear in (lat, lon) vs time; ``velocity`` is the
                         per-step (dlat, dlon) in degrees.
      constant-turn      circular arc: per-step path ``speed`` (degrees) with
                         heading starting at ``heading0`` and turning
                         ``turn_rate`` degrees per step. turn_rate 0 degrades
                         to a straight line.
      noisy-linear       constant-velocity plus seeded Gaussian noise of
                         standard deviation ``sigma`` degrees on both axes.
    """
    if n < 2:
        raise InvalidParameter(f"need at least 2 points, got {n}")
    statics = dict(_STATIC_DEFAULTS)
    statics.update(static_overrides)
    lat0, lon0 = start

    points: list[tuple[float, float, float]] = []  # (lat, lon, course_deg)
    if kind == "constant-velocity" or kind == "noisy-linear":
        dlat, dlon = velocity
        course = _course_degrees(dlat, dlon)
        sog = math.hypot(dlat, dlon) / dt * _KNOTS_PER_DEG_S
        for t in range(n):
            points.append((lat0 + dlat * t, lon0 + dlon * t, course))
        if kind == "noisy-linear" and sigma > 0.0:
            rng = np.random.default_rng(rng_seed)
            noise = rng.normal(0.0, sigma, size=(n, 2))
            points = [
                (lat + noise[t, 0], lon + noise[t, 1], course)
                for t, (lat, lon, course) in enumerate(points)
            ]
    elif kind == "constant-turn":
        h0 = math.radians(heading0)
        omega = math.radians(turn_rate)  # radians per step
        sog = speed / dt * _KNOTS_PER_DEG_S
        for t in range(n):
            h_t = h0 + omega * t
            if omega == 0.0:
                lat = lat0 + speed * t * math.cos(h0)
                lon = lon0 + speed * t * math.sin(h0)
            else:
                lat = lat0 + (speed / omega) * (math.sin(h_t) - math.sin(h0))
                lon = lon0 + (speed / omega) * (math.cos(h0) - math.cos(h_t))
            points.append((lat, lon, math.degrees(h_t) % 360.0))
    else:
        raise InvalidParameter(f"unknown synthetic track kind: {kind!r}")

    records = tuple(
        AisRecord(
            vessel_id=vessel_id,
            timestamp=t0 + dt * t,
            lat=lat,
            lon=lon,
            heading=course,
            course=course,
            speed=sog,
            **statics,
        )
        for t, (lat, lon, course) in enumerate(points)
    )
    return VesselSequence(vessel_id=vessel_id, records=records)
