"""Masked evaluation metrics: axis-wise MAE and RMSE in degrees, and the
mean haversine distance in kilometers over exactly the imputed timestamps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import EmptyInput, MissingOutcome
from .records import ObservationMask, VesselSequence

EARTH_RADIUS_KM = 6371.0


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance on the mean-radius sphere."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    hav = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(
        dlam / 2.0
    ) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(hav))


@dataclass
class MetricReport:
    mae_lat: float
    mae_lon: float
    rmse_lat: float
    rmse_lon: float
    mhd: float
    n: int

    def to_json_dict(self) -> dict:
        return {
            "mae_lat": self.mae_lat,
            "mae_lon": self.mae_lon,
            "rmse_lat": self.rmse_lat,
            "rmse_lon": self.rmse_lon,
            "mhd": self.mhd,
            "n": self.n,
        }


def report_from_pairs(
    pairs: list[tuple[tuple[float, float], tuple[float, float]]]
) -> MetricReport:
    """Build a report from (truth, imputed) coordinate pairs."""
    if not pairs:
        raise EmptyInput("no evaluation points")
    n = len(pairs)
    abs_lat = [abs(t[0] - p[0]) for t, p in pairs]
    abs_lon = [abs(t[1] - p[1]) for t, p in pairs]
    sq_lat = [(t[0] - p[0]) ** 2 for t, p in pairs]
    sq_lon = [(t[1] - p[1]) ** 2 for t, p in pairs]
    distances = [haversine_km(t[0], t[1], p[0], p[1]) for t, p in pairs]
    return MetricReport(
        mae_lat=sum(abs_lat) / n,
        mae_lon=sum(abs_lon) / n,
        rmse_lat=math.sqrt(sum(sq_lat) / n),
        rmse_lon=math.sqrt(sum(sq_lon) / n),
        mhd=sum(distances) / n,
        n=n,
    )


def evaluate(
    truth: list[VesselSequence],
    outcomes: list[dict],
    masks: dict[str, ObservationMask],
    *,
    m: int | None = None,
    allow_missing: bool = False,
) -> MetricReport:
    """Score imputed points against the ground truth at masked timestamps.

    ``outcomes`` are outcome dicts (the JSONL schema). Every masked segment
    must be covered unless ``allow_missing`` is set; extra outcomes at
    unmasked positions are ignored, so only the masked index set counts.
    """
    truth_by_vessel = {seq.vessel_id: seq for seq in truth}
    imputed: dict[tuple[str, int], dict[int, tuple[float, float]]] = {}
    for outcome in outcomes:
        key = (outcome["vessel_id"], int(outcome["segment_index"]))
        imputed[key] = {
            int(ts): (float(lat), float(lon)) for lat, lon, ts in outcome["points"]
        }

    pairs: list[tuple[tuple[float, float], tuple[float, float]]] = []
    for vessel_id, mask in masks.items():
        sequence = truth_by_vessel.get(vessel_id)
        if sequence is None:
            raise MissingOutcome(f"no ground truth for vessel {vessel_id}")
        seg_len = m or mask.m
        for k in mask.gap_indices():
            key = (vessel_id, k)
            if key not in imputed:
                if allow_missing:
                    continue
                raise MissingOutcome(f"no outcome for vessel {vessel_id} segment {k}")
            flags = mask.internal[k] if k < len(mask.internal) and mask.internal else [1] * seg_len
            segment_records = sequence.records[k * seg_len : (k + 1) * seg_len]
            points = imputed[key]
            for j, rec in enumerate(segment_records):
                if j < len(flags) and not flags[j]:
                    continue
                if rec.timestamp not in points:
                    if allow_missing:
                        continue
                    raise MissingOutcome(
                        f"outcome for {vessel_id}/{k} lacks timestamp {rec.timestamp}"
                    )
                pairs.append(((rec.lat, rec.lon), points[rec.timestamp]))
    return report_from_pairs(pairs)
