"""File formats: AIS CSV, mask JSON, outcome JSONL and quarantine JSONL.

CSV header is fixed: ``mmsi,timestamp,lat,lon,sog,cog,heading,nav_status,
cargo_type,draught,length,width,ship_type``. An empty cell means the field
is absent. Timestamps may be epoch seconds or ISO-8601; the format is
auto-detected once per file.
"""

from __future__ import annotations

import csv
import json
from datetime import datetime, timezone
from pathlib import Path

from .errors import InvalidParameter
from .records import AisRecord, ObservationMask, VesselSequence

CSV_HEADER = [
    "mmsi",
    "timestamp",
    "lat",
    "lon",
    "sog",
    "cog",
    "heading",
    "nav_status",
    "cargo_type",
    "draught",
    "length",
    "width",
    "ship_type",
]

_FLOAT_COLUMNS = {
    "lat": "lat",
    "lon": "lon",
    "sog": "speed",
    "cog": "course",
    "heading": "heading",
    "draught": "draught",
    "length": "length",
    "width": "width",
}
_TEXT_COLUMNS = {
    "nav_status": "nav_status",
    "cargo_type": "cargo_type",
    "ship_type": "ship_type",
}


def _parse_timestamp(raw: str, iso_mode: bool) -> int:
    if iso_mode:
        stamp = datetime.fromisoformat(raw.replace("Z", "+00:00"))
        if stamp.tzinfo is None:
            stamp = stamp.replace(tzinfo=timezone.utc)
        return int(stamp.timestamp())
    return int(raw)


def read_ais_csv(path: str | Path) -> list[VesselSequence]:
    """Load an AIS CSV into per-vessel sequences sorted by timestamp."""
    path = Path(path)
    by_vessel: dict[str, list[AisRecord]] = {}
    iso_mode: bool | None = None
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        missing = [col for col in CSV_HEADER if col not in (reader.fieldnames or [])]
        if missing:
            raise InvalidParameter(f"{path}: missing CSV columns {missing}")
        for row in reader:
            raw_ts = (row["timestamp"] or "").strip()
            if not raw_ts:
                raise InvalidParameter(f"{path}: record without timestamp")
            if iso_mode is None:
                try:
                    int(raw_ts)
                    iso_mode = False
                except ValueError:
                    iso_mode = True
            kwargs: dict = {
                "vessel_id": (row["mmsi"] or "").strip(),
                "timestamp": _parse_timestamp(raw_ts, iso_mode),
            }
            for col, attr in _FLOAT_COLUMNS.items():
                cell = (row[col] or "").strip()
                kwargs[attr] = float(cell) if cell else None
            for col, attr in _TEXT_COLUMNS.items():
                cell = (row[col] or "").strip()
                kwargs[attr] = cell if cell else None
            if not kwargs["vessel_id"]:
                raise InvalidParameter(f"{path}: record without mmsi")
            by_vessel.setdefault(kwargs["vessel_id"], []).append(AisRecord(**kwargs))
    sequences = []
    for vessel_id in sorted(by_vessel):
        records = sorted(by_vessel[vessel_id], key=lambda rec: rec.timestamp)
        sequences.append(VesselSequence(vessel_id=vessel_id, records=tuple(records)))
    return sequences


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_ais_csv(path: str | Path, sequences: list[VesselSequence]) -> None:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_HEADER)
        for seq in sequences:
            for rec in seq.records:
                writer.writerow(
                    [
                        rec.vessel_id,
                        rec.timestamp,
                        _cell(rec.lat),
                        _cell(rec.lon),
                        _cell(rec.speed),
                        _cell(rec.course),
                        _cell(rec.heading),
                        _cell(rec.nav_status),
                        _cell(rec.cargo_type),
                        _cell(rec.draught),
                        _cell(rec.length),
                        _cell(rec.width),
                        _cell(rec.ship_type),
                    ]
                )


def write_masks(path: str | Path, masks: list[ObservationMask]) -> None:
    """Persist masks as a JSON array of per-vessel objects."""
    payload = [mask.to_json_dict() for mask in masks]
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_masks(path: str | Path) -> dict[str, ObservationMask]:
    raw = json.loads(Path(path).read_text())
    if isinstance(raw, dict):
        raw = [raw]
    masks: dict[str, ObservationMask] = {}
    for entry in raw:
        masks[entry["vessel_id"]] = ObservationMask(
            vessel_id=entry["vessel_id"],
            m=int(entry["m"]),
            bits=[int(b) for b in entry["bits"]],
            seed=entry.get("seed"),
            removal_prob=entry.get("removal_prob"),
        )
    return masks


def append_jsonl(path: str | Path, obj: dict) -> None:
    with Path(path).open("a") as handle:
        handle.write(json.dumps(obj, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    return [json.loads(line) for line in lines if line.strip()]
