"""Command-line surface for the batch pipeline.

Exit codes: 0 success, 1 I/O failure, 2 configuration or usage error,
3 evaluation coverage failure. Stats are written even when a stage ends
with quarantined jobs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import baselines, metrics
from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    IncompatibleSnapshot,
    InvalidParameter,
    MissingOutcome,
    OracleUnavailable,
    UnknownNode,
    VistaError,
)
from .geofence import DEFAULT_PRIORITY, GeofenceIndex
from .io import (
    append_jsonl,
    read_ais_csv,
    read_jsonl,
    read_masks,
    write_ais_csv,
    write_masks,
)
from .kg import SdKg, to_dot
from .oracle import HttpOracle, Oracle, StubOracle
from .records import VesselSequence
from .segments import apply_block_missingness, partition
from .workflow import run_build, run_impute

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_COVERAGE = 3


def _build_oracle(config: RunConfig) -> Oracle:
    if config.oracle_backend == "stub":
        return Oracle(StubOracle(seed=config.seed))
    if config.oracle_backend == "http":
        return Oracle(
            HttpOracle(url=config.oracle_url or None, model=config.oracle_model or None)
        )
    raise ConfigError(f"unknown oracle backend {config.oracle_backend!r}")


def _build_geofence(config: RunConfig) -> GeofenceIndex:
    if not config.geofence_path:
        return GeofenceIndex.empty()
    priority = config.priority_list() or DEFAULT_PRIORITY
    return GeofenceIndex.from_geojson(config.geofence_path, priority=priority)


def _write_stats(path: Path, stats) -> None:
    path.write_text(json.dumps(stats.to_json_dict(), indent=2, sort_keys=True) + "\n")


def _write_quarantine(path: Path, records) -> None:
    path.write_text(
        "".join(json.dumps(rec.to_json_dict(), sort_keys=True) + "\n" for rec in records)
    )


def cmd_mask(args) -> int:
    sequences = read_ais_csv(args.input)
    masked_sequences = []
    masks = []
    for seq in sequences:
        segments = partition(seq, args.m)
        if not segments:
            continue
        masked, mask = apply_block_missingness(segments, args.prob, args.seed)
        records = tuple(rec for seg in masked for rec in seg.records)
        # Trailing remainder records ride along unmodified.
        tail = seq.records[len(records) :]
        masked_sequences.append(
            VesselSequence(vessel_id=seq.vessel_id, records=records + tail)
        )
        masks.append(mask)
    write_masks(args.out, masks)
    masked_out = args.masked_out or str(Path(args.out).with_suffix(".csv"))
    write_ais_csv(masked_out, masked_sequences)
    print(f"wrote {args.out} and {masked_out} ({len(masks)} vessels)")
    return EXIT_OK


def cmd_build_kg(args, config: RunConfig) -> int:
    sequences = read_ais_csv(args.input)
    oracle = _build_oracle(config)
    geofence = _build_geofence(config)
    kg = SdKg() if not args.resume else SdKg.load(args.kg)
    result = run_build(sequences, kg, config.scheduler(), oracle, geofence=geofence)
    kg_path = Path(args.kg)
    result.kg.save(kg_path)
    _write_stats(Path(args.stats or kg_path.with_name("stats.json")), result.stats)
    _write_quarantine(
        Path(args.quarantine or kg_path.with_name("quarantine.jsonl")),
        result.quarantine,
    )
    print(
        f"built graph: {result.stats.kg_nodes} nodes, {result.stats.kg_edges} edges,"
        f" {result.stats.committed} units committed,"
        f" {result.stats.quarantined} quarantined"
    )
    return EXIT_OK


def cmd_impute(args, config: RunConfig) -> int:
    sequences = read_ais_csv(args.input)
    masks = read_masks(args.mask)
    kg = SdKg.load(args.kg)
    oracle = _build_oracle(config)
    geofence = _build_geofence(config)
    out_path = Path(args.out)
    out_path.write_text("")
    result = run_impute(
        sequences,
        masks,
        kg,
        None,
        config.scheduler(),
        oracle,
        outcome_sink=lambda outcome: append_jsonl(out_path, outcome),
        geofence=geofence,
    )
    _write_stats(Path(args.stats or out_path.with_name("stats.json")), result.stats)
    _write_quarantine(
        Path(args.quarantine or out_path.with_name("quarantine.jsonl")),
        result.quarantine,
    )
    print(
        f"imputed {result.stats.committed} gaps"
        f" ({result.stats.quarantined} quarantined) -> {out_path}"
    )
    return EXIT_OK


def _baseline_outcomes(truth, masks, m):
    """Run the three rule-based imputers on every masked gap."""
    by_method: dict[str, list[dict]] = {"lin-itp": [], "akima": [], "kalman": []}
    for seq in truth:
        mask = masks.get(seq.vessel_id)
        if mask is None:
            continue
        seg_len = m or mask.m
        segments = partition(seq, seg_len)
        gap_set = set(mask.gap_indices())
        known = [
            (float(rec.timestamp), rec.lat, rec.lon)
            for k, seg in enumerate(segments)
            if k not in gap_set
            for rec in seg.records
        ]
        known_times = {fix[0] for fix in known}
        all_gap_times = [
            float(rec.timestamp)
            for k in sorted(gap_set)
            if k < len(segments)
            for rec in segments[k].records
        ]
        kalman_points = {}
        if len(known) >= 2 and all_gap_times:
            smoothed = baselines.kalman(known, all_gap_times)
            kalman_points = dict(zip(all_gap_times, smoothed))
        for k in sorted(gap_set):
            if k >= len(segments):
                continue
            times = [float(rec.timestamp) for rec in segments[k].records]
            before = [fix for fix in known if fix[0] < times[0]]
            after = [fix for fix in known if fix[0] > times[-1]]
            # One-sided gaps: anchor the line on the two nearest fixes of the
            # available side (extrapolation), matching the fallback imputer.
            if before and after:
                anchors = (before[-1], after[0])
            elif len(before) >= 2:
                anchors = (before[-2], before[-1])
            elif len(after) >= 2:
                anchors = (after[0], after[1])
            else:
                continue
            (t0, lat0, lon0), (t1, lat1, lon1) = anchors
            lin_points = baselines.lin_itp(
                ((lat0, lon0), (lat1, lon1)), [t - t0 for t in times], t1 - t0
            )
            if before and after:
                akima_points = baselines.akima(known, times).points
            else:
                akima_points = lin_points
            for name, points in (
                ("lin-itp", lin_points),
                ("akima", akima_points),
                ("kalman", [kalman_points[t] for t in times]),
            ):
                by_method[name].append(
                    {
                        "vessel_id": seq.vessel_id,
                        "segment_index": k,
                        "points": [
                            [lat, lon, int(t)] for (lat, lon), t in zip(points, times)
                        ],
                    }
                )
    return by_method


def cmd_eval(args) -> int:
    truth = read_ais_csv(args.truth)
    outcomes = read_jsonl(args.outcomes)
    masks = read_masks(args.mask)
    report = metrics.evaluate(truth, outcomes, masks)
    payload = {"subject": report.to_json_dict(), "config": {"mask": args.mask}}
    rows = [("subject", report)]
    if args.with_baselines:
        m = next(iter(masks.values())).m if masks else None
        for name, baseline_outcomes in _baseline_outcomes(truth, masks, m).items():
            baseline_report = metrics.evaluate(
                truth, baseline_outcomes, masks, allow_missing=True
            )
            payload[name] = baseline_report.to_json_dict()
            rows.append((name, baseline_report))
    Path(args.report).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    header = f"{'method':>10} {'mae_lat':>12} {'mae_lon':>12} {'rmse_lat':>12} {'rmse_lon':>12} {'mhd_km':>12}"
    print(header)
    for name, rep in rows:
        print(
            f"{name:>10} {rep.mae_lat:>12.6g} {rep.mae_lon:>12.6g}"
            f" {rep.rmse_lat:>12.6g} {rep.rmse_lon:>12.6g} {rep.mhd:>12.6g}"
        )
    return EXIT_OK


def cmd_export_dot(args) -> int:
    kg = SdKg.load(args.kg)
    if args.nodes:
        node_ids = [int(part) for part in args.nodes.split(",") if part.strip()]
    else:
        node_ids = []
    fragment = kg.induced_subgraph(node_ids)
    text = to_dot(fragment)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vista",
        description="Knowledge-driven vessel trajectory imputation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_mask = sub.add_parser("mask", help="apply seeded block missingness to a CSV")
    p_mask.add_argument("--input", required=True, help="AIS CSV to mask")
    p_mask.add_argument("--prob", type=float, required=True, help="removal probability")
    p_mask.add_argument("--seed", type=int, default=0)
    p_mask.add_argument("--m", type=int, default=20, help="segment length")
    p_mask.add_argument("--out", required=True, help="mask JSON path")
    p_mask.add_argument("--masked-out", help="masked CSV path (default: out with .csv)")

    p_build = sub.add_parser("build-kg", help="extract knowledge units into a graph")
    p_build.add_argument("--input", required=True)
    p_build.add_argument("--kg", required=True, help="graph snapshot path")
    p_build.add_argument("--batch", type=int, help="micro-batch size")
    p_build.add_argument("--oracle", choices=["stub", "http"], help="oracle backend")
    p_build.add_argument("--config", help="key=value config file")
    p_build.add_argument("--geofence", help="GeoJSON geofence file")
    p_build.add_argument("--stats", help="stats JSON path")
    p_build.add_argument("--quarantine", help="quarantine JSONL path")
    p_build.add_argument(
        "--resume", action="store_true", help="update an existing snapshot"
    )

    p_impute = sub.add_parser("impute", help="reconstruct masked segments")
    p_impute.add_argument("--input", required=True, help="masked AIS CSV")
    p_impute.add_argument("--mask", required=True, help="mask JSON")
    p_impute.add_argument("--kg", required=True)
    p_impute.add_argument("--out", required=True, help="outcomes JSONL path")
    p_impute.add_argument("--batch", type=int)
    p_impute.add_argument("--oracle", choices=["stub", "http"])
    p_impute.add_argument("--config", help="key=value config file")
    p_impute.add_argument("--geofence")
    p_impute.add_argument("--stats")
    p_impute.add_argument("--quarantine")

    p_eval = sub.add_parser("eval", help="score outcomes against ground truth")
    p_eval.add_argument("--truth", required=True, help="unmasked AIS CSV")
    p_eval.add_argument("--outcomes", required=True, help="outcomes JSONL")
    p_eval.add_argument("--mask", required=True)
    p_eval.add_argument("--report", required=True, help="report JSON path")
    p_eval.add_argument(
        "--with-baselines",
        action="store_true",
        help="also run lin-itp, akima and kalman on the same gaps",
    )

    p_dot = sub.add_parser("export-dot", help="export an induced subgraph as DOT")
    p_dot.add_argument("--kg", required=True)
    p_dot.add_argument("--nodes", default="", help="comma-separated node ids")
    p_dot.add_argument("--out", help="output path (default: stdout)")

    return parser


def _config_from_args(args) -> RunConfig:
    overrides = {
        "batch_size": getattr(args, "batch", None),
        "oracle_backend": getattr(args, "oracle", None),
        "geofence_path": getattr(args, "geofence", None),
    }
    return load_config(getattr(args, "config", None), overrides)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "mask":
            return cmd_mask(args)
        if args.command == "build-kg":
            return cmd_build_kg(args, _config_from_args(args))
        if args.command == "impute":
            return cmd_impute(args, _config_from_args(args))
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "export-dot":
            return cmd_export_dot(args)
        parser.error(f"unknown command {args.command}")
    except MissingOutcome as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COVERAGE
    except (ConfigError, IncompatibleSnapshot, UnknownNode, InvalidParameter, OracleUnavailable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except VistaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
