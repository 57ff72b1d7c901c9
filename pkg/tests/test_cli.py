from __future__ import annotations

import json

import pytest

from vista import generate_synthetic_track
from vista.cli import main
from vista.io import read_jsonl, read_masks, write_ais_csv


@pytest.fixture
def dataset_csv(tmp_path):
    tracks = [
        generate_synthetic_track(
            "constant-velocity", 100, vessel_id=f"V{i}",
            start=(55.0 + 0.1 * i, 10.0), velocity=(0.001, 0.002),
        )
        for i in range(2)
    ]
    path = tmp_path / "ais.csv"
    write_ais_csv(path, tracks)
    return path


def _run_mask(tmp_path, dataset_csv, prob="0.4", seed="7"):
    mask_path = tmp_path / "mask.json"
    masked_csv = tmp_path / "masked.csv"
    code = main(
        [
            "mask", "--input", str(dataset_csv), "--prob", prob, "--seed", seed,
            "--m", "20", "--out", str(mask_path), "--masked-out", str(masked_csv),
        ]
    )
    return code, mask_path, masked_csv


class TestMaskCommand:
    def test_prob_zero_all_ones(self, tmp_path, dataset_csv):
        code, mask_path, _ = _run_mask(tmp_path, dataset_csv, prob="0")
        assert code == 0
        masks = read_masks(mask_path)
        assert all(bit == 1 for mask in masks.values() for bit in mask.bits)

    def test_reproducible_with_seed(self, tmp_path, dataset_csv):
        _, mask_a, _ = _run_mask(tmp_path, dataset_csv)
        bits_a = {v: m.bits for v, m in read_masks(mask_a).items()}
        _, mask_b, _ = _run_mask(tmp_path, dataset_csv)
        bits_b = {v: m.bits for v, m in read_masks(mask_b).items()}
        assert bits_a == bits_b

    def test_invalid_probability_exits_2(self, tmp_path, dataset_csv):
        code, _, _ = _run_mask(tmp_path, dataset_csv, prob="1.5")
        assert code == 2


class TestPipelineCommands:
    def test_full_pipeline(self, tmp_path, dataset_csv):
        code, mask_path, masked_csv = _run_mask(tmp_path, dataset_csv)
        assert code == 0
        kg_path = tmp_path / "kg.json"
        code = main(
            [
                "build-kg", "--input", str(masked_csv), "--kg", str(kg_path),
                "--oracle", "stub", "--batch", "4",
            ]
        )
        assert code == 0
        assert kg_path.exists()
        assert (tmp_path / "stats.json").exists()
        assert (tmp_path / "quarantine.jsonl").exists()
        stats = json.loads((tmp_path / "stats.json").read_text())
        assert stats["kg_nodes"] > 0

        outcomes_path = tmp_path / "outcomes.jsonl"
        code = main(
            [
                "impute", "--input", str(masked_csv), "--mask", str(mask_path),
                "--kg", str(kg_path), "--out", str(outcomes_path),
                "--oracle", "stub", "--batch", "4",
            ]
        )
        assert code == 0
        outcomes = read_jsonl(outcomes_path)
        gaps = sum(m.bits.count(0) for m in read_masks(mask_path).values())
        assert len(outcomes) == gaps

        report_path = tmp_path / "report.json"
        code = main(
            [
                "eval", "--truth", str(dataset_csv), "--outcomes", str(outcomes_path),
                "--mask", str(mask_path), "--report", str(report_path),
                "--with-baselines",
            ]
        )
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["subject"]["mhd"] < 1e-6
        assert {"subject", "lin-itp", "akima", "kalman"} <= set(report)

    def test_no_gaps_empty_outcomes(self, tmp_path, dataset_csv):
        code, mask_path, masked_csv = _run_mask(tmp_path, dataset_csv, prob="0")
        kg_path = tmp_path / "kg.json"
        main(["build-kg", "--input", str(masked_csv), "--kg", str(kg_path)])
        outcomes_path = tmp_path / "outcomes.jsonl"
        code = main(
            [
                "impute", "--input", str(masked_csv), "--mask", str(mask_path),
                "--kg", str(kg_path), "--out", str(outcomes_path),
            ]
        )
        assert code == 0
        assert read_jsonl(outcomes_path) == []

    def test_missing_geofence_exits_2(self, tmp_path, dataset_csv):
        kg_path = tmp_path / "kg.json"
        code = main(
            [
                "build-kg", "--input", str(dataset_csv), "--kg", str(kg_path),
                "--geofence", str(tmp_path / "missing.geojson"),
            ]
        )
        assert code == 2

    def test_kg_version_mismatch_exits_2(self, tmp_path, dataset_csv):
        code, mask_path, masked_csv = _run_mask(tmp_path, dataset_csv)
        kg_path = tmp_path / "kg.json"
        kg_path.write_text(json.dumps({"schema_version": 99}))
        code = main(
            [
                "impute", "--input", str(masked_csv), "--mask", str(mask_path),
                "--kg", str(kg_path), "--out", str(tmp_path / "o.jsonl"),
            ]
        )
        assert code == 2

    def test_unknown_config_key_exits_2(self, tmp_path, dataset_csv):
        config = tmp_path / "run.conf"
        config.write_text("not_a_key=1\n")
        code = main(
            [
                "build-kg", "--input", str(dataset_csv),
                "--kg", str(tmp_path / "kg.json"), "--config", str(config),
            ]
        )
        assert code == 2

    def test_missing_input_exits_1(self, tmp_path):
        code = main(
            [
                "build-kg", "--input", str(tmp_path / "absent.csv"),
                "--kg", str(tmp_path / "kg.json"),
            ]
        )
        assert code == 1


class TestEvalCommand:
    def test_mismatched_vessels_exit_3(self, tmp_path, dataset_csv):
        code, mask_path, masked_csv = _run_mask(tmp_path, dataset_csv)
        outcomes_path = tmp_path / "outcomes.jsonl"
        outcomes_path.write_text("")
        report_path = tmp_path / "report.json"
        code = main(
            [
                "eval", "--truth", str(dataset_csv), "--outcomes", str(outcomes_path),
                "--mask", str(mask_path), "--report", str(report_path),
            ]
        )
        assert code == 3


class TestExportDot:
    def _built_kg(self, tmp_path, dataset_csv):
        _, mask_path, masked_csv = _run_mask(tmp_path, dataset_csv)
        kg_path = tmp_path / "kg.json"
        main(["build-kg", "--input", str(masked_csv), "--kg", str(kg_path)])
        return kg_path

    def test_empty_node_list_empty_digraph(self, tmp_path, dataset_csv, capsys):
        kg_path = self._built_kg(tmp_path, dataset_csv)
        capsys.readouterr()  # drop build output
        code = main(["export-dot", "--kg", str(kg_path), "--nodes", ""])
        assert code == 0
        assert capsys.readouterr().out == "digraph sdkg { }\n"

    def test_byte_determinism(self, tmp_path, dataset_csv):
        kg_path = self._built_kg(tmp_path, dataset_csv)
        kg = json.loads(kg_path.read_text())
        ids = [str(node["id"]) for node in kg["nodes"]["static"][:2]]
        out_a = tmp_path / "a.dot"
        out_b = tmp_path / "b.dot"
        node_arg = ",".join(ids)
        main(["export-dot", "--kg", str(kg_path), "--nodes", node_arg, "--out", str(out_a)])
        main(["export-dot", "--kg", str(kg_path), "--nodes", node_arg, "--out", str(out_b)])
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_unknown_node_exits_2(self, tmp_path, dataset_csv):
        kg_path = self._built_kg(tmp_path, dataset_csv)
        code = main(["export-dot", "--kg", str(kg_path), "--nodes", "999999"])
        assert code == 2
