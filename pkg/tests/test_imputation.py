from __future__ import annotations

import math
from fractions import Fraction

import pytest

from vista import Oracle, StubOracle, generate_synthetic_track, partition
from vista.errors import MalformedOracleOutput, NoCandidates
from vista.imputation import (
    GapContext,
    compose_explanation,
    estimate_behavior,
    execute_imputation,
    extract_context,
    impute_gap,
    select_method,
)
from vista.kg import SdKg
from vista.knowledge import KnowledgeUnit

from conftest import make_behavior, make_static, make_unit, seeded_kg


def _gap_from_track(track, gap_index, m=20):
    segments = partition(track, m)
    gap_segment = segments[gap_index]
    timestamps = gap_segment.timestamps()
    before = [
        rec for rec in track.records if rec.timestamp < timestamps[0]
    ][-5:]
    after = [rec for rec in track.records if rec.timestamp > timestamps[-1]][:5]
    return GapContext(
        vessel_id=track.vessel_id,
        segment_index=gap_index,
        timestamps=timestamps,
        before=before,
        after=after,
    )


class TestExtractContext:
    def test_both_sides(self):
        u0, u2 = make_unit(source=("V", 0)), make_unit(source=("V", 2))
        assert extract_context([u0, None, u2], 1) == (u0, u2)

    def test_edge_gap(self):
        u2 = make_unit(source=("V", 2))
        assert extract_context([None, None, u2], 0) == (None, u2)

    def test_skips_absent_neighbors(self):
        u0, u3 = make_unit(source=("V", 0)), make_unit(source=("V", 3))
        assert extract_context([u0, None, None, u3], 2) == (u0, u3)

    def test_all_absent(self):
        assert extract_context([None, None], 0) == (None, None)


class TestEstimateBehavior:
    def test_single_candidate_selected(self, stub_oracle):
        unit = make_unit()
        kg = seeded_kg([unit] * 3)
        selection = estimate_behavior(kg, (unit, None), stub_oracle)
        assert selection.node_id == kg.behavior_node_id(unit.behavior)
        assert selection.priors[selection.node_id] == 1

    def test_stub_picks_argmax_prior(self, stub_oracle):
        common = make_behavior(intent="common")
        rare = make_behavior(intent="rare")
        units = [make_unit(behavior=common)] * 5 + [make_unit(behavior=rare)]
        kg = seeded_kg(units)
        selection = estimate_behavior(kg, (units[0], None), stub_oracle)
        assert selection.node_id == kg.behavior_node_id(common)
        # Independent recomputation of the priors must agree exactly.
        query = selection.query_ids
        candidates = kg.candidate_behaviors(query)
        assert kg.behavior_prior(query, candidates) == selection.priors

    def test_no_context_raises_no_candidates(self, stub_oracle):
        with pytest.raises(NoCandidates):
            estimate_behavior(seeded_kg([make_unit()]), (None, None), stub_oracle)

    def test_unknown_statics_raise_no_candidates(self, stub_oracle):
        kg = seeded_kg([make_unit()])
        stranger = make_unit(
            static=make_static(
                vessel_id="z", nav_status="zz", cargo_type="zz", draught_bin="[10,12)",
                length_bin="[0,50)", width_bin="[25,30)", ship_type="zz",
                spatial_context="anchorage",
            )
        )
        with pytest.raises(NoCandidates):
            estimate_behavior(kg, (stranger, None), stub_oracle)

    def test_out_of_shortlist_id_is_malformed(self):
        class RogueStub(StubOracle):
            def _behavior_select(self, variables):
                return (
                    "'''\nSelected Movement ID: 99999\n"
                    "Graph Support: (1->2,w=1)\nContextual Justification: x\n'''"
                )

        unit = make_unit()
        kg = seeded_kg([unit])
        with pytest.raises(MalformedOracleOutput):
            estimate_behavior(kg, (unit, None), Oracle(RogueStub()))

    def test_fabricated_support_edge_is_malformed(self):
        class FabricatingStub(StubOracle):
            def _behavior_select(self, variables):
                import re

                selected = re.search(r"Movement_Pattern_(\d+)", variables["movement_text"])
                return (
                    f"'''\nSelected Movement ID: {selected.group(1)}\n"
                    "Graph Support: (123->456,w=9)\n"
                    "Contextual Justification: invented\n'''"
                )

        unit = make_unit()
        kg = seeded_kg([unit])
        with pytest.raises(MalformedOracleOutput):
            estimate_behavior(kg, (unit, None), Oracle(FabricatingStub()))

    def test_vessel_id_excluded_from_query_by_default(self, stub_oracle):
        unit = make_unit()
        kg = seeded_kg([unit])
        selection = estimate_behavior(kg, (unit, None), stub_oracle)
        kinds = {kg.node(node_id).attr_kind for node_id in selection.query_ids}
        assert "vessel_id" not in kinds
        wider = estimate_behavior(
            kg, (unit, None), stub_oracle, include_vessel_id=True
        )
        wider_kinds = {kg.node(n).attr_kind for n in wider.query_ids}
        assert "vessel_id" in wider_kinds


class TestSelectMethod:
    def test_single_candidate_probability_one(self, stub_oracle):
        unit = make_unit()
        kg = seeded_kg([unit])
        behavior_id = kg.behavior_node_id(unit.behavior)
        selection = select_method(kg, behavior_id, stub_oracle)
        assert selection.priors[selection.node_id] == 1
        assert "1" in selection.statistical_support

    def test_three_one_weights_give_two_thirds(self, stub_oracle):
        from vista.functions import constant_turn_spec, linear_spec

        behavior = make_behavior()
        units = [make_unit(behavior=behavior, spec=linear_spec())] * 3 + [
            make_unit(behavior=behavior, spec=constant_turn_spec(1e-3))
        ]
        kg = seeded_kg(units)
        behavior_id = kg.behavior_node_id(behavior)
        selection = select_method(kg, behavior_id, stub_oracle)
        assert selection.node_id == kg.function_node_id(linear_spec())
        assert selection.priors[selection.node_id] == Fraction(2, 3)
        assert "(3+1)/((3+1)+(1+1))" in selection.statistical_support
        assert "2/3" in selection.statistical_support

    def test_no_linked_functions(self, stub_oracle):
        kg = seeded_kg([make_unit()])
        behavior_id = kg._get_or_create_behavior(make_behavior(intent="orphan"))
        with pytest.raises(NoCandidates):
            select_method(kg, behavior_id, stub_oracle)


class TestExecuteImputation:
    def test_linear_gap_reconstruction_is_exact(self):
        track = generate_synthetic_track("constant-velocity", 60)
        unit = make_unit()
        kg = seeded_kg([unit])
        func_id = kg.function_nodes()[0].node_id
        gap = _gap_from_track(track, 1)
        points = execute_imputation(kg, func_id, gap)
        assert len(points) == 20
        truth = partition(track, 20)[1].records
        for (lat, lon, ts), rec in zip(points, truth):
            assert ts == rec.timestamp
            assert lat == pytest.approx(rec.lat, abs=1e-12)
            assert lon == pytest.approx(rec.lon, abs=1e-12)

    def test_head_gap_uses_synthesized_anchor(self):
        track = generate_synthetic_track("constant-velocity", 60)
        kg = seeded_kg([make_unit()])
        func_id = kg.function_nodes()[0].node_id
        gap = _gap_from_track(track, 0)
        assert gap.before == []
        points = execute_imputation(kg, func_id, gap)
        truth = partition(track, 20)[0].records
        for (lat, lon, _), rec in zip(points, truth):
            assert lat == pytest.approx(rec.lat, abs=1e-9)
            assert lon == pytest.approx(rec.lon, abs=1e-9)

    def test_turning_head_gap_dead_reckons_the_arc(self):
        track = generate_synthetic_track(
            "constant-turn", 60, speed=5e-4, heading0=70.0, turn_rate=1.0
        )
        rate = math.radians(1.0) / 10.0
        from vista.functions import constant_turn_spec

        kg = seeded_kg([make_unit(spec=constant_turn_spec(rate))])
        func_id = kg.function_nodes()[0].node_id
        gap = _gap_from_track(track, 0)
        points = execute_imputation(kg, func_id, gap)
        truth = partition(track, 20)[0].records
        for (lat, lon, _), rec in zip(points, truth):
            assert lat == pytest.approx(rec.lat, abs=1e-9)
            assert lon == pytest.approx(rec.lon, abs=1e-9)


class TestComposeExplanation:
    def test_traffic_separation_rule_cue(self, stub_oracle):
        unit = make_unit(
            static=make_static(spatial_context="traffic-separation-scheme")
        )
        kg = seeded_kg([unit] * 2)
        behavior_id = kg.behavior_node_id(unit.behavior)
        function_id = kg.function_nodes()[0].node_id
        static_ids = [
            kg.static_node_id(kind, value) for kind, value in unit.static.members()
        ]
        explanation = compose_explanation(
            kg, behavior_id, function_id, static_ids, "before: x\nafter: y",
            stub_oracle,
        )
        assert "traffic separation" in explanation["regulatory_rule_cue"]

    def test_open_water_is_undetermined(self, stub_oracle):
        unit = make_unit()
        kg = seeded_kg([unit])
        behavior_id = kg.behavior_node_id(unit.behavior)
        function_id = kg.function_nodes()[0].node_id
        static_ids = [
            kg.static_node_id(kind, value) for kind, value in unit.static.members()
        ]
        explanation = compose_explanation(
            kg, behavior_id, function_id, static_ids, "", stub_oracle
        )
        assert explanation["regulatory_rule_cue"] == "Undetermined"

    def test_node_id_leak_is_malformed(self):
        class LeakyStub(StubOracle):
            def _explain(self, variables):
                return (
                    "'''\nRegulatory Rule Cue: Undetermined\n"
                    "Operational Protocol Rationale: consistent with"
                    " Movement_Pattern_3 statistics\n'''"
                )

        unit = make_unit()
        kg = seeded_kg([unit])
        behavior_id = kg.behavior_node_id(unit.behavior)
        function_id = kg.function_nodes()[0].node_id
        static_ids = [
            kg.static_node_id(kind, value) for kind, value in unit.static.members()
        ]
        with pytest.raises(MalformedOracleOutput):
            compose_explanation(
                kg, behavior_id, function_id, static_ids, "", Oracle(LeakyStub())
            )


class TestImputeGap:
    def _context_units(self, track, kg_units, m=20):
        segments = partition(track, m)
        units: list[KnowledgeUnit | None] = [None] * len(segments)
        for unit in kg_units:
            units[unit.source[1]] = unit
        return units

    def test_full_path_on_linear_track(self, stub_oracle):
        track = generate_synthetic_track("constant-velocity", 60)
        unit0 = make_unit(source=(track.vessel_id, 0))
        unit2 = make_unit(source=(track.vessel_id, 2))
        kg = seeded_kg([unit0, unit2])
        units = self._context_units(track, [unit0, unit2])
        gap = _gap_from_track(track, 1)
        outcome = impute_gap(kg, units, gap, stub_oracle)
        assert not outcome.fallback_used
        assert len(outcome.points) == 20
        assert outcome.behavior_id is not None
        truth = partition(track, 20)[1].records
        for (lat, lon, _), rec in zip(outcome.points, truth):
            assert lat == pytest.approx(rec.lat, abs=1e-12)

    def test_empty_graph_falls_back_to_linear(self, stub_oracle):
        track = generate_synthetic_track("constant-velocity", 60)
        gap = _gap_from_track(track, 1)
        outcome = impute_gap(SdKg(), [None, None, None], gap, stub_oracle)
        assert outcome.fallback_used
        truth = partition(track, 20)[1].records
        for (lat, lon, _), rec in zip(outcome.points, truth):
            assert lat == pytest.approx(rec.lat, abs=1e-12)

    def test_one_sided_context_executes(self, stub_oracle):
        track = generate_synthetic_track("constant-velocity", 60)
        unit2 = make_unit(source=(track.vessel_id, 2))
        kg = seeded_kg([unit2])
        units = self._context_units(track, [unit2])
        gap = _gap_from_track(track, 0)
        outcome = impute_gap(kg, units, gap, stub_oracle)
        assert not outcome.fallback_used

    def test_outcome_json_schema(self, stub_oracle):
        track = generate_synthetic_track("constant-velocity", 60)
        unit0 = make_unit(source=(track.vessel_id, 0))
        kg = seeded_kg([unit0])
        units = self._context_units(track, [unit0])
        outcome = impute_gap(kg, units, _gap_from_track(track, 1), stub_oracle)
        payload = outcome.to_json_dict()
        assert set(payload) == {
            "vessel_id", "segment_index", "points", "behavior", "function",
            "explanation", "fallback_used",
        }
        assert set(payload["behavior"]) == {
            "id", "tokens", "graph_support", "contextual_justification",
        }
        assert set(payload["function"]) == {
            "id", "iel", "statistical_support", "reasoning",
        }
        assert set(payload["explanation"]) == {
            "regulatory_rule_cue", "operational_protocol_rationale",
        }

    def test_support_edges_exist_in_selection_subgraph(self, stub_oracle):
        track = generate_synthetic_track("constant-velocity", 60)
        unit0 = make_unit(source=(track.vessel_id, 0))
        kg = seeded_kg([unit0] * 4)
        units = self._context_units(track, [unit0])
        outcome = impute_gap(kg, units, _gap_from_track(track, 1), stub_oracle)
        assert outcome.graph_support
        for src, dst, weight in outcome.graph_support:
            assert kg.sb_weight(src, dst) == weight

    def test_deterministic_outcomes_under_stub(self, stub_oracle):
        import json

        track = generate_synthetic_track("constant-velocity", 60)
        unit0 = make_unit(source=(track.vessel_id, 0))
        kg = seeded_kg([unit0] * 2)
        units = self._context_units(track, [unit0])
        gap = _gap_from_track(track, 1)
        first = impute_gap(kg, units, gap, stub_oracle).to_json_dict()
        second = impute_gap(kg, units, gap, stub_oracle).to_json_dict()
        assert json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)
