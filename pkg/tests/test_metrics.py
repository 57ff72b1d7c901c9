from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vista import apply_block_missingness, generate_synthetic_track, partition
from vista.errors import MissingOutcome
from vista.metrics import evaluate, haversine_km, report_from_pairs

coords = st.tuples(
    st.floats(min_value=-89.0, max_value=89.0),
    st.floats(min_value=-179.0, max_value=179.0),
)


class TestHaversine:
    def test_quarter_great_circle(self):
        # 90 degrees of longitude along the equator: pi * R / 2.
        assert haversine_km(0.0, 0.0, 0.0, 90.0) == pytest.approx(10007.543, abs=0.01)

    def test_one_degree_latitude(self):
        assert haversine_km(0.0, 0.0, 1.0, 0.0) == pytest.approx(111.195, abs=0.001)

    def test_zero_distance(self):
        assert haversine_km(55.0, 10.0, 55.0, 10.0) == 0.0

    @given(a=coords, b=coords)
    @settings(max_examples=200, deadline=None)
    def test_symmetry(self, a, b):
        assert haversine_km(*a, *b) == pytest.approx(haversine_km(*b, *a), abs=1e-9)

    @given(a=coords, b=coords, c=coords)
    @settings(max_examples=200, deadline=None)
    def test_triangle_inequality(self, a, b, c):
        assert haversine_km(*a, *c) <= (
            haversine_km(*a, *b) + haversine_km(*b, *c) + 1e-9
        )


class TestReport:
    def test_perfect_match_is_zero(self):
        pairs = [((55.0, 10.0), (55.0, 10.0))] * 5
        report = report_from_pairs(pairs)
        assert report.mae_lat == report.rmse_lon == report.mhd == 0.0
        assert report.n == 5

    def test_rmse_at_least_mae(self):
        rng = random.Random(100)
        for _ in range(1000):
            pairs = [
                (
                    (rng.uniform(-80, 80), rng.uniform(-170, 170)),
                    (rng.uniform(-80, 80), rng.uniform(-170, 170)),
                )
                for _ in range(rng.randrange(1, 8))
            ]
            report = report_from_pairs(pairs)
            assert report.rmse_lat >= report.mae_lat - 1e-12
            assert report.rmse_lon >= report.mae_lon - 1e-12

    def test_report_fields_nonnegative(self):
        report = report_from_pairs([((1.0, 2.0), (3.0, 4.0))])
        payload = report.to_json_dict()
        assert all(value >= 0 for value in payload.values())


def _evaluation_setup(seed=5):
    track = generate_synthetic_track("constant-velocity", 100, vessel_id="E1")
    segments = partition(track, 20)
    masked, mask = apply_block_missingness(segments, 0.4, rng_seed=seed)
    outcomes = []
    for k in mask.gap_indices():
        seg = segments[k]
        outcomes.append(
            {
                "vessel_id": "E1",
                "segment_index": k,
                "points": [[rec.lat, rec.lon, rec.timestamp] for rec in seg.records],
            }
        )
    return track, mask, outcomes


class TestEvaluate:
    def test_perfect_outcomes_zero_report(self):
        track, mask, outcomes = _evaluation_setup()
        report = evaluate([track], outcomes, {"E1": mask})
        assert report.mhd == 0.0
        assert report.n == 20 * len(mask.gap_indices())

    def test_missing_outcome_is_hard_error(self):
        track, mask, outcomes = _evaluation_setup()
        with pytest.raises(MissingOutcome):
            evaluate([track], outcomes[:-1], {"E1": mask})

    def test_unknown_vessel_is_hard_error(self):
        track, mask, outcomes = _evaluation_setup()
        with pytest.raises(MissingOutcome):
            evaluate([track], outcomes, {"GHOST": mask})

    def test_unmasked_points_do_not_count(self):
        track, mask, outcomes = _evaluation_setup()
        baseline = evaluate([track], outcomes, {"E1": mask})
        # Perturb an outcome row at an unmasked segment: metrics unchanged.
        complete_index = mask.bits.index(1)
        extra = {
            "vessel_id": "E1",
            "segment_index": complete_index,
            "points": [[0.0, 0.0, 0]],
        }
        perturbed = evaluate([track], outcomes + [extra], {"E1": mask})
        assert perturbed.to_json_dict() == baseline.to_json_dict()

    def test_error_magnitude_flows_through(self):
        track, mask, outcomes = _evaluation_setup()
        shifted = [
            {
                **outcome,
                "points": [[lat + 0.01, lon, ts] for lat, lon, ts in outcome["points"]],
            }
            for outcome in outcomes
        ]
        report = evaluate([track], shifted, {"E1": mask})
        assert report.mae_lat == pytest.approx(0.01, abs=1e-12)
        assert report.rmse_lat == pytest.approx(0.01, abs=1e-12)
        assert report.mhd == pytest.approx(0.01 * 111.19, rel=1e-3)
