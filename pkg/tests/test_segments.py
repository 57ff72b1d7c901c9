from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vista import apply_block_missingness, compute_mask, generate_synthetic_track, partition
from vista.errors import EmptyInput, InvalidParameter
from vista.records import AisRecord, VesselSequence
from vista.segments import partition_with_remainder


def _track(n, vessel_id="V1"):
    return generate_synthetic_track(
        "constant-velocity", n, vessel_id=vessel_id, start=(55.0, 10.0),
        velocity=(0.001, 0.002),
    )


class TestPartition:
    def test_exact_cover_200_by_20(self):
        segments = partition(_track(200), 20)
        assert len(segments) == 10
        assert [seg.segment_index for seg in segments] == list(range(10))

    def test_exact_fit_single_segment(self):
        segments = partition(_track(20), 20)
        assert len(segments) == 1
        assert segments[0].records == _track(20).records

    def test_remainder_excluded_and_reported(self):
        segments, remainder = partition_with_remainder(_track(47), 20)
        assert len(segments) == 2
        assert len(remainder) == 7

    def test_remainder_logs_warning(self, caplog):
        with caplog.at_level("WARNING"):
            partition(_track(47), 20)
        assert "7 trailing records" in caplog.text

    def test_m_below_two_rejected(self):
        with pytest.raises(InvalidParameter):
            partition(_track(10), 1)

    def test_round_trip_prefix(self):
        track = _track(57)
        segments = partition(track, 20)
        flattened = tuple(rec for seg in segments for rec in seg.records)
        assert flattened == track.records[:40]

    @given(n=st.integers(min_value=2, max_value=300), m=st.integers(min_value=2, max_value=40))
    @settings(max_examples=50, deadline=None)
    def test_partition_properties(self, n, m):
        track = _track(n)
        segments, remainder = partition_with_remainder(track, m)
        assert len(segments) == n // m
        assert len(remainder) == n % m
        flattened = tuple(rec for seg in segments for rec in seg.records)
        assert flattened == track.records[: (n // m) * m]
        for seg in segments:
            times = seg.timestamps()
            assert all(a < b for a, b in zip(times, times[1:]))


class TestComputeMask:
    def test_all_complete(self):
        segments = partition(_track(60), 20)
        mask = compute_mask(segments)
        assert mask.bits == [1, 1, 1]

    def test_one_missing_field_zeroes_the_segment(self):
        segments = partition(_track(60), 20)
        records = list(segments[1].records)
        records[3] = AisRecord(
            vessel_id=records[3].vessel_id,
            timestamp=records[3].timestamp,
            lat=records[3].lat,
            lon=records[3].lon,
            heading=records[3].heading,
            course=records[3].course,
            speed=None,  # lost speed only
            nav_status=records[3].nav_status,
            cargo_type=records[3].cargo_type,
            draught=records[3].draught,
            length=records[3].length,
            width=records[3].width,
            ship_type=records[3].ship_type,
        )
        segments[1] = type(segments[1])(
            vessel_id=segments[1].vessel_id,
            segment_index=1,
            records=tuple(records),
            m=20,
        )
        mask = compute_mask(segments)
        assert mask.bits == [1, 0, 1]

    def test_mask_soundness(self):
        segments = partition(_track(100), 20)
        masked, mask = apply_block_missingness(segments, 0.5, rng_seed=3)
        for bit, seg in zip(mask.bits, masked):
            incomplete = any(not rec.is_complete() for rec in seg.records)
            assert (bit == 0) == incomplete

    def test_fully_complete_then_gap_pattern(self):
        # One observed segment followed by two with removed records.
        segments = partition(_track(60), 20)
        cleared = [segments[0]] + [
            type(seg)(
                vessel_id=seg.vessel_id,
                segment_index=seg.segment_index,
                records=tuple(rec.cleared() for rec in seg.records),
                m=seg.m,
            )
            for seg in segments[1:]
        ]
        mask = compute_mask(cleared)
        assert mask.bits == [1, 0, 0]


class TestBlockMissingness:
    def test_prob_zero_keeps_everything(self):
        segments = partition(_track(100), 20)
        _, mask = apply_block_missingness(segments, 0.0, rng_seed=1)
        assert mask.bits == [1] * 5

    def test_prob_one_removes_everything(self):
        segments = partition(_track(100), 20)
        masked, mask = apply_block_missingness(segments, 1.0, rng_seed=1)
        assert mask.bits == [0] * 5
        for seg in masked:
            for rec in seg.records:
                assert rec.lat is None and rec.lon is None
                assert rec.timestamp is not None

    def test_removed_fraction_concentrates(self):
        segments = partition(_track(200), 20)
        # 10k segments by repeating the base 10 with distinct indices.
        many = []
        for i in range(1000):
            for seg in segments:
                many.append(
                    type(seg)(
                        vessel_id=seg.vessel_id,
                        segment_index=len(many),
                        records=seg.records,
                        m=seg.m,
                    )
                )
        _, mask = apply_block_missingness(many, 0.2, rng_seed=42)
        removed = mask.bits.count(0) / len(mask.bits)
        assert 0.18 <= removed <= 0.22

    def test_seeded_determinism(self):
        segments = partition(_track(200), 20)
        _, mask_a = apply_block_missingness(segments, 0.3, rng_seed=9)
        _, mask_b = apply_block_missingness(segments, 0.3, rng_seed=9)
        assert mask_a.bits == mask_b.bits

    def test_invalid_probability(self):
        segments = partition(_track(40), 20)
        with pytest.raises(InvalidParameter):
            apply_block_missingness(segments, 1.5, rng_seed=0)

    def test_timestamps_preserved(self):
        segments = partition(_track(40), 20)
        masked, _ = apply_block_missingness(segments, 1.0, rng_seed=0)
        for original, cleared in zip(segments, masked):
            assert original.timestamps() == cleared.timestamps()


class TestSyntheticTracks:
    def test_constant_velocity_points(self):
        track = generate_synthetic_track(
            "constant-velocity", 3, start=(55.0, 10.0), velocity=(0.001, 0.002)
        )
        points = [(rec.lat, rec.lon) for rec in track.records]
        assert points[0] == (55.0, 10.0)
        assert points[1] == pytest.approx((55.001, 10.002), abs=1e-12)
        assert points[2] == pytest.approx((55.002, 10.004), abs=1e-12)

    def test_constant_turn_zero_rate_is_linear(self):
        arc = generate_synthetic_track(
            "constant-turn", 10, start=(54.0, 11.0), speed=1e-3,
            heading0=30.0, turn_rate=0.0,
        )
        dlat = 1e-3 * math.cos(math.radians(30.0))
        dlon = 1e-3 * math.sin(math.radians(30.0))
        for t, rec in enumerate(arc.records):
            assert rec.lat == pytest.approx(54.0 + dlat * t, abs=1e-12)
            assert rec.lon == pytest.approx(11.0 + dlon * t, abs=1e-12)

    def test_constant_turn_follows_circle(self):
        track = generate_synthetic_track(
            "constant-turn", 50, start=(54.0, 11.0), speed=1e-3,
            heading0=0.0, turn_rate=2.0,
        )
        # All points equidistant from the arc center.
        omega = math.radians(2.0)
        radius = 1e-3 / omega
        clat = 54.0 - radius * math.sin(0.0)
        clon = 11.0 + radius * math.cos(0.0)
        for rec in track.records:
            r = math.hypot(rec.lat - clat, rec.lon - clon)
            assert r == pytest.approx(radius, rel=1e-12)

    def test_noisy_linear_sigma_zero_is_exact(self):
        noisy = generate_synthetic_track(
            "noisy-linear", 20, start=(55.0, 10.0), velocity=(0.001, 0.0), sigma=0.0
        )
        clean = generate_synthetic_track(
            "constant-velocity", 20, start=(55.0, 10.0), velocity=(0.001, 0.0)
        )
        assert [r.lat for r in noisy.records] == [r.lat for r in clean.records]

    def test_all_records_complete(self):
        track = _track(30)
        assert all(rec.is_complete() for rec in track.records)

    def test_too_short_rejected(self):
        with pytest.raises(InvalidParameter):
            generate_synthetic_track("constant-velocity", 1)

    def test_unknown_kind_rejected(self):
        with pytest.raises(InvalidParameter):
            generate_synthetic_track("spiral", 10)


class TestRecordValidation:
    def test_bounds_enforced(self):
        with pytest.raises(InvalidParameter):
            AisRecord(vessel_id="V", timestamp=0, lat=91.0, lon=0.0)
        with pytest.raises(InvalidParameter):
            AisRecord(vessel_id="V", timestamp=0, lat=0.0, lon=-181.0)

    def test_sequence_requires_increasing_timestamps(self):
        rec = AisRecord(vessel_id="V", timestamp=10, lat=1.0, lon=1.0)
        with pytest.raises(InvalidParameter):
            VesselSequence(vessel_id="V", records=(rec, rec))

    def test_empty_sequence_rejected(self):
        with pytest.raises(EmptyInput):
            VesselSequence(vessel_id="V", records=())

    def test_cleared_keeps_slot(self):
        rec = AisRecord(vessel_id="V", timestamp=5, lat=1.0, lon=2.0, speed=3.0)
        bare = rec.cleared()
        assert bare.timestamp == 5 and bare.vessel_id == "V"
        assert bare.lat is None and bare.speed is None
