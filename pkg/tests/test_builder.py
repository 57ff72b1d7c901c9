from __future__ import annotations

import pytest

from vista import Oracle, StubOracle, generate_synthetic_track, partition
from vista.builder import describe, propose, validate_and_refine
from vista.errors import ValidationExhausted
from vista.functions import FunctionSpec, linear_spec
from vista.kg import SdKg

from conftest import make_behavior, make_unit, seeded_kg


def _segment(kind="constant-velocity", **kwargs):
    track = generate_synthetic_track(kind, 20, **kwargs)
    return partition(track, 20)[0]


CONSTANT_SPEC = FunctionSpec("lat0", "lon0", family="hold")


class CountingStub(StubOracle):
    """Stub whose method proposals come from a scripted list."""

    def __init__(self, scripted_specs):
        super().__init__()
        self.scripted = list(scripted_specs)
        self.builder_calls = 0

    def _method_builder(self, variables):
        spec = self.scripted[min(self.builder_calls, len(self.scripted) - 1)]
        self.builder_calls += 1
        lines = [f"lat = {spec.lat_expr}", f"lon = {spec.lon_expr}"]
        for name, value in spec.params:
            lines.append(f"param {name} = {value!r}")
        lines.append(f"family = {spec.family}")
        return "Function:\n'''\n" + "\n".join(lines) + "\n'''\nDescription: scripted\n"


class TestPropose:
    def test_reuses_accepting_function_without_oracle_call(self, stub_oracle):
        behavior = make_behavior()
        kg = seeded_kg([make_unit(behavior=behavior)])
        stub = StubOracle()
        oracle = Oracle(stub)
        proposal = propose(_segment(), None, behavior, kg, oracle)
        assert proposal.reused
        assert proposal.spec == linear_spec()
        assert stub.calls == 0

    def test_generates_when_graph_is_empty(self):
        stub = StubOracle()
        proposal = propose(_segment(), None, make_behavior(), SdKg(), Oracle(stub))
        assert not proposal.reused
        assert proposal.spec.family == "linear"
        assert stub.calls == 1

    def test_generates_when_retrieved_function_does_not_fit(self):
        behavior = make_behavior()
        kg = seeded_kg([make_unit(behavior=behavior, spec=CONSTANT_SPEC)])
        stub = StubOracle()
        proposal = propose(_segment(), None, behavior, kg, Oracle(stub))
        assert not proposal.reused
        assert stub.calls == 1


class TestValidateAndRefine:
    def test_perfect_fit_accepts_first_attempt(self, stub_oracle):
        spec, report = validate_and_refine(linear_spec(), _segment(), stub_oracle)
        assert report.accepted
        assert report.attempts == 1
        assert report.error == pytest.approx(0.0, abs=1e-15)

    def test_fail_twice_then_succeed_counts_three(self):
        stub = CountingStub([CONSTANT_SPEC, linear_spec()])
        spec, report = validate_and_refine(
            CONSTANT_SPEC, _segment(), Oracle(stub), behavior=make_behavior()
        )
        assert report.accepted
        assert report.attempts == 3
        assert spec == linear_spec()
        assert stub.builder_calls == 2  # two refinement proposals after the given one

    def test_never_fits_exhausts_with_three_proposals(self):
        stub = CountingStub([CONSTANT_SPEC])
        with pytest.raises(ValidationExhausted) as err:
            validate_and_refine(
                CONSTANT_SPEC, _segment(), Oracle(stub), behavior=make_behavior()
            )
        assert stub.builder_calls == 2
        assert err.value.best_report.attempts == 3
        assert err.value.best_report.error > 3e-3
        assert not err.value.best_report.accepted

    def test_threshold_boundary_accepts_exact_value(self):
        # "Does not exceed" means a fit landing exactly on the threshold is
        # accepted. Power-of-two bias keeps every float step exact.
        segment = _segment(velocity=(0.0, 0.0))
        bias = 2.0**-8
        biased = FunctionSpec(
            f"lat0 + u * (lat1 - lat0) + {bias} * min(u * 1e9, 1)",
            "lon0 + u * (lon1 - lon0)",
            family="biased",
        )
        spec, report = validate_and_refine(
            biased, segment, Oracle(StubOracle()), fit_threshold=2.0**-9
        )
        assert report.error == 2.0**-9
        assert report.accepted
        # One binary step below the error: rejected, refined to an exact fit.
        _, tighter = validate_and_refine(
            biased, segment, Oracle(StubOracle()),
            fit_threshold=2.0**-9 * (1 - 2**-52), behavior=make_behavior(),
        )
        assert tighter.error == 0.0
        assert tighter.attempts == 2

    def test_unparseable_refinement_consumes_attempt(self):
        class BabblingStub(StubOracle):
            def _method_builder(self, variables):
                return "'''\nno expressions here\n'''"

        with pytest.raises(ValidationExhausted) as err:
            validate_and_refine(
                CONSTANT_SPEC, _segment(), Oracle(BabblingStub()),
                behavior=make_behavior(),
            )
        assert err.value.best_spec == CONSTANT_SPEC

    def test_refinement_feedback_reaches_the_oracle(self):
        seen = []

        class RecordingStub(StubOracle):
            def _method_builder(self, variables):
                seen.append(variables["feedback_text_description"])
                return StubOracle._method_builder(self, variables)

        validate_and_refine(
            CONSTANT_SPEC,
            _segment(),
            Oracle(RecordingStub()),
            behavior=make_behavior(),
        )
        assert seen and "fitting error" in seen[0]
        assert "tried families: hold" in seen[0]


class TestDescribe:
    def test_existing_description_is_reused(self, stub_oracle):
        text = describe(linear_spec(), make_behavior(), stub_oracle, existing="keep me")
        assert text == "keep me"

    def test_template_names_family_and_tokens(self, stub_oracle):
        text = describe(linear_spec(), make_behavior(), stub_oracle)
        assert "linear" in text
        assert "stable" in text

    def test_never_empty(self, stub_oracle):
        for spec in (linear_spec(), CONSTANT_SPEC):
            assert describe(spec, make_behavior(), stub_oracle)
