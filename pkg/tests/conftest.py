from __future__ import annotations

import pytest

from vista import Oracle, SchedulerConfig, SdKg, StubOracle, generate_synthetic_track
from vista.functions import FunctionSpec, ImputationMethod, linear_spec
from vista.knowledge import BehaviorTuple, KnowledgeUnit, StaticTuple


@pytest.fixture
def stub_oracle() -> Oracle:
    return Oracle(StubOracle())


@pytest.fixture
def cv_track():
    return generate_synthetic_track(
        "constant-velocity", 200, vessel_id="CV1", start=(55.0, 10.0),
        velocity=(0.001, 0.002),
    )


@pytest.fixture
def config() -> SchedulerConfig:
    return SchedulerConfig(batch_size=4)


def make_static(vessel_id="V1", nav_status="under way using engine",
                cargo_type="none", draught_bin="[4,6)", length_bin="[100,150)",
                width_bin="[15,20)", ship_type="cargo",
                spatial_context="open-water") -> StaticTuple:
    return StaticTuple(
        vessel_id=vessel_id,
        nav_status=nav_status,
        cargo_type=cargo_type,
        draught_bin=draught_bin,
        length_bin=length_bin,
        width_bin=width_bin,
        ship_type=ship_type,
        spatial_context=spatial_context,
    )


def make_behavior(speed="stable", course="stable", heading="stable",
                  intent="navigating", duration_lower=150) -> BehaviorTuple:
    return BehaviorTuple(
        speed_pattern=speed,
        course_pattern=course,
        heading_pattern=heading,
        intent=intent,
        duration_lower=duration_lower,
    )


def make_unit(static=None, behavior=None, spec: FunctionSpec | None = None,
              source=("V1", 0)) -> KnowledgeUnit:
    return KnowledgeUnit(
        static=static or make_static(),
        behavior=behavior or make_behavior(),
        func=ImputationMethod(spec or linear_spec(), "linear rule"),
        source=source,
    )


def seeded_kg(units) -> SdKg:
    kg = SdKg()
    for unit in units:
        kg.upsert_unit(unit)
    return kg
