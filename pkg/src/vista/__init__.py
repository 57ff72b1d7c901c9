"""Knowledge-driven vessel trajectory imputation.

Complete AIS segments are distilled into a weighted knowledge graph of
static attributes, behavior patterns and executable imputation methods;
masked segments are then reconstructed by querying that graph and a
pluggable language-model oracle, with every decision carrying
machine-checkable evidence.
"""

from .errors import VistaError
from .kg import SdKg, to_dot, top_k
from .knowledge import BehaviorTuple, KnowledgeUnit, StaticTuple
from .oracle import HttpOracle, Oracle, StubOracle
from .records import AisRecord, MinimalSegment, ObservationMask, VesselSequence
from .segments import (
    apply_block_missingness,
    compute_mask,
    generate_synthetic_track,
    partition,
)
from .workflow import SchedulerConfig, run_build, run_impute

__version__ = "0.1.0"

__all__ = [
    "AisRecord",
    "BehaviorTuple",
    "HttpOracle",
    "KnowledgeUnit",
    "MinimalSegment",
    "ObservationMask",
    "Oracle",
    "SchedulerConfig",
    "SdKg",
    "StaticTuple",
    "StubOracle",
    "VesselSequence",
    "VistaError",
    "apply_block_missingness",
    "compute_mask",
    "generate_synthetic_track",
    "partition",
    "run_build",
    "run_impute",
    "to_dot",
    "top_k",
    "__version__",
]
