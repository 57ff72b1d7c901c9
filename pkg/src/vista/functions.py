"""Executable imputation methods: spec representation, builtin families,
gap execution, fit scoring and probe-based equivalence.

A method is a pair of expressions (latitude, longitude) over the shared
variable ``u`` (normalized time across the gap), the boundary anchors and
``dt_total``. Families are parameterized by per-second quantities (turn
rate, boundary derivatives) so one stored method transfers across gaps of
different spans.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DegenerateSpan, EvaluationError, InvalidParameter
from .iel import Expression, parse

#: Acceptance threshold for the mean per-axis fitting error, in degrees.
DEFAULT_FIT_THRESHOLD = 3e-3
#: Maximum number of proposals per segment.
DEFAULT_MAX_PROPOSALS = 3


@dataclass(frozen=True)
class FunctionSpec:
    """An imputation method: expression pair plus named constants.

    ``origin`` is provenance only and does not participate in identity.
    """

    lat_expr: str
    lon_expr: str
    params: tuple[tuple[str, float], ...] = ()
    family: str = "custom"
    origin: str = field(default="oracle-generated", compare=False)

    def __post_init__(self):
        names = [name for name, _ in self.params]
        if len(names) != len(set(names)):
            raise InvalidParameter("duplicate parameter names")
        object.__setattr__(self, "params", tuple(sorted(self.params)))
        # Parse eagerly so malformed specs fail at construction time.
        object.__setattr__(self, "_lat", parse(self.lat_expr, names))
        object.__setattr__(self, "_lon", parse(self.lon_expr, names))

    def param_dict(self) -> dict[str, float]:
        return dict(self.params)

    def compiled(self) -> tuple[Expression, Expression]:
        return self._lat, self._lon  # type: ignore[attr-defined]

    def sort_key(self) -> tuple:
        """Content-based ordering, independent of insertion history."""
        return (self.family, self.lat_expr, self.lon_expr, self.params)

    def to_json_dict(self) -> dict:
        return {
            "lat": self.lat_expr,
            "lon": self.lon_expr,
            "params": {name: value for name, value in self.params},
            "family": self.family,
            "origin": self.origin,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "FunctionSpec":
        return cls(
            lat_expr=data["lat"],
            lon_expr=data["lon"],
            params=tuple(sorted(data.get("params", {}).items())),
            family=data.get("family", "custom"),
            origin=data.get("origin", "oracle-generated"),
        )


@dataclass
class ImputationMethod:
    """A method together with its usage description."""

    spec: FunctionSpec
    description: str = ""


@dataclass
class FitReport:
    """Fitting-error summary for one validation run."""

    mae_lat: float
    mae_lon: float
    error: float  # mean of the two axis MAEs, degrees
    accepted: bool
    attempts: int


def evaluate_at(spec: FunctionSpec, u: float, start, end, dt_total: float) -> tuple[float, float]:
    lat_expr, lon_expr = spec.compiled()
    env = {
        "u": u,
        "lat0": start[0],
        "lon0": start[1],
        "lat1": end[0],
        "lon1": end[1],
        "dt_total": dt_total,
    }
    env.update(spec.param_dict())
    return lat_expr.evaluate(env), lon_expr.evaluate(env)


def execute(
    spec: FunctionSpec,
    start: tuple[float, float],
    end: tuple[float, float],
    time_offsets: list[float],
) -> list[tuple[float, float]]:
    """Evaluate the method on a gap's time grid.

    ``time_offsets`` runs from the boundary anchor before the gap (offset 0)
    to the anchor after it; one point is produced per interior offset.
    """
    if len(time_offsets) < 2:
        raise InvalidParameter("need at least the two boundary offsets")
    if time_offsets[0] != 0:
        raise InvalidParameter("first offset must be 0 (the leading anchor)")
    for a, b in zip(time_offsets, time_offsets[1:]):
        if a >= b:
            raise InvalidParameter("offsets must be strictly increasing")
    span = float(time_offsets[-1])
    if span <= 0.0:
        raise DegenerateSpan("zero time span across the gap")
    points = []
    for offset in time_offsets[1:-1]:
        u = offset / span
        points.append(evaluate_at(spec, u, start, end, span))
    return points


def fitting_error(spec: FunctionSpec, segment) -> FitReport:
    """Score a method on a complete segment's own grid.

    The segment's first and last records anchor the method; interior
    predictions are compared against the recorded positions.
    """
    records = segment.records
    first, last = records[0], records[-1]
    offsets = [rec.timestamp - first.timestamp for rec in records]
    predictions = execute(
        spec, (first.lat, first.lon), (last.lat, last.lon), offsets
    )
    interior = records[1:-1]
    if not interior:
        raise InvalidParameter("segment too short to score")
    abs_lat = [abs(pred[0] - rec.lat) for pred, rec in zip(predictions, interior)]
    abs_lon = [abs(pred[1] - rec.lon) for pred, rec in zip(predictions, interior)]
    mae_lat = sum(abs_lat) / len(abs_lat)
    mae_lon = sum(abs_lon) / len(abs_lon)
    error = 0.5 * (mae_lat + mae_lon)
    return FitReport(
        mae_lat=mae_lat, mae_lon=mae_lon, error=error, accepted=False, attempts=0
    )


# --- builtin families -------------------------------------------------------


def _linear_exprs(u_expr: str) -> tuple[str, str]:
    return (
        f"lat0 + ({u_expr}) * (lat1 - lat0)",
        f"lon0 + ({u_expr}) * (lon1 - lon0)",
    )


def linear_spec() -> FunctionSpec:
    lat, lon = _linear_exprs("u")
    return FunctionSpec(lat, lon, family="linear", origin="builtin")


def cubic_hermite_spec(
    dlat0: float, dlon0: float, dlat1: float, dlon1: float
) -> FunctionSpec:
    """Cubic interpolant matching positions and boundary derivatives (deg/s)."""
    lat = (
        "lat0*(2*u**3 - 3*u**2 + 1) + dlat0*dt_total*(u**3 - 2*u**2 + u)"
        " + lat1*(3*u**2 - 2*u**3) + dlat1*dt_total*(u**3 - u**2)"
    )
    lon = (
        "lon0*(2*u**3 - 3*u**2 + 1) + dlon0*dt_total*(u**3 - 2*u**2 + u)"
        " + lon1*(3*u**2 - 2*u**3) + dlon1*dt_total*(u**3 - u**2)"
    )
    return FunctionSpec(
        lat,
        lon,
        params=(
            ("dlat0", dlat0),
            ("dlat1", dlat1),
            ("dlon0", dlon0),
            ("dlon1", dlon1),
        ),
        family="cubic-hermite",
        origin="builtin",
    )


def _arc_exprs(u_expr: str) -> tuple[str, str]:
    """Circular arc through both anchors subtending rate*dt_total radians.

    Derivation: a constant-rate sweep from A to B satisfies
    P(u) = A + [sin(u*a/2)/sin(a/2)] * Rot((u-1)*a/2) @ (B-A), a = rate*dt_total.
    """
    scale = f"(sin(({u_expr})*rate*dt_total/2) / sin(rate*dt_total/2))"
    angle = f"((({u_expr}) - 1)*rate*dt_total/2)"
    lat = f"lat0 + {scale} * ((lat1 - lat0)*cos({angle}) - (lon1 - lon0)*sin({angle}))"
    lon = f"lon0 + {scale} * ((lat1 - lat0)*sin({angle}) + (lon1 - lon0)*cos({angle}))"
    return lat, lon


def constant_turn_spec(rate: float) -> FunctionSpec:
    """Constant turn-rate arc; ``rate`` is radians per second.

    A rate of exactly zero has no arc limit the expression grammar can
    express without dividing by sin(0), so it degrades to the linear body.
    """
    if rate == 0.0:
        lat, lon = _linear_exprs("u")
        return FunctionSpec(lat, lon, family="constant-turn", origin="builtin")
    lat, lon = _arc_exprs("u")
    return FunctionSpec(
        lat, lon, params=(("rate", rate),), family="constant-turn", origin="builtin"
    )


_DECAY_WARP = "(u*(2 + (decay - 1)*u)/(1 + decay))"


def decelerate_align_spec(rate: float, decay: float) -> FunctionSpec:
    """Constant turn with linearly decaying speed.

    ``decay`` is the end/start speed ratio in (0, 1]; the time warp
    w(u) = u*(2 + (decay-1)*u)/(1+decay) maps elapsed time to arc fraction.
    """
    if not 0.0 < decay <= 1.0:
        raise InvalidParameter(f"decay ratio out of (0, 1]: {decay}")
    if rate == 0.0:
        lat, lon = _linear_exprs(_DECAY_WARP)
        params: tuple = (("decay", decay),)
    else:
        lat, lon = _arc_exprs(_DECAY_WARP)
        params = (("decay", decay), ("rate", rate))
    return FunctionSpec(
        lat, lon, params=params, family="decelerate-align", origin="builtin"
    )


BUILTIN_FAMILIES = ("linear", "constant-turn", "decelerate-align", "cubic-hermite")


# --- probe equivalence ------------------------------------------------------

PROBE_PAIRS = (
    ((0.0, 0.0), (1.0, 1.0)),
    ((55.0, 10.0), (55.5, 10.5)),
    ((-33.0, 151.0), (-33.2, 150.7)),
    ((70.0, -20.0), (69.5, -19.5)),
    ((0.001, -0.001), (-0.001, 0.001)),
)
PROBE_US = tuple(i / 10.0 for i in range(11))
PROBE_SPANS = (60.0, 600.0, 3600.0)
PROBE_TOLERANCE = 1e-9


def probe_equivalent(f1: FunctionSpec, f2: FunctionSpec) -> bool:
    """True when both methods agree on the canonical probe grid.

    An evaluation error on either side counts as non-equivalent; methods
    that cannot be probed must not be merged.
    """
    try:
        for start, end in PROBE_PAIRS:
            for span in PROBE_SPANS:
                for u in PROBE_US:
                    lat1, lon1 = evaluate_at(f1, u, start, end, span)
                    lat2, lon2 = evaluate_at(f2, u, start, end, span)
                    if (
                        abs(lat1 - lat2) > PROBE_TOLERANCE
                        or abs(lon1 - lon2) > PROBE_TOLERANCE
                    ):
                        return False
    except EvaluationError:
        return False
    return True
