"""Rule-based gap imputers used for comparison: linear interpolation,
Akima splines over a local knot window, and a constant-velocity Kalman
smoother.

All three interpolate latitude and longitude axis-wise in degrees;
antimeridian-crossing tracks are out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import Akima1DInterpolator

from .errors import DegenerateSpan, InvalidParameter

AKIMA_SIDE_WINDOW = 5  # known knots used per side of the gap
AKIMA_MIN_PER_SIDE = 3  # fewer than this degrades to linear


def lin_itp(
    boundary: tuple[tuple[float, float], tuple[float, float]],
    offsets: list[float],
    span: float,
) -> list[tuple[float, float]]:
    """Linear interpolation between the two boundary fixes.

    ``offsets`` are seconds after the leading fix; ``span`` is the seconds
    between the two fixes.
    """
    if span <= 0:
        raise DegenerateSpan("boundary fixes are not separated in time")
    (lat0, lon0), (lat1, lon1) = boundary
    points = []
    for offset in offsets:
        u = offset / span
        points.append((lat0 + u * (lat1 - lat0), lon0 + u * (lon1 - lon0)))
    return points


@dataclass
class AkimaResult:
    points: list[tuple[float, float]]
    degraded: bool  # True when the knot window was too thin for a spline


def akima(
    known: list[tuple[float, float, float]],
    gap_times: list[float],
) -> AkimaResult:
    """Akima spline through the nearest known fixes on each side of the gap.

    ``known`` is (time, lat, lon) with positions on both sides of
    ``gap_times``. Sides thinner than the minimum window degrade to linear
    interpolation between the innermost fixes.
    """
    if not gap_times:
        return AkimaResult(points=[], degraded=False)
    known = sorted(known)
    first_gap, last_gap = gap_times[0], gap_times[-1]
    left = [fix for fix in known if fix[0] < first_gap][-AKIMA_SIDE_WINDOW:]
    right = [fix for fix in known if fix[0] > last_gap][:AKIMA_SIDE_WINDOW]
    if len(left) < AKIMA_MIN_PER_SIDE or len(right) < AKIMA_MIN_PER_SIDE:
        if not left or not right:
            raise InvalidParameter("gap lacks known fixes on one side")
        t0, lat0, lon0 = left[-1]
        t1, lat1, lon1 = right[0]
        points = lin_itp(
            ((lat0, lon0), (lat1, lon1)),
            [t - t0 for t in gap_times],
            t1 - t0,
        )
        return AkimaResult(points=points, degraded=True)
    knots = left + right
    times = np.array([fix[0] for fix in knots])
    lats = np.array([fix[1] for fix in knots])
    lons = np.array([fix[2] for fix in knots])
    lat_spline = Akima1DInterpolator(times, lats)
    lon_spline = Akima1DInterpolator(times, lons)
    targets = np.asarray(gap_times, dtype=float)
    return AkimaResult(
        points=list(zip(lat_spline(targets).tolist(), lon_spline(targets).tolist())),
        degraded=False,
    )


@dataclass
class KalmanParams:
    # Low process noise keeps the smoother close to a global constant-velocity
    # fit inside long gaps, which is what beats plain two-anchor interpolation
    # on noisy near-linear tracks.
    process_noise: float = 1e-8  # accel std, degrees / s^2
    obs_noise: float = 1e-4  # position std, degrees


def kalman(
    known: list[tuple[float, float, float]],
    gap_times: list[float],
    params: KalmanParams | None = None,
) -> list[tuple[float, float]]:
    """Constant-velocity Kalman filter with RTS smoothing.

    State is (lat, lon, v_lat, v_lon). The filter runs over the union grid
    of known and gap times, updating only where a fix exists; the smoother
    then reads the gap positions off the smoothed states.
    """
    params = params or KalmanParams()
    if len(known) < 2:
        raise InvalidParameter("need at least two known fixes")
    known = sorted(known)
    times = [fix[0] for fix in known]
    for a, b in zip(times, times[1:]):
        if a >= b:
            raise InvalidParameter("known fixes must have increasing timestamps")
    observations = {fix[0]: (fix[1], fix[2]) for fix in known}
    grid = sorted(set(times) | set(gap_times))

    q_var = params.process_noise**2
    r_var = params.obs_noise**2
    H = np.zeros((2, 4))
    H[0, 0] = H[1, 1] = 1.0
    R = np.eye(2) * r_var

    n = len(grid)
    x = np.zeros(4)
    first = observations[times[0]]
    x[0], x[1] = first
    P = np.diag([r_var, r_var, 1.0, 1.0])

    filtered_x = np.zeros((n, 4))
    filtered_P = np.zeros((n, 4, 4))
    predicted_x = np.zeros((n, 4))
    predicted_P = np.zeros((n, 4, 4))
    transitions = np.zeros((n, 4, 4))

    for i, t in enumerate(grid):
        if i == 0:
            F = np.eye(4)
            x_pred, P_pred = x.copy(), P.copy()
        else:
            dt = t - grid[i - 1]
            F = np.eye(4)
            F[0, 2] = F[1, 3] = dt
            # Discrete white-noise acceleration model, per axis.
            q11 = q_var * dt**4 / 4.0
            q13 = q_var * dt**3 / 2.0
            q33 = q_var * dt**2
            Q = np.zeros((4, 4))
            Q[0, 0] = Q[1, 1] = q11
            Q[0, 2] = Q[2, 0] = Q[1, 3] = Q[3, 1] = q13
            Q[2, 2] = Q[3, 3] = q33
            x_pred = F @ filtered_x[i - 1]
            P_pred = F @ filtered_P[i - 1] @ F.T + Q
        transitions[i] = F
        predicted_x[i], predicted_P[i] = x_pred, P_pred
        if t in observations:
            z = np.array(observations[t])
            innovation = z - H @ x_pred
            S = H @ P_pred @ H.T + R
            K = P_pred @ H.T @ np.linalg.inv(S)
            filtered_x[i] = x_pred + K @ innovation
            filtered_P[i] = (np.eye(4) - K @ H) @ P_pred
        else:
            filtered_x[i] = x_pred
            filtered_P[i] = P_pred

    smoothed_x = filtered_x.copy()
    smoothed_P = filtered_P.copy()
    for i in range(n - 2, -1, -1):
        F = transitions[i + 1]
        P_pred = predicted_P[i + 1]
        gain = filtered_P[i] @ F.T @ np.linalg.pinv(P_pred)
        smoothed_x[i] = filtered_x[i] + gain @ (smoothed_x[i + 1] - predicted_x[i + 1])
        smoothed_P[i] = (
            filtered_P[i] + gain @ (smoothed_P[i + 1] - P_pred) @ gain.T
        )

    index = {t: i for i, t in enumerate(grid)}
    return [
        (float(smoothed_x[index[t], 0]), float(smoothed_x[index[t], 1]))
        for t in gap_times
    ]
