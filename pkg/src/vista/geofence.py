"""Spatial context lookup: offline GeoJSON geofences by default, with an
optional Overpass-backed online mode behind the same interface.

The geofence file is a GeoJSON FeatureCollection whose features carry
``properties.category``. A point inside several polygons resolves to the
category earliest in the configured priority order; a point inside none
resolves to ``open-water``.
"""

from __future__ import annotations

import json
from pathlib import Path

import requests
from shapely.geometry import Point, shape
from shapely.prepared import prep

from .errors import ConfigError, OracleTimeout, OracleUnavailable

OPEN_WATER = "open-water"

DEFAULT_PRIORITY = (
    "traffic-separation-scheme",
    "shipping-lane",
    "anchorage",
    "port",
)


class GeofenceIndex:
    """Point-in-polygon lookup over a fixed set of categorized areas."""

    def __init__(self, features: list[tuple[str, object]], priority=DEFAULT_PRIORITY):
        self._priority = list(priority)
        self._areas = [(category, prep(geom), geom) for category, geom in features]

    @classmethod
    def empty(cls) -> "GeofenceIndex":
        return cls([])

    @classmethod
    def from_geojson(
        cls, path: str | Path, priority=DEFAULT_PRIORITY
    ) -> "GeofenceIndex":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read geofence file {path}: {exc}") from exc
        if data.get("type") != "FeatureCollection":
            raise ConfigError(f"{path}: expected a GeoJSON FeatureCollection")
        features = []
        for feature in data.get("features", []):
            category = (feature.get("properties") or {}).get("category")
            if not category:
                raise ConfigError(f"{path}: feature without properties.category")
            features.append((category, shape(feature["geometry"])))
        return cls(features, priority=priority)

    def _rank(self, category: str) -> tuple[int, str]:
        try:
            return (self._priority.index(category), category)
        except ValueError:
            return (len(self._priority), category)

    def lookup(self, lat: float, lon: float) -> str:
        point = Point(lon, lat)  # GeoJSON axis order is (lon, lat)
        hits = [
            category
            for category, prepared, _ in self._areas
            if prepared.intersects(point)
        ]
        if not hits:
            return OPEN_WATER
        return min(hits, key=self._rank)


def lookup_context(lat: float, lon: float, geofence: GeofenceIndex) -> str:
    return geofence.lookup(lat, lon)


# Overpass tags mapped onto the category set used by the geofences.
_SEAMARK_CATEGORIES = {
    "separation_zone": "traffic-separation-scheme",
    "separation_lane": "traffic-separation-scheme",
    "separation_scheme": "traffic-separation-scheme",
    "fairway": "shipping-lane",
    "anchorage": "anchorage",
    "harbour": "port",
}


class OverpassGeofence:
    """Online lookup through an Overpass endpoint, cached per rounded point.

    Only the category mapping above is supported; anything else resolves to
    open water, matching the offline default.
    """

    def __init__(
        self,
        url: str,
        *,
        radius_m: int = 500,
        timeout_s: float = 10.0,
        session: requests.Session | None = None,
    ):
        self.url = url
        self.radius_m = radius_m
        self.timeout_s = timeout_s
        self._session = session or requests.Session()
        self._cache: dict[tuple[float, float], str] = {}

    def lookup(self, lat: float, lon: float) -> str:
        key = (round(lat, 3), round(lon, 3))
        if key in self._cache:
            return self._cache[key]
        query = (
            f"[out:json][timeout:{int(self.timeout_s)}];"
            f'nwr(around:{self.radius_m},{lat},{lon})["seamark:type"];out tags;'
        )
        try:
            response = self._session.post(
                self.url, data={"data": query}, timeout=self.timeout_s
            )
            response.raise_for_status()
            payload = response.json()
        except requests.Timeout as exc:
            raise OracleTimeout(f"overpass query timed out: {exc}") from exc
        except requests.RequestException as exc:
            raise OracleUnavailable(f"overpass query failed: {exc}") from exc
        categories = []
        for element in payload.get("elements", []):
            seamark = (element.get("tags") or {}).get("seamark:type")
            mapped = _SEAMARK_CATEGORIES.get(seamark)
            if mapped:
                categories.append(mapped)
        result = categories[0] if categories else OPEN_WATER
        self._cache[key] = result
        return result
