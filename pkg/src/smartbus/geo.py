"""Planar geodesy helpers for city-scale positions.

Latitude/longitude pairs are mapped to meters with an equirectangular
projection around a reference point; the error stays below 0.1% for
extents under ~50 km, which covers any single bus network here.
"""

import math

EARTH_RADIUS_M = 6371000.0

Point = tuple[float, float]  # (latitude_deg, longitude_deg)


def offset_m(origin: Point, point: Point) -> tuple[float, float]:
    """(east_m, north_m) of ``point`` relative to ``origin``."""
    lat0 = math.radians(origin[0])
    east = math.radians(point[1] - origin[1]) * EARTH_RADIUS_M * math.cos(lat0)
    north = math.radians(point[0] - origin[0]) * EARTH_RADIUS_M
    return east, north


def distance_m(a: Point, b: Point) -> float:
    east, north = offset_m(a, b)
    return math.hypot(east, north)


def interpolate(a: Point, b: Point, fraction: float) -> Point:
    """Linear interpolation in degree space; fine at segment scale."""
    return (a[0] + (b[0] - a[0]) * fraction, a[1] + (b[1] - a[1]) * fraction)
