"""WGS-84 geodetic <-> local east-north tangent-plane conversion.

All tracking runs in a 2-D east/north frame anchored at a configurable
geodetic origin.  Altitude is fixed to 0 throughout (the sensor chain
does not report it).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# WGS-84 ellipsoid
_A = 6378137.0
_F = 1.0 / 298.257223563
_E2 = _F * (2.0 - _F)

# small-area assumption guard
MAX_RANGE_M = 50_000.0


class GeodesyError(ValueError):
    """Invalid coordinate or out-of-range conversion request."""


@dataclass(frozen=True)
class GeoPoint:
    """Geodetic coordinate in decimal degrees."""

    lat_deg: float
    lon_deg: float

    def __post_init__(self):
        if not (-90.0 <= self.lat_deg <= 90.0):
            raise GeodesyError(f"latitude out of range: {self.lat_deg}")
        if not (-180.0 <= self.lon_deg <= 180.0):
            raise GeodesyError(f"longitude out of range: {self.lon_deg}")


@dataclass(frozen=True)
class EnuPoint:
    """Local planar coordinate: east (x) / north (y) offsets in meters."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeodesyError(f"non-finite ENU coordinate: ({self.x}, {self.y})")


def _geodetic_to_ecef(lat_rad: float, lon_rad: float) -> tuple[float, float, float]:
    sin_lat = math.sin(lat_rad)
    cos_lat = math.cos(lat_rad)
    n = _A / math.sqrt(1.0 - _E2 * sin_lat * sin_lat)
    x = n * cos_lat * math.cos(lon_rad)
    y = n * cos_lat * math.sin(lon_rad)
    z = n * (1.0 - _E2) * sin_lat
    return x, y, z


def _ecef_to_geodetic(x: float, y: float, z: float) -> tuple[float, float]:
    lon = math.atan2(y, x)
    p = math.hypot(x, y)
    lat = math.atan2(z, p * (1.0 - _E2))
    for _ in range(8):
        sin_lat = math.sin(lat)
        n = _A / math.sqrt(1.0 - _E2 * sin_lat * sin_lat)
        lat_new = math.atan2(z + _E2 * n * sin_lat, p)
        if abs(lat_new - lat) < 1e-14:
            lat = lat_new
            break
        lat = lat_new
    return lat, lon


def to_enu(p: GeoPoint, origin: GeoPoint) -> EnuPoint:
    """East/north offsets of ``p`` relative to ``origin``.

    ECEF delta rotated into the tangent plane at the origin; the up
    component is discarded (2-D tracking).
    """
    lat0 = math.radians(origin.lat_deg)
    lon0 = math.radians(origin.lon_deg)
    x0, y0, z0 = _geodetic_to_ecef(lat0, lon0)
    x1, y1, z1 = _geodetic_to_ecef(math.radians(p.lat_deg), math.radians(p.lon_deg))
    dx, dy, dz = x1 - x0, y1 - y0, z1 - z0

    sin_lat0, cos_lat0 = math.sin(lat0), math.cos(lat0)
    sin_lon0, cos_lon0 = math.sin(lon0), math.cos(lon0)
    e = -sin_lon0 * dx + cos_lon0 * dy
    n = -sin_lat0 * cos_lon0 * dx - sin_lat0 * sin_lon0 * dy + cos_lat0 * dz
    if math.hypot(e, n) > MAX_RANGE_M:
        raise GeodesyError(
            f"points separated by more than {MAX_RANGE_M / 1000:.0f} km"
        )
    return EnuPoint(e, n)


def from_enu(p: EnuPoint, origin: GeoPoint) -> GeoPoint:
    """Geodetic point whose :func:`to_enu` image at ``origin`` is ``p``.

    Starts from the tangent-plane back-projection and refines with a few
    Newton steps so the round trip closes well below 1e-9 degrees.
    """
    if math.hypot(p.x, p.y) > MAX_RANGE_M:
        raise GeodesyError(f"offset exceeds {MAX_RANGE_M / 1000:.0f} km")

    lat0 = math.radians(origin.lat_deg)
    lon0 = math.radians(origin.lon_deg)
    x0, y0, z0 = _geodetic_to_ecef(lat0, lon0)
    sin_lat0, cos_lat0 = math.sin(lat0), math.cos(lat0)
    sin_lon0, cos_lon0 = math.sin(lon0), math.cos(lon0)

    # tangent-plane point lifted back to ECEF (up component zero)
    dx = -sin_lon0 * p.x - sin_lat0 * cos_lon0 * p.y
    dy = cos_lon0 * p.x - sin_lat0 * sin_lon0 * p.y
    dz = cos_lat0 * p.y
    lat, lon = _ecef_to_geodetic(x0 + dx, y0 + dy, z0 + dz)

    # Newton refinement against the forward projection
    for _ in range(10):
        g = GeoPoint(math.degrees(lat), math.degrees(lon))
        img = to_enu(g, origin)
        rx, ry = p.x - img.x, p.y - img.y
        if abs(rx) < 1e-10 and abs(ry) < 1e-10:
            break
        sin_lat = math.sin(lat)
        w = math.sqrt(1.0 - _E2 * sin_lat * sin_lat)
        m_per_rad_lat = _A * (1.0 - _E2) / w**3
        m_per_rad_lon = _A * math.cos(lat) / w
        lat += ry / m_per_rad_lat
        lon += rx / m_per_rad_lon
    return GeoPoint(math.degrees(lat), math.degrees(lon))
