"""Polyline routes: chainage arithmetic, interpolation, and projection.

A route is a polyline of geographic points.  Buses live at a chainage
(distance along the line, in meters); non-circular routes hold position at
the end, circular ones wrap.
"""

import bisect
from dataclasses import dataclass, field

from .. import geo


@dataclass
class Route:
    route_id: str
    points: list
    circular: bool = False
    _chainage: list = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError(f"route {self.route_id}: needs at least 2 points")
        chain = [0.0]
        for a, b in zip(self.points, self.points[1:]):
            chain.append(chain[-1] + geo.distance_m(a, b))
        self._chainage = chain
        if self.length_m <= 0:
            raise ValueError(f"route {self.route_id}: zero length")

    @property
    def length_m(self) -> float:
        return self._chainage[-1]

    def advance(self, chainage: float, distance: float) -> float:
        """Move forward; clamp at the end or wrap when circular."""
        if distance < 0:
            raise ValueError("distance must be >= 0")
        new = chainage + distance
        if self.circular:
            return new % self.length_m
        return min(new, self.length_m)

    def position_at(self, chainage: float) -> geo.Point:
        """Point at a chainage (clamped into [0, length])."""
        s = min(max(chainage, 0.0), self.length_m)
        idx = bisect.bisect_right(self._chainage, s) - 1
        if idx >= len(self.points) - 1:
            return self.points[-1]
        seg_start = self._chainage[idx]
        seg_len = self._chainage[idx + 1] - seg_start
        fraction = 0.0 if seg_len == 0 else (s - seg_start) / seg_len
        return geo.interpolate(self.points[idx], self.points[idx + 1], fraction)

    def project(self, point: geo.Point) -> tuple[float, float]:
        """(chainage, offset_m) of the closest point on the route.

        Works in the local planar frame; exact enough at city scale for
        stop placement and ETA math.
        """
        origin = self.points[0]
        px, py = geo.offset_m(origin, point)
        best_chain, best_off = 0.0, float("inf")
        for idx in range(len(self.points) - 1):
            ax, ay = geo.offset_m(origin, self.points[idx])
            bx, by = geo.offset_m(origin, self.points[idx + 1])
            dx, dy = bx - ax, by - ay
            seg_sq = dx * dx + dy * dy
            if seg_sq == 0:
                t = 0.0
            else:
                t = ((px - ax) * dx + (py - ay) * dy) / seg_sq
                t = min(max(t, 0.0), 1.0)
            cx, cy = ax + t * dx, ay + t * dy
            off = ((px - cx) ** 2 + (py - cy) ** 2) ** 0.5
            if off < best_off:
                seg_len = self._chainage[idx + 1] - self._chainage[idx]
                best_off = off
                best_chain = self._chainage[idx] + t * seg_len
        return best_chain, best_off
