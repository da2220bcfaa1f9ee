"""Route geometry: cross-track distance, arc-length binning, turn and
event-zone detection."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core_model import Trip

DEFAULT_OFFROUTE_GATE_M = 30.0
DEFAULT_TURN_THRESHOLD_DEG = 60.0
DEFAULT_TURN_WINDOW_S = 15.0

EVENT_KINDS = ("turn_left", "turn_right", "intersection_approach", "braking")
ZONE_KINDS = ("intersection", "curve", "custom")


class RouteError(Exception):
    pass


@dataclass(frozen=True)
class RoutePolyline:
    waypoints: np.ndarray      # (N, 2) meters
    cum_length: np.ndarray     # (N,) cumulative arc length

    @classmethod
    def from_waypoints(cls, waypoints) -> "RoutePolyline":
        pts = np.asarray(waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise RouteError("need at least 2 (x, y) waypoints")
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg <= 0):
            raise RouteError("consecutive waypoints must be distinct")
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        pts.setflags(write=False)
        cum.setflags(write=False)
        return cls(pts, cum)

    @property
    def total_length(self) -> float:
        return float(self.cum_length[-1])

    def point_at(self, arc: float) -> np.ndarray:
        """Point on the polyline at the given arc-length coordinate."""
        arc = min(max(arc, 0.0), self.total_length)
        i = int(np.searchsorted(self.cum_length, arc, side="right") - 1)
        i = min(i, len(self.cum_length) - 2)
        seg_len = self.cum_length[i + 1] - self.cum_length[i]
        u = (arc - self.cum_length[i]) / seg_len
        return self.waypoints[i] + u * (self.waypoints[i + 1] - self.waypoints[i])

    def tangent_at(self, arc: float) -> np.ndarray:
        arc = min(max(arc, 0.0), self.total_length)
        i = int(np.searchsorted(self.cum_length, arc, side="right") - 1)
        i = min(max(i, 0), len(self.cum_length) - 2)
        d = self.waypoints[i + 1] - self.waypoints[i]
        return d / np.linalg.norm(d)


@dataclass(frozen=True)
class RouteBin:
    index: int
    arc_start: float
    arc_end: float


@dataclass(frozen=True)
class EventZone:
    zone_id: str
    kind: str
    arc_center: float
    trigger_radius: float

    def __post_init__(self):
        if self.trigger_radius <= 0:
            raise RouteError("trigger_radius must be positive")
        if self.kind not in ZONE_KINDS:
            raise RouteError(f"unknown zone kind {self.kind!r}")


@dataclass(frozen=True)
class ManeuverEvent:
    event_id: str
    kind: str
    t0: float
    t1: float
    zone_ref: Optional[str] = None
    rt: Optional[float] = None
    D: Optional[float] = None

    def __post_init__(self):
        if not self.t0 < self.t1:
            raise RouteError(f"event window degenerate: [{self.t0}, {self.t1}]")

    def with_scores(self, rt: float, D: float) -> "ManeuverEvent":
        return replace(self, rt=rt, D=D)


def cross_track_distance(point, polyline: RoutePolyline) -> tuple[float, float]:
    """Distance from a point to the polyline and the arc-length coordinate of
    the nearest route point."""
    d, a = project_points(np.asarray(point, dtype=float)[None, :], polyline)
    return float(d[0]), float(a[0])


def project_points(points: np.ndarray, polyline: RoutePolyline) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized point-to-polyline projection.

    Returns (distances, arc_coords), one entry per input point; ties between
    segments resolve to the earlier segment.
    """
    pts = np.asarray(points, dtype=float)
    a = polyline.waypoints[:-1]                      # (S, 2)
    b = polyline.waypoints[1:]
    ab = b - a
    seg_len2 = np.einsum("ij,ij->i", ab, ab)         # (S,)
    # (P, S) parameter of the foot of the perpendicular, clamped to segment
    ap = pts[:, None, :] - a[None, :, :]
    u = np.clip(np.einsum("psj,sj->ps", ap, ab) / seg_len2, 0.0, 1.0)
    foot = a[None, :, :] + u[:, :, None] * ab[None, :, :]
    dist = np.linalg.norm(pts[:, None, :] - foot, axis=2)
    best = np.argmin(dist, axis=1)
    rows = np.arange(len(pts))
    arcs = polyline.cum_length[best] + u[rows, best] * np.sqrt(seg_len2[best])
    return dist[rows, best], arcs


def make_bins(total_length: float, bin_size: float) -> list[RouteBin]:
    if bin_size <= 0:
        raise RouteError("bin_size must be positive")
    n = max(1, int(math.ceil(total_length / bin_size - 1e-9)))
    return [
        RouteBin(i, i * bin_size, min((i + 1) * bin_size, total_length))
        for i in range(n)
    ]


@dataclass(frozen=True)
class BinAssignment:
    bins: tuple[RouteBin, ...]
    bin_index: np.ndarray      # per sample; -1 = unassigned (off-route)
    arc: np.ndarray            # per-sample arc coordinate of nearest point
    distance: np.ndarray       # per-sample cross-track distance
    offroute: np.ndarray       # bool flags for gated-out samples


def bin_by_arc_length(trip: Trip, polyline: RoutePolyline, bin_size: float,
                      gate_m: float = DEFAULT_OFFROUTE_GATE_M) -> BinAssignment:
    """Assign each sample to the route bin containing its nearest-point arc
    coordinate; samples farther than gate_m from the route stay unassigned."""
    pts = np.column_stack([trip.channel("pos_x"), trip.channel("pos_y")])
    dist, arc = project_points(pts, polyline)
    bins = make_bins(polyline.total_length, bin_size)
    idx = np.minimum((arc / bin_size).astype(int), len(bins) - 1)
    offroute = dist > gate_m
    idx = np.where(offroute, -1, idx)
    return BinAssignment(tuple(bins), idx, arc, dist, offroute)


def _heading_deltas(heading: np.ndarray) -> np.ndarray:
    """Per-step shortest-arc heading change in degrees; positive = clockwise
    (right turn for compass headings)."""
    d = np.diff(heading)
    return (d + 180.0) % 360.0 - 180.0


def detect_turns(trip: Trip,
                 heading_threshold: float = DEFAULT_TURN_THRESHOLD_DEG,
                 max_window: float = DEFAULT_TURN_WINDOW_S) -> list[ManeuverEvent]:
    """Detect turns as windows where cumulative signed heading change reaches
    the threshold within max_window seconds.  Overlapping same-sign
    detections merge into a single event."""
    t = trip.times()
    d = _heading_deltas(trip.channel("heading"))
    if len(d) == 0:
        return []
    w = max(1, int(round(max_window * trip.sample_rate)))
    # rolling sum of the last w deltas, index j covers deltas (j-w, j]
    c = np.concatenate([[0.0], np.cumsum(d)])
    roll = c[1:] - c[np.maximum(np.arange(len(d)) + 1 - w, 0)]
    trig_sign = np.where(roll >= heading_threshold, 1,
                         np.where(roll <= -heading_threshold, -1, 0))

    events: list[ManeuverEvent] = []
    runs: list[tuple[int, int, int]] = []   # (sign, first_trigger, last_trigger)
    for j, s in enumerate(trig_sign):
        if s == 0:
            continue
        if runs and runs[-1][0] == s and j - runs[-1][2] <= w:
            runs[-1] = (s, runs[-1][1], j)
        else:
            runs.append((s, j, j))
    for k, (s, j0, j1) in enumerate(runs):
        kind = "turn_right" if s > 0 else "turn_left"
        i_start = max(0, j0 + 1 - w)
        events.append(ManeuverEvent(
            event_id=f"{kind}_{k}", kind=kind,
            t0=float(t[i_start]), t1=float(t[j1 + 1]),
        ))
    events.sort(key=lambda e: e.t0)
    return events


def detect_event_zones(trip: Trip, zones: Sequence[EventZone],
                       polyline: RoutePolyline) -> list[ManeuverEvent]:
    """One intersection_approach event per zone traversal: the window opens
    when the vehicle's arc coordinate enters [center - r, center + r] and
    closes when it leaves.  Single-sample traversals are dropped (a window
    needs t0 < t1)."""
    pts = np.column_stack([trip.channel("pos_x"), trip.channel("pos_y")])
    _, arc = project_points(pts, polyline)
    t = trip.times()
    events: list[ManeuverEvent] = []
    for zone in zones:
        inside = np.abs(arc - zone.arc_center) <= zone.trigger_radius
        edges = np.diff(inside.astype(int))
        starts = list(np.where(edges == 1)[0] + 1)
        ends = list(np.where(edges == -1)[0])
        if inside[0]:
            starts.insert(0, 0)
        if inside[-1]:
            ends.append(len(inside) - 1)
        for k, (i0, i1) in enumerate(zip(starts, ends)):
            if i1 <= i0:
                continue
            events.append(ManeuverEvent(
                event_id=f"zone_{zone.zone_id}_{k}",
                kind="intersection_approach",
                t0=float(t[i0]), t1=float(t[i1]),
                zone_ref=zone.zone_id,
            ))
    events.sort(key=lambda e: (e.t0, e.event_id))
    return events


# ---------------------------------------------------------------------------
# route file I/O

def route_to_json(polyline: RoutePolyline, zones: Sequence[EventZone]) -> str:
    return json.dumps({
        "waypoints": [[float(x), float(y)] for x, y in polyline.waypoints],
        "zones": [
            {"id": z.zone_id, "kind": z.kind,
             "arc_center": z.arc_center, "trigger_radius": z.trigger_radius}
            for z in zones
        ],
    }, indent=2) + "\n"


def load_route(path: Path) -> tuple[RoutePolyline, list[EventZone]]:
    d = json.loads(Path(path).read_text())
    poly = RoutePolyline.from_waypoints(d["waypoints"])
    zones = [
        EventZone(z["id"], z.get("kind", "custom"),
                  float(z["arc_center"]), float(z["trigger_radius"]))
        for z in d.get("zones", [])
    ]
    for z in zones:
        if not (0.0 <= z.arc_center <= poly.total_length):
            raise RouteError(f"zone {z.zone_id} arc_center outside route")
    return poly, zones
