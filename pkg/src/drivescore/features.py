"""Behavioral features across time scales (sample, trip, week, month) and
context-conditioned comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import time
from typing import Optional, Sequence

import numpy as np

from .core_model import Trip
from .geometry import detect_turns

METERS_PER_MILE = 1609.344

DEFAULT_HARD_BRAKE_THRESHOLD = -3.0     # m/s^2
DEFAULT_HARD_BRAKE_MIN_DURATION = 0.5   # s
DEFAULT_NIGHT_WINDOW = (time(20, 0), time(6, 0))
DEFAULT_SHORT_TRIP_M = 5000.0
DEFAULT_LEAD_GAP_THRESHOLD = 50.0       # m
DEFAULT_LARGE_MOTION_DEG = 15.0
DEFAULT_HIST_EDGES = tuple(float(e) for e in range(-60, 61, 5))


class FeatureError(Exception):
    pass


class HeadChannelsMissing(FeatureError):
    """Raised when head-pose stats are requested but the channels are absent."""


def _circ_diff(angles: np.ndarray) -> np.ndarray:
    d = np.diff(angles)
    return (d + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class ScanStats:
    mean_abs_daz: float
    mean_abs_del: float
    large_motion_fraction: float
    hist_edges: tuple[float, ...]
    hist_daz: tuple[int, ...]
    hist_del: tuple[int, ...]
    frame_pairs: int


def head_scan_stats(trip: Trip,
                    large_motion_threshold: float = DEFAULT_LARGE_MOTION_DEG,
                    hist_edges: Sequence[float] = DEFAULT_HIST_EDGES) -> ScanStats:
    """Frame-to-frame head-movement statistics (shortest-arc deltas)."""
    if len(trip) < 2:
        raise FeatureError("trip too short for frame-to-frame deltas")
    if not trip.has_head_channels():
        raise HeadChannelsMissing("head_az/head_el channels absent")
    daz = _circ_diff(trip.channel("head_az"))
    dele = _circ_diff(trip.channel("head_el"))
    edges = np.asarray(hist_edges, dtype=float)
    # clip so every delta lands in a bin and counts sum to the pair count
    hist_daz, _ = np.histogram(np.clip(daz, edges[0], edges[-1]), bins=edges)
    hist_del, _ = np.histogram(np.clip(dele, edges[0], edges[-1]), bins=edges)
    return ScanStats(
        mean_abs_daz=float(np.mean(np.abs(daz))),
        mean_abs_del=float(np.mean(np.abs(dele))),
        large_motion_fraction=float(np.mean(np.abs(daz) > large_motion_threshold)),
        hist_edges=tuple(float(e) for e in edges),
        hist_daz=tuple(int(c) for c in hist_daz),
        hist_del=tuple(int(c) for c in hist_del),
        frame_pairs=len(daz),
    )


@dataclass(frozen=True)
class HardBrakeEvent:
    t0: float
    t1: float
    min_accel: float


def detect_hard_brakes(trip: Trip,
                       threshold: float = DEFAULT_HARD_BRAKE_THRESHOLD,
                       min_duration: float = DEFAULT_HARD_BRAKE_MIN_DURATION
                       ) -> list[HardBrakeEvent]:
    """Maximal runs of accel <= threshold lasting at least min_duration;
    runs separated by less than one sample period merge."""
    t = trip.times()
    accel = trip.channel("accel")
    below = accel <= threshold
    if not below.any():
        return []
    edges = np.diff(below.astype(int))
    starts = list(np.where(edges == 1)[0] + 1)
    ends = list(np.where(edges == -1)[0])
    if below[0]:
        starts.insert(0, 0)
    if below[-1]:
        ends.append(len(below) - 1)

    period = 1.0 / trip.sample_rate
    merged: list[list[int]] = []
    for i0, i1 in zip(starts, ends):
        if merged and t[i0] - t[merged[-1][1]] < period - 1e-9:
            merged[-1][1] = i1
        else:
            merged.append([i0, i1])

    out = []
    for i0, i1 in merged:
        if t[i1] - t[i0] + 1e-9 >= min_duration:
            out.append(HardBrakeEvent(float(t[i0]), float(t[i1]),
                                      float(accel[i0:i1 + 1].min())))
    return out


def trip_distance_m(trip: Trip) -> float:
    """Trapezoidal integral of speed over the trip."""
    return float(np.trapezoid(trip.channel("speed"), trip.times()))


@dataclass(frozen=True)
class WeeklyProfile:
    iso_week: str              # e.g. "2026-W23"
    mean_speed: float          # duration-weighted, m/s
    hard_brake_count: int
    trip_count: int
    total_miles: float


def weekly_profiles(trips: Sequence[Trip],
                    hard_brake_threshold: float = DEFAULT_HARD_BRAKE_THRESHOLD,
                    hard_brake_min_duration: float = DEFAULT_HARD_BRAKE_MIN_DURATION
                    ) -> list[WeeklyProfile]:
    """Trips bucketed by ISO week of their start clock; weeks without trips
    are omitted rather than zero-filled."""
    buckets: dict[str, list[Trip]] = {}
    for trip in trips:
        iso = trip.start_clock.isocalendar()
        key = f"{iso[0]}-W{iso[1]:02d}"
        buckets.setdefault(key, []).append(trip)

    profiles = []
    for key in sorted(buckets):
        group = buckets[key]
        total_dist = sum(trip_distance_m(t) for t in group)
        total_dur = sum(t.duration for t in group)
        brakes = sum(len(detect_hard_brakes(t, hard_brake_threshold,
                                            hard_brake_min_duration))
                     for t in group)
        profiles.append(WeeklyProfile(
            iso_week=key,
            mean_speed=total_dist / total_dur if total_dur > 0 else 0.0,
            hard_brake_count=brakes,
            trip_count=len(group),
            total_miles=total_dist / METERS_PER_MILE,
        ))
    return profiles


@dataclass(frozen=True)
class MobilityProfile:
    month: str                 # "YYYY-MM"
    miles_per_month: float
    trips_per_month: int
    night_trip_count: int
    night_trip_fraction: float
    short_trip_ratio: float
    right_turns: int
    left_turns: int
    right_left_ratio: float    # (R+1)/(L+1) Laplace smoothed


def _is_night(clock, night_window) -> bool:
    start, end = night_window
    t = clock.time()
    if start <= end:
        return start <= t < end
    return t >= start or t < end


def monthly_mobility(trips: Sequence[Trip],
                     night_window=DEFAULT_NIGHT_WINDOW,
                     short_trip_m: float = DEFAULT_SHORT_TRIP_M,
                     turn_threshold: float = 60.0,
                     turn_window: float = 15.0) -> list[MobilityProfile]:
    """LongROAD-style per-month mobility metrics."""
    buckets: dict[str, list[Trip]] = {}
    for trip in trips:
        key = f"{trip.start_clock.year}-{trip.start_clock.month:02d}"
        buckets.setdefault(key, []).append(trip)

    profiles = []
    for key in sorted(buckets):
        group = buckets[key]
        dists = [trip_distance_m(t) for t in group]
        n = len(group)
        night = sum(1 for t in group if _is_night(t.start_clock, night_window))
        short = sum(1 for d in dists if d < short_trip_m)
        right = left = 0
        for t in group:
            for ev in detect_turns(t, turn_threshold, turn_window):
                if ev.kind == "turn_right":
                    right += 1
                else:
                    left += 1
        profiles.append(MobilityProfile(
            month=key,
            miles_per_month=sum(dists) / METERS_PER_MILE,
            trips_per_month=n,
            night_trip_count=night,
            night_trip_fraction=night / n,
            short_trip_ratio=short / n,
            right_turns=right,
            left_turns=left,
            right_left_ratio=(right + 1) / (left + 1),
        ))
    return profiles


@dataclass(frozen=True)
class ContextSegment:
    i0: int                    # first sample index
    i1: int                    # last sample index (inclusive)
    t0: float
    t1: float
    lead_present: bool
    weather: str               # absent weather maps to "unknown"


def partition_context(trip: Trip,
                      lead_gap_threshold: float = DEFAULT_LEAD_GAP_THRESHOLD
                      ) -> list[ContextSegment]:
    """Maximal runs of constant (lead_present, weather) covering the trip."""
    t = trip.times()
    gap = trip.channel("lead_gap")
    lead = ~np.isnan(gap) & (gap <= lead_gap_threshold)
    weather = [w if w is not None else "unknown" for w in trip.channel("weather")]

    segments = []
    start = 0
    for i in range(1, len(trip) + 1):
        if (i == len(trip) or lead[i] != lead[start]
                or weather[i] != weather[start]):
            segments.append(ContextSegment(
                i0=start, i1=i - 1, t0=float(t[start]), t1=float(t[i - 1]),
                lead_present=bool(lead[start]), weather=weather[start],
            ))
            start = i
    return segments


def segment_key(seg: ContextSegment, by: str):
    if by == "lead_present":
        return seg.lead_present
    if by == "weather":
        return seg.weather
    if by == "stratum":
        return (seg.lead_present, seg.weather)
    raise FeatureError(f"unknown context field {by!r}")


@dataclass(frozen=True)
class ConditionStats:
    condition: object
    n: int
    mean: float
    sd: float                  # sample standard deviation


@dataclass(frozen=True)
class ConditionComparison:
    by: str
    stats: tuple[ConditionStats, ...]
    primary: tuple[object, object]
    effect_size: float         # Cohen's d between the two primary conditions
    degenerate_variance: bool


def compare_conditions(series: np.ndarray, segments: Sequence[ContextSegment],
                       by: str = "lead_present",
                       primary: Optional[tuple] = None) -> ConditionComparison:
    """Per-condition n/mean/sd of a per-sample series plus Cohen's d between
    two primary conditions.  Conditions with zero samples are omitted.

    For boolean conditions the default primary order is (False, True), so a
    positive d means the series is larger without the condition.
    """
    groups: dict[object, list[float]] = {}
    for seg in segments:
        key = segment_key(seg, by)
        groups.setdefault(key, []).extend(series[seg.i0:seg.i1 + 1].tolist())
    groups = {k: v for k, v in groups.items() if v}
    if not groups:
        raise FeatureError("no samples in any condition")

    stats = tuple(
        ConditionStats(k, len(v), float(np.mean(v)),
                       float(np.std(v, ddof=1)) if len(v) > 1 else 0.0)
        for k, v in sorted(groups.items(), key=lambda kv: str(kv[0]))
    )
    if primary is None:
        keys = sorted(groups.keys(), key=str)
        primary = (keys[0], keys[1]) if len(keys) >= 2 else (keys[0], keys[0])

    d = 0.0
    degenerate = False
    if primary[0] != primary[1] and primary[0] in groups and primary[1] in groups:
        x1 = np.asarray(groups[primary[0]])
        x2 = np.asarray(groups[primary[1]])
        n1, n2 = len(x1), len(x2)
        v1 = x1.var(ddof=1) if n1 > 1 else 0.0
        v2 = x2.var(ddof=1) if n2 > 1 else 0.0
        denom_df = n1 + n2 - 2
        pooled = math.sqrt(((n1 - 1) * v1 + (n2 - 1) * v2) / denom_df) if denom_df > 0 else 0.0
        if pooled == 0.0:
            degenerate = True
        else:
            d = float((x1.mean() - x2.mean()) / pooled)
    return ConditionComparison(by, stats, tuple(primary), d, degenerate)


def situation_normalize(series: np.ndarray,
                        segments: Sequence[ContextSegment]) -> np.ndarray:
    """Z-score each value within its context stratum (lead_present, weather),
    pooling all segments of the same stratum; zero-variance strata map to 0."""
    series = np.asarray(series, dtype=float)
    covered = np.zeros(len(series), dtype=bool)
    out = np.empty_like(series)
    strata: dict[object, np.ndarray] = {}
    for seg in segments:
        key = (seg.lead_present, seg.weather)
        mask = np.zeros(len(series), dtype=bool)
        mask[seg.i0:seg.i1 + 1] = True
        strata[key] = strata.get(key, np.zeros(len(series), dtype=bool)) | mask
        covered |= mask
    if not covered.all():
        raise FeatureError("segments do not cover the whole series")
    for mask in strata.values():
        vals = series[mask]
        sd = vals.std()
        out[mask] = 0.0 if sd == 0.0 else (vals - vals.mean()) / sd
    return out
