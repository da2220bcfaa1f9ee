"""Safety scores: steering-stability and control-fluency series, event-level
reaction and route-deviation scores, the composite series, and the two-group
route divergence map."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core_model import Trip
from .geometry import (
    BinAssignment,
    ManeuverEvent,
    RoutePolyline,
    bin_by_arc_length,
    project_points,
)

SCORE_SELECTORS = ("composite", "s_stab", "sigma_steer", "f_raw")


class ScoringError(Exception):
    pass


@dataclass(frozen=True)
class ScoringConfig:
    window_w: int = 5                 # samples, centered, truncated at edges
    alpha: float = 0.5                # reaction-time vs smoothness blend
    theta_steer: float = 0.2          # |d steer| response threshold
    theta_brake: float = 0.25         # brake-level response threshold
    theta_throttle: float = 0.2       # |d throttle| response threshold
    w_stab: float = 0.5
    w_react: float = 0.25
    w_route: float = 0.25
    top_fraction: float = 0.10        # divergence bins flagged maximal
    deviation_agg: str = "mean"       # "mean" | "max" cross-track over event
    min_bin_samples: int = 3

    def __post_init__(self):
        if self.window_w < 2:
            raise ScoringError("window_w must be >= 2")
        if not 0.0 <= self.alpha <= 1.0:
            raise ScoringError("alpha must be in [0, 1]")
        ws = (self.w_stab, self.w_react, self.w_route)
        if min(ws) < 0 or abs(sum(ws) - 1.0) > 1e-12:
            raise ScoringError("composite weights must be nonnegative and sum to 1")
        if not 0.0 < self.top_fraction <= 1.0:
            raise ScoringError("top_fraction must be in (0, 1]")
        if self.deviation_agg not in ("mean", "max"):
            raise ScoringError("deviation_agg must be 'mean' or 'max'")


@dataclass
class SampleScores:
    t: np.ndarray
    sigma_steer: Optional[np.ndarray] = None
    f_raw: Optional[np.ndarray] = None
    s_stab: Optional[np.ndarray] = None
    composite: Optional[np.ndarray] = None
    sigma_max: float = 0.0


@dataclass
class EventScores:
    events: tuple[ManeuverEvent, ...]   # rt and D filled in
    s_time: np.ndarray
    s_fluent: np.ndarray
    s_react: np.ndarray
    s_route: np.ndarray
    no_response: np.ndarray             # bool per event
    rt_max: float = 0.0
    f_max: float = 0.0
    d_max: float = 0.0

    def __len__(self) -> int:
        return len(self.events)


def _window_bounds(i: int, n: int, w: int) -> tuple[int, int]:
    """Inclusive-exclusive bounds of the centered window of w samples at i,
    truncated at the trip edges."""
    lo = max(0, i - (w - 1) // 2)
    hi = min(n, i + w // 2 + 1)
    return lo, hi


def _windowed_variance(x: np.ndarray, w: int) -> np.ndarray:
    """Population variance over the centered window at each sample."""
    n = len(x)
    out = np.empty(n)
    half_lo, half_hi = (w - 1) // 2, w // 2
    interior0, interior1 = half_lo, n - half_hi
    if interior1 > interior0 and n >= w:
        win = np.lib.stride_tricks.sliding_window_view(x, w)
        out[interior0:interior1] = win.var(axis=1)
    for i in list(range(0, min(interior0, n))) + list(range(max(interior1, 0), n)):
        lo, hi = _window_bounds(i, n, w)
        out[i] = np.var(x[lo:hi])
    if n < w:
        for i in range(n):
            lo, hi = _window_bounds(i, n, w)
            out[i] = np.var(x[lo:hi])
    return out


def stability_series(trip: Trip, cfg: ScoringConfig) -> SampleScores:
    """Per-sample steering stability: local steering variance normalized by
    its trip maximum, inverted so 1 is perfectly stable."""
    n = len(trip)
    if n < cfg.window_w:
        raise ScoringError(f"trip shorter ({n}) than window ({cfg.window_w})")
    sigma = _windowed_variance(trip.channel("steer"), cfg.window_w)
    sigma_max = float(sigma.max())
    s_stab = np.ones(n) if sigma_max == 0.0 else 1.0 - sigma / sigma_max
    return SampleScores(t=trip.times(), sigma_steer=sigma, s_stab=s_stab,
                        sigma_max=sigma_max)


def fluency_series(trip: Trip, cfg: ScoringConfig,
                   scores: Optional[SampleScores] = None) -> SampleScores:
    """Per-sample control fluency: windowed mean of combined absolute first
    differences of throttle, brake, and steer, each channel normalized by its
    trip-level max step so the result is unit-free and in [0, 1]."""
    n = len(trip)
    if n < cfg.window_w:
        raise ScoringError(f"trip shorter ({n}) than window ({cfg.window_w})")
    combined = np.zeros(n - 1)
    for name in ("throttle", "brake", "steer"):
        d = np.abs(np.diff(trip.channel(name)))
        dmax = d.max() if len(d) else 0.0
        if dmax > 0:
            combined += d / dmax
    combined /= 3.0

    # window at i holds samples [lo, hi); its steps are delta indices [lo, hi-1)
    csum = np.concatenate([[0.0], np.cumsum(combined)])
    f_raw = np.empty(n)
    for i in range(n):
        lo, hi = _window_bounds(i, n, cfg.window_w)
        f_raw[i] = (csum[hi - 1] - csum[lo]) / (hi - lo)
    if scores is None:
        scores = SampleScores(t=trip.times())
    scores.f_raw = f_raw
    return scores


def sample_scores(trip: Trip, cfg: ScoringConfig) -> SampleScores:
    """Stability and fluency series on one pass."""
    scores = stability_series(trip, cfg)
    return fluency_series(trip, cfg, scores)


def _event_index_range(t: np.ndarray, ev: ManeuverEvent) -> tuple[int, int]:
    """Inclusive sample index range covered by the event window."""
    i0 = int(np.searchsorted(t, ev.t0 - 1e-9))
    i1 = int(np.searchsorted(t, ev.t1 + 1e-9)) - 1
    if i1 <= i0:
        raise ScoringError(f"event {ev.event_id} covers fewer than 2 samples")
    return i0, i1


def score_events(trip: Trip, events: Sequence[ManeuverEvent],
                 polyline: RoutePolyline, scores: SampleScores,
                 cfg: ScoringConfig) -> EventScores:
    """Event-level reaction and route-deviation scores.

    Reaction time is the delay from window start to the first control
    response (|d steer|, brake level, or |d throttle| crossing its
    threshold); events with no response within the window get the full
    window duration and a flag.
    """
    if scores.f_raw is None:
        raise ScoringError("fluency series must be computed first")
    if not events:
        empty = np.array([])
        return EventScores((), empty, empty, empty, empty, np.array([], dtype=bool))

    t = trip.times()
    steer = trip.channel("steer")
    throttle = trip.channel("throttle")
    brake = trip.channel("brake")
    pts = np.column_stack([trip.channel("pos_x"), trip.channel("pos_y")])
    dist, _ = project_points(pts, polyline)
    d_steer = np.abs(np.diff(steer))
    d_throttle = np.abs(np.diff(throttle))

    rts, f_bars, devs, no_resp = [], [], [], []
    for ev in events:
        i0, i1 = _event_index_range(t, ev)
        rt = None
        for j in range(i0, i1 + 1):
            if brake[j] >= cfg.theta_brake:
                rt = t[j] - t[i0]
                break
            if j > i0 and (d_steer[j - 1] >= cfg.theta_steer
                           or d_throttle[j - 1] >= cfg.theta_throttle):
                rt = t[j] - t[i0]
                break
        if rt is None:
            rts.append(t[i1] - t[i0])
            no_resp.append(True)
        else:
            rts.append(float(rt))
            no_resp.append(False)
        f_bars.append(float(np.mean(scores.f_raw[i0:i1 + 1])))
        window_dist = dist[i0:i1 + 1]
        devs.append(float(window_dist.max() if cfg.deviation_agg == "max"
                          else window_dist.mean()))

    rts = np.array(rts)
    f_bars = np.array(f_bars)
    devs = np.array(devs)
    rt_max = float(rts.max())
    f_max = float(f_bars.max())
    d_max = float(devs.max())
    s_time = np.ones(len(rts)) if rt_max == 0 else 1.0 - rts / rt_max
    s_fluent = np.ones(len(rts)) if f_max == 0 else 1.0 - f_bars / f_max
    s_react = cfg.alpha * s_time + (1.0 - cfg.alpha) * s_fluent
    s_route = np.ones(len(rts)) if d_max == 0 else 1.0 - devs / d_max

    scored = tuple(ev.with_scores(float(rt), float(d))
                   for ev, rt, d in zip(events, rts, devs))
    return EventScores(scored, s_time, s_fluent, s_react, s_route,
                       np.array(no_resp), rt_max, f_max, d_max)


def composite_series(scores: SampleScores, event_scores: EventScores,
                     cfg: ScoringConfig) -> SampleScores:
    """Weighted blend of the per-sample stability score with the containing
    event's reaction and route scores; samples outside every event use the
    neutral value 1.  Overlaps resolve to the earliest-starting event."""
    if scores.s_stab is None:
        raise ScoringError("stability series must be computed first")
    t = scores.t
    s_react_t = np.ones(len(t))
    s_route_t = np.ones(len(t))
    order = sorted(range(len(event_scores)), key=lambda k: event_scores.events[k].t0,
                   reverse=True)
    for k in order:
        ev = event_scores.events[k]
        mask = (t >= ev.t0 - 1e-9) & (t <= ev.t1 + 1e-9)
        s_react_t[mask] = event_scores.s_react[k]
        s_route_t[mask] = event_scores.s_route[k]
    scores.composite = (cfg.w_stab * scores.s_stab
                        + cfg.w_react * s_react_t
                        + cfg.w_route * s_route_t)
    return scores


def select_series(scores: SampleScores, which: str) -> np.ndarray:
    if which not in SCORE_SELECTORS:
        raise ScoringError(f"unknown score selector {which!r}")
    arr = getattr(scores, which)
    if arr is None:
        raise ScoringError(f"series {which!r} not computed")
    return arr


@dataclass(frozen=True)
class DivergenceMap:
    bin_index: np.ndarray
    arc_start: np.ndarray
    arc_end: np.ndarray
    mean_a: np.ndarray          # NaN where insufficient data
    mean_b: np.ndarray
    n_a: np.ndarray
    n_b: np.ndarray
    divergence: np.ndarray      # NaN where insufficient data
    flags: tuple[str, ...]      # maximal | baseline | insufficient_data

    def maximal_bins(self) -> list[int]:
        return [int(i) for i, f in zip(self.bin_index, self.flags) if f == "maximal"]


def group_divergence_map(group_a: Sequence[tuple[Trip, SampleScores]],
                         group_b: Sequence[tuple[Trip, SampleScores]],
                         polyline: RoutePolyline, bin_size: float,
                         cfg: ScoringConfig, which: str = "composite",
                         gate_m: float = 30.0) -> DivergenceMap:
    """Per-route-bin absolute difference of group mean scores; the top
    fraction of sufficiently-populated bins is flagged maximal."""
    if not group_a or not group_b:
        raise ScoringError("both groups need at least one trip")

    n_bins = len(bin_by_arc_length(group_a[0][0], polyline, bin_size, gate_m).bins)
    sums = {g: np.zeros(n_bins) for g in "ab"}
    counts = {g: np.zeros(n_bins, dtype=int) for g in "ab"}
    for g, group in (("a", group_a), ("b", group_b)):
        for trip, scores in group:
            assign = bin_by_arc_length(trip, polyline, bin_size, gate_m)
            series = select_series(scores, which)
            for b in range(n_bins):
                mask = assign.bin_index == b
                if mask.any():
                    sums[g][b] += series[mask].sum()
                    counts[g][b] += int(mask.sum())

    with np.errstate(invalid="ignore", divide="ignore"):
        mean_a = np.where(counts["a"] > 0, sums["a"] / np.maximum(counts["a"], 1), np.nan)
        mean_b = np.where(counts["b"] > 0, sums["b"] / np.maximum(counts["b"], 1), np.nan)
    sufficient = (counts["a"] >= cfg.min_bin_samples) & (counts["b"] >= cfg.min_bin_samples)
    divergence = np.where(sufficient, np.abs(mean_a - mean_b), np.nan)

    flags = ["insufficient_data"] * n_bins
    eligible = [b for b in range(n_bins) if sufficient[b]]
    n_max = math.ceil(cfg.top_fraction * len(eligible))
    ranked = sorted(eligible, key=lambda b: (-divergence[b], b))
    for b in ranked[:n_max]:
        flags[b] = "maximal"
    for b in ranked[n_max:]:
        flags[b] = "baseline"

    bins = make_bins_for(polyline, bin_size)
    return DivergenceMap(
        bin_index=np.arange(n_bins),
        arc_start=np.array([b.arc_start for b in bins]),
        arc_end=np.array([b.arc_end for b in bins]),
        mean_a=mean_a, mean_b=mean_b,
        n_a=counts["a"], n_b=counts["b"],
        divergence=divergence, flags=tuple(flags),
    )


def make_bins_for(polyline: RoutePolyline, bin_size: float):
    from .geometry import make_bins
    return make_bins(polyline.total_length, bin_size)
