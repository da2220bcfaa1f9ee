"""Deterministic synthetic trip generator: parametric driver models driving
scripted scenarios, emitting telemetry plus a ground-truth log that downstream
tests use as their oracle."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core_model import TelemetrySample, Trip
from .geometry import EventZone, RoutePolyline

# longitudinal model constants
A_MAX = 2.5               # m/s^2 peak engine acceleration
KP_SPEED = 1.5            # 1/s speed-tracking gain
KG_GAP = 0.5              # 1/s gap-tracking gain
GAP_CLOSING_CAP = 0.5     # m/s max speed surplus over the lead while closing
GAP_OPENING_CAP = 3.0     # m/s max speed deficit while falling back
MIN_GAP = 4.0             # m standstill gap in the headway law
BRAKE_DEADBAND = 0.3      # m/s^2 of commanded decel before the brake engages
RESPONSE_BRAKE = 0.35     # brake level of the scripted maneuver response
RESPONSE_DURATION = 1.0   # s
FULL_LOCK_RATE = 45.0     # deg/s of heading change at steer = 1
LAT_GAIN = 15.0           # m of lateral offset per unit of steering noise
LAT_TAU = 2.0             # s lateral offset time constant
PEDAL_JITTER = 0.05       # m/s^2 sd of pedal command jitter
HEAD_JITTER_DEG = 0.6     # deg sd of head-pose sensor jitter


class ScenarioError(Exception):
    pass


def _drag(v: float) -> float:
    return 0.08 + 0.04 * v


@dataclass(frozen=True)
class DriverModel:
    reaction_latency: float       # s
    preferred_speed: float        # m/s
    throttle_gain: float          # (0, 1]
    brake_aggressiveness: float   # m/s^2 peak decel at brake = 1
    steer_noise_sd: float         # normalized steer units
    scan_amplitude: float         # deg head azimuth
    scan_period: float            # s
    following_headway: float      # s desired time gap behind a lead

    def __post_init__(self):
        if self.reaction_latency < 0:
            raise ScenarioError("reaction_latency must be >= 0")
        for name in ("preferred_speed", "brake_aggressiveness",
                     "scan_amplitude", "scan_period", "following_headway"):
            if getattr(self, name) <= 0:
                raise ScenarioError(f"{name} must be positive")
        if not 0.0 < self.throttle_gain <= 1.0:
            raise ScenarioError("throttle_gain must be in (0, 1]")
        if self.steer_noise_sd < 0:
            raise ScenarioError("steer_noise_sd must be >= 0")


SENIOR_DEFAULT = DriverModel(
    reaction_latency=1.5, preferred_speed=11.0, throttle_gain=0.45,
    brake_aggressiveness=4.5, steer_noise_sd=0.03,
    scan_amplitude=40.0, scan_period=3.5, following_headway=2.5,
)
YOUNG_DEFAULT = DriverModel(
    reaction_latency=0.6, preferred_speed=15.0, throttle_gain=0.8,
    brake_aggressiveness=3.0, steer_noise_sd=0.012,
    scan_amplitude=20.0, scan_period=5.0, following_headway=1.5,
)
PRESETS = {"senior_default": SENIOR_DEFAULT, "young_default": YOUNG_DEFAULT}


@dataclass(frozen=True)
class LeadPhase:
    t_start: float
    t_end: float
    initial_gap: float    # m
    lead_speed: float     # m/s, constant over the phase


@dataclass(frozen=True)
class HardBrakeInjection:
    t: float
    decel: float          # m/s^2, magnitude
    duration: float       # s


@dataclass(frozen=True)
class NoiseInterval:
    arc_start: float
    arc_end: float
    factor: float         # steer-noise sd multiplier inside the interval


@dataclass(frozen=True)
class Scenario:
    route: RoutePolyline
    zones: tuple[EventZone, ...]
    lead_schedule: tuple[LeadPhase, ...] = ()
    weather_phases: tuple[tuple[float, str], ...] = ((0.0, "clear"),)
    hard_brake_injections: tuple[HardBrakeInjection, ...] = ()
    steer_noise_intervals: tuple[NoiseInterval, ...] = ()
    duration: float = 300.0
    sample_rate: float = 10.0
    start_clock: datetime = datetime(2026, 6, 1, 12, 0)

    def __post_init__(self):
        if self.duration <= 0 or self.sample_rate <= 0:
            raise ScenarioError("duration and sample_rate must be positive")
        for ph in self.lead_schedule:
            if not 0 <= ph.t_start < ph.t_end <= self.duration:
                raise ScenarioError("lead phase outside [0, duration]")
        for t, w in self.weather_phases:
            if not 0 <= t <= self.duration:
                raise ScenarioError("weather phase outside [0, duration]")
        inj = sorted(self.hard_brake_injections, key=lambda h: h.t)
        for a, b in zip(inj, inj[1:]):
            if a.t + a.duration > b.t:
                raise ScenarioError("hard brake injections overlap")
        for h in inj:
            if not (0 <= h.t and h.t + h.duration <= self.duration):
                raise ScenarioError("injection outside [0, duration]")


@dataclass(frozen=True)
class ZoneStimulus:
    zone_id: str
    stimulus_time: float     # continuous time the trigger region is entered
    response_time: float     # stimulus_time + reaction_latency, exact


@dataclass(frozen=True)
class GroundTruthLog:
    trip_id: str
    zone_events: tuple[ZoneStimulus, ...]
    hard_brakes: tuple[HardBrakeInjection, ...]
    lead_intervals: tuple[tuple[float, float], ...]
    lead_gap: tuple[Optional[float], ...]   # per sample

    def to_json(self) -> str:
        return json.dumps({
            "trip_id": self.trip_id,
            "zone_events": [
                {"zone_id": z.zone_id, "stimulus_time": z.stimulus_time,
                 "response_time": z.response_time}
                for z in self.zone_events
            ],
            "hard_brakes": [
                {"t": h.t, "decel": h.decel, "duration": h.duration}
                for h in self.hard_brakes
            ],
            "lead_intervals": [list(iv) for iv in self.lead_intervals],
            "lead_gap": [g for g in self.lead_gap],
        }, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "GroundTruthLog":
        d = json.loads(text)
        return cls(
            trip_id=d["trip_id"],
            zone_events=tuple(ZoneStimulus(z["zone_id"], z["stimulus_time"],
                                           z["response_time"])
                              for z in d["zone_events"]),
            hard_brakes=tuple(HardBrakeInjection(h["t"], h["decel"], h["duration"])
                              for h in d["hard_brakes"]),
            lead_intervals=tuple((a, b) for a, b in d["lead_intervals"]),
            lead_gap=tuple(d["lead_gap"]),
        )


def _compass_heading(tangent: np.ndarray) -> float:
    """Heading in degrees clockwise from north (+y axis)."""
    return math.degrees(math.atan2(tangent[0], tangent[1])) % 360.0


def generate_trip(model: DriverModel, scenario: Scenario, seed: int,
                  trip_id: str = "trip", driver_id: str = "driver",
                  cohort: str = "unlabeled",
                  start_clock: Optional[datetime] = None
                  ) -> tuple[Trip, GroundTruthLog]:
    """Simulate one trip.  The noise stream comes from numpy's default PCG64
    generator seeded with `seed`; identical (model, scenario, seed) give
    byte-identical output."""
    rate = scenario.sample_rate
    dt = 1.0 / rate
    n = int(round(scenario.duration * rate)) + 1
    rng = np.random.default_rng(seed)
    # independent unit-normal streams: steer, pedal jitter, head az, head el
    noise = rng.normal(0.0, 1.0, size=(4, n))

    route = scenario.route
    zones = sorted(scenario.zones, key=lambda z: (z.arc_center, z.zone_id))
    weather_phases = sorted(scenario.weather_phases)
    injections = sorted(scenario.hard_brake_injections, key=lambda h: h.t)

    v = 0.0
    s = 0.0          # arc coordinate along the route
    lat = 0.0        # signed lateral offset, +left of travel direction
    samples: list[TelemetrySample] = []
    lead_gap_log: list[Optional[float]] = []
    zone_state: dict[str, bool] = {z.zone_id: False for z in zones}
    stimuli: list[ZoneStimulus] = []
    response_until = -1.0
    pending_responses: list[float] = []
    lead_intervals = [(ph.t_start, ph.t_end) for ph in scenario.lead_schedule]
    gap = None
    active_phase: Optional[LeadPhase] = None

    def weather_at(t: float) -> str:
        w = "clear"
        for pt, pw in weather_phases:
            if t >= pt:
                w = pw
        return w

    def noise_sd_at(arc: float) -> float:
        sd = model.steer_noise_sd
        for iv in scenario.steer_noise_intervals:
            if iv.arc_start <= arc < iv.arc_end:
                sd *= iv.factor
        return sd

    for k in range(n):
        t = k / rate

        # lead phase bookkeeping
        phase = next((p for p in scenario.lead_schedule
                      if p.t_start <= t < p.t_end), None)
        if phase is not active_phase:
            active_phase = phase
            gap = phase.initial_gap if phase else None

        # desired speed: cruise, capped by the headway law under a lead
        v_des = model.preferred_speed
        if active_phase is not None:
            desired_gap = model.following_headway * v + MIN_GAP
            surplus = np.clip(KG_GAP * (gap - desired_gap),
                              -GAP_OPENING_CAP, GAP_CLOSING_CAP)
            v_des = min(v_des, active_phase.lead_speed + float(surplus))

        a_des = float(np.clip(KP_SPEED * (v_des - v) + PEDAL_JITTER * noise[1, k],
                              -model.brake_aggressiveness, A_MAX))
        if a_des >= 0.0:
            throttle = float(np.clip(
                model.throttle_gain * (a_des + _drag(v)) / A_MAX, 0.0, 1.0))
            brake = 0.0
        else:
            throttle = 0.0
            brake = (float(np.clip(-a_des / model.brake_aggressiveness, 0.0, 1.0))
                     if -a_des > BRAKE_DEADBAND else 0.0)

        # scripted maneuver response: a firm brake tap, delayed by latency
        while pending_responses and t >= pending_responses[0] - 1e-9:
            response_until = max(response_until, pending_responses.pop(0) + RESPONSE_DURATION)
        if t < response_until:
            brake = max(brake, RESPONSE_BRAKE)
            throttle = 0.0

        accel = A_MAX * throttle - brake * model.brake_aggressiveness - _drag(v)

        # hard-brake injection overrides everything
        inj = next((h for h in injections if h.t <= t < h.t + h.duration), None)
        if inj is not None:
            throttle = 0.0
            brake = float(np.clip(inj.decel / model.brake_aggressiveness, 0.0, 1.0))
            accel = -inj.decel

        v_next = max(0.0, v + accel * dt)
        accel_recorded = (v_next - v) / dt
        s_next = s + v_next * dt

        # zone stimuli: continuous-time crossing of the trigger-region entry
        for z in zones:
            entry = z.arc_center - z.trigger_radius
            inside_next = abs(s_next - z.arc_center) <= z.trigger_radius
            if not zone_state[z.zone_id] and inside_next and s_next > s:
                if s < entry <= s_next:
                    stim = t + dt * (entry - s) / (s_next - s)
                else:
                    stim = t
                stimuli.append(ZoneStimulus(z.zone_id, stim,
                                            stim + model.reaction_latency))
                pending_responses.append(stim + model.reaction_latency)
                pending_responses.sort()
            zone_state[z.zone_id] = inside_next

        # steering: route-following plus seeded noise; noise also drives a
        # slow lateral drift off the planned path
        arc = min(s, route.total_length)
        tangent = route.tangent_at(arc)
        heading = _compass_heading(tangent)
        curvature_rate = _heading_rate(route, arc, v)
        steer_noise = noise[0, k] * noise_sd_at(arc)
        steer = float(np.clip(curvature_rate / FULL_LOCK_RATE + steer_noise,
                              -1.0, 1.0))
        lat += (steer_noise * LAT_GAIN - lat) * dt / LAT_TAU

        point = route.point_at(arc)
        normal = np.array([-tangent[1], tangent[0]])
        pos = point + lat * normal

        lead_present_now = active_phase is not None
        scan_amp = model.scan_amplitude * (0.5 if lead_present_now else 1.0)
        head_az = (scan_amp * math.sin(2.0 * math.pi * t / model.scan_period)
                   + HEAD_JITTER_DEG * noise[2, k])
        head_el = ((scan_amp / 3.0)
                   * math.sin(2.0 * math.pi * t / (model.scan_period * 1.7))
                   + HEAD_JITTER_DEG * noise[3, k])

        samples.append(TelemetrySample(
            t=t, steer=steer, throttle=throttle, brake=brake,
            speed=v, accel=accel_recorded,
            pos_x=float(pos[0]), pos_y=float(pos[1]),
            heading=heading,
            head_az=head_az, head_el=head_el,
            lead_gap=(None if gap is None else float(max(gap, 0.5))),
            weather=weather_at(t),
        ))
        lead_gap_log.append(None if gap is None else float(max(gap, 0.5)))

        if active_phase is not None:
            gap = max(0.5, gap + (active_phase.lead_speed - v_next) * dt)
        v = v_next
        s = s_next

    trip = Trip(
        trip_id=trip_id, driver_id=driver_id, cohort=cohort,
        start_clock=start_clock or scenario.start_clock,
        sample_rate=rate, samples=tuple(samples),
    )
    log = GroundTruthLog(
        trip_id=trip_id,
        zone_events=tuple(stimuli),
        hard_brakes=tuple(injections),
        lead_intervals=tuple(lead_intervals),
        lead_gap=tuple(lead_gap_log),
    )
    return trip, log


def _heading_rate(route: RoutePolyline, arc: float, v: float) -> float:
    """Heading change rate (deg/s) required to follow the route at speed v,
    estimated over a short arc baseline so vertex steps smear out."""
    step = 5.0
    if arc + step > route.total_length:
        return 0.0
    h0 = _compass_heading(route.tangent_at(arc))
    h1 = _compass_heading(route.tangent_at(arc + step))
    dh = (h1 - h0 + 180.0) % 360.0 - 180.0
    return dh * v / step


def mix_seed(base_seed: int, model_index: int, trip_index: int) -> int:
    """Documented seed-mixing rule: SeedSequence(base, model, trip) folded to
    a 64-bit integer.  Stable within this implementation."""
    ss = np.random.SeedSequence([base_seed, model_index, trip_index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def generate_cohort(models: Sequence[DriverModel], scenario: Scenario,
                    trips_per_model: int, base_seed: int,
                    driver_ids: Optional[Sequence[str]] = None,
                    cohorts: Optional[Sequence[str]] = None,
                    day_step: int = 1
                    ) -> list[tuple[Trip, GroundTruthLog]]:
    """All trips for a cohort of driver models.  Trip (m, j) is seeded by
    mix_seed(base_seed, m, j), so any single trip regenerates identically
    outside the batch.  Successive trips of a driver start day_step days
    apart so weekly/monthly bucketing has structure."""
    if trips_per_model < 1:
        raise ScenarioError("trips_per_model must be >= 1")
    out = []
    for m, model in enumerate(models):
        driver_id = driver_ids[m] if driver_ids else f"driver_{m:02d}"
        cohort = cohorts[m] if cohorts else "unlabeled"
        for j in range(trips_per_model):
            trip, log = generate_trip(
                model, scenario, mix_seed(base_seed, m, j),
                trip_id=f"{driver_id}_trip_{j:03d}", driver_id=driver_id,
                cohort=cohort,
                start_clock=scenario.start_clock + timedelta(days=j * day_step),
            )
            out.append((trip, log))
    return out


# ---------------------------------------------------------------------------
# default scenario: ~3 km route, two 90-degree curves, six zones on straights

def default_route() -> tuple[RoutePolyline, list[EventZone]]:
    # straights are single segments; curves sampled every ~2 m
    pts: list[tuple[float, float]] = []
    heading = 0.0       # rad, direction of travel in the xy plane
    x = y = 0.0
    pts.append((x, y))

    def advance(dist: float, turn_rate_deg_per_m: float = 0.0):
        nonlocal x, y, heading
        steps = 1 if turn_rate_deg_per_m == 0.0 else max(2, int(dist / 2.0))
        for _ in range(steps):
            d = dist / steps
            heading -= math.radians(turn_rate_deg_per_m) * d  # + rate = right turn
            x += d * math.cos(heading)
            y += d * math.sin(heading)
            pts.append((x, y))

    advance(700.0)                   # straight
    advance(80.0, 90.0 / 80.0)       # 90-degree right curve, radius ~51 m
    advance(700.0)
    advance(80.0, -90.0 / 80.0)      # 90-degree left curve
    advance(1440.0)

    poly = RoutePolyline.from_waypoints(pts)
    total = poly.total_length
    zone_arcs = [300.0, 550.0, 1000.0, 1300.0, 1900.0, 2300.0]
    zones = [
        EventZone(f"z{i}", "intersection", arc_c, 40.0)
        for i, arc_c in enumerate(zone_arcs) if arc_c < total
    ]
    return poly, zones


def default_scenario(**overrides) -> Scenario:
    route, zones = default_route()
    base = dict(
        route=route, zones=tuple(zones),
        lead_schedule=(),
        weather_phases=((0.0, "clear"), (200.0, "rain")),
        hard_brake_injections=(),
        duration=300.0, sample_rate=10.0,
    )
    base.update(overrides)
    return Scenario(**base)


# ---------------------------------------------------------------------------
# JSON I/O for scenarios and driver presets

def scenario_to_json(sc: Scenario) -> str:
    return json.dumps({
        "route": {
            "waypoints": [[float(a), float(b)] for a, b in sc.route.waypoints],
            "zones": [{"id": z.zone_id, "kind": z.kind,
                       "arc_center": z.arc_center,
                       "trigger_radius": z.trigger_radius} for z in sc.zones],
        },
        "lead_schedule": [
            {"t_start": p.t_start, "t_end": p.t_end,
             "initial_gap": p.initial_gap, "lead_speed": p.lead_speed}
            for p in sc.lead_schedule
        ],
        "weather_phases": [[t, w] for t, w in sc.weather_phases],
        "hard_brake_injections": [
            {"t": h.t, "decel": h.decel, "duration": h.duration}
            for h in sc.hard_brake_injections
        ],
        "steer_noise_intervals": [
            {"arc_start": iv.arc_start, "arc_end": iv.arc_end, "factor": iv.factor}
            for iv in sc.steer_noise_intervals
        ],
        "duration": sc.duration,
        "sample_rate": sc.sample_rate,
        "start_clock": sc.start_clock.isoformat(),
    }, indent=2) + "\n"


def load_scenario(path: Path) -> Scenario:
    d = json.loads(Path(path).read_text())
    route = RoutePolyline.from_waypoints(d["route"]["waypoints"])
    zones = tuple(
        EventZone(z["id"], z.get("kind", "custom"),
                  float(z["arc_center"]), float(z["trigger_radius"]))
        for z in d["route"].get("zones", [])
    )
    return Scenario(
        route=route, zones=zones,
        lead_schedule=tuple(LeadPhase(p["t_start"], p["t_end"],
                                      p["initial_gap"], p["lead_speed"])
                            for p in d.get("lead_schedule", [])),
        weather_phases=tuple((float(t), w) for t, w in
                             d.get("weather_phases", [[0.0, "clear"]])),
        hard_brake_injections=tuple(
            HardBrakeInjection(h["t"], h["decel"], h["duration"])
            for h in d.get("hard_brake_injections", [])),
        steer_noise_intervals=tuple(
            NoiseInterval(iv["arc_start"], iv["arc_end"], iv["factor"])
            for iv in d.get("steer_noise_intervals", [])),
        duration=float(d.get("duration", 300.0)),
        sample_rate=float(d.get("sample_rate", 10.0)),
        start_clock=datetime.fromisoformat(d["start_clock"])
        if "start_clock" in d else datetime(2026, 6, 1, 12, 0),
    )


def drivers_to_json(models: dict[str, DriverModel]) -> str:
    return json.dumps({
        name: {
            "reaction_latency": m.reaction_latency,
            "preferred_speed": m.preferred_speed,
            "throttle_gain": m.throttle_gain,
            "brake_aggressiveness": m.brake_aggressiveness,
            "steer_noise_sd": m.steer_noise_sd,
            "scan_amplitude": m.scan_amplitude,
            "scan_period": m.scan_period,
            "following_headway": m.following_headway,
        } for name, m in models.items()
    }, indent=2) + "\n"


def load_drivers(path: Path) -> dict[str, DriverModel]:
    d = json.loads(Path(path).read_text())
    return {name: DriverModel(**params) for name, params in d.items()}
