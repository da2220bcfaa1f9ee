from datetime import datetime

import numpy as np
import pytest

from drivescore.core_model import TelemetrySample, Trip
from drivescore import simgen


def make_trip(n=None, rate=10.0, trip_id="t0", driver_id="d0",
              cohort="unlabeled", start_clock=None, **channels) -> Trip:
    """Build a uniform-rate trip from channel arrays; unspecified channels
    default to zeros (speed defaults to 10 so trips cover ground)."""
    if n is None:
        n = len(next(iter(channels.values())))
    t = np.arange(n) / rate

    def get(name, default):
        v = channels.get(name)
        if v is None:
            return [default] * n
        v = list(np.broadcast_to(v, (n,))) if np.isscalar(v) else list(v)
        return v

    steer = get("steer", 0.0)
    throttle = get("throttle", 0.0)
    brake = get("brake", 0.0)
    speed = get("speed", 10.0)
    accel = get("accel", 0.0)
    if "pos_x" in channels:
        pos_x = get("pos_x", 0.0)
    else:
        pos_x = np.cumsum(np.asarray(speed)) / rate
    pos_y = get("pos_y", 0.0)
    heading = get("heading", 90.0)
    head_az = get("head_az", 0.0) if "head_az" in channels else None
    head_el = get("head_el", 0.0) if "head_el" in channels else None
    lead_gap = channels.get("lead_gap")
    if lead_gap is not None and np.isscalar(lead_gap):
        lead_gap = [lead_gap] * n
    weather = channels.get("weather")

    samples = []
    for i in range(n):
        samples.append(TelemetrySample(
            t=float(t[i]), steer=float(steer[i]), throttle=float(throttle[i]),
            brake=float(brake[i]), speed=float(speed[i]), accel=float(accel[i]),
            pos_x=float(pos_x[i]), pos_y=float(pos_y[i]),
            heading=float(heading[i]) % 360.0,
            head_az=None if head_az is None else float(head_az[i]),
            head_el=None if head_el is None else float(head_el[i]),
            lead_gap=None if lead_gap is None or lead_gap[i] is None
            else float(lead_gap[i]),
            weather=None if weather is None else weather[i],
        ))
    return Trip(trip_id, driver_id, cohort,
                start_clock or datetime(2026, 6, 1, 12, 0), rate,
                tuple(samples))


@pytest.fixture(scope="session")
def default_scenario():
    return simgen.default_scenario()


@pytest.fixture(scope="session")
def senior_trip(default_scenario):
    trip, log = simgen.generate_trip(simgen.SENIOR_DEFAULT, default_scenario,
                                     1234, trip_id="senior_a",
                                     driver_id="senior_a", cohort="senior")
    return trip, log
