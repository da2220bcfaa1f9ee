"""Telemetry data model: samples, trips, parsing/validation, resampling."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

WEATHER_VALUES = ("clear", "rain", "unknown")
COHORT_VALUES = ("senior", "young", "unlabeled")

# canonical CSV column order
CSV_COLUMNS = (
    "t", "steer", "throttle", "brake", "speed", "accel",
    "pos_x", "pos_y", "heading", "head_az", "head_el", "lead_gap", "weather",
)

MANDATORY_COLUMNS = ("t", "steer", "throttle", "brake", "speed", "pos_x", "pos_y", "heading")
OPTIONAL_FLOAT_COLUMNS = ("head_az", "head_el", "lead_gap")

# continuous channels interpolated linearly on resampling
LINEAR_CHANNELS = ("steer", "throttle", "brake", "speed", "accel", "pos_x", "pos_y")


class TripError(Exception):
    """Fatal problem constructing or loading a trip."""


class SchemaError(TripError):
    """A mandatory column is missing from the input."""


@dataclass(frozen=True)
class TelemetrySample:
    t: float
    steer: float
    throttle: float
    brake: float
    speed: float
    accel: float
    pos_x: float
    pos_y: float
    heading: float
    head_az: Optional[float] = None
    head_el: Optional[float] = None
    lead_gap: Optional[float] = None
    weather: Optional[str] = None


@dataclass(frozen=True)
class TripMeta:
    trip_id: str = "trip"
    driver_id: str = "driver"
    cohort: str = "unlabeled"
    start_clock: datetime = datetime(2000, 1, 1)
    sample_rate: float = 10.0


@dataclass(frozen=True)
class Trip:
    trip_id: str
    driver_id: str
    cohort: str
    start_clock: datetime
    sample_rate: float
    samples: tuple[TelemetrySample, ...]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise TripError("sample_rate must be positive")
        if len(self.samples) < 2:
            raise TripError("a trip needs at least 2 samples")
        if self.cohort not in COHORT_VALUES:
            raise TripError(f"unknown cohort {self.cohort!r}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return self.samples[-1].t - self.samples[0].t

    def times(self) -> np.ndarray:
        return self.channel("t")

    def channel(self, name: str) -> np.ndarray:
        """Column view of one channel; optional floats come back with NaN
        where absent, weather as an object array with None where absent."""
        if name not in self._cache:
            if name == "weather":
                arr = np.array([s.weather for s in self.samples], dtype=object)
            else:
                vals = [getattr(s, name) for s in self.samples]
                arr = np.array(
                    [math.nan if v is None else float(v) for v in vals], dtype=float
                )
            arr.setflags(write=False)
            self._cache[name] = arr
        return self._cache[name]

    def has_head_channels(self) -> bool:
        return not (
            np.isnan(self.channel("head_az")).any()
            or np.isnan(self.channel("head_el")).any()
        )


@dataclass(frozen=True)
class RowIssue:
    row: int
    column: str
    reason: str


@dataclass(frozen=True)
class ValidationReport:
    errors: tuple[RowIssue, ...]
    warnings: tuple[str, ...]
    accepted_row_count: int

    @property
    def ok(self) -> bool:
        return not self.errors


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _parse_float(raw: str, column: str, row: int,
                 lo: float = -math.inf, hi: float = math.inf) -> float:
    try:
        v = float(raw)
    except (TypeError, ValueError):
        raise ValueError(f"{column}: not a number: {raw!r}")
    if not math.isfinite(v):
        raise ValueError(f"{column}: not finite")
    if not (lo <= v <= hi):
        raise ValueError(f"{column}: {v} outside [{lo}, {hi}]")
    return v


_RANGES = {
    "steer": (-1.0, 1.0),
    "throttle": (0.0, 1.0),
    "brake": (0.0, 1.0),
    "speed": (0.0, math.inf),
    "lead_gap": (0.0, math.inf),
}


def parse_trip(
    rows: Iterable[Mapping[str, str]],
    schema: Optional[Mapping[str, str]] = None,
    meta: Optional[TripMeta] = None,
) -> tuple[Trip, ValidationReport]:
    """Parse a record stream into a Trip, rejecting rows that fail range or
    finiteness checks.  `schema` maps canonical column names to source names.

    Raises SchemaError if a mandatory column is absent from the first row and
    TripError if fewer than 2 rows survive validation.
    """
    schema = dict(schema or {})
    meta = meta or TripMeta()

    def col(name: str) -> str:
        return schema.get(name, name)

    rows = iter(rows)
    buffered: list[Mapping[str, str]] = list(rows)
    if not buffered:
        raise TripError("empty input")
    present = set(buffered[0].keys())
    for name in MANDATORY_COLUMNS:
        if col(name) not in present:
            raise SchemaError(f"mandatory column {col(name)!r} missing")
    have_accel = col("accel") in present

    errors: list[RowIssue] = []
    warnings: list[str] = []
    samples: list[dict] = []
    last_t: Optional[float] = None
    monotone_warned = False

    for idx, row in enumerate(buffered):
        rec: dict = {}
        try:
            rec["t"] = _parse_float(row[col("t")], "t", idx)
            for name in ("steer", "throttle", "brake", "speed"):
                lo, hi = _RANGES[name]
                rec[name] = _parse_float(row[col(name)], name, idx, lo, hi)
            rec["pos_x"] = _parse_float(row[col("pos_x")], "pos_x", idx)
            rec["pos_y"] = _parse_float(row[col("pos_y")], "pos_y", idx)
            rec["heading"] = _parse_float(row[col("heading")], "heading", idx) % 360.0
            if have_accel:
                raw = row.get(col("accel"), "")
                rec["accel"] = _parse_float(raw, "accel", idx) if raw not in ("", None) else None
            else:
                rec["accel"] = None
            for name in OPTIONAL_FLOAT_COLUMNS:
                raw = row.get(col(name), "")
                if raw in ("", None):
                    rec[name] = None
                else:
                    lo, hi = _RANGES.get(name, (-math.inf, math.inf))
                    rec[name] = _parse_float(raw, name, idx, lo, hi)
            raw_w = row.get(col("weather"), "")
            if raw_w in ("", None):
                rec["weather"] = None
            elif raw_w in WEATHER_VALUES:
                rec["weather"] = raw_w
            else:
                raise ValueError(f"weather: unknown value {raw_w!r}")
        except ValueError as exc:
            column, _, reason = str(exc).partition(": ")
            errors.append(RowIssue(idx, column, reason or str(exc)))
            continue
        except KeyError as exc:
            errors.append(RowIssue(idx, str(exc), "missing cell"))
            continue

        if last_t is not None and rec["t"] <= last_t:
            errors.append(RowIssue(idx, "t", "non-monotone timestamp"))
            if not monotone_warned:
                warnings.append(
                    f"non-monotone timestamps starting at row {idx}; later rows rejected"
                )
                monotone_warned = True
            continue
        last_t = rec["t"]
        samples.append(rec)

    if len(samples) < 2:
        raise TripError(f"fewer than 2 rows accepted ({len(samples)})")

    if not have_accel or any(r["accel"] is None for r in samples):
        # accel is mandatory downstream; derive from speed when not supplied
        _fill_accel(samples)
        warnings.append("accel derived from speed finite differences")

    trip = Trip(
        trip_id=meta.trip_id,
        driver_id=meta.driver_id,
        cohort=meta.cohort,
        start_clock=meta.start_clock,
        sample_rate=meta.sample_rate,
        samples=tuple(TelemetrySample(**r) for r in samples),
    )
    report = ValidationReport(tuple(errors), tuple(warnings), len(samples))
    return trip, report


def _fill_accel(samples: list[dict]) -> None:
    t = [r["t"] for r in samples]
    v = [r["speed"] for r in samples]
    n = len(samples)
    for i, r in enumerate(samples):
        if r["accel"] is not None:
            continue
        j0, j1 = max(0, i - 1), min(n - 1, i + 1)
        r["accel"] = (v[j1] - v[j0]) / (t[j1] - t[j0])


def validate_trip(trip: Trip, max_speed: float = 70.0,
                  max_abs_accel: float = 15.0) -> ValidationReport:
    """Report-only invariant and plausibility checks on an existing trip."""
    errors: list[RowIssue] = []
    warnings: list[str] = []
    last_t = -math.inf
    for i, s in enumerate(trip.samples):
        if s.t <= last_t:
            errors.append(RowIssue(i, "t", "non-monotone timestamp"))
        last_t = s.t
        for name, (lo, hi) in _RANGES.items():
            v = getattr(s, name)
            if v is not None and not (lo <= v <= hi):
                errors.append(RowIssue(i, name, f"{v} outside [{lo}, {hi}]"))
        for name in ("speed", "accel"):
            v = getattr(s, name)
            if v is None or not math.isfinite(v):
                errors.append(RowIssue(i, name, "not finite"))
        if not (0.0 <= s.heading < 360.0):
            errors.append(RowIssue(i, "heading", f"{s.heading} outside [0, 360)"))
        if s.weather is not None and s.weather not in WEATHER_VALUES:
            errors.append(RowIssue(i, "weather", f"unknown value {s.weather!r}"))
        if s.speed is not None and s.speed > max_speed:
            warnings.append(f"row {i}: speed {s.speed} above plausibility gate {max_speed}")
        if s.accel is not None and abs(s.accel) > max_abs_accel:
            warnings.append(f"row {i}: |accel| {abs(s.accel)} above plausibility gate {max_abs_accel}")
    return ValidationReport(tuple(errors), tuple(warnings), len(trip.samples))


def resample_uniform(trip: Trip, target_rate: float) -> Trip:
    """Resample onto an exact uniform grid from the first to the last input
    timestamp.  Continuous channels are interpolated linearly, heading on the
    circle (shortest arc), optional/enum channels by nearest neighbor.

    Grid points that coincide exactly with input timestamps copy the input
    values verbatim, so resampling an already-uniform trip at its own rate is
    the identity.
    """
    if target_rate <= 0:
        raise TripError("target_rate must be positive")
    t_in = trip.times()
    t0, t_end = t_in[0], t_in[-1]
    n = int(math.floor((t_end - t0) * target_rate + 1e-9)) + 1
    if n < 2:
        raise TripError("target grid would contain fewer than 2 points")
    t_grid = t0 + np.arange(n) / target_rate

    pos = np.searchsorted(t_in, t_grid)
    pos = np.clip(pos, 0, len(t_in) - 1)
    exact = t_in[pos] == t_grid

    out: dict[str, np.ndarray] = {"t": t_grid}
    for name in LINEAR_CHANNELS:
        x = trip.channel(name)
        vals = np.interp(t_grid, t_in, x)
        vals[exact] = x[pos[exact]]
        out[name] = vals

    heading = trip.channel("heading")
    unwrapped = np.degrees(np.unwrap(np.radians(heading)))
    h = np.mod(np.interp(t_grid, t_in, unwrapped), 360.0)
    h[exact] = heading[pos[exact]]
    out["heading"] = h

    # nearest neighbor index, ties toward the earlier sample
    left = np.clip(np.searchsorted(t_in, t_grid, side="right") - 1, 0, len(t_in) - 1)
    right = np.clip(left + 1, 0, len(t_in) - 1)
    nn = np.where(t_grid - t_in[left] <= t_in[right] - t_grid, left, right)
    nn[exact] = pos[exact]

    samples = []
    for k in range(n):
        j = nn[k]
        src = trip.samples[j]
        samples.append(TelemetrySample(
            t=float(out["t"][k]),
            steer=float(out["steer"][k]),
            throttle=float(out["throttle"][k]),
            brake=float(out["brake"][k]),
            speed=float(out["speed"][k]),
            accel=float(out["accel"][k]),
            pos_x=float(out["pos_x"][k]),
            pos_y=float(out["pos_y"][k]),
            heading=float(out["heading"][k]),
            head_az=src.head_az,
            head_el=src.head_el,
            lead_gap=src.lead_gap,
            weather=src.weather,
        ))
    return Trip(trip.trip_id, trip.driver_id, trip.cohort, trip.start_clock,
                target_rate, tuple(samples))


# ---------------------------------------------------------------------------
# serialization

def trip_to_csv(trip: Trip) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in trip.samples:
        w.writerow([_fmt(getattr(s, c if c != "t" else "t")) for c in CSV_COLUMNS])
    return buf.getvalue()


def meta_to_json(trip: Trip) -> str:
    return json.dumps({
        "trip_id": trip.trip_id,
        "driver_id": trip.driver_id,
        "cohort": trip.cohort,
        "start_clock": trip.start_clock.isoformat(),
        "sample_rate": trip.sample_rate,
    }, indent=2) + "\n"


def save_trip(trip: Trip, csv_path: Path) -> None:
    csv_path = Path(csv_path)
    csv_path.write_text(trip_to_csv(trip))
    csv_path.with_suffix(".meta.json").write_text(meta_to_json(trip))


def load_meta(path: Path) -> TripMeta:
    d = json.loads(Path(path).read_text())
    return TripMeta(
        trip_id=d["trip_id"],
        driver_id=d["driver_id"],
        cohort=d["cohort"],
        start_clock=datetime.fromisoformat(d["start_clock"]),
        sample_rate=float(d["sample_rate"]),
    )


def load_trip(csv_path: Path,
              schema: Optional[Mapping[str, str]] = None) -> tuple[Trip, ValidationReport]:
    """Load a telemetry CSV (or .jsonl) plus its metadata sidecar if present."""
    csv_path = Path(csv_path)
    meta_path = csv_path.with_suffix(".meta.json")
    meta = load_meta(meta_path) if meta_path.exists() else TripMeta(trip_id=csv_path.stem)
    if csv_path.suffix == ".jsonl":
        rows: Sequence[Mapping[str, str]] = [
            {k: ("" if v is None else str(v)) for k, v in json.loads(line).items()}
            for line in csv_path.read_text().splitlines() if line.strip()
        ]
    else:
        with open(csv_path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    return parse_trip(rows, schema, meta)
