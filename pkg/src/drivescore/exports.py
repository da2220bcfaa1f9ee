"""Flat CSV/JSON exports for scores, divergence maps, profiles, histograms,
and long-form series, plus the reproducibility manifest."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .features import MobilityProfile, ScanStats, WeeklyProfile
from .phenotype import ClusterResult, ImportanceRanking, PcaResult
from .scoring import DivergenceMap, EventScores, SampleScores


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return "" if np.isnan(f) else repr(f)
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def write_sample_scores(path: Path, scores: SampleScores) -> None:
    n = len(scores.t)
    blank = [None] * n
    cols = {
        "t": scores.t,
        "sigma_steer": scores.sigma_steer if scores.sigma_steer is not None else blank,
        "f_raw": scores.f_raw if scores.f_raw is not None else blank,
        "s_stab": scores.s_stab if scores.s_stab is not None else blank,
        "composite": scores.composite if scores.composite is not None else blank,
    }
    write_csv(path, list(cols), zip(*cols.values()))


def write_event_scores(path: Path, ev: EventScores) -> None:
    header = ["event_id", "kind", "t0", "t1", "rt", "no_response",
              "s_time", "s_fluent", "s_react", "d", "s_route"]
    rows = [
        [e.event_id, e.kind, e.t0, e.t1, e.rt, bool(nr),
         st, sf, sr, e.D, sroute]
        for e, st, sf, sr, sroute, nr in zip(
            ev.events, ev.s_time, ev.s_fluent, ev.s_react, ev.s_route,
            ev.no_response)
    ]
    write_csv(path, header, rows)


def write_divergence(path: Path, dm: DivergenceMap) -> None:
    header = ["bin", "arc_start", "arc_end", "mean_a", "mean_b",
              "n_a", "n_b", "divergence", "flag"]
    rows = [
        [int(b), a0, a1, ma, mb, int(na), int(nb), dv, fl]
        for b, a0, a1, ma, mb, na, nb, dv, fl in zip(
            dm.bin_index, dm.arc_start, dm.arc_end, dm.mean_a, dm.mean_b,
            dm.n_a, dm.n_b, dm.divergence, dm.flags)
    ]
    write_csv(path, header, rows)


def write_weekly_profiles(path: Path, profiles: Sequence[WeeklyProfile]) -> None:
    write_csv(path,
              ["iso_week", "mean_speed", "hard_brake_count", "trip_count",
               "total_miles"],
              [[p.iso_week, p.mean_speed, p.hard_brake_count, p.trip_count,
                p.total_miles] for p in profiles])


def write_mobility_profiles(path: Path, profiles: Sequence[MobilityProfile]) -> None:
    write_csv(path,
              ["month", "miles_per_month", "trips_per_month",
               "night_trip_count", "night_trip_fraction", "short_trip_ratio",
               "right_turns", "left_turns", "right_left_ratio"],
              [[p.month, p.miles_per_month, p.trips_per_month,
                p.night_trip_count, p.night_trip_fraction, p.short_trip_ratio,
                p.right_turns, p.left_turns, p.right_left_ratio]
               for p in profiles])


def write_histogram(path: Path, edges: Sequence[float],
                    counts: Sequence[int]) -> None:
    write_csv(path, ["bin_left", "bin_right", "count"],
              [[edges[i], edges[i + 1], int(c)] for i, c in enumerate(counts)])


def write_scan_stats(path: Path, per_trip: dict[str, ScanStats]) -> None:
    write_csv(path,
              ["trip_id", "mean_abs_daz", "mean_abs_del",
               "large_motion_fraction", "frame_pairs"],
              [[tid, s.mean_abs_daz, s.mean_abs_del, s.large_motion_fraction,
                s.frame_pairs] for tid, s in sorted(per_trip.items())])


def write_series(path: Path, name: str, t: np.ndarray, values: np.ndarray) -> None:
    """Long-form series CSV for external plotting."""
    write_csv(path, ["t", name], zip(t, values))


def write_feature_matrix(path: Path, matrix) -> None:
    header = ["driver_id", "period"] + list(matrix.columns)
    rows = [[d, p] + list(vals)
            for (d, p), vals in zip(matrix.row_keys, matrix.values)]
    write_csv(path, header, rows)


def read_feature_matrix(path: Path):
    from .phenotype import FeatureMatrix
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if header[:2] != ["driver_id", "period"]:
        raise ValueError("feature matrix CSV must start with driver_id,period")
    keys = tuple((r[0], r[1]) for r in rows)
    values = np.array([[float(v) for v in r[2:]] for r in rows])
    return FeatureMatrix(keys, tuple(header[2:]), values)


def cluster_to_json(pca: Optional[PcaResult], result: ClusterResult,
                    importance: ImportanceRanking) -> str:
    payload = {
        "k": result.k,
        "seed": result.seed,
        "labels": [int(v) for v in result.labels],
        "centroids": [[float(v) for v in row] for row in result.centroids],
        "inertia": result.inertia,
        "iterations": result.iterations,
        "importance": [
            {"feature": f, "ratio": r}
            for f, r in zip(importance.features, importance.ratios)
        ],
    }
    if pca is not None:
        payload["pca"] = {
            "explained_variance_ratio": [float(v) for v in
                                         pca.explained_variance_ratio],
            "components": [[float(v) for v in row] for row in pca.components],
            "projections": [[float(v) for v in row] for row in pca.projections],
        }
    return json.dumps(payload, indent=2) + "\n"


# ---------------------------------------------------------------------------
# reproducibility manifest

def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def write_manifest(out_dir: Path, command: str, config_json: str,
                   inputs: Sequence[Path]) -> Path:
    """Write manifest.json keyed by file basenames and out-dir-relative
    output paths, so two runs into different directories stay byte-identical."""
    out_dir = Path(out_dir)
    outputs = sorted(
        p for p in out_dir.rglob("*")
        if p.is_file() and p.name != "manifest.json"
    )
    manifest = {
        "tool_version": __version__,
        "command": command,
        "config_hash": sha256_text(config_json),
        "input_hashes": {Path(p).name: sha256_file(p) for p in sorted(set(map(Path, inputs)), key=lambda q: q.name)},
        "outputs": {str(p.relative_to(out_dir)): sha256_file(p) for p in outputs},
    }
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    path = out_dir / "manifest.json"
    path.write_text(text)
    return path


def manifest_hash(out_dir: Path) -> str:
    return sha256_file(Path(out_dir) / "manifest.json")
