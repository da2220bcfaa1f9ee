"""Command-line surface tying the modules into reproducible runs.

Exit codes: 0 success, 2 config/usage error, 3 input error, 4 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import glob
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import core_model, exports, features, geometry, phenotype, scoring, simgen
from .config import ConfigError, RunConfig, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_INTERNAL = 4


class InputError(Exception):
    pass


def _expand(patterns: Sequence[str]) -> list[Path]:
    paths: list[Path] = []
    for pat in patterns:
        hits = sorted(glob.glob(pat))
        if not hits and Path(pat).exists():
            hits = [pat]
        paths.extend(Path(h) for h in hits)
    if not paths:
        raise InputError(f"no files match {patterns}")
    return paths


def _load_trips(patterns: Sequence[str]) -> list[core_model.Trip]:
    trips = []
    for path in _expand(patterns):
        if path.suffix == ".csv" or path.suffix == ".jsonl":
            trip, _ = core_model.load_trip(path)
            trips.append(trip)
    if not trips:
        raise InputError(f"no trip files match {patterns}")
    return trips


def score_trip(trip: core_model.Trip, polyline: geometry.RoutePolyline,
               zones: Sequence[geometry.EventZone], cfg: RunConfig
               ) -> tuple[scoring.SampleScores, scoring.EventScores,
                          list[geometry.ManeuverEvent]]:
    """Full per-trip scoring pass: series, events, event scores, composite."""
    scores = scoring.sample_scores(trip, cfg.scoring)
    events = geometry.detect_turns(trip, cfg.geometry.turn_threshold_deg,
                                   cfg.geometry.turn_window_s)
    events += geometry.detect_event_zones(trip, zones, polyline)
    events.sort(key=lambda e: (e.t0, e.event_id))
    event_scores = scoring.score_events(trip, events, polyline, scores,
                                        cfg.scoring)
    scoring.composite_series(scores, event_scores, cfg.scoring)
    return scores, event_scores, events


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args, cfg: RunConfig) -> list[Path]:
    scenario = simgen.load_scenario(args.scenario)
    models = simgen.load_drivers(args.drivers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = sorted(models)
    cohorts = [n.split("_")[0] if n.split("_")[0] in core_model.COHORT_VALUES
               else "unlabeled" for n in names]
    seed = args.seed if args.seed is not None else cfg.seed
    pairs = simgen.generate_cohort(
        [models[n] for n in names], scenario, args.trips_per_driver, seed,
        driver_ids=names, cohorts=cohorts)
    for trip, log in pairs:
        core_model.save_trip(trip, out / f"{trip.trip_id}.csv")
        (out / f"{trip.trip_id}.truth.json").write_text(log.to_json())
    return [Path(args.scenario), Path(args.drivers)]


def cmd_ingest(args, cfg: RunConfig) -> list[Path]:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    schema = json.loads(Path(args.schema).read_text()) if args.schema else None
    inputs = _expand(args.input)
    reports = {}
    for path in inputs:
        if path.suffix not in (".csv", ".jsonl"):
            continue
        trip, report = core_model.load_trip(path, schema)
        if args.rate:
            trip = core_model.resample_uniform(trip, args.rate)
        check = core_model.validate_trip(trip, cfg.validation.max_speed,
                                         cfg.validation.max_abs_accel)
        core_model.save_trip(trip, out / f"{trip.trip_id}.csv")
        reports[trip.trip_id] = {
            "accepted_rows": report.accepted_row_count,
            "errors": [[e.row, e.column, e.reason] for e in report.errors],
            "warnings": list(report.warnings) + list(check.warnings),
            "post_errors": [[e.row, e.column, e.reason] for e in check.errors],
        }
    (out / "ingest_report.json").write_text(
        json.dumps(reports, indent=2, sort_keys=True) + "\n")
    return inputs


def cmd_score(args, cfg: RunConfig) -> list[Path]:
    polyline, zones = geometry.load_route(args.route)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = _expand(args.trip)
    for path in [p for p in inputs if p.suffix == ".csv"]:
        trip, _ = core_model.load_trip(path)
        scores, event_scores, _ = score_trip(trip, polyline, zones, cfg)
        exports.write_sample_scores(out / f"{trip.trip_id}.samples.csv", scores)
        exports.write_event_scores(out / f"{trip.trip_id}.events.csv",
                                   event_scores)
    return inputs + [Path(args.route)]


def cmd_divergence(args, cfg: RunConfig) -> list[Path]:
    polyline, zones = geometry.load_route(args.route)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.top_frac is not None:
        cfg = dataclasses.replace(
            cfg, scoring=dataclasses.replace(cfg.scoring,
                                             top_fraction=args.top_frac))
    groups = {}
    for name, patterns in (("a", args.group_a), ("b", args.group_b)):
        pairs = []
        for trip in _load_trips([patterns]):
            scores, event_scores, _ = score_trip(trip, polyline, zones, cfg)
            pairs.append((trip, scores))
        groups[name] = pairs
    bin_size = args.bin_size or cfg.geometry.bin_size
    dm = scoring.group_divergence_map(
        groups["a"], groups["b"], polyline, bin_size, cfg.scoring,
        which=args.score, gate_m=cfg.geometry.offroute_gate_m)
    exports.write_divergence(out / "divergence.csv", dm)
    return _expand([args.group_a]) + _expand([args.group_b]) + [Path(args.route)]


def cmd_features(args, cfg: RunConfig) -> list[Path]:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trips = _load_trips(args.trips)
    fc = cfg.features
    exports.write_weekly_profiles(
        out / "weekly.csv",
        features.weekly_profiles(trips, fc.hard_brake_threshold,
                                 fc.hard_brake_min_duration))
    exports.write_mobility_profiles(
        out / "monthly.csv",
        features.monthly_mobility(trips, fc.night_window(), fc.short_trip_m,
                                  cfg.geometry.turn_threshold_deg,
                                  cfg.geometry.turn_window_s))
    scans = {}
    for trip in trips:
        try:
            scans[trip.trip_id] = features.head_scan_stats(
                trip, fc.large_motion_threshold, fc.hist_edges)
        except features.HeadChannelsMissing:
            continue
    exports.write_scan_stats(out / "scan_stats.csv", scans)
    for trip_id, scan in sorted(scans.items()):
        exports.write_histogram(out / f"{trip_id}.hist_daz.csv",
                                scan.hist_edges, scan.hist_daz)
    return _expand(args.trips)


def cmd_context(args, cfg: RunConfig) -> list[Path]:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = _expand([args.trip])
    trip, _ = core_model.load_trip(inputs[0])
    segments = features.partition_context(trip, cfg.features.lead_gap_threshold)
    exports.write_csv(out / "segments.csv",
                      ["i0", "i1", "t0", "t1", "lead_present", "weather"],
                      [[s.i0, s.i1, s.t0, s.t1, s.lead_present, s.weather]
                       for s in segments])
    series = trip.channel(args.series)
    payload = {}
    for by in ("lead_present", "weather"):
        cmp_ = features.compare_conditions(series, segments, by=by)
        payload[by] = {
            "conditions": [
                {"condition": str(s.condition), "n": s.n,
                 "mean": s.mean, "sd": s.sd}
                for s in cmp_.stats
            ],
            "primary": [str(c) for c in cmp_.primary],
            "effect_size": cmp_.effect_size,
            "degenerate_variance": cmp_.degenerate_variance,
        }
    (out / "comparison.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")
    normalized = features.situation_normalize(series, segments)
    exports.write_series(out / f"{args.series}_normalized.csv",
                         f"{args.series}_z", trip.times(), normalized)
    return inputs


def cmd_cluster(args, cfg: RunConfig) -> list[Path]:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    matrix = exports.read_feature_matrix(Path(args.matrix))
    std = phenotype.standardize(matrix)
    seed = args.seed if args.seed is not None else cfg.seed
    n_comp = args.n_components or min(matrix.n_rows - 1,
                                      len(std.matrix.columns), 2)
    pca = phenotype.pca_project(std.matrix, n_comp)
    result = phenotype.kmeans_cluster(std.matrix, args.k, seed)
    importance = phenotype.feature_importance(std.matrix, result.labels)
    (out / "cluster.json").write_text(
        exports.cluster_to_json(pca, result, importance))
    return [Path(args.matrix)]


DRIVER_METRICS = (
    "mean_s_react", "mean_s_stab", "mean_s_route", "mean_composite",
    "mean_speed", "mean_throttle", "hard_brake_count", "mean_abs_daz",
    "trip_count",
)


def driver_metrics(trips, polyline, zones, cfg: RunConfig):
    """Per-driver metric values plus per-metric evidence windows."""
    metrics: dict[str, float] = {}
    evidence: dict[str, list[phenotype.EvidenceWindow]] = {m: [] for m in DRIVER_METRICS}
    acc = {m: [] for m in DRIVER_METRICS}
    for trip in trips:
        scores, ev, _ = score_trip(trip, polyline, zones, cfg)
        for k, e in enumerate(ev.events):
            evidence["mean_s_react"].append(phenotype.EvidenceWindow(
                trip.trip_id, e.t0, e.t1, float(ev.s_react[k])))
            evidence["mean_s_route"].append(phenotype.EvidenceWindow(
                trip.trip_id, e.t0, e.t1, float(ev.s_route[k])))
        if len(ev):
            acc["mean_s_react"].extend(ev.s_react.tolist())
            acc["mean_s_route"].extend(ev.s_route.tolist())
        acc["mean_s_stab"].append(float(scores.s_stab.mean()))
        acc["mean_composite"].append(float(scores.composite.mean()))
        acc["mean_speed"].append(float(trip.channel("speed").mean()))
        acc["mean_throttle"].append(float(trip.channel("throttle").mean()))
        span = (trip.times()[0], trip.times()[-1])
        for name in ("mean_s_stab", "mean_composite", "mean_speed",
                     "mean_throttle"):
            evidence[name].append(phenotype.EvidenceWindow(
                trip.trip_id, span[0], span[1], acc[name][-1]))
        brakes = features.detect_hard_brakes(
            trip, cfg.features.hard_brake_threshold,
            cfg.features.hard_brake_min_duration)
        acc["hard_brake_count"].append(len(brakes))
        for b in brakes:
            evidence["hard_brake_count"].append(phenotype.EvidenceWindow(
                trip.trip_id, b.t0, b.t1, b.min_accel))
        try:
            scan = features.head_scan_stats(
                trip, cfg.features.large_motion_threshold,
                cfg.features.hist_edges)
            acc["mean_abs_daz"].append(scan.mean_abs_daz)
            evidence["mean_abs_daz"].append(phenotype.EvidenceWindow(
                trip.trip_id, span[0], span[1], scan.mean_abs_daz))
        except features.HeadChannelsMissing:
            pass
    for name, vals in acc.items():
        if name == "trip_count":
            continue
        if name == "hard_brake_count":
            metrics[name] = float(sum(vals))
        elif vals:
            metrics[name] = float(np.mean(vals))
    metrics["trip_count"] = float(len(trips))
    return metrics, evidence


def cmd_report(args, cfg: RunConfig) -> list[Path]:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    polyline, zones = geometry.load_route(args.route)
    rules = phenotype.load_rules(Path(args.rules), DRIVER_METRICS)
    trips = [t for t in _load_trips(args.trips) if t.driver_id == args.driver]
    if not trips:
        raise InputError(f"no trips for driver {args.driver!r}")
    metrics, evidence = driver_metrics(trips, polyline, zones, cfg)
    report = phenotype.evidence_report(args.driver, metrics, evidence, rules,
                                       cfg.report.max_evidence)
    (out / f"{args.driver}.report.json").write_text(json.dumps({
        "driver_id": report.driver_id,
        "metrics": {k: metrics[k] for k in sorted(metrics)},
        "flags": [
            {"rule": f.rule, "label": f.label, "threshold": f.threshold,
             "observed": f.observed,
             "evidence": [{"trip_id": w.trip_id, "t0": w.t0, "t1": w.t1,
                           "value": w.value} for w in f.evidence]}
            for f in report.flags
        ],
    }, indent=2, sort_keys=True) + "\n")
    (out / f"{args.driver}.report.txt").write_text(report.summary + "\n")
    return _expand(args.trips) + [Path(args.rules), Path(args.route)]


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drivescore")
    p.add_argument("--config", type=Path, default=None,
                   help="JSON run configuration (defaults baked in)")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="generate synthetic trips + ground truth")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--drivers", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--trips-per-driver", type=int, default=1)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("ingest", help="validate raw telemetry into a trip store")
    sp.add_argument("--input", nargs="+", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--schema", default=None)
    sp.add_argument("--rate", type=float, default=None,
                    help="resample to this rate (Hz)")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("score", help="sample/event safety-score CSVs")
    sp.add_argument("--trip", nargs="+", required=True)
    sp.add_argument("--route", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_score)

    sp = sub.add_parser("divergence", help="two-group route divergence CSV")
    sp.add_argument("--group-a", required=True)
    sp.add_argument("--group-b", required=True)
    sp.add_argument("--route", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--score", default="composite",
                    choices=scoring.SCORE_SELECTORS)
    sp.add_argument("--bin-size", type=float, default=None)
    sp.add_argument("--top-frac", type=float, default=None)
    sp.set_defaults(func=cmd_divergence)

    sp = sub.add_parser("features", help="weekly/monthly profiles + scan stats")
    sp.add_argument("--trips", nargs="+", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_features)

    sp = sub.add_parser("context", help="context partition and comparisons")
    sp.add_argument("--trip", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--series", default="speed")
    sp.set_defaults(func=cmd_context)

    sp = sub.add_parser("cluster", help="PCA + k-means + importance ranking")
    sp.add_argument("--matrix", required=True)
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--n-components", type=int, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_cluster)

    sp = sub.add_parser("report", help="rule-based evidence report for a driver")
    sp.add_argument("--trips", nargs="+", required=True)
    sp.add_argument("--driver", required=True)
    sp.add_argument("--rules", required=True)
    sp.add_argument("--route", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        inputs = args.func(args, cfg)
    except (ConfigError, phenotype.RuleConfigError, scoring.ScoringError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InputError, core_model.TripError, geometry.RouteError,
            features.FeatureError, phenotype.PhenotypeError,
            simgen.ScenarioError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL
    if hasattr(args, "out"):
        exports.write_manifest(Path(args.out), args.command,
                               cfg.canonical_json(), inputs)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
