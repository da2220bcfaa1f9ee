"""Unsupervised driver phenotyping: feature-matrix assembly, standardization,
PCA, seeded k-means, feature-importance ranking, and rule-based evidence
reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np


class PhenotypeError(Exception):
    pass


class RuleConfigError(PhenotypeError):
    """A rules file references an unknown metric or comparator."""


@dataclass(frozen=True)
class FeatureMatrix:
    row_keys: tuple[tuple[str, str], ...]   # (driver_id, period)
    columns: tuple[str, ...]
    values: np.ndarray                      # rows x columns, no missing values
    dropped_rows: tuple[tuple[tuple[str, str], str], ...] = ()

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            raise PhenotypeError("duplicate column names")
        if self.values.shape != (len(self.row_keys), len(self.columns)):
            raise PhenotypeError("matrix shape mismatch")
        if not np.isfinite(self.values).all():
            raise PhenotypeError("matrix contains non-finite values")

    @property
    def n_rows(self) -> int:
        return len(self.row_keys)


def build_feature_matrix(rows: Mapping[tuple[str, str], Mapping[str, float]],
                         selectors: Sequence[str]) -> FeatureMatrix:
    """Assemble one row per (driver, period) from named per-period metrics.
    Rows missing any selected feature are dropped and recorded."""
    if not selectors:
        raise PhenotypeError("empty feature selection")
    kept_keys, kept_vals, dropped = [], [], []
    for key in sorted(rows):
        metrics = rows[key]
        missing = [s for s in selectors
                   if s not in metrics or metrics[s] is None
                   or not np.isfinite(metrics[s])]
        if missing:
            dropped.append((key, f"missing features: {', '.join(missing)}"))
            continue
        kept_keys.append(key)
        kept_vals.append([float(metrics[s]) for s in selectors])
    if not kept_keys:
        raise PhenotypeError("no complete rows for the selected features")
    return FeatureMatrix(tuple(kept_keys), tuple(selectors),
                         np.array(kept_vals), tuple(dropped))


@dataclass(frozen=True)
class Standardization:
    matrix: FeatureMatrix
    means: tuple[float, ...]
    sds: tuple[float, ...]                 # population sd of retained columns
    dropped_columns: tuple[str, ...]       # zero-variance columns


def standardize(m: FeatureMatrix) -> Standardization:
    """Z-score each column (population sd); zero-variance columns dropped."""
    if m.n_rows < 2:
        raise PhenotypeError("standardize needs at least 2 rows")
    means = m.values.mean(axis=0)
    sds = m.values.std(axis=0)
    keep = sds > 0
    if not keep.any():
        raise PhenotypeError("all columns have zero variance")
    z = (m.values[:, keep] - means[keep]) / sds[keep]
    cols = tuple(c for c, k in zip(m.columns, keep) if k)
    dropped = tuple(c for c, k in zip(m.columns, keep) if not k)
    out = FeatureMatrix(m.row_keys, cols, z, m.dropped_rows)
    return Standardization(out, tuple(means[keep]), tuple(sds[keep]), dropped)


@dataclass(frozen=True)
class PcaResult:
    components: np.ndarray                 # columns x n_components, orthonormal
    projections: np.ndarray                # rows x n_components
    explained_variance_ratio: np.ndarray
    eigenvalues: np.ndarray
    dropped_columns: tuple[str, ...] = ()


def pca_project(m: FeatureMatrix, n_components: int) -> PcaResult:
    """PCA by eigendecomposition of the sample covariance.  Component signs
    are fixed so each component's largest-magnitude coefficient is
    nonnegative."""
    x = m.values
    n, p = x.shape
    if not 1 <= n_components <= min(n - 1, p):
        raise PhenotypeError(
            f"n_components must be in [1, min(rows-1, cols)] = [1, {min(n - 1, p)}]")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    eigvecs = eigvecs[:, order]
    for j in range(eigvecs.shape[1]):
        k = int(np.argmax(np.abs(eigvecs[:, j])))
        if eigvecs[k, j] < 0:
            eigvecs[:, j] = -eigvecs[:, j]
    total = eigvals.sum()
    ratio = eigvals / total if total > 0 else np.zeros_like(eigvals)
    comps = eigvecs[:, :n_components]
    return PcaResult(
        components=comps,
        projections=centered @ comps,
        explained_variance_ratio=ratio[:n_components],
        eigenvalues=eigvals[:n_components],
    )


@dataclass(frozen=True)
class ClusterResult:
    k: int
    seed: int
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    iterations: int
    inertia_history: tuple[float, ...]


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding from a PCG64 generator (numpy default_rng)."""
    n = len(x)
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = np.sum((x - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total == 0:
            centroids[j] = x[rng.integers(n)]
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r))
            centroids[j] = x[min(idx, n - 1)]
        d2 = np.minimum(d2, np.sum((x - centroids[j]) ** 2, axis=1))
    return centroids


def _lloyd(x: np.ndarray, centroids: np.ndarray, k: int,
           max_iter: int, rel_tol: float) -> tuple[np.ndarray, np.ndarray, list[float]]:
    n = len(x)
    history: list[float] = []
    labels = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        dist2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(dist2, axis=1)
        for c in range(k):
            if not (labels == c).any():
                worst = int(np.argmax(dist2[np.arange(n), labels]))
                labels[worst] = c
        for c in range(k):
            centroids[c] = x[labels == c].mean(axis=0)
        inertia = float(((x - centroids[labels]) ** 2).sum())
        history.append(inertia)
        if len(history) >= 2:
            prev = history[-2]
            if prev == 0.0 or (prev - inertia) / prev < rel_tol:
                break
    return labels, centroids, history


def kmeans_cluster(m: FeatureMatrix, k: int, seed: int,
                   max_iter: int = 300, rel_tol: float = 1e-6,
                   n_init: int = 10) -> ClusterResult:
    """Lloyd's algorithm with k-means++ initialization, best of n_init
    restarts by final inertia (first winner kept on ties).  The generator
    is numpy's default PCG64 seeded with `seed`, so identical (data, k,
    seed) give identical output.  Empty clusters are repaired by moving the
    point farthest from its assigned centroid."""
    x = m.values
    n = len(x)
    if not 1 <= k <= n:
        raise PhenotypeError(f"k must be in [1, {n}]")
    if n_init < 1:
        raise PhenotypeError("n_init must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centroids = _kmeanspp_init(x, k, rng)
        labels, centroids, history = _lloyd(x, centroids, k, max_iter, rel_tol)
        if best is None or history[-1] < best[2][-1]:
            best = (labels, centroids, history)
    labels, centroids, history = best
    return ClusterResult(k, seed, labels, centroids, history[-1], len(history),
                         tuple(history))


@dataclass(frozen=True)
class ImportanceRanking:
    features: tuple[str, ...]              # sorted by ratio descending
    ratios: tuple[float, ...]              # between/total sum of squares


def feature_importance(m: FeatureMatrix, labels: np.ndarray) -> ImportanceRanking:
    """Per-feature between-cluster / total sum of squares on the standardized
    columns, ranked descending (index tie-break)."""
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise PhenotypeError("feature importance needs at least 2 clusters")
    x = m.values
    grand = x.mean(axis=0)
    tss = ((x - grand) ** 2).sum(axis=0)
    bss = np.zeros_like(tss)
    for c in uniq:
        sub = x[labels == c]
        bss += len(sub) * (sub.mean(axis=0) - grand) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(tss > 0, bss / tss, 0.0)
    ratios = np.clip(ratios, 0.0, 1.0)
    order = sorted(range(len(ratios)), key=lambda j: (-ratios[j], j))
    return ImportanceRanking(
        features=tuple(m.columns[j] for j in order),
        ratios=tuple(float(ratios[j]) for j in order),
    )


# ---------------------------------------------------------------------------
# rule-based evidence reports

COMPARATORS = {
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
}


@dataclass(frozen=True)
class Rule:
    metric: str
    op: str
    threshold: float
    label: str
    template: str

    def fires(self, value: float) -> bool:
        return COMPARATORS[self.op](value, self.threshold)


@dataclass(frozen=True)
class EvidenceWindow:
    trip_id: str
    t0: float
    t1: float
    value: float


@dataclass(frozen=True)
class Flag:
    rule: str
    label: str
    threshold: float
    observed: float
    evidence: tuple[EvidenceWindow, ...]


@dataclass(frozen=True)
class EvidenceReport:
    driver_id: str
    flags: tuple[Flag, ...]
    summary: str


def load_rules(path: Path, known_metrics: Sequence[str]) -> list[Rule]:
    """Parse a rules JSON file, failing fast on unknown metrics or ops."""
    raw = json.loads(Path(path).read_text())
    rules = []
    for i, r in enumerate(raw):
        if r.get("op") not in COMPARATORS:
            raise RuleConfigError(f"rule {i}: unknown comparator {r.get('op')!r}")
        if r.get("metric") not in known_metrics:
            raise RuleConfigError(f"rule {i}: unknown metric {r.get('metric')!r}")
        rules.append(Rule(r["metric"], r["op"], float(r["threshold"]),
                          r.get("label", r["metric"]),
                          r.get("template",
                                "{metric} {op} {threshold} (observed {observed:.3f})")))
    return rules


def evidence_report(driver_id: str,
                    metrics: Mapping[str, float],
                    evidence: Mapping[str, Sequence[EvidenceWindow]],
                    rules: Sequence[Rule],
                    max_evidence: int = 3) -> EvidenceReport:
    """Evaluate rules against a driver's metrics; each fired rule carries the
    worst-offending evidence windows (worst in the rule's direction)."""
    flags = []
    lines = [f"driver {driver_id}:"]
    for rule in rules:
        if rule.metric not in metrics:
            continue
        observed = float(metrics[rule.metric])
        if not rule.fires(observed):
            continue
        windows = list(evidence.get(rule.metric, ()))
        reverse = rule.op in (">", ">=")
        windows.sort(key=lambda w: (w.value if not reverse else -w.value,
                                    w.trip_id, w.t0))
        picked = tuple(windows[:max_evidence]) or (
            EvidenceWindow("(all trips)", 0.0, 0.0, observed),)
        flags.append(Flag(rule.metric + rule.op + repr(rule.threshold),
                          rule.label, rule.threshold, observed, picked))
        lines.append("  [" + rule.label + "] " + rule.template.format(
            metric=rule.metric, op=rule.op, threshold=rule.threshold,
            observed=observed))
        for w in picked:
            lines.append(f"    evidence: trip {w.trip_id} "
                         f"t=[{w.t0:.1f}, {w.t1:.1f}] value={w.value:.3f}")
    if len(lines) == 1:
        lines.append("  no rules fired")
    return EvidenceReport(driver_id, tuple(flags), "\n".join(lines))
