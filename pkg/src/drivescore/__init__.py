"""Continuous driving-assessment toolkit: telemetry ingestion, route-level
safety scoring, behavioral features, driver phenotyping, and a deterministic
synthetic trip generator."""

__version__ = "0.1.0"
