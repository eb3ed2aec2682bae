"""
Dining Co-occurrence Network Analysis

A Python package for building student co-dining networks from dining check-in
logs and relating network position to flourishing scores.
"""

__version__ = "1.0.0"

from .config import Config
from .cooccur import CoOccurrenceGraph, build_cumulative_graph, build_week_graph
from .ingest import EventLog, StudyCalendar, parse_checkins, partition_weeks
from .pipeline import Pipeline, run_pipeline
from .stats import TraitScores, correlation_table

__all__ = [
    "Config",
    "CoOccurrenceGraph",
    "EventLog",
    "Pipeline",
    "StudyCalendar",
    "TraitScores",
    "build_cumulative_graph",
    "build_week_graph",
    "correlation_table",
    "parse_checkins",
    "partition_weeks",
    "run_pipeline",
]
