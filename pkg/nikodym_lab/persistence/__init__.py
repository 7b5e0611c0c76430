"""
nikodym-lab Persistence Layer

Flat-file storage for experiment results.

Components:
- ReportStore: CSV/JSON tables, JSON reports, manifest and SVG plots
"""

from .report_store import ReportStore, library_versions, to_jsonable

__all__ = ["ReportStore", "library_versions", "to_jsonable"]
