"""Scenario-aware next-POI recommendation on multi-view hypergraphs."""

__version__ = "0.1.0"
