"""Deterministic workcell simulator and dual-verification replanning engine."""

__version__ = "0.1.0"
