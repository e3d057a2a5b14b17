"""Desk-scale digital twin for planar pushing: simulator, policies, tooling."""

__version__ = "0.1.0"
