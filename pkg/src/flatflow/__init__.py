"""Simulation and verification toolkit for σ₂ curvature flows of convex
graphs with a flat side."""

from __future__ import annotations

__version__ = "0.1.0"
