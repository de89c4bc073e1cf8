"""Trajectory simulator for measurement-based holonomic gates on stabilizer codes."""

__version__ = "0.1.0"
