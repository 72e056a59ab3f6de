"""Monitored sparse nonlocal circuits: schedules, stabilizer simulation, percolation and scaling analysis."""

__version__ = "0.1.0"
