"""Trajectory prediction with sparse temporal attention and lane-graph fusion, in pure numpy."""

__version__ = "0.1.0"
