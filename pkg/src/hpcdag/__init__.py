"""Allocation, analysis and time-table synthesis for HPC-DAG task sets."""

__version__ = "0.1.0"
