"""Figure rendering for splitflow run directories."""

__version__ = "0.1.0"
