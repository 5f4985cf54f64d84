"""Cluster-aligned in-context example retrieval for log level prediction."""

__version__ = "0.1.0"
