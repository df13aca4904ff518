"""Linearizability checking for concurrent priority queues."""

__version__ = "0.1.0"
