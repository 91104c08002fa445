"""joinstate: protocol and deadlock analysis for concurrent objects with join patterns."""

__version__ = "0.1.0"
