"""Randomized polar codes for straggler-resilient distributed linear algebra."""

__version__ = "0.1.0"
