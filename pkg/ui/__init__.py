"""Command-line interface for siri-bench."""

from .cli import bench

__all__ = ["bench"]
