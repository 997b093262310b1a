#!/usr/bin/env python3
"""siri-bench - tamper-evident immutable indexes and their benchmarks."""

import sys
from pathlib import Path

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from ui.cli import bench


def main():
    """Main entry point for the bench command group."""
    bench(obj={})


if __name__ == "__main__":
    main()
