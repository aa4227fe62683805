#!/usr/bin/env python3
"""
Command-line entry point for the KaBaR partition refiner
"""
import sys
from pathlib import Path

# Make the kabar package importable when run from a checkout
sys.path.insert(0, str(Path(__file__).parent))

from kabar.main import cli_main

if __name__ == "__main__":
    sys.exit(cli_main())
