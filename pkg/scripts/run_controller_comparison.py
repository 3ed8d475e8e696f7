#!/usr/bin/env python3
"""Hybrid vs taut-assuming controller under the scripted disturbances."""

import sys

from hpa_sim.cli import main

if __name__ == "__main__":
    sys.exit(main(["compare", "--out", "out/compare", *sys.argv[1:]]))
