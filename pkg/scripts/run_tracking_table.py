#!/usr/bin/env python3
"""Reproduce the payload-tracking RMSE table at the three period settings."""

import sys

from hpa_sim.cli import main

if __name__ == "__main__":
    sys.exit(main(["table1", "--out", "out/tracking", *sys.argv[1:]]))
