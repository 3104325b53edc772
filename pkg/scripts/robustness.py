"""Repeated seeded end-to-end runs with sampled weights (histogram-ready CSV).

Thin wrapper around ``qased robustness`` with experiment defaults.
"""

import sys

from qased.cli import main

if __name__ == "__main__":
    defaults = ["robustness", "--mode", "sampled", "--trials", "100", "--out", "out/robustness"]
    sys.exit(main(defaults + sys.argv[1:]))
