"""Heuristic-master Benders run on the bundled 27-binary six-bus case.

The first stage is too large for enumeration, so only the annealing or QAOA
masters apply; the run reports bounds per iteration and may stop at the cap.
"""

import sys

from qased.cli import main

if __name__ == "__main__":
    defaults = ["solve", "--case", "ieee6-like", "--master", "qubo-anneal", "--max-iter", "50",
                "--out", "out/ieee6", "-v"]
    sys.exit(main(defaults + sys.argv[1:]))
