"""Feasibility-cut counts and timings per cut-selection backend.

Writes ``cut_selection.csv``: generated versus selected feasibility cuts,
aggregated optimality cuts, iterations, objective and wall time.
"""

import argparse
import time

from _common import out_dir, scenarios
from qased import benders
from qased.benders import BendersConfig
from qased.caseio import load_case
from qased.csvio import to_csv, write_text
from qased.dispatch import compile_case


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--case", default="micro6")
    p.add_argument("--master", default="ilp-oracle")
    p.add_argument("--selections", nargs="+", default=list(benders.SELECTIONS))
    p.add_argument("--out", default="out/cut_selection")
    ns = p.parse_args()
    case = load_case(ns.case)
    program, sc = compile_case(case), scenarios(case)
    rows = []
    for sel in ns.selections:
        t = time.perf_counter()
        r = benders.run(program, sc, BendersConfig(master=ns.master, selection=sel))
        secs = time.perf_counter() - t
        master_s = sum(row["t_master_s"] for row in r.trace.rows)
        rows.append((sel, len(r.pool.feasibility), r.pool.S_fea, r.pool.S_op, r.iterations, float(r.cost),
                     r.converged, master_s, secs))
        print(f"{sel:<10} feasibility cuts {len(r.pool.feasibility):>5} -> {r.pool.S_fea:<5} aggregated "
              f"{r.pool.S_op:<3} iterations {r.iterations:<3} objective {r.cost:.6f}  {secs:.1f} s")
    path = write_text(out_dir(ns.out) / "cut_selection.csv",
                      to_csv(("selection", "feasibility_generated", "feasibility_selected", "aggregated_optimality",
                              "iterations", "objective", "converged", "master_seconds", "seconds"), rows))
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
