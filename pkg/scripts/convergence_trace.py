"""Lower and upper bounds per Benders iteration for several master backends.

Writes ``trace_<master>.csv`` (full trace) and ``bounds.csv`` (long format).
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
    p.add_argument("--masters", nargs="+", default=["ilp-oracle", "qubo-exact", "qubo-qaoa"])
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out/convergence")
    ns = p.parse_args()
    case = load_case(ns.case)
    program, sc = compile_case(case), scenarios(case)
    out = out_dir(ns.out)
    cache: dict = {}
    rows = []
    for m in ns.masters:
        t = time.perf_counter()
        r = benders.run(program, sc, BendersConfig(master=m, max_iter=ns.max_iter, seed=ns.seed), cache=cache)
        write_text(out / f"trace_{m}.csv", r.trace.to_csv())
        rows += [(m, row["iteration"], row["lower"], row["upper"]) for row in r.trace.rows]
        print(f"{m:<12} objective {r.cost:.6f}  converged={r.converged}  iterations={r.iterations}  "
              f"{time.perf_counter() - t:.1f} s")
    write_text(out / "bounds.csv", to_csv(("master", "iteration", "lower", "upper"), rows))
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
