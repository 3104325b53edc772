"""Command-line drivers: ``sample``, ``solve``, ``compare`` and ``robustness``.

Outputs go to ``--out`` (default ``out``); the ``QASED_OUTPUT_DIR``
environment variable overrides it. Exit status: 0 when the run converged
(and, for ``compare``, the objectives agree), 1 when it did not, 2 on error,
in which case the files written by the failed command are removed.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import benders, uqae
from .caseio import BUNDLED, load_case
from .config import OUTPUT_ENV, RunConfig
from .csvio import to_csv, write_text
from .dispatch import compile_case, decode_schedule
from .qaoa import AnnealSchedule, QaoaConfig

log = logging.getLogger("qased")


class _Outputs:
    """Files written by one command, removed again if the command fails."""

    def __init__(self, root: Path):
        self.root = root
        self.created_root = not root.exists()
        self.files: list[Path] = []

    def write(self, name: str, text: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        p = write_text(self.root / name, text)
        self.files.append(p)
        return p

    def discard(self):
        for p in self.files:
            p.unlink(missing_ok=True)
        if self.created_root and self.root.exists() and not any(self.root.iterdir()):
            self.root.rmdir()


def _scenarios(case, cfg: RunConfig, seed: int | None = None):
    return uqae.generate_scenarios([r.error for r in case.res_units], [r.encoding for r in case.res_units],
                                   mode=cfg.mode, shots=cfg.shots, seed=cfg.seed if seed is None else seed)


def _summary_csv(pairs) -> str:
    return to_csv(("key", "value"), pairs)


# --- commands ----------------------------------------------------------------------


def cmd_sample(cfg: RunConfig, out: _Outputs, a: int = 6) -> int:
    """Per-RES weight histograms, the scenario table and amplitude-estimated error means."""
    case = load_case(cfg.case)
    sc = _scenarios(case, cfg)
    rows = []
    for r, res in enumerate(case.res_units):
        exact = uqae.discretize_distribution(res.error, res.encoding)
        weights = sc.marginals[r] if sc.marginals else exact
        for k, (v, w, p) in enumerate(zip(res.encoding.values(), weights, exact)):
            rows.append((res.name, k, float(v), float(w), float(p)))
    out.write("sample_histograms.csv", to_csv(("res", "level", "error_pu", "weight", "exact_weight"), rows))
    out.write("scenarios.csv", sc.to_csv())
    means = []
    for res in case.res_units:
        enc = res.encoding
        est = uqae.estimate_mean(res.error, enc, a, shots=None if cfg.mode == "exact" else cfg.shots, seed=cfg.seed)
        exact = uqae.exact_mean(res.error, enc)
        means.append((res.name, a, est.estimate, exact, abs(est.estimate - exact),
                      uqae.de_unify(est.estimate, enc), uqae.de_unify(exact, enc)))
    out.write("uqae_means.csv", to_csv(("res", "a", "estimate_unified", "grid_mean_unified", "abs_error",
                                        "estimate_pu", "grid_mean_pu"), means))
    print(f"{len(sc)} scenarios over {len(case.res_units)} RES units, weights sum {sc.weights.sum():.12f}")
    for m in means:
        print(f"  {m[0]:<8} E[error] estimate {m[5]:+.6f} pu, grid mean {m[6]:+.6f} pu")
    return 0


def _solve(cfg: RunConfig, seed: int | None = None, cache=None):
    case = load_case(cfg.case)
    program = compile_case(case)
    sc = _scenarios(case, cfg, seed)
    t = time.perf_counter()
    res = benders.run(program, sc, cfg.benders(), cache=cache)
    return program, sc, res, time.perf_counter() - t


def cmd_solve(cfg: RunConfig, out: _Outputs) -> int:
    program, sc, res, secs = _solve(cfg)
    out.write("trace.csv", res.trace.to_csv())
    summary = [("case", cfg.case), ("master", cfg.master), ("selection", cfg.selection), ("mode", cfg.mode),
               ("scenarios", len(sc)), ("converged", res.converged), ("reason", res.reason),
               ("iterations", res.iterations), ("objective", float(res.cost)), ("lower_bound", float(res.lower)),
               ("aggregated_optimality_cuts", res.pool.S_op), ("feasibility_cuts_generated", len(res.pool.feasibility)),
               ("feasibility_cuts_selected", res.pool.S_fea), ("seconds", secs)]
    if res.z0 is not None:
        report = decode_schedule(program, res.z0, res.recourse, sc.weights)
        out.write("schedule.csv", report.to_csv())
        out.write("schedule.txt", report.to_text())
        summary.append(("first_stage", "".join(map(str, res.z0))))
        print(report.to_text(), end="")
    out.write("summary.csv", _summary_csv(summary))
    print(f"{'converged' if res.converged else 'NOT converged'} ({res.reason}) after {res.iterations} iterations; "
          f"objective {res.cost:.9f}, lower bound {res.lower:.9f}")
    return 0 if res.converged else 1


def cmd_compare(cfg: RunConfig, out: _Outputs, baseline: str = "ilp-oracle", tol: float = 1e-6) -> int:
    """Quantum-assisted master (``cfg.master``) next to a classical baseline on the same scenarios."""
    from dataclasses import replace

    rows, results = [], []
    cache: dict = {}
    for master in (cfg.master, baseline):
        _, _, res, secs = _solve(replace(cfg, master=master), cache=cache)
        results.append(res)
        rows.append((master, float(res.cost), res.converged, res.iterations, res.pool.S_op, res.pool.S_fea, secs))
    delta = results[0].cost - results[1].cost
    agree = bool(np.isfinite(delta) and abs(delta) <= tol * (1 + abs(results[1].cost)))
    out.write("compare.csv", to_csv(("master", "objective", "converged", "iterations", "aggregated_cuts",
                                     "selected_feasibility_cuts", "seconds"), rows))
    out.write("compare_summary.csv", _summary_csv([("delta", float(delta)), ("tolerance", tol), ("agree", agree)]))
    for r in rows:
        print(f"  {r[0]:<12} objective {r[1]:.9f}  converged={r[2]}  iterations={r[3]}")
    print(f"objective delta {delta:.3e} ({'within' if agree else 'OUTSIDE'} tolerance)")
    ok = agree and all(r.converged for r in results)
    return 0 if ok else 1


def _robust_trial(args):
    cfg, seed = args
    _, sc, res, secs = _solve(cfg, seed)
    return seed, float(res.cost), res.converged, res.iterations, "".join(map(str, res.z0)) if res.z0 is not None else "", secs


def cmd_robustness(cfg: RunConfig, out: _Outputs, trials: int = 10) -> int:
    """Independent end-to-end runs with split seeds; mean and spread of the objective."""
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(cfg.seed).spawn(trials)]
    jobs = [(cfg, s) for s in seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            runs = list(ex.map(_robust_trial, jobs))
    else:
        runs = [_robust_trial(j) for j in jobs]
    rows = [(t,) + r for t, r in enumerate(runs)]
    out.write("robustness.csv", to_csv(("trial", "seed", "objective", "converged", "iterations", "first_stage",
                                        "seconds"), rows))
    obj = np.array([r[1] for r in runs])
    # spread of the deviations from the first run: exactly 0 when all runs agree
    sd = float((obj - obj[0]).std(ddof=1)) if trials > 1 else 0.0
    stats = [("trials", trials), ("mode", cfg.mode), ("mean", float(obj.mean())), ("std", sd),
             ("standard_error", sd / math.sqrt(trials)), ("min", float(obj.min())), ("max", float(obj.max())),
             ("all_converged", all(r[2] for r in runs))]
    out.write("robustness_summary.csv", _summary_csv(stats))
    print(f"{trials} runs: mean {obj.mean():.6f}, std {sd:.6f}, range [{obj.min():.6f}, {obj.max():.6f}]")
    return 0 if all(r[2] for r in runs) else 1


# --- argument parsing ------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--case", default="micro6", help=f"case file or bundled name {BUNDLED}")
    common.add_argument("--mode", choices=("exact", "sampled"), default="exact", help="scenario weights")
    common.add_argument("--shots", type=int, default=512, help="measurements per RES in sampled mode")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--master", choices=benders.MASTERS, default="qubo-exact")
    common.add_argument("--selection", choices=benders.SELECTIONS, default="greedy")
    common.add_argument("--eps", type=float, default=1e-6, help="relative gap tolerance")
    common.add_argument("--max-iter", type=int, default=50)
    common.add_argument("--termination", choices=benders.TERMINATIONS, default="gap")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--qaoa-depth", type=int, default=3)
    common.add_argument("--qaoa-restarts", type=int, default=8)
    common.add_argument("--qaoa-shots", type=int, default=None, help="shots per evaluation (default exact)")
    common.add_argument("--qaoa-cap", type=int, default=16, help="largest master solved by QAOA")
    common.add_argument("--anneal-sweeps", type=int, default=2000)
    common.add_argument("--out", default="out", help=f"output directory (overridden by ${OUTPUT_ENV})")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="qased", description="Quantum-assisted stochastic economic dispatch.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("sample", parents=[common], help="prediction-error weights and scenarios")
    s.add_argument("--a", type=int, default=6, help="Grover power count for the mean estimate")
    sub.add_parser("solve", parents=[common], help="Benders solve with schedule and trace")
    c = sub.add_parser("compare", parents=[common], help="master backend against a classical baseline")
    c.add_argument("--baseline", choices=benders.MASTERS, default="ilp-oracle")
    c.add_argument("--tolerance", type=float, default=1e-6, help="relative objective tolerance")
    r = sub.add_parser("robustness", parents=[common], help="repeated seeded end-to-end runs")
    r.add_argument("--trials", type=int, default=10)
    return p


def config_from_args(ns) -> RunConfig:
    return RunConfig(case=ns.case, mode=ns.mode, shots=ns.shots, seed=ns.seed, master=ns.master,
                     selection=ns.selection, eps=ns.eps, max_iter=ns.max_iter, termination=ns.termination,
                     workers=ns.workers,
                     qaoa=QaoaConfig(depth=ns.qaoa_depth, restarts=ns.qaoa_restarts, shots=ns.qaoa_shots,
                                     seed=ns.seed, cap=ns.qaoa_cap),
                     anneal=AnnealSchedule(sweeps=ns.anneal_sweeps), output_dir=ns.out)


def main(argv=None) -> int:
    ns = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = None
    try:
        cfg = config_from_args(ns)
        out = _Outputs(cfg.resolved_output_dir())
        if ns.command == "sample":
            code = cmd_sample(cfg, out, ns.a)
        elif ns.command == "solve":
            code = cmd_solve(cfg, out)
        elif ns.command == "compare":
            code = cmd_compare(cfg, out, ns.baseline, ns.tolerance)
        else:
            code = cmd_robustness(cfg, out, ns.trials)
    except Exception as exc:  # every failure: message, cleanup, status 2
        if out is not None:
            out.discard()
        if ns.verbose:
            log.exception("failed")
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"outputs in {out.root}")
    return code


if __name__ == "__main__":
    sys.exit(main())
