"""Multi-cut-aggregated Benders loop with QUBO-encoded master problems.

Each iteration solves the master for a trial ``z0``, solves every scenario's
dual recourse LP, and either adds one probability-weighted optimality cut
(all scenarios feasible) or feasibility cuts for the infeasible scenarios,
followed by set-cover selection of the feasibility cuts.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import cutsel
from . import qaoa as qsolve
from .lp import FeasibilityCut, OptimalityCut, solve_subproblem
from .qubo import CutSystem, encode_master, solve_master_ilp

log = logging.getLogger(__name__)

MASTERS = ("ilp-oracle", "qubo-exact", "qubo-qaoa", "qubo-anneal")
SELECTIONS = ("none",) + cutsel.BACKENDS
TERMINATIONS = ("gap", "no-new-cuts")
EXHAUSTIVE_DIM = 20  # exact masters up to this size are solved by brute force over all bit-strings


class BendersError(RuntimeError):
    pass


class MasterInfeasible(BendersError):
    pass


@dataclass(frozen=True)
class BendersConfig:
    master: str = "ilp-oracle"
    selection: str = "greedy"
    eps: float = 1e-6  # relative: UB - LB <= eps * (1 + |UB|)
    max_iter: int = 50
    termination: str = "gap"
    workers: int = 1
    resolution_floor: float = 2.0**-12  # register grid for exact QUBO masters
    heuristic_resolution_floor: float = 2.0**-8  # coarser grid for QAOA / annealing masters
    # masters above 16 qubits go to the annealing surrogate: one exact-statevector QAOA
    # solve at 20 qubits costs minutes on a single core
    qaoa: qsolve.QaoaConfig = field(default_factory=lambda: qsolve.QaoaConfig(cap=16))
    anneal: qsolve.AnnealSchedule = field(default_factory=qsolve.AnnealSchedule)
    polish: bool = True  # 1-flip descent on z0 after heuristic master solves
    seed: int = 0

    def __post_init__(self):
        if self.master not in MASTERS:
            raise ValueError(f"master backend must be one of {MASTERS}")
        if self.selection not in SELECTIONS:
            raise ValueError(f"selection backend must be one of {SELECTIONS}")
        if self.termination not in TERMINATIONS:
            raise ValueError(f"termination must be one of {TERMINATIONS}")
        if self.max_iter < 1 or self.workers < 1 or self.eps < 0:
            raise ValueError("max_iter and workers must be >= 1, eps >= 0")

    @property
    def exact_master(self) -> bool:
        return self.master in ("ilp-oracle", "qubo-exact")


# --- cut pool ----------------------------------------------------------------------


@dataclass
class Aggregate:
    constant: float
    coeffs: np.ndarray
    iteration: int

    def evaluate(self, z0) -> float:
        return self.constant + float(self.coeffs @ np.asarray(z0, dtype=float))


def aggregate_optimality(cuts: Sequence[OptimalityCut], weights, iteration: int = 0) -> Aggregate:
    """Probability-weighted sum of per-scenario cuts: eta >= sum_s p_s (c_s + g_s . z0)."""
    weights = np.asarray(weights, dtype=float)
    got = sorted(c.scenario for c in cuts)
    if got != list(range(weights.shape[0])):
        missing = sorted(set(range(weights.shape[0])) - set(got))
        raise BendersError(f"missing optimality cut for scenario(s) {missing}" if missing
                           else "duplicate scenario cuts")
    const = math.fsum(weights[c.scenario] * c.constant for c in cuts)
    coeffs = np.sum([weights[c.scenario] * c.coeffs for c in cuts], axis=0)
    return Aggregate(const, coeffs, iteration)


@dataclass
class CutPool:
    optimality: list[list[OptimalityCut]] = field(default_factory=list)
    aggregates: list[Aggregate] = field(default_factory=list)
    feasibility: list[FeasibilityCut] = field(default_factory=list)
    feasibility_trial: list[int] = field(default_factory=list)  # originating trial (iteration)
    selected: list[int] = field(default_factory=list)
    infeasible_trials: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def S_op(self) -> int:
        return len(self.aggregates)

    @property
    def S_fea(self) -> int:
        return len(self.selected)

    def cut_system(self) -> CutSystem:
        return CutSystem(
            opt=[(a.constant, a.coeffs) for a in self.aggregates],
            fea=[(self.feasibility[k].constant, self.feasibility[k].coeffs) for k in self.selected],
        )

    def has_aggregate(self, agg: Aggregate, tol: float = 1e-9) -> bool:
        return any(abs(a.constant - agg.constant) <= tol and np.allclose(a.coeffs, agg.coeffs, rtol=0, atol=tol)
                   for a in self.aggregates)

    def max_violation(self, z0, eta: float) -> float:
        v = [a.evaluate(z0) - eta for a in self.aggregates]
        v += [self.feasibility[k].evaluate(z0) for k in self.selected]
        return max(v, default=0.0)


# --- trace -------------------------------------------------------------------------

TRACE_HEADER = ("iteration", "lower", "upper", "trial", "master_objective", "master_backend", "qubo_dim",
                "snap_distance", "opt_generated", "opt_aggregated", "fea_generated", "fea_total", "fea_selected",
                "t_master_s", "t_subproblems_s", "t_selection_s")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class BendersTrace:
    rows: list[dict] = field(default_factory=list)

    def append(self, **row):
        self.rows.append(row)

    @property
    def lower(self) -> np.ndarray:
        return np.array([r["lower"] for r in self.rows])

    @property
    def upper(self) -> np.ndarray:
        return np.array([r["upper"] for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.rows:
            w.writerow([_fmt(r[k]) for k in TRACE_HEADER])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "BendersTrace":
        rd = csv.reader(io.StringIO(text))
        header = tuple(next(rd))
        if header != TRACE_HEADER:
            raise ValueError("not a Benders trace CSV")
        ints = {"iteration", "qubo_dim", "opt_generated", "opt_aggregated", "fea_generated", "fea_total",
                "fea_selected"}
        strs = {"trial", "master_backend"}
        out = cls()
        for rec in rd:
            row = {}
            for k, v in zip(header, rec):
                row[k] = v if k in strs else int(v) if k in ints else float(v)
            out.rows.append(row)
        return out


@dataclass
class BendersResult:
    z0: np.ndarray | None
    cost: float
    recourse: list[np.ndarray]
    trace: BendersTrace
    pool: CutPool
    converged: bool
    iterations: int
    reason: str
    masters: list[CutSystem] = field(default_factory=list)  # master instance solved at each iteration

    @property
    def lower(self) -> float:
        return float(self.trace.rows[-1]["lower"]) if self.trace.rows else -math.inf

    @property
    def upper(self) -> float:
        return self.cost


def bounds(result_or_trace) -> tuple[float, float]:
    trace = result_or_trace.trace if isinstance(result_or_trace, BendersResult) else result_or_trace
    if not trace.rows:
        raise BendersError("no master solve yet")
    return float(trace.rows[-1]["lower"]), float(trace.rows[-1]["upper"])


# --- master backends ------------------------------------------------------------


def _master_value(a, cuts: CutSystem, z0) -> float:
    return float(np.asarray(a) @ z0) + cuts.eta_needed(z0)


def _polish_score(cuts: CutSystem, a, z):
    viol = max([c + float(g @ z) for c, g in cuts.fea], default=0.0)
    return (max(viol, 0.0) > 1e-9, max(viol, 0.0), _master_value(a, cuts, z))


def _polish(a, cuts: CutSystem, z0: np.ndarray) -> np.ndarray:
    """Steepest 1-flip descent on the (snapped) master objective; infeasible points score by violation."""

    def score(z):
        return _polish_score(cuts, a, z)

    z = z0.copy()
    cur = score(z)
    while True:
        best, best_z = cur, None
        for i in range(z.shape[0]):
            y = z.copy()
            y[i] = 1 - y[i]
            s = score(y)
            if s < best:
                best, best_z = s, y
        if best_z is None:
            return z
        z, cur = best_z, best


def solve_master(a, cuts: CutSystem, cfg: BendersConfig, iteration: int, incumbent=None):
    """(z0, master objective on the raw cuts, info dict).

    ``incumbent`` (the best feasible trial so far) is an extra polish start for
    heuristic masters: it is feasible for every cut, so a sampler that ends
    above it has missed the master optimum.
    """
    a = np.asarray(a, dtype=float)
    if cfg.master == "ilp-oracle":
        out = solve_master_ilp(a, cuts)
        if out is None:
            raise MasterInfeasible("feasibility cuts exclude every first-stage assignment")
        z0, _, obj = out
        return z0, obj, {"backend": "ilp-oracle", "dim": 0, "snap": 0.0}
    floor = cfg.resolution_floor if cfg.exact_master else cfg.heuristic_resolution_floor
    mq = encode_master(a, cuts, resolution_floor=floor)
    q = mq.qubo
    info = {"dim": q.dimension, "snap": mq.snap_distance}
    if cfg.master == "qubo-exact":
        if q.dimension <= EXHAUSTIVE_DIM:
            sol = qsolve.solve_exact(q)
        else:
            sol = qsolve.Solution(mq.ground_state(), math.nan, "exact-analytic")
        info["backend"] = sol.method
    else:
        seed = cfg.seed * 100003 + iteration
        if cfg.master == "qubo-qaoa" and q.dimension <= cfg.qaoa.cap:
            sol = qsolve.solve_qaoa(q, replace(cfg.qaoa, seed=seed))
            info["backend"] = "qaoa"
        else:
            if cfg.master == "qubo-qaoa":
                log.info("master QUBO has %d variables > cap %d: annealing surrogate", q.dimension, cfg.qaoa.cap)
            sol = qsolve.solve_anneal(q, cfg.anneal, seed)
            info["backend"] = "anneal" if cfg.master == "qubo-anneal" else "qaoa>anneal"
    z0, eta, _, _ = mq.decode(sol.bits)
    if cfg.master == "qubo-exact":
        if not mq.satisfies(sol.bits):
            if solve_master_ilp(a, mq.cuts) is None:
                raise MasterInfeasible("feasibility cuts exclude every first-stage assignment")
            raise MasterInfeasible("exact QUBO ground state violates an encoded constraint "
                                   "(penalty or width misconfiguration)")
    elif cfg.polish:
        # local search from every distinct z0 the sampler returned, best result by master value
        starts = {tuple(mq.decode(b)[0]) for b in (sol.candidates or [sol.bits])}
        if incumbent is not None:
            starts.add(tuple(int(v) for v in incumbent))
        polished = [_polish(a, mq.cuts, np.array(z)) for z in sorted(starts)]
        z0 = min(polished, key=lambda z: (_polish_score(mq.cuts, a, z), tuple(z)))
        info["backend"] += "+polish"
    return z0.astype(int), _master_value(a, cuts, z0), info


# --- main loop -------------------------------------------------------------------


def _solve_all(program, xis, z0, workers, cache):
    key_z = np.asarray(z0, dtype=np.int8).tobytes()

    def one(s):
        key = (xis[s].tobytes(), key_z)
        if cache is not None and key in cache:
            cut = cache[key]
        else:
            cut = solve_subproblem(program, s, z0, xis[s])
            if cache is not None:
                cache[key] = cut
        return replace(cut, scenario=s)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(one, range(len(xis))))
    return [one(s) for s in range(len(xis))]


def run(program, scenarios, config: BendersConfig | None = None, cache: dict | None = None) -> BendersResult:
    """Benders iterations until the gap closes (or no new cuts appear, by flag) or the cap is hit."""
    cfg = config or BendersConfig()
    weights = np.asarray(scenarios.weights, dtype=float)
    if weights.size == 0:
        raise BendersError("empty scenario set")
    if not np.all(weights > 0):
        raise BendersError("scenario weights must be positive; drop zero-probability scenarios first")
    xis = [np.ascontiguousarray(program.scenario_xi(e)) for e in scenarios.errors]
    pool, trace = CutPool(), BendersTrace()
    masters: list[CutSystem] = []
    lb, ub = -math.inf, math.inf
    inc_z, inc_x = None, []
    converged, reason = False, "iteration cap reached"
    seen_trials: set[bytes] = set()
    it = 0
    for it in range(1, cfg.max_iter + 1):
        t0 = time.perf_counter()
        cuts = pool.cut_system()
        masters.append(cuts)
        z0, mobj, info = solve_master(program.a, cuts, cfg, it, inc_z)
        lb = max(lb, mobj) if cfg.exact_master else mobj
        t1 = time.perf_counter()
        results = _solve_all(program, xis, z0, cfg.workers, cache)
        t2 = time.perf_counter()
        infeasible = [r for r in results if isinstance(r, FeasibilityCut)]
        new_opt = new_fea = False
        opt_generated = fea_generated = 0
        if infeasible:
            fea_generated = len(infeasible)
            start = len(pool.feasibility)
            pool.feasibility.extend(infeasible)
            pool.feasibility_trial.extend([it] * len(infeasible))
            pool.infeasible_trials[it] = z0.copy()
            new_ids = list(range(start, len(pool.feasibility)))
            before = set(pool.selected)
            pool.selected = _select(pool, new_ids, cfg)
            new_fea = bool(set(pool.selected) - before)
        else:
            opt_generated = len(results)
            pool.optimality.append(results)
            agg = aggregate_optimality(results, weights, it)
            value = float(program.a @ z0) + agg.evaluate(z0)
            if value < ub - 1e-12 * (1 + abs(value)):
                ub, inc_z, inc_x = value, z0.copy(), [r.recourse for r in results]
            if not pool.has_aggregate(agg):
                pool.aggregates.append(agg)
                new_opt = True
        t3 = time.perf_counter()
        trace.append(iteration=it, lower=float(lb), upper=float(ub), trial="".join(map(str, z0)),
                     master_objective=float(mobj), master_backend=info["backend"], qubo_dim=info["dim"],
                     snap_distance=float(info["snap"]), opt_generated=opt_generated, opt_aggregated=pool.S_op,
                     fea_generated=fea_generated, fea_total=len(pool.feasibility), fea_selected=pool.S_fea,
                     t_master_s=t1 - t0, t_subproblems_s=t2 - t1, t_selection_s=t3 - t2)
        seen_trials.add(z0.tobytes())
        if cfg.termination == "gap":
            if ub < math.inf and ub - lb <= cfg.eps * (1 + abs(ub)):
                converged, reason = True, "gap closed"
                break
        elif not new_opt and not new_fea:
            converged, reason = ub < math.inf, "no new cuts"
            break
    if inc_z is None:
        reason = "no feasible trial found" if converged is False else reason
    return BendersResult(inc_z, ub, inc_x, trace, pool, converged, it, reason, masters)


def _select(pool: CutPool, new_ids: list[int], cfg: BendersConfig) -> list[int]:
    """Active feasibility cuts after this iteration's selection."""
    if cfg.selection == "none":
        return pool.selected + new_ids
    cand = sorted(set(pool.selected) | set(new_ids))
    trial_ids = sorted(pool.infeasible_trials)
    inst = cutsel.build_cover_matrix([pool.feasibility[k] for k in cand],
                                     [pool.infeasible_trials[t] for t in trial_ids], cand, trial_ids)
    cols = cutsel.select(inst, cfg.selection, replace(cfg.qaoa, seed=cfg.seed * 7919 + len(trial_ids)))
    return sorted(cand[j] for j in cols)
