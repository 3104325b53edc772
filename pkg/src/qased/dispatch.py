"""Renewables-rich dispatch case and its two-stage standard form.

Every row of the compiled program reads ``B z0 + C x >= d + A xi``. First-stage
binaries ``z0`` are generator on/off and storage charge/discharge modes per
hour, plus a startup indicator wherever a startup can happen at a cost.
Second-stage variables ``x >= 0`` are generator output, storage charge,
discharge and energy, RES curtailment and bus angles. ``xi`` holds the
realised output of each RES in each hour (MW).

Bus angles are stored shifted by ``angle_offset`` so that they stay
non-negative; the slack bus (bus of the first generator) sits at the offset.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, sparse

from .uqae import ErrorDistribution, GridEncoding

BASE_MVA = 100.0


class CaseError(ValueError):
    pass


@dataclass
class Bus:
    name: str
    load_mw: list[float]


@dataclass
class Line:
    from_bus: str
    to_bus: str
    reactance_pu: float
    limit_mw: float


@dataclass
class Generator:
    name: str
    bus: str
    p_min_mw: float
    p_max_mw: float
    ramp_mw_per_h: float
    startup_cost_usd: float
    marginal_cost_usd_per_mwh: float
    initial_on: bool


@dataclass
class Storage:
    name: str
    bus: str
    energy_mwh: float
    soc_min: float
    soc_max: float
    charge_max_mw: float
    discharge_max_mw: float
    charge_cost_usd_per_mwh: float
    discharge_cost_usd_per_mwh: float
    round_trip_efficiency: float
    initial_soc: float

    @property
    def leg_efficiency(self) -> float:
        return float(np.sqrt(self.round_trip_efficiency))


@dataclass
class ResUnit:
    name: str
    bus: str
    capacity_mw: float
    forecast_mw: list[float]
    error: ErrorDistribution
    encoding: GridEncoding


@dataclass
class DispatchCase:
    name: str
    horizon: int
    buses: list[Bus]
    lines: list[Line]
    generators: list[Generator]
    storages: list[Storage] = field(default_factory=list)
    res_units: list[ResUnit] = field(default_factory=list)

    def bus_index(self) -> dict[str, int]:
        return {b.name: i for i, b in enumerate(self.buses)}

    def validate(self) -> None:
        """Raise CaseError naming the offending field."""
        T = self.horizon
        if T < 1:
            raise CaseError("horizon: must be >= 1")
        idx = self.bus_index()
        if len(idx) != len(self.buses):
            raise CaseError("buses: duplicate bus name")
        for i, b in enumerate(self.buses):
            if len(b.load_mw) != T:
                raise CaseError(f"buses[{i}].load_mw: expected {T} values")
        for i, ln in enumerate(self.lines):
            for attr in ("from_bus", "to_bus"):
                if getattr(ln, attr) not in idx:
                    raise CaseError(f"lines[{i}].{attr}: unknown bus {getattr(ln, attr)!r}")
            if not ln.reactance_pu > 0:
                raise CaseError(f"lines[{i}].reactance_pu: must be > 0")
            if not ln.limit_mw > 0:
                raise CaseError(f"lines[{i}].limit_mw: must be > 0")
        if not self.generators:
            raise CaseError("generators: at least one generator is required")
        for i, g in enumerate(self.generators):
            if g.bus not in idx:
                raise CaseError(f"generators[{i}].bus: unknown bus {g.bus!r}")
            if g.p_min_mw < 0 or g.p_min_mw > g.p_max_mw:
                raise CaseError(f"generators[{i}] ({g.name}): need 0 <= p_min_mw <= p_max_mw")
            if g.ramp_mw_per_h < 0 or g.startup_cost_usd < 0 or g.marginal_cost_usd_per_mwh < 0:
                raise CaseError(f"generators[{i}] ({g.name}): ramp and costs must be >= 0")
        for i, s in enumerate(self.storages):
            if s.bus not in idx:
                raise CaseError(f"storages[{i}].bus: unknown bus {s.bus!r}")
            if not 0 <= s.soc_min <= s.soc_max <= 1:
                raise CaseError(f"storages[{i}] ({s.name}): need 0 <= soc_min <= soc_max <= 1")
            if not s.soc_min <= s.initial_soc <= s.soc_max:
                raise CaseError(f"storages[{i}].initial_soc: outside [soc_min, soc_max]")
            if not 0 < s.round_trip_efficiency <= 1:
                raise CaseError(f"storages[{i}].round_trip_efficiency: must be in (0, 1]")
            if s.energy_mwh <= 0 or s.charge_max_mw < 0 or s.discharge_max_mw < 0:
                raise CaseError(f"storages[{i}] ({s.name}): capacities must be positive")
            if s.charge_cost_usd_per_mwh < 0 or s.discharge_cost_usd_per_mwh < 0:
                raise CaseError(f"storages[{i}] ({s.name}): costs must be >= 0")
        for i, r in enumerate(self.res_units):
            if r.bus not in idx:
                raise CaseError(f"res_units[{i}].bus: unknown bus {r.bus!r}")
            if len(r.forecast_mw) != T:
                raise CaseError(f"res_units[{i}].forecast_mw: expected {T} values")
            if r.capacity_mw <= 0:
                raise CaseError(f"res_units[{i}].capacity_mw: must be > 0")
            if any(f < 0 or f > r.capacity_mw for f in r.forecast_mw):
                raise CaseError(f"res_units[{i}].forecast_mw: must lie in [0, capacity_mw]")
        if not _connected(len(self.buses), [(idx[l.from_bus], idx[l.to_bus]) for l in self.lines]):
            raise CaseError("lines: network is not connected")


def _connected(n: int, edges) -> bool:
    adj = {i: set() for i in range(n)}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    seen, stack = {0}, [0]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == n


def apply_error(res: ResUnit, zeta: float) -> np.ndarray:
    """Realised output per hour (MW): clamp(forecast + zeta * capacity, 0, capacity)."""
    f = np.asarray(res.forecast_mw, dtype=float)
    return np.clip(f + zeta * res.capacity_mw, 0.0, res.capacity_mw)


@dataclass
class TwoStageProgram:
    a: np.ndarray  # (m,)
    cost: np.ndarray  # (n,) recourse cost b_s, identical across scenarios
    B: np.ndarray  # (rows, m)
    C: np.ndarray  # (rows, n)
    d: np.ndarray  # (rows,)
    A: np.ndarray  # (rows, h)
    first_stage_vars: list[str]
    second_stage_vars: list[str]
    uncertain: list[str]  # names of xi entries
    row_tags: list[tuple]
    case: DispatchCase
    angle_offset: float = 0.0
    _index: dict = field(default_factory=dict, repr=False)

    @property
    def m(self) -> int:
        return self.a.shape[0]

    @property
    def n(self) -> int:
        return self.cost.shape[0]

    @property
    def h(self) -> int:
        return self.A.shape[1]

    def rhs(self, xi: np.ndarray) -> np.ndarray:
        return self.d + self.A @ xi

    def scenario_xi(self, errors: Sequence[float]) -> np.ndarray:
        """Realised RES outputs for one vector of per-unit errors (one per RES)."""
        T = self.case.horizon
        xi = np.empty(self.h)
        for r, (res, z) in enumerate(zip(self.case.res_units, errors)):
            xi[r * T:(r + 1) * T] = apply_error(res, z)
        return xi

    def pure_first_stage_rows(self) -> np.ndarray:
        return np.flatnonzero(~self.C.any(axis=1) & ~self.A.any(axis=1))

    def var(self, name: str) -> int:
        return self._index[name]


class _Builder:
    def __init__(self):
        self.z, self.x = [], []
        self.rows = []  # (B dict, C dict, d, A dict, tag)

    def zvar(self, name):
        self.z.append(name)
        return len(self.z) - 1

    def xvar(self, name):
        self.x.append(name)
        return len(self.x) - 1

    def geq(self, tag, B=None, C=None, d=0.0, A=None):
        self.rows.append((B or {}, C or {}, float(d), A or {}, tag))

    def eq(self, tag, B=None, C=None, d=0.0, A=None):
        B, C, A = B or {}, C or {}, A or {}
        self.geq(tag + ("ge",), B, C, d, A)
        self.geq(tag + ("le",), {k: -v for k, v in B.items()}, {k: -v for k, v in C.items()}, -d,
                 {k: -v for k, v in A.items()})


def compile_case(case: DispatchCase) -> TwoStageProgram:
    case.validate()
    T = case.horizon
    bidx = case.bus_index()
    bld = _Builder()
    G, S, R = case.generators, case.storages, case.res_units

    on = {(g, t): bld.zvar(f"on[{G[g].name},{t + 1}]") for g in range(len(G)) for t in range(T)}
    su = {}
    for g, gen in enumerate(G):
        if gen.startup_cost_usd <= 0:
            continue
        for t in range(T):
            if t == 0 and gen.initial_on:
                continue
            su[g, t] = bld.zvar(f"startup[{gen.name},{t + 1}]")
    cm = {(s, t): bld.zvar(f"charge_mode[{S[s].name},{t + 1}]") for s in range(len(S)) for t in range(T)}
    dm = {(s, t): bld.zvar(f"discharge_mode[{S[s].name},{t + 1}]") for s in range(len(S)) for t in range(T)}

    p = {(g, t): bld.xvar(f"p[{G[g].name},{t + 1}]") for g in range(len(G)) for t in range(T)}
    pc = {(s, t): bld.xvar(f"charge[{S[s].name},{t + 1}]") for s in range(len(S)) for t in range(T)}
    pd = {(s, t): bld.xvar(f"discharge[{S[s].name},{t + 1}]") for s in range(len(S)) for t in range(T)}
    e = {(s, t): bld.xvar(f"energy[{S[s].name},{t + 1}]") for s in range(len(S)) for t in range(T)}
    cu = {(r, t): bld.xvar(f"curtail[{R[r].name},{t + 1}]") for r in range(len(R)) for t in range(T)}
    th = {(b, t): bld.xvar(f"angle[{case.buses[b].name},{t + 1}]") for b in range(len(case.buses)) for t in range(T)}
    xi = {(r, t): r * T + t for r in range(len(R)) for t in range(T)}

    a = np.zeros(len(bld.z))
    for (g, t), j in su.items():
        a[j] = G[g].startup_cost_usd
    cost = np.zeros(len(bld.x))
    for (g, t), j in p.items():
        cost[j] = G[g].marginal_cost_usd_per_mwh
    for (s, t), j in pc.items():
        cost[j] = S[s].charge_cost_usd_per_mwh
    for (s, t), j in pd.items():
        cost[j] = S[s].discharge_cost_usd_per_mwh

    slack_bus = bidx[G[0].bus]
    # widest possible angle spread (rad) across the network
    offset = sum(ln.limit_mw * ln.reactance_pu / BASE_MVA for ln in case.lines) + 1.0

    for t in range(T):
        # nodal balance: injections - withdrawals - net outflow = load
        for b, bus in enumerate(case.buses):
            C, A = {}, {}
            for g, gen in enumerate(G):
                if bidx[gen.bus] == b:
                    C[p[g, t]] = C.get(p[g, t], 0.0) + 1.0
            for s, st in enumerate(S):
                if bidx[st.bus] == b:
                    C[pd[s, t]] = 1.0
                    C[pc[s, t]] = -1.0
            for r, res in enumerate(R):
                if bidx[res.bus] == b:
                    C[cu[r, t]] = -1.0
                    A[xi[r, t]] = -1.0  # moved to the right-hand side
            for ln in case.lines:
                i, j = bidx[ln.from_bus], bidx[ln.to_bus]
                k = BASE_MVA / ln.reactance_pu
                if b == i:
                    C[th[i, t]] = C.get(th[i, t], 0.0) - k
                    C[th[j, t]] = C.get(th[j, t], 0.0) + k
                elif b == j:
                    C[th[j, t]] = C.get(th[j, t], 0.0) - k
                    C[th[i, t]] = C.get(th[i, t], 0.0) + k
            bld.eq(("balance", bus.name, t), C=C, d=bus.load_mw[t], A=A)
        bld.eq(("reference", case.buses[slack_bus].name, t), C={th[slack_bus, t]: 1.0}, d=offset)
        for li, ln in enumerate(case.lines):
            i, j = bidx[ln.from_bus], bidx[ln.to_bus]
            k = BASE_MVA / ln.reactance_pu
            bld.geq(("flow_max", li, t), C={th[i, t]: -k, th[j, t]: k}, d=-ln.limit_mw)
            bld.geq(("flow_min", li, t), C={th[i, t]: k, th[j, t]: -k}, d=-ln.limit_mw)
        for g, gen in enumerate(G):
            bld.geq(("gen_min", gen.name, t), B={on[g, t]: -gen.p_min_mw}, C={p[g, t]: 1.0})
            bld.geq(("gen_max", gen.name, t), B={on[g, t]: gen.p_max_mw}, C={p[g, t]: -1.0})
            if t > 0:
                # ramp limits, relaxed by p_max across a start-up or shut-down
                bld.geq(("ramp_up", gen.name, t), B={on[g, t - 1]: -gen.p_max_mw},
                        C={p[g, t]: -1.0, p[g, t - 1]: 1.0}, d=-gen.ramp_mw_per_h - gen.p_max_mw)
                bld.geq(("ramp_down", gen.name, t), B={on[g, t]: -gen.p_max_mw},
                        C={p[g, t - 1]: -1.0, p[g, t]: 1.0}, d=-gen.ramp_mw_per_h - gen.p_max_mw)
            if (g, t) in su:
                B = {su[g, t]: 1.0, on[g, t]: -1.0}
                d = 0.0
                if t > 0:
                    B[on[g, t - 1]] = 1.0
                bld.geq(("startup", gen.name, t), B=B, d=d)
        for s, st in enumerate(S):
            bld.geq(("charge_max", st.name, t), B={cm[s, t]: st.charge_max_mw}, C={pc[s, t]: -1.0})
            bld.geq(("discharge_max", st.name, t), B={dm[s, t]: st.discharge_max_mw}, C={pd[s, t]: -1.0})
            bld.geq(("mode_exclusive", st.name, t), B={cm[s, t]: -1.0, dm[s, t]: -1.0}, d=-1.0)
            eff = st.leg_efficiency
            C = {e[s, t]: 1.0, pc[s, t]: -eff, pd[s, t]: 1.0 / eff}
            d = 0.0
            if t > 0:
                C[e[s, t - 1]] = -1.0
            else:
                d = st.initial_soc * st.energy_mwh
            bld.eq(("soc_dynamics", st.name, t), C=C, d=d)
            bld.geq(("soc_min", st.name, t), C={e[s, t]: 1.0}, d=st.soc_min * st.energy_mwh)
            bld.geq(("soc_max", st.name, t), C={e[s, t]: -1.0}, d=-st.soc_max * st.energy_mwh)
        for r, res in enumerate(R):
            bld.geq(("curtail_max", res.name, t), C={cu[r, t]: -1.0}, A={xi[r, t]: -1.0})

    nrow, m, n, h = len(bld.rows), len(bld.z), len(bld.x), len(R) * T
    Bm, Cm, Am, d = np.zeros((nrow, m)), np.zeros((nrow, n)), np.zeros((nrow, h)), np.zeros(nrow)
    tags = []
    for i, (Bd, Cd, di, Ad, tag) in enumerate(bld.rows):
        for k, v in Bd.items():
            Bm[i, k] += v
        for k, v in Cd.items():
            Cm[i, k] += v
        for k, v in Ad.items():
            Am[i, k] += v
        d[i] = di
        tags.append(tag)
    uncertain = [f"res[{R[r].name},{t + 1}]" for r in range(len(R)) for t in range(T)]
    index = {nm: i for i, nm in enumerate(bld.z)}
    index.update({nm: i for i, nm in enumerate(bld.x)})
    return TwoStageProgram(a, cost, Bm, Cm, d, Am, bld.z, bld.x, uncertain, tags, case, offset, index)


# --- extensive form --------------------------------------------------------


@dataclass
class ExtensiveSolution:
    objective: float
    z0: np.ndarray
    recourse: list[np.ndarray]
    recourse_values: np.ndarray
    evaluated: int


@dataclass
class ExtensiveForm:
    """Deterministic equivalent over all scenarios, solved by enumerating the
    first-stage binaries and one stacked LP (HiGHS) per assignment."""

    program: TwoStageProgram
    xis: list[np.ndarray]
    weights: np.ndarray
    max_binaries: int = 20

    def __post_init__(self):
        if self.program.m > self.max_binaries:
            raise CaseError(f"{self.program.m} first-stage binaries exceed the enumeration cap")
        S, pr = len(self.xis), self.program
        C = sparse.csr_matrix(pr.C)
        self._Cstack = sparse.block_diag([C] * S, format="csr")
        self._cost = np.concatenate([w * pr.cost for w in self.weights])
        self._rhs = np.concatenate([pr.rhs(x) for x in self.xis])
        self._pure = pr.pure_first_stage_rows()

    def recourse(self, z0: np.ndarray):
        """(expected recourse cost, per-scenario x) at ``z0``; None if infeasible."""
        pr, S = self.program, len(self.xis)
        Bz = np.tile(pr.B @ z0, S)
        res = optimize.linprog(self._cost, A_ub=-self._Cstack, b_ub=-(self._rhs - Bz),
                               bounds=(0, None), method="highs")
        if res.status == 2:
            return None
        if res.status != 0:
            raise RuntimeError(f"extensive-form LP failed: {res.message}")
        xs = np.split(res.x, S)
        return float(res.fun), xs

    def solve(self) -> ExtensiveSolution:
        pr = self.program
        m = pr.m
        Z = np.array(list(itertools.product((0, 1), repeat=m)), dtype=float).reshape(-1, m)
        ok = np.all(Z @ pr.B[self._pure].T >= pr.d[self._pure] - 1e-9, axis=1)
        Z = Z[ok]
        order = np.argsort(Z @ pr.a, kind="stable")
        best, best_z, best_x, evaluated = np.inf, None, None, 0
        for k in order:
            z = Z[k]
            first = float(pr.a @ z)
            if first >= best - 1e-12:
                break
            out = self.recourse(z)
            evaluated += 1
            if out is None:
                continue
            val = first + out[0]
            if val < best - 1e-9:
                best, best_z, best_x = val, z, out[1]
        if best_z is None:
            raise CaseError("extensive form is infeasible for every first-stage assignment")
        vals = np.array([float(pr.cost @ x) for x in best_x])
        return ExtensiveSolution(best, best_z, best_x, vals, evaluated)


def extensive_form(program: TwoStageProgram, scenarios, max_binaries: int = 20) -> ExtensiveForm:
    """Zero-probability scenarios lie outside the distribution's support and are dropped."""
    weights = np.asarray(scenarios.weights, dtype=float)
    keep = np.nonzero(weights > 0)[0]
    xis = [program.scenario_xi(scenarios.errors[s]) for s in keep]
    return ExtensiveForm(program, xis, weights[keep], max_binaries)


# --- reports -----------------------------------------------------------------


@dataclass
class ScheduleReport:
    hours: int
    generator_mw: dict[str, np.ndarray]  # (S, T)
    storage_mw: dict[str, np.ndarray]  # discharge - charge, charging negative
    flows_mw: dict[str, np.ndarray]
    commitment: dict[str, list[int]]
    startup_cost: float
    generation_cost: float
    storage_cost: float
    weights: np.ndarray

    @property
    def total_cost(self) -> float:
        return self.startup_cost + self.generation_cost + self.storage_cost

    def expected(self, series: np.ndarray) -> np.ndarray:
        return self.weights @ series

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "hour", "device", "quantity", "value"])
        for kind, table in (("generator_mw", self.generator_mw), ("storage_mw", self.storage_mw),
                            ("flow_mw", self.flows_mw)):
            for name, arr in table.items():
                for s in range(arr.shape[0]):
                    for t in range(self.hours):
                        w.writerow([s, t + 1, name, kind, repr(float(arr[s, t]))])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'device':<24}" + "".join(f"{'h' + str(t + 1):>12}" for t in range(self.hours))]
        for name, on in self.commitment.items():
            lines.append(f"{name:<24}" + "".join(f"{v:>12d}" for v in on))
        for title, table in (("expected MW", self.generator_mw), ("storage MW", self.storage_mw)):
            for name, arr in table.items():
                lines.append(f"{name + ' ' + title:<24}" + "".join(f"{v:>12.3f}" for v in self.expected(arr)))
        lines.append(f"startup cost     {self.startup_cost:14.6f}")
        lines.append(f"generation cost  {self.generation_cost:14.6f}")
        lines.append(f"storage cost     {self.storage_cost:14.6f}")
        lines.append(f"total cost       {self.total_cost:14.6f}")
        return "\n".join(lines) + "\n"


def decode_schedule(program: TwoStageProgram, z0, xs: Sequence[np.ndarray], weights=None) -> ScheduleReport:
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (program.m,):
        raise CaseError(f"z0 has {z0.shape} entries, program expects {program.m}")
    xs = [np.asarray(x, dtype=float) for x in xs]
    if not xs or any(x.shape != (program.n,) for x in xs):
        raise CaseError(f"each recourse vector must have {program.n} entries")
    S, T, case = len(xs), program.case.horizon, program.case
    weights = np.full(S, 1.0 / S) if weights is None else np.asarray(weights, dtype=float)
    X = np.vstack(xs)

    def block(prefix, name):
        return X[:, [program.var(f"{prefix}[{name},{t + 1}]") for t in range(T)]]

    gens = {g.name: block("p", g.name) for g in case.generators}
    stor = {s.name: block("discharge", s.name) - block("charge", s.name) for s in case.storages}
    flows = {}
    for ln in case.lines:
        ang = block("angle", ln.from_bus) - block("angle", ln.to_bus)
        flows[f"{ln.from_bus}-{ln.to_bus}"] = BASE_MVA * ang / ln.reactance_pu
    commit = {g.name: [int(round(z0[program.var(f"on[{g.name},{t + 1}]")])) for t in range(T)]
              for g in case.generators}
    gen_cost = sum(float(weights @ (gens[g.name] @ np.full(T, g.marginal_cost_usd_per_mwh)))
                   for g in case.generators)
    st_cost = sum(float(weights @ (block("charge", s.name).sum(axis=1) * s.charge_cost_usd_per_mwh
                                   + block("discharge", s.name).sum(axis=1) * s.discharge_cost_usd_per_mwh))
                  for s in case.storages)
    return ScheduleReport(T, gens, stor, flows, commit, float(program.a @ z0), gen_cost, st_cost, weights)
