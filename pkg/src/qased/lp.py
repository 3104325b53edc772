"""Dense two-phase revised simplex with dual values and ray certificates.

Every problem is brought to ``min c'x', A'x' = b', x' >= 0, b' >= 0`` by
shifting/splitting variables, turning finite upper bounds into rows, flipping
rows with negative right-hand side and adding slack/surplus/artificial
columns. Pricing is Dantzig's rule until ``bland_after`` pivots (or a run of
degenerate pivots), then Bland's rule, which cannot cycle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FEAS_TOL = 1e-8
OPT_TOL = 1e-7
PIVOT_TOL = 1e-10


@dataclass
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: Sequence[str]  # each "<=", ">=" or "="
    lb: np.ndarray | None = None  # default 0; -inf allowed
    ub: np.ndarray | None = None  # default +inf
    sense: str = "min"

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.shape[0]
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float)
        self.senses = list(self.senses)
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        m = self.A.shape[0]
        if self.b.shape != (m,) or len(self.senses) != m or self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ValueError("inconsistent LP dimensions")
        if any(s not in ("<=", ">=", "=") for s in self.senses):
            raise ValueError("row senses must be '<=', '>=' or '='")
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        for arr in (self.c, self.A, self.b):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP coefficients must be finite")
        if np.any(self.lb == np.inf) or np.any(self.ub == -np.inf) or np.any(self.lb > self.ub):
            raise ValueError("invalid variable bounds")

    def to_text(self) -> str:
        """Plain-text tableau dump: header line, one line per row, bounds."""
        lines = [f"{self.sense} " + " ".join(repr(float(v)) for v in self.c)]
        for row, s, rhs in zip(self.A, self.senses, self.b):
            lines.append(" ".join(repr(float(v)) for v in row) + f" {s} {float(rhs)!r}")
        lines.append("lb " + " ".join(repr(float(v)) for v in self.lb))
        lines.append("ub " + " ".join(repr(float(v)) for v in self.ub))
        return "\n".join(lines) + "\n"


@dataclass
class Optimal:
    x: np.ndarray
    duals: np.ndarray  # d(objective)/d(b_i) for each original row
    objective: float
    iterations: int = 0


@dataclass
class Infeasible:
    farkas: np.ndarray  # y with y^T A_std <= 0 and y^T b_std > 0 on the standardised rows
    iterations: int = 0


@dataclass
class Unbounded:
    x: np.ndarray
    ray: np.ndarray
    iterations: int = 0


@dataclass
class Failed:
    reason: str
    iterations: int = 0


LpOutcome = Optimal | Infeasible | Unbounded | Failed


@dataclass
class _Std:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    obj_const: float
    n_struct: int  # structural columns after splitting
    col_map: list = field(default_factory=list)  # (orig index, sign) per structural column
    shift: np.ndarray | None = None
    row_sign: np.ndarray | None = None  # +1/-1 per original row
    n_orig_rows: int = 0
    basis: np.ndarray | None = None
    artificial: np.ndarray | None = None  # bool per column


def _standardise(lp: LinearProgram) -> _Std:
    n = lp.c.shape[0]
    cols, col_map = [], []
    shift = np.zeros(n)
    upper_rows = []
    c_sign = 1.0 if lp.sense == "min" else -1.0
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        if np.isfinite(lo):
            shift[j] = lo
            col_map.append((j, 1.0))
            if np.isfinite(hi):
                upper_rows.append((len(col_map) - 1, hi - lo))
        elif np.isfinite(hi):
            shift[j] = hi
            col_map.append((j, -1.0))
        else:
            col_map.append((j, 1.0))
            col_map.append((j, -1.0))
    ns = len(col_map)
    m0 = lp.A.shape[0]
    A = np.zeros((m0 + len(upper_rows), ns))
    c = np.zeros(ns)
    for k, (j, sg) in enumerate(col_map):
        A[:m0, k] = lp.A[:, j] * sg
        c[k] = c_sign * lp.c[j] * sg
    b = np.empty(m0 + len(upper_rows))
    b[:m0] = lp.b - lp.A @ shift
    senses = list(lp.senses)
    for r, (k, cap) in enumerate(upper_rows):
        A[m0 + r, k] = 1.0
        b[m0 + r] = cap
        senses.append("<=")
    obj_const = c_sign * float(lp.c @ shift)
    row_sign = np.where(b < 0, -1.0, 1.0)
    A *= row_sign[:, None]
    b *= row_sign
    flip = {"<=": ">=", ">=": "<=", "=": "="}
    senses = [flip[s] if sg < 0 else s for s, sg in zip(senses, row_sign)]
    m = A.shape[0]
    extra, basis, art = [], np.empty(m, dtype=np.int64), []
    ncol = ns
    for i, s in enumerate(senses):
        if s == "<=":
            col = np.zeros(m)
            col[i] = 1.0
            extra.append(col)
            basis[i] = ncol
            art.append(False)
            ncol += 1
        elif s == ">=":
            col = np.zeros(m)
            col[i] = -1.0
            extra.append(col)
            art.append(False)
            ncol += 1
    for i, s in enumerate(senses):
        if s in (">=", "="):
            col = np.zeros(m)
            col[i] = 1.0
            extra.append(col)
            basis[i] = ncol
            art.append(True)
            ncol += 1
    if extra:
        A = np.hstack([A, np.column_stack(extra)])
    c = np.concatenate([c, np.zeros(ncol - ns)])
    artificial = np.concatenate([np.zeros(ns, dtype=bool), np.array(art, dtype=bool)])
    return _Std(A, b, c, obj_const, ns, col_map, shift, row_sign, m0, basis, artificial)


class _Singular(ArithmeticError):
    pass


class _Simplex:
    def __init__(self, A, b, basis, bland_after):
        self.A, self.b = A, b
        self.m, self.N = A.shape
        self.basis = basis.copy()
        self.bland_after = bland_after
        self.iterations = 0
        self.refactor()

    def refactor(self):
        try:
            self.Binv = np.linalg.inv(self.A[:, self.basis]) if self.m else np.zeros((0, 0))
        except np.linalg.LinAlgError:
            raise _Singular("basis matrix became singular") from None
        self.xB = self.Binv @ self.b
        self.since_refactor = 0

    def run(self, c, allowed, max_iter):
        """Returns ("optimal", None) or ("unbounded", entering column) or ("failed", msg)."""
        degenerate_run = 0
        use_bland = False
        nonbasic = np.ones(self.N, dtype=bool)
        while True:
            if self.iterations >= max_iter:
                return "failed", "pivot limit reached"
            nonbasic[:] = allowed
            nonbasic[self.basis] = False
            y = c[self.basis] @ self.Binv
            d = c - y @ self.A
            cand = np.flatnonzero(nonbasic & (d < -OPT_TOL))
            if cand.size == 0:
                return "optimal", None
            if use_bland or self.iterations >= self.bland_after:
                j = int(cand[0])
            else:
                j = int(cand[np.argmin(d[cand])])
            w = self.Binv @ self.A[:, j]
            pos = w > PIVOT_TOL * max(1.0, float(np.abs(w).max()))
            if not np.any(pos):
                return "unbounded", j
            # two-pass (Harris) ratio test: among rows blocking within the
            # feasibility tolerance, pivot on the largest entry
            xb = np.maximum(self.xB, 0.0)
            bound = ((xb[pos] + FEAS_TOL) / w[pos]).min()
            ratios = np.full(self.m, np.inf)
            ratios[pos] = xb[pos] / w[pos]
            ties = np.flatnonzero(pos & (ratios <= bound))
            if use_bland or self.iterations >= self.bland_after:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(w[ties])])
            step = ratios[r]
            degenerate_run = degenerate_run + 1 if step <= 1e-12 else 0
            if degenerate_run > 50:
                use_bland = True
            self._pivot(r, j, w)

    def _pivot(self, r, j, w):
        piv = w[r]
        self.Binv[r] /= piv
        others = np.arange(self.m) != r
        self.Binv[others] -= np.outer(w[others], self.Binv[r])
        self.basis[r] = j
        self.iterations += 1
        self.since_refactor += 1
        if self.since_refactor >= 40:
            self.refactor()
        else:
            self.xB = self.Binv @ self.b


def solve(lp: LinearProgram, max_iter: int = 5000, bland_after: int = 1000) -> LpOutcome:
    try:
        return _solve(lp, max_iter, bland_after)
    except _Singular as exc:
        return Failed(str(exc))


def _solve(lp: LinearProgram, max_iter: int, bland_after: int) -> LpOutcome:
    std = _standardise(lp)
    A, b = std.A, std.b
    m, N = A.shape
    if m == 0:
        return _solve_bounds_only(lp)
    sx = _Simplex(A, b, std.basis, bland_after)
    allowed = np.ones(N, dtype=bool)
    if std.artificial.any():
        c1 = std.artificial.astype(float)
        status, _ = sx.run(c1, allowed, max_iter)
        if status == "failed":
            return Failed(_, sx.iterations)
        sx.refactor()
        infeas = float(c1[sx.basis] @ sx.xB)
        if infeas > FEAS_TOL * max(1.0, np.abs(b).max()):
            y = c1[sx.basis] @ sx.Binv
            farkas = y[: std.n_orig_rows] * std.row_sign[: std.n_orig_rows]
            return Infeasible(farkas, sx.iterations)
        _drive_out_artificials(sx, std.artificial)
        allowed = ~std.artificial
    status, j = sx.run(std.c, allowed, max_iter)
    if status == "failed":
        return Failed(j, sx.iterations)
    sx.refactor()
    xs = np.zeros(N)
    xs[sx.basis] = np.maximum(sx.xB, 0.0)
    x = _recover(lp, std, xs)
    if status == "unbounded":
        w = sx.Binv @ A[:, j]
        ds = np.zeros(N)
        ds[j] = 1.0
        ds[sx.basis] = -w
        ray = _recover(lp, std, ds, direction=True)
        return Unbounded(x, ray, sx.iterations)
    y = std.c[sx.basis] @ sx.Binv
    sign = 1.0 if lp.sense == "min" else -1.0
    duals = sign * y[: std.n_orig_rows] * std.row_sign[: std.n_orig_rows]
    return Optimal(x, duals, float(lp.c @ x), sx.iterations)


def _drive_out_artificials(sx: _Simplex, artificial: np.ndarray) -> None:
    for r in range(sx.m):
        if not artificial[sx.basis[r]]:
            continue
        row = sx.Binv[r] @ sx.A
        row[artificial] = 0.0
        row[sx.basis] = 0.0
        cand = np.flatnonzero(np.abs(row) > 1e-9)
        if cand.size:
            j = int(cand[np.argmax(np.abs(row[cand]))])
            sx._pivot(r, j, sx.Binv @ sx.A[:, j])
    sx.refactor()


def _recover(lp: LinearProgram, std: _Std, xs: np.ndarray, direction: bool = False) -> np.ndarray:
    x = np.zeros(lp.c.shape[0]) if direction else std.shift.copy()
    for k, (j, sg) in enumerate(std.col_map):
        x[j] += sg * xs[k]
    return x


def _solve_bounds_only(lp: LinearProgram) -> LpOutcome:
    c = lp.c if lp.sense == "min" else -lp.c
    x = np.where(np.isfinite(lp.lb), lp.lb, np.where(np.isfinite(lp.ub), lp.ub, 0.0))
    ray = np.zeros_like(x)
    for j, cj in enumerate(c):
        if cj < 0:
            if np.isfinite(lp.ub[j]):
                x[j] = lp.ub[j]
            else:
                ray[j] = 1.0
        elif cj > 0:
            if np.isfinite(lp.lb[j]):
                x[j] = lp.lb[j]
            else:
                ray[j] = -1.0
    if np.any(ray):
        return Unbounded(x, ray, 0)
    return Optimal(x, np.zeros(0), float(lp.c @ x), 0)


def primal_residual(lp: LinearProgram, x: np.ndarray) -> float:
    """Largest violation of rows and bounds at ``x``."""
    ax = lp.A @ x
    worst = 0.0
    for v, s, rhs in zip(ax, lp.senses, lp.b):
        if s == "<=":
            worst = max(worst, v - rhs)
        elif s == ">=":
            worst = max(worst, rhs - v)
        else:
            worst = max(worst, abs(v - rhs))
    worst = max(worst, float(np.max(lp.lb - x, initial=0.0)), float(np.max(x - lp.ub, initial=0.0)))
    return float(worst)


# --- Benders subproblems -------------------------------------------------


@dataclass
class OptimalityCut:
    scenario: int
    dual: np.ndarray
    constant: float  # (d_s + A xi_s)^T u
    coeffs: np.ndarray  # -(B^T u); cut reads eta_s >= constant + coeffs . z0
    value: float  # subproblem optimum at the generating trial
    recourse: np.ndarray | None = None  # primal x_s recovered from the dual solve

    def evaluate(self, z0) -> float:
        return self.constant + float(self.coeffs @ np.asarray(z0, dtype=float))


@dataclass
class FeasibilityCut:
    scenario: int
    ray: np.ndarray  # unit infinity-norm
    constant: float
    coeffs: np.ndarray  # cut reads constant + coeffs . z0 <= 0

    def evaluate(self, z0) -> float:
        return self.constant + float(self.coeffs @ np.asarray(z0, dtype=float))


class SubproblemError(RuntimeError):
    pass


def dual_subproblem(C: np.ndarray, cost: np.ndarray, g: np.ndarray) -> LinearProgram:
    """max g^T u  s.t.  C^T u <= cost, u >= 0."""
    return LinearProgram(g, C.T, cost, ["<="] * C.shape[1], sense="max")


def solve_subproblem(program, scenario: int, z0, xi: np.ndarray | None = None) -> OptimalityCut | FeasibilityCut:
    """Solve the dual recourse LP of one scenario at the trial ``z0``.

    ``program`` needs ``B``, ``C``, ``cost`` and ``rhs(xi)``; ``xi`` defaults
    to ``program.xi(scenario)`` when the program carries its scenarios.
    """
    z0 = np.asarray(z0, dtype=float)
    if xi is None:
        xi = program.xi(scenario)
    h = program.rhs(xi)
    g = h - program.B @ z0
    dual = dual_subproblem(program.C, program.cost, g)
    out = solve(dual)
    if isinstance(out, Failed):  # numerical trouble: retry with Bland's rule throughout
        out = solve(dual, bland_after=0)
    if isinstance(out, Optimal):
        u = np.maximum(out.x, 0.0)
        return OptimalityCut(scenario, u, float(h @ u), -(program.B.T @ u), out.objective, out.duals)
    if isinstance(out, Unbounded):
        r = np.maximum(out.ray, 0.0)
        r /= np.abs(r).max()
        return FeasibilityCut(scenario, r, float(h @ r), -(program.B.T @ r))
    if isinstance(out, Infeasible):
        raise SubproblemError("dual subproblem infeasible: recourse costs leave the dual cone")
    raise SubproblemError(f"subproblem solve failed: {out.reason}")
