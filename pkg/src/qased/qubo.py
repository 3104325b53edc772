"""QUBO encodings of the Benders master problem and of cut selection.

A Qubo's energy is ``x^T M x + l^T x + offset`` for binary ``x``; ``M`` is
symmetric with an empty diagonal (``x_i^2 = x_i`` is folded into ``l``).

Binary registers are described by ``(N, M)``: ``N`` integer bits and ``M``
fractional bits, weights ``2^-M .. 2^(N-1)``, so a register holds multiples
of ``2^-M`` from 0 to ``(2^(N+M) - 1) * 2^-M``.

Master variable layout: decisions ``z0`` first, then the value register
``eta``, then one slack register per aggregated optimality cut, then one per
selected feasibility cut. An aggregated cut ``(c, g)`` reads
``eta >= c + g.z0``; a feasibility cut ``(f0, f)`` reads ``f0 + f.z0 <= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class QuboError(ValueError):
    pass


class WidthOverflow(QuboError):
    pass


@dataclass(frozen=True)
class Role:
    kind: str  # decision | value | opt_slack | fea_slack | cover | cover_slack
    group: int  # decision index, cut index or cover row
    weight: float = 1.0


@dataclass
class Qubo:
    matrix: np.ndarray
    linear: np.ndarray
    offset: float = 0.0
    roles: list[Role] = field(default_factory=list)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        self.linear = np.asarray(self.linear, dtype=float)
        n = self.linear.shape[0]
        if self.matrix.shape != (n, n):
            raise QuboError("matrix and linear vector disagree on dimension")
        if not self.roles:
            self.roles = [Role("decision", i) for i in range(n)]
        if len(self.roles) != n:
            raise QuboError("one role per variable")

    @property
    def dimension(self) -> int:
        return self.linear.shape[0]

    def energy(self, bits) -> float:
        return energy(self, bits)

    def energies(self, X: np.ndarray) -> np.ndarray:
        """Energies of the rows of a 0/1 matrix."""
        X = np.asarray(X, dtype=float)
        return np.einsum("ij,ij->i", X @ self.matrix, X) + X @ self.linear + self.offset

    def ising(self):
        """(h, J, const) with x = (1 - s)/2, energy = s^T J s + h^T s + const, J upper triangular."""
        lin = self.linear + np.diag(self.matrix)  # x_i^2 = x_i
        M = self.matrix - np.diag(np.diag(self.matrix))
        J = np.triu(M + M.T, 1) / 4.0
        h = -lin / 2.0 - (M.sum(axis=1) + M.sum(axis=0)) / 4.0
        const = self.offset + lin.sum() / 2.0 + M.sum() / 4.0
        return h, J, const

    def to_text(self) -> str:
        """Triplet export: ``i j coefficient`` per nonzero (i == j for linear terms), then ``offset v``."""
        lines = [f"# qubo dimension {self.dimension}"]
        lin = self.linear + np.diag(self.matrix)  # x_i^2 = x_i
        for i in range(self.dimension):
            if lin[i] != 0.0:
                lines.append(f"{i} {i} {float(lin[i])!r}")
        iu = np.triu_indices(self.dimension, 1)
        for i, j in zip(*iu):
            v = self.matrix[i, j] + self.matrix[j, i]
            if v != 0.0:
                lines.append(f"{i} {j} {float(v)!r}")
        lines.append(f"offset {float(self.offset)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Qubo":
        entries, offset, dim = [], 0.0, 0
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                if "dimension" in line:
                    dim = int(line.split()[-1])
                continue
            parts = line.split()
            if parts[0] == "offset":
                offset = float(parts[1])
            else:
                entries.append((int(parts[0]), int(parts[1]), float(parts[2])))
        b = _Builder(dim)
        for i, j, v in entries:
            if i == j:
                b.lin[i] += v
            else:
                b.quad[i, j] += v / 2.0
                b.quad[j, i] += v / 2.0
        b.offset = offset
        return b.build([Role("decision", i) for i in range(dim)])


def energy(q: Qubo, bits) -> float:
    x = np.asarray(bits, dtype=float)
    if x.shape != (q.dimension,):
        raise QuboError(f"expected {q.dimension} bits, got {x.shape}")
    return float(x @ q.matrix @ x + q.linear @ x + q.offset)


class _Builder:
    def __init__(self, n: int):
        self.quad = np.zeros((n, n))
        self.lin = np.zeros(n)
        self.offset = 0.0

    def add_linear(self, idx, coef):
        for i, c in zip(idx, coef):
            self.lin[i] += c

    def add_square(self, idx: Sequence[int], coef: Sequence[float], const: float, scale: float):
        """scale * (sum_k coef_k x_idx_k + const)^2 with x^2 = x."""
        idx = np.asarray(idx, dtype=np.int64)
        coef = np.asarray(coef, dtype=float)
        outer = scale * np.outer(coef, coef)
        diag = np.diag(outer).copy()
        np.fill_diagonal(outer, 0.0)
        np.add.at(self.quad, (idx[:, None], idx[None, :]), outer)
        np.add.at(self.lin, idx, diag + 2.0 * scale * const * coef)
        self.offset += scale * const * const

    def build(self, roles) -> Qubo:
        M = (self.quad + self.quad.T) / 2.0
        self.lin += np.diag(M)
        np.fill_diagonal(M, 0.0)
        return Qubo(M, self.lin.copy(), self.offset, roles)


# --- widths and penalties ----------------------------------------------------


@dataclass(frozen=True)
class Widths:
    N2: int = 1
    M2: int = 0
    N3: int = 1
    M3: int = 0
    N4: int = 1
    M4: int = 0
    N5: int = 1
    M5: int = 0

    @property
    def resolution(self) -> float:
        return 2.0 ** -max(self.M2, self.M3, self.M4)


def register_weights(N: int, M: int) -> np.ndarray:
    return 2.0 ** np.arange(-M, N)


def register_max(N: int, M: int) -> float:
    return float(register_weights(N, M).sum())


def _bits_for(span: float, M: int) -> int:
    """Integer-bit count so that a register with M fractional bits reaches ``span``."""
    if span <= 0:
        return 1 if M == 0 else 0
    total = max(1, math.ceil(math.log2(span * 2.0**M + 1) - 1e-12))
    return max(total - M, 0 if M > 0 else 1)


def resolution_for(values: Sequence[float], floor: float) -> float:
    """Coarsest power of two (at most 1) on whose grid every value lies, but never finer
    than ``floor``; values off the floor grid get snapped."""
    vals = np.asarray(values, dtype=float)
    delta = 1.0
    while delta > floor * (1 + 1e-12):
        q = vals / delta
        if np.all(np.abs(q - np.round(q)) <= 1e-9 * np.maximum(1.0, np.abs(q))):
            return delta
        delta /= 2.0
    return float(max(delta, floor))


def snap(value, resolution: float):
    return np.round(np.asarray(value, dtype=float) / resolution) * resolution


@dataclass
class CutSystem:
    """Master constraints in affine form over ``z0``."""

    opt: list[tuple[float, np.ndarray]] = field(default_factory=list)
    fea: list[tuple[float, np.ndarray]] = field(default_factory=list)

    def coefficients(self) -> np.ndarray:
        parts = [np.append(c, g) for c, g in self.opt + self.fea]
        return np.concatenate(parts) if parts else np.zeros(0)

    def snapped(self, resolution: float) -> tuple["CutSystem", float]:
        dist = 0.0
        out = CutSystem()
        for src, dst in ((self.opt, out.opt), (self.fea, out.fea)):
            for c, g in src:
                cs, gs = float(snap(c, resolution)), snap(g, resolution)
                dist = max(dist, abs(cs - c), float(np.max(np.abs(gs - g), initial=0.0)))
                dst.append((cs, gs))
        return out, dist

    def eta_needed(self, z0) -> float:
        z0 = np.asarray(z0, dtype=float)
        return max([0.0] + [c + float(g @ z0) for c, g in self.opt])

    def feasible(self, z0, tol: float = 1e-9) -> bool:
        z0 = np.asarray(z0, dtype=float)
        return all(c + float(g @ z0) <= tol for c, g in self.fea)


def choose_widths(cuts: CutSystem, a: Sequence[float], resolution_floor: float = 0.25,
                  cover: np.ndarray | None = None) -> Widths:
    """Register widths from interval bounds over z0 in {0,1}^m."""
    coefs = cuts.coefficients()
    if coefs.size and not np.all(np.isfinite(coefs)):
        raise QuboError("unbounded cut coefficient (unnormalised ray upstream?)")
    N5, M5 = 1, 0
    if cover is not None and np.asarray(cover).size:
        N5 = _bits_for(float(np.asarray(cover).sum(axis=1).max()) - 1.0, 0)
    if not cuts.opt and not cuts.fea:
        return Widths(N5=N5, M5=M5)
    res = resolution_for(np.append(coefs, 0.0), resolution_floor)
    M = int(round(-math.log2(res)))
    cuts = cuts.snapped(res)[0]  # ranges of what is actually encoded
    w = {}
    if cuts.opt:
        hi = [c + float(np.clip(g, 0, None).sum()) for c, g in cuts.opt]
        lo = [c + float(np.clip(g, None, 0).sum()) for c, g in cuts.opt]
        eta_max = max(0.0, max(hi))
        w["N2"] = _bits_for(eta_max, M)
        w["M2"] = M
        eta_top = register_max(w["N2"], M)
        w["N3"] = _bits_for(max(eta_top - l for l in lo), M)
        w["M3"] = M
    else:
        w.update(N2=1, M2=0, N3=1, M3=0)
    if cuts.fea:
        span = max(-(c + float(np.clip(g, None, 0).sum())) for c, g in cuts.fea)
        w["N4"] = _bits_for(span, M)
        w["M4"] = M
    else:
        w.update(N4=1, M4=0)
    return Widths(**w, N5=N5, M5=M5)


def choose_penalties(objective_spread: float, min_violation_sq: float, floor: float = 1.0) -> float:
    """Penalty large enough that any violated equality outweighs the objective range."""
    if not min_violation_sq > 0:
        raise QuboError("zero representable violation: register resolution misconfigured")
    if objective_spread <= 0:
        return floor
    return max(floor, 2.0 * objective_spread / min_violation_sq)


# --- master problem ------------------------------------------------------------


@dataclass
class MasterQubo:
    qubo: Qubo
    a: np.ndarray
    cuts: CutSystem  # the snapped system actually encoded
    widths: Widths
    penalty: float
    snap_distance: float
    eta_slice: slice
    opt_slices: list[slice]
    fea_slices: list[slice]

    @property
    def m(self) -> int:
        return self.a.shape[0]

    @property
    def eta_weights(self) -> np.ndarray:
        return np.array([r.weight for r in self.qubo.roles[self.eta_slice]])

    def decode(self, bits):
        """(z0, eta, optimality slacks, feasibility slacks)."""
        x = np.asarray(bits, dtype=float)
        w = np.array([r.weight for r in self.qubo.roles])
        z0 = x[: self.m].astype(int)
        eta = float(x[self.eta_slice] @ w[self.eta_slice])
        s3 = [float(x[s] @ w[s]) for s in self.opt_slices]
        s4 = [float(x[s] @ w[s]) for s in self.fea_slices]
        return z0, eta, s3, s4

    def objective(self, bits) -> float:
        z0, eta, _, _ = self.decode(bits)
        return float(self.a @ z0) + eta

    def residuals(self, bits) -> np.ndarray:
        z0, eta, s3, s4 = self.decode(bits)
        r = [eta - s - c - float(g @ z0) for (c, g), s in zip(self.cuts.opt, s3)]
        r += [s + c + float(g @ z0) for (c, g), s in zip(self.cuts.fea, s4)]
        return np.array(r)

    def satisfies(self, bits, tol: float = 1e-9) -> bool:
        """Every encoded equality holds exactly at ``bits``."""
        return bool(np.all(np.abs(self.residuals(bits)) <= tol))

    def energy_terms(self, bits) -> tuple[float, float]:
        """(H1, penalty part) evaluated in constraint form; their sum equals ``qubo.energy``
        in exact arithmetic and stays accurate where the expanded form loses precision."""
        r = self.residuals(bits)
        return self.objective(bits), float(self.penalty * np.sum(r * r))

    def bits_for(self, z0, eta: float) -> np.ndarray:
        """Bit-vector with the given z0 and eta and every slack at its nearest representable value."""
        z0 = np.asarray(z0, dtype=float)
        bits = np.zeros(self.qubo.dimension, dtype=int)
        bits[: self.m] = z0.astype(int)
        _put(bits, self.eta_slice, eta, self.widths.resolution)
        for (c, g), sl in zip(self.cuts.opt, self.opt_slices):
            _put(bits, sl, eta - c - float(g @ z0), self.widths.resolution)
        for (c, g), sl in zip(self.cuts.fea, self.fea_slices):
            _put(bits, sl, -(c + float(g @ z0)), self.widths.resolution)
        return bits

    def ground_state(self) -> np.ndarray:
        """Exact minimiser of the master Hamiltonian by enumeration of z0.

        For fixed z0 every slack register decouples and is best at the
        representable value nearest its target, and since one resolution step
        of penalty outweighs the whole objective spread, eta is best at
        max(0, max_k rhs_k(z0)). What remains is an enumeration over z0 of
        H1 plus the feasibility penalties, computed in constraint form. Ties
        go to the lowest binary value of the bit-string.
        """
        m = self.m
        if m > 22:
            raise QuboError(f"{m} decision bits are beyond enumeration")
        k = np.arange(1 << m, dtype=np.int64)
        Z = ((k[:, None] >> np.arange(m - 1, -1, -1)[None, :]) & 1).astype(float)
        res = self.widths.resolution
        eta = np.zeros(Z.shape[0])
        for c, g in self.cuts.opt:
            eta = np.maximum(eta, Z @ g + c)
        top = float(self.eta_weights.sum()) if self.cuts.opt else 0.0
        if np.any(eta > top + 1e-9):
            raise WidthOverflow("value register cannot hold the required eta")
        E = Z @ self.a + eta
        tmax = register_max(self.widths.N4, self.widths.M4)
        for c, g in self.cuts.fea:
            target = -(Z @ g + c)
            s = np.clip(np.round(target / res) * res, 0.0, tmax)
            E += self.penalty * (s - target) ** 2
        best = float(E.min())
        i = int(np.flatnonzero(E <= best + 1e-9 * max(1.0, abs(best)))[0])
        return self.bits_for(Z[i], float(eta[i]))


def _put(bits, sl: slice, value: float, res: float) -> None:
    width = sl.stop - sl.start
    if width == 0:
        return
    k = int(np.clip(np.round(value / res), 0, (1 << width) - 1))
    bits[sl] = [(k >> i) & 1 for i in range(width)]


def encode_master(
    a: Sequence[float],
    cuts: CutSystem,
    widths: Widths | None = None,
    penalty: float | None = None,
    resolution_floor: float = 0.25,
) -> MasterQubo:
    a = np.asarray(a, dtype=float)
    m = a.shape[0]
    widths = widths or choose_widths(cuts, a, resolution_floor)
    res = widths.resolution
    snapped, dist = cuts.snapped(res)
    roles: list[Role] = [Role("decision", i) for i in range(m)]
    w2 = register_weights(widths.N2, widths.M2) if snapped.opt else np.zeros(0)
    eta_idx = list(range(len(roles), len(roles) + w2.size))
    roles += [Role("value", 0, float(v)) for v in w2]
    opt_slices, fea_slices = [], []
    w3 = register_weights(widths.N3, widths.M3)
    for k in range(len(snapped.opt)):
        opt_slices.append(slice(len(roles), len(roles) + w3.size))
        roles += [Role("opt_slack", k, float(v)) for v in w3]
    w4 = register_weights(widths.N4, widths.M4)
    for k in range(len(snapped.fea)):
        fea_slices.append(slice(len(roles), len(roles) + w4.size))
        roles += [Role("fea_slack", k, float(v)) for v in w4]

    # representability: every cut must be satisfiable as an equality somewhere in range
    eta_top = float(w2.sum())
    for c, g in snapped.opt:
        hi = c + float(np.clip(g, 0, None).sum())
        lo = c + float(np.clip(g, None, 0).sum())
        if hi > eta_top + 1e-9 or eta_top - lo > w3.sum() + 1e-9:
            raise WidthOverflow("optimality-cut range exceeds the value/slack registers")
    for c, g in snapped.fea:
        if -(c + float(np.clip(g, None, 0).sum())) > w4.sum() + 1e-9:
            raise WidthOverflow("feasibility-cut residual exceeds the slack register")

    spread = float(np.abs(a).sum()) + eta_top
    # rounded up to a power of two so that dyadic instances evaluate exactly
    lam = penalty if penalty is not None else 2.0 ** math.ceil(math.log2(choose_penalties(spread, res * res)))
    if lam <= 0:
        raise QuboError("penalties must be positive")
    b = _Builder(len(roles))
    b.add_linear(range(m), a)
    b.add_linear(eta_idx, w2)
    z_idx = list(range(m))
    for (c, g), sl in zip(snapped.opt, opt_slices):
        s_idx = list(range(sl.start, sl.stop))
        b.add_square(eta_idx + s_idx + z_idx, np.concatenate([w2, -w3, -g]), -c, lam)
    for (c, g), sl in zip(snapped.fea, fea_slices):
        s_idx = list(range(sl.start, sl.stop))
        b.add_square(s_idx + z_idx, np.concatenate([w4, g]), c, lam)
    return MasterQubo(b.build(roles), a, snapped, widths, lam, dist,
                      slice(m, m + w2.size), opt_slices, fea_slices)


def solve_master_ilp(a: Sequence[float], cuts: CutSystem, tol: float = 1e-9):
    """Exact master by enumeration of z0: (z0, eta, objective) or None if no z0 satisfies
    the feasibility cuts. Ties go to the lexicographically smallest z0 (z0[0] most significant)."""
    a = np.asarray(a, dtype=float)
    m = a.shape[0]
    if m > 22:
        raise QuboError(f"{m} binaries is beyond enumeration")
    k = np.arange(1 << m, dtype=np.int64)
    Z = ((k[:, None] >> np.arange(m - 1, -1, -1)[None, :]) & 1).astype(float)
    ok = np.ones(Z.shape[0], dtype=bool)
    for c, g in cuts.fea:
        ok &= Z @ g + c <= tol
    if not ok.any():
        return None
    eta = np.zeros(Z.shape[0])
    for c, g in cuts.opt:
        eta = np.maximum(eta, Z @ g + c)
    obj = Z @ a + eta
    obj[~ok] = np.inf
    best = obj.min()
    i = int(np.flatnonzero(obj <= best + 1e-9 * (1 + abs(best)))[0])
    return Z[i].astype(int), float(eta[i]), float(obj[i])


# --- cut selection -------------------------------------------------------------


@dataclass
class CoverQubo:
    qubo: Qubo
    columns: int
    penalty: float
    slack_slices: list[slice]

    def selection(self, bits) -> np.ndarray:
        return np.flatnonzero(np.asarray(bits[: self.columns]) > 0.5)


def encode_set_cover(N: np.ndarray, penalty: float | None = None, widths: Widths | None = None) -> CoverQubo:
    """H = 1^T s + lam * sum_r (N_r s - 1 - slack_r)^2."""
    N = np.asarray(N, dtype=float)
    if N.ndim != 2 or N.shape[1] == 0:
        raise QuboError("cover matrix needs at least one column")
    if np.any(N.sum(axis=1) < 1):
        raise QuboError("a row of the cover matrix has no covering column")
    q, k = N.shape
    max_slack = float(N.sum(axis=1).max()) - 1.0
    if widths is None:
        nb = 0 if max_slack <= 0 else _bits_for(max_slack, 0)
    else:
        nb = widths.N5 + widths.M5
        if register_max(widths.N5, widths.M5) < max_slack:
            raise WidthOverflow("cover slack register too narrow")
    w5 = 2.0 ** np.arange(nb)
    roles = [Role("cover", j) for j in range(k)]
    slices = []
    for r in range(q):
        slices.append(slice(len(roles), len(roles) + nb))
        roles += [Role("cover_slack", r, float(v)) for v in w5]
    lam = penalty if penalty is not None else choose_penalties(float(k), 1.0)
    b = _Builder(len(roles))
    b.add_linear(range(k), np.ones(k))
    for r, sl in enumerate(slices):
        b.add_square(list(range(k)) + list(range(sl.start, sl.stop)), np.concatenate([N[r], -w5]), -1.0, lam)
    return CoverQubo(b.build(roles), k, lam, slices)
