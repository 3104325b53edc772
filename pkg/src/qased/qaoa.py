"""QUBO minimisers: QAOA on the statevector simulator, exhaustive and
block-structured exact search, and simulated annealing.

Bit-string order for tie-breaking: ``bits[0]`` is the most significant bit,
so "lowest binary value" means lexicographically smallest bit vector.
Statevector indices are little-endian (qubit i is bit i of the index).
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import qsim
from .qubo import Qubo, QuboError

log = logging.getLogger(__name__)

EXACT_MAX = 24
_TIE = 1e-9


def _tie_tol(e: float) -> float:
    return _TIE * max(1.0, abs(e))


@dataclass(frozen=True)
class QaoaConfig:
    depth: int = 3
    restarts: int = 8
    sweeps: int = 2  # coordinate sweeps per restart
    golden_steps: int = 8  # golden-section evaluations per coordinate
    shots: int | None = None  # None: exact expectation
    final_shots: int = 128  # samples drawn from each restart's final state
    seed: int = 0
    cap: int = 20
    gamma_max: float = 2 * np.pi  # on energies rescaled to [0, 1]
    beta_max: float = np.pi / 2

    def __post_init__(self):
        for name in ("depth", "restarts", "sweeps", "golden_steps", "final_shots"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be >= 1 (or None for exact expectation)")
        if not 1 <= self.cap <= qsim.MAX_QUBITS:
            raise ValueError(f"cap must lie in [1, {qsim.MAX_QUBITS}]")


@dataclass
class Solution:
    bits: np.ndarray
    energy: float
    method: str
    diagnostics: list[dict] = field(default_factory=list)
    candidates: list[np.ndarray] = field(default_factory=list)  # other good states, best first

    def diagnostics_csv(self) -> str:
        return diagnostics_to_csv(self.diagnostics)


DIAG_HEADER = ("restart", "step", "gamma", "beta", "expectation", "best_so_far")


def diagnostics_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DIAG_HEADER)
    for r in rows:
        w.writerow([r["restart"], r["step"], ";".join(repr(float(v)) for v in r["gamma"]),
                    ";".join(repr(float(v)) for v in r["beta"]), repr(float(r["expectation"])),
                    repr(float(r["best_so_far"]))])
    return buf.getvalue()


def _lex_key(bits) -> tuple:
    return tuple(int(b) for b in bits)


def _better(e_new, bits_new, e_old, bits_old) -> bool:
    if bits_old is None:
        return True
    if e_new < e_old - _tie_tol(e_old):
        return True
    return abs(e_new - e_old) <= _tie_tol(e_old) and _lex_key(bits_new) < _lex_key(bits_old)


# --- exhaustive ----------------------------------------------------------------


def _patterns(n: int, start: int, count: int) -> np.ndarray:
    """Rows k = start..start+count-1 as bit vectors with bit 0 most significant."""
    k = np.arange(start, start + count, dtype=np.int64)
    return ((k[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1).astype(float)


def solve_exact(q: Qubo) -> Solution:
    """Global minimum by enumeration; ties go to the lowest binary value."""
    n = q.dimension
    if n > EXACT_MAX:
        raise QuboError(f"exhaustive search is limited to {EXACT_MAX} variables, got {n}")
    if n == 0:
        return Solution(np.zeros(0, dtype=int), float(q.offset), "exact")
    nh = n // 2
    nl = n - nh
    M = q.matrix
    L = _patterns(nl, 0, 1 << nl)
    e_lo = q.energies(np.pad(L, ((0, 0), (nh, 0)))) - q.offset
    cross = 2.0 * M[:nh, nh:]  # symmetric matrix: x_h^T M_hl x_l + x_l^T M_lh x_h
    best_e, best_k = math.inf, -1
    energies = []
    chunk = max(1, (1 << 22) >> nl)
    for start in range(0, 1 << nh, chunk):
        cnt = min(chunk, (1 << nh) - start)
        H = _patterns(nh, start, cnt)
        e_hi = q.energies(np.pad(H, ((0, 0), (0, nl))))
        E = e_hi[:, None] + e_lo[None, :] + (H @ cross) @ L.T
        energies.append((start, E))
        m = float(E.min())
        if m < best_e:
            best_e = m
    tol = _tie_tol(best_e)
    for start, E in energies:
        hit = np.flatnonzero(E.ravel() <= best_e + tol)
        if hit.size:
            best_k = (start << nl) + int(hit[0])
            break
    bits = _patterns(n, best_k, 1)[0].astype(int)
    return Solution(bits, q.energy(bits), "exact")


# --- block-structured exact ----------------------------------------------------

_PRIMARY = {"decision", "value", "cover"}


def _blocks(q: Qubo):
    primaries = [i for i, r in enumerate(q.roles) if r.kind in _PRIMARY]
    groups: dict[tuple, list[int]] = {}
    for i, r in enumerate(q.roles):
        if r.kind not in _PRIMARY:
            groups.setdefault((r.kind, r.group), []).append(i)
    blocks = list(groups.values())
    owner = np.full(q.dimension, -1)
    for b, idx in enumerate(blocks):
        owner[idx] = b
    rows, cols = np.nonzero(q.matrix)
    mixed = (owner[rows] >= 0) & (owner[cols] >= 0) & (owner[rows] != owner[cols])
    if mixed.any():
        raise QuboError("slack registers are coupled to each other; no block structure")
    return primaries, blocks


def _register_form(q: Qubo, idx: list[int]):
    """(lam, w) if the block's couplings are lam * w_i * w_j, with w a contiguous power-of-two ladder."""
    w = np.array([q.roles[i].weight for i in idx])
    if len(idx) < 2 or np.any(w <= 0):
        return None
    ratios = w[1:] / w[:-1]
    if not np.allclose(ratios, 2.0, rtol=0, atol=1e-12):
        return None
    sub = q.matrix[np.ix_(idx, idx)]
    lam = sub[0, 1] / (w[0] * w[1])
    expect = lam * np.outer(w, w)
    np.fill_diagonal(expect, 0.0)
    if lam <= 0 or not np.allclose(sub, expect, rtol=1e-12, atol=1e-12 * abs(lam)):
        return None
    return lam, w


def _block_min(lam, w, t):
    """min over the register value v of lam * (v^2 - 2 t v), and the chosen level index."""
    step = w[0]
    k = np.clip(np.round(t / step), 0, (1 << len(w)) - 1)
    v = k * step
    return lam * v * (v - 2.0 * t), k


def solve_exact_structured(q: Qubo, max_decision: int = 22, max_value: int = 16) -> Solution:
    """Exact minimum when slack registers couple only to decision and value variables.

    Decision patterns (rows) and value-register patterns (columns) are
    enumerated; every slack register is then minimised independently, in
    closed form for binary-ladder registers (their target is affine in
    decisions and values, hence an outer sum) and by enumeration for small
    unstructured blocks. Ties go to the lowest binary value, as in
    ``solve_exact``.
    """
    D = [i for i, r in enumerate(q.roles) if r.kind in ("decision", "cover")]
    V = [i for i, r in enumerate(q.roles) if r.kind == "value"]
    _, blocks = _blocks(q)
    if D + V != list(range(len(D) + len(V))):
        raise QuboError("decision and value variables must precede slack registers")
    if len(D) > max_decision or len(V) > max_value:
        raise QuboError(f"{len(D)} decision / {len(V)} value bits exceed the enumeration limits")
    M, lin = q.matrix, q.linear
    forms = []
    for b in blocks:
        f = _register_form(q, b)
        if f is None and len(b) > (6 if V else 14):
            raise QuboError("slack block is neither a binary ladder nor small enough to enumerate")
        forms.append(f)
    XV = _patterns(len(V), 0, 1 << len(V)) if V else np.zeros((1, 0))
    e_v = np.einsum("ij,ij->i", XV @ M[np.ix_(V, V)], XV) + XV @ lin[V]
    cross = 2.0 * M[np.ix_(D, V)]
    # per-block affine pieces of the register target t = t0 + tD(d) + tV(v)
    pieces = []
    for b, f in zip(blocks, forms):
        if f is None:
            S = _patterns(len(b), 0, 1 << len(b))
            quad = np.einsum("ij,ij->i", S @ M[np.ix_(b, b)], S)
            sv = XV @ (2.0 * M[np.ix_(V, b)]) if V else np.zeros((1, len(b)))
            pieces.append(("enum", S, quad, lin[b], 2.0 * M[np.ix_(D, b)], sv))
            continue
        lam, w = f
        # eff_i = lin_i + 2 M_{D,i} d + 2 M_{V,i} v, with eff_i = lam w_i^2 - 2 lam t w_i for a ladder
        t0 = (lam * w[0] ** 2 - lin[b[0]]) / (2 * lam * w[0])
        tD = -2.0 * M[D, b[0]] / (2 * lam * w[0])
        tV = XV @ (-2.0 * M[V, b[0]] / (2 * lam * w[0])) if V else np.zeros(1)
        ok = all(np.allclose((lam * w[j] ** 2 - lin[i]) / (2 * lam * w[j]), t0, atol=1e-9 * max(1, abs(t0)))
                 and np.allclose(-M[D, i] / (lam * w[j]), tD, atol=1e-12 * lam)
                 and np.allclose(-M[V, i] / (lam * w[j]), -M[V, b[0]] / (lam * w[0]), atol=1e-12 * lam)
                 for j, i in enumerate(b))
        if not ok:
            raise QuboError("slack register is not a squared affine form")
        pieces.append(("ladder", lam, w, t0, tD, tV))

    nD = len(D)
    widest = max([pc[1].shape[0] for pc in pieces if pc[0] == "enum" and V] + [1])
    chunk = max(1, (1 << 20) // (XV.shape[0] * widest))
    best_e, best_k, results = math.inf, -1, []
    for start in range(0, 1 << nD, chunk):
        cnt = min(chunk, (1 << nD) - start)
        XD = _patterns(nD, start, cnt)
        E = (np.einsum("ij,ij->i", XD @ M[np.ix_(D, D)], XD) + XD @ lin[D] + q.offset)[:, None] \
            + e_v[None, :] + (XD @ cross) @ XV.T
        for pc in pieces:
            if pc[0] == "ladder":
                _, lam, w, t0, tD, tV = pc
                t = (t0 + XD @ tD)[:, None] + tV[None, :]
                E += _block_min(lam, w, t)[0]
            else:
                _, S, quad, lb, MDb, sv = pc
                dpart = (XD @ MDb + lb[None, :]) @ S.T + quad[None, :]  # (cnt, patterns)
                vpart = sv @ S.T  # (nV, patterns)
                E += np.min(dpart[:, None, :] + vpart[None, :, :], axis=2)
        m = float(E.min())
        best_e = min(best_e, m)
        results.append((start, E))
    tol = _tie_tol(best_e)
    for start, E in results:
        hit = np.flatnonzero(E.ravel() <= best_e + tol)
        if hit.size:
            best_k = start * XV.shape[0] + int(hit[0])
            break
    d_idx, v_idx = divmod(best_k, XV.shape[0])
    xd, xv = _patterns(nD, d_idx, 1)[0], XV[v_idx]
    bits = np.zeros(q.dimension, dtype=int)
    bits[D] = xd.astype(int)
    bits[V] = xv.astype(int)
    for b, pc in zip(blocks, pieces):
        if pc[0] == "ladder":
            _, lam, w, t0, tD, tV = pc
            k = int(_block_min(lam, w, np.array(t0 + xd @ tD + tV[v_idx]))[1])
            bits[b] = [(k >> i) & 1 for i in range(len(b))]
        else:
            _, S, quad, lb, MDb, sv = pc
            e = quad + S @ (lb + xd @ MDb + sv[v_idx])
            j = int(np.flatnonzero(e <= e.min() + _tie_tol(float(e.min())))[0])
            bits[b] = S[j].astype(int)
    return Solution(bits, q.energy(bits), "exact-structured")


def minimize_exact(q: Qubo) -> Solution:
    """Exhaustive search up to 20 variables, block-structured search beyond."""
    if q.dimension <= 20:
        return solve_exact(q)
    try:
        return solve_exact_structured(q)
    except QuboError:
        if q.dimension <= EXACT_MAX:
            return solve_exact(q)
        raise


# --- simulated annealing -------------------------------------------------------


@dataclass(frozen=True)
class AnnealSchedule:
    sweeps: int = 2000
    restarts: int = 8
    t_start: float | None = None  # default: largest single-flip energy change
    t_end: float | None = None  # default: smallest nonzero coefficient / 20

    def temperatures(self, q: Qubo) -> np.ndarray:
        coef = np.concatenate([np.abs(q.linear), np.abs(q.matrix[np.triu_indices(q.dimension, 1)])])
        nz = coef[coef > 0]
        if nz.size == 0:
            return np.ones(self.sweeps)
        t0 = self.t_start or float(np.max(np.abs(q.linear) + 2 * np.abs(q.matrix).sum(axis=1)))
        t1 = self.t_end or float(nz.min()) / 20.0
        t1 = min(t1, t0)
        return np.geomspace(t0, t1, self.sweeps)


@numba.njit(cache=True)
def _anneal_run(M, lin, x, temps, rand):
    n = x.shape[0]
    field = lin.copy()
    for i in range(n):
        if x[i]:
            for j in range(n):
                field[j] += 2.0 * M[j, i]
    e = 0.0
    for i in range(n):
        if x[i]:
            e += lin[i]
            for j in range(i + 1, n):
                if x[j]:
                    e += 2.0 * M[i, j]
    best_e = e
    best_x = x.copy()
    for s in range(temps.shape[0]):
        t = temps[s]
        for i in range(n):
            d = field[i] if x[i] == 0 else -field[i]
            if d <= 0.0 or rand[s, i] < math.exp(-d / t):
                sign = 1.0 if x[i] == 0 else -1.0
                x[i] = 1 - x[i]
                e += d
                for j in range(n):
                    field[j] += 2.0 * sign * M[j, i]
                if e < best_e:
                    best_e = e
                    best_x[:] = x
    return best_x, best_e


def solve_anneal(q: Qubo, schedule: AnnealSchedule | None = None, seed: int = 0) -> Solution:
    """Single-flip Metropolis with a geometric schedule; best visited state over restarts."""
    schedule = schedule or AnnealSchedule()
    n = q.dimension
    if n == 0:
        return Solution(np.zeros(0, dtype=int), float(q.offset), "anneal")
    temps = schedule.temperatures(q)
    M = np.ascontiguousarray(q.matrix - np.diag(np.diag(q.matrix)))
    lin = q.linear + np.diag(q.matrix)
    best_bits, best_e = None, math.inf
    found = []
    for child in np.random.SeedSequence(seed).spawn(schedule.restarts):
        rng = np.random.default_rng(child)
        x0 = rng.integers(0, 2, n).astype(np.int64)
        rand = rng.random((temps.shape[0], n))
        bits, _ = _anneal_run(M, lin, x0, temps, rand)
        e = q.energy(bits)
        found.append((e, _lex_key(bits), bits.astype(int)))
        if _better(e, bits, best_e, best_bits):
            best_bits, best_e = bits.astype(int), e
    found.sort(key=lambda t: (t[0], t[1]))
    return Solution(best_bits, best_e, "anneal", candidates=[f[2] for f in found])


# --- QAOA ----------------------------------------------------------------------


def _all_energies(q: Qubo) -> np.ndarray:
    """Energy of every basis state, indexed little-endian (variable i is qubit i)."""
    n = q.dimension
    k = np.arange(1 << n, dtype=np.int64)
    X = ((k[:, None] >> np.arange(n)[None, :]) & 1).astype(float)
    return q.energies(X)


def build_circuit(q: Qubo, gammas, betas, cap: int = 20) -> list[qsim.GateOp]:
    """Uniform superposition, then per layer the Ising cost phase exp(-i gamma H) and the RX mixer.

    Equal to the ideal QAOA unitary up to a global phase.
    """
    gammas, betas = list(gammas), list(betas)
    if len(gammas) != len(betas) or not gammas:
        raise ValueError("gamma and beta need the same nonzero length")
    n = q.dimension
    if n > cap:
        raise QuboError(f"{n} qubits exceed the cap {cap}")
    h, J, _ = q.ising()
    gates = [qsim.h(i) for i in range(n)]
    pairs = [(i, j) for i, j in zip(*np.nonzero(J))]
    for g, b in zip(gammas, betas):
        for i in range(n):
            if h[i] != 0.0:
                gates.append(qsim.phase(2.0 * g * h[i], i))
        for i, j in pairs:
            a = g * J[i, j]
            gates.append(qsim.diagonal([-a, a, a, -a], [i, j]))
        for i in range(n):
            gates.extend(qsim.rx(2.0 * b, i))
    return gates


@numba.njit(cache=True)
def _layers(psi, energies, n, gammas, betas):
    size = psi.shape[0]
    for layer in range(gammas.shape[0]):
        g = gammas[layer]
        for k in range(size):
            psi[k] *= complex(math.cos(g * energies[k]), -math.sin(g * energies[k]))
        c = math.cos(betas[layer])
        s = complex(0.0, -math.sin(betas[layer]))
        for qb in range(n):
            stride = 1 << qb
            for base in range(0, size, 2 * stride):
                for j in range(base, base + stride):
                    a0 = psi[j]
                    a1 = psi[j + stride]
                    psi[j] = c * a0 + s * a1
                    psi[j + stride] = s * a0 + c * a1
    return psi


def qaoa_state(energies: np.ndarray, n: int, gammas, betas) -> np.ndarray:
    """Statevector after the QAOA layers, cost phases taken from the diagonal ``energies``."""
    psi = np.full(1 << n, (1 << n) ** -0.5, dtype=np.complex128)
    return _layers(psi, np.ascontiguousarray(energies, dtype=np.float64), n,
                   np.asarray(gammas, dtype=np.float64), np.asarray(betas, dtype=np.float64))


def _golden(f, lo, hi, steps):
    inv = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(steps - 2):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def solve_qaoa(q: Qubo, cfg: QaoaConfig | None = None) -> Solution:
    """Best bit-string seen across all evaluations and final sampling.

    Angles are searched on energies rescaled to [0, 1]; the diagnostics
    report the angles applied to that rescaled cost.
    """
    cfg = cfg or QaoaConfig()
    n = q.dimension
    if n > cfg.cap:
        raise QuboError(f"{n} variables exceed the QAOA qubit cap {cfg.cap}")
    if n == 0:
        return Solution(np.zeros(0, dtype=int), float(q.offset), "qaoa")
    E = _all_energies(q)
    lo, hi = float(E.min()), float(E.max())
    En = (E - lo) / (hi - lo) if hi > lo else np.zeros_like(E)
    p = cfg.depth
    diags: list[dict] = []
    best = {"bits": None, "e": math.inf}

    seen: set[int] = set()

    def observe(idx):
        for k in np.unique(idx):
            seen.add(int(k))
            bits = ((int(k) >> np.arange(n)) & 1).astype(int)
            e = float(E[k])
            if _better(e, bits, best["e"], best["bits"]):
                best["bits"], best["e"] = bits, e

    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    for r, child in enumerate(seeds):
        rng = np.random.default_rng(child)
        theta = np.concatenate([rng.uniform(0, cfg.gamma_max, p), rng.uniform(0, cfg.beta_max, p)])
        step = [0]

        def evaluate(th):
            psi = qaoa_state(En, n, th[:p], th[p:])
            prob = np.abs(psi) ** 2
            prob /= prob.sum()
            if cfg.shots is None:
                val = float(prob @ E)
            else:
                idx = rng.choice(prob.size, size=cfg.shots, p=prob)
                observe(idx)
                val = float(E[idx].mean())
            diags.append({"restart": r, "step": step[0], "gamma": th[:p].copy(), "beta": th[p:].copy(),
                          "expectation": val, "best_so_far": best["e"]})
            step[0] += 1
            return val

        cur = evaluate(theta)
        for _ in range(cfg.sweeps):
            for j in range(2 * p):
                top = cfg.gamma_max if j < p else cfg.beta_max

                def f(v, j=j):
                    th = theta.copy()
                    th[j] = v
                    return evaluate(th)

                v, fv = _golden(f, 0.0, top, cfg.golden_steps)
                if fv < cur:
                    theta[j], cur = v, fv
        psi = qaoa_state(En, n, theta[:p], theta[p:])
        prob = np.abs(psi) ** 2
        observe(rng.choice(prob.size, size=cfg.final_shots, p=prob / prob.sum()))
    ranked = sorted(seen, key=lambda k: (E[k], _lex_key((k >> np.arange(n)) & 1)))[:32]
    cands = [((k >> np.arange(n)) & 1).astype(int) for k in ranked]
    return Solution(best["bits"], q.energy(best["bits"]), "qaoa", diags, cands)


def expectation(q: Qubo, gammas, betas) -> float:
    """Exact expected energy of the QAOA state at the given angles (raw energy scale)."""
    E = _all_energies(q)
    psi = qaoa_state(E, q.dimension, gammas, betas)
    return float(np.abs(psi) ** 2 @ E)
