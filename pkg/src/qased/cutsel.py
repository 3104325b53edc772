"""Minimum set-cover selection of feasibility cuts.

Rows are infeasible trial solutions, columns are feasibility cuts, and
``N[r, k] = 1`` when cut ``k`` excludes trial ``r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lp import FeasibilityCut
from .qubo import encode_set_cover

VIOLATION_TOL = 1e-9
BACKENDS = ("greedy", "qubo-exact", "qubo-qaoa")


class CoverError(ValueError):
    pass


@dataclass
class CoverInstance:
    N: np.ndarray
    trial_ids: list[int]
    cut_ids: list[int]

    def __post_init__(self):
        self.N = np.asarray(self.N, dtype=np.int8)
        if self.N.ndim != 2 or self.N.shape != (len(self.trial_ids), len(self.cut_ids)):
            raise CoverError("matrix shape does not match the id maps")
        if not np.isin(self.N, (0, 1)).all():
            raise CoverError("cover matrix must be 0/1")

    def check(self) -> None:
        empty = np.flatnonzero(self.N.sum(axis=1) == 0)
        if empty.size:
            raise CoverError(f"trial {self.trial_ids[int(empty[0])]} is not excluded by any cut")

    def covers(self, columns: Sequence[int]) -> bool:
        cols = list(columns)
        if not cols:
            return self.N.shape[0] == 0
        return bool(np.all(self.N[:, cols].max(axis=1) == 1))


def build_cover_matrix(cuts: Sequence[FeasibilityCut], trials: Sequence[np.ndarray],
                       cut_ids: Sequence[int] | None = None, trial_ids: Sequence[int] | None = None) -> CoverInstance:
    """N[r, k] = 1 iff cut k evaluated at trial r exceeds the tolerance."""
    N = np.zeros((len(trials), len(cuts)), dtype=np.int8)
    for r, z in enumerate(trials):
        for k, cut in enumerate(cuts):
            N[r, k] = cut.evaluate(np.asarray(z, dtype=float)) > VIOLATION_TOL
    inst = CoverInstance(N, list(trial_ids if trial_ids is not None else range(len(trials))),
                         list(cut_ids if cut_ids is not None else range(len(cuts))))
    empty = np.flatnonzero(N.sum(axis=1) == 0)
    if empty.size:
        raise CoverError(f"internal: trial {inst.trial_ids[int(empty[0])]} violates none of its cuts")
    return inst


def greedy_cover(inst: CoverInstance) -> list[int]:
    """Column covering most uncovered rows first; ties to the lowest column index."""
    inst.check()
    uncovered = np.ones(inst.N.shape[0], dtype=bool)
    chosen: list[int] = []
    while uncovered.any():
        gain = inst.N[uncovered].sum(axis=0)
        k = int(np.argmax(gain))
        chosen.append(k)
        uncovered &= inst.N[:, k] == 0
    return chosen


def exhaustive_min_cover(inst: CoverInstance) -> int:
    """Size of a minimum cover by enumeration over all column subsets (oracle, small instances)."""
    inst.check()
    q, k = inst.N.shape
    if q == 0:
        return 0
    masks = np.array([int("".join(map(str, inst.N[:, j][::-1])), 2) for j in range(k)], dtype=np.int64)
    full = (1 << q) - 1
    best = k
    for s in range(1 << k):
        cols = [j for j in range(k) if (s >> j) & 1]
        if len(cols) >= best:
            continue
        acc = 0
        for j in cols:
            acc |= int(masks[j])
        if acc == full:
            best = len(cols)
    return best


def greedy_bound(q: int) -> float:
    return math.log(q) + 1.0 if q > 0 else 1.0


def reduce_cover(N: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rows and columns that keep the minimum cover size unchanged.

    A column whose row set is contained in another column's is dropped (the
    lower index survives among identical ones); a row whose column set
    contains another row's is dropped, since covering the smaller row covers
    it. The two rules are applied until nothing changes.
    """
    rows, cols = np.arange(N.shape[0]), np.arange(N.shape[1])
    while True:
        S = N[np.ix_(rows, cols)].astype(bool)
        sub = ~(S[:, :, None] & ~S[:, None, :]).any(axis=0)  # sub[j, i]: column j within column i
        lower = np.arange(len(cols))[None, :] < np.arange(len(cols))[:, None]
        keep_c = ~((sub & ~sub.T) | (sub & sub.T & lower)).any(axis=1)
        S = S[:, keep_c]
        sup = ~(S[None, :, :] & ~S[:, None, :]).any(axis=2)  # sup[r, s]: row s within row r
        lower = np.arange(len(rows))[None, :] < np.arange(len(rows))[:, None]
        keep_r = ~((sup & ~sup.T) | (sup & sup.T & lower)).any(axis=1)
        if keep_c.all() and keep_r.all():
            return rows, cols
        rows, cols = rows[keep_r], cols[keep_c]


def select(inst: CoverInstance, backend: str = "greedy", qaoa_cfg=None) -> list[int]:
    """Selected column indices (into ``inst.cut_ids``), sorted."""
    inst.check()
    if inst.N.shape[0] == 0:
        return []
    if backend == "greedy":
        return sorted(greedy_cover(inst))
    if backend not in BACKENDS:
        raise CoverError(f"unknown selection backend {backend!r}")
    from . import qaoa

    rows, cols = reduce_cover(inst.N)
    cq = encode_set_cover(inst.N[np.ix_(rows, cols)])
    if backend == "qubo-exact":
        sol = qaoa.minimize_exact(cq.qubo)
    else:
        cfg = qaoa_cfg or qaoa.QaoaConfig()
        sol = qaoa.solve_qaoa(cq.qubo, cfg) if cq.qubo.dimension <= cfg.cap else \
            qaoa.solve_anneal(cq.qubo, seed=cfg.seed)
    chosen = [int(cols[j]) for j in cq.selection(sol.bits)]
    if not inst.covers(chosen):
        if backend == "qubo-exact":
            raise CoverError("exact cover QUBO returned a non-cover (penalty misconfigured)")
        chosen = _repair(inst, chosen)
    return sorted(chosen)


def _repair(inst: CoverInstance, chosen: list[int]) -> list[int]:
    """Complete a partial selection greedily, then drop redundant columns."""
    chosen = list(chosen)
    uncovered = inst.N[:, chosen].max(axis=1) == 0 if chosen else np.ones(inst.N.shape[0], dtype=bool)
    while uncovered.any():
        k = int(np.argmax(inst.N[uncovered].sum(axis=0)))
        chosen.append(k)
        uncovered &= inst.N[:, k] == 0
    for k in sorted(chosen, reverse=True):
        rest = [j for j in chosen if j != k]
        if rest and inst.covers(rest):
            chosen = rest
    return chosen
