"""Prediction-error characterisation with unified amplitude estimation.

A prediction error ``zeta`` (per unit of installed RES capacity) is encoded on
``n1 + m1 + 1`` value qubits with weights ``2**j`` for ``j = -m1 .. n1`` and a
bias that centres the grid on zero. Value qubit ``q`` carries weight
``2**(q - m1)``, so the register's basis index ``z`` maps to
``z * 2**-m1 - bias``. The ancilla sits right above the value register.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, stats

from . import qsim
from .qsim import GateOp, QuantumState


class EncodingError(ValueError):
    pass


@dataclass(frozen=True)
class GridEncoding:
    m1: int  # fractional weights 2^-1 .. 2^-m1
    n1: int  # integer weights 2^0 .. 2^n1

    def __post_init__(self):
        if self.m1 < 0 or self.n1 < 0:
            raise EncodingError("m1 and n1 must be non-negative")

    @property
    def num_qubits(self) -> int:
        return self.n1 + self.m1 + 1

    @property
    def bias(self) -> float:
        return 2.0**self.n1 - 2.0 ** (-self.m1 - 1)

    @property
    def step(self) -> float:
        return 2.0 ** (-self.m1)

    @property
    def size(self) -> int:
        return 1 << self.num_qubits

    def values(self) -> np.ndarray:
        """Grid values indexed by the register's basis index."""
        return np.arange(self.size) * self.step - self.bias


@dataclass(frozen=True)
class Normal:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise EncodingError("std must be positive")

    def cdf(self, x):
        return stats.norm.cdf(x, loc=self.mean, scale=self.std)

    def pdf(self, x):
        return stats.norm.pdf(x, loc=self.mean, scale=self.std)


@dataclass(frozen=True)
class GaussianMixture:
    components: tuple[tuple[float, float, float], ...]  # (weight, mean, std)

    def __post_init__(self):
        comps = tuple(tuple(float(v) for v in c) for c in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise EncodingError("mixture needs at least one component")
        for w, _, s in comps:
            if w < 0 or not s > 0:
                raise EncodingError("mixture weights must be >= 0 and stds > 0")
        if abs(sum(c[0] for c in comps) - 1.0) > 1e-9:
            raise EncodingError("mixture weights must sum to 1")

    def cdf(self, x):
        return sum(w * stats.norm.cdf(x, loc=m, scale=s) for w, m, s in self.components)

    def pdf(self, x):
        return sum(w * stats.norm.pdf(x, loc=m, scale=s) for w, m, s in self.components)


ErrorDistribution = Normal | GaussianMixture


def grid_value(bits: Sequence[int], enc: GridEncoding) -> float:
    """``bits[k]`` is the coefficient of weight ``2**(k - m1)``."""
    if len(bits) != enc.num_qubits:
        raise EncodingError(f"expected {enc.num_qubits} bits, got {len(bits)}")
    return sum(2.0 ** (k - enc.m1) * int(b) for k, b in enumerate(bits)) - enc.bias


def unify(zeta: float, enc: GridEncoding) -> float:
    if not -enc.bias - 1e-12 <= zeta <= enc.bias + 1e-12:
        raise EncodingError(f"{zeta} outside [-{enc.bias}, {enc.bias}]")
    return (zeta + enc.bias) / 2.0 ** (enc.n1 + 1)


def de_unify(zeta_bar: float, enc: GridEncoding) -> float:
    return zeta_bar * 2.0 ** (enc.n1 + 1) - enc.bias


def discretize_distribution(dist: ErrorDistribution, enc: GridEncoding) -> np.ndarray:
    """Cell masses of the step-wide cells centred on each grid point, truncated
    to the grid range and renormalised."""
    centres = enc.values()
    edges = np.append(centres - enc.step / 2, centres[-1] + enc.step / 2)
    mass = np.diff(dist.cdf(edges))
    mass = np.clip(mass, 0.0, None)
    total = mass.sum()
    if not total > 1e-300:
        raise EncodingError("distribution has no mass inside the grid range")
    return mass / total


def _unified_values(enc: GridEncoding) -> np.ndarray:
    return (enc.values() + enc.bias) / 2.0 ** (enc.n1 + 1)


def build_preparation(
    dist: ErrorDistribution | np.ndarray, enc: GridEncoding, unified: np.ndarray | None = None
) -> list[GateOp]:
    """Circuit A = R (P x I) over the value register plus one ancilla.

    ``dist`` may be a distribution or an already discretised probability
    vector over the grid. ``unified`` overrides the per-basis-state values
    loaded into the ancilla (default: the unified grid values).
    """
    probs = np.asarray(dist, dtype=float) if isinstance(dist, np.ndarray) else discretize_distribution(dist, enc)
    if probs.shape != (enc.size,):
        raise EncodingError(f"probability vector of length {probs.shape} does not fit {enc.size} grid points")
    n = enc.num_qubits
    value_qubits = list(range(n))
    gates = [qsim.prepare(np.sqrt(probs / probs.sum()), value_qubits)]
    zbar = _unified_values(enc) if unified is None else np.asarray(unified, dtype=float)
    for z, zb in enumerate(zbar):
        angle = 2.0 * math.asin(math.sqrt(min(max(zb, 0.0), 1.0)))
        if angle == 0.0:
            continue
        bits = [(z >> q) & 1 for q in value_qubits]
        gates.append(qsim.controlled(qsim.ry(angle, n), value_qubits, bits))
    return gates


def grover_operator(prep: Sequence[GateOp], num_qubits: int) -> list[GateOp]:
    """Q = A S0 A^-1 S_chi with the ancilla as the highest qubit."""
    ancilla = num_qubits - 1
    s_chi = qsim.phase(math.pi, ancilla)
    s0_phases = np.zeros(1 << num_qubits)
    s0_phases[0] = math.pi
    s0 = qsim.diagonal(s0_phases, range(num_qubits))
    return [s_chi, *qsim.inverse_circuit(prep), s0, *prep]


def exact_mean(dist: ErrorDistribution | np.ndarray, enc: GridEncoding) -> float:
    """Classical reference sum_z P(z) * unified(z)."""
    probs = np.asarray(dist, dtype=float) if isinstance(dist, np.ndarray) else discretize_distribution(dist, enc)
    return float(probs @ _unified_values(enc))


def _mle_theta(powers: Sequence[int], hits: Sequence[float], shots: Sequence[float]) -> float:
    ks = np.asarray(powers, dtype=float)
    h = np.asarray(hits, dtype=float)
    m = np.asarray(shots, dtype=float)

    def nll(theta):
        s2 = np.sin((2 * ks + 1) * theta) ** 2
        s2 = np.clip(s2, 1e-300, 1.0)
        c2 = np.clip(1.0 - s2, 1e-300, 1.0)
        return -float(np.sum(h * np.log(s2) + (m - h) * np.log(c2)))

    kmax = max(ks.max(), 1.0)
    grid = np.linspace(0.0, math.pi / 2, int(200 * (2 * kmax + 1)) + 1)
    s2 = np.clip(np.sin(np.outer(grid, 2 * ks + 1)) ** 2, 1e-300, 1.0)
    c2 = np.clip(1.0 - s2, 1e-300, 1.0)
    vals = -(np.log(s2) @ h + np.log(c2) @ (m - h))
    i = int(np.argmin(vals))
    best_t, best_v = grid[i], vals[i]
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    if hi > lo:
        res = optimize.minimize_scalar(nll, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        if res.fun < best_v:
            best_t = float(res.x)
    return float(best_t)


@dataclass
class EstimateResult:
    estimate: float
    theta: float
    powers: list[int]
    hits: list[float]
    shots: int | None


def estimate_mean(
    dist: ErrorDistribution | np.ndarray,
    enc: GridEncoding,
    a: int,
    shots: int | None = None,
    seed=None,
    unified: np.ndarray | None = None,
) -> EstimateResult:
    """Estimate E[unified error] with Grover powers 2^0 .. 2^(a-1).

    ``shots=None`` runs in exact-probability mode: the likelihood uses the
    statevector's ancilla probabilities instead of sampled counts.
    """
    if a < 1:
        raise EncodingError("a must be >= 1")
    n = enc.num_qubits + 1
    if n > qsim.MAX_QUBITS:
        raise qsim.SimulatorError("estimation circuit exceeds the simulator cap")
    prep = build_preparation(dist, enc, unified)
    q_op = grover_operator(prep, n)
    rng = np.random.default_rng(seed)
    state = qsim.run_circuit(QuantumState.zero(n), prep)
    powers, hits = [], []
    applied = 0
    m_eff = shots if shots is not None else 1.0
    for j in range(a):
        k = 2**j
        for _ in range(k - applied):
            state = qsim.run_circuit(state, q_op)
        applied = k
        p1 = qsim.exact_probabilities(state, [n - 1]).get("1", 0.0)
        if shots is None:
            hits.append(p1)
        else:
            hits.append(float(qsim.measure_counts(state, [n - 1], shots, rng).get("1", 0)))
        powers.append(k)
    theta = _mle_theta(powers, hits, [m_eff] * len(powers))
    return EstimateResult(math.sin(theta) ** 2, theta, powers, hits, shots)


def monte_carlo_mean(dist: ErrorDistribution | np.ndarray, enc: GridEncoding, draws: int, seed=None) -> float:
    """Classical sampling estimate of E[unified error] from ``draws`` grid samples."""
    probs = np.asarray(dist, dtype=float) if isinstance(dist, np.ndarray) else discretize_distribution(dist, enc)
    rng = np.random.default_rng(seed)
    idx = rng.choice(enc.size, size=draws, p=probs / probs.sum())
    return float(_unified_values(enc)[idx].mean())


def compare_with_monte_carlo(dist, enc: GridEncoding, a_values: Sequence[int], trials: int, seed=0, shots: int = 512):
    """Mean absolute error of sampled amplitude estimation at ``a`` powers next
    to classical sampling with ``2**(a+1)`` draws, per ``a``."""
    exact = exact_mean(dist, enc)
    ss = np.random.SeedSequence(seed)
    rows = []
    for a in a_values:
        children = ss.spawn(2 * trials)
        qerr = [abs(estimate_mean(dist, enc, a, shots=shots, seed=children[2 * t]).estimate - exact) for t in range(trials)]
        cerr = [abs(monte_carlo_mean(dist, enc, 2 ** (a + 1), seed=children[2 * t + 1]) - exact) for t in range(trials)]
        rows.append({"a": a, "qae_mean_abs_error": float(np.mean(qerr)), "mc_draws": 2 ** (a + 1),
                     "mc_mean_abs_error": float(np.mean(cerr)), "qae_bound": math.pi / 2**a})
    return rows


@dataclass
class ScenarioSet:
    per_res_values: list[np.ndarray]
    errors: np.ndarray  # (S, R) per-unit errors
    weights: np.ndarray  # (S,)
    mode: str = "exact"
    shots: int | None = None
    seed: int | None = None
    marginals: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return self.weights.shape[0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario"] + [f"res{r}_error_pu" for r in range(self.errors.shape[1])] + ["weight"])
        for s in range(len(self)):
            w.writerow([s] + [repr(float(v)) for v in self.errors[s]] + [repr(float(self.weights[s]))])
        return buf.getvalue()

    def permuted(self, order: Sequence[int]) -> "ScenarioSet":
        order = np.asarray(order)
        return ScenarioSet(self.per_res_values, self.errors[order], self.weights[order], self.mode,
                           self.shots, self.seed, self.marginals)


def split_seeds(seed, count: int) -> list[np.random.SeedSequence]:
    """Per-RES seeds: children ``0..count-1`` of ``SeedSequence(seed)``."""
    return np.random.SeedSequence(seed).spawn(count)


def sample_marginal(probs: np.ndarray, enc: GridEncoding, shots: int, seed) -> np.ndarray:
    """Empirical value-register frequencies from measuring A|0> ``shots`` times."""
    prep = build_preparation(probs, enc)
    state = qsim.run_circuit(QuantumState.zero(enc.num_qubits + 1), prep)
    counts = qsim.measure_counts(state, list(range(enc.num_qubits)), shots, np.random.default_rng(seed))
    freq = np.zeros(enc.size)
    for key, c in counts.items():
        freq[int(key, 2)] = c
    return freq / shots


def generate_scenarios(
    dists: Sequence[ErrorDistribution],
    encs: Sequence[GridEncoding],
    mode: str = "exact",
    shots: int = 512,
    seed: int | None = None,
    cap: int = 10**6,
) -> ScenarioSet:
    if len(dists) != len(encs):
        raise EncodingError("one encoding per RES")
    size = math.prod(e.size for e in encs)
    if size > cap:
        raise EncodingError(f"{size} scenarios exceed the cap of {cap}")
    exact = [discretize_distribution(d, e) for d, e in zip(dists, encs)]
    if mode == "exact":
        marg = exact
    elif mode == "sampled":
        if seed is None:
            raise EncodingError("sampled mode needs an explicit seed")
        marg = [sample_marginal(p, e, shots, s) for p, e, s in zip(exact, encs, split_seeds(seed, len(encs)))]
    else:
        raise EncodingError(f"unknown scenario mode {mode!r}")
    values = [e.values() for e in encs]
    errs, weights = [], []
    for combo in itertools.product(*(range(e.size) for e in encs)):
        w = math.prod(float(m[i]) for m, i in zip(marg, combo))
        if w == 0.0:
            continue
        errs.append([v[i] for v, i in zip(values, combo)])
        weights.append(w)
    weights = np.asarray(weights, dtype=float)
    weights /= weights.sum()
    # without any RES the single empty combination is the one certain scenario
    return ScenarioSet(values, np.asarray(errs, dtype=float).reshape(len(weights), len(encs)), weights, mode,
                       shots if mode == "sampled" else None, seed, marg)
