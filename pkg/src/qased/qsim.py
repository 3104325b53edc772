"""Small statevector simulator.

Qubit ordering is little-endian everywhere in this package: qubit ``q`` is
bit ``q`` of the basis index, so ``index = sum(b_q << q)``. Basis strings
returned by :func:`measure_counts` and :func:`exact_probabilities` list the
requested qubits from the last to the first, so that the string reads as the
binary number of the sub-register (the same convention Qiskit uses).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_QUBITS = 26
_NORM_TOL = 1e-9


class SimulatorError(ValueError):
    pass


@dataclass
class QuantumState:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.num_qubits < 1:
            raise SimulatorError("a state needs at least one qubit")
        if self.num_qubits > MAX_QUBITS:
            raise SimulatorError(f"{self.num_qubits} qubits exceeds the cap of {MAX_QUBITS}")
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (1 << self.num_qubits,):
            raise SimulatorError(
                f"expected {1 << self.num_qubits} amplitudes, got {amps.shape}"
            )
        self.amplitudes = amps

    @classmethod
    def zero(cls, num_qubits: int) -> "QuantumState":
        if num_qubits > MAX_QUBITS:
            raise SimulatorError(f"{num_qubits} qubits exceeds the cap of {MAX_QUBITS}")
        amps = np.zeros(1 << num_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(num_qubits, amps)

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def copy(self) -> "QuantumState":
        return QuantumState(self.num_qubits, self.amplitudes.copy())


@dataclass(frozen=True)
class GateOp:
    """One gate. ``params`` depends on ``kind``:

    RY, PHASE: ``(angle,)``; DIAGONAL: phases for each basis state of the
    targets (little-endian over ``targets``); PREPARE: real target amplitudes
    of the register; CONTROLLED: ``inner`` holds the gate, ``controls`` and
    ``control_values`` the condition. CNOT targets are ``(control, target)``.
    """

    kind: str
    targets: tuple[int, ...]
    params: tuple = ()
    inner: "GateOp | None" = None
    controls: tuple[int, ...] = ()
    control_values: tuple[int, ...] = field(default=())

    def qubits(self) -> tuple[int, ...]:
        if self.kind == "CONTROLLED":
            return self.controls + self.inner.qubits()
        return self.targets


_KINDS = {"RY", "X", "H", "CNOT", "PHASE", "DIAGONAL", "PREPARE", "CONTROLLED"}


def ry(angle: float, q: int) -> GateOp:
    return GateOp("RY", (q,), (float(angle),))


def x(q: int) -> GateOp:
    return GateOp("X", (q,))


def h(q: int) -> GateOp:
    return GateOp("H", (q,))


def cnot(control: int, target: int) -> GateOp:
    return GateOp("CNOT", (control, target))


def phase(angle: float, q: int) -> GateOp:
    return GateOp("PHASE", (q,), (float(angle),))


def diagonal(phases: Sequence[float], targets: Sequence[int]) -> GateOp:
    return GateOp("DIAGONAL", tuple(targets), tuple(float(p) for p in phases))


def prepare(amplitudes: Sequence[float], targets: Sequence[int]) -> GateOp:
    """Householder reflection exchanging |0...0> and the target vector."""
    return GateOp("PREPARE", tuple(targets), tuple(float(a) for a in amplitudes))


def controlled(inner: GateOp, controls: Sequence[int], values: Sequence[int] | None = None) -> GateOp:
    controls = tuple(controls)
    values = tuple(values) if values is not None else (1,) * len(controls)
    if len(values) != len(controls):
        raise SimulatorError("one control value per control qubit")
    return GateOp("CONTROLLED", (), (), inner, controls, values)


def rx(angle: float, q: int) -> list[GateOp]:
    """RX as PHASE(-pi/2) RY(angle) PHASE(pi/2); exact, no global phase."""
    return [phase(np.pi / 2, q), ry(angle, q), phase(-np.pi / 2, q)]


def inverse(gate: GateOp) -> GateOp:
    kind = gate.kind
    if kind in ("X", "H", "CNOT", "PREPARE"):
        return gate
    if kind in ("RY", "PHASE", "DIAGONAL"):
        return GateOp(kind, gate.targets, tuple(-p for p in gate.params))
    if kind == "CONTROLLED":
        return GateOp(kind, (), (), inverse(gate.inner), gate.controls, gate.control_values)
    raise SimulatorError(f"unknown gate kind {kind!r}")


def inverse_circuit(gates: Sequence[GateOp]) -> list[GateOp]:
    return [inverse(g) for g in reversed(gates)]


def _matrix(gate: GateOp) -> np.ndarray:
    kind = gate.kind
    if kind == "RY":
        c, s = np.cos(gate.params[0] / 2), np.sin(gate.params[0] / 2)
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "X":
        return np.array([[0, 1], [1, 0]], dtype=complex)
    if kind == "H":
        return np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    if kind == "PHASE":
        return np.diag([1.0, np.exp(1j * gate.params[0])])
    if kind == "CNOT":
        # local index = b_control + 2 * b_target
        m = np.eye(4, dtype=complex)
        m[[1, 3]] = m[[3, 1]]
        return m
    raise SimulatorError(f"no dense matrix for {kind}")


def _validate(gate: GateOp, n: int) -> None:
    if gate.kind not in _KINDS:
        raise SimulatorError(f"unknown gate kind {gate.kind!r}")
    qs = gate.qubits()
    if not qs:
        raise SimulatorError("gate acts on no qubits")
    for q in qs:
        if not 0 <= q < n:
            raise SimulatorError(f"qubit index {q} out of range for {n} qubits")
    if len(set(qs)) != len(qs):
        raise SimulatorError(f"duplicate qubit in {qs}")
    if gate.kind == "CNOT" and len(gate.targets) != 2:
        raise SimulatorError("CNOT needs (control, target)")
    if gate.kind in ("RY", "X", "H", "PHASE") and len(gate.targets) != 1:
        raise SimulatorError(f"{gate.kind} acts on exactly one qubit")
    if gate.kind in ("DIAGONAL", "PREPARE") and len(gate.params) != 1 << len(gate.targets):
        raise SimulatorError(f"{gate.kind} needs 2^k parameters for k targets")
    if gate.kind == "PREPARE":
        t = np.asarray(gate.params)
        if abs(t @ t - 1.0) > _NORM_TOL:
            raise SimulatorError("PREPARE target is not normalised")


def _subspace_indices(n: int, targets: Sequence[int], controls: Sequence[int], values: Sequence[int]):
    """Rows of basis indices; column j is the target-local basis state j."""
    idx = np.arange(1 << n)
    fixed = 0
    for q in targets:
        fixed |= 1 << q
    base = idx[(idx & fixed) == 0]
    for q, v in zip(controls, values):
        base = base[((base >> q) & 1) == v]
    offsets = np.zeros(1 << len(targets), dtype=np.int64)
    for j in range(1 << len(targets)):
        for k, q in enumerate(targets):
            if (j >> k) & 1:
                offsets[j] |= 1 << q
    return base[:, None] + offsets[None, :]


def _apply_inplace(vec: np.ndarray, n: int, gate: GateOp, controls=(), values=()) -> None:
    kind = gate.kind
    if kind == "CONTROLLED":
        _apply_inplace(vec, n, gate.inner, controls + gate.controls, values + gate.control_values)
        return
    if kind in ("RY", "X", "H", "PHASE") and not controls:
        q = gate.targets[0]
        view = vec.reshape(1 << (n - 1 - q), 2, 1 << q)
        view[:] = np.einsum("ij,ajb->aib", _matrix(gate), view)
        return
    idx = _subspace_indices(n, gate.targets, controls, values)
    if kind == "DIAGONAL":
        vec[idx] *= np.exp(1j * np.asarray(gate.params))[None, :]
    elif kind == "PREPARE":
        t = np.asarray(gate.params)
        w = -t.astype(complex)
        w[0] += 1.0
        nw = np.linalg.norm(w)
        if nw < 1e-15:
            return
        w /= nw
        sub = vec[idx]
        vec[idx] = sub - 2.0 * np.outer(sub @ w.conj(), w)
    else:
        vec[idx] = vec[idx] @ _matrix(gate).T


def apply_gate(state: QuantumState, gate: GateOp) -> QuantumState:
    _validate(gate, state.num_qubits)
    out = state.copy()
    _apply_inplace(out.amplitudes, out.num_qubits, gate)
    return out


def run_circuit(state: QuantumState, gates: Iterable[GateOp]) -> QuantumState:
    out = state.copy()
    for g in gates:
        _validate(g, out.num_qubits)
        _apply_inplace(out.amplitudes, out.num_qubits, g)
    return out


def prepare_amplitudes(target: Sequence[float]) -> QuantumState:
    t = np.asarray(target, dtype=float)
    size = t.shape[0]
    if size < 2 or size & (size - 1):
        raise SimulatorError(f"length {size} is not a power of two >= 2")
    if np.any(t < 0):
        raise SimulatorError("amplitudes must be non-negative")
    if abs(t @ t - 1.0) > _NORM_TOL:
        raise SimulatorError(f"squared amplitudes sum to {t @ t}, not 1")
    return QuantumState(size.bit_length() - 1, t.astype(complex))


def _marginal(state: QuantumState, qubit_subset: Sequence[int]) -> np.ndarray:
    qs = list(qubit_subset)
    if not qs:
        raise SimulatorError("empty qubit subset")
    for q in qs:
        if not 0 <= q < state.num_qubits:
            raise SimulatorError(f"qubit index {q} out of range")
    if len(set(qs)) != len(qs):
        raise SimulatorError("duplicate qubit in subset")
    probs = np.abs(state.amplitudes) ** 2
    idx = np.arange(probs.size)
    local = np.zeros(probs.size, dtype=np.int64)
    for k, q in enumerate(qs):
        local |= ((idx >> q) & 1) << k
    return np.bincount(local, weights=probs, minlength=1 << len(qs))


def _key(value: int, width: int) -> str:
    return format(value, f"0{width}b")


def exact_probabilities(state: QuantumState, qubit_subset: Sequence[int]) -> dict[str, float]:
    marg = _marginal(state, qubit_subset)
    w = len(qubit_subset)
    return {_key(i, w): float(p) for i, p in enumerate(marg) if p > 0}


def measure_counts(
    state: QuantumState, qubit_subset: Sequence[int], shots: int, rng_seed
) -> dict[str, int]:
    """Sample ``shots`` outcomes of the sub-register; ``rng_seed`` may be an int,
    a SeedSequence or a numpy Generator."""
    if shots < 1:
        raise SimulatorError("shots must be >= 1")
    marg = _marginal(state, qubit_subset)
    marg = np.clip(marg, 0.0, None)
    marg /= marg.sum()
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    counts = rng.multinomial(shots, marg)
    w = len(qubit_subset)
    return {_key(i, w): int(c) for i, c in enumerate(counts) if c}
