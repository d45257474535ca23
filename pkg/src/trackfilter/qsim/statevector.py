"""Statevector execution engine.

Amplitudes are stored batch-first as a tensor of shape ``(B, 2, ..., 2)``; the
axis of qubit ``q`` is ``n - q`` so the flattened row is the usual basis index
with qubit 0 as least-significant bit. Controlled gates only touch the slice
where every control is set, so a gate with ``c`` controls costs ``O(2^(n-c))``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .circuit import Circuit, Gate

DENSE_LIMIT = 12
_SQRT1_2 = 1.0 / math.sqrt(2.0)


class EmptyBranchError(ValueError):
    """Projection onto an outcome of (numerically) zero probability."""


def _axis(n: int, q: int) -> int:
    return n - q


def _halves(tensor: np.ndarray, gate: Gate, n: int) -> tuple[np.ndarray, np.ndarray]:
    idx: list = [slice(None)] * (n + 1)
    for c in gate.controls:
        idx[_axis(n, c)] = 1
    t = _axis(n, gate.target)
    idx[t] = 0
    lo = tensor[tuple(idx)]
    idx[t] = 1
    hi = tensor[tuple(idx)]
    return lo, hi


def apply_gate(tensor: np.ndarray, gate: Gate, n: int) -> None:
    """Apply ``gate`` in place to a batched state tensor."""
    if max(gate.qubits) >= n:
        raise IndexError(f"{gate.kind} touches qubit {max(gate.qubits)} but state has {n} qubits")
    a0, a1 = _halves(tensor, gate, n)
    kind = gate.kind
    if kind in ("X", "CNOT", "MCX"):
        tmp = a0.copy()
        a0[...] = a1
        a1[...] = tmp
    elif kind == "H":
        s = a0 + a1
        d = a0 - a1
        a0[...] = s * _SQRT1_2
        a1[...] = d * _SQRT1_2
    elif kind == "PHASE":
        a1 *= np.exp(1j * gate.angle)
    elif kind == "RZ":
        a0 *= np.exp(-0.5j * gate.angle)
        a1 *= np.exp(0.5j * gate.angle)
    elif kind in ("RX", "MCRX"):
        c = math.cos(gate.angle / 2)
        s = -1j * math.sin(gate.angle / 2)
        new0 = c * a0 + s * a1
        a1[...] = s * a0 + c * a1
        a0[...] = new0
    else:  # pragma: no cover - Gate validates kinds
        raise ValueError(kind)


def apply_pauli(tensor: np.ndarray, pauli: int, qubit: int, n: int) -> None:
    """Apply I/X/Y/Z (codes 0..3) on ``qubit`` in place."""
    if pauli == 0:
        return
    idx: list = [slice(None)] * (n + 1)
    t = _axis(n, qubit)
    idx[t] = 0
    a0 = tensor[tuple(idx)]
    idx[t] = 1
    a1 = tensor[tuple(idx)]
    if pauli == 1:
        tmp = a0.copy()
        a0[...] = a1
        a1[...] = tmp
    elif pauli == 2:
        tmp = a0.copy()
        a0[...] = -1j * a1
        a1[...] = 1j * tmp
    elif pauli == 3:
        a1 *= -1
    else:
        raise ValueError(f"pauli code {pauli}")


@dataclass
class StateVector:
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        n = int(round(math.log2(self.amplitudes.size))) if self.amplitudes.size else -1
        if n < 0 or 2**n != self.amplitudes.size:
            raise ValueError("amplitude count must be a power of two")

    @classmethod
    def zeros(cls, n_qubits: int) -> StateVector:
        amp = np.zeros(2**n_qubits, dtype=complex)
        amp[0] = 1.0
        return cls(amp)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> StateVector:
        amp = np.zeros(2**n_qubits, dtype=complex)
        amp[index] = 1.0
        return cls(amp)

    @property
    def n_qubits(self) -> int:
        return int(round(math.log2(self.amplitudes.size)))

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def marginal(self, qubits: Sequence[int]) -> np.ndarray:
        """Outcome probabilities on ``qubits``; the first listed qubit is the
        most significant bit of the returned index."""
        return marginal(self.probabilities(), qubits, self.n_qubits)


def marginal(probs: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    qubits = list(qubits)
    if not qubits:
        raise ValueError("empty qubit set")
    if len(set(qubits)) != len(qubits) or max(qubits) >= n or min(qubits) < 0:
        raise ValueError(f"bad qubit selection {qubits}")
    lead = probs.shape[:-1]
    p = probs.reshape(lead + (2,) * n)
    off = len(lead)
    keep = [off + n - 1 - q for q in qubits]
    drop = tuple(off + a for a in range(n) if off + a not in keep)
    p = p.sum(axis=drop) if drop else p
    # remaining axes are in ascending axis order; reorder to the requested order
    remaining = sorted(keep)
    perm = list(range(off)) + [off + remaining.index(a) for a in keep]
    p = np.transpose(p, perm)
    return p.reshape(lead + (2 ** len(qubits),))


def run_exact(circuit: Circuit, initial: StateVector | None = None) -> StateVector:
    n = circuit.n_qubits
    if initial is None:
        initial = StateVector.zeros(n)
    if initial.n_qubits != n:
        raise ValueError("initial state size does not match circuit")
    tensor = initial.amplitudes.copy().reshape((1,) + (2,) * n)
    for g in circuit.gates:
        apply_gate(tensor, g, n)
    return StateVector(tensor.reshape(-1))


def dense_unitary(circuit: Circuit, limit: int = DENSE_LIMIT) -> np.ndarray:
    """Column ``c`` is the circuit applied to basis state ``|c>``."""
    n = circuit.n_qubits
    if n > limit:
        raise ValueError(f"dense unitary limited to {limit} qubits, circuit has {n}")
    dim = 2**n
    tensor = np.eye(dim, dtype=complex).reshape((dim,) + (2,) * n)
    for g in circuit.gates:
        apply_gate(tensor, g, n)
    return tensor.reshape(dim, dim).T.copy()


def project(state: StateVector, qubit: int, outcome: int, atol: float = 1e-14) -> tuple[float, StateVector]:
    n = state.n_qubits
    if not 0 <= qubit < n or outcome not in (0, 1):
        raise ValueError("bad projection target")
    t = state.amplitudes.reshape((2,) * n).copy()
    idx: list = [slice(None)] * n
    idx[n - 1 - qubit] = 1 - outcome
    t[tuple(idx)] = 0.0
    amp = t.reshape(-1)
    prob = float(np.vdot(amp, amp).real)
    if prob <= atol:
        raise EmptyBranchError(f"outcome {outcome} on qubit {qubit} has probability {prob:.3e}")
    return prob, StateVector(amp / math.sqrt(prob))


@dataclass
class Counts:
    counts: dict[str, int] = field(default_factory=dict)
    shots: int = 0

    def __post_init__(self) -> None:
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts do not sum to total shots")

    def probabilities(self) -> dict[str, float]:
        return {k: v / self.shots for k, v in self.counts.items()} if self.shots else {}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bitstring", "count"])
        for k in sorted(self.counts):
            w.writerow([k, self.counts[k]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> Counts:
        rows = list(csv.DictReader(io.StringIO(text)))
        counts = {r["bitstring"]: int(r["count"]) for r in rows}
        return cls(counts, sum(counts.values()))


def bitstrings(width: int) -> list[str]:
    return [format(i, f"0{width}b") for i in range(2**width)]


def counts_from_array(freq: np.ndarray, width: int) -> Counts:
    labels = bitstrings(width)
    counts = {labels[i]: int(c) for i, c in enumerate(freq) if c}
    return Counts(counts, int(freq.sum()))


def sample_counts(state: StateVector, qubits: Sequence[int] | None, shots: int, seed: int) -> Counts:
    """Multinomial sampling of the marginal on ``qubits`` (default: all,
    most significant first, so keys are the usual binary labels)."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if qubits is None:
        qubits = range(state.n_qubits - 1, -1, -1)
    qubits = list(qubits)
    p = state.marginal(qubits)
    p = p / p.sum()
    rng = np.random.default_rng(seed)
    return counts_from_array(rng.multinomial(shots, p), len(qubits))
