"""Stochastic Pauli noise via batched Monte Carlo trajectories.

Trajectories are simulated in fixed-size blocks; block ``b`` draws from its own
stream spawned from ``(seed, b)``, so results do not depend on how blocks are
scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circuit import Circuit
from .statevector import Counts, apply_gate, apply_pauli, counts_from_array, marginal

BLOCK = 512


@dataclass(frozen=True)
class NoiseParams:
    p1: float = 0.0
    p2: float = 0.0
    p_ro: float = 0.0

    def __post_init__(self) -> None:
        for name in ("p1", "p2", "p_ro"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    @property
    def is_zero(self) -> bool:
        return self.p1 == 0.0 and self.p2 == 0.0 and self.p_ro == 0.0


def _check_lowered(circuit: Circuit) -> None:
    for g in circuit.gates:
        if g.arity > 2:
            raise ValueError(f"noisy execution needs 1q/2q gates, found {g.kind} on {g.arity} qubits")


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def _trajectories(circuit: Circuit, noise: NoiseParams, size: int, rng: np.random.Generator) -> np.ndarray:
    n = circuit.n_qubits
    tensor = np.zeros((size,) + (2,) * n, dtype=complex)
    tensor[(slice(None),) + (0,) * n] = 1.0
    for g in circuit.gates:
        apply_gate(tensor, g, n)
        p = noise.p1 if g.arity == 1 else noise.p2
        if p <= 0.0:
            continue
        hit = np.flatnonzero(rng.random(size) < p)
        if hit.size == 0:
            continue
        # uniformly random non-identity Pauli: 3 choices on one qubit, 15 on two
        codes = rng.integers(1, 4 if g.arity == 1 else 16, size=hit.size)
        for code in np.unique(codes):
            rows = hit[codes == code]
            sub = tensor[rows]
            if g.arity == 1:
                apply_pauli(sub, int(code), g.target, n)
            else:
                q0, q1 = g.qubits
                apply_pauli(sub, int(code) // 4, q0, n)
                apply_pauli(sub, int(code) % 4, q1, n)
            tensor[rows] = sub
    return tensor.reshape(size, -1)


def _default_qubits(circuit: Circuit, qubits: Sequence[int] | None) -> list[int]:
    if qubits is None:
        return list(range(circuit.n_qubits - 1, -1, -1))
    qubits = list(qubits)
    if not qubits:
        raise ValueError("empty qubit set")
    return qubits


def run_noisy(circuit: Circuit, noise: NoiseParams, shots: int, seed: int,
              qubits: Sequence[int] | None = None) -> Counts:
    """One measured shot per trajectory, with independent readout flips."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    _check_lowered(circuit)
    qubits = _default_qubits(circuit, qubits)
    w = len(qubits)
    freq = np.zeros(2**w, dtype=np.int64)
    weights = 1 << np.arange(w - 1, -1, -1)
    for b in range(math.ceil(shots / BLOCK)):
        size = min(BLOCK, shots - b * BLOCK)
        rng = block_rng(seed, b)
        states = _trajectories(circuit, noise, size, rng)
        probs = marginal(np.abs(states) ** 2, qubits, circuit.n_qubits)
        cdf = np.cumsum(probs, axis=1)
        u = rng.random(size) * cdf[:, -1]
        outcome = np.minimum((cdf < u[:, None]).sum(axis=1), 2**w - 1)
        if noise.p_ro > 0.0:
            bits = (outcome[:, None] >> np.arange(w - 1, -1, -1)) & 1
            bits ^= (rng.random((size, w)) < noise.p_ro).astype(bits.dtype)
            outcome = bits @ weights
        freq += np.bincount(outcome, minlength=2**w)
    return counts_from_array(freq, w)


def readout_channel(dist: np.ndarray, p_ro: float) -> np.ndarray:
    """Apply independent bit flips with probability ``p_ro`` to an outcome
    distribution over ``log2(len(dist))`` bits."""
    if p_ro == 0.0:
        return dist
    w = int(round(math.log2(dist.size)))
    flip = np.array([[1 - p_ro, p_ro], [p_ro, 1 - p_ro]])
    t = dist.reshape((2,) * w)
    for ax in range(w):
        t = np.moveaxis(np.tensordot(flip, t, axes=([1], [ax])), 0, ax)
    return t.reshape(-1)


def noisy_distribution(circuit: Circuit, noise: NoiseParams, trajectories: int, seed: int,
                       qubits: Sequence[int] | None = None) -> np.ndarray:
    """Trajectory-averaged outcome distribution (readout noise applied exactly).

    Without noise every trajectory is the ideal state, so this returns the
    exact distribution.
    """
    if trajectories < 1:
        raise ValueError("trajectories must be >= 1")
    _check_lowered(circuit)
    qubits = _default_qubits(circuit, qubits)
    acc = np.zeros(2 ** len(qubits))
    for b in range(math.ceil(trajectories / BLOCK)):
        size = min(BLOCK, trajectories - b * BLOCK)
        states = _trajectories(circuit, noise, size, block_rng(seed, b))
        acc += marginal(np.abs(states) ** 2, qubits, circuit.n_qubits).sum(axis=0)
    return readout_channel(acc / trajectories, noise.p_ro)
