"""Direct structural synthesis of the controlled evolution ``C(exp(-iAt))``.

With ``A = cI - B`` the evolution factors into a phase ``exp(-ict)`` kicked onto
the time qubit and one two-level gate ``exp(+it B_k)`` per coupling. Each
two-level gate is a CNOT ladder onto a pivot bit, X-conjugated controls, a
multi-controlled RX on the pivot and the mirrored uncomputation.

Multi-controlled gates are lowered to {H, X, CNOT, PHASE, RZ} with a single
borrowed idle qubit, so the two-qubit count per gate is linear in the number of
controls.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Iterator, Sequence

from .hamiltonian import TrackingSystem
from .qsim.circuit import Circuit, Gate, RegisterLayout, cnot, h, mcrx, phase, rz, x

TOPOLOGIES = ("all_to_all", "linear_chain")
SWAP_CNOTS = 3


class LoweringError(ValueError):
    pass


@dataclass(frozen=True)
class EvolutionSpec:
    t: float
    phi: float
    couplings: tuple[tuple[int, int], ...]
    n_s: int

    def __post_init__(self) -> None:
        if not self.t > 0:
            raise ValueError("evolution time must be positive")
        dim = 2**self.n_s
        pairs = tuple(sorted((min(i, j), max(i, j)) for i, j in self.couplings))
        for i, j in pairs:
            if i == j or j >= dim or i < 0:
                raise ValueError(f"coupling ({i}, {j}) invalid for {self.n_s} system qubits")
        object.__setattr__(self, "couplings", pairs)

    @classmethod
    def from_system(cls, system: TrackingSystem, t: float, n_s: int | None = None) -> EvolutionSpec:
        if n_s is None:
            n_s = system_qubits(system.N)
        return cls(t, -system.diag_c * t, tuple(system.pairs()), n_s)


def system_qubits(n: int) -> int:
    return max(1, math.ceil(math.log2(n))) if n > 1 else 1


def hamming(i: int, j: int) -> int:
    return bin(i ^ j).count("1")


def synthesize_interaction_gate(i: int, j: int, t: float, layout: RegisterLayout) -> list[Gate]:
    """Gates realising ``exp(+it(|i><j| + |j><i|))`` on the system register when
    the time qubit is 1, identity otherwise."""
    if i == j:
        raise ValueError("interaction gate needs two distinct basis states")
    dim = 2**layout.n_s
    if not (0 <= i < dim and 0 <= j < dim):
        raise ValueError(f"basis states ({i}, {j}) out of range for {layout.n_s} system qubits")
    sysq = layout.system
    diff = [b for b in range(layout.n_s) if (i ^ j) >> b & 1]
    pivot = diff[0]
    ladder = [cnot(sysq[pivot], sysq[b]) for b in sorted(diff[1:], reverse=True)]

    # image of |i> after the ladder: ladder bits flip iff i has the pivot bit set
    i_img = i ^ sum(1 << b for b in diff[1:]) if i >> pivot & 1 else i
    others = [b for b in range(layout.n_s) if b != pivot]
    flips = [x(sysq[b]) for b in others if not i_img >> b & 1]
    controls = [layout.time] + [sysq[b] for b in others]
    rot = mcrx(controls, sysq[pivot], -2.0 * t)
    return ladder + flips + [rot] + flips[::-1] + ladder[::-1]


def synthesize_controlled_evolution(spec: EvolutionSpec, layout: RegisterLayout | None = None) -> Circuit:
    layout = layout or RegisterLayout(spec.n_s)
    if layout.n_s != spec.n_s:
        raise ValueError("layout and spec disagree on the system size")
    circ = Circuit(layout.n_qubits, [phase(layout.time, spec.phi)], layout.as_dict())
    for i, j in spec.couplings:
        circ.extend(synthesize_interaction_gate(i, j, spec.t, layout))
    return circ


def invert_fragment(fragment: Circuit) -> Circuit:
    return fragment.inverse()


def trotter_error_bound(couplings: Sequence[tuple[int, int]], t: float) -> float:
    """First-order product-formula bound (t^2/2) sum_{k<l} ||[B_k, B_l]||.

    Two distinct sigma_x-like terms have a unit-norm commutator when they share
    a basis state and commute otherwise.
    """
    touches: dict[int, int] = {}
    for i, j in couplings:
        touches[i] = touches.get(i, 0) + 1
        touches[j] = touches.get(j, 0) + 1
    overlapping = sum(c * (c - 1) // 2 for c in touches.values())
    return 0.5 * t * t * overlapping


# --- lowering -----------------------------------------------------------------

def _toffoli(a: int, b: int, c: int) -> list[Gate]:
    t, tdg = math.pi / 4, -math.pi / 4
    return [
        h(c), cnot(b, c), phase(c, tdg), cnot(a, c), phase(c, t), cnot(b, c), phase(c, tdg),
        cnot(a, c), phase(b, t), phase(c, t), h(c), cnot(a, b), phase(a, t), phase(b, tdg), cnot(a, b),
    ]


def _mcx_dirty_chain(ctrl: Sequence[int], target: int, anc: Sequence[int]) -> list[Gate]:
    """C^m X with m - 2 borrowed (dirty) ancillas, 4(m - 2) Toffolis."""
    m = len(ctrl)
    if m == 1:
        return [cnot(ctrl[0], target)]
    if m == 2:
        return _toffoli(ctrl[0], ctrl[1], target)
    anc = list(anc[: m - 2])
    if len(anc) < m - 2:
        raise LoweringError(f"need {m - 2} borrowed qubits, have {len(anc)}")
    down = [tof for k in range(m - 2, 1, -1) for tof in _toffoli(ctrl[k], anc[k - 2], anc[k - 1])]
    up = [tof for k in range(2, m - 1) for tof in _toffoli(ctrl[k], anc[k - 2], anc[k - 1])]
    base = _toffoli(ctrl[0], ctrl[1], anc[0])
    top = _toffoli(ctrl[m - 1], anc[m - 3], target)
    return top + down + base + up + top + down + base + up


def lower_mcx(controls: Sequence[int], target: int, borrowed: int | None) -> list[Gate]:
    """C^n X using at most one borrowed idle qubit (which may hold any state)."""
    controls = list(controls)
    n = len(controls)
    if n <= 2:
        return [x(target)] if n == 0 else _mcx_dirty_chain(controls, target, [])
    if borrowed is None:
        raise LoweringError(f"MCX with {n} controls needs an idle qubit to borrow")
    m1 = (n + 1) // 2
    c1, c2 = controls[:m1], controls[m1:]
    first = _mcx_dirty_chain(c1, borrowed, c2 + [target])
    second = _mcx_dirty_chain(c2 + [borrowed], target, c1)
    return first + second + first + second


def _borrow(gate: Gate, n_qubits: int, preferred: int | None) -> int | None:
    busy = set(gate.qubits)
    if preferred is not None and preferred not in busy and preferred < n_qubits:
        return preferred
    for q in range(n_qubits - 1, -1, -1):
        if q not in busy:
            return q
    return None


def lower_gate(gate: Gate, n_qubits: int, preferred: int | None = None) -> list[Gate]:
    if gate.kind == "MCX":
        if len(gate.controls) == 1:
            return [cnot(gate.controls[0], gate.target)]
        return lower_mcx(gate.controls, gate.target, _borrow(gate, n_qubits, preferred))
    if gate.kind == "MCRX":
        t = gate.target
        if len(gate.controls) == 0:
            return [Gate("RX", t, (), gate.angle)]
        core = lower_mcx(gate.controls, t, _borrow(gate, n_qubits, preferred))
        # RX = H RZ H; controlled RZ(theta) = RZ(theta/2) . C^nX . RZ(-theta/2) . C^nX
        return [h(t)] + core + [rz(t, -gate.angle / 2)] + core + [rz(t, gate.angle / 2), h(t)]
    return [gate]


def _preferred(circuit: Circuit) -> int | None:
    anc = circuit.layout.get("A")
    return anc[0] if anc else None


def iter_lowered(circuit: Circuit) -> Iterator[Gate]:
    pref = _preferred(circuit)
    for g in circuit.gates:
        yield from lower_gate(g, circuit.n_qubits, pref)


def lower_circuit(circuit: Circuit) -> Circuit:
    return Circuit(circuit.n_qubits, list(iter_lowered(circuit)), dict(circuit.layout))


@dataclass
class SynthesisReport:
    ir_gate_count: int
    lowered_1q_count: int
    lowered_2q_count: int
    max_hamming_distance: int = 0
    trotter_error_bound: float = 0.0
    topology: str = "all_to_all"
    routed_2q_count: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _routing_cost(g: Gate, topology: str) -> int:
    if topology == "all_to_all" or g.arity != 2:
        return 0
    a, b = g.qubits
    return SWAP_CNOTS * (abs(a - b) - 1)


@lru_cache(maxsize=4096)
def _gate_cost(gate: Gate, n_qubits: int, preferred: int | None, topology: str) -> tuple[int, int, int]:
    n1 = n2 = extra = 0
    for g in lower_gate(gate, n_qubits, preferred):
        if g.arity == 1:
            n1 += 1
        else:
            n2 += 1
            extra += _routing_cost(g, topology)
    return n1, n2, extra


def count_lowered(circuit: Circuit, topology: str = "all_to_all") -> tuple[int, int, int]:
    """(1q count, 2q count, 2q count including routing) without materialising
    the lowered circuit."""
    if topology not in TOPOLOGIES:
        raise ValueError(f"unknown topology {topology!r}")
    pref = _preferred(circuit)
    n1 = n2 = extra = 0
    for g in circuit.gates:
        a, b, c = _gate_cost(g, circuit.n_qubits, pref, topology)
        n1 += a
        n2 += b
        extra += c
    return n1, n2, n2 + extra


def lower_and_count(circuit: Circuit, topology: str = "all_to_all",
                    spec: EvolutionSpec | None = None) -> tuple[Circuit, SynthesisReport]:
    if topology not in TOPOLOGIES:
        raise ValueError(f"unknown topology {topology!r}")
    lowered = lower_circuit(circuit)
    n1 = sum(1 for g in lowered.gates if g.arity == 1)
    n2 = len(lowered.gates) - n1
    routed = n2 + sum(_routing_cost(g, topology) for g in lowered.gates)
    report = SynthesisReport(
        ir_gate_count=len(circuit.gates),
        lowered_1q_count=n1,
        lowered_2q_count=routed if topology == "linear_chain" else n2,
        topology=topology,
        routed_2q_count=routed,
    )
    if spec is not None:
        report.max_hamming_distance = max((hamming(i, j) for i, j in spec.couplings), default=0)
        report.trotter_error_bound = trotter_error_bound(spec.couplings, spec.t)
    return lowered, report
