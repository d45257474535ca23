"""Gate-level intermediate representation.

Qubit 0 is the least-significant bit of a basis-state index. Filter circuits
use the register layout ``[S | T | A]`` by qubit index, i.e. the ancilla is the
most significant qubit and system bit ``b`` of a basis index lives on qubit ``b``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

KINDS = ("H", "X", "CNOT", "PHASE", "RX", "RZ", "MCX", "MCRX")
ANGLED = frozenset({"PHASE", "RX", "RZ", "MCRX"})
_UNCONTROLLED = frozenset({"H", "X", "PHASE", "RX", "RZ"})


@dataclass(frozen=True, slots=True)
class Gate:
    kind: str
    target: int
    controls: tuple[int, ...] = ()
    angle: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if not isinstance(self.controls, tuple):
            object.__setattr__(self, "controls", tuple(self.controls))
        if self.target in self.controls:
            raise ValueError(f"{self.kind}: target {self.target} is also a control")
        if len(set(self.controls)) != len(self.controls):
            raise ValueError(f"{self.kind}: repeated control qubit")
        if self.kind in _UNCONTROLLED and self.controls:
            raise ValueError(f"{self.kind} takes no controls")
        if self.kind == "CNOT" and len(self.controls) != 1:
            raise ValueError("CNOT takes exactly one control")
        if self.kind in ("MCX", "MCRX") and not self.controls:
            raise ValueError(f"{self.kind} needs at least one control")
        if not math.isfinite(self.angle):
            raise ValueError(f"{self.kind}: non-finite angle")
        if self.target < 0 or any(c < 0 for c in self.controls):
            raise ValueError("negative qubit index")

    @property
    def qubits(self) -> tuple[int, ...]:
        return (*self.controls, self.target)

    @property
    def arity(self) -> int:
        return len(self.controls) + 1

    def inverse(self) -> Gate:
        if self.kind in ANGLED:
            return Gate(self.kind, self.target, self.controls, -self.angle)
        return self

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "controls": list(self.controls),
            "target": self.target,
            "angle": self.angle,
        }

    @classmethod
    def from_dict(cls, d: dict) -> Gate:
        return cls(d["kind"], int(d["target"]), tuple(int(c) for c in d.get("controls", ())),
                   float(d.get("angle", 0.0)))


def h(q: int) -> Gate:
    return Gate("H", q)


def x(q: int) -> Gate:
    return Gate("X", q)


def cnot(control: int, target: int) -> Gate:
    return Gate("CNOT", target, (control,))


def phase(q: int, phi: float) -> Gate:
    return Gate("PHASE", q, (), phi)


def rx(q: int, theta: float) -> Gate:
    return Gate("RX", q, (), theta)


def rz(q: int, theta: float) -> Gate:
    return Gate("RZ", q, (), theta)


def mcx(controls: Sequence[int], target: int) -> Gate:
    return Gate("MCX", target, tuple(controls))


def mcrx(controls: Sequence[int], target: int, theta: float) -> Gate:
    return Gate("MCRX", target, tuple(controls), theta)


@dataclass(frozen=True)
class RegisterLayout:
    """Filter register map: ``n_s`` system qubits, then time, then ancilla."""

    n_s: int

    def __post_init__(self) -> None:
        if self.n_s < 1:
            raise ValueError("need at least one system qubit")

    @property
    def system(self) -> tuple[int, ...]:
        return tuple(range(self.n_s))

    @property
    def time(self) -> int:
        return self.n_s

    @property
    def ancilla(self) -> int:
        return self.n_s + 1

    @property
    def n_qubits(self) -> int:
        return self.n_s + 2

    def as_dict(self) -> dict[str, list[int]]:
        return {"A": [self.ancilla], "T": [self.time], "S": list(self.system)}


@dataclass
class Circuit:
    n_qubits: int
    gates: list[Gate] = field(default_factory=list)
    layout: dict[str, list[int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.n_qubits < 1:
            raise ValueError("circuit needs at least one qubit")
        for g in self.gates:
            self._check(g)

    def _check(self, g: Gate) -> None:
        if max(g.qubits) >= self.n_qubits:
            raise ValueError(f"{g.kind} touches qubit {max(g.qubits)} of a {self.n_qubits}-qubit circuit")

    def append(self, g: Gate) -> None:
        self._check(g)
        self.gates.append(g)

    def extend(self, gates: Iterable[Gate]) -> None:
        for g in gates:
            self.append(g)

    def __iter__(self) -> Iterator[Gate]:
        return iter(self.gates)

    def __len__(self) -> int:
        return len(self.gates)

    def inverse(self) -> Circuit:
        return Circuit(self.n_qubits, [g.inverse() for g in reversed(self.gates)], dict(self.layout))

    def compose(self, other: Circuit) -> Circuit:
        if other.n_qubits != self.n_qubits:
            raise ValueError("qubit counts differ")
        return Circuit(self.n_qubits, self.gates + other.gates, dict(self.layout))

    def max_arity(self) -> int:
        return max((g.arity for g in self.gates), default=0)

    def to_json(self) -> str:
        doc = {
            "n_qubits": self.n_qubits,
            "layout": self.layout,
            "gates": [g.to_dict() for g in self.gates],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> Circuit:
        doc = json.loads(text)
        if isinstance(doc, list):
            gates = [Gate.from_dict(d) for d in doc]
            n = max((max(g.qubits) for g in gates), default=0) + 1
            return cls(n, gates)
        gates = [Gate.from_dict(d) for d in doc["gates"]]
        return cls(int(doc["n_qubits"]), gates, {k: list(v) for k, v in doc.get("layout", {}).items()})
