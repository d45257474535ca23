"""The 1-bit spectral filter: circuit assembly, execution, post-selection and
the figures of merit used to judge it.

Evolving for ``t = pi / lambda_c`` maps every eigencomponent with eigenvalue
``lambda_c`` (isolated segments, padding states) onto the time-register state
that never flips the ancilla, so post-selecting ``A = 1`` removes them exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy.linalg import expm

from .dss import EvolutionSpec, invert_fragment, lower_circuit, synthesize_controlled_evolution, system_qubits
from .hamiltonian import TrackingSystem
from .qsim.circuit import Circuit, RegisterLayout, cnot, h, x
from .qsim.noise import NoiseParams, noisy_distribution, run_noisy
from .qsim.statevector import Counts, run_exact, sample_counts

EMPTY_THRESHOLD = 1e-12
SSI_FLOOR = 1e-12


class CapacityError(RuntimeError):
    """Requested run exceeds the configured simulator capacity."""


@dataclass(frozen=True)
class FilterConfig:
    lambda_c: float = 3.0
    selection_tau: float = 0.25
    shots: int = 100_000
    max_qubits: int = 24

    def __post_init__(self) -> None:
        if not self.lambda_c > 0:
            raise ValueError("lambda_c must be positive")
        if not 0.0 < self.selection_tau <= 1.0:
            raise ValueError("selection_tau must lie in (0, 1]")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")

    @property
    def t(self) -> float:
        return math.pi / self.lambda_c

    @classmethod
    def for_system(cls, system: TrackingSystem, **kw) -> FilterConfig:
        return cls(lambda_c=system.diag_c, **kw)


@dataclass
class FilterResult:
    p_succ: float
    post_dist: np.ndarray
    N: int
    accepted_segments: set[int] = field(default_factory=set)
    shots_used: int = 0
    p_time_one: float | None = None
    empty: bool = False

    def segment_distribution(self) -> dict[int, float]:
        return {i: float(self.post_dist[i]) for i in range(self.N)}

    def to_json(self) -> str:
        doc = {
            "p_succ": self.p_succ,
            "post_dist": {str(i): float(self.post_dist[i]) for i in range(self.N)},
            "accepted": sorted(self.accepted_segments),
            "shots_used": self.shots_used,
            "p_time_one": self.p_time_one,
            "empty": self.empty,
        }
        return json.dumps(doc, sort_keys=True)


def filter_layout(system: TrackingSystem) -> RegisterLayout:
    if system.N < 2:
        raise ValueError("filter needs at least 2 segments")
    return RegisterLayout(system_qubits(system.N))


def _check_capacity(layout: RegisterLayout, config: FilterConfig) -> None:
    if layout.n_qubits > config.max_qubits:
        raise CapacityError(f"{layout.n_qubits} qubits exceed the cap of {config.max_qubits}")


def build_filter_circuit(system: TrackingSystem, config: FilterConfig) -> Circuit:
    layout = filter_layout(system)
    spec = EvolutionSpec.from_system(system, config.t, layout.n_s)
    evo = synthesize_controlled_evolution(spec, layout)
    T, A = layout.time, layout.ancilla
    circ = Circuit(layout.n_qubits, [h(q) for q in layout.system], layout.as_dict())
    circ.append(h(T))
    circ.extend(evo.gates)
    circ.append(h(T))
    circ.extend([x(T), cnot(T, A), x(T)])
    circ.append(h(T))
    circ.extend(invert_fragment(evo).gates)
    circ.append(h(T))
    return circ


def measured_qubits(layout: RegisterLayout) -> list[int]:
    """Ancilla first, then system bits from most to least significant."""
    return [layout.ancilla] + list(reversed(layout.system))


def _result(p_succ: float, post: np.ndarray, system: TrackingSystem, config: FilterConfig,
            shots: int = 0, p_t1: float | None = None) -> FilterResult:
    if p_succ < EMPTY_THRESHOLD or not post.sum() > 0:
        return FilterResult(p_succ, np.zeros_like(post), system.N, set(), shots, p_t1, empty=True)
    res = FilterResult(p_succ, post, system.N, set(), shots, p_t1)
    res.accepted_segments = select_segments(res, config.selection_tau)
    return res


def _split_exact(amplitudes: np.ndarray, n_s: int, system: TrackingSystem,
                 config: FilterConfig) -> FilterResult:
    amp = amplitudes.reshape(2, 2, 2**n_s)  # [A, T, S]
    prob = np.abs(amp) ** 2
    p_succ = float(prob[1].sum())
    if p_succ < EMPTY_THRESHOLD:
        return _result(p_succ, np.zeros(2**n_s), system, config)
    post = prob[1].sum(axis=0) / p_succ
    return _result(p_succ, post, system, config, p_t1=float(prob[1, 1].sum() / p_succ))


def run_exact_filter(system: TrackingSystem, config: FilterConfig) -> FilterResult:
    layout = filter_layout(system)
    _check_capacity(layout, config)
    state = run_exact(build_filter_circuit(system, config))
    return _split_exact(state.amplitudes, layout.n_s, system, config)


def reference_filter(system: TrackingSystem, config: FilterConfig) -> FilterResult:
    """Dense oracle: the same five steps with ``exp(-iAt)`` from a matrix
    exponential instead of gate synthesis."""
    n_s = system_qubits(system.N)
    dim = 2**n_s
    u = expm(-1j * config.t * system.padded_matrix(dim))
    b = np.ones(dim, dtype=complex) / math.sqrt(dim)
    s = 1 / math.sqrt(2)
    # time-register branches after H, controlled U, H
    t0, t1 = s * b, s * (u @ b)
    t0, t1 = s * (t0 + t1), s * (t0 - t1)
    # zero-controlled NOT: the T=0 branch raises the ancilla
    branches = {1: (t0, np.zeros(dim, complex)), 0: (np.zeros(dim, complex), t1)}
    out = np.zeros((2, 2, dim), dtype=complex)
    for a, (z0, z1) in branches.items():
        z0, z1 = s * (z0 + z1), s * (z0 - z1)
        z1 = u.conj().T @ z1
        out[a, 0], out[a, 1] = s * (z0 + z1), s * (z0 - z1)
    return _split_exact(out.reshape(-1), n_s, system, config)


def _from_counts(counts: Counts, n_s: int, system: TrackingSystem, config: FilterConfig) -> FilterResult:
    hist = np.zeros(2 ** (n_s + 1))
    for key, c in counts.counts.items():
        hist[int(key, 2)] += c
    succ = hist[2**n_s:]
    n_succ = succ.sum()
    if n_succ == 0:
        return FilterResult(0.0, np.zeros(2**n_s), system.N, set(), counts.shots, empty=True)
    return _result(float(n_succ / counts.shots), succ / n_succ, system, config, counts.shots)


def run_sampled_filter(system: TrackingSystem, config: FilterConfig, noise: NoiseParams | None = None,
                       seed: int = 0, lowered: Circuit | None = None) -> FilterResult:
    """Shot-based run of the lowered circuit, noiseless or with Pauli noise."""
    layout = filter_layout(system)
    _check_capacity(layout, config)
    if lowered is None:
        lowered = lower_circuit(build_filter_circuit(system, config))
    qubits = measured_qubits(layout)
    if noise is None or noise.is_zero:
        counts = sample_counts(run_exact(lowered), qubits, config.shots, seed)
    else:
        counts = run_noisy(lowered, noise, config.shots, seed, qubits)
    return _from_counts(counts, layout.n_s, system, config)


def noisy_filter_distribution(system: TrackingSystem, config: FilterConfig, noise: NoiseParams,
                              trajectories: int, seed: int, lowered: Circuit | None = None) -> FilterResult:
    """Trajectory-averaged filter output; exact when the noise is zero."""
    layout = filter_layout(system)
    _check_capacity(layout, config)
    if lowered is None:
        lowered = lower_circuit(build_filter_circuit(system, config))
    joint = noisy_distribution(lowered, noise, trajectories, seed, measured_qubits(layout))
    succ = joint[2**layout.n_s:]
    p_succ = float(succ.sum())
    if p_succ < EMPTY_THRESHOLD:
        return FilterResult(p_succ, np.zeros(2**layout.n_s), system.N, set(), trajectories, empty=True)
    return _result(p_succ, succ / p_succ, system, config, trajectories)


def select_segments(result: FilterResult, tau: float = 0.25) -> set[int]:
    if result.empty:
        raise ValueError("cannot select from an empty distribution")
    seg = np.asarray(result.post_dist[: result.N])
    top = seg.max()
    if not top > 0:
        raise ValueError("cannot select from an empty distribution")
    return {int(i) for i in np.flatnonzero(seg >= tau * top)}


def accepted_hit_pairs(system: TrackingSystem, ids: Iterable[int]) -> set[tuple[int, int]]:
    return {(system.segments[i].from_hit, system.segments[i].to_hit) for i in ids}


def _as_array(d, size: int | None = None) -> np.ndarray:
    if isinstance(d, Counts):
        d = d.probabilities()
    if isinstance(d, Mapping):
        keys = list(d)
        if keys and isinstance(keys[0], str):
            width = len(keys[0])
            arr = np.zeros(2**width if size is None else size)
            for k, v in d.items():
                arr[int(k, 2)] += v
            return arr
        arr = np.zeros((max(keys) + 1 if keys else 0) if size is None else size)
        for k, v in d.items():
            arr[int(k)] += v
        return arr
    return np.asarray(d, dtype=float)


def hellinger_fidelity(p_exp, p_ideal, atol: float = 1e-6) -> float:
    """(sum_i sqrt(p_i q_i))^2 over a shared outcome space."""
    p = _as_array(p_exp)
    q = _as_array(p_ideal)
    size = max(p.size, q.size)
    p = np.pad(p, (0, size - p.size))
    q = np.pad(q, (0, size - q.size))
    for name, v in (("p_exp", p), ("p_ideal", q)):
        if np.any(v < -atol) or abs(v.sum() - 1.0) > atol:
            raise ValueError(f"{name} is not a normalised distribution (sum={v.sum():.6g})")
    bc = float(np.sum(np.sqrt(np.clip(p, 0, None) * np.clip(q, 0, None))))
    return min(1.0, bc * bc)


def signal_separation_index(post_dist, valid: Iterable[int]) -> float:
    """Mass on the valid segments over the mass on the same number of
    most-probable other outcomes; ``inf`` when that denominator vanishes."""
    p = _as_array(post_dist)
    valid = sorted(set(valid))
    mask = np.zeros(p.size, dtype=bool)
    mask[valid] = True
    num = float(p[mask].sum())
    others = np.sort(p[~mask])[::-1]
    den = float(others[: len(valid)].sum())
    return math.inf if den < SSI_FLOOR else num / den


@dataclass
class CollectionResult:
    shots_used: int
    complete: bool
    observed: int
    M: int


def outcome_distribution(system: TrackingSystem, config: FilterConfig) -> np.ndarray:
    """Exact single-shot distribution over (ancilla, system) outcomes."""
    layout = filter_layout(system)
    _check_capacity(layout, config)
    return run_exact(build_filter_circuit(system, config)).marginal(measured_qubits(layout))


def collect_until_complete(system: TrackingSystem, config: FilterConfig, seed: int, cap: int,
                           valid: Iterable[int] | None = None, chunk: int = 4096,
                           joint: np.ndarray | None = None) -> CollectionResult:
    """Single-shot sampling until every valid segment has been seen after
    post-selection. Counts every circuit execution, failed or not."""
    needed = set(system.coupled_segments() if valid is None else valid)
    if not needed:
        raise ValueError("no valid segments to collect")
    if joint is None:
        joint = outcome_distribution(system, config)
    n_sys = joint.size // 2
    cdf = np.cumsum(joint)
    cdf /= cdf[-1]
    rng = np.random.default_rng(seed)
    M = len(needed)
    used = 0
    while used < cap:
        size = min(chunk, cap - used)
        draws = np.searchsorted(cdf, rng.random(size), side="right")
        seg = draws[draws >= n_sys] - n_sys
        pos = np.flatnonzero(draws >= n_sys)
        vals, first = np.unique(seg, return_index=True)
        hits = [(pos[f], int(v)) for v, f in zip(vals, first) if int(v) in needed]
        if len(hits) >= len(needed):
            last = max(p for p, _ in hits)
            return CollectionResult(used + int(last) + 1, True, M, M)
        needed -= {v for _, v in hits}
        used += size
    return CollectionResult(cap, False, M - len(needed), M)
