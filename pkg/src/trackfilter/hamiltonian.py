"""Segment graph, angular couplings and the linear system ``A x = b``.

The system matrix is kept in the canonical form ``A = (alpha + beta) I - B``
where ``B`` is the symmetric 0/1 adjacency of the coupling graph and ``b`` is
the all-ones vector. The sparse coupling list is the source of truth; dense
matrices are only materialised up to ``DENSE_LIMIT`` rows.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .toysim import Event

DENSE_LIMIT = 2**12
DEFAULT_ALPHA = 2.0
DEFAULT_BETA = 1.0
DEFAULT_EPSILON = 1e-6


class NotPositiveDefiniteError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Segment:
    seg_id: int
    from_hit: int
    to_hit: int
    layer: int = -1
    direction: tuple[float, float, float] | None = None


@dataclass(frozen=True, slots=True)
class Coupling:
    i: int
    j: int
    cos_theta: float = 1.0


def build_candidate_segments(event: Event) -> list[Segment]:
    """All hit pairs on adjacent layers, ordered by (layer, from_hit, to_hit)."""
    segments: list[Segment] = []
    for p in range(event.geometry.n_layers - 1):
        lo, hi = event.hits[p], event.hits[p + 1]
        if not lo or not hi:
            continue
        a = np.array([h.position for h in lo])
        b = np.array([h.position for h in hi])
        d = b[None, :, :] - a[:, None, :]
        d /= np.linalg.norm(d, axis=2, keepdims=True)
        for u, hu in enumerate(lo):
            for v, hv in enumerate(hi):
                segments.append(Segment(len(segments), hu.hit_id, hv.hit_id, p, tuple(d[u, v].tolist())))
    return segments


def build_couplings(segments: Sequence[Segment], epsilon: float = DEFAULT_EPSILON) -> list[Coupling]:
    """Couple segments ``i -> j`` meeting at a shared hit with cos(theta) >= 1 - epsilon."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    incoming: dict[int, list[int]] = {}
    outgoing: dict[int, list[int]] = {}
    for s in segments:
        incoming.setdefault(s.to_hit, []).append(s.seg_id)
        outgoing.setdefault(s.from_hit, []).append(s.seg_id)
    dirs = np.array([s.direction for s in segments], dtype=float) if segments else np.zeros((0, 3))
    out: list[Coupling] = []
    for hit in sorted(set(incoming) & set(outgoing)):
        ins = np.array(incoming[hit])
        outs = np.array(outgoing[hit])
        cos = dirs[ins] @ dirs[outs].T
        for u, v in zip(*np.nonzero(cos >= 1.0 - epsilon)):
            out.append(Coupling(int(ins[u]), int(outs[v]), float(cos[u, v])))
    out.sort(key=lambda c: (c.i, c.j))
    return out


@dataclass
class TrackingSystem:
    segments: list[Segment]
    couplings: list[Coupling]
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    epsilon: float = DEFAULT_EPSILON
    _degree: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    @property
    def N(self) -> int:
        return len(self.segments)

    @property
    def k(self) -> int:
        return len(self.couplings)

    @property
    def diag_c(self) -> float:
        return self.alpha + self.beta

    @property
    def b(self) -> np.ndarray:
        return np.ones(self.N)

    def pairs(self) -> list[tuple[int, int]]:
        return [(c.i, c.j) for c in self.couplings]

    def degrees(self) -> np.ndarray:
        if self._degree is None:
            deg = np.zeros(self.N, dtype=int)
            for c in self.couplings:
                deg[c.i] += 1
                deg[c.j] += 1
            self._degree = deg
        return self._degree

    def coupled_segments(self) -> set[int]:
        """Segment ids touched by at least one coupling."""
        return {s for c in self.couplings for s in (c.i, c.j)}

    def adjacency(self) -> sp.csr_matrix:
        if not self.couplings:
            return sp.csr_matrix((self.N, self.N))
        ij = np.array(self.pairs()).T
        rows = np.concatenate([ij[0], ij[1]])
        cols = np.concatenate([ij[1], ij[0]])
        return sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(self.N, self.N))

    def sparse_matrix(self) -> sp.csr_matrix:
        return (self.diag_c * sp.identity(self.N, format="csr") - self.adjacency()).tocsr()

    def matrix(self, dense_limit: int = DENSE_LIMIT) -> np.ndarray:
        if self.N > dense_limit:
            raise ValueError(f"N={self.N} exceeds the dense limit {dense_limit}")
        a = self.diag_c * np.eye(self.N)
        for c in self.couplings:
            a[c.i, c.j] = a[c.j, c.i] = -1.0
        return a

    def padded_matrix(self, dim: int, dense_limit: int = DENSE_LIMIT) -> np.ndarray:
        """``A`` embedded in ``dim`` rows; padding rows are isolated (diagonal only)."""
        if dim < self.N:
            raise ValueError("padding dimension smaller than N")
        if dim > dense_limit:
            raise ValueError(f"dim={dim} exceeds the dense limit {dense_limit}")
        a = self.diag_c * np.eye(dim)
        a[: self.N, : self.N] = self.matrix(dense_limit)
        return a

    def to_json(self) -> str:
        doc = {
            "alpha": self.alpha,
            "beta": self.beta,
            "epsilon": self.epsilon,
            "N": self.N,
            "segments": [
                {"id": s.seg_id, "from": s.from_hit, "to": s.to_hit, "layer": s.layer,
                 "direction": list(s.direction) if s.direction is not None else None}
                for s in self.segments
            ],
            "couplings": [[c.i, c.j] for c in self.couplings],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> TrackingSystem:
        doc = json.loads(text)
        segs = [
            Segment(int(d["id"]), int(d["from"]), int(d["to"]), int(d.get("layer", -1)),
                    tuple(d["direction"]) if d.get("direction") is not None else None)
            for d in doc["segments"]
        ]
        if len(segs) != doc.get("N", len(segs)):
            raise ValueError("segment count does not match N")
        couplings = [Coupling(int(i), int(j)) for i, j in doc["couplings"]]
        return assemble_system(segs, couplings, doc["alpha"], doc["beta"], doc.get("epsilon", DEFAULT_EPSILON))


def assemble_system(segments: Sequence[Segment], couplings: Sequence[Coupling],
                    alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA,
                    epsilon: float = DEFAULT_EPSILON) -> TrackingSystem:
    n = len(segments)
    if any(s.seg_id != k for k, s in enumerate(segments)):
        raise ValueError("segment ids must be 0..N-1 in order")
    seen: set[tuple[int, int]] = set()
    for c in couplings:
        if not (0 <= c.i < n and 0 <= c.j < n) or c.i == c.j:
            raise ValueError(f"coupling ({c.i}, {c.j}) out of range")
        key = (min(c.i, c.j), max(c.i, c.j))
        if key in seen:
            raise ValueError(f"duplicate coupling {key}")
        seen.add(key)
    ordered = sorted((Coupling(min(c.i, c.j), max(c.i, c.j), c.cos_theta) for c in couplings),
                     key=lambda c: (c.i, c.j))
    return TrackingSystem(list(segments), ordered, alpha, beta, epsilon)


def build_system(event: Event, alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA,
                 epsilon: float = DEFAULT_EPSILON) -> TrackingSystem:
    segments = build_candidate_segments(event)
    return assemble_system(segments, build_couplings(segments, epsilon), alpha, beta, epsilon)


def truth_segment_ids(system: TrackingSystem, event: Event) -> set[int]:
    return {s.seg_id for s in system.segments if (s.from_hit, s.to_hit) in event.truth_segments}


def gershgorin_bounds(system: TrackingSystem) -> tuple[float, float]:
    r = float(system.degrees().max()) if system.N else 0.0
    return system.diag_c - r, system.diag_c + r


def solve_classical(system: TrackingSystem, rtol: float = 1e-10) -> np.ndarray:
    lo, _ = gershgorin_bounds(system)
    b = system.b
    if system.N <= DENSE_LIMIT:
        a = system.matrix()
        if lo <= 0:
            try:
                np.linalg.cholesky(a)
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefiniteError("A is not positive definite") from exc
        x = np.linalg.solve(a, b)
    else:
        a = system.sparse_matrix().tocsc()
        if lo <= 0:
            lam = spla.eigsh(a, k=1, which="SA", return_eigenvectors=False)[0]
            if lam <= 0:
                raise NotPositiveDefiniteError(f"A has eigenvalue {lam:.3g}")
        x = spla.spsolve(a, b)
        a = a.tocsr()
    res = np.linalg.norm(a @ x - b)
    if res > rtol * np.linalg.norm(b):
        raise RuntimeError(f"classical solve residual {res:.3e} above tolerance")
    return x


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns
    overlaps: np.ndarray


def eigendecompose(system: TrackingSystem, dense_limit: int = DENSE_LIMIT, dim: int | None = None) -> Spectrum:
    """Dense eigendecomposition of ``A`` (optionally padded to ``dim`` rows)
    with overlaps of the normalised uniform vector on each eigenvector."""
    a = system.matrix(dense_limit) if dim is None else system.padded_matrix(dim, dense_limit)
    lam, u = np.linalg.eigh(a)
    b = np.ones(a.shape[0]) / math.sqrt(a.shape[0])
    return Spectrum(lam, u, u.T @ b)


def predict_success(spectrum: Spectrum, t: float) -> float:
    """Ancilla success probability sum_j cos^2(lambda_j t / 2) |beta_j|^2."""
    return float(np.sum(np.cos(spectrum.eigenvalues * t / 2) ** 2 * np.abs(spectrum.overlaps) ** 2))


def filtered_signal_mass(system: TrackingSystem, lambda_c: float | None = None, tol: float = 1e-9,
                         dense_limit: int = DENSE_LIMIT) -> float:
    """Fraction of the uniform signal vector (over coupled segments) lying in
    the ``lambda_c`` eigenspace, i.e. signal the filter removes.

    Non-zero for tracks long enough that their path graph has a zero
    eigenvalue of ``B``.
    """
    lambda_c = system.diag_c if lambda_c is None else lambda_c
    coupled = sorted(system.coupled_segments())
    if not coupled:
        return 0.0
    spec = eigendecompose(system, dense_limit)
    sig = np.zeros(system.N)
    sig[coupled] = 1.0 / math.sqrt(len(coupled))
    sel = np.abs(spec.eigenvalues - lambda_c) < tol
    return float(np.sum((spec.eigenvectors[:, sel].T @ sig) ** 2))
