"""Toy VELO-like event generator and segment scoring.

Tracks are straight lines from vertices on the beam axis, sampled on planar
layers at fixed ``z``. Each random ingredient (vertices, slopes, momenta, hit
smearing, scattering, dropouts, ghosts) has its own stream spawned from
``(seed, event_index, purpose)``, so toggling one knob leaves the other draws
untouched.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable

import numpy as np

_PURPOSES = ("vertex", "slope", "momentum", "smear", "scatter", "dropout", "ghost", "charge")


@dataclass(frozen=True)
class DetectorGeometry:
    layer_z: tuple[float, ...]
    transverse_halfwidth: float = 60.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "layer_z", tuple(float(z) for z in self.layer_z))
        if len(self.layer_z) < 2:
            raise ValueError("detector needs at least 2 layers")
        if any(b <= a for a, b in zip(self.layer_z, self.layer_z[1:])):
            raise ValueError("layer_z must be strictly increasing")
        if self.transverse_halfwidth <= 0:
            raise ValueError("transverse_halfwidth must be positive")

    @property
    def n_layers(self) -> int:
        return len(self.layer_z)

    @classmethod
    def regular(cls, n_layers: int, spacing: float = 30.0, first_z: float = 30.0,
                transverse_halfwidth: float = 60.0) -> DetectorGeometry:
        return cls(tuple(first_z + i * spacing for i in range(n_layers)), transverse_halfwidth)

    def to_dict(self) -> dict:
        return {"layer_z": list(self.layer_z), "transverse_halfwidth": self.transverse_halfwidth}

    @classmethod
    def from_dict(cls, d: dict) -> DetectorGeometry:
        return cls(tuple(d["layer_z"]), float(d["transverse_halfwidth"]))


@dataclass(frozen=True)
class TrackState:
    x: float
    y: float
    tx: float
    ty: float
    q_over_p: float = 1.0


def propagate(state: TrackState, dz: float) -> TrackState:
    if not math.isfinite(dz):
        raise ValueError("dz must be finite")
    return replace(state, x=state.x + state.tx * dz, y=state.y + state.ty * dz)


@dataclass(frozen=True)
class GenConfig:
    tracks_per_vertex: int = 4
    n_vertices: int = 1
    sigma_meas: float = 0.0
    sigma_scatt_coeff: float = 0.0
    momentum_range: tuple[float, float] = (1.0, 5.0)
    ghost_rate: float = 0.0
    dropout_rate: float = 0.0
    seed: int = 0
    slope_max: float = 0.3
    vertex_z: float = 0.0
    vertex_z_window: tuple[float, float] = (-25.0, 25.0)

    def __post_init__(self) -> None:
        if self.tracks_per_vertex < 1:
            raise ValueError("tracks_per_vertex must be >= 1")
        if self.n_vertices < 1:
            raise ValueError("n_vertices must be >= 1")
        for name in ("ghost_rate", "dropout_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.sigma_meas < 0 or self.sigma_scatt_coeff < 0:
            raise ValueError("sigma values must be >= 0")
        lo, hi = self.momentum_range
        if not 0 < lo <= hi:
            raise ValueError("momentum_range must satisfy 0 < lo <= hi")
        if self.slope_max <= 0:
            raise ValueError("slope_max must be positive")
        object.__setattr__(self, "momentum_range", (float(lo), float(hi)))
        object.__setattr__(self, "vertex_z_window", tuple(float(v) for v in self.vertex_z_window))


@dataclass(frozen=True)
class Hit:
    hit_id: int
    layer_index: int
    x: float
    y: float
    z: float
    truth_track_id: int | None = None

    @property
    def position(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass
class Event:
    geometry: DetectorGeometry
    vertices: list[tuple[float, float, float]]
    hits: list[list[Hit]]
    truth_segments: frozenset[tuple[int, int]]
    n_tracks: int = 0
    n_dropped: int = 0
    n_ghosts: int = 0
    _by_id: dict[int, Hit] = field(default=None, init=False, repr=False, compare=False)

    def hit(self, hit_id: int) -> Hit:
        if self._by_id is None:
            self._by_id = {h.hit_id: h for layer in self.hits for h in layer}
        return self._by_id[hit_id]

    def all_hits(self) -> list[Hit]:
        return [h for layer in self.hits for h in layer]

    @property
    def n_hits(self) -> int:
        return sum(len(layer) for layer in self.hits)

    def to_json(self) -> str:
        doc = {
            "geometry": self.geometry.to_dict(),
            "vertices": [list(v) for v in self.vertices],
            "hits": [
                {"id": h.hit_id, "layer": h.layer_index, "x": h.x, "y": h.y, "z": h.z,
                 "truth_track_id": h.truth_track_id}
                for h in self.all_hits()
            ],
            "truth_segments": [list(s) for s in sorted(self.truth_segments)],
            "n_tracks": self.n_tracks,
            "n_dropped": self.n_dropped,
            "n_ghosts": self.n_ghosts,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> Event:
        doc = json.loads(text)
        geometry = DetectorGeometry.from_dict(doc["geometry"])
        hits: list[list[Hit]] = [[] for _ in range(geometry.n_layers)]
        for d in sorted(doc["hits"], key=lambda d: d["id"]):
            hits[d["layer"]].append(Hit(d["id"], d["layer"], d["x"], d["y"], d["z"], d.get("truth_track_id")))
        return cls(
            geometry,
            [tuple(v) for v in doc["vertices"]],
            hits,
            frozenset((int(a), int(b)) for a, b in doc["truth_segments"]),
            doc.get("n_tracks", 0),
            doc.get("n_dropped", 0),
            doc.get("n_ghosts", 0),
        )


def _streams(seed: int, event_index: int) -> dict[str, np.random.Generator]:
    return {
        name: np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(event_index, k)))
        for k, name in enumerate(_PURPOSES)
    }


def _draw_slopes(rng: np.random.Generator, z0: float, config: GenConfig,
                 geometry: DetectorGeometry) -> tuple[float, float]:
    # redraw until the straight line stays inside the acceptance on every layer
    reach = max(abs(z - z0) for z in geometry.layer_z)
    for _ in range(10_000):
        tx, ty = rng.uniform(-config.slope_max, config.slope_max, size=2)
        if max(abs(tx), abs(ty)) * reach <= geometry.transverse_halfwidth:
            return float(tx), float(ty)
    raise ValueError("slope cone never fits inside the detector acceptance")


def generate_event(config: GenConfig, geometry: DetectorGeometry, event_index: int = 0,
                   slopes: list[tuple[float, float]] | None = None) -> Event:
    """``slopes`` optionally pins (tx, ty) per track; the slope stream is then unused."""
    rng = _streams(config.seed, event_index)
    if config.n_vertices == 1:
        vertex_z = [config.vertex_z]
    else:
        lo, hi = config.vertex_z_window
        vertex_z = [float(z) for z in rng["vertex"].uniform(lo, hi, size=config.n_vertices)]
    vertices = [(0.0, 0.0, z) for z in vertex_z]

    n_layers = geometry.n_layers
    n_tracks = config.n_vertices * config.tracks_per_vertex
    if slopes is not None and len(slopes) != n_tracks:
        raise ValueError(f"expected {n_tracks} slope pairs, got {len(slopes)}")
    plo, phi = config.momentum_range
    # per-(track, layer) draws are made unconditionally so every stream stays aligned
    smear = rng["smear"].normal(0.0, 1.0, size=(n_tracks, n_layers, 2))
    kicks = rng["scatter"].normal(0.0, 1.0, size=(n_tracks, n_layers, 2))
    dropped = rng["dropout"].random((n_tracks, n_layers)) < config.dropout_rate
    momenta = np.exp(rng["momentum"].uniform(math.log(plo), math.log(phi), size=n_tracks))
    charges = np.where(rng["charge"].random(n_tracks) < 0.5, -1.0, 1.0)

    positions: list[list[tuple[float, float, float] | None]] = []
    for t in range(n_tracks):
        z0 = vertex_z[t // config.tracks_per_vertex]
        if slopes is None:
            tx, ty = _draw_slopes(rng["slope"], z0, config, geometry)
        else:
            tx, ty = (float(v) for v in slopes[t])
        state = TrackState(0.0, 0.0, tx, ty, float(charges[t] / momenta[t]))
        z = z0
        track_hits: list[tuple[float, float, float] | None] = []
        for p, zl in enumerate(geometry.layer_z):
            state = propagate(state, zl - z)
            z = zl
            if dropped[t, p]:
                track_hits.append(None)
            else:
                track_hits.append((state.x + config.sigma_meas * smear[t, p, 0],
                                   state.y + config.sigma_meas * smear[t, p, 1], zl))
            sigma = config.sigma_scatt_coeff * abs(state.q_over_p)
            if sigma > 0:
                state = replace(state, tx=state.tx + sigma * kicks[t, p, 0],
                                ty=state.ty + sigma * kicks[t, p, 1])
        positions.append(track_hits)

    ghost_counts = rng["ghost"].binomial(n_tracks, config.ghost_rate, size=n_layers)
    hw = geometry.transverse_halfwidth
    hits: list[list[Hit]] = []
    by_track: dict[tuple[int, int], int] = {}
    next_id = 0
    for p, zl in enumerate(geometry.layer_z):
        layer: list[Hit] = []
        for t in range(n_tracks):
            pos = positions[t][p]
            if pos is None:
                continue
            layer.append(Hit(next_id, p, float(pos[0]), float(pos[1]), zl, t))
            by_track[(t, p)] = next_id
            next_id += 1
        for gx, gy in rng["ghost"].uniform(-hw, hw, size=(int(ghost_counts[p]), 2)):
            layer.append(Hit(next_id, p, float(gx), float(gy), zl, None))
            next_id += 1
        hits.append(layer)

    truth = frozenset(
        (by_track[(t, p)], by_track[(t, p + 1)])
        for t in range(n_tracks)
        for p in range(n_layers - 1)
        if (t, p) in by_track and (t, p + 1) in by_track
    )
    return Event(geometry, vertices, hits, truth, n_tracks, int(dropped.sum()), int(ghost_counts.sum()))


def generate_events(config: GenConfig, geometry: DetectorGeometry, n_events: int) -> list[Event]:
    return [generate_event(config, geometry, i) for i in range(n_events)]


def segment_metrics(accepted: Iterable[tuple[int, int]], event: Event) -> tuple[float, float]:
    """Return ``(efficiency, fake_rate)`` of an accepted hit-pair set.

    Efficiency is 1.0 for an event without truth segments; the fake rate is 0.0
    when nothing is accepted.
    """
    accepted = {tuple(s) for s in accepted}
    known = {h.hit_id for h in event.all_hits()}
    for a, b in accepted:
        if a not in known or b not in known:
            raise ValueError(f"segment ({a}, {b}) references an unknown hit id")
    true_acc = len(accepted & event.truth_segments)
    eff = true_acc / len(event.truth_segments) if event.truth_segments else 1.0
    fake = (len(accepted) - true_acc) / len(accepted) if accepted else 0.0
    return eff, fake


def config_dict(config: GenConfig) -> dict:
    d = asdict(config)
    d["momentum_range"] = list(config.momentum_range)
    d["vertex_z_window"] = list(config.vertex_z_window)
    return d
