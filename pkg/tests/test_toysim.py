import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trackfilter.toysim import (
    DetectorGeometry, Event, GenConfig, TrackState, generate_event, propagate, segment_metrics,
)

from conftest import make_event


def test_zero_noise_hit_count_and_collinearity():
    ev = make_event(4, 5)
    assert ev.n_hits == 20
    for t in range(4):
        pts = np.array([h.position for h in ev.all_hits() if h.truth_track_id == t])
        assert len(pts) == 5
        d = pts - pts[0]
        # every displacement is parallel to the first one
        cross = np.cross(d[1:], d[-1])
        assert np.max(np.abs(cross)) <= 1e-12 * np.max(np.abs(d)) ** 2


def test_fixed_slope_positions():
    geo = DetectorGeometry.regular(3)
    ev = generate_event(GenConfig(tracks_per_vertex=1), geo, slopes=[(0.1, 0.0)])
    xs = [h.x for h in ev.all_hits()]
    assert np.allclose(xs, [0.1 * z for z in geo.layer_z], rtol=1e-15)
    assert all(h.y == 0.0 for h in ev.all_hits())


def test_same_seed_bit_identical():
    cfg = GenConfig(tracks_per_vertex=5, n_vertices=2, sigma_meas=0.01, sigma_scatt_coeff=0.002,
                    ghost_rate=0.2, dropout_rate=0.1, seed=42)
    geo = DetectorGeometry.regular(5)
    assert generate_event(cfg, geo).to_json() == generate_event(cfg, geo).to_json()
    assert generate_event(cfg, geo, 1).to_json() != generate_event(cfg, geo, 0).to_json()


def test_ghosts_do_not_perturb_track_hits():
    geo = DetectorGeometry.regular(4)
    base = generate_event(GenConfig(tracks_per_vertex=3, sigma_meas=0.05, seed=9), geo)
    ghosty = generate_event(GenConfig(tracks_per_vertex=3, sigma_meas=0.05, ghost_rate=0.9, seed=9), geo)
    a = [(h.x, h.y) for h in base.all_hits() if h.truth_track_id is not None]
    b = [(h.x, h.y) for h in ghosty.all_hits() if h.truth_track_id is not None]
    assert a == b
    assert ghosty.n_ghosts > 0


def test_event_json_round_trip():
    ev = make_event(3, 4, seed=5, ghost_rate=0.3, dropout_rate=0.2)
    back = Event.from_json(ev.to_json())
    assert back.to_json() == ev.to_json()


def test_propagate_examples():
    s = propagate(TrackState(0.0, 0.0, 0.2, 0.0), 10.0)
    assert s.x == pytest.approx(2.0)
    s0 = TrackState(1.0, 2.0, 0.1, -0.3)
    assert propagate(s0, 0.0) == s0
    with pytest.raises(ValueError):
        propagate(s0, float("inf"))


@settings(max_examples=50)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-100, 100), st.floats(-100, 100))
def test_propagate_additive(tx, ty, a, b):
    s = TrackState(0.5, -0.5, tx, ty)
    one = propagate(propagate(s, a), b)
    two = propagate(s, a + b)
    assert one.x == pytest.approx(two.x, abs=1e-9) and one.y == pytest.approx(two.y, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(2, 6), st.integers(1, 3), st.floats(0, 1), st.floats(0, 1),
       st.integers(0, 2**16))
def test_hit_accounting(m, l, nv, ghost, drop, seed):
    cfg = GenConfig(tracks_per_vertex=m, n_vertices=nv, ghost_rate=ghost, dropout_rate=drop, seed=seed)
    ev = generate_event(cfg, DetectorGeometry.regular(l))
    assert ev.n_hits == m * nv * l - ev.n_dropped + ev.n_ghosts
    hw = ev.geometry.transverse_halfwidth
    assert all(abs(h.x) <= hw and abs(h.y) <= hw for h in ev.all_hits())
    assert [h.hit_id for h in ev.all_hits()] == list(range(ev.n_hits))


def test_metrics_examples():
    ev = make_event(2, 3)
    assert len(ev.truth_segments) == 4
    assert segment_metrics(ev.truth_segments, ev) == (1.0, 0.0)
    fake = next((a, b) for a in range(2) for b in range(2, 4) if (a, b) not in ev.truth_segments)
    assert segment_metrics(set(ev.truth_segments) | {fake}, ev) == (1.0, pytest.approx(0.2))
    assert segment_metrics(set(), ev) == (0.0, 0.0)
    with pytest.raises(ValueError):
        segment_metrics({(0, 999)}, ev)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(2, 5), st.integers(0, 1000), st.data())
def test_metrics_bounded(m, l, seed, data):
    ev = make_event(m, l, seed, ghost_rate=0.5)
    ids = [h.hit_id for h in ev.all_hits()]
    pairs = data.draw(st.sets(st.tuples(st.sampled_from(ids), st.sampled_from(ids)), max_size=10))
    eff, fake = segment_metrics(pairs, ev)
    assert 0 <= eff <= 1 and 0 <= fake <= 1


def test_config_validation():
    with pytest.raises(ValueError):
        GenConfig(ghost_rate=1.5)
    with pytest.raises(ValueError):
        GenConfig(tracks_per_vertex=0)
    with pytest.raises(ValueError):
        GenConfig(momentum_range=(5, 1))
    with pytest.raises(ValueError):
        DetectorGeometry((0.0, 0.0))
    with pytest.raises(ValueError):
        DetectorGeometry((1.0,))
