import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trackfilter.hamiltonian import (
    Coupling, Segment, TrackingSystem, assemble_system, build_candidate_segments, build_couplings,
    eigendecompose, filtered_signal_mass, gershgorin_bounds, predict_success, solve_classical, truth_segment_ids,
)
from trackfilter.toysim import Event

from conftest import abstract_system, make_event, make_system


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(2, 6), st.integers(0, 10_000))
def test_scaling_relations(m, l, seed):
    ev, sys_ = make_system(m, l, seed)
    assert sys_.N == m * m * (l - 1)
    assert sys_.k == m * (l - 2)
    assert len(truth_segment_ids(sys_, ev)) == m * (l - 1)


def test_small_examples():
    assert make_system(2, 3)[1].N == 8
    assert make_system(2, 3)[1].k == 2
    s = make_system(1, 3)[1]
    assert s.N == 2
    assert np.array_equal(s.matrix(), [[3, -1], [-1, 3]])
    assert np.array_equal(s.b, [1, 1])


def test_empty_layer_skips_gap():
    ev = make_event(2, 4)
    hits = [list(ev.hits[0]), [], list(ev.hits[2]), list(ev.hits[3])]
    gap = Event(ev.geometry, ev.vertices, hits, frozenset(), 2)
    segs = build_candidate_segments(gap)
    assert len(segs) == 2 * 2
    assert {s.layer for s in segs} == {2}


def _seg(k, a, b, start, end):
    d = np.subtract(end, start, dtype=float)
    return Segment(k, a, b, 0, tuple(d / np.linalg.norm(d)))


def test_right_angle_not_coupled():
    s0 = _seg(0, 0, 1, (0, 0, 0), (0, 0, 1))
    s1 = _seg(1, 1, 2, (0, 0, 1), (1, 0, 1))
    assert build_couplings([s0, s1], 1e-6) == []
    assert build_couplings([s0, s1], 0.999) == []
    assert len(build_couplings([s0, s1], 1.0)) == 1
    with pytest.raises(ValueError):
        build_couplings([s0, s1], -1.0)


def test_relaxed_epsilon_adds_fakes():
    ev = make_event(8, 4, seed=3)
    segs = build_candidate_segments(ev)
    strict = build_couplings(segs, 1e-6)
    loose = build_couplings(segs, 0.05)
    assert len(strict) == 8 * 2
    assert len(loose) > len(strict)
    assert {(c.i, c.j) for c in strict} <= {(c.i, c.j) for c in loose}


def test_no_couplings_scalar_matrix():
    s = abstract_system(5, [])
    assert np.array_equal(s.matrix(), 3 * np.eye(5))
    assert gershgorin_bounds(s) == (3.0, 3.0)
    spec = eigendecompose(s)
    assert np.allclose(spec.eigenvalues, 3)
    assert predict_success(spec, math.pi / 3) == pytest.approx(0.0, abs=1e-15)


def test_assembly_rejects_bad_couplings():
    segs = [Segment(i, i, i + 10) for i in range(3)]
    with pytest.raises(ValueError):
        assemble_system(segs, [Coupling(0, 1), Coupling(1, 0)])
    with pytest.raises(ValueError):
        assemble_system(segs, [Coupling(0, 3)])
    with pytest.raises(ValueError):
        assemble_system(segs, [Coupling(1, 1)])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(2, 5), st.integers(0, 500), st.floats(0, 0.2))
def test_matrix_structure_and_solve(m, l, seed, ghost):
    ev, s = make_system(m, l, seed, ghost_rate=ghost, sigma_meas=0.0)
    if s.N == 0:
        return
    a = s.matrix()
    assert np.array_equal(a, a.T)
    assert np.all(np.diag(a) == 3.0)
    x = solve_classical(s)
    assert np.linalg.norm(a @ x - s.b) <= 1e-10 * np.linalg.norm(s.b)
    coupled = s.coupled_segments()
    for i in range(s.N):
        if i in coupled:
            assert x[i] > 1 / 3
        else:
            assert x[i] == pytest.approx(1 / 3, abs=1e-14)
    spec = eigendecompose(s)
    lo, hi = gershgorin_bounds(s)
    assert spec.eigenvalues.min() >= lo - 1e-12 and spec.eigenvalues.max() <= hi + 1e-12
    assert np.all(np.diff(spec.eigenvalues) >= 0)
    rebuilt = spec.eigenvectors @ np.diag(spec.eigenvalues) @ spec.eigenvectors.T
    assert np.linalg.norm(rebuilt - a) <= 1e-9 * np.linalg.norm(a)
    for i in set(range(s.N)) - coupled:
        e = np.zeros(s.N)
        e[i] = 1
        assert np.allclose(a @ e, 3 * e)
    assert 0 <= predict_success(spec, math.pi / 3) <= 1


def test_pair_solution_and_spectrum(pair_system):
    assert np.allclose(solve_classical(pair_system), [0.5, 0.5], atol=1e-14)
    spec = eigendecompose(pair_system)
    assert np.allclose(spec.eigenvalues, [2, 4])
    assert gershgorin_bounds(pair_system) == (2.0, 4.0)
    # all of the uniform vector sits on the lambda=2 eigenvector
    assert predict_success(spec, math.pi / 3) == pytest.approx(0.25, abs=1e-12)


def test_long_chains_reach_outer_bounds():
    assert gershgorin_bounds(make_system(2, 8)[1]) == (1.0, 5.0)


def test_dense_limit():
    s = abstract_system(8, [(0, 1)])
    with pytest.raises(ValueError):
        s.matrix(dense_limit=4)
    with pytest.raises(ValueError):
        eigendecompose(s, dense_limit=4)


def test_sparse_solve_above_dense_limit(monkeypatch):
    import trackfilter.hamiltonian as ham
    _, s = make_system(3, 5, seed=2)
    dense = solve_classical(s)
    monkeypatch.setattr(ham, "DENSE_LIMIT", 4)
    assert np.allclose(solve_classical(s), dense, atol=1e-12)


def test_json_round_trip():
    _, s = make_system(3, 4, seed=1)
    back = TrackingSystem.from_json(s.to_json())
    assert back.pairs() == s.pairs() and back.N == s.N
    assert np.array_equal(back.matrix(), s.matrix())


def test_filtered_signal_mass_on_long_tracks():
    assert filtered_signal_mass(make_system(2, 5)[1]) == pytest.approx(0, abs=1e-12)
    # five-segment chains carry a zero eigenvalue of the adjacency
    assert filtered_signal_mass(make_system(2, 6)[1]) == pytest.approx(1 / 15, abs=1e-12)
