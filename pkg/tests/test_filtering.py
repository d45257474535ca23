import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trackfilter.dss import system_qubits
from trackfilter.filtering import (
    CapacityError, FilterConfig, FilterResult, accepted_hit_pairs, build_filter_circuit, collect_until_complete,
    filter_layout, hellinger_fidelity, noisy_filter_distribution, reference_filter, run_exact_filter,
    run_sampled_filter, select_segments, signal_separation_index,
)
from trackfilter.hamiltonian import eigendecompose, predict_success, truth_segment_ids
from trackfilter.qsim import NoiseParams
from trackfilter.toysim import segment_metrics

from conftest import abstract_system, make_system

CFG = FilterConfig()


def _tv(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def test_register_sizes():
    assert build_filter_circuit(make_system(1, 3)[1], CFG).n_qubits == 3
    lay = filter_layout(make_system(2, 3)[1])
    assert (lay.n_s, lay.n_qubits) == (3, 5)
    with pytest.raises(ValueError):
        filter_layout(abstract_system(1, []))


def test_pair_oracle(pair_system):
    res = run_exact_filter(pair_system, CFG)
    ref = reference_filter(pair_system, CFG)
    assert res.p_succ == pytest.approx(0.25, abs=1e-10)
    assert np.allclose(res.post_dist, [0.5, 0.5], atol=1e-10)
    assert ref.p_succ == pytest.approx(0.25, abs=1e-10)
    assert np.allclose(ref.post_dist, res.post_dist, atol=1e-10)
    assert res.p_time_one == pytest.approx(ref.p_time_one, abs=1e-9)


def test_padding_is_filtered():
    s = abstract_system(6, [(0, 1), (2, 3)])
    res = run_exact_filter(s, CFG)
    assert res.post_dist.size == 8
    assert res.post_dist[6:].max() <= 1e-10
    assert res.post_dist[4:6].max() <= 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 300))
def test_noise_only_is_empty(n):
    res = run_exact_filter(abstract_system(n, []), CFG)
    assert res.p_succ <= 1e-10 and res.empty
    with pytest.raises(ValueError):
        select_segments(res)


def test_two_layer_events_are_empty():
    res = run_exact_filter(make_system(3, 2)[1], CFG)
    assert res.p_succ <= 1e-10 and res.empty


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 32), st.data())
def test_matches_dense_pipeline_for_commuting_couplings(n, data):
    perm = data.draw(st.permutations(range(n)))
    k = data.draw(st.integers(1, n // 2))
    s = abstract_system(n, [(perm[2 * i], perm[2 * i + 1]) for i in range(k)])
    res, ref = run_exact_filter(s, CFG), reference_filter(s, CFG)
    assert _tv(res.post_dist, ref.post_dist) <= 1e-8
    assert res.p_time_one == pytest.approx(ref.p_time_one, abs=1e-9)
    dim = 2 ** system_qubits(n)
    assert res.p_succ == pytest.approx(predict_success(eigendecompose(s, dim=dim), CFG.t), abs=1e-10)
    coupled = s.coupled_segments()
    for i in range(dim):
        if i not in coupled:
            assert res.post_dist[i] <= 1e-10


@pytest.mark.parametrize("m,l", [(2, 4), (2, 5), (3, 4)])
def test_overlapping_couplings_within_trotter_regime(m, l):
    # product-formula error only; noise segments stay exactly filtered
    _, s = make_system(m, l)
    res, ref = run_exact_filter(s, CFG), reference_filter(s, CFG)
    assert _tv(res.post_dist, ref.post_dist) <= 0.1
    assert res.post_dist[sorted(set(range(res.post_dist.size)) - s.coupled_segments())].max() <= 1e-10


def test_end_to_end_small_event():
    ev, s = make_system(2, 3)
    res = run_exact_filter(s, CFG)
    assert res.accepted_segments == truth_segment_ids(s, ev)
    assert segment_metrics(accepted_hit_pairs(s, res.accepted_segments), ev) == (1.0, 0.0)


def test_sampled_pair_within_three_sigma(pair_system):
    cfg = FilterConfig(shots=100_000)
    res = run_sampled_filter(pair_system, cfg, seed=5)
    sigma = math.sqrt(0.25 * 0.75 / 1e5)
    assert abs(res.p_succ - 0.25) <= 3 * sigma
    n_post = res.p_succ * 1e5
    assert _tv(res.post_dist, [0.5, 0.5]) <= 3 * math.sqrt(0.25 / n_post)
    assert run_sampled_filter(pair_system, cfg, seed=5).post_dist.tolist() == res.post_dist.tolist()


def test_noise_lowers_fidelity():
    _, s = make_system(2, 3)
    ideal = run_exact_filter(s, CFG).post_dist
    fid = {}
    for p2 in (0.0, 0.05):
        nz = NoiseParams(p2 / 10, p2)
        fid[p2] = np.mean([hellinger_fidelity(noisy_filter_distribution(s, CFG, nz, 256, seed).post_dist, ideal)
                           for seed in range(3)])
    assert fid[0.0] == pytest.approx(1.0, abs=1e-9)
    assert fid[0.05] < fid[0.0]


def test_noisy_sampled_deterministic():
    _, s = make_system(1, 3)
    cfg = FilterConfig(shots=2000)
    nz = NoiseParams(0.001, 0.01, 0.01)
    a = run_sampled_filter(s, cfg, nz, seed=3)
    b = run_sampled_filter(s, cfg, nz, seed=3)
    assert a.to_json() == b.to_json()


def test_capacity_guard():
    _, s = make_system(2, 3)
    with pytest.raises(CapacityError):
        run_exact_filter(s, FilterConfig(max_qubits=4))


def _result(dist):
    dist = np.asarray(dist, float)
    return FilterResult(1.0, dist, dist.size)


def test_selection_examples():
    assert select_segments(_result([0.25] * 4), 0.25) == {0, 1, 2, 3}
    assert select_segments(_result([0.9, 0.01, 0.01, 0.0]), 0.25) == {0}
    with pytest.raises(ValueError):
        select_segments(_result([0.0, 0.0]))


@settings(max_examples=50)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=16).filter(lambda v: max(v) > 0), st.floats(0.01, 1))
def test_selection_threshold_rule(vals, tau):
    acc = select_segments(_result(vals), tau)
    top = max(vals)
    assert acc == {i for i, v in enumerate(vals) if v >= tau * top}


def test_hellinger_examples():
    p = np.array([0.2, 0.3, 0.5])
    assert hellinger_fidelity(p, p) == pytest.approx(1.0)
    assert hellinger_fidelity([1, 0], [0, 1]) == 0.0
    assert hellinger_fidelity([1, 0], [0.5, 0.5]) == pytest.approx(0.5)
    assert hellinger_fidelity({"0": 1.0}, {"0": 0.5, "1": 0.5}) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        hellinger_fidelity([0.5, 0.2], [0.5, 0.5])


_dists = st.lists(st.floats(0, 1), min_size=4, max_size=4).filter(lambda v: sum(v) > 1e-3).map(
    lambda v: np.array(v) / sum(v))


@settings(max_examples=60)
@given(_dists, _dists)
def test_hellinger_bounded_symmetric(p, q):
    f = hellinger_fidelity(p, q)
    assert 0 <= f <= 1
    assert f == pytest.approx(hellinger_fidelity(q, p), abs=1e-12)


def test_ssi_examples(pair_system):
    res = run_exact_filter(pair_system, CFG)
    assert signal_separation_index(res.post_dist, {0, 1}) == math.inf
    dist = [0.4, 0.4, 0.1, 0.1, 0.0, 0.0]
    assert signal_separation_index(dist, {0, 1}) == pytest.approx(4.0)


def test_geometric_collection_mean(pair_system):
    # one target segment: success probability per shot is 0.25 * 0.5
    shots = [collect_until_complete(pair_system, CFG, seed, 10_000, valid={0}).shots_used for seed in range(200)]
    assert np.mean(shots) == pytest.approx(8.0, rel=0.2)


def test_collection_cap_on_noise_only():
    s = abstract_system(4, [])
    res = collect_until_complete(s, CFG, 0, 5000, valid={0})
    assert not res.complete and res.shots_used == 5000 and res.observed == 0
    with pytest.raises(ValueError):
        collect_until_complete(s, CFG, 0, 10)


def test_collection_counts_all_segments():
    _, s = make_system(2, 3)
    res = collect_until_complete(s, CFG, 1, 100_000)
    assert res.complete and res.observed == res.M == 4
    assert res.shots_used >= 4
