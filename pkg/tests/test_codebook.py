import numpy as np
import pytest

import zerorate as zr
from zerorate.codebook import CandidateSet, pairwise_path_distances
from zerorate.errors import ValidationError

from conftest import make_isi
from oracles import count_euler_circuits


def reg_q(a, b):
    return np.array([a, b, b, 1.0 - a - 2 * b])


def check_type(spec, n, q):
    pairs = spec.pairs
    assert spec.counts.sum() == n
    out_d = np.bincount(pairs.tails, weights=spec.counts, minlength=pairs.n_states)
    in_d = np.bincount(pairs.heads, weights=spec.counts, minlength=pairs.n_states)
    assert (out_d == in_d).all()
    assert np.abs(spec.counts - n * q).max() <= len(pairs)


# ---------------------------------------------------------------- round_type

def test_round_exact_rationals_uniform(order1):
    _, pairs = order1
    q = zr.PairDistribution(pairs, np.full(4, 0.25))
    spec = zr.round_type(q, 8)
    assert spec.counts.tolist() == [2, 2, 2, 2]


def test_round_exact_rationals_asymmetric(order1):
    _, pairs = order1
    q = zr.PairDistribution(pairs, np.array([0.3, 0.2, 0.2, 0.3]))
    spec = zr.round_type(q, 10)
    assert spec.counts.tolist() == [3, 2, 2, 3]


def test_round_inexact_balanced_within_bound(order1):
    _, pairs = order1
    qv = np.array([0.35, 0.15, 0.15, 0.35])
    q = zr.PairDistribution(pairs, qv)
    spec = zr.round_type(q, 10)
    check_type(spec, 10, qv)


def test_round_rejects_small_n(order1):
    _, pairs = order1
    q = zr.PairDistribution(pairs, np.full(4, 0.25))
    with pytest.raises(ValidationError):
        zr.round_type(q, 3)


def test_round_rejects_unreachable_total():
    # a 3-cycle only carries totals that are multiples of 3
    pairs = zr.FeasiblePairSet(3, np.array([0, 1, 2]), np.array([1, 2, 0]),
                               np.array([0, 0, 0]))
    q = zr.PairDistribution(pairs, np.full(3, 1 / 3))
    spec = zr.round_type(q, 9)
    assert spec.counts.tolist() == [3, 3, 3]
    with pytest.raises(ValidationError):
        zr.round_type(q, 10)


def test_round_random_circulations(order2):
    _, pairs = order2
    rng = np.random.default_rng(12)
    from zerorate.exponent import component_polytope
    poly = component_polytope(pairs, np.arange(len(pairs)))
    for trial in range(40):
        q = poly.project(rng.dirichlet(np.ones(len(pairs))))
        q = 0.9 * q + 0.1 / len(pairs)  # keep the support connected
        q = zr.PairDistribution(pairs, q)
        n = int(rng.integers(len(pairs), 200))
        spec = zr.round_type(q, n)
        check_type(spec, n, q.q)


# -------------------------------------------------------------- euler_circuit

def test_euler_counts_exact_unit(order1):
    _, pairs = order1
    spec = zr.MarkovTypeSpec(pairs, np.array([1, 1, 1, 1]), 4)
    path = zr.euler_circuit(spec, anchor=0, seed=0)
    assert len(path) == 4 and path[0] == 0
    lookup = pairs.index_lookup()
    arcs = lookup[path, np.roll(path, -1)]
    assert sorted(arcs.tolist()) == [0, 1, 2, 3]


def test_euler_single_self_loop():
    pairs = zr.FeasiblePairSet(1, np.array([0]), np.array([0]), np.array([0]))
    spec = zr.MarkovTypeSpec(pairs, np.array([1]), 1)
    path = zr.euler_circuit(spec, anchor=0, seed=3)
    assert path.tolist() == [0]


def test_euler_multiplicity(order1):
    _, pairs = order1
    counts = np.array([2, 2, 2, 2])
    total = count_euler_circuits(pairs.tails, pairs.heads, counts, anchor=0)
    assert total > 1  # several distinct circuits exist at n = 8
    spec = zr.MarkovTypeSpec(pairs, counts, 8)
    seen = {tuple(zr.euler_circuit(spec, 0, seed).tolist()) for seed in range(12)}
    assert len(seen) > 1


def test_euler_determinism(order1):
    _, pairs = order1
    spec = zr.MarkovTypeSpec(pairs, np.array([3, 2, 2, 3]), 10)
    a = zr.euler_circuit(spec, 0, 42)
    b = zr.euler_circuit(spec, 0, 42)
    assert (a == b).all()


def test_euler_rejects_disconnected():
    pairs = zr.FeasiblePairSet(2, np.array([0, 1]), np.array([0, 1]),
                               np.array([0, 0]))
    with pytest.raises(ValidationError):
        zr.MarkovTypeSpec(pairs, np.array([2, 2]), 4)


# ------------------------------------------------------------- emit_codeword

def test_emit_codeword_example(order1):
    m, pairs = order1
    # states: 0 <-> level +1, 1 <-> level -1; path (-,-,+,+) emits (-,+,+,-)
    path = np.array([1, 1, 0, 0])
    x = zr.emit_codeword(path, m)
    vals = [m.values[i] for i in x]
    assert vals == [-1.0, 1.0, 1.0, -1.0]


def test_emit_constant_self_loop(order1):
    m, _ = order1
    path = np.zeros(6, dtype=np.int64)
    x = zr.emit_codeword(path, m)
    assert (x == m.recover[0]).all()


def test_emit_round_trip_many_seeds(order2):
    m, pairs = order2
    q = zr.PairDistribution(pairs, np.full(8, 1 / 8))
    spec = zr.round_type(q, 64)
    for seed in range(100):
        path = zr.euler_circuit(spec, 0, seed)
        x = zr.emit_codeword(path, m)
        s = path[0]
        for t in range(len(path)):
            nxt = int(m.next_state[s, x[t]])
            assert nxt == path[(t + 1) % len(path)]
            s = nxt


def test_emit_rejects_inconsistent(order2):
    m, _ = order2
    # states are 2-bit windows; (0,0) -> (1,1) skips a shift and cannot occur
    with pytest.raises(ValidationError):
        zr.emit_codeword(np.array([0, 3, 0]), m)


# ------------------------------------------------------------ build_ensemble

def test_ensemble_count(order1):
    _, pairs = order1
    q = zr.PairDistribution(pairs, np.full(4, 0.25))
    spec = zr.round_type(q, 16)
    cands = zr.build_ensemble(spec, M=4, n=16, seed=0, anchor=0)
    assert cands.paths.shape == (7, 16)
    assert (cands.paths[:, 0] == 0).all()


def test_ensemble_time_sharing_segments(order1):
    _, pairs = order1
    comp1 = zr.PairDistribution(pairs, np.full(4, 0.25))
    comp2 = zr.PairDistribution(pairs, np.array([0.5, 0.25, 0.25, 0.0]))
    plan = zr.TimeSharingPlan(np.array([0.5, 0.5]), (comp1, comp2), anchor=0)
    cands = zr.build_ensemble(plan, M=2, n=16, seed=1)
    assert cands.segment_lengths == (8, 8)
    assert cands.paths.shape == (3, 16)
    # each segment is closed at the anchor
    assert (cands.paths[:, 0] == 0).all()
    assert (cands.paths[:, 8] == 0).all()
    for spec, ell in zip(cands.certificate, cands.segment_lengths):
        assert spec.n == ell


def test_ensemble_segment_too_short(order1):
    _, pairs = order1
    comp = zr.PairDistribution(pairs, np.full(4, 0.25))
    plan = zr.TimeSharingPlan(np.array([0.9, 0.1]), (comp, comp), anchor=0)
    with pytest.raises(ValidationError):
        zr.build_ensemble(plan, M=2, n=20, seed=0)  # second segment length 2 < 4


def test_ensemble_type_exactness(order1):
    _, pairs = order1
    q = zr.PairDistribution(pairs, np.array([0.4, 0.2, 0.2, 0.2]))
    spec = zr.round_type(q, 40)
    cands = zr.build_ensemble(spec, M=3, n=40, seed=5, anchor=0)
    for row in cands.arc_paths:
        counts = np.bincount(row, minlength=4)
        assert (counts == spec.counts).all()


# ---------------------------------------------------------------- expurgate

def test_expurgate_single_codeword(order1):
    m, pairs = order1
    _, _, _, _, d, _ = make_isi([1.0, 0.5])
    q = zr.PairDistribution(pairs, np.full(4, 0.25))
    spec = zr.round_type(q, 16)
    cands = zr.build_ensemble(spec, M=1, n=16, seed=0, anchor=0)
    book = zr.expurgate(cands, d, M=1, machine=m)
    assert book.M == 1
    assert book.min_pair_distance == float("inf")


def test_expurgate_never_keeps_identical_pair(order1):
    m, pairs = order1
    _, _, _, _, d, _ = make_isi([1.0, 0.5])
    q = zr.PairDistribution(pairs, np.full(4, 0.25))
    spec = zr.round_type(q, 16)
    base = zr.build_ensemble(spec, M=2, n=16, seed=9, anchor=0)
    paths = base.paths.copy()
    paths[1] = paths[0]  # plant an identical pair among three candidates
    arcs = base.arc_paths.copy()
    arcs[1] = arcs[0]
    planted = CandidateSet(pairs, paths, arcs, base.certificate,
                           base.segment_lengths, 0, 9)
    book = zr.expurgate(planted, d, M=2, machine=m)
    assert book.min_pair_distance > 0.0  # the clones were never kept together


def test_expurgate_score_rule(order1):
    m, pairs = order1
    _, _, _, _, d, _ = make_isi([1.0, 0.5])
    q = zr.PairDistribution(pairs, np.full(4, 0.25))
    spec = zr.round_type(q, 24)
    cands = zr.build_ensemble(spec, M=3, n=24, seed=2, anchor=0)
    rho = 8.0
    book = zr.expurgate(cands, d, M=3, rho=rho, machine=m)
    dist = pairwise_path_distances(cands.arc_paths, d)
    scores = np.exp(-dist / rho).sum(axis=1) - 1.0
    kept = np.sort(np.argsort(scores, kind="stable")[:3])
    expect = cands.paths[kept]
    assert (book.state_paths == expect).all()
    # kept max score is at most the median of all candidate scores
    assert scores[kept].max() <= np.median(scores) + 1e-12


def test_expurgate_needs_enough_candidates(order1):
    m, pairs = order1
    _, _, _, _, d, _ = make_isi([1.0, 0.5])
    q = zr.PairDistribution(pairs, np.full(4, 0.25))
    spec = zr.round_type(q, 16)
    cands = zr.build_ensemble(spec, M=2, n=16, seed=0, anchor=0)
    with pytest.raises(ValidationError):
        zr.expurgate(cands, d, M=3, machine=m)


def test_cost_compliance(order1):
    m, pairs = order1
    cost = zr.CostModel(np.asarray(m.values) ** 2, 1.0)
    q = zr.PairDistribution(pairs, np.array([0.4, 0.2, 0.2, 0.2]))
    spec = zr.round_type(q, 50)
    assert spec.cost(cost) <= 50 * cost.gamma + 1e-9
    cands = zr.build_ensemble(spec, M=2, n=50, seed=0, anchor=0)
    for row in cands.paths:
        x = zr.emit_codeword(row, m)
        total = sum(cost.phi[i] for i in x)
        assert total <= 50 * cost.gamma + 1e-9


def test_blend_repairs_disconnected_argmax():
    _, m, pairs, _, d, cost = make_isi([1.0, 0.5])
    res = zr.maximize_e0(d, pairs, cost)
    assert not res.support_connected
    q, anchor, theta = zr.blend_for_construction(res.argmax, None, 512, None)
    assert theta > 0
    assert zr.support_is_connected(q, pairs)
    spec = zr.round_type(q, 512)
    assert (spec.counts > 0).sum() == 4


def test_min_distance_approaches_value_at_long_blocks():
    # the kept set's normalized distance converges to the exponent value
    _, m, pairs, _, d, cost = make_isi([1.0, 0.5])
    res = zr.maximize_e0(d, pairs, cost)
    n = 16384
    q, anchor, _ = zr.blend_for_construction(res.argmax, None, n, None)
    spec = zr.round_type(q, n)
    cands = zr.build_ensemble(spec, M=4, n=n, seed=0, anchor=anchor)
    book = zr.expurgate(cands, d, M=4, machine=m)
    assert book.min_pair_distance / n >= res.value - 0.05


def test_codebook_json_round_trip_fields(order1):
    m, pairs = order1
    _, _, _, _, d, _ = make_isi([1.0, 0.5])
    q = zr.PairDistribution(pairs, np.full(4, 0.25))
    spec = zr.round_type(q, 16)
    cands = zr.build_ensemble(spec, M=2, n=16, seed=0, anchor=0)
    book = zr.expurgate(cands, d, M=2, machine=m)
    doc = book.to_json_dict()
    assert set(doc) == {"n", "M", "alphabet", "codewords", "state_paths",
                        "type_counts", "min_pair_distance", "seed", "rho"}
    assert doc["n"] == 16 and doc["M"] == 2
    assert len(doc["codewords"]) == 2 and len(doc["codewords"][0]) == 16
