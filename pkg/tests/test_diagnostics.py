import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import cluster_fsolve, pij_fsolve
from qeclab.circuit import build_memory_circuit
from qeclab.decoding import build_hypergraph, dem_from_pij
from qeclab.decoding.dem import sample_hypergraph
from qeclab.diagnostics import (
    EdgeClass,
    calibration_report,
    class_means,
    classify_edges,
    cluster_prob,
    cluster_probs_from_counts,
    detect_bursts,
    detection_fraction,
    detections,
    pij,
    pij_closed_form,
)
from qeclab.geometry import Basis, surface_layout
from qeclab.noise import ComponentRates, build_noise_model
from qeclab.simulator import SampleBatch, apply_readout_error, sample


def bernoulli_processes(rng, shots, n, procs):
    """procs: {tuple of columns: probability}; each process XORs its columns."""
    m = np.zeros((shots, n), dtype=np.uint8)
    for cols, p in procs.items():
        fire = (rng.random(shots) < p).astype(np.uint8)
        for c in cols:
            m[:, c] ^= fire
    return m


def exact_pattern_counts(n, procs, total=10**12):
    """Pattern counts (bit j = column j) of independent XOR processes, scaled to ``total``."""
    dist = np.zeros(1 << n)
    dist[0] = 1.0
    for cols, p in procs.items():
        mask = sum(1 << c for c in cols)
        dist = (1 - p) * dist + p * dist[np.arange(1 << n) ^ mask]
    return dist * total


# ---------------------------------------------------------------------------
# detection events


def test_noiseless_detections_zero():
    c = build_memory_circuit(surface_layout(3), "X", 4)
    assert not detections(sample(c, None, 200, 1)).any()
    other = build_memory_circuit(surface_layout(3), "X", 3)
    with pytest.raises(ValueError):
        detections(sample(c, None, 10, 1), other)


def test_single_measurement_flip_timelike_pair():
    c = build_memory_circuit(surface_layout(3), "Z", 4)
    b = sample(c, None, 4, 1, readout=False)
    measure = set(c.layout.measure_qubits)
    quals = c.record_qubits()
    pairs = 0
    for r in range(c.num_records):
        if quals[r] not in measure:
            continue
        table = np.zeros((c.num_records, 4))
        table[:, 1] = 1.0
        table[r] = [1.0, 0.0, 0.5, 0.5]
        m = detections(apply_readout_error(b, table, 3))
        fired = np.flatnonzero(m[0])
        assert np.all(m == m[0])
        ids = [c.detectors[i].id for i in fired]
        if len(ids) == 1:
            # time boundary: the stabilizer has no detector in the neighbouring round
            rounds = [d.id.round for d in c.detectors if d.id.stabilizer_index == ids[0].stabilizer_index]
            assert ids[0].round in (min(rounds), max(rounds))
            continue
        pairs += 1
        assert len(ids) == 2 and ids[0].stabilizer_index == ids[1].stabilizer_index
        assert ids[1].round == ids[0].round + 1
    assert pairs >= 8 * (c.rounds - 2)


def test_data_z_error_spacelike_pair():
    lay = surface_layout(3)
    q = next(q for q in lay.data_qubits if sum(q in s.support for s in lay.stabilizers) == 4)
    rates = ComponentRates(**{**ComponentRates.zero().as_dict(), "overrides": {f"data_idle@{q.row},{q.col}": 0.01}})
    c = build_memory_circuit(lay, "Z", 3)
    m = detections(sample(c, build_noise_model(rates), 20000, 4))
    xdet = np.array([lay.stabilizers[d.id.stabilizer_index].basis == Basis.X for d in c.detectors])
    xnbrs = {i for i, s in enumerate(lay.stabilizers) if s.basis == Basis.X and q in s.support}
    seen = 0
    for row in m[m[:, xdet].sum(axis=1) == 2]:
        ids = [c.detectors[i].id for i in np.flatnonzero(row & xdet)]
        if ids[0].round == ids[1].round:
            assert {i.stabilizer_index for i in ids} == xnbrs
            seen += 1
    assert seen > 50


def test_detection_fraction_trivial():
    c = build_memory_circuit(surface_layout(3), "Z", 2)
    D = len(c.detectors)
    f = detection_fraction(np.zeros((10, D), np.uint8), c)
    assert not f.per_detector.any() and all(v == 0 for v in f.by_weight.values())
    m = np.zeros((10, D), np.uint8)
    m[:5, 3] = 1
    f = detection_fraction(m, c)
    assert f.per_detector[3] == 0.5 and f.per_detector.sum() == 0.5
    assert set(f.by_weight) == {2, 4}
    with pytest.raises(ValueError):
        detection_fraction(np.zeros((10, D + 1), np.uint8), c)


# ---------------------------------------------------------------------------
# p_ij


@given(st.floats(0.001, 0.2), st.floats(0.001, 0.2), st.floats(0.0, 0.2))
def test_pij_closed_form_vs_fsolve(pi, pj, p):
    xi = pi * (1 - p) + p * (1 - pi)
    xj = pj * (1 - p) + p * (1 - pj)
    xij = p * (1 - pi) * (1 - pj) + (1 - p) * pi * pj
    sol, ok = pij_fsolve(xi, xj, xij)
    assert ok
    assert float(pij_closed_form(xi, xj, xij)) == pytest.approx(sol[2], abs=1e-8)
    assert float(pij_closed_form(xi, xj, xij)) == pytest.approx(p, abs=1e-8)


def test_pij_independent_columns_zero():
    assert float(pij_closed_form(0.1, 0.1, 0.01)) == pytest.approx(0.0, abs=1e-12)
    assert np.isnan(pij_closed_form(0.5, 0.5, 0.25))


def test_pij_recovers_joint_flip(rng):
    m = bernoulli_processes(rng, 1_000_000, 2, {(0,): 0.02, (1,): 0.02, (0, 1): 0.05})
    assert pij(m)[0, 1] == pytest.approx(0.05, rel=0.1)


def test_pij_symmetric_in_range(rng):
    m = (rng.random((5000, 12)) < rng.uniform(0, 0.6, 12)).astype(np.uint8)
    p = pij(m)
    ok = ~np.isnan(p)
    assert np.array_equal(ok, ok.T)
    assert np.allclose(p[ok], p.T[ok])
    assert np.all((p[ok] >= 0) & (p[ok] <= 0.5 + 1e-12) | np.eye(12, dtype=bool)[ok])


def test_pij_600_square():
    c = build_memory_circuit(surface_layout(5), "Z", 25)
    m = detections(sample(c, build_noise_model(ComponentRates()), 500, 1))
    p = pij(m)
    assert p.shape == (600, 600)
    assert np.allclose(np.nan_to_num(p), np.nan_to_num(p.T))


# ---------------------------------------------------------------------------
# clusters


def test_cluster_three_body_system_size():
    counts = exact_pattern_counts(3, {(0,): 0.1})
    assert len(cluster_probs_from_counts(counts)) == 7


@pytest.mark.parametrize("n", [2, 3, 4])
def test_cluster_vs_fsolve(rng, n):
    subsets = [s for k in range(1, n + 1) for s in itertools.combinations(range(n), k)]
    procs = {s: float(rng.uniform(0.0, 0.08)) for s in subsets}
    counts = exact_pattern_counts(n, procs)
    ours = cluster_probs_from_counts(counts)
    # the oracle reads patterns with node i at bit n-1-i
    perm = [sum(((k >> i) & 1) << (n - 1 - i) for i in range(n)) for k in range(1 << n)]
    theirs_counts = np.zeros(1 << n)
    theirs_counts[perm] = counts
    ref, ok = cluster_fsolve(theirs_counts, n)
    assert ok
    for s in subsets:
        mask = sum(1 << i for i in s)
        assert ours[mask - 1] == pytest.approx(ref[s], abs=1e-8)
        assert ours[mask - 1] == pytest.approx(procs[s], abs=1e-8)


def test_cluster_independent_columns_zero():
    counts = exact_pattern_counts(3, {(0,): 0.1, (1,): 0.2, (2,): 0.05})
    assert cluster_probs_from_counts(counts)[-1] == pytest.approx(0.0, abs=1e-10)


def test_cluster_recovers_three_body(rng):
    m = bernoulli_processes(rng, 1_000_000, 3, {(0,): 0.03, (1,): 0.02, (2,): 0.04, (0, 1, 2): 0.05})
    assert cluster_prob(m, [0, 1, 2]) == pytest.approx(0.05, rel=0.1)


def test_cluster_pair_consistent_with_pij(rng):
    m = bernoulli_processes(rng, 200_000, 4, {(0,): 0.03, (1,): 0.05, (0, 1): 0.04, (2, 3): 0.02, (1, 2): 0.01})
    p = pij(m)
    for i, j in itertools.combinations(range(4), 2):
        assert cluster_prob(m, [i, j]) == pytest.approx(p[i, j], abs=1e-9)
    with pytest.raises(ValueError):
        cluster_prob(m, [0, 0])
    with pytest.raises(ValueError):
        cluster_prob(m, list(range(6)))


# ---------------------------------------------------------------------------
# calibration


def test_dem_from_pij_floor():
    ansatz = build_hypergraph(2, [((0,), 0, 0.05), ((0, 1), 0, 0.05), ((1,), 1, 0.05)])
    rng = np.random.default_rng(0)
    m = bernoulli_processes(rng, 200_000, 2, {(0,): 0.001, (1,): 0.03})
    h = dem_from_pij(ansatz, m, floor=0.01)
    p = {e.detectors: e.p for e in h.edges}
    assert p[(0,)] == 0.01
    assert p[(0, 1)] == 0.01
    assert p[(1,)] == pytest.approx(0.03, rel=0.1)


def test_dem_from_pij_independent_columns_floored(rng):
    ansatz = build_hypergraph(3, [((0, 1), 0, 0.05), ((1, 2), 0, 0.05), ((0,), 1, 0.05), ((2,), 0, 0.05)])
    m = bernoulli_processes(rng, 100_000, 3, {(0,): 0.05, (1,): 0.05, (2,): 0.05})
    h = dem_from_pij(ansatz, m, floor=1e-3)
    for e in h.edges:
        if len(e.detectors) == 2:
            assert e.p <= 1e-3 + 3 * np.sqrt(0.05 / 100_000)


def test_dem_from_pij_round_trip():
    mech = [((0,), 1, 0.02), ((0, 1), 0, 0.06), ((1, 2), 0, 0.04), ((2, 3), 0, 0.08),
            ((3,), 0, 0.03), ((1, 2, 3), 0, 0.05), ((0, 3), 1, 0.02)]
    h = build_hypergraph(4, mech)
    n = 1_000_000
    det, _ = sample_hypergraph(h, n, 13)
    back = dem_from_pij(h, det, floor=1e-6)
    assert calibration_report(back)["failures"] == 0
    for e, f in zip(h.edges, back.edges):
        assert e.detectors == f.detectors
        # generous bound: the cluster estimator's variance exceeds the single-Bernoulli one
        assert abs(f.p - e.p) < 3 * 4 * np.sqrt(e.p * (1 - e.p) / n), e


def test_dem_from_pij_rejects_mismatch():
    h = build_hypergraph(3, [((0,), 0, 0.1)])
    with pytest.raises(ValueError):
        dem_from_pij(h, np.zeros((10, 4), np.uint8))


# ---------------------------------------------------------------------------
# edge classes and bursts


def test_classify_edges_basic():
    c = build_memory_circuit(surface_layout(3), "Z", 4)
    cls = classify_edges(c.layout, c)
    for (i, j), k in cls.items():
        a, b = c.detectors[i].id, c.detectors[j].id
        if k == EdgeClass.T:
            assert a.stabilizer_index == b.stabilizer_index and abs(a.round - b.round) == 1
        if k in (EdgeClass.SX, EdgeClass.SZ):
            assert a.round == b.round
        if a.stabilizer_index == b.stabilizer_index and abs(a.round - b.round) == 1:
            assert k == EdgeClass.T
    assert {EdgeClass.T, EdgeClass.SX, EdgeClass.SZ, EdgeClass.ST} <= set(cls.values())


def test_class_means_pauli_sim():
    c = build_memory_circuit(surface_layout(5), "Z", 10)
    m = detections(sample(c, build_noise_model(ComponentRates()), 100_000, 1))
    means = class_means(pij(m), classify_edges(c.layout, c))
    assert means["T"] == pytest.approx(3.0e-2, rel=0.1)
    assert means["STprime"] < 1e-3
    assert means["ST"] > 10 * means["STprime"]


def test_bursts():
    rng = np.random.default_rng(3)
    m = (rng.random((5000, 100)) < 0.1).astype(np.uint8)
    rep = detect_bursts(m, 6.0)
    assert len(rep.flagged) == 0 and rep.removed_fraction == 0.0
    m[123] = 1
    rep = detect_bursts(m, 6.0)
    assert list(rep.flagged) == [123]
    assert rep.filtered.shape == (4999, 100)
    assert rep.removed_fraction == pytest.approx(1 / 5000)
    with pytest.raises(ValueError):
        detect_bursts(m[:50])


def test_even_odd_calibration_independence():
    from qeclab.analysis import fit_epsilon
    from qeclab.cli import calibrated_failures
    from qeclab.decoding import dem_from_noise, make_decoder
    from qeclab.simulator import sample_detection_events

    nm = build_noise_model(ComponentRates())
    shots = 100_000
    same, split = [], []
    for r in (3, 5, 7, 9):
        c = build_memory_circuit(surface_layout(3), "Z", r)
        h = dem_from_noise(c, nm)
        rounds = np.array([d.id.round for d in c.detectors])
        det, obs = sample_detection_events(c, nm, shots, r)
        hin = dem_from_pij(h, det, detector_rounds=rounds)
        f_in = np.count_nonzero(make_decoder(hin, "correlated").decode_batch(det) ^ obs)
        f_split = calibrated_failures(h, det, obs, "correlated", rounds)
        same.append((r, f_in / shots, shots))
        split.append((r, f_split / shots, shots))
    a, b = fit_epsilon(same).epsilon, fit_epsilon(split).epsilon
    assert abs(b / a - 1) < 0.01
