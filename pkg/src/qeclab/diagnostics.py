"""Detection events, detection fractions, p_ij correlations, cluster probabilities and burst filtering."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numba import njit

from .circuit import Circuit
from .geometry import CodeKind, CodeLayout
from .simulator import SampleBatch, detection_events


class EdgeClass(str, Enum):
    T = "T"
    SX = "SX"
    SZ = "SZ"
    ST = "ST"
    STPRIME = "STprime"
    OTHER = "Other"


def detections(batch: SampleBatch, circuit: Circuit | None = None) -> np.ndarray:
    """Shots x detectors matrix; detector order follows circuit.detectors (round-major)."""
    circuit = circuit or batch.circuit
    if batch.records.shape[1] != circuit.num_records:
        raise ValueError(f"batch has {batch.records.shape[1]} records, circuit expects {circuit.num_records}")
    if batch.symbols and np.any(batch.records > 1):
        raise ValueError("batch holds leaked symbols; apply readout confusion first")
    return detection_events(circuit, batch.records)[0]


@dataclass
class DetectionFractions:
    per_detector: np.ndarray
    by_weight: dict  # stabilizer weight -> mean over its detectors
    by_round: np.ndarray  # mean over detectors of each round
    bulk_by_weight: dict = field(default_factory=dict)  # same, excluding first and last detector rounds


def detection_fraction(m: np.ndarray, circuit: Circuit) -> DetectionFractions:
    m = np.asarray(m)
    if m.shape[0] < 1:
        raise ValueError("need at least one shot")
    if m.shape[1] != len(circuit.detectors):
        raise ValueError("detector count does not match circuit")
    frac = m.mean(axis=0)
    layout = circuit.layout
    weights = np.array([len(layout.stabilizers[d.id.stabilizer_index].support) for d in circuit.detectors])
    rounds = np.array([d.id.round for d in circuit.detectors])
    by_w = {int(w): float(frac[weights == w].mean()) for w in np.unique(weights)}
    bulk = (rounds > rounds.min()) & (rounds < rounds.max())
    bulk_w = {int(w): float(frac[bulk & (weights == w)].mean()) for w in np.unique(weights[bulk])} if bulk.any() else {}
    by_r = np.array([frac[rounds == r].mean() for r in range(rounds.max() + 1)]) if len(rounds) else np.zeros(0)
    return DetectionFractions(frac, by_w, by_r, bulk_w)


# ---------------------------------------------------------------------------
# p_ij


def pij_closed_form(xi, xj, xij):
    """Joint-mechanism probability from <x_i>, <x_j>, <x_i x_j>; NaN where degenerate."""
    xi, xj, xij = (np.asarray(a, dtype=float) for a in (xi, xj, xij))
    den = 1 - 2 * xi - 2 * xj + 4 * xij
    with np.errstate(divide="ignore", invalid="ignore"):
        rad = 1 - 4 * (xij - xi * xj) / den
        out = 0.5 - 0.5 * np.sqrt(np.maximum(rad, 0.0))
    out = np.where(np.abs(den) < 1e-12, np.nan, out)
    out = np.where(np.isnan(out), np.nan, np.clip(out, 0.0, 0.5))
    return out


def pij(m: np.ndarray) -> np.ndarray:
    """Symmetric p_ij matrix with <x_i> on the diagonal; degenerate entries are NaN."""
    m = np.asarray(m)
    n = m.shape[0]
    if n < 2:
        raise ValueError("need at least two shots")
    x = m.astype(np.float32)
    xi = x.mean(axis=0).astype(float)
    xx = (x.T @ x).astype(float) / n
    out = pij_closed_form(xi[:, None], xi[None, :], xx)
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, xi)
    return out


# ---------------------------------------------------------------------------
# cluster probabilities


@njit(cache=True)
def _pattern_counts(cols, idx):
    """Histogram of the bit pattern of columns idx over all shots (cols is detectors x shots)."""
    n = idx.shape[0]
    counts = np.zeros(1 << n, dtype=np.int64)
    shots = cols.shape[1]
    for s in range(shots):
        k = 0
        for j in range(n):
            k |= np.int64(cols[idx[j], s]) << j
        counts[k] += 1
    return counts


def _parity_matrix(n: int) -> np.ndarray:
    """M[T-1, S-1] = |S & T| mod 2 over nonempty subsets encoded as bitmasks."""
    k = np.arange(1, 1 << n)
    a = k[:, None] & k[None, :]
    par = np.zeros_like(a)
    for b in range(n):
        par ^= (a >> b) & 1
    return par.astype(float)


_PARITY_INV: dict[int, np.ndarray] = {}


def _parity_inverse(n: int) -> np.ndarray:
    if n not in _PARITY_INV:
        _PARITY_INV[n] = np.linalg.inv(_parity_matrix(n))
    return _PARITY_INV[n]


class ClusterSolveError(ValueError):
    pass


def cluster_probs_from_counts(counts: np.ndarray) -> np.ndarray:
    """All 2^n - 1 process probabilities (indexed by subset bitmask - 1) from pattern counts.

    For independent processes, E[(-1)^{x_T}] = prod over S with |S & T| odd of (1 - 2 p_S);
    the logs make this a linear system in ln(1 - 2 p_S).
    """
    counts = np.asarray(counts, dtype=float)
    n = int(round(np.log2(len(counts))))
    total = counts.sum()
    pat = np.arange(1 << n)
    moments = np.empty((1 << n) - 1)
    for t in range(1, 1 << n):
        par = np.zeros(len(pat), dtype=int)
        a = pat & t
        for b in range(n):
            par ^= (a >> b) & 1
        moments[t - 1] = np.dot(counts, 1 - 2 * par) / total
    if np.any(moments <= 0):
        raise ClusterSolveError("a parity moment is non-positive; the independent-process model has no solution")
    y = _parity_inverse(n) @ np.log(moments)
    return 0.5 * (1 - np.exp(np.minimum(y, 0.0)))


def cluster_prob(m: np.ndarray, nodes) -> float:
    """Probability of the single process flipping exactly ``nodes`` (2 <= n <= 5)."""
    nodes = list(nodes)
    if not 1 <= len(nodes) <= 5:
        raise ValueError("cluster size must be between 1 and 5")
    if len(set(nodes)) != len(nodes):
        raise ValueError("repeated detector in cluster")
    cols = np.ascontiguousarray(np.asarray(m, dtype=np.uint8).T)
    counts = _pattern_counts(cols, np.asarray(nodes, dtype=np.int64))
    return float(cluster_probs_from_counts(counts)[-1])


def dem_from_pij(ansatz, m: np.ndarray, floor: float = 1e-4, detector_rounds=None):
    """Recalibrate ansatz hyperedge probabilities from detection data.

    Clusters are solved largest first; each estimate has the contributions of
    ansatz hyperedges strictly containing it removed by XOR-subtraction. One-body
    entries, and two-body entries within one round (all two-body entries when
    ``detector_rounds`` is None), are floored at ``floor``. Clusters whose
    moment system fails, or with more than five detectors, keep the prior.
    """
    from .decoding.dem import ErrorHypergraph, Hyperedge

    m = np.asarray(m, dtype=np.uint8)
    if m.shape[1] != ansatz.num_detectors:
        raise ValueError(f"matrix has {m.shape[1]} detectors, ansatz has {ansatz.num_detectors}")
    cols = np.ascontiguousarray(m.T)
    groups: dict[tuple, list[int]] = {}
    for i, e in enumerate(ansatz.edges):
        groups.setdefault(e.detectors, []).append(i)
    est: dict[tuple, float] = {}
    failures = 0
    fallback = []
    by_size = sorted(groups, key=lambda s: (-len(s), s))
    supersets: dict[tuple, list[tuple]] = {s: [] for s in groups}
    sets = {s: frozenset(s) for s in groups}
    index: dict[int, list[tuple]] = {}
    for s in groups:
        for d in s:
            index.setdefault(d, []).append(s)
    for s in groups:
        cand = set(index[s[0]])
        for d in s[1:]:
            cand &= set(index[d])
        supersets[s] = [t for t in cand if len(t) > len(s) and sets[s] < sets[t]]
    for s in by_size:
        if len(s) > 5:
            est[s] = None
            fallback.append(s)
            continue
        try:
            counts = _pattern_counts(cols, np.asarray(s, dtype=np.int64))
            p = float(cluster_probs_from_counts(counts)[-1])
        except ClusterSolveError:
            est[s] = None
            failures += 1
            fallback.append(s)
            continue
        for t in supersets[s]:
            q = est.get(t)
            if q is None:
                q = sum(ansatz.edges[i].p for i in groups[t])
            if q >= 0.5:
                continue
            p = (p - q) / (1 - 2 * q)
        est[s] = p
    rounds = None if detector_rounds is None else np.asarray(detector_rounds)
    new_p = np.empty(len(ansatz.edges))
    for s, members in groups.items():
        total_prior = sum(ansatz.edges[i].p for i in members)
        p = est[s]
        if p is None:
            for i in members:
                new_p[i] = ansatz.edges[i].p
            continue
        floored = len(s) == 1 or (len(s) == 2 and (rounds is None or rounds[s[0]] == rounds[s[1]]))
        if floored:
            p = max(p, floor)
        p = min(max(p, 1e-15), 0.5)
        for i in members:
            new_p[i] = p * ansatz.edges[i].p / total_prior
    edges = tuple(Hyperedge(e.detectors, e.obs, float(min(max(q, 1e-15), 0.5))) for e, q in zip(ansatz.edges, new_p))
    h = ErrorHypergraph(ansatz.num_detectors, edges, ansatz.detector_basis, ansatz.basis)
    object.__setattr__(h, "_calibration", {"failures": failures, "fallback": len(fallback)})
    return h


def calibration_report(h) -> dict:
    return getattr(h, "_calibration", {"failures": 0, "fallback": 0})


# ---------------------------------------------------------------------------
# edge classes


def _neighbors_sharing_data(layout: CodeLayout) -> set[tuple[int, int]]:
    out = set()
    stabs = layout.stabilizers
    for a, b in itertools.combinations(range(len(stabs)), 2):
        if stabs[a].basis == stabs[b].basis and set(stabs[a].support) & set(stabs[b].support):
            out.add((a, b))
    return out


def classify_edges(layout: CodeLayout, circuit: Circuit, expected_pairs: set | None = None) -> dict:
    """Map (i, j), i < j, to an EdgeClass for every detector pair with round gap <= 2.

    ST pairs are those produced by single Pauli faults under a generic Pauli model
    (from the detector error model) with a round gap of one; pass ``expected_pairs``
    to override.
    """
    if layout.kind != CodeKind.SURFACE:
        raise ValueError("edge classes are defined for surface layouts")
    if expected_pairs is None:
        expected_pairs = expected_fault_pairs(circuit)
    share = _neighbors_sharing_data(layout)
    dets = circuit.detectors
    out = {}
    by_round: dict[int, list[int]] = {}
    for i, d in enumerate(dets):
        by_round.setdefault(d.id.round, []).append(i)
    for r, members in by_round.items():
        for dr in (0, 1, 2):
            others = by_round.get(r + dr, [])
            for i in members:
                for j in others:
                    if dr == 0 and j <= i:
                        continue
                    a, b = (i, j) if i < j else (j, i)
                    si, sj = dets[i].id.stabilizer_index, dets[j].id.stabilizer_index
                    if dr == 0:
                        key = (min(si, sj), max(si, sj))
                        if key in share:
                            cls = EdgeClass.SX if layout.stabilizers[si].basis.value == "X" else EdgeClass.SZ
                        else:
                            cls = EdgeClass.OTHER
                    elif dr == 1 and si == sj:
                        cls = EdgeClass.T
                    elif dr == 1 and (a, b) in expected_pairs:
                        cls = EdgeClass.ST
                    else:
                        cls = EdgeClass.STPRIME
                    out[(a, b)] = cls
    return out


def expected_fault_pairs(circuit: Circuit) -> set[tuple[int, int]]:
    """Detector pairs jointly flipped by some single Pauli fault of a generic Pauli model."""
    from .decoding.dem import dem_from_noise
    from .noise import ComponentRates, build_noise_model

    h = dem_from_noise(circuit, build_noise_model(ComponentRates(), "Pauli"))
    pairs = set()
    for e in h.edges:
        for a, b in itertools.combinations(e.detectors, 2):
            pairs.add((a, b))
    return pairs


def class_means(p: np.ndarray, classes: dict) -> dict:
    """Mean p_ij per edge class (NaN entries ignored)."""
    acc: dict[EdgeClass, list] = {}
    for (i, j), c in classes.items():
        acc.setdefault(c, []).append(p[i, j])
    return {c.value: float(np.nanmean(v)) if len(v) else float("nan") for c, v in acc.items()}


# ---------------------------------------------------------------------------
# bursts


@dataclass
class BurstReport:
    flagged: np.ndarray
    filtered: np.ndarray
    threshold: float

    @property
    def removed_fraction(self) -> float:
        n = len(self.filtered) + len(self.flagged)
        return len(self.flagged) / n if n else 0.0


def detect_bursts(m: np.ndarray, threshold_sigma: float = 6.0) -> BurstReport:
    """Flag shots whose detection count exceeds mean + threshold_sigma * std."""
    m = np.asarray(m)
    if m.shape[0] < 100:
        raise ValueError("burst detection needs at least 100 shots")
    counts = m.sum(axis=1, dtype=np.int64)
    thr = counts.mean() + threshold_sigma * counts.std()
    flagged = np.flatnonzero(counts > thr)
    keep = np.ones(len(counts), dtype=bool)
    keep[flagged] = False
    return BurstReport(flagged, m[keep], float(thr))
