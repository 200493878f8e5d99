"""Error hypergraphs (detector error models) and their construction.

Faults are propagated backwards: each detector and the observable are
pulled back through the Clifford circuit to give, at every noise site, the
set of detectors an X or Z fault there would flip.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ..circuit import Circuit
from ..geometry import Basis, CodeKind
from ..noise import NoiseAssignment, NoiseModel
from ..simulator.program import OP_CZ, OP_H, OP_M, OP_N1, OP_N2, OP_R, compile_program

_PAULI_BITS = {"I": 0, "X": 1, "Z": 2, "Y": 3}


def xor_prob(p1: float, p2: float) -> float:
    """Probability that exactly one of two independent mechanisms fires."""
    return p1 * (1 - p2) + p2 * (1 - p1)


@dataclass(frozen=True)
class Hyperedge:
    detectors: tuple[int, ...]
    obs: int
    p: float


@dataclass(frozen=True)
class ErrorHypergraph:
    """Detectors as vertices and probability-weighted fault mechanisms as hyperedges.

    ``detector_basis[i]`` is 0 for X-type and 1 for Z-type detectors; ``basis`` is the
    memory basis (the observable belongs to the graph of that basis).
    """

    num_detectors: int
    edges: tuple[Hyperedge, ...]
    detector_basis: np.ndarray | None = field(default=None, compare=False)
    basis: Basis = Basis.Z

    def __post_init__(self):
        for e in self.edges:
            if not e.detectors:
                raise ValueError("hyperedge with empty detector set")
            if not 0 < e.p <= 0.5 + 1e-12:
                raise ValueError(f"hyperedge probability {e.p} outside (0, 0.5]")
            if e.detectors[-1] >= self.num_detectors or e.detectors[0] < 0:
                raise ValueError("hyperedge references an unknown detector")

    def __len__(self) -> int:
        return len(self.edges)

    @cached_property
    def priors(self) -> np.ndarray:
        return np.array([e.p for e in self.edges], dtype=float)

    @cached_property
    def obs_flips(self) -> np.ndarray:
        return np.array([e.obs for e in self.edges], dtype=np.uint8)

    @cached_property
    def check_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR (offsets, detector indices) of each hyperedge."""
        offs = np.zeros(len(self.edges) + 1, dtype=np.int64)
        idx = []
        for i, e in enumerate(self.edges):
            idx.extend(e.detectors)
            offs[i + 1] = len(idx)
        return offs, np.asarray(idx, dtype=np.int64)

    def dense_check(self) -> np.ndarray:
        h = np.zeros((self.num_detectors, len(self.edges)), dtype=np.uint8)
        for j, e in enumerate(self.edges):
            h[list(e.detectors), j] = 1
        return h

    def with_probabilities(self, p) -> "ErrorHypergraph":
        p = np.clip(np.asarray(p, dtype=float), 1e-15, 0.5)
        edges = tuple(Hyperedge(e.detectors, e.obs, float(q)) for e, q in zip(self.edges, p))
        return ErrorHypergraph(self.num_detectors, edges, self.detector_basis, self.basis)


def build_hypergraph(
    num_detectors: int, mechanisms, detector_basis=None, basis: Basis = Basis.Z
) -> ErrorHypergraph:
    """Bin (detectors, obs, p) mechanisms by (detector set, obs) with XOR-probability merging."""
    bins: dict[tuple, float] = {}
    for dets, obs, p in mechanisms:
        if p <= 0:
            continue
        key = (tuple(sorted(dets)), int(obs))
        if not key[0]:
            continue
        bins[key] = xor_prob(bins[key], p) if key in bins else p
    edges = tuple(Hyperedge(k[0], k[1], float(min(v, 0.5))) for k, v in sorted(bins.items()) if v > 0)
    return ErrorHypergraph(num_detectors, edges, detector_basis, Basis(basis))


def detector_bases(circuit: Circuit) -> np.ndarray:
    layout = circuit.layout
    if layout.kind == CodeKind.REPETITION:
        return np.ones(len(circuit.detectors), dtype=np.uint8)
    return np.array(
        [1 if layout.stabilizers[d.id.stabilizer_index].basis == Basis.Z else 0 for d in circuit.detectors],
        dtype=np.uint8,
    )


def _pauli_codes(ch, fold_leakage: bool) -> list[tuple[int, float]]:
    dist = ch.computational_pauli()
    ar = ch.arity
    out: dict[int, float] = {}
    for name, q in dist.items():
        code = 0
        for j, letter in enumerate(name):
            code |= _PAULI_BITS[letter] << (2 * j)
        if code and q > 0:
            out[code] = out.get(code, 0.0) + q
    leak = ch.leakage_mass()
    if fold_leakage and leak > 0:
        n_err = 4**ar - 1
        for code in range(1, 4**ar):
            out[code] = out.get(code, 0.0) + leak / n_err
    return sorted(out.items())


def dem_from_noise(circuit: Circuit, noise: NoiseModel | NoiseAssignment, *, fold_leakage: bool = True) -> ErrorHypergraph:
    """Propagate every elementary Pauli fault and bin the effects into a hypergraph."""
    assignment = noise.assign(circuit) if isinstance(noise, NoiseModel) else noise
    prog = compile_program(circuit, assignment)
    D = len(circuit.detectors)
    obs_bit = 1 << D
    rec_mask = [0] * prog.n_records
    for i, det in enumerate(circuit.detectors):
        for r in det.records:
            rec_mask[r] ^= 1 << i
    for r in circuit.observable:
        rec_mask[r] ^= obs_bit

    chan_codes = [_pauli_codes(assignment.channels[name], fold_leakage) for name in prog.channel_names]
    n = prog.n_qubits
    sx = [0] * n
    sz = [0] * n
    acc: dict[int, float] = {}

    def add(mask: int, p: float):
        if mask and p > 0:
            acc[mask] = xor_prob(acc[mask], p) if mask in acc else p

    for r in range(prog.n_records):
        p = 0.5 * (prog.readout_one[r, 0] + 1.0 - prog.readout_one[r, 1])
        add(rec_mask[r], p)

    ops = prog.ops
    for k in range(len(ops) - 1, -1, -1):
        op, a, b, arg = (int(v) for v in ops[k])
        if op == OP_H:
            sx[a], sz[a] = sz[a], sx[a]
        elif op == OP_CZ:
            sx[a] ^= sz[b]
            sx[b] ^= sz[a]
        elif op == OP_M:
            sx[a] ^= rec_mask[arg]
        elif op == OP_R:
            sx[a] = 0
            sz[a] = 0
        elif op == OP_N1 or op == OP_N2:
            targets = (a,) if op == OP_N1 else (a, b)
            for code, p in chan_codes[arg]:
                mask = 0
                for j, q in enumerate(targets):
                    c = (code >> (2 * j)) & 3
                    if c & 1:
                        mask ^= sx[q]
                    if c & 2:
                        mask ^= sz[q]
                add(mask, p)

    mechanisms = []
    undetectable = 0.0
    for mask, p in acc.items():
        obs = (mask >> D) & 1
        dm = mask & (obs_bit - 1)
        if not dm:
            if obs:
                undetectable = xor_prob(undetectable, p)
            continue
        dets = []
        i = 0
        while dm:
            if dm & 1:
                dets.append(i)
            dm >>= 1
            i += 1
        mechanisms.append((dets, obs, p))
    h = build_hypergraph(D, mechanisms, detector_bases(circuit), circuit.basis)
    object.__setattr__(h, "_undetectable", undetectable)
    return h


def undetectable_logical_probability(h: ErrorHypergraph) -> float:
    return getattr(h, "_undetectable", 0.0)


# ---------------------------------------------------------------------------
# text format: one hyperedge per line, "error(<p>) D<i> D<j> ... [L0]"


def dem_to_text(h: ErrorHypergraph) -> str:
    lines = [f"# detectors {h.num_detectors} basis {h.basis.value}"]
    if h.detector_basis is not None:
        lines.append("# detector_basis " + "".join(str(int(b)) for b in h.detector_basis))
    for e in h.edges:
        parts = [f"error({float(e.p)!r})"] + [f"D{d}" for d in e.detectors]
        if e.obs:
            parts.append("L0")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def dem_from_text(text: str) -> ErrorHypergraph:
    num = None
    basis = Basis.Z
    dbasis = None
    mechanisms = []
    max_det = -1
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            toks = line[1:].split()
            if toks and toks[0] == "detectors":
                num = int(toks[1])
                if len(toks) >= 4 and toks[2] == "basis":
                    basis = Basis(toks[3])
            elif toks and toks[0] == "detector_basis":
                dbasis = np.array([int(c) for c in toks[1]], dtype=np.uint8)
            continue
        toks = line.split()
        if not toks[0].startswith("error(") or not toks[0].endswith(")"):
            raise ValueError(f"malformed DEM line: {raw!r}")
        p = float(toks[0][6:-1])
        dets = []
        obs = 0
        for t in toks[1:]:
            if t.startswith("D"):
                dets.append(int(t[1:]))
            elif t == "L0":
                obs ^= 1
            else:
                raise ValueError(f"malformed DEM token {t!r}")
        if dets != sorted(dets):
            raise ValueError("detectors must be listed in ascending order")
        max_det = max(max_det, max(dets) if dets else -1)
        mechanisms.append((dets, obs, p))
    if num is None:
        num = max_det + 1
    return build_hypergraph(num, mechanisms, dbasis, basis)


def sample_hypergraph(h: ErrorHypergraph, shots: int, seed: int, chunk: int = 65536) -> tuple[np.ndarray, np.ndarray]:
    """Sample (detection events, observable flips) with every hyperedge firing independently."""
    rng = np.random.default_rng(seed)
    H = h.dense_check().T.astype(np.int32)
    L = h.obs_flips.astype(np.int32)
    det = np.empty((shots, h.num_detectors), dtype=np.uint8)
    obs = np.empty(shots, dtype=np.uint8)
    for lo in range(0, shots, chunk):
        n = min(chunk, shots - lo)
        fire = (rng.random((n, len(h.edges))) < h.priors).astype(np.int32)
        det[lo : lo + n] = (fire @ H) & 1
        obs[lo : lo + n] = (fire @ L) & 1
    return det, obs
