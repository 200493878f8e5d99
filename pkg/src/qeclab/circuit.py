"""Memory-experiment circuits: initialization, stabilizer cycles, final readout, detectors."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .geometry import Basis, CodeKind, CodeLayout, DetectorId, QubitCoord


class Op(str, Enum):
    PREPZ = "PrepZ"
    X = "XGate"
    H = "Hadamard"
    CZ = "CZ"
    M = "Measure"
    R = "Reset"
    DDX = "DDX"


SINGLE_QUBIT_GATES = (Op.X, Op.H)


@dataclass(frozen=True)
class Instruction:
    kind: Op
    targets: tuple[QubitCoord, ...]

    def __post_init__(self):
        if self.kind == Op.CZ:
            if len(self.targets) % 2:
                raise ValueError("CZ needs target pairs")
            for a, b in self.pairs():
                if not a.adjacent(b):
                    raise ValueError(f"CZ on non-adjacent qubits {a} {b}")

    def pairs(self) -> list[tuple[QubitCoord, QubitCoord]]:
        t = self.targets
        return [(t[i], t[i + 1]) for i in range(0, len(t), 2)]


@dataclass(frozen=True)
class InitialBitstring:
    value: int
    width: int

    def __post_init__(self):
        if self.width < 1 or not 0 <= self.value < (1 << self.width):
            raise ValueError(f"bitstring value {self.value} out of range for width {self.width}")

    def bits(self) -> np.ndarray:
        return unpack_bitstring(self.value, width=self.width)

    def complement(self) -> "InitialBitstring":
        return InitialBitstring(((1 << self.width) - 1) ^ self.value, self.width)


@dataclass(frozen=True)
class Detector:
    id: DetectorId
    records: tuple[int, ...]
    ref: int


@dataclass(frozen=True)
class Circuit:
    layout: CodeLayout
    basis: Basis
    rounds: int
    init: InitialBitstring
    moments: tuple[tuple[Instruction, ...], ...]
    detectors: tuple[Detector, ...]
    observable: tuple[int, ...]
    observable_ref: int
    logical_value: int

    @property
    def num_records(self) -> int:
        return sum(len(ins.targets) for m in self.moments for ins in m if ins.kind == Op.M)

    def record_qubits(self) -> list[QubitCoord]:
        out = []
        for m in self.moments:
            for ins in m:
                if ins.kind == Op.M:
                    out.extend(ins.targets)
        return out

    def record_moments(self) -> list[int]:
        out = []
        for k, m in enumerate(self.moments):
            for ins in m:
                if ins.kind == Op.M:
                    out.extend([k] * len(ins.targets))
        return out

    def qubits(self) -> tuple[QubitCoord, ...]:
        return self.layout.all_qubits

    def gate_counts(self) -> Counter:
        c: Counter = Counter()
        for m in self.moments:
            for ins in m:
                c[ins.kind] += len(ins.pairs()) if ins.kind == Op.CZ else len(ins.targets)
        return c

    def detector_matrix(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR-style (offsets, record indices, refs) describing detector parities."""
        offs = np.zeros(len(self.detectors) + 1, dtype=np.int64)
        recs = []
        for i, det in enumerate(self.detectors):
            recs.extend(det.records)
            offs[i + 1] = len(recs)
        refs = np.array([det.ref for det in self.detectors], dtype=np.uint8)
        return offs, np.asarray(recs, dtype=np.int64), refs


def unpack_bitstring(value: int, d: int | None = None, *, width: int | None = None) -> np.ndarray:
    """Big-endian unpacking: the most significant bit belongs to the first data qubit.

    ``d`` selects the surface-code width d*d; pass ``width`` directly for other codes.
    """
    if width is None:
        if d is None:
            raise ValueError("need d or width")
        width = d * d
    if value < 0 or value >= (1 << width):
        raise ValueError(f"value {value} does not fit in {width} bits")
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


_REFERENCE_BITSTRINGS = {
    5: (1497382, 32057049, 12984827, 20569604, 10981887, 22572544, 7363158, 26191273, 7264790, 26289641),
    3: (22, 489, 198, 313, 167, 344, 112, 399, 110, 401),
}


def default_initial_bitstrings(
    d: int, kind: CodeKind | str = CodeKind.SURFACE, seed: int = 0
) -> list[InitialBitstring]:
    """Ten initial states: five random values each followed by its complement."""
    kind = CodeKind(kind)
    width = d * d if kind == CodeKind.SURFACE else d
    if kind == CodeKind.SURFACE and d in _REFERENCE_BITSTRINGS:
        return [InitialBitstring(v, width) for v in _REFERENCE_BITSTRINGS[d]]
    rng = np.random.default_rng([seed, d, width])
    out = []
    for _ in range(5):
        v = int(rng.integers(0, 1 << min(width, 62))) if width <= 62 else int(
            "".join(str(b) for b in rng.integers(0, 2, width)), 2
        )
        b = InitialBitstring(v, width)
        out += [b, b.complement()]
    return out


def _moment(*parts: tuple[Op, Iterable[QubitCoord]]) -> tuple[Instruction, ...]:
    out = []
    for kind, targets in parts:
        t = tuple(targets)
        if not t:
            continue
        if kind != Op.CZ:
            t = tuple(sorted(t))
        out.append(Instruction(kind, t))
    return tuple(out)


def _cz_layers(layout: CodeLayout) -> list[list[QubitCoord]]:
    layers: list[list[QubitCoord]] = [[] for _ in range(4)]
    for s in layout.stabilizers:
        for q, layer in zip(s.support, s.layers):
            layers[layer].extend((s.measure_qubit, q))
    return layers


def _surface_moments(layout: CodeLayout, basis: Basis, rounds: int, bits: np.ndarray) -> list:
    data = list(layout.data_qubits)
    meas = list(layout.measure_qubits)
    conj = layout.conjugated
    # Data qubits Hadamard-ed to enter / leave the basis-B stabilizer eigenbasis.
    if basis == Basis.Z:
        pattern = [q for q in data if q in conj]
    else:
        pattern = [q for q in data if q not in conj]
    czs = _cz_layers(layout)

    moments = [
        _moment((Op.PREPZ, data + meas)),
        _moment((Op.X, [q for q, b in zip(data, bits) if b])),
        _moment((Op.H, pattern)),
    ]
    for t in range(rounds):
        last = t == rounds - 1
        moments += [
            _moment((Op.H, meas), (Op.X, data)),
            _moment((Op.CZ, czs[0])),
            _moment((Op.H, data), (Op.X, meas)),
            _moment((Op.CZ, czs[1])),
            _moment((Op.X, data + meas)),
            _moment((Op.CZ, czs[2])),
            _moment((Op.H, data), (Op.X, meas)),
            _moment((Op.CZ, czs[3])),
        ]
        if not last:
            moments += [
                _moment((Op.H, meas), (Op.X, data)),
                _moment((Op.M, meas), (Op.DDX, data)),
                _moment((Op.R, meas)),
            ]
        else:
            moments += [
                _moment((Op.H, meas + pattern)),
                _moment((Op.M, data + meas)),
            ]
    return [m for m in moments if m]


def _repetition_moments(layout: CodeLayout, rounds: int, bits: np.ndarray) -> list:
    data = list(layout.data_qubits)
    meas = list(layout.measure_qubits)
    czs = [[], []]
    for s in layout.stabilizers:
        for q, layer in zip(s.support, s.layers):
            czs[layer].extend((s.measure_qubit, q))
    moments = [
        _moment((Op.PREPZ, data + meas)),
        _moment((Op.X, [q for q, b in zip(data, bits) if b])),
    ]
    for t in range(rounds):
        last = t == rounds - 1
        moments += [
            _moment((Op.H, meas), (Op.X, data)),
            _moment((Op.CZ, czs[0])),
            _moment((Op.X, data + meas)),
            _moment((Op.CZ, czs[1])),
        ]
        if not last:
            moments += [
                _moment((Op.H, meas), (Op.X, data)),
                _moment((Op.M, meas), (Op.DDX, data)),
                _moment((Op.R, meas)),
            ]
        else:
            moments += [
                _moment((Op.H, meas)),
                _moment((Op.M, data + meas)),
            ]
    return [m for m in moments if m]


def _record_index(moments) -> dict[tuple[int, QubitCoord], int]:
    """Map (measurement-moment ordinal, qubit) -> record index."""
    idx = {}
    k = 0
    ordinal = 0
    for m in moments:
        has_m = False
        for ins in m:
            if ins.kind == Op.M:
                has_m = True
                for q in ins.targets:
                    idx[(ordinal, q)] = k
                    k += 1
        if has_m:
            ordinal += 1
    return idx


def _detector_records(layout: CodeLayout, basis: Basis, rounds: int, rec) -> tuple[list, tuple[int, ...]]:
    same = layout.kind == CodeKind.REPETITION
    dets = []
    logical = layout.logical_z_support if basis == Basis.Z else layout.logical_x_support
    # ordinal of the final measurement moment (differs from rounds-1 only without measure qubits)
    final = max(o for o, _ in rec)
    for t in range(rounds + 1):
        for si, s in enumerate(layout.stabilizers):
            matched = same or s.basis == basis
            if not matched and (t == 0 or t == rounds):
                continue
            m = s.measure_qubit
            if t == 0:
                recs = (rec[(0, m)],)
            elif t < rounds:
                recs = (rec[(t - 1, m)], rec[(t, m)])
            else:
                recs = (rec[(final, m)],) + tuple(rec[(final, q)] for q in s.support)
            dets.append((DetectorId(t, si), tuple(sorted(recs))))
    obs = tuple(sorted(rec[(final, q)] for q in logical))
    return dets, obs


def build_memory_circuit(
    layout: CodeLayout, basis: Basis | str, rounds: int, init: InitialBitstring | int | None = None
) -> Circuit:
    basis = Basis(basis)
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    n = len(layout.data_qubits)
    if init is None:
        init = InitialBitstring(0, n)
    elif isinstance(init, int):
        init = InitialBitstring(init, n)
    if init.width != n:
        raise ValueError(f"initial bitstring width {init.width} != {n} data qubits")
    bits = init.bits()
    if layout.kind == CodeKind.REPETITION:
        if basis != Basis.Z:
            raise ValueError("repetition codes only support Z-basis memory")
        moments = _repetition_moments(layout, rounds, bits)
    else:
        moments = _surface_moments(layout, basis, rounds, bits)
    rec = _record_index(moments)
    dets, obs = _detector_records(layout, basis, rounds, rec)

    support = layout.logical_z_support if basis == Basis.Z else layout.logical_x_support
    didx = layout.data_index()
    logical_value = int(sum(int(bits[didx[q]]) for q in support) % 2)

    draft = Circuit(
        layout=layout,
        basis=basis,
        rounds=rounds,
        init=init,
        moments=tuple(moments),
        detectors=tuple(Detector(i, r, 0) for i, r in dets),
        observable=obs,
        observable_ref=0,
        logical_value=logical_value,
    )
    from .simulator.tableau import reference_records

    ref = reference_records(draft)
    detectors = tuple(Detector(d.id, d.records, int(ref[list(d.records)].sum() % 2)) for d in draft.detectors)
    obs_ref = int(ref[list(obs)].sum() % 2)
    return Circuit(
        layout=layout,
        basis=basis,
        rounds=rounds,
        init=init,
        moments=draft.moments,
        detectors=detectors,
        observable=obs,
        observable_ref=obs_ref,
        logical_value=logical_value,
    )


def validate_circuit(c: Circuit) -> list[str]:
    """Structural checks; returns human-readable violations (empty list means valid)."""
    problems = []
    for k, m in enumerate(c.moments):
        seen: Counter = Counter()
        for ins in m:
            seen.update(ins.targets)
        for q, n in seen.items():
            if n > 1:
                problems.append(f"moment {k}: qubit {q} targeted {n} times")
    nrec = c.num_records
    for det in c.detectors:
        for r in det.records:
            if r < 0 or r >= nrec:
                problems.append(f"detector {det.id}: record {r} outside 0..{nrec - 1}")
    for r in c.observable:
        if r < 0 or r >= nrec:
            problems.append(f"observable: record {r} outside 0..{nrec - 1}")

    # every measure qubit: measured once per cycle, reset after each non-final measurement
    meas = set(c.layout.measure_qubits)
    pending: dict[QubitCoord, bool] = {q: False for q in meas}
    counts: Counter = Counter()
    for k, m in enumerate(c.moments):
        for ins in m:
            if ins.kind == Op.M:
                for q in ins.targets:
                    if q in meas:
                        if pending[q]:
                            problems.append(f"moment {k}: {q} measured again without reset")
                        pending[q] = True
                        counts[q] += 1
            elif ins.kind == Op.R:
                for q in ins.targets:
                    if q in meas:
                        if not pending[q]:
                            problems.append(f"moment {k}: {q} reset without a preceding measurement")
                        pending[q] = False
    for q in meas:
        if counts[q] != c.rounds:
            problems.append(f"measure qubit {q} measured {counts[q]} times, expected {c.rounds}")
    return problems
