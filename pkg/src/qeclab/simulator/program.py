"""Flattening of (circuit, noise assignment) into integer arrays for the compiled engines."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channels import GPChannel
from ..circuit import Circuit, Op
from ..noise import NoiseAssignment, NoiseModel

OP_H, OP_X, OP_CZ, OP_M, OP_R, OP_N1, OP_N2, OP_NOP = range(8)
_LABEL_INDEX = {0: 0, 2: 1, 3: 2}
_LABEL_OF_INDEX = np.array([0, 2, 3], dtype=np.int64)
_PAULI_BITS = {"I": 0, "X": 1, "Z": 2, "Y": 3}


@dataclass
class Program:
    n_qubits: int
    qubits: list
    ops: np.ndarray  # (n_ops, 4): opcode, a, b, arg
    n_records: int
    ch_arity: np.ndarray
    ch_off: np.ndarray  # (n_channels * 9 + 1) offsets into outcome arrays
    out_cum: np.ndarray
    out_final: np.ndarray
    out_pauli: np.ndarray
    readout_one: np.ndarray  # (n_records, 4): P(recorded 1 | true symbol)
    channel_names: list
    leakage_mass: float

    @property
    def has_noise(self) -> bool:
        return bool(np.any((self.ops[:, 0] == OP_N1) | (self.ops[:, 0] == OP_N2)))


def _label_code(labels) -> int:
    return sum(_LABEL_INDEX[x] * 3**j for j, x in enumerate(labels))


def _pauli_code(init, final, pauli: str) -> int:
    """Two bits per device (x | z << 1); devices outside R get identity."""
    code = 0
    k = 0
    for j, (a, b) in enumerate(zip(init, final)):
        if a == 0 and b == 0:
            code |= _PAULI_BITS[pauli[k]] << (2 * j)
            k += 1
    return code


def _channel_tables(channels: list[GPChannel]):
    off = [0]
    cum, fin, pau = [], [], []
    for ch in channels:
        for idx in range(9):
            if ch.arity == 1 and idx >= 3:
                off.append(len(cum))
                continue
            digits = [idx // 3**j % 3 for j in range(ch.arity)]
            init = tuple(int(_LABEL_OF_INDEX[x]) for x in digits)
            acc = 0.0
            for final, p, dist in ch.outcomes(init):
                for pauli, q in sorted(dist.items()):
                    w = p * q
                    if w <= 0:
                        continue
                    acc += w
                    cum.append(acc)
                    fin.append(_label_code(final))
                    pau.append(_pauli_code(init, final, pauli))
            if cum and len(cum) > off[-1]:
                cum[-1] = 2.0  # guard against rounding at the top of the table
            off.append(len(cum))
    return (
        np.asarray(off, dtype=np.int64),
        np.asarray(cum, dtype=np.float64),
        np.asarray(fin, dtype=np.int64),
        np.asarray(pau, dtype=np.int64),
    )


def compile_program(circuit: Circuit, noise: NoiseModel | NoiseAssignment | None = None) -> Program:
    qubits = list(circuit.qubits())
    qi = {q: i for i, q in enumerate(qubits)}
    assignment = None
    if isinstance(noise, NoiseModel):
        assignment = noise.assign(circuit)
    elif isinstance(noise, NoiseAssignment):
        assignment = noise

    names: list[str] = []
    name_id: dict[str, int] = {}
    ops = []
    rec = 0
    for k, moment in enumerate(circuit.moments):
        for ins in moment:
            if ins.kind == Op.H:
                ops += [(OP_H, qi[q], 0, 0) for q in ins.targets]
            elif ins.kind == Op.X:
                ops += [(OP_X, qi[q], 0, 0) for q in ins.targets]
            elif ins.kind == Op.CZ:
                ops += [(OP_CZ, qi[a], qi[b], 0) for a, b in ins.pairs()]
            elif ins.kind == Op.M:
                for q in ins.targets:
                    ops.append((OP_M, qi[q], 0, rec))
                    rec += 1
            elif ins.kind in (Op.R, Op.PREPZ):
                ops += [(OP_R, qi[q], 0, 0) for q in ins.targets]
            elif ins.kind == Op.DDX:
                ops += [(OP_NOP, qi[q], 0, 0) for q in ins.targets]
            else:
                raise ValueError(f"non-Clifford or unknown instruction {ins.kind}")
        if assignment is not None:
            for name, targets in assignment.after[k]:
                if name not in name_id:
                    name_id[name] = len(names)
                    names.append(name)
                ch = assignment.channels[name]
                if ch.arity != len(targets):
                    raise ValueError(f"channel {name} arity {ch.arity} != {len(targets)} targets")
                if ch.arity == 1:
                    ops.append((OP_N1, qi[targets[0]], 0, name_id[name]))
                else:
                    ops.append((OP_N2, qi[targets[0]], qi[targets[1]], name_id[name]))

    chans = [assignment.channels[n] for n in names] if assignment else []
    off, cum, fin, pau = _channel_tables(chans)
    readout = np.zeros((rec, 4))
    readout[:, 2:] = 0.5
    readout[:, 1] = 1.0
    if assignment is not None:
        if len(assignment.readout) != rec:
            raise ValueError("readout assignment does not cover every record")
        for i, conf in enumerate(assignment.readout):
            readout[i] = conf.flip_to_one
    leak = max((c.leakage_mass() for c in chans), default=0.0)
    return Program(
        n_qubits=len(qubits),
        qubits=qubits,
        ops=np.asarray(ops, dtype=np.int64).reshape(-1, 4),
        n_records=rec,
        ch_arity=np.asarray([c.arity for c in chans], dtype=np.int64),
        ch_off=off,
        out_cum=cum,
        out_final=fin,
        out_pauli=pau,
        readout_one=readout,
        channel_names=names,
        leakage_mass=leak,
    )


_OPCODES = {"H": OP_H, "X": OP_X, "CZ": OP_CZ, "M": OP_M, "R": OP_R}


def program_from_ops(n_qubits: int, ops: list, channels: dict | None = None) -> Program:
    """Build a program directly from ("H", q) / ("CZ", a, b) / ("M", q) / ("R", q) /
    ("N", name, q[, q2]) tuples; used for small hand-written circuits and oracle checks."""
    channels = channels or {}
    names = list(channels)
    rows = []
    rec = 0
    for op in ops:
        kind = op[0]
        if kind == "N":
            ch = channels[op[1]]
            qs = op[2:]
            if ch.arity != len(qs):
                raise ValueError(f"channel {op[1]} arity {ch.arity} != {len(qs)} targets")
            rows.append((OP_N1 if ch.arity == 1 else OP_N2, qs[0], qs[1] if len(qs) > 1 else 0, names.index(op[1])))
        elif kind == "M":
            rows.append((OP_M, op[1], 0, rec))
            rec += 1
        elif kind == "CZ":
            rows.append((OP_CZ, op[1], op[2], 0))
        else:
            rows.append((_OPCODES[kind], op[1], 0, 0))
    for row in rows:
        if max(row[1], row[2]) >= n_qubits:
            raise ValueError("target outside register")
    chans = [channels[n] for n in names]
    off, cum, fin, pau = _channel_tables(chans)
    readout = np.zeros((rec, 4))
    readout[:, 1] = 1.0
    readout[:, 2:] = 0.5
    return Program(
        n_qubits=n_qubits,
        qubits=list(range(n_qubits)),
        ops=np.asarray(rows, dtype=np.int64).reshape(-1, 4),
        n_records=rec,
        ch_arity=np.asarray([c.arity for c in chans], dtype=np.int64),
        ch_off=off,
        out_cum=cum,
        out_final=fin,
        out_pauli=pau,
        readout_one=readout,
        channel_names=names,
        leakage_mass=max((c.leakage_mass() for c in chans), default=0.0),
    )
