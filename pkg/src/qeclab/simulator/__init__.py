"""Noisy circuit sampling: leakage-aware tableau engine and Pauli-frame fast path."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..channels import ReadoutConfusion
from ..circuit import Circuit
from ..noise import NoiseModel, noiseless
from ..rng import derive_seed, keyed_uniform
from .frame import block_span, frame_sample_packed, unpack_words
from .program import Program, compile_program
from .tableau import reference_records, run_program, trace_computational_counts

__all__ = [
    "SampleBatch",
    "ShotResult",
    "apply_readout_error",
    "compile_program",
    "detection_events",
    "pauli_frame_sample",
    "reference_records",
    "run_shot",
    "sample",
    "sample_detection_events",
    "trace_computational_counts",
]

_READOUT_STREAM = 0x52454144


@dataclass(frozen=True)
class ShotResult:
    records: np.ndarray  # symbols in {0,1,2,3}, one per Measure target


@dataclass
class SampleBatch:
    circuit: Circuit
    records: np.ndarray  # (shots, n_records) uint8
    master_seed: int
    shot_start: int = 0
    symbols: bool = False  # True while leaked symbols (2, 3) may still be present

    @property
    def shots(self) -> int:
        return self.records.shape[0]

    def detectors(self) -> np.ndarray:
        if self.symbols and np.any(self.records > 1):
            raise ValueError("batch holds leaked symbols; apply readout confusion first")
        return detection_events(self.circuit, self.records)[0]

    def observable_flips(self) -> np.ndarray:
        return detection_events(self.circuit, self.records)[1]

    def logical_values(self) -> np.ndarray:
        """Measured logical parity with the echo frame removed (compare with circuit.logical_value)."""
        c = self.circuit
        raw = self.records[:, list(c.observable)].sum(axis=1) % 2
        return (raw ^ c.observable_ref ^ c.logical_value).astype(np.uint8)


def detection_events(circuit: Circuit, records: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(detection events (shots, D), observable flips (shots,)) from 0/1 records."""
    offs, recs, refs = circuit.detector_matrix()
    rec = np.asarray(records, dtype=np.uint8) & 1
    det = np.bitwise_xor.reduceat(rec[:, recs], offs[:-1], axis=1) ^ refs
    obs = np.bitwise_xor.reduce(rec[:, list(circuit.observable)], axis=1) ^ circuit.observable_ref
    return det.astype(np.uint8), obs.astype(np.uint8)


def _prog(circuit, noise) -> Program:
    return compile_program(circuit, noise if noise is not None else noiseless())


def run_shot(circuit: Circuit, noise: NoiseModel | None, seed: int) -> ShotResult:
    """One tableau shot; records are pre-confusion symbols."""
    rec = run_program(_prog(circuit, noise), seed, 0, 1)[0]
    return ShotResult(rec)


@njit(cache=True)
def _confuse(sym, table, seed, shot_start):
    out = np.empty(sym.shape, dtype=np.uint8)
    for s in range(sym.shape[0]):
        for r in range(sym.shape[1]):
            p1 = table[r, sym[s, r]]
            out[s, r] = 1 if keyed_uniform(seed, shot_start + s, r, 0) < p1 else 0
    return out


def _confusion_table(batch: SampleBatch, confusion) -> np.ndarray:
    nrec = batch.records.shape[1]
    if isinstance(confusion, ReadoutConfusion):
        return np.tile(confusion.flip_to_one, (nrec, 1))
    if isinstance(confusion, dict):
        table = np.empty((nrec, 4))
        for i, q in enumerate(batch.circuit.record_qubits()):
            if q not in confusion:
                raise KeyError(f"no readout confusion row for qubit {q}")
            table[i] = confusion[q].flip_to_one
        return table
    table = np.asarray(confusion, dtype=float)
    if table.shape != (nrec, 4):
        raise ValueError(f"confusion table shape {table.shape} != ({nrec}, 4)")
    return table


def apply_readout_error(batch: SampleBatch, confusion, seed: int) -> SampleBatch:
    """Resample every symbol through its confusion row; leaked symbols collapse to 0/1.

    ``confusion`` is one ReadoutConfusion for all records, a {qubit: ReadoutConfusion} map,
    or a (records, 4) table of P(recorded 1 | true symbol).
    """
    table = _confusion_table(batch, confusion)
    out = _confuse(batch.records.astype(np.int64), table, np.uint64(seed), batch.shot_start)
    return SampleBatch(batch.circuit, out, batch.master_seed, batch.shot_start, symbols=False)


def _has_leakage(prog: Program) -> bool:
    return prog.leakage_mass > 0


def sample(
    circuit: Circuit,
    noise: NoiseModel | None,
    shots: int,
    master_seed: int,
    *,
    engine: str = "auto",
    readout: bool = True,
    shot_start: int = 0,
) -> SampleBatch:
    """Sample ``shots`` shots; shot i depends only on (circuit, noise, master_seed, i).

    engine: "tableau", "frame" or "auto" (frame unless the model leaks).
    readout: apply the noise model's readout confusion.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    prog = _prog(circuit, noise)
    if engine == "auto":
        engine = "tableau" if _has_leakage(prog) else "frame"
    if engine == "frame":
        return pauli_frame_sample(circuit, noise, shots, master_seed, shot_start=shot_start, readout=readout, _prog=prog)
    if engine != "tableau":
        raise ValueError(f"unknown engine {engine!r}")
    sym = run_program(prog, master_seed, shot_start, shots)
    batch = SampleBatch(circuit, sym, master_seed, shot_start, symbols=True)
    if readout:
        batch = apply_readout_error(batch, prog.readout_one, derive_seed(master_seed, _READOUT_STREAM))
    return batch


def pauli_frame_sample(
    circuit: Circuit,
    noise: NoiseModel | None,
    shots: int,
    master_seed: int,
    *,
    shot_start: int = 0,
    readout: bool = True,
    _prog: Program | None = None,
) -> SampleBatch:
    """Frame-propagation sampler; rejects models with leakage."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    prog = _prog if _prog is not None else compile_program(circuit, noise if noise is not None else noiseless())
    if _has_leakage(prog):
        raise ValueError("noise model has leakage transitions; use the tableau engine")
    b0, nb, off = block_span(shot_start, shots)
    packed = frame_sample_packed(prog, reference_records(circuit), master_seed, b0, nb, readout)
    return SampleBatch(circuit, unpack_words(packed, off, shots), master_seed, shot_start)


@njit(cache=True)
def _packed_detectors(packed, offs, recs, refs, obs, obs_ref):
    nb = packed.shape[0]
    nd = offs.shape[0] - 1
    det = np.zeros((nb, nd + 1), dtype=np.uint64)
    for b in range(nb):
        for i in range(nd):
            v = np.uint64(0)
            for t in range(offs[i], offs[i + 1]):
                v ^= packed[b, recs[t]]
            if refs[i]:
                v = ~v
            det[b, i] = v
        v = np.uint64(0)
        for t in range(obs.shape[0]):
            v ^= packed[b, obs[t]]
        if obs_ref:
            v = ~v
        det[b, nd] = v
    return det


def sample_detection_events(
    circuit: Circuit, noise: NoiseModel | None, shots: int, master_seed: int, *, shot_start: int = 0,
    engine: str = "auto", _prog: Program | None = None, _ref: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(detection events (shots, D) uint8, observable flips (shots,) uint8).

    Uses packed arithmetic on the frame path; identical to ``sample(...).detectors()``.
    """
    prog = _prog if _prog is not None else _prog_of(circuit, noise)
    if engine == "auto":
        engine = "tableau" if _has_leakage(prog) else "frame"
    if engine == "tableau":
        b = sample(circuit, noise, shots, master_seed, engine="tableau", shot_start=shot_start)
        return detection_events(circuit, b.records)
    ref = _ref if _ref is not None else reference_records(circuit)
    b0, nb, off = block_span(shot_start, shots)
    packed = frame_sample_packed(prog, ref, master_seed, b0, nb, True)
    offs, recs, refs = circuit.detector_matrix()
    words = _packed_detectors(
        packed, offs, recs, refs.astype(np.int64), np.asarray(circuit.observable, dtype=np.int64), circuit.observable_ref
    )
    bits = unpack_words(words, off, shots)
    return np.ascontiguousarray(bits[:, :-1]), np.ascontiguousarray(bits[:, -1])


def _prog_of(circuit, noise):
    return compile_program(circuit, noise if noise is not None else noiseless())
