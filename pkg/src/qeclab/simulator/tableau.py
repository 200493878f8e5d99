"""Leakage-labelled stabilizer tableau engine.

The state of n devices is kept as an n-qubit stabilizer tableau (with
destabilizers) plus a label per device in {c, 2, 3}.  A leaked device is parked
in a dummy +Z generator: entering leakage measures it in Z at random and flips
it back to |0>, which is the same as tracing it out of the stabilizer group; on
return it receives a random sign, i.e. a random +-Z generator.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from ..rng import keyed_uniform
from .program import OP_CZ, OP_H, OP_M, OP_N1, OP_N2, OP_NOP, OP_R, OP_X, Program, compile_program

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)
_ONE = np.uint64(1)
_LABEL_OF_INDEX = np.array([0, 2, 3], dtype=np.int64)

# draw slots inside one op site
_D_OUTCOME = 0
_D_MEASURE = 1
_D_TRACE = 2
_D_RETURN = 4


@njit(cache=True, inline="always")
def _popcount(v):
    v = v - ((v >> np.uint64(1)) & _M1)
    v = (v & _M2) + ((v >> np.uint64(2)) & _M2)
    v = (v + (v >> np.uint64(4))) & _M4
    return (v * _H01) >> np.uint64(56)


@njit(cache=True)
def _rowsum(x, z, r, h, i):
    """Row h <- row i * row h with the exact phase."""
    plus = 0
    minus = 0
    for w in range(x.shape[1]):
        x1 = x[i, w]
        z1 = z[i, w]
        x2 = x[h, w]
        z2 = z[h, w]
        ys = x1 & z1
        xs = x1 & ~z1
        zs = ~x1 & z1
        p = (ys & z2 & ~x2) | (xs & z2 & x2) | (zs & x2 & ~z2)
        m = (ys & x2 & ~z2) | (xs & z2 & ~x2) | (zs & x2 & z2)
        plus += np.int64(_popcount(p))
        minus += np.int64(_popcount(m))
        x[h, w] = x2 ^ x1
        z[h, w] = z2 ^ z1
    s = (2 * np.int64(r[h]) + 2 * np.int64(r[i]) + plus - minus) % 4
    r[h] = _ONE if s == 2 else np.uint64(0)


@njit(cache=True)
def _init(n):
    W = (n + 63) // 64
    x = np.zeros((2 * n + 1, W), dtype=np.uint64)
    z = np.zeros((2 * n + 1, W), dtype=np.uint64)
    r = np.zeros(2 * n + 1, dtype=np.uint64)
    for q in range(n):
        x[q, q >> 6] = _ONE << np.uint64(q & 63)
        z[n + q, q >> 6] = _ONE << np.uint64(q & 63)
    return x, z, r


@njit(cache=True)
def _h(x, z, r, a):
    w = a >> 6
    b = np.uint64(a & 63)
    for i in range(x.shape[0] - 1):
        xa = (x[i, w] >> b) & _ONE
        za = (z[i, w] >> b) & _ONE
        r[i] ^= xa & za
        if xa != za:
            x[i, w] ^= _ONE << b
            z[i, w] ^= _ONE << b


@njit(cache=True)
def _x(x, z, r, a):
    w = a >> 6
    b = np.uint64(a & 63)
    for i in range(x.shape[0] - 1):
        r[i] ^= (z[i, w] >> b) & _ONE


@njit(cache=True)
def _zgate(x, z, r, a):
    w = a >> 6
    b = np.uint64(a & 63)
    for i in range(x.shape[0] - 1):
        r[i] ^= (x[i, w] >> b) & _ONE


@njit(cache=True)
def _cz(x, z, r, a, b):
    wa = a >> 6
    ba = np.uint64(a & 63)
    wb = b >> 6
    bb = np.uint64(b & 63)
    for i in range(x.shape[0] - 1):
        xa = (x[i, wa] >> ba) & _ONE
        xb = (x[i, wb] >> bb) & _ONE
        za = (z[i, wa] >> ba) & _ONE
        zb = (z[i, wb] >> bb) & _ONE
        r[i] ^= xa & xb & (za ^ zb)
        z[i, wa] ^= xb << ba
        z[i, wb] ^= xa << bb


@njit(cache=True)
def _measure(x, z, r, a, u):
    """Z measurement of device a; u is the uniform used when the outcome is random."""
    n = (x.shape[0] - 1) // 2
    w = a >> 6
    b = np.uint64(a & 63)
    p = -1
    for i in range(n, 2 * n):
        if (x[i, w] >> b) & _ONE:
            p = i
            break
    if p >= 0:
        for i in range(2 * n):
            if i != p and (x[i, w] >> b) & _ONE:
                _rowsum(x, z, r, i, p)
        for k in range(x.shape[1]):
            x[p - n, k] = x[p, k]
            z[p - n, k] = z[p, k]
            x[p, k] = 0
            z[p, k] = 0
        r[p - n] = r[p]
        z[p, w] = _ONE << b
        out = 1 if u < 0.5 else 0
        r[p] = np.uint64(out)
        return out
    s = 2 * n
    for k in range(x.shape[1]):
        x[s, k] = 0
        z[s, k] = 0
    r[s] = 0
    for i in range(n):
        if (x[i, w] >> b) & _ONE:
            _rowsum(x, z, r, s, i + n)
    return np.int64(r[s])


@njit(cache=True)
def _apply_pauli_code(x, z, r, devs, code):
    for j in range(devs.shape[0]):
        pc = (code >> (2 * j)) & 3
        if pc & 1:
            _x(x, z, r, devs[j])
        if pc & 2:
            _zgate(x, z, r, devs[j])


@njit(cache=True)
def _run(ops, n, n_records, ch_arity, ch_off, out_cum, out_final, out_pauli, seed, shot, records, labels, trace):
    """Execute one shot; records receives symbols in {0,1,2,3}.

    trace (optional, shape (n_ops,)) receives the number of computational devices after each op.
    """
    x, z, r = _init(n)
    for q in range(n):
        labels[q] = 0
    devs = np.empty(2, dtype=np.int64)
    old = np.empty(2, dtype=np.int64)
    for k in range(ops.shape[0]):
        op = ops[k, 0]
        a = ops[k, 1]
        if op == OP_H:
            if labels[a] == 0:
                _h(x, z, r, a)
        elif op == OP_X:
            if labels[a] == 0:
                _x(x, z, r, a)
        elif op == OP_CZ:
            b = ops[k, 2]
            if labels[a] == 0 and labels[b] == 0:
                _cz(x, z, r, a, b)
        elif op == OP_M:
            if labels[a] != 0:
                records[ops[k, 3]] = labels[a]
            else:
                records[ops[k, 3]] = _measure(x, z, r, a, keyed_uniform(seed, shot, k, _D_MEASURE))
        elif op == OP_R:
            if labels[a] != 0:
                labels[a] = 0  # the parked dummy is already |0>
            elif _measure(x, z, r, a, keyed_uniform(seed, shot, k, _D_MEASURE)) == 1:
                _x(x, z, r, a)
        elif op == OP_N1 or op == OP_N2:
            ch = ops[k, 3]
            ar = ch_arity[ch]
            devs[0] = a
            devs[1] = ops[k, 2]
            idx = 0
            mul = 1
            for j in range(ar):
                lab = labels[devs[j]]
                old[j] = lab
                li = 0 if lab == 0 else (1 if lab == 2 else 2)
                idx += li * mul
                mul *= 3
            lo = ch_off[ch * 9 + idx]
            hi = ch_off[ch * 9 + idx + 1]
            if hi > lo:
                u = keyed_uniform(seed, shot, k, _D_OUTCOME)
                sel = hi - 1
                for t in range(lo, hi):
                    if u < out_cum[t]:
                        sel = t
                        break
                fin = out_final[sel]
                _apply_pauli_code(x, z, r, devs[:ar], out_pauli[sel])
                for j in range(ar):
                    new = _LABEL_OF_INDEX[(fin // (3**j)) % 3]
                    q = devs[j]
                    if old[j] == 0 and new != 0:
                        # trace out: random projective collapse, then park at |0>
                        if _measure(x, z, r, q, keyed_uniform(seed, shot, k, _D_TRACE + j)) == 1:
                            _x(x, z, r, q)
                    elif old[j] != 0 and new == 0:
                        if keyed_uniform(seed, shot, k, _D_RETURN + j) < 0.5:
                            _x(x, z, r, q)
                    labels[q] = new
        # OP_NOP: nothing
        if trace.shape[0] > 0:
            m = 0
            for q in range(n):
                if labels[q] == 0:
                    m += 1
            trace[k] = m


@njit(cache=True)
def _run_batch(ops, n, n_records, ch_arity, ch_off, out_cum, out_final, out_pauli, seed, shot_start, n_shots):
    out = np.empty((n_shots, n_records), dtype=np.uint8)
    labels = np.zeros(n, dtype=np.int64)
    rec = np.zeros(n_records, dtype=np.int64)
    trace = np.zeros(0, dtype=np.int64)
    for s in range(n_shots):
        _run(ops, n, n_records, ch_arity, ch_off, out_cum, out_final, out_pauli, seed, shot_start + s, rec, labels, trace)
        for i in range(n_records):
            out[s, i] = rec[i]
    return out


def run_program(prog: Program, seed: int, shot_start: int = 0, shots: int = 1) -> np.ndarray:
    """Symbols (shots x records, uint8 in {0,1,2,3}) before readout confusion."""
    return _run_batch(
        prog.ops, prog.n_qubits, prog.n_records, prog.ch_arity, prog.ch_off,
        prog.out_cum, prog.out_final, prog.out_pauli, np.uint64(seed), shot_start, shots,
    )


def trace_computational_counts(prog: Program, seed: int, shot: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Run one shot and return (records, computational-device count after every op)."""
    rec = np.zeros(prog.n_records, dtype=np.int64)
    labels = np.zeros(prog.n_qubits, dtype=np.int64)
    trace = np.zeros(len(prog.ops), dtype=np.int64)
    _run(prog.ops, prog.n_qubits, prog.n_records, prog.ch_arity, prog.ch_off, prog.out_cum,
         prog.out_final, prog.out_pauli, np.uint64(seed), shot, rec, labels, trace)
    return rec.astype(np.uint8), trace


def reference_records(circuit) -> np.ndarray:
    """Noiseless record of one shot (random outcomes drawn with seed 0)."""
    prog = compile_program(circuit, None)
    return run_program(prog, 0, 0, 1)[0]


def tableau_sample(circuit, noise, shots: int, master_seed: int, shot_start: int = 0) -> np.ndarray:
    prog = compile_program(circuit, noise)
    return run_program(prog, master_seed, shot_start, shots)
