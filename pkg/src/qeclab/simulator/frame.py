"""Pauli-frame fast path for leakage-free noise.

Frames are bit-packed: one uint64 word holds the X (or Z) frame bit of a qubit
for 64 consecutive shots.  Shots are grouped in fixed 64-shot blocks aligned to
the absolute shot index, and every random decision is keyed by
(seed, block, site, draw), so output is independent of how a run is chunked.
Error locations inside a block are drawn by geometric skipping.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..rng import keyed_u64, keyed_uniform
from .program import OP_CZ, OP_H, OP_M, OP_N1, OP_N2, OP_R, Program, compile_program

BLOCK = 64
_ONE = np.uint64(1)
_DRAW_Z_RESET = 0
_SALT_FRAME = 0x46524D


def _frame_tables(prog: Program):
    """Per channel: error probability and the conditional table of non-identity Paulis."""
    nch = len(prog.ch_arity)
    p_err = np.zeros(nch)
    off = np.zeros(nch + 1, dtype=np.int64)
    cum: list[float] = []
    codes: list[int] = []
    for ch in range(nch):
        lo, hi = prog.ch_off[ch * 9], prog.ch_off[ch * 9 + 1]
        prev = 0.0
        items = []
        for t in range(lo, hi):
            w = min(prog.out_cum[t], 1.0) - prev
            prev = min(prog.out_cum[t], 1.0)
            if w <= 0:
                continue
            if prog.out_final[t] != 0:
                raise ValueError(
                    f"channel {prog.channel_names[ch]} has leakage mass; use the tableau engine"
                )
            if prog.out_pauli[t] != 0:
                items.append((w, int(prog.out_pauli[t])))
        tot = sum(w for w, _ in items)
        p_err[ch] = min(tot, 1.0)
        acc = 0.0
        for w, c in items:
            acc += w / tot
            cum.append(acc)
            codes.append(c)
        if items:
            cum[-1] = 2.0
        off[ch + 1] = len(cum)
    return p_err, off, np.asarray(cum, dtype=np.float64), np.asarray(codes, dtype=np.int64)


@njit(cache=True)
def _geometric_mask(seed, block, site, p, draw0):
    """64-bit mask with each bit set independently with probability p."""
    if p <= 0.0:
        return np.uint64(0), draw0
    if p >= 1.0:
        return ~np.uint64(0), draw0
    if p > 0.25:
        m = np.uint64(0)
        for j in range(64):
            if keyed_uniform(seed, block, site, draw0 + j) < p:
                m |= _ONE << np.uint64(j)
        return m, draw0 + 64
    lq = math.log1p(-p)
    m = np.uint64(0)
    pos = -1
    draw = draw0
    while True:
        u = keyed_uniform(seed, block, site, draw)
        draw += 1
        gap = int(math.floor(math.log(1.0 - u) / lq))
        pos += gap + 1
        if pos >= 64:
            break
        m |= _ONE << np.uint64(pos)
    return m, draw


@njit(cache=True)
def _run_blocks(ops, n, n_records, p_err, t_off, t_cum, t_code, flip01, flip10, ref, seed, block0, n_blocks):
    out = np.zeros((n_blocks, n_records), dtype=np.uint64)
    fx = np.zeros(n, dtype=np.uint64)
    fz = np.zeros(n, dtype=np.uint64)
    n_ops = ops.shape[0]
    for bi in range(n_blocks):
        block = block0 + bi
        fx[:] = 0
        fz[:] = 0
        for k in range(n_ops):
            op = ops[k, 0]
            a = ops[k, 1]
            if op == OP_H:
                t = fx[a]
                fx[a] = fz[a]
                fz[a] = t
            elif op == OP_CZ:
                b = ops[k, 2]
                fz[a] ^= fx[b]
                fz[b] ^= fx[a]
            elif op == OP_M:
                out[bi, ops[k, 3]] = fx[a]
            elif op == OP_R:
                fx[a] = 0
                fz[a] = keyed_u64(seed, block, k, _DRAW_Z_RESET)
            elif op == OP_N1 or op == OP_N2:
                ch = ops[k, 3]
                lo = t_off[ch]
                hi = t_off[ch + 1]
                if hi == lo:
                    continue
                m, draw = _geometric_mask(seed, block, k, p_err[ch], 1)
                b = ops[k, 2]
                while m != 0:
                    low = m & (~m + _ONE)
                    m ^= low
                    u = keyed_uniform(seed, block, k, draw)
                    draw += 1
                    sel = hi - 1
                    for t in range(lo, hi):
                        if u < t_cum[t]:
                            sel = t
                            break
                    code = t_code[sel]
                    if code & 1:
                        fx[a] ^= low
                    if code & 2:
                        fz[a] ^= low
                    if op == OP_N2:
                        if code & 4:
                            fx[b] ^= low
                        if code & 8:
                            fz[b] ^= low
        # reference record, then classical readout confusion
        for r in range(n_records):
            v = out[bi, r]
            if ref[r]:
                v = ~v
            m0, d0 = _geometric_mask(seed, block, n_ops + 2 * r, flip01[r], 0)
            m1, d1 = _geometric_mask(seed, block, n_ops + 2 * r + 1, flip10[r], 0)
            out[bi, r] = v ^ ((~v & m0) | (v & m1))
    return out


def frame_sample_packed(
    prog: Program, ref: np.ndarray, master_seed: int, block0: int, n_blocks: int, readout: bool = True
) -> np.ndarray:
    """Packed records, shape (n_blocks, n_records); bit j of a word is shot 64*block + j."""
    p_err, t_off, t_cum, t_code = _frame_tables(prog)
    if readout:
        flip01 = prog.readout_one[:, 0].copy()
        flip10 = 1.0 - prog.readout_one[:, 1]
    else:
        flip01 = np.zeros(prog.n_records)
        flip10 = np.zeros(prog.n_records)
    seed = np.uint64((int(master_seed) ^ _SALT_FRAME) & 0xFFFFFFFFFFFFFFFF)
    return _run_blocks(
        prog.ops, prog.n_qubits, prog.n_records, p_err, t_off, t_cum, t_code,
        flip01, flip10, np.asarray(ref, dtype=np.uint8), seed, block0, n_blocks,
    )


def unpack_words(words: np.ndarray, shot_offset: int, shots: int) -> np.ndarray:
    """(n_blocks, k) uint64 -> (shots, k) uint8, starting at shot_offset within the first block."""
    w = np.ascontiguousarray(words.T).astype("<u8")
    bits = np.unpackbits(w.view(np.uint8).reshape(w.shape[0], -1), axis=1, bitorder="little")
    return np.ascontiguousarray(bits[:, shot_offset : shot_offset + shots].T)


def block_span(shot_start: int, shots: int) -> tuple[int, int, int]:
    b0 = shot_start // BLOCK
    b1 = (shot_start + shots + BLOCK - 1) // BLOCK
    return b0, b1 - b0, shot_start - b0 * BLOCK


def frame_records(circuit, noise, shots: int, master_seed: int, shot_start: int = 0, readout: bool = True) -> np.ndarray:
    from .tableau import reference_records

    prog = compile_program(circuit, noise)
    ref = reference_records(circuit)
    b0, nb, off = block_span(shot_start, shots)
    packed = frame_sample_packed(prog, ref, master_seed, b0, nb, readout)
    return unpack_words(packed, off, shots)
