"""Dense density-matrix reference for tiny circuits (four levels per device).

Takes the same op list as ``program_from_ops`` but works from the GPChannel
objects themselves, so it checks the compiled tables as well as the engine.
Returns the exact distribution of record tuples (pre-confusion symbols).
"""
from __future__ import annotations

import itertools
from collections import defaultdict

import numpy as np

from ..channels import GPChannel

LEVELS = 4
_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.diag([1, -1]).astype(complex),
}
_H2 = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def _embed1(u2: np.ndarray) -> np.ndarray:
    u = np.eye(LEVELS, dtype=complex)
    u[:2, :2] = u2
    return u


def _ket(level: int) -> np.ndarray:
    v = np.zeros(LEVELS, dtype=complex)
    v[level] = 1
    return v


def _proj(level: int) -> np.ndarray:
    return np.outer(_ket(level), _ket(level))


def _on(n: int, ops: dict[int, np.ndarray]) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for q in range(n):
        out = np.kron(out, ops.get(q, np.eye(LEVELS)))
    return out


def _cz_full(n: int, a: int, b: int) -> np.ndarray:
    dim = LEVELS**n
    diag = np.ones(dim, dtype=complex)
    for idx in range(dim):
        digits = np.unravel_index(idx, (LEVELS,) * n)
        if digits[a] == 1 and digits[b] == 1:
            diag[idx] = -1
    return np.diag(diag)


def _device_maps(init: int, final: int, pauli: str | None) -> list[np.ndarray]:
    """Kraus operators on one device for a single label transition."""
    if init == 0 and final == 0:
        p = _PAULI[pauli]
        m = np.zeros((LEVELS, LEVELS), dtype=complex)
        m[:2, :2] = p
        return [m]
    if init == 0:
        return [np.outer(_ket(final), _ket(0)), np.outer(_ket(final), _ket(1))]
    if final == 0:
        return [np.sqrt(0.5) * np.outer(_ket(0), _ket(init)), np.sqrt(0.5) * np.outer(_ket(1), _ket(init))]
    return [np.outer(_ket(final), _ket(init))]


def gpc_kraus(ch: GPChannel) -> list[np.ndarray]:
    """Kraus representation of a GPC on arity devices of four levels each."""
    ops = []
    for init, outs in ch.transitions.items():
        for final, p, dist in outs:
            if p <= 0:
                continue
            r = [j for j in range(ch.arity) if init[j] == 0 and final[j] == 0]
            for pauli, q in dist.items():
                if q <= 0:
                    continue
                per = []
                for j in range(ch.arity):
                    letter = pauli[r.index(j)] if j in r else None
                    per.append(_device_maps(init[j], final[j], letter))
                for combo in itertools.product(*per):
                    k = np.array([[1.0 + 0j]])
                    for m in combo:
                        k = np.kron(k, m)
                    ops.append(np.sqrt(p * q) * k)
    return ops


def _lift(n: int, k: np.ndarray, targets) -> np.ndarray:
    """Embed a Kraus operator on ``targets`` (in order) into the full register."""
    ar = len(targets)
    dim = LEVELS**n
    full = np.zeros((dim, dim), dtype=complex)
    others = [q for q in range(n) if q not in targets]
    k4 = k.reshape((LEVELS,) * (2 * ar))
    for idx_out in range(dim):
        do = np.unravel_index(idx_out, (LEVELS,) * n)
        for idx_in in range(dim):
            di = np.unravel_index(idx_in, (LEVELS,) * n)
            if any(do[q] != di[q] for q in others):
                continue
            full[idx_out, idx_in] = k4[tuple(do[t] for t in targets) + tuple(di[t] for t in targets)]
    return full


def dense_distribution(n: int, ops: list, channels: dict | None = None) -> dict[tuple, float]:
    """Exact probabilities of each record tuple for an op list (see ``program_from_ops``)."""
    channels = channels or {}
    dim = LEVELS**n
    rho0 = np.zeros((dim, dim), dtype=complex)
    rho0[0, 0] = 1
    branches: dict[tuple, np.ndarray] = {(): rho0}
    lifted: dict = {}
    leaked_mask = {}
    for q in range(n):
        proj = np.zeros(dim)
        for idx in range(dim):
            if np.unravel_index(idx, (LEVELS,) * n)[q] >= 2:
                proj[idx] = 1
        leaked_mask[q] = proj
    for op in ops:
        kind = op[0]
        new: dict[tuple, np.ndarray] = defaultdict(lambda: np.zeros((dim, dim), dtype=complex))
        if kind in ("H", "X"):
            u = _on(n, {op[1]: _embed1(_H2 if kind == "H" else _PAULI["X"])})
            for key, rho in branches.items():
                new[key] = u @ rho @ u.conj().T
        elif kind == "CZ":
            u = _cz_full(n, op[1], op[2])
            for key, rho in branches.items():
                new[key] = u @ rho @ u.conj().T
        elif kind == "M":
            q = op[1]
            for key, rho in branches.items():
                for lvl in range(LEVELS):
                    pj = _on(n, {q: _proj(lvl)})
                    part = pj @ rho @ pj
                    if np.real(np.trace(part)) > 1e-15:
                        new[key + (lvl,)] = new[key + (lvl,)] + part
        elif kind == "R":
            q = op[1]
            ks = [_on(n, {q: np.outer(_ket(0), _ket(lvl))}) for lvl in range(LEVELS)]
            for key, rho in branches.items():
                new[key] = sum(k @ rho @ k.conj().T for k in ks)
        elif kind == "N":
            name, targets = op[1], tuple(op[2:])
            if (name, targets) not in lifted:
                lifted[(name, targets)] = [_lift(n, k, targets) for k in gpc_kraus(channels[name])]
            ks = lifted[(name, targets)]
            for key, rho in branches.items():
                new[key] = sum(k @ rho @ k.conj().T for k in ks)
        else:
            raise ValueError(f"unknown op {kind!r}")
        branches = dict(new)
    return {key: float(np.real(np.trace(rho))) for key, rho in branches.items()}
