"""Noise channels on 4-level devices and the generalized Pauli twirl.

Devices have levels |0>,|1> (computational) and |2>,|3> (leaked).  Leakage labels
are the integers 0 (computational, written "c"), 2 and 3.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg

LEVELS = 4
LABELS = (0, 2, 3)
PAULI_LETTERS = "IXYZ"

_P1 = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def label_str(label: int) -> str:
    return "c" if label == 0 else str(label)


@lru_cache(maxsize=None)
def pauli_basis(n: int) -> tuple[tuple[str, ...], np.ndarray]:
    """All n-qubit Pauli strings and their matrices, stacked as (4**n, 2**n, 2**n)."""
    names = tuple("".join(p) for p in itertools.product(PAULI_LETTERS, repeat=n))
    mats = []
    for name in names:
        m = np.ones((1, 1), dtype=complex)
        for ch in name:
            m = np.kron(m, _P1[ch])
        mats.append(m)
    return names, np.array(mats)


def embed_pauli(name: str) -> np.ndarray:
    """Pauli string acting on the computational block, identity on leaked levels."""
    m = np.ones((1, 1), dtype=complex)
    for ch in name:
        e = np.eye(LEVELS, dtype=complex)
        e[:2, :2] = _P1[ch]
        m = np.kron(m, e)
    return m


@dataclass(frozen=True)
class KrausChannel:
    operators: tuple[np.ndarray, ...]
    arity: int

    def __post_init__(self):
        dim = LEVELS**self.arity
        for k in self.operators:
            if k.shape != (dim, dim):
                raise ValueError(f"Kraus operator shape {k.shape} != {(dim, dim)}")

    def completeness_error(self) -> float:
        dim = LEVELS**self.arity
        s = sum(k.conj().T @ k for k in self.operators)
        return float(np.max(np.abs(s - np.eye(dim))))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.operators)

    def compose(self, after: "KrausChannel") -> "KrausChannel":
        """Channel that applies ``self`` first, then ``after``."""
        if after.arity != self.arity:
            raise ValueError("arity mismatch")
        ops = tuple(b @ a for a in self.operators for b in after.operators)
        return KrausChannel(_prune(ops), self.arity)


def _prune(ops, tol: float = 1e-14) -> tuple[np.ndarray, ...]:
    return tuple(k for k in ops if np.linalg.norm(k) ** 2 > tol)


def unitary_channel(u: np.ndarray) -> KrausChannel:
    n = int(round(np.log(u.shape[0]) / np.log(LEVELS)))
    return KrausChannel((np.asarray(u, dtype=complex),), n)


def identity_channel(arity: int = 1) -> KrausChannel:
    return KrausChannel((np.eye(LEVELS**arity, dtype=complex),), arity)


def lindblad_superoperator(jumps: list[tuple[float, np.ndarray]]) -> np.ndarray:
    """Column-stacking superoperator of sum_k g_k (L rho L^+ - {L^+L, rho}/2)."""
    dim = jumps[0][1].shape[0] if jumps else LEVELS
    eye = np.eye(dim)
    sup = np.zeros((dim * dim, dim * dim), dtype=complex)
    for rate, op in jumps:
        if rate == 0:
            continue
        ldl = op.conj().T @ op
        sup += rate * (np.kron(op.conj(), op) - 0.5 * np.kron(eye, ldl) - 0.5 * np.kron(ldl.T, eye))
    return sup


def kraus_from_superoperator(sup: np.ndarray, arity: int, tol: float = 1e-14) -> KrausChannel:
    dim = LEVELS**arity
    choi = np.zeros((dim * dim, dim * dim), dtype=complex)
    for i in range(dim):
        for j in range(dim):
            e = np.zeros((dim, dim), dtype=complex)
            e[i, j] = 1.0
            out = (sup @ e.reshape(-1, order="F")).reshape(dim, dim, order="F")
            choi[i * dim : (i + 1) * dim, j * dim : (j + 1) * dim] = out
    choi = 0.5 * (choi + choi.conj().T)
    vals, vecs = np.linalg.eigh(choi)
    ops = []
    for lam, v in zip(vals, vecs.T):
        if lam < tol:
            continue
        # v[(i, a)] -> K[a, i]
        ops.append(np.sqrt(lam) * v.reshape(dim, dim).T)
    return KrausChannel(tuple(ops), arity)


def _ladder() -> np.ndarray:
    a = np.zeros((LEVELS, LEVELS), dtype=complex)
    for j in range(LEVELS - 1):
        a[j, j + 1] = np.sqrt(j + 1)
    return a


def idle_channel(
    T1: float,
    Tphi: float,
    gamma12: float,
    duration: float,
    computational_decay: bool = True,
) -> KrausChannel:
    """Idle evolution exp(duration * L) for decay, white-noise dephasing and 1->2 heating.

    Times share one unit (e.g. ns); rates are inverse times.  ``T1``/``Tphi`` may be
    ``inf`` to switch a process off.  With ``computational_decay=False`` the 1->0
    decay and all dephasing are dropped, keeping only leakage dynamics (heating
    and decay of the leaked levels); used when computational errors are already
    budgeted elsewhere.
    """
    vals = np.array([T1, Tphi, gamma12, duration], dtype=float)
    if np.any(np.isnan(vals)) or not np.isfinite(gamma12) or not np.isfinite(duration):
        raise ValueError("non-finite idle-channel parameters")
    if T1 <= 0 or Tphi <= 0 or gamma12 < 0 or duration < 0:
        raise ValueError("need T1, Tphi > 0, gamma12 >= 0, duration >= 0")
    a = _ladder()
    n = np.diag(np.arange(LEVELS)).astype(complex)
    jumps = []
    if np.isfinite(T1):
        if not computational_decay:
            a = a.copy()
            a[0, 1] = 0.0
        jumps.append((1.0 / T1, a))
    if np.isfinite(Tphi) and computational_decay:
        jumps.append((2.0 / Tphi, n))
    heat = np.zeros((LEVELS, LEVELS), dtype=complex)
    heat[2, 1] = 1.0
    jumps.append((gamma12, heat))
    if duration == 0:
        return identity_channel(1)
    sup = lindblad_superoperator(jumps)
    prop = scipy.linalg.expm(duration * sup)
    return kraus_from_superoperator(prop, 1)


def cz_leakage_channel(p_t: float, p_22_13: float = 0.0, p_21_03: float = 0.0) -> KrausChannel:
    """|11> <-> |02> population exchange with probability p_t (second device leaks).

    Optional transport between higher levels (|22> <-> |13>, |21> <-> |03>) uses
    the same exchange form with its own probability.
    """
    dim = LEVELS**2
    k1 = np.zeros((dim, dim), dtype=complex)
    for p, (a, b) in ((p_t, ((1, 1), (0, 2))), (p_22_13, ((2, 2), (1, 3))), (p_21_03, ((2, 1), (0, 3)))):
        if not 0 <= p <= 1:
            raise ValueError("exchange probabilities must lie in [0, 1]")
        ia = a[0] * LEVELS + a[1]
        ib = b[0] * LEVELS + b[1]
        k1[ib, ia] = np.sqrt(p)
        k1[ia, ib] = np.sqrt(p)
    rest = np.eye(dim) - k1.conj().T @ k1
    k0 = np.diag(np.sqrt(np.clip(np.real(np.diag(rest)), 0, None))).astype(complex)
    return KrausChannel(_prune((k0, k1)), 2)


def conditional_phase_unitary(phi2: float, phi3: float | None = None) -> np.ndarray:
    """Phase picked up by the |1> state of a CZ partner while the other device is leaked."""
    if phi3 is None:
        phi3 = phi2
    u = np.eye(LEVELS**2, dtype=complex)
    for a in range(LEVELS):
        for b in range(LEVELS):
            phase = 0.0
            if a >= 2 and b == 1:
                phase += phi2 if a == 2 else phi3
            if b >= 2 and a == 1:
                phase += phi2 if b == 2 else phi3
            u[a * LEVELS + b, a * LEVELS + b] = np.exp(1j * phase)
    return u


def leakage_rotation_unitary(theta: float) -> np.ndarray:
    """Rotation mixing |1> and |2> by angle theta on one device."""
    u = np.eye(LEVELS, dtype=complex)
    c, s = np.cos(theta), np.sin(theta)
    u[1, 1] = c
    u[2, 2] = c
    u[1, 2] = s
    u[2, 1] = -s
    return u


def swap_crosstalk_unitary(theta: float) -> np.ndarray:
    """exp(-i theta (XX + YY) / 2) on the computational block of two devices."""
    names, mats = pauli_basis(2)
    h = mats[names.index("XX")] + mats[names.index("YY")]
    u2 = scipy.linalg.expm(-0.5j * theta * h)
    u = np.eye(LEVELS**2, dtype=complex)
    comp = [a * LEVELS + b for a in range(2) for b in range(2)]
    for i, ci in enumerate(comp):
        for j, cj in enumerate(comp):
            u[ci, cj] = u2[i, j]
    return u


def pauli_kraus(dist: dict[str, float]) -> KrausChannel:
    """Pauli channel (identity on leaked levels) given {pauli string: probability}."""
    arity = len(next(iter(dist)))
    ops = tuple(np.sqrt(p) * embed_pauli(name) for name, p in dist.items() if p > 0)
    return KrausChannel(ops, arity)


def depolarizing_distribution(p: float, arity: int) -> dict[str, float]:
    names, _ = pauli_basis(arity)
    n_err = len(names) - 1
    return {name: (1 - p if name == "I" * arity else p / n_err) for name in names}


# ---------------------------------------------------------------------------
# Generalized Pauli channels


@dataclass(frozen=True)
class GPChannel:
    """Transition table {initial labels: [(final labels, probability, {pauli on R: prob})]}.

    Pauli strings list only the devices that stay computational (set R), in device order.
    """

    arity: int
    transitions: dict = field(hash=False)

    def outcomes(self, initial: tuple[int, ...]):
        return self.transitions[tuple(initial)]

    def transition_prob(self, initial, final) -> float:
        for f, p, _ in self.transitions[tuple(initial)]:
            if f == tuple(final):
                return p
        return 0.0

    def pauli_prob(self, initial, final, pauli: str) -> float:
        for f, p, dist in self.transitions[tuple(initial)]:
            if f == tuple(final):
                return p * dist.get(pauli, 0.0)
        return 0.0

    def leakage_mass(self) -> float:
        """Probability of leaving the all-computational subspace from it."""
        c = (0,) * self.arity
        return 1.0 - self.transition_prob(c, c)

    def computational_pauli(self) -> dict[str, float]:
        c = (0,) * self.arity
        for f, p, dist in self.transitions[c]:
            if f == c:
                return {k: v * p for k, v in dist.items()}
        return {"I" * self.arity: 0.0}

    def pauli_error(self) -> float:
        d = self.computational_pauli()
        return 1.0 - d.get("I" * self.arity, 0.0)

    def is_identity(self, tol: float = 0.0) -> bool:
        for init, outs in self.transitions.items():
            for f, p, dist in outs:
                if f == init:
                    r = sum(1 for x in init if x == 0)
                    if abs(1 - p * dist.get("I" * r, 0.0)) > tol:
                        return False
        return True

    def normalization_error(self) -> float:
        err = 0.0
        for outs in self.transitions.values():
            err = max(err, abs(sum(p for _, p, _ in outs) - 1))
            for _, _, dist in outs:
                err = max(err, abs(sum(dist.values()) - 1))
        return err


def _sets(init, final):
    r, u, d, l = [], [], [], []
    for j, (a, b) in enumerate(zip(init, final)):
        if a == 0 and b == 0:
            r.append(j)
        elif a == 0:
            u.append(j)
        elif b == 0:
            d.append(j)
        else:
            l.append(j)
    return r, u, d, l


def twirl(k: KrausChannel, tol: float = 1e-8, drop: float = 1e-15) -> GPChannel:
    """Generalized Pauli twirl of a Kraus channel.

    For every initial label vector and final label vector the Kraus operators are
    cut into blocks between the matching leakage subspaces.  Computational inputs
    of devices that leak (set U) and computational outputs of devices that return
    (set D) are summed over; the block on the devices that stay computational (R)
    is expanded in the Pauli basis and the squared coefficients accumulated, with
    a 1/2^|U| average over the traced-out inputs.
    """
    if k.completeness_error() > tol:
        raise ValueError(f"channel is not trace preserving (error {k.completeness_error():.2e})")
    n = k.arity
    tensors = [op.reshape((LEVELS,) * (2 * n)) for op in k.operators]
    table = {}
    for init in itertools.product(LABELS, repeat=n):
        outs = []
        for final in itertools.product(LABELS, repeat=n):
            r, u, d, l = _sets(init, final)
            nr = len(r)
            names, mats = pauli_basis(nr)
            acc = np.zeros(len(names))
            for t in tensors:
                for uvals in itertools.product(range(2), repeat=len(u)):
                    for dvals in itertools.product(range(2), repeat=len(d)):
                        block = np.zeros((2**nr, 2**nr), dtype=complex)
                        for ro in itertools.product(range(2), repeat=nr):
                            for ri in itertools.product(range(2), repeat=nr):
                                out_idx = [0] * n
                                in_idx = [0] * n
                                for j, v in zip(r, ro):
                                    out_idx[j] = v
                                for j, v in zip(r, ri):
                                    in_idx[j] = v
                                for j, v in zip(u, uvals):
                                    in_idx[j] = v
                                    out_idx[j] = final[j]
                                for j, v in zip(d, dvals):
                                    in_idx[j] = init[j]
                                    out_idx[j] = v
                                for j in l:
                                    in_idx[j] = init[j]
                                    out_idx[j] = final[j]
                                row = int("".join(map(str, ro)), 2) if nr else 0
                                col = int("".join(map(str, ri)), 2) if nr else 0
                                block[row, col] = t[tuple(out_idx) + tuple(in_idx)]
                        coeffs = np.einsum("mij,ji->m", mats, block) / 2**nr
                        acc += np.abs(coeffs) ** 2
            acc /= 2 ** len(u)
            total = float(acc.sum())
            if total <= drop:
                continue
            dist = {name: float(v / total) for name, v in zip(names, acc) if v / total > drop}
            outs.append((tuple(final), total, dist))
        norm = sum(p for _, p, _ in outs)
        outs = [(f, p / norm, dist) for f, p, dist in outs]
        table[tuple(init)] = outs
    return GPChannel(n, table)


def pauli_gpc(dist: dict[str, float]) -> GPChannel:
    return twirl(pauli_kraus(dist))


def depolarizing_gpc(p: float, arity: int) -> GPChannel:
    return pauli_gpc(depolarizing_distribution(p, arity))


def bitflip_gpc(p: float) -> GPChannel:
    return pauli_gpc({"I": 1 - p, "X": p})


# ---------------------------------------------------------------------------
# Readout


@dataclass(frozen=True)
class ReadoutConfusion:
    """Row-stochastic matrix P(recorded symbol | true symbol), true symbols 0..3, recorded 0/1."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (4, 2):
            raise ValueError("confusion matrix must be 4x2")
        if np.any(m < 0) or np.max(np.abs(m.sum(axis=1) - 1)) > 1e-12:
            raise ValueError("confusion rows must be probability vectors")

    @property
    def flip_to_one(self) -> np.ndarray:
        return np.asarray(self.matrix)[:, 1]

    def is_identity(self) -> bool:
        m = np.asarray(self.matrix)
        return m[0, 0] == 1 and m[1, 1] == 1


def readout_confusion(eps0: float, eps1: float) -> ReadoutConfusion:
    for e in (eps0, eps1):
        if not 0 <= e <= 1:
            raise ValueError("readout error probabilities must lie in [0, 1]")
    m = np.array([[1 - eps0, eps0], [eps1, 1 - eps1], [0.5, 0.5], [0.5, 0.5]])
    return ReadoutConfusion(m)
