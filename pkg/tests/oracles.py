"""Independent reference computations used by the tests.

None of these call into the code under test beyond plain data structures.
"""
import itertools
from functools import lru_cache

import numpy as np

LEVELS = 4
_P1 = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _label_projector(label):
    p = np.zeros((LEVELS, LEVELS), dtype=complex)
    if label == 0:
        p[0, 0] = p[1, 1] = 1
    else:
        p[label, label] = 1
    return p


def _kron(*ms):
    out = np.ones((1, 1), dtype=complex)
    for m in ms:
        out = np.kron(out, m)
    return out


def gpc_oracle(kraus_ops, arity, init, final):
    """Entangled-pair construction done densely.

    Every device that starts computational shares a Bell pair with a reference
    qubit; leaked devices start in their level.  After the channel, R devices
    (c -> c) are projected onto (P x I)|Phi>, other devices onto their final
    label subspace.  Returns {pauli string on R: joint probability}.
    """
    sys_states, refs = [], []
    for lab in init:
        if lab == 0:
            refs.append(True)
        else:
            refs.append(False)
    # state vector over (system devices..., reference qubits of computational devices...)
    n_ref = sum(refs)
    dim_sys = LEVELS**arity
    psi = np.zeros(dim_sys * 2**n_ref, dtype=complex)
    comp_choices = [range(2) if lab == 0 else [lab] for lab in init]
    for levels in itertools.product(*comp_choices):
        s = 0
        for lv in levels:
            s = s * LEVELS + lv
        r = 0
        for lv, is_c in zip(levels, refs):
            if is_c:
                r = r * 2 + lv
        psi[s * 2**n_ref + r] = 1.0
    psi /= np.linalg.norm(psi)
    outs = [k @ np.eye(dim_sys) for k in kraus_ops]
    states = [np.kron(k, np.eye(2**n_ref)) @ psi for k in outs]
    R = [j for j in range(arity) if init[j] == 0 and final[j] == 0]
    result = {}
    for paulis in itertools.product("IXYZ", repeat=len(R)):
        # measurement projector built per device: sys factor and ref factor, then reorder
        proj = _device_projector(arity, init, final, dict(zip(R, paulis)), refs)
        prob = sum(float(np.real(np.vdot(st, proj @ st))) for st in states)
        result["".join(paulis)] = prob
    return result


def _device_projector(arity, init, final, paulis, refs):
    """Projector on (sys_0..sys_{a-1}, ref...) ordering."""
    # build in interleaved order (sys_j, ref_j) then permute
    factors, dims = [], []
    for j in range(arity):
        if j in paulis:
            # Bell state (P x I)|Phi> on (sys level 0/1 embedded in 4 levels, ref)
            phi = np.zeros((LEVELS, 2), dtype=complex)
            for a in range(2):
                phi[a, a] = 1 / np.sqrt(2)
            v = (_P1[paulis[j]] @ phi[:2, :])
            vec = np.zeros((LEVELS, 2), dtype=complex)
            vec[:2, :] = v
            vec = vec.reshape(-1)
            factors.append(np.outer(vec, vec.conj()))
            dims.append((LEVELS, 2))
        else:
            p = _label_projector(final[j])
            if refs[j]:
                factors.append(np.kron(p, np.eye(2)))
                dims.append((LEVELS, 2))
            else:
                factors.append(p)
                dims.append((LEVELS,))
    big = _kron(*factors)
    # current order: interleaved; target: all sys then all refs
    order_dims = [d for ds in dims for d in ds]
    labels = []
    for j, ds in enumerate(dims):
        labels.append(("s", j))
        if len(ds) == 2:
            labels.append(("r", j))
    target = [lab for lab in labels if lab[0] == "s"] + [lab for lab in labels if lab[0] == "r"]
    perm = [labels.index(t) for t in target]
    n = len(order_dims)
    t = big.reshape(order_dims + order_dims)
    t = t.transpose(perm + [n + p for p in perm])
    size = int(np.prod(order_dims))
    return t.reshape(size, size)


def random_kraus(rng, arity, n_ops=3):
    dim = LEVELS**arity
    g = rng.normal(size=(n_ops * dim, dim)) + 1j * rng.normal(size=(n_ops * dim, dim))
    q, _ = np.linalg.qr(g)
    return [q[k * dim : (k + 1) * dim, :] for k in range(n_ops)]


# ---------------------------------------------------------------------------
# p_ij by numeric root finding


def pij_fsolve(xi, xj, xij):
    """Solve the two-mechanism moment system for (p_i, p_j, p_ij) numerically."""
    from scipy.optimize import fsolve

    def f(v):
        pi, pj, pij = v
        a = pi * (1 - pij) + pij * (1 - pi)
        b = pj * (1 - pij) + pij * (1 - pj)
        ab = pij * (1 - pi) * (1 - pj) + (1 - pij) * pi * pj
        return [a - xi, b - xj, ab - xij]

    sol, info, ier, _ = fsolve(f, [xi / 2, xj / 2, 0.01], full_output=True, xtol=1e-14)
    return sol, bool(np.max(np.abs(f(sol))) < 1e-12)


def cluster_fsolve(counts, n):
    """Independent-process probabilities for every nonempty subset, by fsolve on pattern frequencies."""
    from scipy.optimize import fsolve

    subsets = [s for k in range(1, n + 1) for s in itertools.combinations(range(n), k)]
    freq = np.asarray(counts, dtype=float) / np.sum(counts)

    def model(ps):
        dist = np.zeros(2**n)
        dist[0] = 1.0
        for s, p in zip(subsets, ps):
            mask = sum(1 << (n - 1 - i) for i in s)
            new = (1 - p) * dist
            for pat in range(2**n):
                new[pat ^ mask] += p * dist[pat]
            dist = new
        return dist

    def f(ps):
        return (model(ps) - freq)[1:]

    sol, info, ier, _ = fsolve(f, np.full(len(subsets), 0.01), full_output=True, xtol=1e-13)
    return dict(zip(subsets, sol)), ier == 1


# ---------------------------------------------------------------------------
# exact ML by brute force


def ml_bruteforce(edges, probs, obs, syndrome):
    """edges: list of detector tuples. Returns (P(no flip class), P(flip class))."""
    syn = tuple(np.flatnonzero(syndrome))
    tot = [0.0, 0.0]
    m = len(edges)
    for mask in range(1 << m):
        s = set()
        flip = 0
        w = 1.0
        for e in range(m):
            if mask >> e & 1:
                s ^= set(edges[e])
                flip ^= obs[e]
                w *= probs[e]
            else:
                w *= 1 - probs[e]
        if tuple(sorted(s)) == syn:
            tot[flip] += w
    return tot


# ---------------------------------------------------------------------------
# matching by exhaustive search


def min_matching_cost(dist, boundary_cost, fired):
    """Min total cost pairing fired nodes with each other or the boundary."""
    fired = tuple(fired)

    @lru_cache(None)
    def rec(rem):
        if not rem:
            return 0.0
        i, rest = rem[0], rem[1:]
        best = boundary_cost[i] + rec(rest)
        for t, j in enumerate(rest):
            best = min(best, dist[i][j] + rec(rest[:t] + rest[t + 1 :]))
        return best

    return rec(fired)


# ---------------------------------------------------------------------------
# BP in plain python (direct tanh products)


def bp_reference(edges, priors, n_det, syn, schedule, rule, iters, scale=0.7, cap=50.0):
    llr = np.log((1 - priors) / priors)
    E = [(v, c) for v, det in enumerate(edges) for c in det]
    mvc = {e: llr[e[0]] for e in E}
    mcv = {e: 0.0 for e in E}
    byc = {}
    for v, c in E:
        byc.setdefault(c, []).append(v)

    def cm(v, c):
        others = [mvc[(u, c)] for u in byc[c] if u != v]
        sgn0 = (-1) ** int(syn[c])
        if rule == "minsum":
            if not others:
                return sgn0 * scale * cap
            return sgn0 * np.prod(np.sign(others)) * scale * min(abs(x) for x in others)
        p = sgn0 * np.prod([np.tanh(x / 2) for x in others])
        with np.errstate(divide="ignore"):
            m = 2 * np.arctanh(p)
        return float(np.clip(m, -cap, cap))

    def update_v(v):
        tot = llr[v] + sum(mcv[(v, c)] for c in edges[v])
        for c in edges[v]:
            mvc[(v, c)] = tot - mcv[(v, c)]

    for _ in range(iters):
        if schedule == "serial":
            for v in range(len(edges)):
                for c in edges[v]:
                    mcv[(v, c)] = cm(v, c)
                update_v(v)
        else:
            new = {e: cm(*e) for e in E}
            mcv.update(new)
            for v in range(len(edges)):
                update_v(v)
    post = []
    for v in range(len(edges)):
        tot = np.clip(llr[v] + sum(mcv[(v, c)] for c in edges[v]), -cap, cap)
        post.append(1 / (1 + np.exp(tot)))
    return np.array(post)
