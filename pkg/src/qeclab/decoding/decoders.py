"""Correlated matching, belief propagation, belief-matching and the exact ML oracle."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit, prange

from .dem import ErrorHypergraph
from .matching import (
    INF,
    P_MAX,
    P_MIN,
    WEIGHT_SCALE,
    DecodeResult,
    Decomposition,
    Matcher,
    _decode_dynamic,
    _solve,
    decompose_full,
    syndrome_csr,
)

LLR_CAP = 50.0


class Schedule(str, Enum):
    SERIAL = "serial"
    PARALLEL = "parallel"


class Rule(str, Enum):
    TANH = "tanh"
    MINSUM = "minsum"


@dataclass(frozen=True)
class BPConfig:
    schedule: Schedule = Schedule.SERIAL
    rule: Rule = Rule.TANH
    max_iters: int = 5
    minsum_scale: float = 0.7
    tol: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "schedule", Schedule(self.schedule))
        object.__setattr__(self, "rule", Rule(self.rule))
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if not 0 < self.minsum_scale <= 1:
            raise ValueError("minsum_scale must be in (0, 1]")


def _syndrome_vector(h: ErrorHypergraph, syndrome) -> np.ndarray:
    s = np.asarray(syndrome)
    if s.dtype != np.uint8 or s.shape != (h.num_detectors,):
        v = np.zeros(h.num_detectors, dtype=np.uint8)
        v[np.asarray(list(syndrome), dtype=np.int64)] = 1
        return v
    return s


# ---------------------------------------------------------------------------
# correlated matching


class CorrelatedTables:
    """Cross-basis partner lists: used edge in one graph -> (memory-graph edge, conditional prob)."""

    def __init__(self, dec: Decomposition, rule: str = "conditional"):
        self.dec = dec
        mem = dec.memory
        other = 1 - mem
        h = dec.hyper
        q = h.priors
        p_other, p_mem = dec.graph_probabilities(q)
        if mem == 0:
            p_other, p_mem = p_mem, p_other
        parts: dict[int, dict[int, list]] = {}
        for hi, g, e in zip(dec.contrib_h, dec.contrib_g, dec.contrib_e):
            parts.setdefault(int(hi), {}).setdefault(int(g), []).append(int(e))
        rows: dict[int, list] = {}
        for hi, by in parts.items():
            if other not in by or mem not in by:
                continue
            ph = q[hi]
            for e in by[other]:
                for f in by[mem]:
                    pf = p_mem[f]
                    if rule == "conditional":
                        c = min(1.0, ph / max(p_other[e], P_MIN))
                        rest = max(0.0, (pf - ph) / (1 - 2 * ph)) if ph < 0.5 else 0.0
                        new = rest * (1 - c) + c * (1 - rest)
                    elif rule == "odds":
                        r = ph / (1 - ph)
                        new = pf / (pf + (1 - pf) * r)
                    else:
                        raise ValueError(f"unknown reweight rule {rule!r}")
                    rows.setdefault(e, []).append((f, min(new, P_MAX)))
        n_other = dec.graphs[other].num_edges
        offs = np.zeros(n_other + 1, dtype=np.int64)
        fs, ps = [], []
        for e in range(n_other):
            for f, p in rows.get(e, []):
                fs.append(f)
                ps.append(p)
            offs[e + 1] = len(fs)
        self.offs = offs
        self.f = np.array(fs, dtype=np.int64)
        self.wq_new = np.maximum(1, np.rint((np.log1p(-np.array(ps)) - np.log(np.array(ps))) * WEIGHT_SCALE)).astype(
            np.int64
        ) if ps else np.zeros(0, dtype=np.int64)
        self.has_partners = len(fs) > 0


@njit(cache=True)
def _path_edges(pedge, eu, ev, boundary, u, v, out, n):
    cur = v
    while cur != u:
        e = pedge[u, cur]
        if e < 0:
            break
        out[n] = e
        n += 1
        a = eu[e]
        b = ev[e]
        if b < 0:
            b = boundary
        cur = a if cur == b else b
    return n


@njit(cache=True, parallel=True)
def _correlated_batch(
    o_dist, o_par, o_pedge, o_eu, o_ev, o_bound, o_offs, o_fired,
    m_dist, m_par, m_bound, m_offs, m_fired,
    m_adj, m_nbr, m_eid, m_wq, m_obs,
    c_offs, c_f, c_w, flips,
):
    nshots = m_offs.shape[0] - 1
    for s in prange(nshots):
        # pass 1 on the other graph: collect used edges
        lo = o_offs[s]
        k = o_offs[s + 1] - lo
        wq = m_wq.copy()
        changed = False
        if k > 0:
            dk = np.empty((k, k), dtype=np.int64)
            pk = np.empty((k, k), dtype=np.uint8)
            bk = np.empty(k, dtype=np.int64)
            pbk = np.empty(k, dtype=np.uint8)
            for a in range(k):
                u = o_fired[lo + a]
                bk[a] = o_dist[u, o_bound]
                pbk[a] = o_par[u, o_bound]
                for b in range(k):
                    dk[a, b] = o_dist[u, o_fired[lo + b]]
                    pk[a, b] = o_par[u, o_fired[lo + b]]
            mate = np.empty(k, dtype=np.int64)
            f = _solve(k, dk, bk, pk, pbk, mate)
            if f >= 0:
                buf = np.empty(o_dist.shape[0] + 1, dtype=np.int64)
                for a in range(k):
                    j = mate[a]
                    if j >= 0 and j < a:
                        continue
                    u = o_fired[lo + a]
                    v = o_bound if j < 0 else o_fired[lo + j]
                    n = _path_edges(o_pedge, o_eu, o_ev, o_bound, u, v, buf, 0)
                    for t in range(n):
                        e = buf[t]
                        for r in range(c_offs[e], c_offs[e + 1]):
                            if c_w[r] < wq[c_f[r]]:
                                wq[c_f[r]] = c_w[r]
                                changed = True
        # pass 2 on the memory graph
        lo = m_offs[s]
        k = m_offs[s + 1] - lo
        if k == 0:
            flips[s] = 0
            continue
        fired = m_fired[lo : lo + k].copy()
        if changed:
            # weights only decreased, so static boundary distances bound the new ones
            bmax = 0
            for a in range(k):
                if m_dist[fired[a], m_bound] > bmax:
                    bmax = m_dist[fired[a], m_bound]
            lim = np.empty(k, dtype=np.int64)
            for a in range(k):
                lim[a] = min(INF, m_dist[fired[a], m_bound] + bmax)
            f2, _ = _decode_dynamic(m_adj, m_nbr, m_eid, wq, m_obs, m_bound, fired, lim)
            flips[s] = f2
        else:
            dk = np.empty((k, k), dtype=np.int64)
            pk = np.empty((k, k), dtype=np.uint8)
            bk = np.empty(k, dtype=np.int64)
            pbk = np.empty(k, dtype=np.uint8)
            for a in range(k):
                u = fired[a]
                bk[a] = m_dist[u, m_bound]
                pbk[a] = m_par[u, m_bound]
                for b in range(k):
                    dk[a, b] = m_dist[u, fired[b]]
                    pk[a, b] = m_par[u, fired[b]]
            mate = np.empty(k, dtype=np.int64)
            flips[s] = _solve(k, dk, bk, pk, pbk, mate)


# ---------------------------------------------------------------------------
# belief propagation


def _tanner(h: ErrorHypergraph):
    """Edge list of the Tanner graph, grouped by variable and by check."""
    v_offs, v_chk = h.check_matrix
    n_edges = len(v_chk)
    var_of = np.repeat(np.arange(len(h.edges)), np.diff(v_offs))
    order = np.argsort(v_chk, kind="stable")
    c_offs = np.zeros(h.num_detectors + 1, dtype=np.int64)
    np.add.at(c_offs, v_chk + 1, 1)
    c_offs = np.cumsum(c_offs)
    return v_offs, v_chk, var_of.astype(np.int64), c_offs, order.astype(np.int64), n_edges


@njit(cache=True)
def _minsum_message(c, skip_edge, c_offs, c_edges, m_vc, syn, scale):
    sign = -1.0 if syn[c] else 1.0
    mn = LLR_CAP
    for t in range(c_offs[c], c_offs[c + 1]):
        e = c_edges[t]
        if e == skip_edge:
            continue
        x = m_vc[e]
        if x < 0:
            sign = -sign
            x = -x
        if x < mn:
            mn = x
    return sign * scale * mn


@njit(cache=True)
def _log_tanh(m):
    """(log|tanh(m/2)|, sign), computed stably for large |m|."""
    a = abs(m)
    if a < 1e-300:
        a = 1e-300
    return np.log(-np.expm1(-a)) - np.log1p(np.exp(-a)), (1 if m < 0 else 0)


@njit(cache=True)
def _from_log(lg, neg):
    """Inverse of _log_tanh, capped at LLR_CAP."""
    if lg >= 0:
        m = LLR_CAP
    else:
        m = np.log1p(np.exp(lg)) - np.log(-np.expm1(lg))
        if m > LLR_CAP:
            m = LLR_CAP
    return -m if neg else m


@njit(cache=True)
def _bp(prior_llr, v_offs, v_chk, c_offs, c_edges, syn, max_iters, serial, minsum, scale, tol, post):
    nv = v_offs.shape[0] - 1
    ne = v_chk.shape[0]
    nc = c_offs.shape[0] - 1
    m_vc = np.empty(ne)
    m_cv = np.zeros(ne)
    # per-check running sums of log|tanh| and sign parity (tanh rule)
    lt = np.empty(ne)
    sg = np.zeros(ne, dtype=np.int64)
    c_log = np.zeros(nc)
    c_sgn = np.zeros(nc, dtype=np.int64)
    for v in range(nv):
        for e in range(v_offs[v], v_offs[v + 1]):
            m_vc[e] = prior_llr[v]
    if not minsum:
        for e in range(ne):
            lt[e], sg[e] = _log_tanh(m_vc[e])
            c_log[v_chk[e]] += lt[e]
            c_sgn[v_chk[e]] ^= sg[e]
    for it in range(max_iters):
        delta = 0.0
        if serial:
            for v in range(nv):
                tot = prior_llr[v]
                for e in range(v_offs[v], v_offs[v + 1]):
                    c = v_chk[e]
                    if minsum:
                        new = _minsum_message(c, e, c_offs, c_edges, m_vc, syn, scale)
                    else:
                        new = _from_log(c_log[c] - lt[e], (c_sgn[c] ^ sg[e] ^ syn[c]) & 1)
                    d = abs(new - m_cv[e])
                    if d > delta:
                        delta = d
                    m_cv[e] = new
                    tot += new
                for e in range(v_offs[v], v_offs[v + 1]):
                    m_vc[e] = tot - m_cv[e]
                    if not minsum:
                        c = v_chk[e]
                        a, b = _log_tanh(m_vc[e])
                        c_log[c] += a - lt[e]
                        c_sgn[c] ^= b ^ sg[e]
                        lt[e] = a
                        sg[e] = b
        else:
            for c in range(nc):
                for t in range(c_offs[c], c_offs[c + 1]):
                    e = c_edges[t]
                    if minsum:
                        new = _minsum_message(c, e, c_offs, c_edges, m_vc, syn, scale)
                    else:
                        new = _from_log(c_log[c] - lt[e], (c_sgn[c] ^ sg[e] ^ syn[c]) & 1)
                    d = abs(new - m_cv[e])
                    if d > delta:
                        delta = d
                    m_cv[e] = new
            for v in range(nv):
                tot = prior_llr[v]
                for e in range(v_offs[v], v_offs[v + 1]):
                    tot += m_cv[e]
                for e in range(v_offs[v], v_offs[v + 1]):
                    m_vc[e] = tot - m_cv[e]
            if not minsum:
                for c in range(nc):
                    c_log[c] = 0.0
                    c_sgn[c] = 0
                for e in range(ne):
                    lt[e], sg[e] = _log_tanh(m_vc[e])
                    c_log[v_chk[e]] += lt[e]
                    c_sgn[v_chk[e]] ^= sg[e]
        if delta < tol:
            break
    for v in range(nv):
        tot = prior_llr[v]
        for e in range(v_offs[v], v_offs[v + 1]):
            tot += m_cv[e]
        if tot > LLR_CAP:
            tot = LLR_CAP
        elif tot < -LLR_CAP:
            tot = -LLR_CAP
        post[v] = 1.0 / (1.0 + np.exp(tot))


def _prior_llr(p):
    p = np.clip(np.asarray(p, dtype=float), 1e-300, 1 - 1e-16)
    return np.log1p(-p) - np.log(p)


class _BPRunner:
    def __init__(self, h: ErrorHypergraph, cfg: BPConfig):
        self.h = h
        self.cfg = cfg
        v_offs, v_chk, _, c_offs, c_edges, _ = _tanner(h)
        self.v_offs, self.v_chk, self.c_offs, self.c_edges = v_offs, v_chk, c_offs, c_edges
        self.llr = _prior_llr(h.priors)

    def args(self):
        c = self.cfg
        return (self.llr, self.v_offs, self.v_chk, self.c_offs, self.c_edges)

    def flags(self):
        c = self.cfg
        return c.max_iters, c.schedule == Schedule.SERIAL, c.rule == Rule.MINSUM, float(c.minsum_scale), float(c.tol)

    def run(self, syn: np.ndarray) -> np.ndarray:
        post = np.empty(len(self.h.edges))
        if len(self.h.edges) == 0:
            return post
        _bp(*self.args(), syn.astype(np.uint8), *self.flags(), post)
        return post


def belief_propagate(h: ErrorHypergraph, syndrome, cfg: BPConfig | None = None) -> np.ndarray:
    """Posterior probability of each hyperedge given the fired detectors."""
    cfg = cfg or BPConfig()
    if cfg.max_iters == 0:
        return h.priors.copy()
    return _BPRunner(h, cfg).run(_syndrome_vector(h, syndrome))


@njit(cache=True)
def _edge_probs(q, ch, ce, sel_g, cg, n):
    p = np.zeros(n)
    for t in range(ch.shape[0]):
        if cg[t] != sel_g:
            continue
        x = q[ch[t]]
        p[ce[t]] = p[ce[t]] * (1 - x) + x * (1 - p[ce[t]])
    return p


@njit(cache=True, parallel=True)
def _belief_match_batch(
    syn_all, llr, v_offs, v_chk, c_offs, c_edges, max_iters, serial, minsum, scale, tol,
    ch, ce, cg, mem, n_mem_edges, m_offs, m_fired, adj, nbr, eid, eobs, boundary, flips,
):
    nshots = syn_all.shape[0]
    nv = v_offs.shape[0] - 1
    for s in prange(nshots):
        lo = m_offs[s]
        k = m_offs[s + 1] - lo
        if k == 0:
            flips[s] = 0
            continue
        post = np.empty(nv)
        _bp(llr, v_offs, v_chk, c_offs, c_edges, syn_all[s], max_iters, serial, minsum, scale, tol, post)
        p = _edge_probs(post, ch, ce, mem, cg, n_mem_edges)
        wq = np.empty(n_mem_edges, dtype=np.int64)
        for e in range(n_mem_edges):
            x = min(max(p[e], P_MIN), P_MAX)
            w = np.rint((np.log1p(-x) - np.log(x)) * WEIGHT_SCALE)
            wq[e] = max(1, np.int64(w))
        lim = np.full(k, INF, dtype=np.int64)
        f, _ = _decode_dynamic(adj, nbr, eid, wq, eobs, boundary, m_fired[lo : lo + k].copy(), lim)
        flips[s] = f


# ---------------------------------------------------------------------------
# exact maximum likelihood


ML_MAX_EDGES = 30
ML_MAX_NULLITY = 24


def _gf2_solve_setup(H: np.ndarray):
    """Row-reduce H (D x n); returns (pivot columns, reduced rows, transform, nullspace basis as bitmasks)."""
    D, n = H.shape
    A = H.copy().astype(np.uint8)
    T = np.eye(D, dtype=np.uint8)
    piv = []
    r = 0
    for col in range(n):
        rows = np.flatnonzero(A[r:, col]) + r if r < D else np.array([], dtype=int)
        if len(rows) == 0:
            continue
        p = rows[0]
        if p != r:
            A[[r, p]] = A[[p, r]]
            T[[r, p]] = T[[p, r]]
        for i in range(D):
            if i != r and A[i, col]:
                A[i] ^= A[r]
                T[i] ^= T[r]
        piv.append(col)
        r += 1
        if r == D:
            break
    free = [c for c in range(n) if c not in piv]
    basis = []
    for fcol in free:
        v = 1 << fcol
        for i, pc in enumerate(piv):
            if A[i, fcol]:
                v |= 1 << pc
        basis.append(v)
    return piv, A, T, basis


@njit(cache=True)
def _ml_enumerate(x0, basis, lw, obsmask):
    """Total weight of each logical class over the coset x0 + span(basis)."""
    n = lw.shape[0]
    k = basis.shape[0]
    cur = x0
    s = 0.0
    for i in range(n):
        if (cur >> np.uint64(i)) & np.uint64(1):
            s += lw[i]
    scale = s
    tot0 = 0.0
    tot1 = 0.0
    ncomb = 1 << k
    for g in range(ncomb):
        if g > 0:
            bit = 0
            while not (g >> bit) & 1:
                bit += 1
            diff = basis[bit]
            d = diff
            i = 0
            while d:
                if d & np.uint64(1):
                    if (cur >> np.uint64(i)) & np.uint64(1):
                        s -= lw[i]
                    else:
                        s += lw[i]
                d >>= np.uint64(1)
                i += 1
            cur ^= diff
        if s > scale + 600.0:
            f = np.exp(scale - s)
            tot0 *= f
            tot1 *= f
            scale = s
        w = np.exp(s - scale)
        par = 0
        m = cur & obsmask
        while m:
            par ^= 1
            m &= m - np.uint64(1)
        if par:
            tot1 += w
        else:
            tot0 += w
    return tot0, tot1, scale


class MLDecoder:
    """Exhaustive coset enumeration; only for small hypergraphs."""

    def __init__(self, h: ErrorHypergraph):
        n = len(h.edges)
        if n > ML_MAX_EDGES:
            raise ValueError(f"ML decoding limited to {ML_MAX_EDGES} hyperedges, got {n}")
        self.h = h
        self.H = h.dense_check()
        self.piv, self.A, self.T, basis = _gf2_solve_setup(self.H)
        if len(basis) > ML_MAX_NULLITY:
            raise ValueError(f"nullspace dimension {len(basis)} exceeds {ML_MAX_NULLITY}")
        self.basis = np.array(basis, dtype=np.uint64)
        p = np.clip(h.priors, 1e-300, 1 - 1e-16)
        self.lw = np.log(p) - np.log1p(-p)
        self.obsmask = np.uint64(sum(1 << i for i, e in enumerate(h.edges) if e.obs))
        self.rank = len(self.piv)
        self._cache: dict[bytes, tuple] = {}

    def classes(self, syn: np.ndarray) -> tuple[float, float, float] | None:
        """(weight no-flip, weight flip, log scale), or None if the syndrome is inconsistent."""
        key = np.packbits(syn).tobytes()
        if key in self._cache:
            return self._cache[key]
        t = (self.T @ syn.astype(np.int64)) % 2
        if np.any(t[self.rank :]):
            out = None
        else:
            x0 = 0
            for i, pc in enumerate(self.piv):
                if t[i]:
                    x0 |= 1 << pc
            out = _ml_enumerate(np.uint64(x0), self.basis, self.lw, self.obsmask)
        self._cache[key] = out
        return out

    def decode(self, syn: np.ndarray) -> int:
        c = self.classes(syn)
        if c is None:
            return 0
        return int(c[1] > c[0])


def ml_decode(h: ErrorHypergraph, syndrome) -> DecodeResult:
    """Heavier of the two logical classes of error sets consistent with the syndrome (ties: no flip)."""
    if len(h.edges) == 0:
        return DecodeResult(0)
    syn = _syndrome_vector(h, syndrome)
    dec = MLDecoder(h)
    c = dec.classes(syn)
    if c is None:
        raise ValueError("syndrome is not reachable by any set of hyperedges")
    return DecodeResult(int(c[1] > c[0]))


# ---------------------------------------------------------------------------
# batch decoders


class Decoder:
    """Batch interface: ``decode_batch(det) -> predicted observable flips``."""

    name = "base"

    def decode_batch(self, det: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class MWPMDecoder(Decoder):
    name = "mwpm"

    def __init__(self, h: ErrorHypergraph, split: bool = True):
        self.dec = decompose_full(h, split)
        self.matcher = Matcher(self.dec.graphs[self.dec.memory])

    def decode_batch(self, det):
        return self.matcher.decode_batch(det)


class CorrelatedMWPMDecoder(Decoder):
    name = "correlated"

    def __init__(self, h: ErrorHypergraph, rule: str = "conditional", split: bool = True):
        self.dec = decompose_full(h, split)
        self.tables = CorrelatedTables(self.dec, rule)
        self.mem = Matcher(self.dec.graphs[self.dec.memory])
        self.other = Matcher(self.dec.graphs[1 - self.dec.memory])

    def decode_batch(self, det):
        det = np.asarray(det, dtype=np.uint8)
        if not self.tables.has_partners:
            return self.mem.decode_batch(det)
        mo, mf = syndrome_csr(det, self.mem.graph)
        oo, of = syndrome_csr(det, self.other.graph)
        flips = np.zeros(det.shape[0], dtype=np.int64)
        od, op, ope = self.other.apsp
        md, mp, _ = self.mem.apsp
        og = self.other.graph
        _correlated_batch(
            od, op, ope, og.eu, og.ev, self.other.boundary, oo, of,
            md, mp, self.mem.boundary, mo, mf,
            self.mem.offs, self.mem.nbr, self.mem.eid, self.mem.wq, self.mem.eobs,
            self.tables.offs, self.tables.f, self.tables.wq_new, flips,
        )
        if np.any(flips < 0):
            raise ValueError("a fired detector has no path to a partner or the boundary")
        return flips.astype(np.uint8)


class BeliefMatchingDecoder(Decoder):
    name = "belief_matching"

    def __init__(self, h: ErrorHypergraph, cfg: BPConfig | None = None, split: bool = True):
        self.cfg = cfg or BPConfig()
        self.h = h
        self.dec = decompose_full(h, split)
        self.mem = Matcher(self.dec.graphs[self.dec.memory])
        self.bp = _BPRunner(h, self.cfg)

    def decode_batch(self, det):
        det = np.ascontiguousarray(det, dtype=np.uint8)
        if self.cfg.max_iters == 0 or len(self.h.edges) == 0:
            return self.mem.decode_batch(det)
        mo, mf = syndrome_csr(det, self.mem.graph)
        flips = np.zeros(det.shape[0], dtype=np.int64)
        d = self.dec
        _belief_match_batch(
            det, *self.bp.args(), *self.bp.flags(),
            d.contrib_h, d.contrib_e, d.contrib_g, d.memory, self.mem.graph.num_edges,
            mo, mf, self.mem.offs, self.mem.nbr, self.mem.eid, self.mem.eobs, self.mem.boundary, flips,
        )
        if np.any(flips < 0):
            raise ValueError("a fired detector has no path to a partner or the boundary")
        return flips.astype(np.uint8)


class MLBatchDecoder(Decoder):
    name = "ml"

    def __init__(self, h: ErrorHypergraph):
        self.ml = MLDecoder(h)

    def decode_batch(self, det):
        det = np.asarray(det, dtype=np.uint8)
        return np.array([self.ml.decode(row) for row in det], dtype=np.uint8)


def correlated_mwpm(h: ErrorHypergraph, syndrome, rule: str = "conditional") -> DecodeResult:
    """Two-pass matching: pass 1 on both graphs, partners of used edges reweighted, pass 2 on the memory graph."""
    syn = _syndrome_vector(h, syndrome)
    if not syn.any():
        return DecodeResult(0)
    return DecodeResult(int(CorrelatedMWPMDecoder(h, rule).decode_batch(syn[None, :])[0]))


def belief_match(h: ErrorHypergraph, syndrome, cfg: BPConfig | None = None) -> DecodeResult:
    """BP posteriors become edge probabilities of the decomposed graphs, then matching."""
    cfg = cfg or BPConfig()
    syn = _syndrome_vector(h, syndrome)
    post = belief_propagate(h, syn, cfg)
    dec = decompose_full(h, split=True)
    flip = 0
    q = dec.graph_probabilities(post)
    for g, graph in enumerate(dec.graphs):
        if graph.num_nodes == 0:
            continue
        fired = graph.local_index[np.flatnonzero(syn)]
        fired = np.sort(fired[fired >= 0])
        m = Matcher(graph)
        wq = np.maximum(1, np.rint(np.log1p(-np.clip(q[g], P_MIN, P_MAX)) * WEIGHT_SCALE
                                   - np.log(np.clip(q[g], P_MIN, P_MAX)) * WEIGHT_SCALE)).astype(np.int64)
        f, _ = m.decode_with_weights(fired, wq)
        flip ^= f
    return DecodeResult(flip, posterior=post)
