"""Matching graphs, decomposition of hypergraphs and minimum-weight perfect matching.

Fired detectors are matched with shortest-path distances.  A pair (i, j) is only
worth matching directly when d_ij < B_i + B_j (B = distance to the boundary), so
the fired set splits into independent components; singletons go to the
boundary, small components are solved by subset dynamic programming and large
ones by the blossom algorithm on the usual doubled graph (one boundary copy per
detector, copies joined at zero cost).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numba import njit, prange

from ..geometry import Basis
from .blossom import max_weight_matching
from .dem import ErrorHypergraph, xor_prob

P_MIN = 1e-15
P_MAX = 0.5 - 1e-9
WEIGHT_SCALE = 65536.0
INF = np.int64(1) << np.int64(60)
DP_MAX = 12


def edge_weight(p):
    """ln((1-p)/p) with p clamped into (0, 1/2) so weights stay finite and positive."""
    p = np.clip(np.asarray(p, dtype=float), P_MIN, P_MAX)
    return np.log1p(-p) - np.log(p)


def quantize(w) -> np.ndarray:
    return np.maximum(1, np.rint(np.asarray(w) * WEIGHT_SCALE)).astype(np.int64)


@dataclass(frozen=True)
class MatchingGraph:
    """Nodes are the detectors of one basis (local index) plus a boundary node.

    ``ev[e] == -1`` marks a boundary edge.
    """

    detectors: np.ndarray  # global detector id of each local node
    eu: np.ndarray
    ev: np.ndarray
    p: np.ndarray
    obs: np.ndarray
    num_global: int = 0

    @property
    def num_nodes(self) -> int:
        return len(self.detectors)

    @property
    def num_edges(self) -> int:
        return len(self.eu)

    @property
    def weights(self) -> np.ndarray:
        return edge_weight(self.p)

    @cached_property
    def local_index(self) -> np.ndarray:
        idx = -np.ones(max(self.num_global, int(self.detectors.max(initial=-1)) + 1), dtype=np.int64)
        idx[self.detectors] = np.arange(len(self.detectors))
        return idx

    @cached_property
    def adjacency(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """CSR over V = num_nodes + 1 vertices (boundary last): offsets, neighbour, edge id."""
        V = self.num_nodes + 1
        u = self.eu
        v = np.where(self.ev < 0, self.num_nodes, self.ev)
        deg = np.bincount(np.concatenate([u, v]), minlength=V)
        offs = np.zeros(V + 1, dtype=np.int64)
        offs[1:] = np.cumsum(deg)
        order_src = np.concatenate([u, v])
        order_dst = np.concatenate([v, u])
        eids = np.concatenate([np.arange(len(u)), np.arange(len(u))])
        perm = np.lexsort((order_dst, order_src))
        return offs, order_dst[perm].astype(np.int64), eids[perm].astype(np.int64)


@dataclass
class Decomposition:
    """The two graphs plus the hyperedge -> graph-edge contribution table."""

    graphs: tuple[MatchingGraph, MatchingGraph]  # (X, Z)
    contrib_h: np.ndarray
    contrib_g: np.ndarray
    contrib_e: np.ndarray
    memory: int  # index of the graph carrying the observable
    obs_conflicts: int = 0
    split_hyperedges: int = 0
    hyper: ErrorHypergraph | None = field(default=None, repr=False)

    def graph_probabilities(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Edge probabilities of both graphs from per-hyperedge probabilities q."""
        return _combine(q, self.contrib_h, self.contrib_g, self.contrib_e,
                        self.graphs[0].num_edges, self.graphs[1].num_edges)


@njit(cache=True)
def _combine(q, ch, cg, ce, n0, n1):
    p0 = np.zeros(n0)
    p1 = np.zeros(n1)
    for t in range(ch.shape[0]):
        x = q[ch[t]]
        if cg[t] == 0:
            p0[ce[t]] = p0[ce[t]] * (1 - x) + x * (1 - p0[ce[t]])
        else:
            p1[ce[t]] = p1[ce[t]] * (1 - x) + x * (1 - p1[ce[t]])
    return p0, p1


def _split_part(dets: tuple, graphlike: dict) -> list[tuple]:
    """Split >2 same-basis detectors into pieces that exist as graphlike mechanisms."""
    dets = tuple(dets)
    n = len(dets)
    best = None
    for mask in range(1, 1 << n):
        a = tuple(d for i, d in enumerate(dets) if mask >> i & 1)
        b = tuple(d for i, d in enumerate(dets) if not mask >> i & 1)
        if not b or len(a) > 2 or len(b) > 2:
            continue
        if a in graphlike and b in graphlike:
            score = graphlike[a] + graphlike[b]
            if best is None or score > best[0]:
                best = (score, [a, b])
    if best is None:
        raise ValueError(f"undecomposable hyperedge part {dets}")
    return best[1]


def decompose_full(h: ErrorHypergraph, split: bool = False) -> Decomposition:
    """Decompose with the contribution table.

    A hyperedge with more than two detectors of one basis raises unless ``split`` is set,
    in which case it is split into two graphlike mechanisms already present in h.
    """
    db = h.detector_basis if h.detector_basis is not None else np.ones(h.num_detectors, dtype=np.uint8)
    memory = 1 if h.basis == Basis.Z else 0
    if not np.any(db == memory) and np.any(db != memory):
        memory = 1 - memory
    nodes = [np.flatnonzero(db == 0), np.flatnonzero(db == 1)]
    local = -np.ones(h.num_detectors, dtype=np.int64)
    for g in (0, 1):
        local[nodes[g]] = np.arange(len(nodes[g]))

    # graphlike pieces seen directly, used to split larger parts
    graphlike: dict[tuple, float] = {}
    for e in h.edges:
        for g in (0, 1):
            part = tuple(d for d in e.detectors if db[d] == g)
            other = [d for d in e.detectors if db[d] != g]
            if 1 <= len(part) <= 2 and not other:
                graphlike[part] = max(graphlike.get(part, 0.0), e.p)

    edge_ids: list[dict] = [{}, {}]
    edge_p: list[list] = [[], []]
    edge_obs: list[list] = [[], []]
    edge_best: list[list] = [[], []]
    ch, cg, ce = [], [], []
    conflicts = 0
    splits = 0
    for hi, e in enumerate(h.edges):
        parts = {g: tuple(d for d in e.detectors if db[d] == g) for g in (0, 1)}
        obs_target = memory if parts[memory] else 1 - memory
        for g in (0, 1):
            part = parts[g]
            if not part:
                continue
            if len(part) > 2 and not split:
                raise ValueError(f"undecomposable hyperedge {e.detectors}: {len(part)} detectors in one basis")
            pieces = [part] if len(part) <= 2 else _split_part(part, graphlike)
            if len(pieces) > 1:
                splits += 1
            for pi, piece in enumerate(pieces):
                obs = e.obs if (g == obs_target and pi == 0) else 0
                u = int(local[piece[0]])
                v = int(local[piece[1]]) if len(piece) == 2 else -1
                key = (u, v)
                if key not in edge_ids[g]:
                    edge_ids[g][key] = len(edge_p[g])
                    edge_p[g].append(0.0)
                    edge_obs[g].append(obs)
                    edge_best[g].append(e.p)
                eid = edge_ids[g][key]
                if edge_obs[g][eid] != obs:
                    conflicts += 1
                    if e.p > edge_best[g][eid]:
                        edge_obs[g][eid] = obs
                        edge_best[g][eid] = e.p
                edge_p[g][eid] = xor_prob(edge_p[g][eid], e.p)
                ch.append(hi)
                cg.append(g)
                ce.append(eid)
    graphs = []
    for g in (0, 1):
        keys = list(edge_ids[g])
        graphs.append(
            MatchingGraph(
                detectors=nodes[g].astype(np.int64),
                eu=np.array([k[0] for k in keys], dtype=np.int64),
                ev=np.array([k[1] for k in keys], dtype=np.int64),
                p=np.array(edge_p[g], dtype=float),
                obs=np.array(edge_obs[g], dtype=np.uint8),
                num_global=h.num_detectors,
            )
        )
    return Decomposition(
        (graphs[0], graphs[1]),
        np.array(ch, dtype=np.int64),
        np.array(cg, dtype=np.int64),
        np.array(ce, dtype=np.int64),
        memory,
        conflicts,
        splits,
        h,
    )


def decompose(h: ErrorHypergraph, split: bool = False) -> tuple[MatchingGraph, MatchingGraph]:
    """(X graph, Z graph) of a hypergraph."""
    return decompose_full(h, split).graphs


# ---------------------------------------------------------------------------
# shortest paths


@njit(cache=True)
def _heap_push(hk, hv, n, key, val):
    i = n
    hk[i] = key
    hv[i] = val
    while i > 0:
        p = (i - 1) >> 1
        if hk[p] > hk[i] or (hk[p] == hk[i] and hv[p] > hv[i]):
            t = hk[p]
            hk[p] = hk[i]
            hk[i] = t
            t2 = hv[p]
            hv[p] = hv[i]
            hv[i] = t2
            i = p
        else:
            break
    return n + 1


@njit(cache=True)
def _heap_pop(hk, hv, n):
    key = hk[0]
    val = hv[0]
    n -= 1
    hk[0] = hk[n]
    hv[0] = hv[n]
    i = 0
    while True:
        l = 2 * i + 1
        r = l + 1
        m = i
        if l < n and (hk[l] < hk[m] or (hk[l] == hk[m] and hv[l] < hv[m])):
            m = l
        if r < n and (hk[r] < hk[m] or (hk[r] == hk[m] and hv[r] < hv[m])):
            m = r
        if m == i:
            break
        t = hk[m]
        hk[m] = hk[i]
        hk[i] = t
        t2 = hv[m]
        hv[m] = hv[i]
        hv[i] = t2
        i = m
    return key, val, n


@njit(cache=True)
def _dijkstra(offs, nbr, eid, wq, eobs, src, dist, par, pedge, hk, hv, through_boundary, boundary, limit=INF):
    """Single-source shortest paths; nodes farther than ``limit`` are reported as INF."""
    V = offs.shape[0] - 1
    for v in range(V):
        dist[v] = INF
        par[v] = 0
        pedge[v] = -1
    dist[src] = 0
    n = _heap_push(hk, hv, 0, 0, src)
    while n > 0:
        d, u, n = _heap_pop(hk, hv, n)
        if d > dist[u]:
            continue
        if d > limit:
            for v in range(V):
                if dist[v] > limit:
                    dist[v] = INF
            break
        if u == boundary and u != src and not through_boundary:
            continue
        for t in range(offs[u], offs[u + 1]):
            v = nbr[t]
            e = eid[t]
            nd = d + wq[e]
            if nd < dist[v]:
                dist[v] = nd
                par[v] = par[u] ^ eobs[e]
                pedge[v] = e
                n = _heap_push(hk, hv, n, nd, v)


@njit(cache=True)
def _apsp(offs, nbr, eid, wq, eobs, boundary):
    V = offs.shape[0] - 1
    dist = np.empty((V, V), dtype=np.int64)
    par = np.empty((V, V), dtype=np.uint8)
    pedge = np.empty((V, V), dtype=np.int32)
    d = np.empty(V, dtype=np.int64)
    p = np.empty(V, dtype=np.uint8)
    pe = np.empty(V, dtype=np.int64)
    hk = np.empty(2 * offs[V] + 2 * V + 2, dtype=np.int64)
    hv = np.empty(2 * offs[V] + 2 * V + 2, dtype=np.int64)
    for s in range(V):
        _dijkstra(offs, nbr, eid, wq, eobs, s, d, p, pe, hk, hv, False, boundary)
        for v in range(V):
            dist[s, v] = d[v]
            par[s, v] = p[v]
            pedge[s, v] = pe[v]
    return dist, par, pedge


# ---------------------------------------------------------------------------
# matching of fired detectors given pairwise distances


@njit(cache=True)
def _solve(k, dk, bk, pk, pbk, mate):
    """Min-weight matching of k fired nodes (or boundary); mate[i] = j or -1. Returns the flip."""
    if k == 0:
        return 0
    # components of the pruned pair graph
    comp = np.arange(k)
    for i in range(k):
        for j in range(i + 1, k):
            if dk[i, j] < INF and dk[i, j] < bk[i] + bk[j]:
                a = i
                while comp[a] != a:
                    a = comp[a]
                b = j
                while comp[b] != b:
                    b = comp[b]
                if a != b:
                    if a < b:
                        comp[b] = a
                    else:
                        comp[a] = b
    root = np.empty(k, dtype=np.int64)
    for i in range(k):
        a = i
        while comp[a] != a:
            a = comp[a]
        root[i] = a
    flip = 0
    members = np.empty(k, dtype=np.int64)
    for r in range(k):
        m = 0
        for i in range(k):
            if root[i] == r:
                members[m] = i
                m += 1
        if m == 0:
            continue
        if m == 1:
            i = members[0]
            if bk[i] >= INF:
                return -1
            mate[i] = -1
            flip ^= pbk[i]
            continue
        if m == 2:
            i = members[0]
            j = members[1]
            mate[i] = j
            mate[j] = i
            flip ^= pk[i, j]
            continue
        if m <= DP_MAX:
            f = _solve_dp(members[:m].copy(), dk, bk, pk, pbk, mate)
            if f < 0:
                return -1
            flip ^= f
        else:
            f = _solve_blossom(members[:m].copy(), dk, bk, pk, pbk, mate)
            if f < 0:
                return -1
            flip ^= f
    return flip


@njit(cache=True)
def _solve_dp(mem, dk, bk, pk, pbk, mate):
    m = mem.shape[0]
    full = (1 << m) - 1
    cost = np.full(1 << m, INF, dtype=np.int64)
    choice = np.full(1 << m, -2, dtype=np.int64)
    cost[0] = 0
    for mask in range(1, full + 1):
        low = 0
        while not (mask >> low) & 1:
            low += 1
        rest = mask ^ (1 << low)
        i = mem[low]
        best = INF
        bc = -2
        if bk[i] < INF and cost[rest] < INF:
            best = bk[i] + cost[rest]
            bc = -1
        for t in range(low + 1, m):
            if (rest >> t) & 1:
                j = mem[t]
                if dk[i, j] < INF and dk[i, j] < bk[i] + bk[j]:
                    c = dk[i, j] + cost[rest ^ (1 << t)]
                    if c < best:
                        best = c
                        bc = t
        cost[mask] = best
        choice[mask] = bc
    if cost[full] >= INF:
        return -1
    flip = 0
    mask = full
    while mask:
        low = 0
        while not (mask >> low) & 1:
            low += 1
        i = mem[low]
        c = choice[mask]
        if c == -1:
            mate[i] = -1
            flip ^= pbk[i]
            mask ^= 1 << low
        else:
            j = mem[c]
            mate[i] = j
            mate[j] = i
            flip ^= pk[i, j]
            mask ^= (1 << low) | (1 << c)
    return flip


@njit(cache=True)
def _solve_blossom(mem, dk, bk, pk, pbk, mate):
    m = mem.shape[0]
    cmax = 0
    for a in range(m):
        i = mem[a]
        if bk[i] < INF and bk[i] > cmax:
            cmax = bk[i]
        for b in range(a + 1, m):
            j = mem[b]
            if dk[i, j] < INF and dk[i, j] > cmax:
                cmax = dk[i, j]
    C = cmax + 1
    ne = 0
    cap = m * (m - 1) + m
    ei = np.empty(cap, dtype=np.int64)
    ej = np.empty(cap, dtype=np.int64)
    ew = np.empty(cap, dtype=np.int64)
    for a in range(m):
        i = mem[a]
        for b in range(a + 1, m):
            j = mem[b]
            if dk[i, j] < INF and dk[i, j] < bk[i] + bk[j]:
                ei[ne] = a
                ej[ne] = b
                ew[ne] = 2 * (C - dk[i, j])
                ne += 1
        if bk[i] < INF:
            ei[ne] = a
            ej[ne] = m + a
            ew[ne] = 2 * (C - bk[i])
            ne += 1
        for b in range(a + 1, m):
            ei[ne] = m + a
            ej[ne] = m + b
            ew[ne] = 2 * C
            ne += 1
    mt = max_weight_matching(2 * m, ei[:ne], ej[:ne], ew[:ne], True)
    flip = 0
    for a in range(m):
        i = mem[a]
        t = mt[a]
        if t < 0:
            return -1
        if t >= m:
            mate[i] = -1
            flip ^= pbk[i]
        elif t > a:
            j = mem[t]
            mate[i] = j
            mate[j] = i
            flip ^= pk[i, j]
    return flip


@njit(cache=True, parallel=True)
def _decode_static(dist, par, boundary, offs, fired, flips, mates_out, want_mates):
    """Decode many shots against precomputed all-pairs distances."""
    nshots = offs.shape[0] - 1
    for s in prange(nshots):
        lo = offs[s]
        k = offs[s + 1] - lo
        if k == 0:
            flips[s] = 0
            continue
        dk = np.empty((k, k), dtype=np.int64)
        pk = np.empty((k, k), dtype=np.uint8)
        bk = np.empty(k, dtype=np.int64)
        pbk = np.empty(k, dtype=np.uint8)
        for a in range(k):
            u = fired[lo + a]
            bk[a] = dist[u, boundary]
            pbk[a] = par[u, boundary]
            for b in range(k):
                v = fired[lo + b]
                dk[a, b] = dist[u, v]
                pk[a, b] = par[u, v]
        mate = np.empty(k, dtype=np.int64)
        f = _solve(k, dk, bk, pk, pbk, mate)
        flips[s] = f
        if want_mates:
            for a in range(k):
                mates_out[lo + a] = mate[a]


@njit(cache=True)
def _decode_dynamic(adj_offs, nbr, eid, wq, eobs, boundary, fired, limits):
    """One shot with per-shot weights: Dijkstra from each fired node.

    ``limits[a]`` bounds the search from fired node a; it must be at least
    B_a + max_b B_b under the new weights (INF disables the cut).
    """
    k = fired.shape[0]
    V = adj_offs.shape[0] - 1
    dk = np.empty((k, k), dtype=np.int64)
    pk = np.empty((k, k), dtype=np.uint8)
    bk = np.empty(k, dtype=np.int64)
    pbk = np.empty(k, dtype=np.uint8)
    d = np.empty(V, dtype=np.int64)
    p = np.empty(V, dtype=np.uint8)
    pe = np.empty(V, dtype=np.int64)
    hk = np.empty(2 * adj_offs[V] + 2 * V + 2, dtype=np.int64)
    hv = np.empty(2 * adj_offs[V] + 2 * V + 2, dtype=np.int64)
    for a in range(k):
        _dijkstra(adj_offs, nbr, eid, wq, eobs, fired[a], d, p, pe, hk, hv, False, boundary, limits[a])
        bk[a] = d[boundary]
        pbk[a] = p[boundary]
        for b in range(k):
            dk[a, b] = d[fired[b]]
            pk[a, b] = p[fired[b]]
    mate = np.empty(k, dtype=np.int64)
    f = _solve(k, dk, bk, pk, pbk, mate)
    return f, mate


def syndrome_csr(syndromes: np.ndarray, graph: MatchingGraph) -> tuple[np.ndarray, np.ndarray]:
    """Fired local nodes of ``graph`` per shot from a (shots, D) detection matrix."""
    sub = np.asarray(syndromes, dtype=np.uint8)[:, graph.detectors]
    rows, cols = np.nonzero(sub)
    offs = np.zeros(sub.shape[0] + 1, dtype=np.int64)
    np.add.at(offs, rows + 1, 1)
    offs = np.cumsum(offs)
    return offs, cols.astype(np.int64)


@dataclass
class DecodeResult:
    flip: int
    matched: list | None = None  # (global detector, global detector or -1 for boundary)
    posterior: np.ndarray | None = None


class Matcher:
    """Exact MWPM on one matching graph with cached all-pairs shortest paths."""

    def __init__(self, graph: MatchingGraph):
        self.graph = graph
        self.boundary = graph.num_nodes
        self.offs, self.nbr, self.eid = graph.adjacency
        self.wq = quantize(graph.weights) if graph.num_edges else np.zeros(0, dtype=np.int64)
        self.eobs = graph.obs.astype(np.uint8)
        self._apsp = None

    @property
    def apsp(self):
        if self._apsp is None:
            self._apsp = _apsp(self.offs, self.nbr, self.eid, self.wq, self.eobs, self.boundary)
        return self._apsp

    def decode_batch(self, syndromes: np.ndarray) -> np.ndarray:
        """Predicted observable flips for a (shots, D) detection matrix."""
        offs, fired = syndrome_csr(syndromes, self.graph)
        flips = np.zeros(len(offs) - 1, dtype=np.int64)
        if self.graph.num_nodes == 0:
            return flips.astype(np.uint8)
        dist, par, _ = self.apsp
        mates = np.zeros(1, dtype=np.int64)
        _decode_static(dist, par, self.boundary, offs, fired, flips, mates, False)
        if np.any(flips < 0):
            raise ValueError("a fired detector has no path to a partner or the boundary")
        return flips.astype(np.uint8)

    def decode_local(self, fired_local: np.ndarray) -> tuple[int, np.ndarray]:
        fired_local = np.asarray(fired_local, dtype=np.int64)
        offs = np.array([0, len(fired_local)], dtype=np.int64)
        flips = np.zeros(1, dtype=np.int64)
        mates = np.zeros(max(1, len(fired_local)), dtype=np.int64)
        if len(fired_local) == 0:
            return 0, mates[:0]
        dist, par, _ = self.apsp
        _decode_static(dist, par, self.boundary, offs, fired_local, flips, mates, True)
        if flips[0] < 0:
            raise ValueError("a fired detector has no path to a partner or the boundary")
        return int(flips[0]), mates[: len(fired_local)]

    def path_edges(self, u: int, v: int) -> list[int]:
        """Edge ids on the cached shortest path from local node u to v (v may be the boundary)."""
        _, _, pedge = self.apsp
        out = []
        cur = v
        while cur != u:
            e = int(pedge[u, cur])
            if e < 0:
                raise ValueError("no path")
            out.append(e)
            a, b = int(self.graph.eu[e]), int(self.graph.ev[e])
            b = self.boundary if b < 0 else b
            cur = a if cur == b else b
        return out

    def decode_with_weights(self, fired_local: np.ndarray, weights_q: np.ndarray) -> tuple[int, np.ndarray]:
        fired_local = np.asarray(fired_local, dtype=np.int64)
        if len(fired_local) == 0:
            return 0, np.zeros(0, dtype=np.int64)
        lim = np.full(len(fired_local), INF, dtype=np.int64)
        f, mate = _decode_dynamic(self.offs, self.nbr, self.eid, weights_q, self.eobs, self.boundary, fired_local, lim)
        if f < 0:
            raise ValueError("a fired detector has no path to a partner or the boundary")
        return int(f), mate


def mwpm(g: MatchingGraph, syndrome, matcher: Matcher | None = None) -> DecodeResult:
    """Decode one syndrome (iterable of fired global detector ids) on graph g."""
    m = matcher or Matcher(g)
    fired = sorted(int(d) for d in syndrome)
    local = g.local_index[fired] if fired else np.zeros(0, dtype=np.int64)
    if np.any(local < 0):
        raise ValueError("syndrome contains detectors outside this graph")
    flip, mate = m.decode_local(local)
    pairs = []
    for a, j in enumerate(mate):
        if j < 0:
            pairs.append((int(g.detectors[local[a]]), -1))
        else:
            gi, gj = int(g.detectors[local[a]]), int(g.detectors[local[j]])
            if gi < gj:
                pairs.append((gi, gj))
    return DecodeResult(flip, sorted(pairs))
