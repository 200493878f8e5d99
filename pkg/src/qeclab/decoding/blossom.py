"""Maximum-weight general matching (Edmonds' blossom algorithm, primal-dual, O(n^3)).

Array-based numba implementation of the classic formulation with blossom
duals and per-blossom best-edge lists.  Integer weights keep every dual
update exact, so results are deterministic.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _leaves(b, nv, childs, nchild, out):
    """Write the vertices contained in blossom b into out; returns the count."""
    n = 0
    stack = np.empty(2 * nv + 1, dtype=np.int64)
    sp = 0
    stack[sp] = b
    sp += 1
    while sp > 0:
        sp -= 1
        t = stack[sp]
        if t < nv:
            out[n] = t
            n += 1
        else:
            for c in range(nchild[t] - 1, -1, -1):
                stack[sp] = childs[t, c]
                sp += 1
    return n


@njit(cache=True)
def max_weight_matching(nv, ei, ej, ew, maxcard):
    """mate[v] (vertex or -1) for a maximum-weight matching of the edge list.

    With maxcard=True the matching has maximum cardinality first.
    """
    ne = ei.shape[0]
    mate_out = -np.ones(nv, dtype=np.int64)
    if ne == 0:
        return mate_out
    maxw = 0
    for k in range(ne):
        if ew[k] > maxw:
            maxw = ew[k]
    nb2 = 2 * nv
    endpoint = np.empty(2 * ne, dtype=np.int64)
    for k in range(ne):
        endpoint[2 * k] = ei[k]
        endpoint[2 * k + 1] = ej[k]
    deg = np.zeros(nv + 1, dtype=np.int64)
    for k in range(ne):
        deg[ei[k] + 1] += 1
        deg[ej[k] + 1] += 1
    for v in range(nv):
        deg[v + 1] += deg[v]
    nbend = np.empty(2 * ne, dtype=np.int64)
    fill = deg[:-1].copy()
    for k in range(ne):
        nbend[fill[ei[k]]] = 2 * k + 1
        fill[ei[k]] += 1
        nbend[fill[ej[k]]] = 2 * k
        fill[ej[k]] += 1

    mate = -np.ones(nv, dtype=np.int64)
    label = np.zeros(nb2, dtype=np.int64)
    labelend = -np.ones(nb2, dtype=np.int64)
    inblossom = np.arange(nv)
    bparent = -np.ones(nb2, dtype=np.int64)
    childs = np.zeros((nb2, nv + 1), dtype=np.int64)
    nchild = np.zeros(nb2, dtype=np.int64)
    endps = np.zeros((nb2, nv + 1), dtype=np.int64)
    bbase = -np.ones(nb2, dtype=np.int64)
    bbase[:nv] = np.arange(nv)
    bestedge = -np.ones(nb2, dtype=np.int64)
    bbest = np.zeros((nb2, nb2), dtype=np.int64)
    nbbest = -np.ones(nb2, dtype=np.int64)  # -1 means "no list"
    unused = np.arange(nb2 - 1, nv - 1, -1)  # stack; pop from the end gives nv first
    nunused = nv
    dual = np.zeros(nb2, dtype=np.int64)
    dual[:nv] = maxw
    allow = np.zeros(ne, dtype=np.bool_)
    queue = np.empty(nv * nv + 16 * nv + 16, dtype=np.int64)
    qn = 0
    leafbuf = np.empty(nv, dtype=np.int64)
    leafbuf2 = np.empty(nv, dtype=np.int64)
    path = np.empty(nb2, dtype=np.int64)
    tmpc = np.empty(nv + 1, dtype=np.int64)
    tmpe = np.empty(nv + 1, dtype=np.int64)
    bestto = -np.ones(nb2, dtype=np.int64)
    # explicit work stacks for the recursive procedures
    lstack = np.empty((4 * nb2 + 4, 3), dtype=np.int64)

    for _stage in range(nv):
        label[:] = 0
        bestedge[:] = -1
        for b in range(nv, nb2):
            nbbest[b] = -1
        allow[:] = False
        qn = 0

        # --- assign labels to all free vertices ---
        for v0 in range(nv):
            if mate[v0] == -1 and label[inblossom[v0]] == 0:
                # assignLabel(v0, 1, -1)
                sp = 0
                lstack[0, 0] = v0
                lstack[0, 1] = 1
                lstack[0, 2] = -1
                sp = 1
                while sp > 0:
                    sp -= 1
                    w = lstack[sp, 0]
                    t = lstack[sp, 1]
                    p = lstack[sp, 2]
                    b = inblossom[w]
                    label[w] = t
                    label[b] = t
                    labelend[w] = p
                    labelend[b] = p
                    bestedge[w] = -1
                    bestedge[b] = -1
                    if t == 1:
                        nl = _leaves(b, nv, childs, nchild, leafbuf)
                        for i in range(nl):
                            queue[qn] = leafbuf[i]
                            qn += 1
                    else:
                        base = bbase[b]
                        lstack[sp, 0] = endpoint[mate[base]]
                        lstack[sp, 1] = 1
                        lstack[sp, 2] = mate[base] ^ 1
                        sp += 1

        augmented = False
        while True:
            while qn > 0 and not augmented:
                qn -= 1
                v = queue[qn]
                for ii in range(deg[v], deg[v + 1]):
                    p = nbend[ii]
                    k = p // 2
                    w = endpoint[p]
                    if inblossom[v] == inblossom[w]:
                        continue
                    kslack = 0
                    if not allow[k]:
                        kslack = dual[ei[k]] + dual[ej[k]] - 2 * ew[k]
                        if kslack <= 0:
                            allow[k] = True
                    if allow[k]:
                        if label[inblossom[w]] == 0:
                            # assignLabel(w, 2, p ^ 1)
                            lstack[0, 0] = w
                            lstack[0, 1] = 2
                            lstack[0, 2] = p ^ 1
                            sp = 1
                            while sp > 0:
                                sp -= 1
                                w2 = lstack[sp, 0]
                                t = lstack[sp, 1]
                                p2 = lstack[sp, 2]
                                b = inblossom[w2]
                                label[w2] = t
                                label[b] = t
                                labelend[w2] = p2
                                labelend[b] = p2
                                bestedge[w2] = -1
                                bestedge[b] = -1
                                if t == 1:
                                    nl = _leaves(b, nv, childs, nchild, leafbuf)
                                    for i in range(nl):
                                        queue[qn] = leafbuf[i]
                                        qn += 1
                                else:
                                    base = bbase[b]
                                    lstack[sp, 0] = endpoint[mate[base]]
                                    lstack[sp, 1] = 1
                                    lstack[sp, 2] = mate[base] ^ 1
                                    sp += 1
                        elif label[inblossom[w]] == 1:
                            # scanBlossom(v, w)
                            np_ = 0
                            base = -1
                            vv = v
                            ww = w
                            while vv != -1 or ww != -1:
                                b = inblossom[vv]
                                if label[b] & 4:
                                    base = bbase[b]
                                    break
                                path[np_] = b
                                np_ += 1
                                label[b] = 5
                                if labelend[b] == -1:
                                    vv = -1
                                else:
                                    vv = endpoint[labelend[b]]
                                    b = inblossom[vv]
                                    vv = endpoint[labelend[b]]
                                if ww != -1:
                                    tmp = vv
                                    vv = ww
                                    ww = tmp
                            for i in range(np_):
                                label[path[i]] = 1
                            if base >= 0:
                                # addBlossom(base, k)
                                bv = inblossom[ei[k]]
                                bw = inblossom[ej[k]]
                                bb = inblossom[base]
                                nunused -= 1
                                nb = unused[nunused]
                                bbase[nb] = base
                                bparent[nb] = -1
                                bparent[bb] = nb
                                nc = 0
                                while bv != bb:
                                    bparent[bv] = nb
                                    tmpc[nc] = bv
                                    tmpe[nc] = labelend[bv]
                                    nc += 1
                                    bv = inblossom[endpoint[labelend[bv]]]
                                # path = [bb] + reversed(tmpc); endps = reversed(tmpe) + [2k]
                                childs[nb, 0] = bb
                                for i in range(nc):
                                    childs[nb, 1 + i] = tmpc[nc - 1 - i]
                                    endps[nb, i] = tmpe[nc - 1 - i]
                                endps[nb, nc] = 2 * k
                                m = nc + 1
                                me = nc + 1
                                while bw != bb:
                                    bparent[bw] = nb
                                    childs[nb, m] = bw
                                    m += 1
                                    endps[nb, me] = labelend[bw] ^ 1
                                    me += 1
                                    bw = inblossom[endpoint[labelend[bw]]]
                                nchild[nb] = m
                                label[nb] = 1
                                labelend[nb] = labelend[bb]
                                dual[nb] = 0
                                nl = _leaves(nb, nv, childs, nchild, leafbuf)
                                for i in range(nl):
                                    lv = leafbuf[i]
                                    if label[inblossom[lv]] == 2:
                                        queue[qn] = lv
                                        qn += 1
                                    inblossom[lv] = nb
                                bestto[:] = -1
                                for ci in range(m):
                                    cb = childs[nb, ci]
                                    if nbbest[cb] == -1:
                                        nl2 = _leaves(cb, nv, childs, nchild, leafbuf2)
                                        for li in range(nl2):
                                            lv = leafbuf2[li]
                                            for jj in range(deg[lv], deg[lv + 1]):
                                                kk = nbend[jj] // 2
                                                i2 = ei[kk]
                                                j2 = ej[kk]
                                                if inblossom[j2] == nb:
                                                    tmp = i2
                                                    i2 = j2
                                                    j2 = tmp
                                                bj = inblossom[j2]
                                                if bj != nb and label[bj] == 1:
                                                    if bestto[bj] == -1:
                                                        bestto[bj] = kk
                                                    else:
                                                        k0 = bestto[bj]
                                                        s_new = dual[ei[kk]] + dual[ej[kk]] - 2 * ew[kk]
                                                        s_old = dual[ei[k0]] + dual[ej[k0]] - 2 * ew[k0]
                                                        if s_new < s_old:
                                                            bestto[bj] = kk
                                    else:
                                        for li in range(nbbest[cb]):
                                            kk = bbest[cb, li]
                                            i2 = ei[kk]
                                            j2 = ej[kk]
                                            if inblossom[j2] == nb:
                                                tmp = i2
                                                i2 = j2
                                                j2 = tmp
                                            bj = inblossom[j2]
                                            if bj != nb and label[bj] == 1:
                                                if bestto[bj] == -1:
                                                    bestto[bj] = kk
                                                else:
                                                    k0 = bestto[bj]
                                                    s_new = dual[ei[kk]] + dual[ej[kk]] - 2 * ew[kk]
                                                    s_old = dual[ei[k0]] + dual[ej[k0]] - 2 * ew[k0]
                                                    if s_new < s_old:
                                                        bestto[bj] = kk
                                    nbbest[cb] = -1
                                    bestedge[cb] = -1
                                cnt = 0
                                for bj in range(nb2):
                                    if bestto[bj] != -1:
                                        bbest[nb, cnt] = bestto[bj]
                                        cnt += 1
                                nbbest[nb] = cnt
                                bestedge[nb] = -1
                                for li in range(cnt):
                                    kk = bbest[nb, li]
                                    if bestedge[nb] == -1:
                                        bestedge[nb] = kk
                                    else:
                                        k0 = bestedge[nb]
                                        if dual[ei[kk]] + dual[ej[kk]] - 2 * ew[kk] < dual[ei[k0]] + dual[ej[k0]] - 2 * ew[k0]:
                                            bestedge[nb] = kk
                            else:
                                # augmentMatching(k)
                                for side in range(2):
                                    if side == 0:
                                        s = ei[k]
                                        p2 = 2 * k + 1
                                    else:
                                        s = ej[k]
                                        p2 = 2 * k
                                    while True:
                                        bs = inblossom[s]
                                        if bs >= nv:
                                            _augment_blossom_simple(bs, s, nv, bparent, childs, nchild, endps, endpoint, mate, bbase)
                                        mate[s] = p2
                                        if labelend[bs] == -1:
                                            break
                                        t = endpoint[labelend[bs]]
                                        bt = inblossom[t]
                                        s = endpoint[labelend[bt]]
                                        j = endpoint[labelend[bt] ^ 1]
                                        if bt >= nv:
                                            _augment_blossom_simple(bt, j, nv, bparent, childs, nchild, endps, endpoint, mate, bbase)
                                        mate[j] = labelend[bt]
                                        p2 = labelend[bt] ^ 1
                                augmented = True
                                break
                        elif label[w] == 0:
                            label[w] = 2
                            labelend[w] = p ^ 1
                    elif label[inblossom[w]] == 1:
                        b = inblossom[v]
                        if bestedge[b] == -1:
                            bestedge[b] = k
                        else:
                            k0 = bestedge[b]
                            if kslack < dual[ei[k0]] + dual[ej[k0]] - 2 * ew[k0]:
                                bestedge[b] = k
                    elif label[w] == 0:
                        if bestedge[w] == -1:
                            bestedge[w] = k
                        else:
                            k0 = bestedge[w]
                            if kslack < dual[ei[k0]] + dual[ej[k0]] - 2 * ew[k0]:
                                bestedge[w] = k
            if augmented:
                break

            deltatype = -1
            delta = 0
            deltaedge = -1
            deltablossom = -1
            if not maxcard:
                deltatype = 1
                delta = dual[0]
                for v in range(1, nv):
                    if dual[v] < delta:
                        delta = dual[v]
            for v in range(nv):
                if label[inblossom[v]] == 0 and bestedge[v] != -1:
                    k0 = bestedge[v]
                    d = dual[ei[k0]] + dual[ej[k0]] - 2 * ew[k0]
                    if deltatype == -1 or d < delta:
                        delta = d
                        deltatype = 2
                        deltaedge = k0
            for b in range(nb2):
                if bparent[b] == -1 and label[b] == 1 and bestedge[b] != -1:
                    k0 = bestedge[b]
                    d = (dual[ei[k0]] + dual[ej[k0]] - 2 * ew[k0]) // 2
                    if deltatype == -1 or d < delta:
                        delta = d
                        deltatype = 3
                        deltaedge = k0
            for b in range(nv, nb2):
                if bbase[b] >= 0 and bparent[b] == -1 and label[b] == 2 and (deltatype == -1 or dual[b] < delta):
                    delta = dual[b]
                    deltatype = 4
                    deltablossom = b
            if deltatype == -1:
                deltatype = 1
                delta = dual[0]
                for v in range(1, nv):
                    if dual[v] < delta:
                        delta = dual[v]
                if delta < 0:
                    delta = 0
            for v in range(nv):
                lb = label[inblossom[v]]
                if lb == 1:
                    dual[v] -= delta
                elif lb == 2:
                    dual[v] += delta
            for b in range(nv, nb2):
                if bbase[b] >= 0 and bparent[b] == -1:
                    if label[b] == 1:
                        dual[b] += delta
                    elif label[b] == 2:
                        dual[b] -= delta
            if deltatype == 1:
                break
            elif deltatype == 2:
                allow[deltaedge] = True
                i2 = ei[deltaedge]
                j2 = ej[deltaedge]
                if label[inblossom[i2]] == 0:
                    i2 = j2
                queue[qn] = i2
                qn += 1
            elif deltatype == 3:
                allow[deltaedge] = True
                queue[qn] = ei[deltaedge]
                qn += 1
            else:
                qn = _expand_blossom(
                    deltablossom, False, nv, bparent, childs, nchild, endps, endpoint, mate, bbase, inblossom,
                    label, labelend, bestedge, nbbest, allow, dual, unused, queue, qn, leafbuf, lstack,
                )
                nunused = _count_unused(bbase, nv)
                _rebuild_unused(bbase, nv, unused)
        if not augmented:
            break
        for b in range(nv, nb2):
            if bparent[b] == -1 and bbase[b] >= 0 and label[b] == 1 and dual[b] == 0:
                qn = _expand_blossom(
                    b, True, nv, bparent, childs, nchild, endps, endpoint, mate, bbase, inblossom,
                    label, labelend, bestedge, nbbest, allow, dual, unused, queue, qn, leafbuf, lstack,
                )
        nunused = _count_unused(bbase, nv)
        _rebuild_unused(bbase, nv, unused)
    for v in range(nv):
        if mate[v] >= 0:
            mate_out[v] = endpoint[mate[v]]
    return mate_out


@njit(cache=True)
def _count_unused(bbase, nv):
    c = 0
    for b in range(nv, 2 * nv):
        if bbase[b] < 0:
            c += 1
    return c


@njit(cache=True)
def _rebuild_unused(bbase, nv, unused):
    """Free blossom ids, highest first so the next pop returns the lowest."""
    c = 0
    for b in range(2 * nv - 1, nv - 1, -1):
        if bbase[b] < 0:
            unused[c] = b
            c += 1


@njit(cache=True)
def _augment_blossom_simple(b, v, nv, bparent, childs, nchild, endps, endpoint, mate, bbase):
    """Swap matched/unmatched edges along the even path from v to the base of blossom b."""
    n = nchild[b]
    t = v
    while bparent[t] != b:
        t = bparent[t]
    i = 0
    for c in range(n):
        if childs[b, c] == t:
            i = c
            break
    if t >= nv:
        _augment_blossom_simple(t, v, nv, bparent, childs, nchild, endps, endpoint, mate, bbase)
    j = i
    if i & 1:
        j -= n
        jstep = 1
        endptrick = 0
    else:
        jstep = -1
        endptrick = 1
    while j != 0:
        j += jstep
        t = childs[b, j % n]
        p = endps[b, (j - endptrick) % n] ^ endptrick
        if t >= nv:
            _augment_blossom_simple(t, endpoint[p], nv, bparent, childs, nchild, endps, endpoint, mate, bbase)
        j += jstep
        t = childs[b, j % n]
        if t >= nv:
            _augment_blossom_simple(t, endpoint[p ^ 1], nv, bparent, childs, nchild, endps, endpoint, mate, bbase)
        mate[endpoint[p]] = p ^ 1
        mate[endpoint[p ^ 1]] = p
    rc = np.empty(n, dtype=np.int64)
    re = np.empty(n, dtype=np.int64)
    for c in range(n):
        rc[c] = childs[b, (c + i) % n]
        re[c] = endps[b, (c + i) % n]
    for c in range(n):
        childs[b, c] = rc[c]
        endps[b, c] = re[c]
    bbase[b] = bbase[childs[b, 0]]


@njit(cache=True)
def _expand_blossom(
    b0, endstage, nv, bparent, childs, nchild, endps, endpoint, mate, bbase, inblossom,
    label, labelend, bestedge, nbbest, allow, dual, unused, queue, qn, leafbuf, lstack,
):
    """Dissolve blossom b0 (recursively at end of stage); returns the new queue length."""
    todo = np.empty(2 * nv + 1, dtype=np.int64)
    nt = 1
    todo[0] = b0
    while nt > 0:
        nt -= 1
        b = todo[nt]
        n = nchild[b]
        for c in range(n):
            s = childs[b, c]
            bparent[s] = -1
            if s < nv:
                inblossom[s] = s
            elif endstage and dual[s] == 0:
                todo[nt] = s
                nt += 1
            else:
                nl = _leaves(s, nv, childs, nchild, leafbuf)
                for i in range(nl):
                    inblossom[leafbuf[i]] = s
        if (not endstage) and label[b] == 2:
            entrychild = inblossom[endpoint[labelend[b] ^ 1]]
            j = 0
            for c in range(n):
                if childs[b, c] == entrychild:
                    j = c
                    break
            if j & 1:
                j -= n
                jstep = 1
                endptrick = 0
            else:
                jstep = -1
                endptrick = 1
            p = labelend[b]
            while j != 0:
                label[endpoint[p ^ 1]] = 0
                label[endpoint[endps[b, (j - endptrick) % n] ^ endptrick ^ 1]] = 0
                qn = _assign_label(endpoint[p ^ 1], 2, p, nv, inblossom, label, labelend, bestedge, bbase, mate,
                                   endpoint, childs, nchild, queue, qn, leafbuf, lstack)
                allow[endps[b, (j - endptrick) % n] // 2] = True
                j += jstep
                p = endps[b, (j - endptrick) % n] ^ endptrick
                allow[p // 2] = True
                j += jstep
            bv = childs[b, j % n]
            label[endpoint[p ^ 1]] = 2
            label[bv] = 2
            labelend[endpoint[p ^ 1]] = p
            labelend[bv] = p
            bestedge[bv] = -1
            j += jstep
            while childs[b, j % n] != entrychild:
                bv = childs[b, j % n]
                if label[bv] == 1:
                    j += jstep
                    continue
                nl = _leaves(bv, nv, childs, nchild, leafbuf)
                v = -1
                for i in range(nl):
                    v = leafbuf[i]
                    if label[v] != 0:
                        break
                if v >= 0 and label[v] != 0:
                    label[v] = 0
                    label[endpoint[mate[bbase[bv]]]] = 0
                    qn = _assign_label(v, 2, labelend[v], nv, inblossom, label, labelend, bestedge, bbase, mate,
                                       endpoint, childs, nchild, queue, qn, leafbuf, lstack)
                j += jstep
        label[b] = -1
        labelend[b] = -1
        nchild[b] = 0
        bbase[b] = -1
        nbbest[b] = -1
        bestedge[b] = -1
    return qn


@njit(cache=True)
def _assign_label(w0, t0, p0, nv, inblossom, label, labelend, bestedge, bbase, mate, endpoint, childs, nchild,
                  queue, qn, leafbuf, lstack):
    lstack[0, 0] = w0
    lstack[0, 1] = t0
    lstack[0, 2] = p0
    sp = 1
    while sp > 0:
        sp -= 1
        w = lstack[sp, 0]
        t = lstack[sp, 1]
        p = lstack[sp, 2]
        b = inblossom[w]
        label[w] = t
        label[b] = t
        labelend[w] = p
        labelend[b] = p
        bestedge[w] = -1
        bestedge[b] = -1
        if t == 1:
            nl = _leaves(b, nv, childs, nchild, leafbuf)
            for i in range(nl):
                queue[qn] = leafbuf[i]
                qn += 1
        else:
            base = bbase[b]
            lstack[sp, 0] = endpoint[mate[base]]
            lstack[sp, 1] = 1
            lstack[sp, 2] = mate[base] ^ 1
            sp += 1
    return qn
