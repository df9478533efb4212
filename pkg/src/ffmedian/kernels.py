"""Hot enumeration kernels: numba-jitted inner loops with a pure-numpy fallback.

The two kernels dominating runtime on large instances are the tripartite
triangle scan (candidate genes) and the per-extant-adjacency pair scan
(conserved candidate adjacencies).  Both exist in a numba and a numpy
variant producing identical arrays.

Backend selection via the FFMEDIAN_NUMBA environment variable:
  "0"   force the pure-numpy path
  "1"   require numba (raise if unavailable)
  unset use numba when importable
"""
from __future__ import annotations

import logging
import os

import numpy as np

log = logging.getLogger(__name__)

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag instead
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


def use_numba() -> bool:
    flag = os.environ.get("FFMEDIAN_NUMBA", "").strip()
    if flag == "0":
        return False
    if flag == "1":
        if not _HAVE_NUMBA:
            raise RuntimeError("FFMEDIAN_NUMBA=1 but numba is not importable")
        return True
    return _HAVE_NUMBA


def backend_name() -> str:
    return "numba" if use_numba() else "numpy"


# -- tripartite triangle scan ------------------------------------------------


@njit(cache=True)
def _triangles_numba(gh, gi, hi):
    ng, nh = gh.shape
    ni = gi.shape[1]
    count = 0
    for g in range(ng):
        for h in range(nh):
            if gh[g, h] <= 0.0:
                continue
            for i in range(ni):
                if gi[g, i] > 0.0 and hi[h, i] > 0.0:
                    count += 1
    out_g = np.empty(count, dtype=np.int64)
    out_h = np.empty(count, dtype=np.int64)
    out_i = np.empty(count, dtype=np.int64)
    k = 0
    for g in range(ng):
        for h in range(nh):
            if gh[g, h] <= 0.0:
                continue
            for i in range(ni):
                if gi[g, i] > 0.0 and hi[h, i] > 0.0:
                    out_g[k] = g
                    out_h[k] = h
                    out_i[k] = i
                    k += 1
    return out_g, out_h, out_i


def _triangles_numpy(gh, gi, hi):
    ng = gh.shape[0]
    hi_pos = hi > 0.0
    chunks_g, chunks_h, chunks_i = [], [], []
    for g in range(ng):
        hs = np.nonzero(gh[g] > 0.0)[0]
        if hs.size == 0:
            continue
        is_ = np.nonzero(gi[g] > 0.0)[0]
        if is_.size == 0:
            continue
        sub = hi_pos[np.ix_(hs, is_)]
        hh, ii = np.nonzero(sub)
        if hh.size:
            chunks_g.append(np.full(hh.size, g, dtype=np.int64))
            chunks_h.append(hs[hh].astype(np.int64))
            chunks_i.append(is_[ii].astype(np.int64))
    if not chunks_g:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy(), empty.copy()
    return (
        np.concatenate(chunks_g),
        np.concatenate(chunks_h),
        np.concatenate(chunks_i),
    )


def triangles(gh: np.ndarray, gi: np.ndarray, hi: np.ndarray):
    """Index triples (g, h, i) with all three pairwise scores positive.

    Emitted in lexicographic (g, h, i) index order.
    """
    gh = np.ascontiguousarray(gh, dtype=np.float64)
    gi = np.ascontiguousarray(gi, dtype=np.float64)
    hi = np.ascontiguousarray(hi, dtype=np.float64)
    if use_numba():
        return _triangles_numba(gh, gi, hi)
    return _triangles_numpy(gh, gi, hi)


# -- conserved candidate adjacency scan --------------------------------------
#
# For one genome: every extant adjacency {x1^e1, x2^e2} is matched against
# the candidates projecting onto x1 and x2 (CSR lists per extant gene);
# non-conflicting distinct candidate pairs are emitted as extremity pairs.
# End codes: 0 = tail, 1 = head, 2 = telomeric.


@njit(cache=True)
def _pairs_numba(ax1, ae1, ax2, ae2, indptr, cand_ids, cg, ch, ci):
    count = 0
    for k in range(ax1.shape[0]):
        s1, t1 = indptr[ax1[k]], indptr[ax1[k] + 1]
        s2, t2 = indptr[ax2[k]], indptr[ax2[k] + 1]
        for p in range(s1, t1):
            m1 = cand_ids[p]
            for q in range(s2, t2):
                m2 = cand_ids[q]
                if m1 == m2:
                    continue
                if cg[m1] == cg[m2] or ch[m1] == ch[m2] or ci[m1] == ci[m2]:
                    continue
                count += 1
    out_m1 = np.empty(count, dtype=np.int64)
    out_e1 = np.empty(count, dtype=np.int64)
    out_m2 = np.empty(count, dtype=np.int64)
    out_e2 = np.empty(count, dtype=np.int64)
    w = 0
    for k in range(ax1.shape[0]):
        s1, t1 = indptr[ax1[k]], indptr[ax1[k] + 1]
        s2, t2 = indptr[ax2[k]], indptr[ax2[k] + 1]
        for p in range(s1, t1):
            m1 = cand_ids[p]
            for q in range(s2, t2):
                m2 = cand_ids[q]
                if m1 == m2:
                    continue
                if cg[m1] == cg[m2] or ch[m1] == ch[m2] or ci[m1] == ci[m2]:
                    continue
                out_m1[w] = m1
                out_e1[w] = ae1[k]
                out_m2[w] = m2
                out_e2[w] = ae2[k]
                w += 1
    return out_m1, out_e1, out_m2, out_e2


def _pairs_numpy(ax1, ae1, ax2, ae2, indptr, cand_ids, cg, ch, ci):
    chunks = []
    for k in range(ax1.shape[0]):
        left = cand_ids[indptr[ax1[k]] : indptr[ax1[k] + 1]]
        right = cand_ids[indptr[ax2[k]] : indptr[ax2[k] + 1]]
        if left.size == 0 or right.size == 0:
            continue
        m1 = np.repeat(left, right.size)
        m2 = np.tile(right, left.size)
        keep = (
            (m1 != m2)
            & (cg[m1] != cg[m2])
            & (ch[m1] != ch[m2])
            & (ci[m1] != ci[m2])
        )
        if not keep.any():
            continue
        m1, m2 = m1[keep], m2[keep]
        e1 = np.full(m1.size, ae1[k], dtype=np.int64)
        e2 = np.full(m2.size, ae2[k], dtype=np.int64)
        chunks.append((m1, e1, m2, e2))
    if not chunks:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy(), empty.copy(), empty.copy()
    return tuple(np.concatenate([c[j] for c in chunks]) for j in range(4))


def conserved_pairs(ax1, ae1, ax2, ae2, indptr, cand_ids, cg, ch, ci):
    """Candidate extremity pairs projecting onto one genome's adjacencies."""
    args = [np.ascontiguousarray(a, dtype=np.int64) for a in
            (ax1, ae1, ax2, ae2, indptr, cand_ids, cg, ch, ci)]
    if use_numba():
        return _pairs_numba(*args)
    return _pairs_numpy(*args)


def merge_genome_pairs(per_genome):
    """Merge per-genome emissions into unique records with conservation bits.

    `per_genome` is a list of (m1, e1, m2, e2) tuples, one per genome in
    order.  Returns (m1, e1, m2, e2, mask) sorted by (m1, e1, m2, e2) with
    canonical endpoint order and the conservation bitmask (bit k = genome k).
    """
    keys, bits = [], []
    for k, (m1, e1, m2, e2) in enumerate(per_genome):
        if m1.size == 0:
            continue
        a = m1 * 3 + e1
        b = m2 * 3 + e2
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        keys.append(lo.astype(np.int64) << 32 | hi.astype(np.int64))
        bits.append(np.full(lo.size, 1 << k, dtype=np.int64))
    if not keys:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty.copy(), empty.copy(), empty.copy(), empty.copy()
    key = np.concatenate(keys)
    bit = np.concatenate(bits)
    order = np.argsort(key, kind="stable")
    key, bit = key[order], bit[order]
    boundaries = np.empty(key.size, dtype=bool)
    boundaries[0] = True
    boundaries[1:] = key[1:] != key[:-1]
    starts = np.nonzero(boundaries)[0]
    mask = np.bitwise_or.reduceat(bit, starts)
    ukey = key[starts]
    lo = ukey >> 32
    hi = ukey & 0xFFFFFFFF
    return lo // 3, lo % 3, hi // 3, hi % 3, mask
