"""Numba and numpy kernel paths must agree exactly."""
import numpy as np
import pytest

from ffmedian import kernels


def random_matrices(seed, ng=8, nh=7, ni=9, density=0.4):
    rng = np.random.default_rng(seed)
    def mat(a, b):
        m = rng.random((a, b))
        m[m > density] = 0.0
        return m
    return mat(ng, nh), mat(ng, ni), mat(nh, ni)


def brute_triangles(gh, gi, hi):
    out = []
    for g in range(gh.shape[0]):
        for h in range(gh.shape[1]):
            for i in range(gi.shape[1]):
                if gh[g, h] > 0 and gi[g, i] > 0 and hi[h, i] > 0:
                    out.append((g, h, i))
    return out


@pytest.mark.parametrize("backend", ["0", "1"])
def test_triangles_match_bruteforce(backend, monkeypatch):
    monkeypatch.setenv("FFMEDIAN_NUMBA", backend)
    for seed in range(6):
        gh, gi, hi = random_matrices(seed)
        tg, th, ti = kernels.triangles(gh, gi, hi)
        got = sorted(zip(tg.tolist(), th.tolist(), ti.tolist()))
        assert got == brute_triangles(gh, gi, hi)


def test_backends_agree_on_triangles(monkeypatch):
    for seed in range(4):
        gh, gi, hi = random_matrices(seed, 10, 11, 9)
        monkeypatch.setenv("FFMEDIAN_NUMBA", "0")
        a = kernels.triangles(gh, gi, hi)
        monkeypatch.setenv("FFMEDIAN_NUMBA", "1")
        b = kernels.triangles(gh, gi, hi)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)


def random_pair_inputs(seed):
    rng = np.random.default_rng(seed)
    n_genes, n_cands, n_adj = 10, 14, 8
    cg = rng.integers(0, n_genes, n_cands)
    ch = rng.integers(0, n_genes, n_cands)
    ci = rng.integers(0, n_genes, n_cands)
    # CSR over genome-slot 0 (which candidate sits on which gene)
    order = np.argsort(cg, kind="stable")
    indptr = np.zeros(n_genes + 1, dtype=np.int64)
    np.cumsum(np.bincount(cg, minlength=n_genes), out=indptr[1:])
    ax1 = rng.integers(0, n_genes, n_adj)
    ax2 = rng.integers(0, n_genes, n_adj)
    ae1 = rng.integers(0, 2, n_adj)
    ae2 = rng.integers(0, 2, n_adj)
    return ax1, ae1, ax2, ae2, indptr, order, cg, ch, ci


def test_backends_agree_on_pairs(monkeypatch):
    for seed in range(5):
        args = random_pair_inputs(seed)
        monkeypatch.setenv("FFMEDIAN_NUMBA", "0")
        a = kernels.conserved_pairs(*args)
        monkeypatch.setenv("FFMEDIAN_NUMBA", "1")
        b = kernels.conserved_pairs(*args)
        key_a = sorted(zip(*(x.tolist() for x in a)))
        key_b = sorted(zip(*(x.tolist() for x in b)))
        assert key_a == key_b


def test_merge_deduplicates_and_masks():
    m1 = np.array([0, 0, 1])
    e1 = np.array([1, 1, 0])
    m2 = np.array([2, 2, 3])
    e2 = np.array([0, 0, 1])
    genome0 = (m1[:2], e1[:2], m2[:2], e2[:2])  # same record twice
    genome1 = (m1[2:], e1[2:], m2[2:], e2[2:])
    out = kernels.merge_genome_pairs([genome0, genome1, tuple(np.empty(0, np.int64) for _ in range(4))])
    lo, elo, hi, ehi, mask = out
    assert lo.tolist() == [0, 1]
    assert mask.tolist() == [1, 2]


def test_merge_canonicalizes_endpoint_order():
    # the same unordered pair reported from both sides collapses
    g0 = (np.array([5]), np.array([1]), np.array([2]), np.array([0]))
    g1 = (np.array([2]), np.array([0]), np.array([5]), np.array([1]))
    lo, elo, hi, ehi, mask = kernels.merge_genome_pairs(
        [g0, g1, tuple(np.empty(0, np.int64) for _ in range(4))]
    )
    assert len(lo) == 1
    assert (lo[0], elo[0], hi[0], ehi[0]) == (2, 0, 5, 1)
    assert mask[0] == 0b011


def test_env_flag_forces_backend(monkeypatch):
    monkeypatch.setenv("FFMEDIAN_NUMBA", "0")
    assert kernels.backend_name() == "numpy"
    monkeypatch.delenv("FFMEDIAN_NUMBA")
    assert kernels.backend_name() in ("numba", "numpy")
