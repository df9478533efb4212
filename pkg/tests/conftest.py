"""Shared instance builders for the test suite."""
from __future__ import annotations

import random

import pytest

from ffmedian.candidates import enumerate_candidates, enumerate_conserved_adjacencies
from ffmedian.genomes import Gene, SimilarityGraph, build_genome


def linear(label, entries, chrom="c1"):
    return build_genome(label, [(chrom, "linear", entries)])


def circular(label, entries, chrom="c1"):
    return build_genome(label, [(chrom, "circular", entries)])


def diagonal_sigma(names, value=1.0):
    sigma = SimilarityGraph()
    for nm in names:
        sigma.set(Gene("G", nm), Gene("H", nm), value)
        sigma.set(Gene("G", nm), Gene("I", nm), value)
        sigma.set(Gene("H", nm), Gene("I", nm), value)
    return sigma


def identical_genomes(names=("a", "b", "c"), shape="linear"):
    builder = linear if shape == "linear" else circular
    genomes = [builder(label, [(nm, 1) for nm in names]) for label in "GHI"]
    return genomes, diagonal_sigma(list(names))


@pytest.fixture
def four_candidate_instance():
    """Three genomes with four gene triples, two of them in conflicts.

    Gene orders: G = g1..g4, H = h1..h3, I = i1..i3; the similarity edges
    form triangles (g1,h1,i2), (g2,h2,i1), (g3,h3,i2), (g4,h3,i3), so the
    first/third triples share i2 and the last two share h3.
    """
    G = linear("G", [(f"g{k}", 1) for k in range(1, 5)])
    H = linear("H", [(f"h{k}", 1) for k in range(1, 4)])
    I = linear("I", [(f"i{k}", 1) for k in range(1, 4)])
    sigma = SimilarityGraph()
    edges = [
        ("G:g1", "H:h1"), ("H:h1", "I:i2"), ("G:g1", "I:i2"),
        ("G:g2", "H:h2"), ("H:h2", "I:i1"), ("G:g2", "I:i1"),
        ("G:g3", "H:h3"), ("H:h3", "I:i2"), ("G:g3", "I:i2"),
        ("G:g4", "H:h3"), ("H:h3", "I:i3"), ("G:g4", "I:i3"),
    ]
    for a, b in edges:
        ga, gb = a.split(":"), b.split(":")
        sigma.set(Gene(ga[0], ga[1]), Gene(gb[0], gb[1]), 0.5)
    return (G, H, I), sigma


def random_small_instance(seed, max_candidates=12, rng_genes=(2, 4)):
    """Small random instance with at most `max_candidates` candidates."""
    for attempt in range(60):
        rng = random.Random(seed * 1009 + attempt)
        n = rng.randint(*rng_genes)
        names = [f"x{k}" for k in range(n)]
        genomes = []
        for label in "GHI":
            order = names[:]
            rng.shuffle(order)
            entries = [(nm, rng.choice([1, -1])) for nm in order]
            shape = rng.choice(["linear", "circular", "circular"])
            genomes.append(build_genome(label, [("c1", shape, entries)]))
        sigma = SimilarityGraph()
        for nm in names:
            for a, b in (("G", "H"), ("G", "I"), ("H", "I")):
                if rng.random() < 0.9:
                    sigma.set(Gene(a, nm), Gene(b, nm), round(rng.uniform(0.2, 1.0), 3))
        for _ in range(rng.randint(0, 3)):
            if n < 2:
                break
            x, y = rng.sample(names, 2)
            a, b = rng.choice([("G", "H"), ("G", "I"), ("H", "I")])
            sigma.set(Gene(a, x), Gene(b, y), round(rng.uniform(0.2, 1.0), 3))
        cands = enumerate_candidates(*genomes, sigma)
        if 0 < len(cands) <= max_candidates:
            return genomes, sigma, cands
    raise RuntimeError(f"no usable instance for seed {seed}")


def random_blockish_instance(seed, max_candidates=11):
    """Random instance carrying a conserved block, for run detection."""
    for attempt in range(60):
        rng = random.Random(seed * 2003 + attempt)
        n = rng.randint(3, 5)
        names = [f"x{k}" for k in range(n)]
        block = names[: rng.randint(2, n)]
        rest = names[len(block):]
        genomes = []
        for label in "GHI":
            tail = rest[:]
            rng.shuffle(tail)
            order = block + tail if rng.random() < 0.8 else tail + block
            entries = [
                (nm, 1 if nm in block else rng.choice([1, -1])) for nm in order
            ]
            shape = rng.choice(["linear", "circular"])
            genomes.append(build_genome(label, [("c1", shape, entries)]))
        sigma = SimilarityGraph()
        for nm in names:
            for a, b in (("G", "H"), ("G", "I"), ("H", "I")):
                sigma.set(Gene(a, nm), Gene(b, nm), round(rng.uniform(0.3, 1.0), 3))
        for _ in range(rng.randint(0, 2)):
            x, y = rng.sample(names, 2)
            a, b = rng.choice([("G", "H"), ("G", "I"), ("H", "I")])
            sigma.set(Gene(a, x), Gene(b, y), round(rng.uniform(0.3, 1.0), 3))
        cands = enumerate_candidates(*genomes, sigma)
        if 0 < len(cands) <= max_candidates:
            return genomes, sigma, cands
    raise RuntimeError(f"no usable instance for seed {seed}")


def disjoint_clique_instance(seed, n=6, n_chroms=1):
    """Equal-weight instance whose candidate set is entirely conflict-free."""
    rng = random.Random(seed)
    names = [f"x{k}" for k in range(n)]
    genomes = []
    for label in "GHI":
        order = names[:]
        rng.shuffle(order)
        chroms = []
        bounds = sorted(rng.sample(range(1, n), n_chroms - 1)) if n_chroms > 1 else []
        pieces = []
        last = 0
        for b in bounds + [n]:
            pieces.append(order[last:b])
            last = b
        for ci, piece in enumerate(pieces):
            entries = [(nm, rng.choice([1, -1])) for nm in piece]
            chroms.append((f"c{ci}", "circular", entries))
        genomes.append(build_genome(label, chroms))
    return genomes, diagonal_sigma(names)


def build_tables(genomes, sigma):
    cands = enumerate_candidates(*genomes, sigma)
    table = enumerate_conserved_adjacencies(cands, *genomes, sigma)
    return cands, table
