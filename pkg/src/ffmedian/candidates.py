"""Candidate median genes and conserved candidate adjacencies.

A candidate median gene is a triple (g, h, i), one gene per extant genome,
whose three pairwise similarities are all positive (a tripartite triangle).
Telomere triples arise automatically from the fixed telomere similarity
convention.  A candidate adjacency pairs two extremities of two
non-conflicting candidates; it is conserved if its projection is an extant
adjacency in at least one genome.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import kernels
from .genomes import (
    Extremity,
    Gene,
    Genome,
    GenomeError,
    SimilarityGraph,
    splice_genes,
)

log = logging.getLogger(__name__)

END_CODES = {"t": 0, "h": 1, "o": 2}
END_NAMES = {v: k for k, v in END_CODES.items()}


@dataclass(frozen=True, slots=True)
class CandidateGene:
    """A 3-clique (g, h, i) of the similarity graph, or a telomere triple."""

    g: Gene
    h: Gene
    i: Gene
    triple_score: float
    gene_score: float

    @property
    def genes(self) -> tuple[Gene, Gene, Gene]:
        return (self.g, self.h, self.i)

    @property
    def is_telomere_triple(self) -> bool:
        return self.g.is_telomere

    @property
    def ends(self) -> tuple[int, ...]:
        """Extremity end codes this candidate exposes."""
        return (2,) if self.is_telomere_triple else (0, 1)

    def gene_in(self, slot: int) -> Gene:
        return self.genes[slot]

    def __str__(self) -> str:
        return f"({self.g.name},{self.h.name},{self.i.name})"


@dataclass(frozen=True, slots=True)
class CandidateAdjacency:
    """A conserved candidate adjacency between two candidate extremities."""

    m1: CandidateGene
    end1: str
    m2: CandidateGene
    end2: str
    conserved_in: tuple[str, ...]
    score_factor: float  # the sixth-root factor, identical for every genome
    weight: float  # score_factor times the conservation count


class ConflictIndex:
    """Per extant gene, the candidates using it; answers conflict queries.

    Two distinct candidates conflict iff they share at least one extant
    gene or telomere.
    """

    def __init__(self, candidates: Sequence[CandidateGene]):
        self.candidates = candidates
        self.by_gene: dict[Gene, list[int]] = {}
        for idx, cand in enumerate(candidates):
            for gene in cand.genes:
                self.by_gene.setdefault(gene, []).append(idx)

    def conflicting(self, i: int, j: int) -> bool:
        if i == j:
            return False
        a, b = self.candidates[i], self.candidates[j]
        return a.g == b.g or a.h == b.h or a.i == b.i

    def conflicts_of(self, i: int) -> list[int]:
        seen: set[int] = set()
        for gene in self.candidates[i].genes:
            seen.update(self.by_gene[gene])
        seen.discard(i)
        return sorted(seen)

    def is_conflict_free(self, indices) -> bool:
        chosen = list(indices)
        counts: dict[Gene, int] = {}
        for idx in set(chosen):
            for gene in self.candidates[idx].genes:
                counts[gene] = counts.get(gene, 0) + 1
                if counts[gene] > 1:
                    return False
        return True


class InstanceIndex:
    """Dense integer indexing of a three-genome instance for the kernels."""

    def __init__(self, genomes: Sequence[Genome], sigma: SimilarityGraph):
        if len(genomes) != 3:
            raise GenomeError("an instance needs exactly three genomes")
        labels = [g.label for g in genomes]
        if len(set(labels)) != 3:
            raise GenomeError(f"genome labels must be distinct, got {labels}")
        self.genomes = tuple(genomes)
        self.labels = tuple(labels)
        self.genes: list[list[Gene]] = [
            sorted(g.genes, key=lambda x: x.name) for g in genomes
        ]
        self.index: list[dict[Gene, int]] = [
            {gene: k for k, gene in enumerate(genes)} for genes in self.genes
        ]
        self.sigma = sigma
        self.matrices = {
            (a, b): self._matrix(a, b) for a, b in ((0, 1), (0, 2), (1, 2))
        }
        self.adjacency_arrays = [self._adjacencies(x) for x in range(3)]

    def _matrix(self, a: int, b: int) -> np.ndarray:
        rows, cols = self.genes[a], self.genes[b]
        mat = np.zeros((len(rows), len(cols)), dtype=np.float64)
        for ri, gene_a in enumerate(rows):
            if gene_a.is_telomere:
                for ci, gene_b in enumerate(cols):
                    if gene_b.is_telomere:
                        mat[ri, ci] = 1.0
            else:
                for ci, gene_b in enumerate(cols):
                    if not gene_b.is_telomere:
                        value = self.sigma.get(gene_a, gene_b)
                        if value > 0.0:
                            mat[ri, ci] = value
        return mat

    def _adjacencies(self, x: int):
        idx = self.index[x]
        rows = []
        for e1, e2 in sorted(self.genomes[x].adjacencies):
            rows.append(
                (idx[e1.gene], END_CODES[e1.end], idx[e2.gene], END_CODES[e2.end])
            )
        arr = np.array(rows, dtype=np.int64).reshape(-1, 4)
        return arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]

    def sigma_value(self, a: int, ga: int, b: int, gb: int) -> float:
        if a > b:
            a, b, ga, gb = b, a, gb, ga
        return float(self.matrices[(a, b)][ga, gb])


def enumerate_candidates(
    G: Genome, H: Genome, I: Genome, sigma: SimilarityGraph
) -> list[CandidateGene]:
    """All candidate median genes, sorted lexicographically by (g, h, i)."""
    index = InstanceIndex((G, H, I), sigma)
    return _candidates_from_index(index)


def _candidates_from_index(index: InstanceIndex) -> list[CandidateGene]:
    gh = index.matrices[(0, 1)]
    gi = index.matrices[(0, 2)]
    hi = index.matrices[(1, 2)]
    tg, th, ti = kernels.triangles(gh, gi, hi)
    order = np.lexsort((ti, th, tg))
    tg, th, ti = tg[order], th[order], ti[order]
    triple = gh[tg, th] * gi[tg, ti] * hi[th, ti]
    gene_score = np.cbrt(triple)
    out = []
    genes_g, genes_h, genes_i = index.genes
    for k in range(tg.size):
        out.append(
            CandidateGene(
                genes_g[tg[k]],
                genes_h[th[k]],
                genes_i[ti[k]],
                float(triple[k]),
                float(gene_score[k]),
            )
        )
    return out


def adjacency_score(
    sigma: SimilarityGraph, e1: Extremity, e2: Extremity, e3: Extremity, e4: Extremity
) -> float:
    """Geometric mean of the two gene similarities behind an adjacency pair."""
    return math.sqrt(sigma.get(e1.gene, e2.gene) * sigma.get(e3.gene, e4.gene))


def median_adjacency_weight(m1: CandidateGene, m2: CandidateGene) -> float:
    """Sixth root of the product of the two triple scores.

    This is the per-genome adjacency score of a candidate adjacency and is
    independent of the genome and of the extremities involved.
    """
    return (m1.triple_score * m2.triple_score) ** (1.0 / 6.0)


class ConservedAdjacencyTable(Sequence):
    """Array-backed table of conserved candidate adjacencies.

    Rows are sorted by (m1, end1, m2, end2) with canonical endpoint order;
    records are materialized lazily.  `mask` holds one conservation bit per
    genome (bit k = genome k).
    """

    def __init__(self, candidates, labels, m1, e1, m2, e2, mask):
        self.candidates = candidates
        self.labels = tuple(labels)
        self.m1 = m1
        self.e1 = e1
        self.m2 = m2
        self.e2 = e2
        self.mask = mask
        triple = np.array([c.triple_score for c in candidates], dtype=np.float64)
        if len(self):
            self.factor = (triple[self.m1] * triple[self.m2]) ** (1.0 / 6.0)
            self.counts = np.bitwise_count(mask.astype(np.uint8)).astype(np.int64)
            self.weight = self.factor * self.counts
        else:
            self.factor = np.empty(0, dtype=np.float64)
            self.counts = np.empty(0, dtype=np.int64)
            self.weight = np.empty(0, dtype=np.float64)

    def __len__(self) -> int:
        return int(self.m1.size)

    def key(self, k: int) -> tuple[int, int, int, int]:
        return (int(self.m1[k]), int(self.e1[k]), int(self.m2[k]), int(self.e2[k]))

    def conserved_labels(self, k: int) -> tuple[str, ...]:
        m = int(self.mask[k])
        return tuple(self.labels[x] for x in range(3) if m >> x & 1)

    def __getitem__(self, k) -> CandidateAdjacency:
        if isinstance(k, slice):
            return [self[j] for j in range(*k.indices(len(self)))]
        if k < 0:
            k += len(self)
        if not 0 <= k < len(self):
            raise IndexError(k)
        return CandidateAdjacency(
            m1=self.candidates[int(self.m1[k])],
            end1=END_NAMES[int(self.e1[k])],
            m2=self.candidates[int(self.m2[k])],
            end2=END_NAMES[int(self.e2[k])],
            conserved_in=self.conserved_labels(k),
            score_factor=float(self.factor[k]),
            weight=float(self.weight[k]),
        )

    def subset(self, keep: np.ndarray) -> "ConservedAdjacencyTable":
        """New table restricted to the given row indices (candidate indexing kept)."""
        keep = np.asarray(keep, dtype=np.int64)
        return ConservedAdjacencyTable(
            self.candidates,
            self.labels,
            self.m1[keep],
            self.e1[keep],
            self.m2[keep],
            self.e2[keep],
            self.mask[keep],
        )


def enumerate_conserved_adjacencies(
    candidates: Sequence[CandidateGene],
    G: Genome,
    H: Genome,
    I: Genome,
    sigma: SimilarityGraph | None = None,
) -> ConservedAdjacencyTable:
    """All conserved candidate adjacencies induced by the extant genomes."""
    index = InstanceIndex((G, H, I), sigma if sigma is not None else SimilarityGraph())
    labels = index.labels
    n_cands = len(candidates)
    slot_idx = np.zeros((3, n_cands), dtype=np.int64)
    for ci, cand in enumerate(candidates):
        for s in range(3):
            slot_idx[s, ci] = index.index[s][cand.genes[s]]
    per_genome = []
    for x in range(3):
        indptr, cand_ids = _gene_csr(slot_idx[x], len(index.genes[x]))
        ax1, ae1, ax2, ae2 = index.adjacency_arrays[x]
        per_genome.append(
            kernels.conserved_pairs(
                ax1, ae1, ax2, ae2, indptr, cand_ids,
                slot_idx[0], slot_idx[1], slot_idx[2],
            )
        )
    m1, e1, m2, e2, mask = kernels.merge_genome_pairs(per_genome)
    return ConservedAdjacencyTable(list(candidates), labels, m1, e1, m2, e2, mask)


def _gene_csr(slot: np.ndarray, n_genes: int):
    order = np.argsort(slot, kind="stable")
    counts = np.bincount(slot, minlength=n_genes)
    indptr = np.zeros(n_genes + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, order.astype(np.int64)


def preprocess_discard_nonclique(
    G: Genome, H: Genome, I: Genome, sigma: SimilarityGraph
) -> tuple[Genome, Genome, Genome, dict[str, list[str]]]:
    """Splice out extant genes that belong to no tripartite 3-clique.

    Such genes can never be part of a median; removing them can recover
    adjacencies disrupted by insertions.  Returns the reduced genomes and a
    per-genome report of removed gene names.
    """
    candidates = enumerate_candidates(G, H, I, sigma)
    used: set[Gene] = set()
    for cand in candidates:
        used.update(cand.genes)
    reduced = []
    report: dict[str, list[str]] = {}
    for genome in (G, H, I):
        doomed = {
            gene
            for gene in genome.genes
            if not gene.is_telomere and gene not in used
        }
        report[genome.label] = sorted(g.name for g in doomed)
        reduced.append(splice_genes(genome, doomed) if doomed else genome)
    return reduced[0], reduced[1], reduced[2], report


def objective_value(
    adjacencies: Sequence[CandidateAdjacency],
) -> float:
    """Objective contribution of a set of conserved candidate adjacencies."""
    return float(sum(adj.weight for adj in adjacencies))
