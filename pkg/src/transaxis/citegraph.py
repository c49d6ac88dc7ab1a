"""Citation-network analytics over level scores.

The graph is restricted to scoreable papers; edges run citing -> cited.
Per-source breadth-first reachability is summarized per level-score bin as
fraction reached (relative to all papers published up to the source's year),
mean path length, and mean publication-year gap, then averaged over a sampled
source set into bin-by-bin matrices. Undefined cells stay NaN in memory and
serialize as the literal `NA`, never 0.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .axis import PaperScore
from .corpus import PaperRecord
from .errors import DataError, ParseError


@dataclass(frozen=True)
class BinningSpec:
    """Fixed-width bins partitioning [-1, 1], labeled by midpoint."""

    width: float = 0.1

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("bin width must be positive")
        n = round(2.0 / self.width)
        if n < 1 or abs(n * self.width - 2.0) > 1e-9:
            raise ValueError(f"bin width {self.width} does not divide [-1, 1] evenly")

    @property
    def n_bins(self) -> int:
        return round(2.0 / self.width)

    def index(self, score: float) -> int:
        """Right-open bins except the final one, which is closed at 1."""
        k = int((score + 1.0) / self.width)
        return min(max(k, 0), self.n_bins - 1)

    def midpoints(self) -> np.ndarray:
        return -1.0 + (np.arange(self.n_bins) + 0.5) * self.width


@dataclass
class CitationGraph:
    """Immutable scored citation graph in CSR form, citing -> cited."""

    pmids: list[str]
    years: np.ndarray
    scores: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    index_of: dict[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self.index_of:
            self.index_of = {p: i for i, p in enumerate(self.pmids)}

    @property
    def n_nodes(self) -> int:
        return len(self.pmids)

    @property
    def n_edges(self) -> int:
        return len(self.indices)

    def out_neighbors(self, node: int) -> np.ndarray:
        return self.indices[self.indptr[node]:self.indptr[node + 1]]

    def node_of(self, pmid: str) -> int:
        idx = self.index_of.get(pmid)
        if idx is None:
            raise DataError(f"pmid {pmid} not in citation graph")
        return idx


def build_graph(
    papers: Iterable[PaperRecord],
    edges: Iterable[tuple[str, str]],
    scores: Mapping[str, PaperScore],
) -> CitationGraph:
    """Graph over scoreable papers; edges touching unscored papers drop out.

    Nodes are ordered by pmid and adjacency lists are sorted, so traversal
    order is deterministic.
    """
    pmids = sorted(p.pmid for p in papers if p.pmid in scores)
    index_of = {p: i for i, p in enumerate(pmids)}
    years = np.array([scores[p].year for p in pmids], dtype=np.int64)
    values = np.array([scores[p].score for p in pmids], dtype=np.float64)
    adj: list[list[int]] = [[] for _ in pmids]
    n_edges = 0
    for citing, cited in edges:
        u = index_of.get(citing)
        v = index_of.get(cited)
        if u is None or v is None or u == v:
            continue
        adj[u].append(v)
        n_edges += 1
    indptr = np.zeros(len(pmids) + 1, dtype=np.int64)
    indices = np.empty(n_edges, dtype=np.int64)
    pos = 0
    for u, targets in enumerate(adj):
        targets = sorted(set(targets))
        indices[pos:pos + len(targets)] = targets
        pos += len(targets)
        indptr[u + 1] = pos
    return CitationGraph(pmids, years, values, indptr, indices[:pos].copy(), index_of)


def pair_heatmap(g: CitationGraph, bins: BinningSpec) -> np.ndarray:
    """Edge counts by (citing-score bin, cited-score bin)."""
    n = bins.n_bins
    counts = np.zeros((n, n), dtype=np.int64)
    node_bin = np.array([bins.index(s) for s in g.scores], dtype=np.int64)
    for u in range(g.n_nodes):
        bu = node_bin[u]
        for v in g.out_neighbors(u):
            counts[bu, node_bin[v]] += 1
    return counts


def mean_reference_diff(g: CitationGraph, pmid: str) -> Optional[float]:
    """Paper score minus the mean score of its references; None if none."""
    node = g.node_of(pmid)
    targets = g.out_neighbors(node)
    if len(targets) == 0:
        return None
    return float(g.scores[node] - np.mean(g.scores[targets]))


def mean_abs_edge_gap(g: CitationGraph) -> float:
    """Mean |score(citing) - score(cited)| over all edges (homophily statistic)."""
    if g.n_edges == 0:
        raise DataError("graph has no edges")
    total = 0.0
    for u in range(g.n_nodes):
        targets = g.out_neighbors(u)
        if len(targets):
            total += float(np.abs(g.scores[u] - g.scores[targets]).sum())
    return total / g.n_edges


def shuffled_null(g: CitationGraph, seed: int) -> CitationGraph:
    """Null model: scores permuted across nodes, topology and years fixed."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(g.n_nodes)
    return CitationGraph(
        g.pmids, g.years, g.scores[perm].copy(), g.indptr, g.indices, g.index_of
    )


# ---------------------------------------------------------------------------
# Reachability
# ---------------------------------------------------------------------------

def _bfs(g: CitationGraph, source: int) -> np.ndarray:
    """Distances from source along citing->cited edges; -1 where unreachable."""
    dist = np.full(g.n_nodes, -1, dtype=np.int64)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for v in g.out_neighbors(u):
            if dist[v] < 0:
                dist[v] = du
                queue.append(v)
    return dist


def _node_bins(g: CitationGraph, bins: BinningSpec) -> np.ndarray:
    return np.array([bins.index(s) for s in g.scores], dtype=np.int64)


def _reach_vectors(
    g: CitationGraph, source: int, bins: BinningSpec, node_bin: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    nb = bins.n_bins
    dist = _bfs(g, source)
    reached = np.flatnonzero(dist > 0)  # excludes the source itself

    # denominator: papers published up to the source's year, minus the source
    eligible = g.years <= g.years[source]
    denom = np.bincount(node_bin[eligible], minlength=nb).astype(np.float64)
    denom[node_bin[source]] -= 1

    num = np.bincount(node_bin[reached], minlength=nb).astype(np.float64)
    sum_l = np.bincount(node_bin[reached], weights=dist[reached], minlength=nb)
    gaps = (g.years[source] - g.years[reached]).astype(np.float64)
    sum_y = np.bincount(node_bin[reached], weights=gaps, minlength=nb)

    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(denom > 0, num / np.where(denom > 0, denom, 1.0), np.nan)
        l = np.where(num > 0, sum_l / np.where(num > 0, num, 1.0), np.nan)
        y = np.where(num > 0, sum_y / np.where(num > 0, num, 1.0), np.nan)
    return r, l, y


def reach_from_source(
    g: CitationGraph, pmid: str, bins: BinningSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-target-bin (fraction reached, mean distance, mean year gap).

    Fractions are relative to all graph papers published up to the source's
    year (the source excluded); bins with an empty denominator are NaN, as are
    mean distance/gap for bins with nothing reached.
    """
    node = g.node_of(pmid)
    return _reach_vectors(g, node, bins, _node_bins(g, bins))


@dataclass
class ReachabilityMatrices:
    """Source-bin x target-bin means of per-source reachability vectors."""

    bins: BinningSpec
    r: np.ndarray
    l: np.ndarray
    y: np.ndarray
    counts: np.ndarray  # sampled sources per source bin


def aggregate_reach(
    g: CitationGraph, sample_fraction: float, bins: BinningSpec, seed: int
) -> ReachabilityMatrices:
    """Average per-source vectors over a uniform source sample.

    Sources whose value for a cell is undefined are excluded from that cell's
    mean. With sample_fraction = 1 the result is seed-independent.
    """
    if not 0.0 < sample_fraction <= 1.0:
        raise ValueError("sample_fraction must lie in (0, 1]")
    if g.n_nodes == 0:
        raise DataError("citation graph is empty")
    n_sample = max(1, round(sample_fraction * g.n_nodes))
    if n_sample >= g.n_nodes:
        sample = np.arange(g.n_nodes)
    else:
        rng = np.random.default_rng(seed)
        sample = np.sort(rng.choice(g.n_nodes, size=n_sample, replace=False))

    nb = bins.n_bins
    node_bin = _node_bins(g, bins)
    sums = {key: np.zeros((nb, nb)) for key in "rly"}
    cells = {key: np.zeros((nb, nb), dtype=np.int64) for key in "rly"}
    counts = np.zeros(nb, dtype=np.int64)
    for source in sample:
        i_bin = node_bin[source]
        counts[i_bin] += 1
        for key, vec in zip("rly", _reach_vectors(g, int(source), bins, node_bin)):
            defined = ~np.isnan(vec)
            sums[key][i_bin, defined] += vec[defined]
            cells[key][i_bin, defined] += 1
    out = {}
    for key in "rly":
        with np.errstate(invalid="ignore"):
            out[key] = np.where(
                cells[key] > 0, sums[key] / np.where(cells[key] > 0, cells[key], 1), np.nan
            )
    return ReachabilityMatrices(bins, out["r"], out["l"], out["y"], counts)


# ---------------------------------------------------------------------------
# On-disk forms
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return "NA" if np.isnan(x) else format(x, ".9g")


def save_matrix(matrix: np.ndarray, bins: BinningSpec, path) -> None:
    """Bin-midpoint-labeled TSV with `NA` for undefined cells."""
    mids = [format(m, ".9g") for m in bins.midpoints()]
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("bin\t" + "\t".join(mids) + "\n")
        for i, row in enumerate(np.asarray(matrix, dtype=np.float64)):
            fh.write(mids[i] + "\t" + "\t".join(_fmt(x) for x in row) + "\n")


def save_heatmap(counts: np.ndarray, bins: BinningSpec, path) -> None:
    mids = [format(m, ".9g") for m in bins.midpoints()]
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("bin\t" + "\t".join(mids) + "\n")
        for i, row in enumerate(counts):
            fh.write(mids[i] + "\t" + "\t".join(str(int(x)) for x in row) + "\n")


def save_mu(g: CitationGraph, path) -> None:
    """pmid, score, mean reference difference for papers with references."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for node, pmid in enumerate(g.pmids):
            targets = g.out_neighbors(node)
            if len(targets) == 0:
                continue
            mu = float(g.scores[node] - np.mean(g.scores[targets]))
            fh.write(
                f"{pmid}\t{format(float(g.scores[node]), '.9g')}\t{format(mu, '.9g')}\n"
            )


def load_matrix(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"matrix file not found: {path}")
    rows = []
    with path.open(encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("bin\t"):
            raise ParseError(path, 1, "missing bin header")
        for raw in fh:
            parts = raw.rstrip("\n").split("\t")[1:]
            rows.append([np.nan if p == "NA" else float(p) for p in parts])
    return np.asarray(rows, dtype=np.float64)
