"""Sparse symmetric term co-occurrence counts over sliding year windows."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Optional

from .corpus import PaperRecord
from .errors import DataError, ParseError

DEFAULT_WINDOW = 5


@dataclass
class CooccurrenceMatrix:
    """Upper-triangular pair counts for one window ending at year `t`.

    `entries[(i, j)]` with i < j is the number of window papers containing
    both terms; `node_paper_counts` is per-term window paper counts (None for
    matrices re-imported from disk, where it is not recoverable).
    """

    t: int
    entries: dict[tuple[int, int], int]
    node_paper_counts: Optional[dict[int, int]] = field(default=None, compare=False)

    def n_edges(self) -> int:
        return len(self.entries)

    def vocabulary(self) -> list[int]:
        """Term ids with at least one co-occurrence edge, ascending."""
        ids = set()
        for i, j in self.entries:
            ids.add(i)
            ids.add(j)
        return sorted(ids)

    def weighted_degrees(self) -> dict[int, int]:
        """Per-term sum of incident pair counts (the noise-distribution base)."""
        deg: dict[int, int] = {}
        for (i, j), w in self.entries.items():
            deg[i] = deg.get(i, 0) + w
            deg[j] = deg.get(j, 0) + w
        return deg


def build_window_matrix(
    papers: Iterable[PaperRecord], t: int, window: int = DEFAULT_WINDOW
) -> CooccurrenceMatrix:
    """Count papers published in [t - window + 1, t] containing each term pair.

    Each paper contributes at most one count per pair; the result is
    independent of paper order. An empty window yields a valid empty matrix.
    """
    lo = t - window + 1
    entries: dict[tuple[int, int], int] = {}
    node_counts: dict[int, int] = {}
    for rec in papers:
        if not lo <= rec.year <= t:
            continue
        terms = sorted(set(rec.terms))
        for tid in terms:
            node_counts[tid] = node_counts.get(tid, 0) + 1
        for i, j in combinations(terms, 2):
            entries[(i, j)] = entries.get((i, j), 0) + 1
    return CooccurrenceMatrix(t, entries, node_counts)


def merge_matrices(parts: Iterable[CooccurrenceMatrix]) -> CooccurrenceMatrix:
    """Additive merge of per-partition counts (same window)."""
    parts = list(parts)
    if not parts:
        raise DataError("nothing to merge")
    t = parts[0].t
    if any(p.t != t for p in parts):
        raise DataError("cannot merge matrices of different windows")
    entries: dict[tuple[int, int], int] = {}
    node_counts: dict[int, int] = {}
    for p in parts:
        for pair, w in p.entries.items():
            entries[pair] = entries.get(pair, 0) + w
        if p.node_paper_counts:
            for tid, c in p.node_paper_counts.items():
                node_counts[tid] = node_counts.get(tid, 0) + c
    return CooccurrenceMatrix(t, entries, node_counts or None)


def export_edge_list(m: CooccurrenceMatrix, path) -> None:
    """Write `i<TAB>j<TAB>weight` rows sorted by (i, j)."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for (i, j) in sorted(m.entries):
            fh.write(f"{i}\t{j}\t{m.entries[(i, j)]}\n")


def load_edge_list(path, t: int) -> CooccurrenceMatrix:
    path = Path(path)
    if not path.exists():
        raise DataError(f"edge list not found: {path}")
    entries: dict[tuple[int, int], int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, lineno, "expected 'i<TAB>j<TAB>weight'")
            try:
                i, j, w = int(parts[0]), int(parts[1]), int(parts[2])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            if not (0 <= i < j) or w < 0:
                raise ParseError(path, lineno, f"bad entry ({i}, {j}, {w})")
            if (i, j) in entries:
                raise ParseError(path, lineno, f"duplicate pair ({i}, {j})")
            entries[(i, j)] = w
    return CooccurrenceMatrix(t, entries)


def edge_file_name(t: int) -> str:
    return f"cooccur_{t}.tsv"
