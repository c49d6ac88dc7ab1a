"""Translational axis per window and level scores for terms and papers.

The axis points from the centroid of basic seed terms (cell/molecular and
animal pooled) to the centroid of applied (human) seed terms. A term's level
score is the cosine of its vector with the axis; a paper's is the mean of its
terms' scores in the window of its publication year, admitted only when
strictly more than half of its original term list is embedded there.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .corpus import MeshVocabulary, PaperRecord, weber_category
from .embed import TermEmbedding, cosine_similarity
from .errors import DataError, NumericError, ParseError


@dataclass(frozen=True)
class TranslationalAxis:
    t: int
    vector: np.ndarray
    n_basic: int
    n_applied: int


@dataclass(frozen=True)
class PaperScore:
    score: float
    year: int
    n_scored: int
    n_original: int


@dataclass
class LevelScoreTable:
    """All term scores keyed by (window year, term id) and paper scores by pmid.

    Treated as immutable once built; per-year views are cached.
    """

    term_scores: dict[tuple[int, int], float]
    paper_scores: dict[str, PaperScore]

    def years(self) -> list[int]:
        return sorted({t for t, _ in self.term_scores})

    def term_scores_at(self, t: int) -> Optional[dict[int, float]]:
        """Term-id -> score map of one window; None for unembedded years."""
        cache = getattr(self, "_by_year", None)
        if cache is None:
            cache = {}
            for (year, tid), s in self.term_scores.items():
                cache.setdefault(year, {})[tid] = s
            self._by_year = cache
        return cache.get(t)


def centroid(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Unweighted componentwise mean."""
    if len(vectors) == 0:
        raise ValueError("centroid of an empty set")
    return np.mean(np.asarray(vectors, dtype=np.float64), axis=0)


def build_axis(embedding: TermEmbedding, vocab: MeshVocabulary) -> TranslationalAxis:
    """Applied-seed centroid minus basic-seed centroid for one window.

    Seed terms absent from the window simply drop out of their centroid.
    """
    basic = [embedding.vector(t) for t in vocab.basic_ids() if t in embedding]
    applied = [embedding.vector(t) for t in vocab.applied_ids() if t in embedding]
    if not basic or not applied:
        raise DataError(
            f"window {embedding.t}: need >= 1 basic and >= 1 applied seed term "
            f"(got {len(basic)} basic, {len(applied)} applied)"
        )
    vec = centroid(applied) - centroid(basic)
    if not np.linalg.norm(vec) > 0:
        raise NumericError(f"window {embedding.t}: zero-norm translational axis")
    return TranslationalAxis(embedding.t, vec, len(basic), len(applied))


def term_level_score(
    term_id: int, embedding: TermEmbedding, axis: TranslationalAxis
) -> Optional[float]:
    """Cosine of the term's vector with the axis; None when not in the window."""
    if term_id not in embedding:
        return None
    return cosine_similarity(embedding.vector(term_id), axis.vector)


def score_terms(embedding: TermEmbedding, axis: TranslationalAxis) -> dict[int, float]:
    return {
        int(tid): cosine_similarity(embedding.vector(int(tid)), axis.vector)
        for tid in embedding.term_ids
    }


def _majority(n_scored: int, n_original: int) -> bool:
    # strictly more than half; an exact half is not scoreable
    return 2 * n_scored > n_original


def score_paper(
    paper: PaperRecord, tables: "LevelScoreTable | Mapping[int, float]"
) -> Optional[PaperScore]:
    """Mean of term scores in the paper's window, or None if the majority
    of the original term list is not embedded there.

    `tables` is either the full LevelScoreTable (the paper's year selects the
    window, erroring when that year is not embedded) or a prefetched
    term-id -> score map for the window. Terms are averaged in sorted-id
    order so the result is exactly invariant under term-list permutations.
    """
    if isinstance(tables, LevelScoreTable):
        term_scores_at_year = tables.term_scores_at(paper.year)
        if term_scores_at_year is None:
            raise DataError(f"year {paper.year} is outside the embedded range")
    else:
        term_scores_at_year = tables
    present = [
        term_scores_at_year[t] for t in sorted(set(paper.terms)) if t in term_scores_at_year
    ]
    if not _majority(len(present), paper.n_original):
        return None
    return PaperScore(float(np.mean(present)), paper.year, len(present), paper.n_original)


def score_paper_alt(
    paper: PaperRecord, embedding: TermEmbedding, axis: TranslationalAxis
) -> Optional[PaperScore]:
    """Alternative paper score: cosine of the axis with the paper centroid."""
    vectors = [embedding.vector(t) for t in sorted(set(paper.terms)) if t in embedding]
    if not _majority(len(vectors), paper.n_original):
        return None
    value = cosine_similarity(centroid(vectors), axis.vector)
    return PaperScore(value, paper.year, len(vectors), paper.n_original)


def score_corpus(
    papers: Iterable[PaperRecord],
    embeddings: Mapping[int, TermEmbedding],
    vocab: MeshVocabulary,
) -> LevelScoreTable:
    """Score every window's terms and every paper published in an embedded year."""
    axes = {t: build_axis(emb, vocab) for t, emb in embeddings.items()}
    term_scores: dict[tuple[int, int], float] = {}
    per_year: dict[int, dict[int, float]] = {}
    for t, emb in embeddings.items():
        scores = score_terms(emb, axes[t])
        per_year[t] = scores
        for tid, s in scores.items():
            term_scores[(t, tid)] = s
    paper_scores: dict[str, PaperScore] = {}
    for rec in papers:
        year_scores = per_year.get(rec.year)
        if year_scores is None:
            continue
        ps = score_paper(rec, year_scores)
        if ps is not None:
            paper_scores[rec.pmid] = ps
    return LevelScoreTable(term_scores, paper_scores)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass
class TermTrajectory:
    term_id: int
    years: list[int]
    scores: list[Optional[float]]  # None where the term is absent
    baseline: list[Optional[float]]  # mean score over all terms per year


def term_trajectory(
    term_id: int,
    years: Sequence[int],
    tables: LevelScoreTable,
    vocab: MeshVocabulary | None = None,
) -> TermTrajectory:
    """Per-year level score of one term plus the all-term mean as baseline.

    A term absent from every window yields an all-None series, which is
    distinct from an unknown term id (an error when a vocabulary is given).
    """
    if term_id < 0 or (vocab is not None and term_id >= len(vocab)):
        raise DataError(f"unknown term id {term_id}")
    embedded = set(tables.years())
    missing = [t for t in years if t not in embedded]
    if missing:
        raise DataError(f"years not embedded: {missing}")
    by_year: dict[int, list[float]] = {t: [] for t in years}
    for (t, _tid), s in tables.term_scores.items():
        if t in by_year:
            by_year[t].append(s)
    scores = [tables.term_scores.get((t, term_id)) for t in years]
    baseline = [float(np.mean(by_year[t])) if by_year[t] else None for t in years]
    return TermTrajectory(term_id, list(years), scores, baseline)


@dataclass(frozen=True)
class PaperTrajectoryRow:
    t: int
    mean: Optional[float]
    std: Optional[float]
    n: int


def papers_with_term_trajectory(
    term_id: int,
    papers: Iterable[PaperRecord],
    tables: LevelScoreTable,
    years: Sequence[int],
) -> list[PaperTrajectoryRow]:
    """Mean/std/count of scores of scoreable papers containing the term."""
    per_year: dict[int, list[float]] = {t: [] for t in years}
    for rec in papers:
        if term_id not in rec.terms:
            continue
        ps = tables.paper_scores.get(rec.pmid)
        if ps is None or rec.year not in per_year:
            continue
        per_year[rec.year].append(ps.score)
    rows = []
    for t in years:
        vals = per_year[t]
        if vals:
            rows.append(
                PaperTrajectoryRow(
                    t, float(np.mean(vals)), float(np.std(vals)), len(vals)
                )
            )
        else:
            rows.append(PaperTrajectoryRow(t, None, None, 0))
    return rows


# ---------------------------------------------------------------------------
# On-disk forms: term_scores.tsv / paper_scores.tsv
# ---------------------------------------------------------------------------

def save_term_scores(tables: LevelScoreTable, vocab: MeshVocabulary, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for (t, tid) in sorted(tables.term_scores):
            s = tables.term_scores[(t, tid)]
            fh.write(f"{t}\t{vocab.names[tid]}\t{format(s, '.9g')}\n")


def load_term_scores(path, vocab: MeshVocabulary) -> dict[tuple[int, int], float]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"term scores file not found: {path}")
    out: dict[tuple[int, int], float] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, lineno, "expected 'year<TAB>term<TAB>score'")
            year, name, score = parts
            tid = vocab.id_of.get(name)
            if tid is None:
                raise ParseError(path, lineno, f"unknown term {name!r}")
            out[(int(year), tid)] = float(score)
    return out


def save_paper_scores(
    tables: LevelScoreTable,
    papers: Iterable[PaperRecord],
    vocab: MeshVocabulary,
    path,
) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in papers:
            ps = tables.paper_scores.get(rec.pmid)
            if ps is None:
                continue
            weber = weber_category(rec, vocab).value
            fh.write(
                f"{rec.pmid}\t{ps.year}\t{format(ps.score, '.9g')}\t"
                f"{weber}\t{ps.n_scored}\t{ps.n_original}\n"
            )


def load_paper_scores(path) -> dict[str, tuple[PaperScore, str]]:
    """pmid -> (PaperScore, weber letter string) from paper_scores.tsv."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"paper scores file not found: {path}")
    out: dict[str, tuple[PaperScore, str]] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise ParseError(path, lineno, "expected 6 columns")
            pmid, year, score, weber, n_scored, n_original = parts
            out[pmid] = (
                PaperScore(float(score), int(year), int(n_scored), int(n_original)),
                weber,
            )
    return out
