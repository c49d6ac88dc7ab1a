"""Distributional statistics over level scores and embedding validation."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.signal import find_peaks

from .axis import PaperScore
from .citegraph import BinningSpec
from .corpus import MeshVocabulary, PaperRecord
from .embed import TermEmbedding
from .errors import DataError

DEFAULT_HIST_WIDTH = 0.02


@dataclass
class ScoreHistogram:
    """Counts over fixed bins of [-1, 1] (right-open, final bin closed)."""

    width: float
    counts: np.ndarray
    n: int
    median: float

    def midpoints(self) -> np.ndarray:
        return BinningSpec(self.width).midpoints()


def histogram(scores: Sequence[float], width: float = DEFAULT_HIST_WIDTH) -> ScoreHistogram:
    values = np.asarray(scores, dtype=np.float64)
    if values.size == 0:
        raise DataError("cannot build a histogram of no scores")
    bins = BinningSpec(width)
    idx = np.fromiter((bins.index(float(v)) for v in values), dtype=np.int64, count=values.size)
    counts = np.bincount(idx, minlength=bins.n_bins)
    return ScoreHistogram(width, counts, int(values.size), float(np.median(values)))


def detect_threshold(h: ScoreHistogram) -> Optional[float]:
    """Midpoint of the lowest-count bin strictly between the two main modes.

    Modes are the two most prominent local maxima of the counts (prominence
    resists single-bin noise while keeping end-bin modes detectable). Returns
    None when the histogram has fewer than two modes.
    """
    counts = np.asarray(h.counts, dtype=np.float64)
    padded = np.concatenate(([-1.0], counts, [-1.0]))
    peaks, props = find_peaks(padded, prominence=0)
    if len(peaks) < 2:
        return None
    order = sorted(
        range(len(peaks)),
        key=lambda k: (-props["prominences"][k], -padded[peaks[k]], peaks[k]),
    )
    left, right = sorted((peaks[order[0]] - 1, peaks[order[1]] - 1))
    if right - left < 2:
        return None
    valley = left + 1 + int(np.argmin(counts[left + 1:right]))
    return float(-1.0 + (valley + 0.5) * h.width)


# ---------------------------------------------------------------------------
# Group summaries
# ---------------------------------------------------------------------------

@dataclass
class GroupStats:
    n: int
    median: float
    q1: float
    q3: float
    hist: ScoreHistogram


@dataclass
class GroupSummary:
    """Per-group score statistics, ordered by median; `excluded` counts papers
    lacking the grouping key."""

    groups: dict[str, GroupStats]
    excluded: int


def group_summary(
    keyed_scores: Iterable[tuple[Optional[str], float]],
    hist_width: float = DEFAULT_HIST_WIDTH,
) -> GroupSummary:
    buckets: dict[str, list[float]] = {}
    excluded = 0
    for key, score in keyed_scores:
        if key is None:
            excluded += 1
            continue
        buckets.setdefault(key, []).append(score)
    stats = {}
    for key, vals in buckets.items():
        arr = np.asarray(vals, dtype=np.float64)
        q1, med, q3 = np.percentile(arr, [25, 50, 75])
        stats[key] = GroupStats(len(vals), float(med), float(q1), float(q3), histogram(arr, hist_width))
    ordered = dict(sorted(stats.items(), key=lambda kv: (kv[1].median, kv[0])))
    return GroupSummary(ordered, excluded)


# ---------------------------------------------------------------------------
# Permutation test
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PermutationResult:
    stat: float  # median(b) - median(a)
    p: float
    exact: bool
    n: int  # enumerated splits or Monte-Carlo permutations


def permutation_test_median(
    a: Sequence[float],
    b: Sequence[float],
    n_perm: int = 10_000,
    seed: int = 0,
    force_monte_carlo: bool = False,
) -> PermutationResult:
    """One-sided test of H1: median(b) > median(a).

    Enumerates all splits exactly when their count fits within `n_perm`,
    otherwise Monte-Carlo with the add-one estimator
    p = (1 + #{stat* >= stat}) / (1 + n_perm). `force_monte_carlo` disables
    the exact shortcut (used to validate the estimator against enumeration).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise DataError("permutation test requires two non-empty groups")
    observed = float(np.median(b) - np.median(a))
    pooled = np.concatenate([a, b])
    na, total = a.size, a.size + b.size

    if not force_monte_carlo and comb(total, na) <= n_perm:
        idx = np.fromiter(
            (k for c in combinations(range(total), na) for k in c),
            dtype=np.int64,
        ).reshape(-1, na)
        mask = np.zeros((idx.shape[0], total), dtype=bool)
        np.put_along_axis(mask, idx, True, axis=1)
        a_meds = np.median(pooled[idx], axis=1)
        b_meds = np.median(
            np.broadcast_to(pooled, mask.shape)[~mask].reshape(idx.shape[0], -1), axis=1
        )
        stats = b_meds - a_meds
        p = float(np.count_nonzero(stats >= observed)) / idx.shape[0]
        return PermutationResult(observed, p, True, idx.shape[0])

    rng = np.random.default_rng(seed)
    perms = rng.permuted(np.tile(pooled, (n_perm, 1)), axis=1)
    stats = np.median(perms[:, na:], axis=1) - np.median(perms[:, :na], axis=1)
    p = (1.0 + float(np.count_nonzero(stats >= observed))) / (1.0 + n_perm)
    return PermutationResult(observed, p, False, n_perm)


# ---------------------------------------------------------------------------
# Embedding validation: within- vs between-category similarity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WithinBetweenResult:
    within_mean: float
    within_median: float
    n_within: int
    between_mean: float
    between_median: float
    n_between: int
    p: float


def _pair_sims(unit: np.ndarray, pairs: Iterable[tuple[int, int]]) -> np.ndarray:
    idx = np.asarray(list(pairs), dtype=np.int64)
    return np.einsum("ij,ij->i", unit[idx[:, 0]], unit[idx[:, 1]])


def within_between_similarity(
    embedding: TermEmbedding,
    vocab: MeshVocabulary,
    sample_pairs: int = 2000,
    seed: int = 0,
    n_perm: int = 10_000,
) -> WithinBetweenResult:
    """Cosine similarity of within-category vs between-category seed pairs.

    Categories are the pooled basic seeds and the applied seeds. All pairs are
    used when there are no more than `sample_pairs` of a kind; larger
    populations are sampled uniformly.
    """
    basic = [embedding.row_of(t) for t in vocab.basic_ids() if t in embedding]
    applied = [embedding.row_of(t) for t in vocab.applied_ids() if t in embedding]
    if len(basic) < 2 or len(applied) < 2:
        raise DataError("need >= 2 embedded terms in each pooled category")
    norms = np.linalg.norm(embedding.matrix, axis=1, keepdims=True)
    unit = embedding.matrix / np.where(norms > 0, norms, 1.0)
    rng = np.random.default_rng(seed)

    def sample_within() -> np.ndarray:
        n_pop = comb(len(basic), 2) + comb(len(applied), 2)
        if n_pop <= sample_pairs:
            pairs = list(combinations(basic, 2)) + list(combinations(applied, 2))
            return _pair_sims(unit, pairs)
        w_basic = comb(len(basic), 2) / n_pop
        pairs = []
        for _ in range(sample_pairs):
            group = basic if rng.random() < w_basic else applied
            i, j = rng.choice(len(group), size=2, replace=False)
            pairs.append((group[int(i)], group[int(j)]))
        return _pair_sims(unit, pairs)

    def sample_between() -> np.ndarray:
        n_pop = len(basic) * len(applied)
        if n_pop <= sample_pairs:
            pairs = [(i, j) for i in basic for j in applied]
            return _pair_sims(unit, pairs)
        bi = rng.integers(0, len(basic), size=sample_pairs)
        ai = rng.integers(0, len(applied), size=sample_pairs)
        pairs = [(basic[int(i)], applied[int(j)]) for i, j in zip(bi, ai)]
        return _pair_sims(unit, pairs)

    within = sample_within()
    between = sample_between()
    test = permutation_test_median(between, within, n_perm=n_perm, seed=seed)
    return WithinBetweenResult(
        float(within.mean()), float(np.median(within)), int(within.size),
        float(between.mean()), float(np.median(between)), int(between.size),
        test.p,
    )


# ---------------------------------------------------------------------------
# Clinical-trial phases
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseTest:
    group_a: str
    group_b: str
    result: PermutationResult


def trial_phase_summary(
    papers: Iterable[PaperRecord],
    scores: Mapping[str, PaperScore],
    n_perm: int = 10_000,
    seed: int = 0,
    hist_width: float = DEFAULT_HIST_WIDTH,
) -> tuple[GroupSummary, list[PhaseTest]]:
    """Score distributions of trial papers: per phase 1-4 plus all trials,
    with chained one-sided tests that each next phase sits higher."""
    by_phase: dict[int, list[float]] = {}
    all_scores: list[float] = []
    excluded = 0
    for rec in papers:
        if rec.trial_phase is None:
            continue
        ps = scores.get(rec.pmid)
        if ps is None:
            excluded += 1
            continue
        all_scores.append(ps.score)
        by_phase.setdefault(rec.trial_phase, []).append(ps.score)
    if not all_scores:
        raise DataError("no scored clinical-trial papers")
    pairs: list[tuple[Optional[str], float]] = [("all", s) for s in all_scores]
    for phase in range(1, 5):
        pairs.extend((f"phase{phase}", s) for s in by_phase.get(phase, []))
    summary = group_summary(pairs, hist_width)
    summary = GroupSummary(summary.groups, excluded)
    tests = []
    for phase in range(1, 4):
        lo, hi = by_phase.get(phase, []), by_phase.get(phase + 1, [])
        if lo and hi:
            tests.append(
                PhaseTest(
                    f"phase{phase}",
                    f"phase{phase + 1}",
                    permutation_test_median(lo, hi, n_perm=n_perm, seed=seed),
                )
            )
    return summary, tests


# ---------------------------------------------------------------------------
# On-disk forms
# ---------------------------------------------------------------------------

def save_histogram(h: ScoreHistogram, path) -> None:
    mids = h.midpoints()
    with Path(path).open("w", encoding="utf-8") as fh:
        for m, c in zip(mids, h.counts):
            fh.write(f"{format(float(m), '.9g')}\t{int(c)}\n")


def save_groups(summary: GroupSummary, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for key, st in summary.groups.items():
            fh.write(
                f"{key}\t{st.n}\t{format(st.median, '.9g')}\t"
                f"{format(st.q1, '.9g')}\t{format(st.q3, '.9g')}\n"
            )


def save_perm_tests(tests: Iterable[PhaseTest], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in tests:
            mode = "exact" if t.result.exact else str(t.result.n)
            fh.write(
                f"{t.group_a}\t{t.group_b}\t{format(t.result.stat, '.9g')}\t"
                f"{format(t.result.p, '.9g')}\t{mode}\n"
            )
