"""Acceptance criteria, one test per criterion.

Each test computes its verdict, prints one `ACCEPTANCE <n> <name>: PASS|FAIL`
line (run with `pytest tests/test_acceptance.py -s` to see them), and then
asserts. Tolerances and runtime budgets are pinned here, not configurable.
"""

import json
import math
import time
import warnings
from dataclasses import replace
from itertools import combinations
from pathlib import Path

import numpy as np
import pytest

from transaxis import analysis as an
from transaxis import axis as ax
from transaxis import citegraph as cg
from transaxis import cli
from transaxis import cooccur as co
from transaxis import corpus as cp
from transaxis import embed as em
from transaxis.axis import PaperScore
from transaxis.corpus import PaperRecord


def report(num, name, ok, detail=""):
    suffix = f" ({detail})" if detail else ""
    print(f"\nACCEPTANCE {num:02d} {name}: {'PASS' if ok else 'FAIL'}{suffix}")
    return ok


# ---------------------------------------------------------------------------
# 1. Oracle equivalence: co-occurrence counting
# ---------------------------------------------------------------------------

def test_criterion_01_cooccurrence_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(50):
        n_papers = int(rng.integers(1, 21))
        n_terms = int(rng.integers(2, 11))
        papers = [
            PaperRecord(
                str(k),
                int(rng.integers(1995, 2004)),
                "J",
                tuple(int(t) for t in rng.choice(n_terms, size=int(rng.integers(1, n_terms + 1)), replace=False)),
                0,
            )
            for k in range(n_papers)
        ]
        t = int(rng.integers(1999, 2004))
        built = co.build_window_matrix(papers, t, window=5).entries
        in_window = [set(p.terms) for p in papers if t - 4 <= p.year <= t]
        oracle = {}
        for i in range(n_terms):
            for j in range(i + 1, n_terms):
                c = sum(1 for terms in in_window if i in terms and j in terms)
                if c:
                    oracle[(i, j)] = c
        mismatches += built != oracle
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 5.0
    assert report(1, "cooccurrence-oracle", ok, f"50 corpora, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 2. Oracle equivalence: reachability
# ---------------------------------------------------------------------------

def _random_dag(rng, n):
    years = [2010 - k for k in range(n)]
    nodes = [(f"p{k}", years[k], float(rng.uniform(-1, 1))) for k in range(n)]
    edges = [
        (f"p{u}", f"p{v}")
        for u in range(n)
        for v in range(u + 1, n)
        if rng.random() < 0.3
    ]
    return nodes, edges


def _oracle_vectors(nodes, edges, bins):
    n = len(nodes)
    idx = {p: k for k, (p, _, _) in enumerate(nodes)}
    dist = [[math.inf] * n for _ in range(n)]
    for k in range(n):
        dist[k][k] = 0
    for u, v in edges:
        dist[idx[u]][idx[v]] = 1
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if dist[i][k] + dist[k][j] < dist[i][j]:
                    dist[i][j] = dist[i][k] + dist[k][j]
    node_bin = [bins.index(s) for _, _, s in nodes]
    years = [y for _, y, _ in nodes]
    vectors = {}
    for i, (pmid, yi, _) in enumerate(nodes):
        r = np.full(bins.n_bins, np.nan)
        l = np.full(bins.n_bins, np.nan)
        y = np.full(bins.n_bins, np.nan)
        for J in range(bins.n_bins):
            reached = [j for j in range(n)
                       if j != i and dist[i][j] < math.inf and node_bin[j] == J]
            eligible = [j for j in range(n)
                        if j != i and years[j] <= yi and node_bin[j] == J]
            if eligible:
                r[J] = len(reached) / len(eligible)
            if reached:
                l[J] = float(np.mean([dist[i][j] for j in reached]))
                y[J] = float(np.mean([yi - years[j] for j in reached]))
        vectors[pmid] = (r, l, y)
    return vectors


def _exact_same(a, b):
    return np.array_equal(np.isnan(a), np.isnan(b)) and np.array_equal(
        np.nan_to_num(a), np.nan_to_num(b)
    )


def test_criterion_02_reachability_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(5150)
    bins = cg.BinningSpec(0.5)
    failures = 0
    for _ in range(20):
        n = int(rng.integers(4, 16))
        nodes, edges = _random_dag(rng, n)
        papers = [PaperRecord(p, y, "J", (), 0) for p, y, _ in nodes]
        scores = {p: PaperScore(s, y, 1, 1) for p, y, s in nodes}
        g = cg.build_graph(papers, edges, scores)
        expected = _oracle_vectors(nodes, edges, bins)
        for pmid, exp in expected.items():
            got = cg.reach_from_source(g, pmid, bins)
            failures += not all(_exact_same(a, b) for a, b in zip(got, exp))
        # aggregation oracle at sample_fraction 1.0
        matrices = cg.aggregate_reach(g, 1.0, bins, seed=0)
        node_bin = {p: bins.index(s) for p, _, s in nodes}
        for axis_idx, matrix in ((0, matrices.r), (1, matrices.l), (2, matrices.y)):
            for I in range(bins.n_bins):
                rows = [expected[p][axis_idx] for p, _, _ in nodes if node_bin[p] == I]
                if rows:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", RuntimeWarning)
                        agg = np.nanmean(np.array(rows), axis=0)
                else:
                    agg = np.full(bins.n_bins, np.nan)
                failures += not _exact_same(matrix[I], agg)
    elapsed = time.perf_counter() - start
    ok = failures == 0 and elapsed < 5.0
    assert report(2, "reachability-oracle", ok, f"20 DAGs, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 3. Oracle equivalence: permutation test
# ---------------------------------------------------------------------------

def test_criterion_03_permutation_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(33)
    ok = True
    details = []
    for _ in range(3):
        a = list(rng.normal(0.0, 1.0, int(rng.integers(3, 7))))
        b = list(rng.normal(0.7, 1.0, int(rng.integers(3, 7))))
        pooled = np.asarray(a + b)
        observed = float(np.median(b) - np.median(a))
        hits = total = 0
        for combo in combinations(range(len(pooled)), len(a)):
            mask = np.zeros(len(pooled), dtype=bool)
            mask[list(combo)] = True
            hits += (np.median(pooled[~mask]) - np.median(pooled[mask])) >= observed
            total += 1
        oracle_p = hits / total
        exact = an.permutation_test_median(a, b, n_perm=10**5)
        mc = an.permutation_test_median(a, b, n_perm=10**5, seed=1, force_monte_carlo=True)
        repeat = an.permutation_test_median(a, b, n_perm=10**5, seed=12345)
        ok &= exact.exact and exact.p == oracle_p
        ok &= abs(mc.p - oracle_p) < 0.01
        ok &= repeat == exact  # exact mode ignores the seed, bit-identical
        details.append(f"exact={oracle_p:.4f} mc={mc.p:.4f}")
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < 10.0
    assert report(3, "permutation-oracle", ok, "; ".join(details) + f", {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 4. Planted-separation recovery
# ---------------------------------------------------------------------------

def _planted_run(seed, papers=5000, mixing=0.1):
    spec = cp.SynthSpec(
        basic_terms=50, applied_terms=50, cell_seeds=10, animal_seeds=10,
        human_seeds=20, papers=papers, mixing=mixing, years=(2000, 2004),
    )
    vocab, records, edges = cp.generate_synthetic_corpus(spec, seed)
    matrix = co.build_window_matrix(records, 2004, 5)
    emb = em.train_line(matrix, em.EmbeddingParams(d=10, seed=seed))
    taxis = ax.build_axis(emb, vocab)
    return spec, vocab, records, edges, emb, taxis


def test_criterion_04_planted_separation():
    start = time.perf_counter()
    _, vocab, _, _, emb, taxis = _planted_run(seed=42)
    scores = ax.score_terms(emb, taxis)
    basic = np.array([scores[t] for t in vocab.basic_ids() if t in scores])
    applied = np.array([scores[t] for t in vocab.applied_ids() if t in scores])
    wins = (applied[None, :] > basic[:, None]).sum() + 0.5 * (applied[None, :] == basic[:, None]).sum()
    auc = wins / (len(basic) * len(applied))
    sims = an.within_between_similarity(emb, vocab, sample_pairs=2000, seed=0)
    elapsed = time.perf_counter() - start
    ok = auc >= 0.95 and sims.within_mean > sims.between_mean and elapsed < 60.0
    assert report(
        4, "planted-separation", ok,
        f"AUC={auc:.3f}, within={sims.within_mean:.3f} > between={sims.between_mean:.3f}, {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# 5. Weber-ordering analog
# ---------------------------------------------------------------------------

def test_criterion_05_weber_ordering():
    ordered_runs = 0
    medians_seen = []
    for seed in range(5):
        _, vocab, _, _, emb, taxis = _planted_run(seed=100 + seed, papers=2000)
        term_scores = ax.score_terms(emb, taxis)
        basic_seeds = [t for t in vocab.basic_ids() if t in term_scores]
        applied_seeds = [t for t in vocab.applied_ids() if t in term_scores]
        rng = np.random.default_rng(seed)

        def probe_median(pool_a, pool_b, n_probe=200, k=6):
            values = []
            for _ in range(n_probe):
                half = k // 2
                terms = [int(x) for x in rng.choice(pool_a, size=half, replace=False)]
                terms += [int(x) for x in rng.choice(pool_b, size=k - half, replace=False)]
                ps = ax.score_paper(PaperRecord("probe", 2004, "J", tuple(set(terms)), len(set(terms))), term_scores)
                values.append(ps.score)
            return float(np.median(values))

        m_basic = probe_median(basic_seeds, basic_seeds)
        m_mixed = probe_median(basic_seeds, applied_seeds)
        m_applied = probe_median(applied_seeds, applied_seeds)
        medians_seen.append((m_basic, m_mixed, m_applied))
        ordered_runs += m_basic < m_mixed < m_applied
    ok = ordered_runs == 5
    assert report(
        5, "weber-ordering", ok,
        "; ".join(f"{a:+.2f}<{b:+.2f}<{c:+.2f}" for a, b, c in medians_seen),
    )


# ---------------------------------------------------------------------------
# 6. Rotation invariance
# ---------------------------------------------------------------------------

def test_criterion_06_rotation_invariance(planted):
    rng = np.random.default_rng(606)
    worst = 0.0
    for t, emb in planted.embeddings.items():
        q, _ = np.linalg.qr(rng.normal(size=(emb.d, emb.d)))
        rotated = em.TermEmbedding(t, emb.term_ids, emb.matrix @ q.T)
        taxis = planted.axes[t]
        taxis_rot = ax.build_axis(rotated, planted.vocab)
        term_scores = ax.score_terms(emb, taxis)
        term_scores_rot = ax.score_terms(rotated, taxis_rot)
        worst = max(worst, max(abs(term_scores[k] - term_scores_rot[k]) for k in term_scores))
        for rec in planted.papers[:500]:
            if rec.year != t:
                continue
            a = ax.score_paper(rec, term_scores)
            b = ax.score_paper(rec, term_scores_rot)
            if a is not None:
                worst = max(worst, abs(a.score - b.score))
    ok = worst <= 1e-9
    assert report(6, "rotation-invariance", ok, f"max deviation {worst:.2e}")


# ---------------------------------------------------------------------------
# 7. Score bounds and the majority rule
# ---------------------------------------------------------------------------

def test_criterion_07_bounds_and_majority(planted):
    ok = all(-1.0 <= s <= 1.0 for s in planted.tables.term_scores.values())
    ok &= all(-1.0 <= p.score <= 1.0 for p in planted.tables.paper_scores.values())
    ok &= all(2 * p.n_scored > p.n_original for p in planted.tables.paper_scores.values())

    year_scores = {tid: s for (t, tid), s in planted.tables.term_scores.items() if t == 2004}
    rng = np.random.default_rng(7)
    known = list(year_scores)
    scored = skipped = 0
    for k in range(10_000):
        n_known = int(rng.integers(0, 7))
        n_missing = int(rng.integers(0, 7))
        terms = [int(x) for x in rng.choice(known, size=n_known, replace=False)]
        terms += [100_000 + k * 10 + m for m in range(n_missing)]
        rec = PaperRecord(f"fz{k}", 2004, "J", tuple(terms), n_known + n_missing)
        ps = ax.score_paper(rec, year_scores)
        if ps is None:
            skipped += 1
            ok &= 2 * n_known <= rec.n_original or rec.n_original == 0
        else:
            scored += 1
            ok &= -1.0 <= ps.score <= 1.0
            ok &= 2 * ps.n_scored > ps.n_original
    assert report(7, "bounds-and-majority", ok, f"fuzz: {scored} scored, {skipped} rejected")


# ---------------------------------------------------------------------------
# 8. Homophily against the shuffled null
# ---------------------------------------------------------------------------

def test_criterion_08_homophily_vs_null(planted):
    real = cg.mean_abs_edge_gap(planted.graph)
    nulls = np.array(
        [cg.mean_abs_edge_gap(cg.shuffled_null(planted.graph, seed=s)) for s in range(100)]
    )
    cutoff = float(np.percentile(nulls, 1))
    ok = real < cutoff
    assert report(
        8, "homophily-vs-null", ok,
        f"real={real:.4f} < 1st pct of null={cutoff:.4f} (null min {nulls.min():.4f})",
    )


# ---------------------------------------------------------------------------
# 9. Trial-phase ordering
# ---------------------------------------------------------------------------

def test_criterion_09_trial_phase_ordering():
    rng = np.random.default_rng(909)
    papers, scores = [], {}
    k = 0
    for phase in range(1, 5):
        for _ in range(500):
            pmid = f"t{k}"
            papers.append(PaperRecord(pmid, 2000, "J", (0,), 1, phase))
            value = float(np.clip(rng.normal(0.1 * phase, 0.15), -1, 1))
            scores[pmid] = PaperScore(value, 2000, 1, 1)
            k += 1
    summary, tests = an.trial_phase_summary(papers, scores, n_perm=10_000, seed=9)
    medians = [summary.groups[f"phase{p}"].median for p in range(1, 5)]
    ok = all(medians[i] < medians[i + 1] for i in range(3))
    ok &= len(tests) == 3 and all(t.result.p < 0.01 for t in tests)
    assert report(
        9, "trial-phase-ordering", ok,
        "medians " + " < ".join(f"{m:.3f}" for m in medians)
        + ", max p " + format(max(t.result.p for t in tests), ".2g"),
    )


# ---------------------------------------------------------------------------
# 10. Full-pipeline determinism
# ---------------------------------------------------------------------------

def _pipeline_tree(root: Path, monkeypatch) -> dict[str, bytes]:
    root.mkdir(parents=True, exist_ok=True)
    monkeypatch.chdir(root)
    config = replace(
        cli.PipelineConfig(),
        year_from=2002, year_to=2004,
        synth_basic_terms=20, synth_applied_terms=20,
        synth_cell_seeds=5, synth_animal_seeds=5, synth_human_seeds=8,
        synth_papers=400, synth_trial_fraction=0.4,
        samples=20_000, seed=13, threads=1,
    )
    cfg_path = root / "run.cfg"
    cfg_path.write_text(config.to_text(), encoding="utf-8")
    base = ["--config", str(cfg_path)]
    for stage in ("synth", "ingest", "cooccur", "embed", "score"):
        assert cli.main([stage, *base]) == 0
    for what in ("heatmap", "reach", "groups", "trials", "threshold"):
        assert cli.main(["analyze", what, *base]) == 0
    assert cli.main(["analyze", "trajectory", "--term", "basic000", *base]) == 0
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p != cfg_path
    }


def test_criterion_10_determinism(tmp_path, monkeypatch):
    tree_a = _pipeline_tree(tmp_path / "a", monkeypatch)
    tree_b = _pipeline_tree(tmp_path / "b", monkeypatch)
    same_names = set(tree_a) == set(tree_b)
    diffs = [name for name in tree_a if same_names and tree_a[name] != tree_b[name]]
    ok = same_names and not diffs
    assert report(
        10, "determinism", ok,
        f"{len(tree_a)} files byte-identical" if ok else f"differs: {diffs[:5]}",
    )


# ---------------------------------------------------------------------------
# 11. Threshold detection on bimodal scores
# ---------------------------------------------------------------------------

def test_criterion_11_threshold_detection():
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        scores = np.clip(
            np.concatenate([rng.normal(-0.3, 0.15, 5000), rng.normal(0.5, 0.15, 5000)]),
            -1.0, 1.0,
        )
        th = an.detect_threshold(an.histogram(scores, width=0.02))
        hits += th is not None and -0.1 < th < 0.3
    ok = hits >= 95
    assert report(11, "threshold-detection", ok, f"{hits}/100 runs in (-0.1, 0.3)")
