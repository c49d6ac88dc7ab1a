"""Shared fixtures: a planted two-community corpus run end to end."""

from dataclasses import dataclass

import pytest

from transaxis import axis as ax
from transaxis import citegraph as cg
from transaxis import cooccur as co
from transaxis import corpus as cp
from transaxis import embed as em

PLANTED_YEARS = (2000, 2004)


@dataclass
class PlantedRun:
    spec: cp.SynthSpec
    vocab: cp.MeshVocabulary
    papers: list
    edges: list
    embeddings: dict
    axes: dict
    tables: ax.LevelScoreTable
    graph: cg.CitationGraph


@pytest.fixture(scope="session")
def planted() -> PlantedRun:
    spec = cp.SynthSpec(
        basic_terms=50,
        applied_terms=50,
        cell_seeds=10,
        animal_seeds=10,
        human_seeds=20,
        papers=5000,
        mixing=0.1,
        years=PLANTED_YEARS,
        citation_pref=0.9,
    )
    vocab, papers, edges = cp.generate_synthetic_corpus(spec, seed=11)
    embeddings = {}
    for t in range(PLANTED_YEARS[0], PLANTED_YEARS[1] + 1):
        m = co.build_window_matrix(papers, t, 5)
        embeddings[t] = em.train_line(m, em.EmbeddingParams(d=10, seed=5 + t))
    axes = {t: ax.build_axis(e, vocab) for t, e in embeddings.items()}
    tables = ax.score_corpus(papers, embeddings, vocab)
    graph = cg.build_graph(papers, edges, tables.paper_scores)
    return PlantedRun(spec, vocab, papers, edges, embeddings, axes, tables, graph)
