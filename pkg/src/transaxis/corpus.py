"""Corpus model: vocabulary tree, paper records, citations, journal metadata.

Input formats are the normalized ones documented in the README:
``mesh_tree.tsv`` (term<TAB>tree_number), ``papers.jsonl``,
``citations.tsv`` and ``journal_fields.tsv``. Everything loaded here is
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
from bisect import bisect_left
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError, ParseError

# Tree branches admitted to the scoring vocabulary; everything else is
# flagged excluded and never enters co-occurrence counting or categories.
ALLOWED_BRANCHES = frozenset("ABCDEGMN")

# Default subtree root codes for the a-priori term coding. Real runs should
# override these from the vocabulary release they use; the synthetic corpus
# generator emits tree numbers under these same codes.
DEFAULT_CELL_ROOTS = ("A11", "B02", "B03", "B04", "G02.111.570", "G02.149")
DEFAULT_ANIMAL_ROOTS = ("B01",)
DEFAULT_HUMAN_ROOTS = ("B01.050", "M01")


class TermCategory(Enum):
    BASIC_CELL = "cell"
    BASIC_ANIMAL = "animal"
    APPLIED_HUMAN = "human"
    NEUTRAL = "neutral"


BASIC_CATEGORIES = frozenset({TermCategory.BASIC_CELL, TermCategory.BASIC_ANIMAL})


class WeberCategory(Enum):
    """Membership pattern of a paper's terms across the C/A/H coded groups."""

    C = "C"
    A = "A"
    H = "H"
    CA = "CA"
    CH = "CH"
    AH = "AH"
    CAH = "CAH"
    NONE = "none"


@dataclass(frozen=True)
class CategoryRoots:
    """Subtree root codes anchoring each coded category."""

    cell: tuple[str, ...] = DEFAULT_CELL_ROOTS
    animal: tuple[str, ...] = DEFAULT_ANIMAL_ROOTS
    human: tuple[str, ...] = DEFAULT_HUMAN_ROOTS

    def __post_init__(self):
        for name in ("cell", "animal", "human"):
            if not getattr(self, name):
                raise DataError(f"category root list '{name}' is empty")


def _under(tree_number: str, root: str) -> bool:
    # prefix match on dot boundaries: A11.2 is under A11, A112 is not
    return tree_number == root or tree_number.startswith(root + ".")


def categorize(tree_numbers: Sequence[str], roots: CategoryRoots) -> TermCategory:
    """Resolve a term's category with precedence human > animal > cell."""
    if any(_under(tn, r) for tn in tree_numbers for r in roots.human):
        return TermCategory.APPLIED_HUMAN
    if any(_under(tn, r) for tn in tree_numbers for r in roots.animal):
        return TermCategory.BASIC_ANIMAL
    if any(_under(tn, r) for tn in tree_numbers for r in roots.cell):
        return TermCategory.BASIC_CELL
    return TermCategory.NEUTRAL


@dataclass
class MeshVocabulary:
    """Term <-> dense-id map with tree numbers, categories and branch flags."""

    names: list[str]
    tree_numbers: list[list[str]]
    category: list[TermCategory]
    branches: list[frozenset[str]]
    excluded: list[bool]
    id_of: dict[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self.id_of:
            self.id_of = {name: i for i, name in enumerate(self.names)}

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self.id_of

    def term_ids(self, category: TermCategory, include_excluded: bool = False) -> list[int]:
        return [
            i
            for i, c in enumerate(self.category)
            if c is category and (include_excluded or not self.excluded[i])
        ]

    def basic_ids(self) -> list[int]:
        """Cell/molecular and animal seeds pooled as equally basic."""
        return [
            i
            for i, c in enumerate(self.category)
            if c in BASIC_CATEGORIES and not self.excluded[i]
        ]

    def applied_ids(self) -> list[int]:
        return self.term_ids(TermCategory.APPLIED_HUMAN)


def classify_term(term_id: int, vocab: MeshVocabulary) -> TermCategory:
    """Stored category of a term; raises on an unknown id."""
    if not 0 <= term_id < len(vocab):
        raise DataError(f"unknown term id {term_id}")
    return vocab.category[term_id]


def load_mesh_tree(path, roots: CategoryRoots | None = None) -> tuple[MeshVocabulary, dict]:
    """Parse `term<TAB>tree_number` lines into a vocabulary.

    Terms may repeat with different tree numbers; duplicate (term, tree_number)
    pairs are ignored and counted. Terms whose branches all fall outside
    ALLOWED_BRANCHES are flagged excluded.
    """
    roots = roots or CategoryRoots()
    path = Path(path)
    if not path.exists():
        raise DataError(f"mesh tree file not found: {path}")
    names: list[str] = []
    trees: list[list[str]] = []
    id_of: dict[str, int] = {}
    duplicates = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ParseError(path, lineno, "expected 'term<TAB>tree_number'")
            term, tn = parts
            if not tn[0].isalpha() or not tn[0].isupper():
                raise ParseError(path, lineno, f"bad tree number {tn!r}")
            tid = id_of.get(term)
            if tid is None:
                tid = len(names)
                id_of[term] = tid
                names.append(term)
                trees.append([tn])
            elif tn in trees[tid]:
                duplicates += 1
            else:
                trees[tid].append(tn)
    branches = [frozenset(tn[0] for tn in tns) for tns in trees]
    excluded = [not (b & ALLOWED_BRANCHES) for b in branches]
    category = [
        TermCategory.NEUTRAL if excl else categorize(tns, roots)
        for tns, excl in zip(trees, excluded)
    ]
    vocab = MeshVocabulary(names, trees, category, branches, excluded, id_of)
    stats = {
        "terms": len(vocab),
        "excluded_terms": sum(excluded),
        "duplicate_tree_numbers": duplicates,
    }
    return vocab, stats


@dataclass(frozen=True)
class PaperRecord:
    """One publication with its vocabulary-mapped term ids.

    `terms` holds distinct, in-vocabulary, allowed-branch ids; `n_original`
    is the length of the raw term list and is the majority-rule denominator.
    """

    pmid: str
    year: int
    journal: str
    terms: tuple[int, ...]
    n_original: int
    trial_phase: Optional[int] = None


@dataclass
class ParseResult:
    records: list[PaperRecord]
    stats: dict


def parse_papers(path, vocab: MeshVocabulary, year_range: tuple[int, int] | None = None) -> ParseResult:
    """Read `papers.jsonl` records, mapping term names to ids.

    Records missing a required field or with a year outside `year_range` are
    rejected and counted. Unknown and excluded-branch terms are dropped per
    record (counted) but still count toward `n_original`.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"papers file not found: {path}")
    records: list[PaperRecord] = []
    stats = {
        "papers": 0,
        "rejected_bad_record": 0,
        "rejected_bad_year": 0,
        "dropped_unknown_terms": 0,
        "dropped_excluded_terms": 0,
    }
    with path.open(encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                pmid = obj["pmid"]
                year = obj["year"]
                journal = obj["journal"]
                mesh = obj["mesh"]
            except (json.JSONDecodeError, KeyError, TypeError):
                stats["rejected_bad_record"] += 1
                continue
            phase = obj.get("trial_phase")
            if (
                not isinstance(pmid, str)
                or not isinstance(year, int)
                or isinstance(year, bool)
                or not isinstance(journal, str)
                or not isinstance(mesh, list)
                or not all(isinstance(m, str) for m in mesh)
                or not (phase is None or (isinstance(phase, int) and 0 <= phase <= 4))
            ):
                stats["rejected_bad_record"] += 1
                continue
            if year_range is not None and not (year_range[0] <= year <= year_range[1]):
                stats["rejected_bad_year"] += 1
                continue
            ids: list[int] = []
            seen: set[int] = set()
            for name in mesh:
                tid = vocab.id_of.get(name)
                if tid is None:
                    stats["dropped_unknown_terms"] += 1
                    continue
                if vocab.excluded[tid]:
                    stats["dropped_excluded_terms"] += 1
                    continue
                if tid not in seen:
                    seen.add(tid)
                    ids.append(tid)
            records.append(
                PaperRecord(pmid, year, journal, tuple(ids), len(mesh), phase)
            )
            stats["papers"] += 1
    return ParseResult(records, stats)


def weber_category(paper: PaperRecord, vocab: MeshVocabulary) -> WeberCategory:
    """Letter set {C, A, H} of the categories present among a paper's terms."""
    letters = set()
    for tid in paper.terms:
        cat = vocab.category[tid]
        if cat is TermCategory.BASIC_CELL:
            letters.add("C")
        elif cat is TermCategory.BASIC_ANIMAL:
            letters.add("A")
        elif cat is TermCategory.APPLIED_HUMAN:
            letters.add("H")
    if not letters:
        return WeberCategory.NONE
    return WeberCategory("".join(c for c in "CAH" if c in letters))


def load_citations(path, known_pmids: Iterable[str]) -> tuple[list[tuple[str, str]], dict]:
    """Read citing<TAB>cited pairs restricted to known pmids.

    Self-citations and duplicates are dropped; edges touching an unknown pmid
    are dropped and counted.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"citations file not found: {path}")
    known = set(known_pmids)
    edges: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    stats = {"edges": 0, "dangling": 0, "self_loops": 0, "duplicates": 0}
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ParseError(path, lineno, "expected 'citing_pmid<TAB>cited_pmid'")
            citing, cited = parts
            if citing == cited:
                stats["self_loops"] += 1
                continue
            if citing not in known or cited not in known:
                stats["dangling"] += 1
                continue
            pair = (citing, cited)
            if pair in seen:
                stats["duplicates"] += 1
                continue
            seen.add(pair)
            edges.append(pair)
    stats["edges"] = len(edges)
    return edges, stats


@dataclass
class JournalFieldMap:
    """Multimap journal -> Broad-Subject-Term-style field labels."""

    entries: dict[str, tuple[str, ...]]

    def fields(self, journal: str) -> tuple[str, ...]:
        """Fields of a journal; empty tuple when the journal is unknown."""
        return self.entries.get(journal, ())


def load_journal_fields(path) -> JournalFieldMap:
    path = Path(path)
    if not path.exists():
        raise DataError(f"journal fields file not found: {path}")
    entries: dict[str, list[str]] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise ParseError(path, lineno, "expected 'journal<TAB>field'")
            journal, fld = parts
            bucket = entries.setdefault(journal, [])
            if fld not in bucket:
                bucket.append(fld)
    return JournalFieldMap({j: tuple(fs) for j, fs in entries.items()})


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the planted two-community test corpus.

    The generator plants a "basic-like" and an "applied-like" term community.
    The first `cell_seeds` + `animal_seeds` basic terms and the first
    `human_seeds` applied terms carry tree numbers under the default category
    roots; remaining terms are neutral. Papers draw terms from their home
    community, crossing over per term with probability `mixing`; citations
    prefer the same community with probability `citation_pref` and always
    point to strictly older papers.
    """

    basic_terms: int = 50
    applied_terms: int = 50
    cell_seeds: int = 10
    animal_seeds: int = 10
    human_seeds: int = 20
    papers: int = 5000
    mixing: float = 0.1
    years: tuple[int, int] = (2000, 2004)
    terms_per_paper: tuple[int, int] = (4, 8)
    refs_per_paper: int = 3
    citation_pref: float = 0.9
    trial_fraction: float = 0.05

    def __post_init__(self):
        if self.basic_terms < 1 or self.applied_terms < 1:
            raise ValueError("community sizes must be positive")
        if self.cell_seeds + self.animal_seeds > self.basic_terms:
            raise ValueError("basic seed counts exceed basic community size")
        if self.human_seeds > self.applied_terms:
            raise ValueError("human seed count exceeds applied community size")
        if not 0.0 <= self.mixing <= 1.0:
            raise ValueError("mixing rate must lie in [0, 1]")
        if not 0.0 <= self.citation_pref <= 1.0:
            raise ValueError("citation preference must lie in [0, 1]")
        if self.years[0] > self.years[1]:
            raise ValueError("invalid year span")
        if self.terms_per_paper[0] < 1 or self.terms_per_paper[0] > self.terms_per_paper[1]:
            raise ValueError("invalid terms-per-paper span")


def _synth_vocab(spec: SynthSpec) -> MeshVocabulary:
    names: list[str] = []
    trees: list[list[str]] = []
    for i in range(spec.basic_terms):
        names.append(f"basic{i:03d}")
        if i < spec.cell_seeds:
            trees.append([f"A11.{i:03d}"])
        elif i < spec.cell_seeds + spec.animal_seeds:
            trees.append([f"B01.300.{i:03d}"])
        else:
            trees.append([f"G03.{i:03d}"])
    for j in range(spec.applied_terms):
        names.append(f"applied{j:03d}")
        if j < spec.human_seeds:
            # alternate the two human roots; B01.050 also sits under the
            # animal root B01 and so exercises the human-precedence rule
            trees.append([f"B01.050.{j:03d}" if j % 2 == 0 else f"M01.{j:03d}"])
        else:
            trees.append([f"N02.{j:03d}"])
    roots = CategoryRoots()
    branches = [frozenset(tn[0] for tn in tns) for tns in trees]
    excluded = [not (b & ALLOWED_BRANCHES) for b in branches]
    category = [categorize(tns, roots) for tns in trees]
    return MeshVocabulary(names, trees, category, branches, excluded)


def generate_synthetic_corpus(
    spec: SynthSpec, seed: int
) -> tuple[MeshVocabulary, list[PaperRecord], list[tuple[str, str]]]:
    """Deterministic planted corpus: (vocabulary, papers, citation edges)."""
    rng = np.random.default_rng(seed)
    vocab = _synth_vocab(spec)
    nb, na = spec.basic_terms, spec.applied_terms
    communities = (np.arange(nb), np.arange(nb, nb + na))
    all_terms = np.arange(nb + na)

    papers: list[PaperRecord] = []
    kmin, kmax = spec.terms_per_paper
    for p in range(spec.papers):
        home = int(rng.integers(0, 2))
        year = int(rng.integers(spec.years[0], spec.years[1] + 1))
        k = int(rng.integers(kmin, kmax + 1))
        pool_size = len(all_terms) if spec.mixing > 0 else len(communities[home])
        k = min(k, pool_size)
        chosen: list[int] = []
        seen: set[int] = set()
        while len(chosen) < k:
            pool = all_terms if rng.random() < spec.mixing else communities[home]
            tid = int(pool[rng.integers(0, len(pool))])
            if tid not in seen:
                seen.add(tid)
                chosen.append(tid)
        journal = f"J-{'BAS' if home == 0 else 'APP'}-{int(rng.integers(0, 4))}"
        phase = None
        if home == 1 and rng.random() < spec.trial_fraction:
            phase = int(rng.integers(0, 5))
        papers.append(
            PaperRecord(f"S{p:07d}", year, journal, tuple(chosen), len(chosen), phase)
        )

    # strictly older targets, indexed per community and sorted by year;
    # the home community is recoverable from the journal name
    by_comm: list[list[int]] = [[], []]
    homes = [0 if rec.journal.startswith("J-BAS") else 1 for rec in papers]
    for idx in range(len(papers)):
        by_comm[homes[idx]].append(idx)
    by_comm = [sorted(ids, key=lambda i: (papers[i].year, i)) for ids in by_comm]
    years_sorted = [[papers[i].year for i in ids] for ids in by_comm]

    edges: list[tuple[str, str]] = []
    seen_edges: set[tuple[int, int]] = set()
    for idx, rec in enumerate(papers):
        for _ in range(spec.refs_per_paper):
            comm = homes[idx] if rng.random() < spec.citation_pref else 1 - homes[idx]
            hi = bisect_left(years_sorted[comm], rec.year)
            if hi == 0:
                continue
            target = by_comm[comm][int(rng.integers(0, hi))]
            pair = (idx, target)
            if pair not in seen_edges:
                seen_edges.add(pair)
                edges.append((rec.pmid, papers[target].pmid))
    return vocab, papers, edges


def synth_journal_fields(papers: Iterable[PaperRecord]) -> list[tuple[str, str]]:
    """Journal -> field rows matching the generator's journal naming."""
    journals = sorted({rec.journal for rec in papers})
    return [
        (j, "basic-field" if j.startswith("J-BAS") else "applied-field")
        for j in journals
    ]


# ---------------------------------------------------------------------------
# Normalized on-disk forms used between pipeline stages
# ---------------------------------------------------------------------------

def save_vocabulary(vocab: MeshVocabulary, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for i, name in enumerate(vocab.names):
            fh.write(
                "\t".join(
                    (
                        str(i),
                        name,
                        vocab.category[i].value,
                        "1" if vocab.excluded[i] else "0",
                        "|".join(vocab.tree_numbers[i]),
                    )
                )
                + "\n"
            )


def load_vocabulary(path) -> MeshVocabulary:
    path = Path(path)
    if not path.exists():
        raise DataError(f"vocabulary file not found: {path}")
    names: list[str] = []
    trees: list[list[str]] = []
    category: list[TermCategory] = []
    excluded: list[bool] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.rstrip("\n").split("\t")
            if len(parts) != 5:
                raise ParseError(path, lineno, "expected 5 columns")
            tid, name, cat, excl, tns = parts
            if int(tid) != len(names):
                raise ParseError(path, lineno, "term ids must be dense and ordered")
            names.append(name)
            trees.append(tns.split("|") if tns else [])
            category.append(TermCategory(cat))
            excluded.append(excl == "1")
    branches = [frozenset(tn[0] for tn in tns if tn) for tns in trees]
    return MeshVocabulary(names, trees, category, branches, excluded)


def save_papers(records: Iterable[PaperRecord], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "pmid": rec.pmid,
                        "year": rec.year,
                        "journal": rec.journal,
                        "terms": list(rec.terms),
                        "n_original": rec.n_original,
                        "trial_phase": rec.trial_phase,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_normalized_papers(path) -> list[PaperRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"normalized papers file not found: {path}")
    records = []
    with path.open(encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            obj = json.loads(line)
            records.append(
                PaperRecord(
                    obj["pmid"],
                    obj["year"],
                    obj["journal"],
                    tuple(obj["terms"]),
                    obj["n_original"],
                    obj["trial_phase"],
                )
            )
    return records


def write_papers_jsonl(
    records: Iterable[PaperRecord], vocab: MeshVocabulary, path
) -> None:
    """Write records back in the external `papers.jsonl` form (term names)."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "pmid": rec.pmid,
                "year": rec.year,
                "journal": rec.journal,
                "mesh": [vocab.names[t] for t in rec.terms],
            }
            if rec.trial_phase is not None:
                obj["trial_phase"] = rec.trial_phase
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
