"""Subcommand pipeline driver.

Stages communicate only via files in the configured output directory, so every
intermediate is inspectable and independently testable:

    synth -> ingest -> cooccur -> embed -> score -> analyze <...>

Every stage writes `manifest_<stage>.json` recording the canonical config
text and hash, the seed, input/output digests and library versions; nothing
time-dependent goes in, so identical inputs reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import platform
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import analysis as an
from . import axis as ax
from . import citegraph as cg
from . import cooccur as co
from . import corpus as cp
from . import embed as em
from .errors import DataError, PipelineError, UsageError

ANALYSES = ("heatmap", "reach", "groups", "trials", "trajectory", "threshold")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PipelineConfig:
    """Reproducible run configuration (plain-text key=value on disk)."""

    mesh_tree: str = "mesh_tree.tsv"
    papers: str = "papers.jsonl"
    citations: str = "citations.tsv"
    journal_fields: str = "journal_fields.tsv"
    out: str = "out"
    year_from: int = 1980
    year_to: int = 2013
    window: int = 5
    cell_roots: tuple = cp.DEFAULT_CELL_ROOTS
    animal_roots: tuple = cp.DEFAULT_ANIMAL_ROOTS
    human_roots: tuple = cp.DEFAULT_HUMAN_ROOTS
    dim: int = 10
    negatives: int = 5
    samples: int = 0  # 0 -> 100 x edge count per window
    rate: float = 0.025
    noise_exponent: float = 0.75
    bin_width: float = 0.1
    hist_width: float = 0.02
    sample_fraction: float = 0.01
    seed: int = 42
    threads: int = 1
    synth_basic_terms: int = 50
    synth_applied_terms: int = 50
    synth_cell_seeds: int = 10
    synth_animal_seeds: int = 10
    synth_human_seeds: int = 20
    synth_papers: int = 5000
    synth_mixing: float = 0.1
    synth_terms_min: int = 4
    synth_terms_max: int = 8
    synth_refs: int = 3
    synth_citation_pref: float = 0.9
    synth_trial_fraction: float = 0.05

    def validate(self) -> "PipelineConfig":
        if self.window < 1:
            raise UsageError("window must be >= 1")
        if self.year_from > self.year_to:
            raise UsageError("year_from must not exceed year_to")
        for name in ("cell_roots", "animal_roots", "human_roots"):
            if not getattr(self, name):
                raise UsageError(f"{name} must list at least one root code")
        if self.dim < 1 or self.negatives < 1 or self.samples < 0:
            raise UsageError("dim/negatives/samples out of range")
        if self.rate <= 0:
            raise UsageError("rate must be positive")
        if not 0.0 < self.sample_fraction <= 1.0:
            raise UsageError("sample_fraction must lie in (0, 1]")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")
        if self.seed < 0:
            raise UsageError("seed must be non-negative")
        for width in (self.bin_width, self.hist_width):
            try:
                cg.BinningSpec(width)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
        return self

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def year_range(self) -> range:
        return range(self.year_from, self.year_to + 1)

    def corpus_range(self) -> tuple[int, int]:
        return (self.year_from - self.window + 1, self.year_to)

    def embedding_params(self, t: int) -> em.EmbeddingParams:
        return em.EmbeddingParams(
            d=self.dim,
            total_samples=self.samples or None,
            negatives=self.negatives,
            initial_rate=self.rate,
            noise_exponent=self.noise_exponent,
            seed=self.seed + t,
        )

    def roots(self) -> cp.CategoryRoots:
        return cp.CategoryRoots(
            tuple(self.cell_roots), tuple(self.animal_roots), tuple(self.human_roots)
        )


def parse_config_text(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    """Parse key=value lines over defaults; `#` starts a comment line."""
    base = base or PipelineConfig()
    kinds = {f.name: f for f in fields(PipelineConfig)}
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not eq or key not in kinds:
            raise UsageError(f"config line {lineno}: unknown or malformed entry {raw!r}")
        current = getattr(base, key)
        try:
            if isinstance(current, tuple):
                parsed = tuple(v.strip() for v in value.split(",") if v.strip())
            elif isinstance(current, bool):
                parsed = value == "true"
            elif isinstance(current, int):
                parsed = int(value)
            elif isinstance(current, float):
                parsed = float(value)
            else:
                parsed = value
        except ValueError:
            raise UsageError(f"config line {lineno}: bad value for {key}: {value!r}") from None
        overrides[key] = parsed
    return replace(base, **overrides)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Stage plumbing: input checks, output cleanup, manifests
# ---------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class StageContext:
    def __init__(self, stage: str, config: PipelineConfig):
        self.stage = stage
        self.config = config
        self.out_dir = Path(config.out)
        self.inputs: dict[str, str] = {}
        self.outputs: list[Path] = []
        self.stats: dict = {}

    def input(self, path, producer: str) -> Path:
        path = Path(path)
        if not path.exists():
            raise DataError(
                f"missing input {path}; run `transaxis {producer}` first"
            )
        self.inputs[str(path)] = _sha256(path)
        return path

    def out_path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        self.outputs.append(path)
        return path

    def raw_path(self, configured: str) -> Path:
        """Output at a configured (possibly out-of-tree) location."""
        path = Path(configured)
        if path.parent != Path("."):
            path.parent.mkdir(parents=True, exist_ok=True)
        self.outputs.append(path)
        return path

    def cleanup(self) -> None:
        for path in self.outputs:
            try:
                path.unlink(missing_ok=True)
            except OSError:
                pass

    def manifest(self) -> dict:
        return {
            "stage": self.stage,
            "config": self.config.to_text(),
            "config_hash": self.config.config_hash(),
            "seed": self.config.seed,
            "inputs": self.inputs,
            "outputs": {str(p): _sha256(p) for p in self.outputs},
            "stats": self.stats,
            "versions": {
                "transaxis": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
            },
        }

    def write_manifest(self) -> dict:
        manifest = self.manifest()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / f"manifest_{self.stage}.json"
        path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return manifest


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def _stage_synth(ctx: StageContext) -> None:
    cfg = ctx.config
    try:
        spec = cp.SynthSpec(
            basic_terms=cfg.synth_basic_terms,
            applied_terms=cfg.synth_applied_terms,
            cell_seeds=cfg.synth_cell_seeds,
            animal_seeds=cfg.synth_animal_seeds,
            human_seeds=cfg.synth_human_seeds,
            papers=cfg.synth_papers,
            mixing=cfg.synth_mixing,
            years=(cfg.year_from, cfg.year_to),
            terms_per_paper=(cfg.synth_terms_min, cfg.synth_terms_max),
            refs_per_paper=cfg.synth_refs,
            citation_pref=cfg.synth_citation_pref,
            trial_fraction=cfg.synth_trial_fraction,
        )
    except ValueError as exc:
        raise UsageError(f"invalid synthetic corpus parameters: {exc}") from None
    vocab, papers, edges = cp.generate_synthetic_corpus(spec, cfg.seed)

    with ctx.raw_path(cfg.mesh_tree).open("w", encoding="utf-8") as fh:
        for tid, name in enumerate(vocab.names):
            for tn in vocab.tree_numbers[tid]:
                fh.write(f"{name}\t{tn}\n")
    cp.write_papers_jsonl(papers, vocab, ctx.raw_path(cfg.papers))
    with ctx.raw_path(cfg.citations).open("w", encoding="utf-8") as fh:
        for citing, cited in edges:
            fh.write(f"{citing}\t{cited}\n")
    with ctx.raw_path(cfg.journal_fields).open("w", encoding="utf-8") as fh:
        for journal, fld in cp.synth_journal_fields(papers):
            fh.write(f"{journal}\t{fld}\n")
    ctx.stats = {"terms": len(vocab), "papers": len(papers), "citations": len(edges)}


def _stage_ingest(ctx: StageContext) -> None:
    cfg = ctx.config
    vocab, vstats = cp.load_mesh_tree(
        ctx.input(cfg.mesh_tree, "synth"), cfg.roots()
    )
    parsed = cp.parse_papers(
        ctx.input(cfg.papers, "synth"), vocab, cfg.corpus_range()
    )
    edges, cstats = cp.load_citations(
        ctx.input(cfg.citations, "synth"), (r.pmid for r in parsed.records)
    )
    cp.load_journal_fields(ctx.input(cfg.journal_fields, "synth"))

    cp.save_vocabulary(vocab, ctx.out_path("vocab.tsv"))
    cp.save_papers(parsed.records, ctx.out_path("papers_norm.jsonl"))
    with ctx.out_path("citations_norm.tsv").open("w", encoding="utf-8") as fh:
        for citing, cited in edges:
            fh.write(f"{citing}\t{cited}\n")
    ctx.stats = {"tree": vstats, "papers": parsed.stats, "citations": cstats}


def _stage_cooccur(ctx: StageContext) -> None:
    cfg = ctx.config
    records = cp.load_normalized_papers(ctx.input(ctx.out_dir / "papers_norm.jsonl", "ingest"))
    total_edges = 0
    for t in cfg.year_range():
        m = co.build_window_matrix(records, t, cfg.window)
        co.export_edge_list(m, ctx.out_path(co.edge_file_name(t)))
        total_edges += m.n_edges()
    ctx.stats = {"windows": len(cfg.year_range()), "total_edges": total_edges}


def _stage_embed(ctx: StageContext) -> None:
    cfg = ctx.config
    for t in cfg.year_range():
        m = co.load_edge_list(
            ctx.input(ctx.out_dir / co.edge_file_name(t), "cooccur"), t
        )
        params = cfg.embedding_params(t)
        emb = em.train_line(m, params, threads=cfg.threads)
        em.save_embedding(emb, ctx.out_path(em.embedding_file_name(t)), params.seed)
    ctx.stats = {"windows": len(cfg.year_range()), "dim": cfg.dim}


def _stage_score(ctx: StageContext) -> None:
    cfg = ctx.config
    vocab = cp.load_vocabulary(ctx.input(ctx.out_dir / "vocab.tsv", "ingest"))
    records = cp.load_normalized_papers(ctx.input(ctx.out_dir / "papers_norm.jsonl", "ingest"))
    embeddings = {
        t: em.load_embedding(ctx.input(ctx.out_dir / em.embedding_file_name(t), "embed"), t)
        for t in cfg.year_range()
    }
    tables = ax.score_corpus(records, embeddings, vocab)
    ax.save_term_scores(tables, vocab, ctx.out_path("term_scores.tsv"))
    ax.save_paper_scores(tables, records, vocab, ctx.out_path("paper_scores.tsv"))
    in_range = sum(1 for r in records if cfg.year_from <= r.year <= cfg.year_to)
    ctx.stats = {
        "papers_scored": len(tables.paper_scores),
        "papers_in_range": in_range,
        "papers_not_scoreable": in_range - len(tables.paper_scores),
    }


def _load_scored(ctx: StageContext):
    scores = ax.load_paper_scores(ctx.input(ctx.out_dir / "paper_scores.tsv", "score"))
    records = cp.load_normalized_papers(ctx.input(ctx.out_dir / "papers_norm.jsonl", "ingest"))
    return records, scores


def _load_graph(ctx: StageContext) -> cg.CitationGraph:
    records, scores = _load_scored(ctx)
    edges = []
    path = ctx.input(ctx.out_dir / "citations_norm.tsv", "ingest")
    with path.open(encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if line:
                citing, _, cited = line.partition("\t")
                edges.append((citing, cited))
    return cg.build_graph(records, edges, {p: ps for p, (ps, _) in scores.items()})


def _stage_analyze(ctx: StageContext, what: str, term: Optional[str]) -> None:
    cfg = ctx.config
    bins = cg.BinningSpec(cfg.bin_width)

    if what == "heatmap":
        graph = _load_graph(ctx)
        pair_counts = cg.pair_heatmap(graph, bins)
        cg.save_heatmap(pair_counts, bins, ctx.out_path("heatmap.tsv"))
        cg.save_mu(graph, ctx.out_path("mu.tsv"))
        ctx.stats = {"nodes": graph.n_nodes, "edges": graph.n_edges,
                     "pairs_binned": int(pair_counts.sum())}
    elif what == "reach":
        graph = _load_graph(ctx)
        matrices = cg.aggregate_reach(graph, cfg.sample_fraction, bins, cfg.seed)
        cg.save_matrix(matrices.r, bins, ctx.out_path("reach_R.tsv"))
        cg.save_matrix(matrices.l, bins, ctx.out_path("reach_L.tsv"))
        cg.save_matrix(matrices.y, bins, ctx.out_path("reach_Y.tsv"))
        ctx.stats = {"nodes": graph.n_nodes, "sources": int(matrices.counts.sum())}
    elif what == "groups":
        records, scores = _load_scored(ctx)
        jf = cp.load_journal_fields(ctx.input(cfg.journal_fields, "synth"))
        by_journal, by_field = [], []
        for rec in records:
            entry = scores.get(rec.pmid)
            if entry is None:
                continue
            score = entry[0].score
            by_journal.append((rec.journal, score))
            flds = jf.fields(rec.journal)
            if flds:
                by_field.extend((f, score) for f in flds)
            else:
                by_field.append((None, score))
        by_weber = [(weber, ps.score) for ps, weber in scores.values()]
        an.save_groups(an.group_summary(by_journal, cfg.hist_width), ctx.out_path("groups_journal.tsv"))
        field_summary = an.group_summary(by_field, cfg.hist_width)
        an.save_groups(field_summary, ctx.out_path("groups_field.tsv"))
        an.save_groups(an.group_summary(by_weber, cfg.hist_width), ctx.out_path("groups_weber.tsv"))
        ctx.stats = {"papers": len(by_journal), "unmapped_journals": field_summary.excluded}
    elif what == "trials":
        records, scores = _load_scored(ctx)
        summary, tests = an.trial_phase_summary(
            records, {p: ps for p, (ps, _) in scores.items()}, seed=cfg.seed
        )
        an.save_groups(summary, ctx.out_path("groups_phase.tsv"))
        an.save_perm_tests(tests, ctx.out_path("perm_tests.tsv"))
        ctx.stats = {"trial_papers": summary.groups["all"].n, "tests": len(tests)}
    elif what == "threshold":
        _, scores = _load_scored(ctx)
        hist = an.histogram([ps.score for ps, _ in scores.values()], cfg.hist_width)
        an.save_histogram(hist, ctx.out_path("histogram.tsv"))
        th = an.detect_threshold(hist)
        ctx.out_path("threshold.tsv").write_text(
            ("NA" if th is None else format(th, ".9g")) + "\n", encoding="utf-8"
        )
        ctx.stats = {"n": hist.n, "median": hist.median,
                     "threshold": None if th is None else th}
    elif what == "trajectory":
        if not term:
            raise UsageError("analyze trajectory requires --term")
        vocab = cp.load_vocabulary(ctx.input(ctx.out_dir / "vocab.tsv", "ingest"))
        tid = vocab.id_of.get(term)
        if tid is None:
            raise DataError(f"unknown term {term!r}")
        records, scores = _load_scored(ctx)
        term_scores = ax.load_term_scores(
            ctx.input(ctx.out_dir / "term_scores.tsv", "score"), vocab
        )
        tables = ax.LevelScoreTable(term_scores, {p: ps for p, (ps, _) in scores.items()})
        years = list(cfg.year_range())
        traj = ax.term_trajectory(tid, years, tables, vocab)
        rows = ax.papers_with_term_trajectory(tid, records, tables, years)
        fmt = lambda x: "NA" if x is None else format(x, ".9g")
        with ctx.out_path(f"trajectory_term{tid}.tsv").open("w", encoding="utf-8") as fh:
            for year, s, b, row in zip(years, traj.scores, traj.baseline, rows):
                fh.write(
                    f"{year}\t{fmt(s)}\t{fmt(b)}\t{fmt(row.mean)}\t{fmt(row.std)}\t{row.n}\n"
                )
        ctx.stats = {"term": term, "term_id": tid}
    else:
        raise UsageError(f"unknown analysis {what!r} (expected one of {', '.join(ANALYSES)})")


_STAGES = {
    "synth": _stage_synth,
    "ingest": _stage_ingest,
    "cooccur": _stage_cooccur,
    "embed": _stage_embed,
    "score": _stage_score,
}


def run(
    subcommand: str,
    config: PipelineConfig,
    what: Optional[str] = None,
    term: Optional[str] = None,
) -> dict:
    """Execute one stage; returns its manifest. Partial outputs are removed
    when a stage fails."""
    config.validate()
    stage = subcommand if subcommand != "analyze" else f"analyze_{what}"
    ctx = StageContext(stage, config)
    try:
        if subcommand == "analyze":
            _stage_analyze(ctx, what or "", term)
        elif subcommand in _STAGES:
            _STAGES[subcommand](ctx)
        else:
            raise UsageError(f"unknown subcommand {subcommand!r}")
    except BaseException:
        ctx.cleanup()
        raise
    return ctx.write_manifest()


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_OVERRIDES = (
    ("--from", "year_from", int),
    ("--to", "year_to", int),
    ("--window", "window", int),
    ("--dim", "dim", int),
    ("--negatives", "negatives", int),
    ("--samples", "samples", int),
    ("--bin-width", "bin_width", float),
    ("--sample-fraction", "sample_fraction", float),
    ("--seed", "seed", int),
    ("--threads", "threads", int),
    ("--out", "out", str),
)


def _build_parser() -> _Parser:
    parser = _Parser(prog="transaxis", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    for flag, dest, typ in _OVERRIDES:
        common.add_argument(flag, dest=dest, type=typ, default=None)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _STAGES:
        sub.add_parser(name, parents=[common])
    analyze = sub.add_parser("analyze", parents=[common])
    analyze.add_argument("what", choices=ANALYSES)
    analyze.add_argument("--term", help="term name for `analyze trajectory`")
    return parser


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    overrides = {
        dest: getattr(args, dest)
        for _, dest, _t in _OVERRIDES
        if getattr(args, dest) is not None
    }
    return replace(config, **overrides)


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        config = _config_from_args(args)
        run(args.command, config, what=getattr(args, "what", None),
            term=getattr(args, "term", None))
        return 0
    except PipelineError as exc:
        print(f"transaxis: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
