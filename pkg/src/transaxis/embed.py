"""First-order edge-sampling embedding of a window co-occurrence graph.

Training draws edges proportionally to their co-occurrence count via an
alias table and ascends the negative-sampling objective

    log s(v_i . v_j) + sum_k log s(-v_i . v_nk)

with negatives drawn proportionally to weighted degree ** noise_exponent.
Both endpoints share one parameter table (first-order proximity); each draw
orients the sampled undirected edge uniformly at random so the two endpoints
are treated symmetrically. The learning rate decays linearly from
`initial_rate` to an `initial_rate * 1e-4` floor.

Every random draw inside the hot loop comes from a counter-based splitmix64
stream keyed on (seed, sample index), so a fixed seed is bit-reproducible
single-threaded and the work can be split across threads without coordinating
generator state (updates then race benignly, hogwild style).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .cooccur import CooccurrenceMatrix
from .errors import DataError, NumericError, ParseError

# splitmix64 constants; typed as uint64 so numba keeps all arithmetic in u64
_GOLD = np.uint64(0x9E3779B97F4A7C15)
_STREAM = np.uint64(0xD1B54A32D192ED03)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_ONE = np.uint64(1)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53

LR_FLOOR_FACTOR = 1e-4


@dataclass(frozen=True)
class EmbeddingParams:
    """Training hyperparameters; `total_samples=None` means 100x edge count."""

    d: int = 10
    total_samples: Optional[int] = None
    negatives: int = 5
    initial_rate: float = 0.025
    noise_exponent: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("embedding dimension must be >= 1")
        if self.total_samples is not None and self.total_samples < 1:
            raise ValueError("total_samples must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives per edge must be >= 1")
        if self.initial_rate <= 0:
            raise ValueError("initial learning rate must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


# ---------------------------------------------------------------------------
# Alias method (O(1) weighted sampling)
# ---------------------------------------------------------------------------

def alias_arrays(weights: Sequence) -> tuple[list, list]:
    """Walker alias construction; exact for rational weight types.

    Returns (prob, alias) lists such that drawing a uniform slot k and
    accepting with prob[k] (else taking alias[k]) samples item k with
    probability weights[k] / sum(weights).
    """
    n = len(weights)
    if n == 0:
        raise ValueError("no weights")
    if any(w < 0 for w in weights):
        raise ValueError("negative weight")
    total = sum(weights)
    if not total > 0:
        raise ValueError("weights must contain a positive entry")
    scaled = [w * n / total for w in weights]
    prob = [None] * n
    alias = list(range(n))
    small = [i for i, w in enumerate(scaled) if w < 1]
    large = [i for i, w in enumerate(scaled) if w >= 1]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] = scaled[g] - (1 - scaled[s])
        (small if scaled[g] < 1 else large).append(g)
    for k in large:
        prob[k] = 1
    for k in small:  # float residue only; exact arithmetic never lands here
        prob[k] = 1
    return prob, alias


@dataclass
class AliasTable:
    """Numpy-backed alias table over item indices 0..n-1."""

    prob: np.ndarray
    alias: np.ndarray

    def __len__(self) -> int:
        return len(self.prob)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        n = len(self.prob)
        k = rng.integers(0, n, size=size)
        u = rng.random(size=size)
        return np.where(u < self.prob[k], k, self.alias[k])

    def implied_distribution(self) -> np.ndarray:
        """Exact sampling distribution encoded by the table."""
        n = len(self.prob)
        pr = self.prob.astype(float).copy()
        for k in range(n):
            if self.alias[k] != k:
                pr[self.alias[k]] += 1.0 - self.prob[k]
        return pr / n


def build_alias_table(weights: Sequence[float]) -> AliasTable:
    prob, alias = alias_arrays([float(w) for w in weights])
    return AliasTable(np.asarray(prob, dtype=np.float64), np.asarray(alias, dtype=np.int64))


# ---------------------------------------------------------------------------
# Deterministic per-sample RNG + SGD kernel
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _mix64(z):
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True, nogil=True)
def _sgd_range(emb, eu, ev, eprob, ealias, nprob, nalias,
               total, s_begin, s_end, n_negative, rho0, seed):
    d = emb.shape[1]
    n_edges = eu.shape[0]
    n_nodes = emb.shape[0]
    lr_floor = rho0 * LR_FLOOR_FACTOR
    err = np.empty(d, dtype=np.float64)
    for s in range(s_begin, s_end):
        state = _mix64(seed ^ ((np.uint64(s) + _ONE) * _STREAM))
        lr = rho0 * (1.0 - s / total)
        if lr < lr_floor:
            lr = lr_floor
        # positive edge
        state = state + _GOLD
        u = np.float64(_mix64(state) >> _S11) * _INV53
        k = int(u * n_edges)
        if k >= n_edges:
            k = n_edges - 1
        state = state + _GOLD
        u = np.float64(_mix64(state) >> _S11) * _INV53
        e = k if u < eprob[k] else ealias[k]
        i = eu[e]
        j = ev[e]
        state = state + _GOLD
        u = np.float64(_mix64(state) >> _S11) * _INV53
        if u < 0.5:
            i, j = j, i
        x = 0.0
        for c in range(d):
            x += emb[i, c] * emb[j, c]
        g = lr * (1.0 - _sigmoid(x))
        for c in range(d):
            err[c] = g * emb[j, c]
            emb[j, c] += g * emb[i, c]
        # negatives against endpoint i
        for _ in range(n_negative):
            state = state + _GOLD
            u = np.float64(_mix64(state) >> _S11) * _INV53
            kn = int(u * n_nodes)
            if kn >= n_nodes:
                kn = n_nodes - 1
            state = state + _GOLD
            u = np.float64(_mix64(state) >> _S11) * _INV53
            nn = kn if u < nprob[kn] else nalias[kn]
            x = 0.0
            for c in range(d):
                x += emb[i, c] * emb[nn, c]
            gn = -lr * _sigmoid(x)
            for c in range(d):
                err[c] += gn * emb[nn, c]
                emb[nn, c] += gn * emb[i, c]
        for c in range(d):
            emb[i, c] += err[c]


# ---------------------------------------------------------------------------
# Embedding container and training entry points
# ---------------------------------------------------------------------------

@dataclass
class TermEmbedding:
    """Vectors for the terms of one window, keyed by term id."""

    t: int
    term_ids: np.ndarray
    matrix: np.ndarray

    def __post_init__(self):
        self._row = {int(tid): r for r, tid in enumerate(self.term_ids)}

    def __contains__(self, term_id: int) -> bool:
        return int(term_id) in self._row

    def __len__(self) -> int:
        return len(self.term_ids)

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    def vector(self, term_id: int) -> np.ndarray:
        row = self._row.get(int(term_id))
        if row is None:
            raise KeyError(f"term {term_id} not embedded in window {self.t}")
        return self.matrix[row]

    def row_of(self, term_id: int) -> Optional[int]:
        return self._row.get(int(term_id))


def _edge_arrays(m: CooccurrenceMatrix):
    pairs = sorted(m.entries)
    eu = np.fromiter((p[0] for p in pairs), dtype=np.int64, count=len(pairs))
    ev = np.fromiter((p[1] for p in pairs), dtype=np.int64, count=len(pairs))
    w = np.fromiter((m.entries[p] for p in pairs), dtype=np.float64, count=len(pairs))
    return eu, ev, w


def _noise_weights(m: CooccurrenceMatrix, term_ids: np.ndarray, exponent: float) -> np.ndarray:
    deg = m.weighted_degrees()
    if len(deg) != len(term_ids) or any(int(t) not in deg for t in term_ids):
        raise ValueError("embedding vocabulary does not match the matrix vocabulary")
    return np.array([deg[int(t)] for t in term_ids], dtype=np.float64) ** exponent


def train_line(m: CooccurrenceMatrix, params: EmbeddingParams, threads: int = 1) -> TermEmbedding:
    """Embed one window's co-occurrence graph; see the module docstring.

    A fixed seed with `threads=1` is bit-reproducible; more threads trade
    determinism for speed via unsynchronized (last-write-wins) row updates.
    """
    if not m.entries:
        raise DataError(f"window {m.t} has no co-occurrence edges to embed")
    if threads < 1:
        raise ValueError("threads must be >= 1")
    term_ids = np.array(m.vocabulary(), dtype=np.int64)
    row_of = {int(t): r for r, t in enumerate(term_ids)}
    eu, ev, w = _edge_arrays(m)
    eu = np.array([row_of[int(t)] for t in eu], dtype=np.int64)
    ev = np.array([row_of[int(t)] for t in ev], dtype=np.int64)
    edge_table = build_alias_table(w)
    noise_table = build_alias_table(_noise_weights(m, term_ids, params.noise_exponent))

    total = params.total_samples if params.total_samples is not None else 100 * len(w)
    d = params.d
    rng = np.random.default_rng(params.seed)
    emb = rng.uniform(-0.5 / d, 0.5 / d, size=(len(term_ids), d))
    seed64 = np.uint64(params.seed & 0xFFFFFFFFFFFFFFFF)

    args = (emb, eu, ev, edge_table.prob, edge_table.alias,
            noise_table.prob, noise_table.alias, total)
    if threads == 1:
        _sgd_range(*args, 0, total, params.negatives, params.initial_rate, seed64)
    else:
        bounds = np.linspace(0, total, threads + 1).astype(np.int64)
        workers = [
            threading.Thread(
                target=_sgd_range,
                args=(*args, int(bounds[k]), int(bounds[k + 1]),
                      params.negatives, params.initial_rate, seed64),
            )
            for k in range(threads)
        ]
        for th in workers:
            th.start()
        for th in workers:
            th.join()

    if not np.isfinite(emb).all():
        bad = int(term_ids[np.argwhere(~np.isfinite(emb))[0][0]])
        raise NumericError(
            f"non-finite vector for term {bad} in window {m.t} "
            f"(d={d}, samples={total}, rate={params.initial_rate})"
        )
    return TermEmbedding(m.t, term_ids, emb)


# ---------------------------------------------------------------------------
# Similarity and diagnostics
# ---------------------------------------------------------------------------

def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """u.v / (|u||v|), clamped to [-1, 1] against rounding."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError("vectors differ in length")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise NumericError("cosine similarity of a zero-norm vector")
    return float(np.clip(float(u @ v) / (nu * nv), -1.0, 1.0))


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def loss_estimate(
    embedding: TermEmbedding,
    m: CooccurrenceMatrix,
    sample_size: int,
    seed: int,
    negatives: int = 5,
    noise_exponent: float = 0.75,
) -> float:
    """Mean training objective over a uniform edge sample.

    The negative term is the exact expectation over the noise distribution,
    so with `sample_size >= n_edges` the result is the exact mean objective
    over all edges and is seed-independent.
    """
    if sample_size < 1:
        raise ValueError("sample_size must be >= 1")
    if not m.entries:
        raise DataError("empty co-occurrence matrix")
    pairs = sorted(m.entries)
    if sample_size < len(pairs):
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(len(pairs), size=sample_size, replace=False))
        pairs = [pairs[int(k)] for k in idx]
    q = _noise_weights(m, embedding.term_ids, noise_exponent)
    q /= q.sum()
    mat = embedding.matrix
    total = 0.0
    for i, j in pairs:
        vi = embedding.vector(i)
        vj = embedding.vector(j)
        pos = float(_log_sigmoid(vi @ vj))
        neg = float(q @ _log_sigmoid(-(mat @ vi)))
        total += pos + negatives * neg
    return total / len(pairs)


# ---------------------------------------------------------------------------
# On-disk form: emb_<t>.tsv
# ---------------------------------------------------------------------------

def embedding_file_name(t: int) -> str:
    return f"emb_{t}.tsv"


def save_embedding(emb: TermEmbedding, path, seed: int) -> None:
    """Write `term<TAB>v1...<TAB>vd` rows (9 significant digits) with header."""
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(f"#d={emb.d} seed={seed}\n")
        for row, tid in enumerate(emb.term_ids):
            vals = "\t".join(format(x, ".9g") for x in emb.matrix[row])
            fh.write(f"{int(tid)}\t{vals}\n")


def load_embedding(path, t: int) -> TermEmbedding:
    path = Path(path)
    if not path.exists():
        raise DataError(f"embedding file not found: {path}")
    term_ids: list[int] = []
    rows: list[list[float]] = []
    d = None
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                for part in line[1:].split():
                    key, _, val = part.partition("=")
                    if key == "d":
                        d = int(val)
                continue
            parts = line.split("\t")
            if d is not None and len(parts) != d + 1:
                raise ParseError(path, lineno, f"expected {d + 1} columns")
            try:
                term_ids.append(int(parts[0]))
                rows.append([float(x) for x in parts[1:]])
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
    if not rows:
        raise DataError(f"embedding file {path} has no vectors")
    return TermEmbedding(t, np.array(term_ids, dtype=np.int64), np.array(rows, dtype=np.float64))
