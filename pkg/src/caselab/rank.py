"""Sparse scoring (TF-IDF cosine, BM25, query likelihood) and pool/corpus ranking."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import QueryCase
from .errors import ConfigError, ValidationError
from .index import InvertedIndex
from .jsonl import read_jsonl, write_jsonl_atomic

MODELS = ("tfidf", "bm25", "ql")


@dataclass(frozen=True)
class Bm25Params:
    k: float = 1.4
    b: float = 0.6

    def __post_init__(self):
        if self.k <= 0:
            raise ConfigError(f"k must be positive, got {self.k}")
        if not (0.0 <= self.b <= 1.0):
            raise ConfigError(f"b must lie in [0, 1], got {self.b}")

    def as_string(self) -> str:
        return f"k={self.k:g},b={self.b:g}"


@dataclass(frozen=True)
class QlParams:
    """Query-likelihood smoothing: jelinek-mercer (lambda) or dirichlet (mu)."""

    smoothing: str = "jelinek-mercer"
    lam: float = 0.1
    mu: float = 2000.0

    def __post_init__(self):
        if self.smoothing not in ("jelinek-mercer", "dirichlet"):
            raise ConfigError(f"unknown smoothing {self.smoothing!r}")
        if not (0.0 < self.lam < 1.0):
            raise ConfigError(f"lambda must lie in (0, 1), got {self.lam}")
        if self.mu <= 0:
            raise ConfigError(f"mu must be positive, got {self.mu}")

    def as_string(self) -> str:
        if self.smoothing == "jelinek-mercer":
            return f"smoothing=jelinek-mercer,lambda={self.lam:g},floor=1/(clen+vocab)"
        return f"smoothing=dirichlet,mu={self.mu:g},floor=1/(clen+vocab)"


@dataclass
class RankedRun:
    """One query's ranking: (doc_id, score) pairs with non-increasing scores."""

    query_id: str
    ranking: list[tuple[str, float]]
    model: str
    params: str

    def doc_ids(self) -> list[str]:
        return [d for d, _ in self.ranking]


def score_bm25(
    query_tokens: Sequence[str], doc_id: str, index: InvertedIndex, params: Bm25Params = Bm25Params()
) -> float:
    """Sum of per-term saturated tf * idf contributions; 0 when nothing matches."""
    doc_tf = index.doc_tf.get(doc_id)
    if doc_tf is None:
        raise ValidationError("doc_id not in index", [doc_id])
    dl = index.doc_len[doc_id]
    avgdl = index.stats.avg_doc_len
    norm = params.k * (1.0 - params.b + params.b * dl / avgdl) if avgdl > 0 else params.k
    score = 0.0
    for term in query_tokens:
        tf = doc_tf.get(term, 0)
        if tf == 0:
            continue
        idf = index.stats.idf(term, "robertson")
        score += idf * (tf * (params.k + 1.0)) / (tf + norm)
    return score


def _absent_floor(index: InvertedIndex) -> float:
    # Keeps corpus-absent query terms finite: 1 / (collection length + vocab size).
    return 1.0 / max(index.collection_len + index.vocab_size, 1)


def score_ql(
    query_tokens: Sequence[str], doc_id: str, index: InvertedIndex, params: QlParams = QlParams()
) -> float:
    """Log-probability of the query under the document's smoothed language model."""
    doc_tf = index.doc_tf.get(doc_id)
    if doc_tf is None:
        raise ValidationError("doc_id not in index", [doc_id])
    dl = index.doc_len[doc_id]
    clen = index.collection_len
    floor = _absent_floor(index)
    log_prob = 0.0
    for term in query_tokens:
        cf = index.cf.get(term, 0)
        if cf == 0 or clen == 0:
            p = floor
        elif params.smoothing == "jelinek-mercer":
            p_ml = doc_tf.get(term, 0) / dl if dl else 0.0
            p = (1.0 - params.lam) * p_ml + params.lam * (cf / clen)
        else:
            p = (doc_tf.get(term, 0) + params.mu * (cf / clen)) / (dl + params.mu)
        log_prob += math.log(p)
    return log_prob


def score_tfidf(
    query_tokens: Sequence[str], doc_id: str, index: InvertedIndex, idf_variant: str = "smooth-log"
) -> float:
    """Cosine similarity of tf*idf vectors; 0 for orthogonal or zero-norm vectors."""
    doc_tf = index.doc_tf.get(doc_id)
    if doc_tf is None:
        raise ValidationError("doc_id not in index", [doc_id])
    q_tf = Counter(query_tokens)
    dot = 0.0
    q_sq = 0.0
    for term, qtf in q_tf.items():
        idf = index.stats.idf(term, idf_variant)
        q_weight = qtf * idf
        q_sq += q_weight * q_weight
        dtf = doc_tf.get(term, 0)
        if dtf:
            dot += q_weight * (dtf * idf)
    d_sq = 0.0
    for term, dtf in doc_tf.items():
        d_weight = dtf * index.stats.idf(term, idf_variant)
        d_sq += d_weight * d_weight
    if dot == 0.0 or q_sq == 0.0 or d_sq == 0.0:
        return 0.0
    return dot / (math.sqrt(q_sq) * math.sqrt(d_sq))


def _score_one(model: str, query_tokens: Sequence[str], doc_id: str, index: InvertedIndex, params) -> float:
    if model == "bm25":
        return score_bm25(query_tokens, doc_id, index, params or Bm25Params())
    if model == "ql":
        return score_ql(query_tokens, doc_id, index, params or QlParams())
    if model == "tfidf":
        return score_tfidf(query_tokens, doc_id, index)
    raise ConfigError(f"unknown model {model!r}; expected one of {MODELS}")


def params_string(model: str, params=None) -> str:
    if model == "bm25":
        return (params or Bm25Params()).as_string()
    if model == "ql":
        return (params or QlParams()).as_string()
    if model == "tfidf":
        return "idf=smooth-log"
    raise ConfigError(f"unknown model {model!r}; expected one of {MODELS}")


def retrieve(
    query: QueryCase,
    index: InvertedIndex,
    model: str = "bm25",
    params=None,
    pool: Sequence[str] | None = None,
    k: int = 0,
) -> RankedRun:
    """Rank the pool (or the whole corpus when pool is None) for one query.

    k <= 0 or k beyond the pool returns the full ranking. Ties break by
    ascending doc_id so repeated calls are byte-identical.
    """
    candidates = list(pool) if pool is not None else sorted(index.doc_len)
    missing = [d for d in candidates if d not in index.doc_len]
    if missing:
        raise ValidationError("pool docs missing from index", missing)
    if len(set(candidates)) != len(candidates):
        raise ValidationError("pool contains duplicate doc ids", [query.query_id])
    query_tokens = index.tokenize_query(query).content_words()
    scored = [(_score_one(model, query_tokens, doc_id, index, params), doc_id) for doc_id in candidates]
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    if k > 0:
        scored = scored[:k]
    return RankedRun(
        query_id=query.query_id,
        ranking=[(doc_id, score) for score, doc_id in scored],
        model=model,
        params=params_string(model, params),
    )


def save_runs(runs: Iterable[RankedRun], path: str | Path) -> None:
    """Write runs as JSONL, one retrieved doc per line."""
    records = []
    for run in runs:
        for rank, (doc_id, score) in enumerate(run.ranking, start=1):
            records.append(
                {
                    "query_id": run.query_id,
                    "doc_id": doc_id,
                    "rank": rank,
                    "score": score,
                    "model": run.model,
                    "params": run.params,
                }
            )
    write_jsonl_atomic(path, records)


def load_runs(path: str | Path) -> dict[str, RankedRun]:
    """Read a run file back into per-query RankedRun objects."""
    by_query: dict[str, list[tuple[int, str, float]]] = {}
    meta: dict[str, tuple[str, str]] = {}
    for lineno, rec in read_jsonl(path, required_keys=("query_id", "doc_id", "rank", "score")):
        qid = str(rec["query_id"])
        by_query.setdefault(qid, []).append((int(rec["rank"]), str(rec["doc_id"]), float(rec["score"])))
        meta.setdefault(qid, (str(rec.get("model", "")), str(rec.get("params", ""))))
    runs = {}
    for qid, rows in by_query.items():
        rows.sort()
        model, params = meta[qid]
        ranking = [(doc_id, score) for _, doc_id, score in rows]
        if len({d for d, _ in ranking}) != len(ranking):
            raise ValidationError("run contains duplicate doc ids", [qid])
        runs[qid] = RankedRun(query_id=qid, ranking=ranking, model=model, params=params)
    return runs
