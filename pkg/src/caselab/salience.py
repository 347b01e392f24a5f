"""Model attention over query words and its comparison against human salience.

Two word-importance sources are supported: the query-side BM25 matching
score, and transformer CLS attention aligned from model tokens onto query
words. Interval analyses bucket the per-query word rankings into rank
percentiles (deciles by default).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ValidationError
from .index import CorpusStats
from .jsonl import read_jsonl, write_jsonl_atomic
from .rank import Bm25Params
from .tokenization import Token, TokenizedText


@dataclass(frozen=True)
class WordImportance:
    """Importance of one distinct query word under one source.

    token is the word's first occurrence; tf its frequency in the query.
    Ranks are 1-based and form a permutation per query per source.
    """

    token: Token
    score: float
    rank: int
    source: str
    tf: int = 1

    @property
    def surface(self) -> str:
        return self.token.surface


@dataclass
class AttentionExport:
    """Per-(query, doc) model tokens with last-layer CLS attention weights.

    Token offsets address the original (untruncated) query text; weights are
    raw, one per token, normalized here rather than by the producer.
    """

    query_id: str
    doc_id: str
    doc_grade: int
    tokens: list[Token]
    cls_weights: list[float]

    def validate(self, query_text: str | None = None) -> None:
        if len(self.tokens) != len(self.cls_weights):
            raise ValidationError(
                f"{len(self.cls_weights)} weights for {len(self.tokens)} tokens",
                [f"{self.query_id}/{self.doc_id}"],
            )
        if self.doc_grade not in (0, 1, 2, 3):
            raise ValidationError(f"doc_grade {self.doc_grade} outside 0-3", [self.query_id])
        for w in self.cls_weights:
            if not math.isfinite(w) or w < 0:
                raise ValidationError(f"attention weight {w!r} not finite/non-negative", [self.query_id])
        if query_text is not None:
            for tok in self.tokens:
                if not (0 <= tok.char_start < tok.char_end <= len(query_text)):
                    raise ValidationError(
                        f"token span ({tok.char_start}, {tok.char_end}) outside query text",
                        [self.query_id],
                    )
                if query_text[tok.char_start : tok.char_end] != tok.surface:
                    raise ValidationError(
                        f"token surface {tok.surface!r} does not match query slice",
                        [self.query_id],
                    )


def load_attention_exports(path: str | Path) -> list[AttentionExport]:
    exports = []
    keys = ("query_id", "doc_id", "doc_grade", "tokens", "cls_weights")
    for lineno, rec in read_jsonl(path, required_keys=keys):
        export = AttentionExport(
            query_id=str(rec["query_id"]),
            doc_id=str(rec["doc_id"]),
            doc_grade=int(rec["doc_grade"]),
            tokens=[Token(t["text"], int(t["char_start"]), int(t["char_end"])) for t in rec["tokens"]],
            cls_weights=[float(w) for w in rec["cls_weights"]],
        )
        export.validate()
        exports.append(export)
    return exports


def save_attention_exports(exports: Iterable[AttentionExport], path: str | Path) -> None:
    write_jsonl_atomic(
        path,
        (
            {
                "query_id": e.query_id,
                "doc_id": e.doc_id,
                "doc_grade": e.doc_grade,
                "tokens": [
                    {"text": t.surface, "char_start": t.char_start, "char_end": t.char_end}
                    for t in e.tokens
                ],
                "cls_weights": e.cls_weights,
            }
            for e in exports
        ),
    )


def minmax_normalize(weights: Sequence[float]) -> list[float]:
    """(w - min) / (max - min); all zeros when the weights are constant."""
    if not weights:
        return []
    lo, hi = min(weights), max(weights)
    if hi == lo:
        return [0.0] * len(weights)
    return [(w - lo) / (hi - lo) for w in weights]


def _rank(scored: list[tuple[Token, int, float]], source: str) -> list[WordImportance]:
    # Ties break by first occurrence position, so ranks form a permutation.
    ordered = sorted(scored, key=lambda item: (-item[2], item[0].char_start))
    return [
        WordImportance(token=token, score=score, rank=rank, source=source, tf=tf)
        for rank, (token, tf, score) in enumerate(ordered, start=1)
    ]


def _distinct_words(query: TokenizedText) -> list[tuple[Token, int, list[Token]]]:
    """Distinct non-stopword word types: (first occurrence, tf, all occurrences)."""
    by_surface: dict[str, list[Token]] = {}
    for token, masked in zip(query.tokens, query.stopword_mask):
        if masked:
            continue
        by_surface.setdefault(token.surface, []).append(token)
    return [(occs[0], len(occs), occs) for occs in by_surface.values()]


def bm25_word_importance(
    query: TokenizedText, stats: CorpusStats, params: Bm25Params = Bm25Params()
) -> list[WordImportance]:
    """Query-side BM25 matching score per distinct word.

    idf(w) * (k+1) / (tf(w) + k*(1 - b + b*|q|/avgl)) where |q| counts all
    query tokens and avgl is the corpus-wide average query token count.
    """
    if not query.tokens:
        return []
    if stats.avg_query_len is None or stats.avg_query_len <= 0:
        raise ValidationError("stats.avg_query_len missing; attach query stats first")
    q_len = len(query.tokens)
    scored = []
    for first, tf, _ in _distinct_words(query):
        idf = stats.idf(first.surface, "robertson")
        denom = tf + params.k * (1.0 - params.b + params.b * (q_len / stats.avg_query_len))
        # ratio first: keeps the tf=1, |q|=avgl case exactly equal to idf
        scored.append((first, tf, idf * ((params.k + 1.0) / denom)))
    return _rank(scored, "bm25")


def _span_overlap(a: Token, b: Token) -> int:
    return max(0, min(a.char_end, b.char_end) - max(a.char_start, b.char_start))


def attention_to_word_scores(export: AttentionExport, query: TokenizedText) -> list[WordImportance]:
    """Align min-max-normalized CLS weights onto query words.

    Per word occurrence s: (1/len(s)) * sum_j |s ∩ t_j| * w'_j / len(t_j),
    summed over exported tokens t_j by character-span intersection.
    Occurrences of the same word type are averaged. Words with no
    overlapping token (outside the truncated region) score exactly 0.
    """
    normalized = minmax_normalize(export.cls_weights)
    scored = []
    for first, tf, occurrences in _distinct_words(query):
        occ_scores = []
        for occ in occurrences:
            total = 0.0
            for tok, w in zip(export.tokens, normalized):
                ov = _span_overlap(occ, tok)
                if ov:
                    total += ov * w / (tok.char_end - tok.char_start)
            occ_scores.append(total / (occ.char_end - occ.char_start))
        scored.append((first, tf, sum(occ_scores) / len(occ_scores)))
    return _rank(scored, "attention")


def aggregate_attention(
    exports: Iterable[AttentionExport], query: TokenizedText, grade: int = 3
) -> list[WordImportance]:
    """Mean per-word attention over the exports of the given grade (default: most relevant)."""
    selected = [e for e in exports if e.doc_grade == grade]
    if not selected:
        raise ValidationError(f"no grade-{grade} attention export", [query.source_ref])
    per_word: dict[str, tuple[Token, int, float]] = {}
    for export in selected:
        for wi in attention_to_word_scores(export, query):
            if wi.surface in per_word:
                token, tf, acc = per_word[wi.surface]
                per_word[wi.surface] = (token, tf, acc + wi.score)
            else:
                per_word[wi.surface] = (wi.token, wi.tf, wi.score)
    scored = [(token, tf, acc / len(selected)) for token, tf, acc in per_word.values()]
    return _rank(scored, "attention")


def covered_words(query: TokenizedText, export: AttentionExport) -> set[str]:
    """Word types with at least one occurrence overlapping an exported token span."""
    covered = set()
    for first, tf, occurrences in _distinct_words(query):
        if any(_span_overlap(occ, tok) for occ in occurrences for tok in export.tokens):
            covered.add(first.surface)
    return covered


def restrict_ranking(importances: Sequence[WordImportance], allowed: set[str]) -> list[WordImportance]:
    """Drop words outside ``allowed`` and re-rank the remainder 1..n."""
    kept = [wi for wi in importances if wi.surface in allowed]
    return [
        WordImportance(token=wi.token, score=wi.score, rank=rank, source=wi.source, tf=wi.tf)
        for rank, wi in enumerate(kept, start=1)
    ]


def rank_interval(rank: int, n_words: int, n_intervals: int) -> int:
    """1-based percentile bucket of a rank within an n-word ranking."""
    return min(n_intervals, math.ceil(rank * n_intervals / n_words))


def cumulative_cutoffs(n_words: int, n_intervals: int) -> list[int]:
    return [math.ceil(i * n_words / n_intervals) for i in range(1, n_intervals + 1)]


@dataclass
class IntervalReport:
    """Per-interval series over rank-percentile buckets.

    precision/recall are cumulative (prefix-based); precision_binned and the
    tf/idf means are per-bucket, with None marking empty buckets. per_query
    holds the same series before macro-averaging.
    """

    n_intervals: int
    boundaries_pct: list[float]
    precision: list[float] | None = None
    recall: list[float] | None = None
    precision_binned: list[float | None] | None = None
    avg_tf: list[float | None] | None = None
    avg_idf: list[float | None] | None = None
    per_query: dict[str, dict] = field(default_factory=dict)
    excluded: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {"n_intervals": self.n_intervals, "boundaries_pct": self.boundaries_pct}
        for key in ("precision", "recall", "precision_binned", "avg_tf", "avg_idf"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.per_query:
            out["per_query"] = self.per_query
        if self.excluded:
            out["excluded"] = self.excluded
        return out


def _macro(series: list[list[float | None]]) -> list[float | None]:
    out: list[float | None] = []
    for column in zip(*series):
        values = [v for v in column if v is not None]
        out.append(sum(values) / len(values) if values else None)
    return out


def interval_precision_recall(
    importances: Mapping[str, Sequence[WordImportance]],
    salient: Mapping[str, set[str]],
    n_intervals: int = 10,
) -> IntervalReport:
    """Cumulative precision/recall of salient words at each rank-percentile cutoff.

    Queries whose word set contains no salient word are excluded from the
    averages and listed in the report.
    """
    report = IntervalReport(
        n_intervals=n_intervals,
        boundaries_pct=[100.0 * i / n_intervals for i in range(1, n_intervals + 1)],
    )
    precision_rows: list[list[float | None]] = []
    recall_rows: list[list[float | None]] = []
    binned_rows: list[list[float | None]] = []
    for qid in sorted(importances):
        ranked = importances[qid]
        flags = [wi.surface in salient.get(qid, set()) for wi in ranked]
        total_salient = sum(flags)
        if not ranked or total_salient == 0:
            report.excluded.append(qid)
            continue
        cutoffs = cumulative_cutoffs(len(ranked), n_intervals)
        precision, recall, binned = [], [], []
        prev_cut = 0
        prev_hits = 0
        hits = 0
        for cut in cutoffs:
            while prev_cut < cut:
                hits += flags[prev_cut]
                prev_cut += 1
            precision.append(hits / cut)
            recall.append(hits / total_salient)
            width = cut - (cutoffs[len(binned) - 1] if binned else 0)
            binned.append((hits - prev_hits) / width if width else None)
            prev_hits = hits
        precision_rows.append(precision)
        recall_rows.append(recall)
        binned_rows.append(binned)
        report.per_query[qid] = {
            "precision": precision,
            "recall": recall,
            "precision_binned": binned,
            "n_words": len(ranked),
            "n_salient": total_salient,
        }
    if precision_rows:
        report.precision = [v if v is not None else 0.0 for v in _macro(precision_rows)]
        report.recall = [v if v is not None else 0.0 for v in _macro(recall_rows)]
        report.precision_binned = _macro(binned_rows)
    return report


def joint_rank_distribution(
    imp_a: Mapping[str, Sequence[WordImportance]],
    imp_b: Mapping[str, Sequence[WordImportance]],
    salient: Mapping[str, set[str]],
    n_intervals: int = 10,
) -> list[list[float]]:
    """Joint matrix of salient-word rank buckets under two sources, in percent.

    Row = bucket under source a, column = bucket under source b; entries sum
    to 100. Both sources must rank exactly the same word set per query.
    """
    if set(imp_a) != set(imp_b):
        raise ValidationError(
            "query sets differ between sources", sorted(set(imp_a) ^ set(imp_b))
        )
    counts = [[0 for _ in range(n_intervals)] for _ in range(n_intervals)]
    total = 0
    for qid in sorted(imp_a):
        ranked_a, ranked_b = imp_a[qid], imp_b[qid]
        words_a = {wi.surface for wi in ranked_a}
        words_b = {wi.surface for wi in ranked_b}
        if words_a != words_b:
            raise ValidationError(f"word sets differ for query {qid}", sorted(words_a ^ words_b))
        rank_b = {wi.surface: wi.rank for wi in ranked_b}
        n = len(ranked_a)
        for wi in ranked_a:
            if wi.surface not in salient.get(qid, set()):
                continue
            row = rank_interval(wi.rank, n, n_intervals) - 1
            col = rank_interval(rank_b[wi.surface], n, n_intervals) - 1
            counts[row][col] += 1
            total += 1
    if total == 0:
        return [[0.0] * n_intervals for _ in range(n_intervals)]
    return [[100.0 * c / total for c in row] for row in counts]


def tf_idf_by_interval(
    importances: Mapping[str, Sequence[WordImportance]],
    salient: Mapping[str, set[str]],
    stats: CorpusStats,
    n_intervals: int = 10,
    idf_variant: str = "robertson",
) -> IntervalReport:
    """Mean query TF and corpus IDF of salient words, per rank-percentile bucket.

    Words pool across queries; buckets holding no salient word report None.
    """
    buckets_tf: list[list[float]] = [[] for _ in range(n_intervals)]
    buckets_idf: list[list[float]] = [[] for _ in range(n_intervals)]
    for qid in sorted(importances):
        ranked = importances[qid]
        n = len(ranked)
        for wi in ranked:
            if wi.surface not in salient.get(qid, set()):
                continue
            bucket = rank_interval(wi.rank, n, n_intervals) - 1
            buckets_tf[bucket].append(float(wi.tf))
            buckets_idf[bucket].append(stats.idf(wi.surface, idf_variant))
    return IntervalReport(
        n_intervals=n_intervals,
        boundaries_pct=[100.0 * i / n_intervals for i in range(1, n_intervals + 1)],
        avg_tf=[sum(b) / len(b) if b else None for b in buckets_tf],
        avg_idf=[sum(b) / len(b) if b else None for b in buckets_idf],
    )
