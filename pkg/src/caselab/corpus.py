"""Dataset bundle: case documents, query cases, graded qrels, pools, salience annotations.

One JSONL file per entity type (see FILES); the bundle is immutable after
load and validated against the cross-file invariants.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .errors import IngestionError, ValidationError
from .jsonl import read_jsonl, write_jsonl_atomic
from .tokenization import strip_words

FILES = {
    "documents": "documents.jsonl",
    "queries": "queries.jsonl",
    "qrels": "qrels.jsonl",
    "pools": "pools.jsonl",
    "annotations": "annotations.jsonl",
}

GRADES = (0, 1, 2, 3)  # 3 = most relevant


@dataclass(frozen=True)
class CaseDocument:
    doc_id: str
    text: str
    charges: tuple[str, ...] = ()

    @property
    def length_chars(self) -> int:
        return len(self.text)


@dataclass(frozen=True)
class QueryCase:
    query_id: str
    text: str
    charges: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.text:
            raise ValidationError("query text empty", [self.query_id])


@dataclass
class RelevanceJudgments:
    """Graded labels (0-3) plus the ordered candidate pool per query."""

    grades: dict[str, dict[str, int]] = field(default_factory=dict)
    pools: dict[str, list[str]] = field(default_factory=dict)

    def grade(self, query_id: str, doc_id: str) -> int:
        """Grade of a judged doc; unjudged docs count as non-relevant (0)."""
        return self.grades.get(query_id, {}).get(doc_id, 0)

    def pool(self, query_id: str) -> list[str]:
        return self.pools.get(query_id, [])

    def query_ids(self) -> list[str]:
        return sorted(set(self.grades) | set(self.pools))


def merge_spans(spans: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    """Sort spans and merge overlapping/touching ones into disjoint intervals."""
    merged: list[list[int]] = []
    for start, end in sorted(spans):
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return [(s, e) for s, e in merged]


@dataclass(frozen=True)
class SalienceAnnotation:
    """Character spans of annotated salient content within one query's text."""

    query_id: str
    spans: tuple[tuple[int, int], ...]

    @classmethod
    def from_raw(cls, query_id: str, raw_spans: Iterable[Iterable[int]], text_len: int) -> "SalienceAnnotation":
        spans = []
        for raw in raw_spans:
            start, end = int(raw[0]), int(raw[1])
            if not (0 <= start < end <= text_len):
                raise ValidationError(
                    f"annotation span ({start}, {end}) invalid for query of length {text_len}",
                    [query_id],
                )
            spans.append((start, end))
        return cls(query_id=query_id, spans=tuple(merge_spans(spans)))

    def total_chars(self) -> int:
        return sum(end - start for start, end in self.spans)

    def texts(self, query_text: str) -> list[str]:
        return [query_text[s:e] for s, e in self.spans]


@dataclass
class DatasetBundle:
    documents: dict[str, CaseDocument]
    queries: dict[str, QueryCase]
    qrels: RelevanceJudgments
    annotations: dict[str, SalienceAnnotation]

    def validate(self) -> None:
        unknown_queries = [q for q in self.qrels.query_ids() if q not in self.queries]
        if unknown_queries:
            raise ValidationError("qrels reference unknown query ids", unknown_queries)
        unknown_docs = sorted(
            {d for pool in self.qrels.pools.values() for d in pool if d not in self.documents}
        )
        if unknown_docs:
            raise ValidationError("pools reference unknown doc ids", unknown_docs)
        outside_pool = []
        for query_id, judged in self.qrels.grades.items():
            pool = set(self.qrels.pool(query_id))
            outside_pool.extend(f"{query_id}/{d}" for d in judged if d not in pool)
        if outside_pool:
            raise ValidationError("judged docs missing from their query's pool", outside_pool)
        unknown_ann = [q for q in self.annotations if q not in self.queries]
        if unknown_ann:
            raise ValidationError("annotations reference unknown query ids", unknown_ann)


def _load_documents(path: Path) -> dict[str, CaseDocument]:
    docs: dict[str, CaseDocument] = {}
    for lineno, rec in read_jsonl(path, required_keys=("doc_id", "text")):
        doc = CaseDocument(doc_id=str(rec["doc_id"]), text=rec["text"], charges=tuple(rec.get("charges", ())))
        if doc.doc_id in docs:
            raise ValidationError("duplicate doc_id", [doc.doc_id])
        docs[doc.doc_id] = doc
    return docs


def _load_queries(path: Path) -> dict[str, QueryCase]:
    queries: dict[str, QueryCase] = {}
    for lineno, rec in read_jsonl(path, required_keys=("query_id", "text")):
        query = QueryCase(query_id=str(rec["query_id"]), text=rec["text"], charges=tuple(rec.get("charges", ())))
        if query.query_id in queries:
            raise ValidationError("duplicate query_id", [query.query_id])
        queries[query.query_id] = query
    return queries


def _load_qrels(qrels_path: Path, pools_path: Path) -> RelevanceJudgments:
    qrels = RelevanceJudgments()
    for lineno, rec in read_jsonl(pools_path, required_keys=("query_id", "doc_ids")):
        qid = str(rec["query_id"])
        if qid in qrels.pools:
            raise ValidationError("duplicate pool entry", [qid])
        qrels.pools[qid] = [str(d) for d in rec["doc_ids"]]
    for lineno, rec in read_jsonl(qrels_path, required_keys=("query_id", "doc_id", "grade")):
        grade = rec["grade"]
        if not isinstance(grade, int):
            raise IngestionError("grade is not an integer", path=str(qrels_path), line=lineno)
        if grade not in GRADES:
            raise ValidationError(
                f"grade {grade} outside 0-3", [f"{rec['query_id']}/{rec['doc_id']}"]
            )
        qrels.grades.setdefault(str(rec["query_id"]), {})[str(rec["doc_id"])] = grade
    return qrels


def load_dataset(root_path: str | Path, filenames: Mapping[str, str] | None = None) -> DatasetBundle:
    """Load and validate the five-file dataset bundle under root_path.

    filenames may override the default file name for any entity type.
    """
    root = Path(root_path)
    names = {**FILES, **(filenames or {})}
    documents = _load_documents(root / names["documents"])
    queries = _load_queries(root / names["queries"])
    qrels = _load_qrels(root / names["qrels"], root / names["pools"])
    annotations: dict[str, SalienceAnnotation] = {}
    for lineno, rec in read_jsonl(root / names["annotations"], required_keys=("query_id", "spans")):
        qid = str(rec["query_id"])
        if qid not in queries:
            raise ValidationError("annotations reference unknown query ids", [qid])
        annotations[qid] = SalienceAnnotation.from_raw(qid, rec["spans"], len(queries[qid].text))
    bundle = DatasetBundle(documents=documents, queries=queries, qrels=qrels, annotations=annotations)
    bundle.validate()
    return bundle


def save_dataset(bundle: DatasetBundle, root_path: str | Path) -> None:
    """Persist a bundle so that load_dataset reproduces it field-by-field."""
    root = Path(root_path)
    root.mkdir(parents=True, exist_ok=True)
    write_jsonl_atomic(
        root / FILES["documents"],
        (
            {"doc_id": d.doc_id, "text": d.text, "charges": list(d.charges)}
            for d in bundle.documents.values()
        ),
    )
    write_jsonl_atomic(
        root / FILES["queries"],
        (
            {"query_id": q.query_id, "text": q.text, "charges": list(q.charges)}
            for q in bundle.queries.values()
        ),
    )
    write_jsonl_atomic(
        root / FILES["qrels"],
        (
            {"query_id": qid, "doc_id": did, "grade": grade}
            for qid in sorted(bundle.qrels.grades)
            for did, grade in sorted(bundle.qrels.grades[qid].items())
        ),
    )
    write_jsonl_atomic(
        root / FILES["pools"],
        ({"query_id": qid, "doc_ids": pool} for qid, pool in sorted(bundle.qrels.pools.items())),
    )
    write_jsonl_atomic(
        root / FILES["annotations"],
        (
            {"query_id": qid, "spans": [list(s) for s in ann.spans]}
            for qid, ann in sorted(bundle.annotations.items())
        ),
    )


@dataclass
class AnnotationStatsRow:
    avg_query_len: float
    avg_annotation_len: float
    avg_compression_rate: float
    n_queries: int


@dataclass
class AnnotationStats:
    """Per-query averages of query/annotation character lengths and compression.

    Compression rate = annotation chars / query chars, computed per query
    and then averaged. ``without_stopwords`` recomputes all three after
    removing stopwords from both texts; queries emptied by the removal are
    excluded there and listed in ``excluded``.
    """

    with_stopwords: AnnotationStatsRow
    without_stopwords: AnnotationStatsRow | None
    excluded: list[str]

    def to_dict(self) -> dict:
        out = {
            "with_stopwords": vars(self.with_stopwords),
            "excluded": self.excluded,
        }
        if self.without_stopwords is not None:
            out["without_stopwords"] = vars(self.without_stopwords)
        return out


def _stats_row(rows: list[tuple[float, float]]) -> AnnotationStatsRow:
    n = len(rows)
    qlens = [q for q, _ in rows]
    alens = [a for _, a in rows]
    rates = [a / q for q, a in rows]
    return AnnotationStatsRow(
        avg_query_len=sum(qlens) / n,
        avg_annotation_len=sum(alens) / n,
        avg_compression_rate=sum(rates) / n,
        n_queries=n,
    )


def annotation_stats(bundle: DatasetBundle, stopword_list: set[str] | None = None) -> AnnotationStats:
    """Summarize annotated queries; see AnnotationStats for the exact averages."""
    raw_rows: list[tuple[float, float]] = []
    stripped_rows: list[tuple[float, float]] = []
    excluded: list[str] = []
    stopwords = frozenset(stopword_list or ())
    for qid, ann in sorted(bundle.annotations.items()):
        query = bundle.queries[qid]
        raw_rows.append((len(query.text), ann.total_chars()))
        if stopword_list is None:
            continue
        stripped_q = strip_words(query.text, stopwords)
        if not stripped_q:
            excluded.append(qid)
            continue
        stripped_a = sum(len(strip_words(t, stopwords)) for t in ann.texts(query.text))
        stripped_rows.append((len(stripped_q), stripped_a))
    if not raw_rows:
        raise ValidationError("no annotated queries to summarize")
    return AnnotationStats(
        with_stopwords=_stats_row(raw_rows),
        without_stopwords=_stats_row(stripped_rows) if stripped_rows else None,
        excluded=excluded,
    )
