"""Inverted index and corpus statistics behind all lexical scoring."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .corpus import CaseDocument, QueryCase
from .errors import ConfigError, IndexFormatError, ValidationError
from .jsonl import fingerprint, write_text_atomic
from .tokenization import TokenizedText, TokenizerConfig, tokenize

INDEX_FORMAT = "caselab-index"
INDEX_VERSION = 1

IDF_VARIANTS = ("robertson", "smooth-log")


@dataclass
class CorpusStats:
    """Document-frequency table plus the average lengths scoring needs.

    avg_query_len (tokens per query, all tokens counted) feeds the query-side
    word-importance formula; it is None until a query set has been attached.
    """

    n_docs: int
    df: dict[str, int]
    avg_doc_len: float
    avg_query_len: float | None = None

    def idf(self, word: str, variant: str = "robertson") -> float:
        """Inverse document frequency under the named variant.

        robertson: ln((N - df + 0.5) / (df + 0.5) + 1), df 0 for unseen words.
        smooth-log: ln(N / df), df clamped to >= 1 (unseen words included).
        """
        if variant == "robertson":
            df = self.df.get(word, 0)
            return math.log((self.n_docs - df + 0.5) / (df + 0.5) + 1.0)
        if variant == "smooth-log":
            df = max(self.df.get(word, 1), 1)
            return math.log(self.n_docs / df)
        raise ConfigError(f"unknown idf variant {variant!r}; expected one of {IDF_VARIANTS}")


@dataclass
class InvertedIndex:
    """Postings, document lengths, and corpus statistics for one tokenizer config.

    cf holds collection term frequencies (for query-likelihood smoothing);
    doc_tf is a derived forward index rebuilt on load, not persisted.
    """

    postings: dict[str, list[tuple[str, int]]]
    doc_len: dict[str, int]
    stats: CorpusStats
    tokenizer_config: TokenizerConfig
    cf: dict[str, int] = field(default_factory=dict)
    doc_tf: dict[str, dict[str, int]] = field(default_factory=dict)

    @property
    def collection_len(self) -> int:
        return sum(self.cf.values())

    @property
    def vocab_size(self) -> int:
        return len(self.postings)

    def tokenize_query(self, query: QueryCase) -> TokenizedText:
        return tokenize(query.text, self.tokenizer_config, source_ref=query.query_id)

    def config_fingerprint(self) -> str:
        return fingerprint(self.tokenizer_config.to_dict())


def _rebuild_forward(index: InvertedIndex) -> None:
    index.doc_tf = {doc_id: {} for doc_id in index.doc_len}
    index.cf = {}
    for word, posting in index.postings.items():
        total = 0
        for doc_id, tf in posting:
            index.doc_tf[doc_id][word] = tf
            total += tf
        index.cf[word] = total


def build_index(
    docs: Iterable[CaseDocument],
    config: TokenizerConfig,
    queries: Iterable[QueryCase] | None = None,
    count_stopwords_in_doc_len: bool = False,
) -> InvertedIndex:
    """Build postings over non-stopword tokens of every document.

    Stopword-masked tokens never enter postings; they count toward doc_len
    only when count_stopwords_in_doc_len is set. Passing the query set fills
    stats.avg_query_len.
    """
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_len: dict[str, int] = {}
    seen: set[str] = set()
    for doc in docs:
        if doc.doc_id in seen:
            raise ValidationError("duplicate doc_id", [doc.doc_id])
        seen.add(doc.doc_id)
        tok = tokenize(doc.text, config, source_ref=doc.doc_id)
        counts: dict[str, int] = {}
        kept = 0
        for token, masked in zip(tok.tokens, tok.stopword_mask):
            if masked:
                continue
            counts[token.surface] = counts.get(token.surface, 0) + 1
            kept += 1
        doc_len[doc.doc_id] = len(tok.tokens) if count_stopwords_in_doc_len else kept
        for word, tf in counts.items():
            postings.setdefault(word, []).append((doc.doc_id, tf))
    for posting in postings.values():
        posting.sort()
    n_docs = len(doc_len)
    stats = CorpusStats(
        n_docs=n_docs,
        df={w: len(p) for w, p in postings.items()},
        avg_doc_len=(sum(doc_len.values()) / n_docs) if n_docs else 0.0,
    )
    index = InvertedIndex(postings=postings, doc_len=doc_len, stats=stats, tokenizer_config=config)
    _rebuild_forward(index)
    if queries is not None:
        attach_query_stats(index, queries)
    return index


def attach_query_stats(index: InvertedIndex, queries: Iterable[QueryCase]) -> None:
    """Record the average query length (in tokens) on the index stats."""
    lengths = [len(tokenize(q.text, index.tokenizer_config).tokens) for q in queries]
    if not lengths:
        raise ValidationError("cannot average over an empty query set")
    index.stats.avg_query_len = sum(lengths) / len(lengths)


def save_index(index: InvertedIndex, path: str | Path) -> None:
    payload = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "tokenizer": index.tokenizer_config.to_dict(),
        "tokenizer_fingerprint": index.config_fingerprint(),
        "stats": {
            "n_docs": index.stats.n_docs,
            "avg_doc_len": index.stats.avg_doc_len,
            "avg_query_len": index.stats.avg_query_len,
        },
        "doc_len": index.doc_len,
        "postings": {w: [[d, tf] for d, tf in p] for w, p in index.postings.items()},
    }
    write_text_atomic(path, json.dumps(payload, ensure_ascii=False, sort_keys=True))


def load_index(path: str | Path, expected_config: TokenizerConfig | None = None) -> InvertedIndex:
    """Load an index file; version tag and (optionally) tokenizer config are checked."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise IndexFormatError(f"index file not found: {path}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise IndexFormatError(f"corrupt index file {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != INDEX_FORMAT:
        raise IndexFormatError(f"{path} is not a {INDEX_FORMAT} file")
    if payload.get("version") != INDEX_VERSION:
        raise IndexFormatError(
            f"index version {payload.get('version')!r} unsupported (expected {INDEX_VERSION})"
        )
    try:
        config = TokenizerConfig.from_dict(payload["tokenizer"])
        postings = {w: [(d, int(tf)) for d, tf in p] for w, p in payload["postings"].items()}
        doc_len = {d: int(n) for d, n in payload["doc_len"].items()}
        raw_stats = payload["stats"]
        stats = CorpusStats(
            n_docs=int(raw_stats["n_docs"]),
            df={w: len(p) for w, p in postings.items()},
            avg_doc_len=float(raw_stats["avg_doc_len"]),
            avg_query_len=(
                None if raw_stats.get("avg_query_len") is None else float(raw_stats["avg_query_len"])
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise IndexFormatError(f"corrupt index file {path}: {exc!r}") from exc
    if expected_config is not None and fingerprint(expected_config.to_dict()) != payload.get(
        "tokenizer_fingerprint"
    ):
        raise IndexFormatError("index was built with a different tokenizer config")
    index = InvertedIndex(postings=postings, doc_len=doc_len, stats=stats, tokenizer_config=config)
    _rebuild_forward(index)
    return index
