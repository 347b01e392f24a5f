from __future__ import annotations

import json
import math

import pytest

from caselab.corpus import CaseDocument, QueryCase
from caselab.errors import ConfigError, IndexFormatError, ValidationError
from caselab.index import attach_query_stats, build_index, load_index, save_index
from caselab.tokenization import TokenizerConfig

import oracles

WS = TokenizerConfig(name="whitespace")


def docs(**texts: str) -> list[CaseDocument]:
    return [CaseDocument(doc_id=k, text=v) for k, v in texts.items()]


def test_single_doc_postings():
    index = build_index(docs(d1="a b a"), WS)
    assert index.postings == {"a": [("d1", 2)], "b": [("d1", 1)]}
    assert index.doc_len == {"d1": 3}
    assert index.stats.avg_doc_len == 3.0


def test_shared_word_document_frequency():
    index = build_index(docs(d1="w x", d2="w y"), WS)
    assert index.stats.df["w"] == 2
    assert index.stats.df["x"] == 1


def test_duplicate_doc_id_rejected():
    with pytest.raises(ValidationError):
        build_index([CaseDocument("d", "a"), CaseDocument("d", "b")], WS)


def test_idf_robertson_examples():
    index = build_index(docs(d1="a b", d2="b c"), WS)
    assert index.stats.idf("b", "robertson") == pytest.approx(math.log(1.2), abs=1e-12)
    assert index.stats.idf("a", "robertson") == pytest.approx(math.log(2), abs=1e-12)


def test_idf_smooth_log_zero_when_everywhere():
    index = build_index(docs(d1="a", d2="a"), WS)
    assert index.stats.idf("a", "smooth-log") == 0.0


def test_idf_unseen_word():
    index = build_index(docs(d1="a", d2="b"), WS)
    assert index.stats.idf("zzz", "robertson") == pytest.approx(math.log(2.5 / 0.5 + 1))
    assert index.stats.idf("zzz", "smooth-log") == pytest.approx(math.log(2))


def test_idf_unknown_variant():
    index = build_index(docs(d1="a"), WS)
    with pytest.raises(ConfigError):
        index.stats.idf("a", "bm66")


def test_idf_monotone_decreasing_in_df():
    n = 10
    for variant in ("robertson", "smooth-log"):
        values = []
        for df in range(1, n + 1):
            stats_idf = (
                math.log((n - df + 0.5) / (df + 0.5) + 1)
                if variant == "robertson"
                else math.log(n / df)
            )
            values.append(stats_idf)
        assert values == sorted(values, reverse=True)


def test_doc_len_equals_posting_sum_without_stopwords():
    index = build_index(docs(d1="a b a c", d2="c c"), WS)
    for doc_id, length in index.doc_len.items():
        total = sum(tf for p in index.postings.values() for d, tf in p if d == doc_id)
        assert total == length


def test_df_matches_bruteforce():
    corpus = {"d1": "a b b", "d2": "b c", "d3": "a a d"}
    index = build_index(docs(**corpus), WS)
    for word, df in index.stats.df.items():
        brute = sum(1 for text in corpus.values() if word in text.split())
        assert df == brute


def test_stopwords_excluded_from_postings():
    cfg = TokenizerConfig(name="whitespace", stopwords=frozenset({"the"}))
    index = build_index(docs(d1="the cat the mat"), cfg)
    assert "the" not in index.postings
    assert index.doc_len["d1"] == 2  # stopwords excluded from length by default
    counted = build_index(docs(d1="the cat the mat"), cfg, count_stopwords_in_doc_len=True)
    assert counted.doc_len["d1"] == 4


def test_forward_index_consistent():
    index = build_index(docs(d1="a b a", d2="b"), WS)
    assert index.doc_tf["d1"] == {"a": 2, "b": 1}
    assert index.cf == {"a": 2, "b": 2}
    assert index.collection_len == 4


def test_attach_query_stats():
    index = build_index(docs(d1="a"), WS)
    attach_query_stats(index, [QueryCase("q1", "a b"), QueryCase("q2", "a b c d")])
    assert index.stats.avg_query_len == 3.0


def test_save_load_round_trip(tmp_path):
    cfg = TokenizerConfig(name="dictionary", lexicon=("盗窃",), stopwords=frozenset({"的"}))
    index = build_index(
        [CaseDocument("d1", "他的盗窃罪"), CaseDocument("d2", "盗窃盗窃")], cfg,
        queries=[QueryCase("q1", "盗窃的他")],
    )
    path = tmp_path / "index.json"
    save_index(index, path)
    loaded = load_index(path)
    assert loaded.postings == index.postings
    assert loaded.doc_len == index.doc_len
    assert loaded.stats == index.stats
    assert loaded.tokenizer_config == index.tokenizer_config
    assert loaded.cf == index.cf


def test_load_rejects_wrong_version(tmp_path):
    index = build_index(docs(d1="a"), WS)
    path = tmp_path / "index.json"
    save_index(index, path)
    payload = json.loads(path.read_text(encoding="utf-8"))
    payload["version"] = 99
    path.write_text(json.dumps(payload), encoding="utf-8")
    with pytest.raises(IndexFormatError):
        load_index(path)


def test_load_rejects_truncated_file(tmp_path):
    index = build_index(docs(d1="a"), WS)
    path = tmp_path / "index.json"
    save_index(index, path)
    raw = path.read_text(encoding="utf-8")
    path.write_text(raw[: len(raw) // 2], encoding="utf-8")
    with pytest.raises(IndexFormatError):
        load_index(path)


def test_load_rejects_mismatched_tokenizer(tmp_path):
    index = build_index(docs(d1="a"), WS)
    path = tmp_path / "index.json"
    save_index(index, path)
    other = TokenizerConfig(name="dictionary", lexicon=("a",))
    with pytest.raises(IndexFormatError):
        load_index(path, expected_config=other)
    assert load_index(path, expected_config=WS).doc_len == index.doc_len


def test_save_is_deterministic(tmp_path):
    index = build_index(docs(d1="a b", d2="c"), WS)
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    save_index(index, p1)
    save_index(index, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_robertson_idf_matches_oracle():
    index = build_index(docs(d1="a b", d2="b c", d3="c"), WS)
    for word in ("a", "b", "c"):
        assert index.stats.idf(word, "robertson") == oracles.idf_robertson(
            3, index.stats.df[word]
        )
