from __future__ import annotations

import random

import pytest

from caselab.corpus import QueryCase, SalienceAnnotation
from caselab.errors import ValidationError
from caselab.overlap import (
    annotation_units,
    format_overlap_table,
    info_ratio,
    match_unit,
    overlap_query,
    overlap_unit,
    summarize_reformulations,
    unitize_original,
    unitize_reformulated,
)
from caselab.reformulate import ReformulatedQuery, ReformulationType

import oracles

# Three-sentence fixture: each sentence holds one annotated phrase.
Q3 = QueryCase("q", "甲盗窃现金若干。乙抢夺手机一部。丙故意伤害他人。")
ANN3 = SalienceAnnotation("q", ((1, 5), (9, 13), (17, 21)))  # 盗窃现金 / 抢夺手机 / 故意伤害


def reform(query_id, rtype, units, assembled=None) -> ReformulatedQuery:
    if assembled is None:
        joiner = {"keyword": ",", "key_sentence": "\n"}.get(rtype.value, "。")
        assembled = joiner.join(units)
    return ReformulatedQuery(
        query_id=query_id,
        type=rtype,
        raw_response="",
        units=list(units),
        assembled_text=assembled,
        provenance={},
    )


def test_unitize_original_sentences():
    unitized = unitize_original(Q3)
    assert unitized.units == ["甲盗窃现金若干", "乙抢夺手机一部", "丙故意伤害他人"]
    assert unitized.text == Q3.text


def test_unitize_reformulated_by_type():
    kw = unitize_reformulated(reform("q", ReformulationType.KEYWORD, ["盗窃", "现金"]))
    assert kw.units == ["盗窃", "现金"] and kw.kind == "word"
    summary = reform("q", ReformulationType.SUMMARY, ["一句。二句。三句。"], assembled="一句。二句。三句。")
    unitized = unitize_reformulated(summary)
    assert unitized.units == ["一句", "二句", "三句"] and unitized.kind == "sentence"


def test_annotation_units_clipped_per_sentence():
    units = annotation_units(Q3, ANN3)
    assert units.by_sentence == {0: ["盗窃现金"], 1: ["抢夺手机"], 2: ["故意伤害"]}
    assert units.total_units() == 3
    assert units.total_chars() == 12


def test_annotation_units_span_crossing_sentences():
    query = QueryCase("q", "abcd;efgh")
    ann = SalienceAnnotation("q", ((2, 7),))  # crosses the terminator
    units = annotation_units(query, ann)
    assert units.by_sentence == {0: ["cd"], 1: ["ef"]}


def test_match_unit_exact_and_near():
    sentences = ["甲盗窃现金若干", "乙抢夺手机一部", "丙故意伤害他人"]
    assert match_unit("乙抢夺手机一部", sentences) == 1
    assert match_unit("甲盗窃现金若千", sentences) == 0  # one edit away


def test_match_unit_bruteforce_agreement():
    rng = random.Random(31)
    alphabet = "甲乙丙丁盗抢伤现金手机人"
    for _ in range(40):
        sentences = [
            "".join(rng.choices(alphabet, k=rng.randint(3, 8))) for _ in range(5)
        ]
        unit = "".join(rng.choices(alphabet, k=rng.randint(2, 8)))
        dists = [oracles.levenshtein(unit, s) for s in sentences]
        assert match_unit(unit, sentences) == dists.index(min(dists))


def test_overlap_unit_verbatim():
    assert overlap_unit("前缀盗窃现金后缀", ["盗窃现金"]) == pytest.approx(1.0)


def test_overlap_unit_disjoint_chars():
    assert overlap_unit("wxyz", ["ab", "cd"]) == 0.0


def test_overlap_unit_worked_example():
    # u = "XBCD": a1 = "BC" -> 2/2; a2 = "DE" -> 1/2; total 1.5
    assert overlap_unit("XBCD", ["BC", "DE"]) == pytest.approx(1.5, abs=1e-9)


def test_overlap_unit_multiset_counts_repeats():
    assert overlap_unit("aa", ["aa"]) == pytest.approx(1.0)
    assert overlap_unit("a", ["aa"]) == pytest.approx(0.5)
    assert overlap_unit("a", ["aa"], intersection="set") == pytest.approx(0.5)
    assert overlap_unit("aab", ["ab"], intersection="set") == pytest.approx(1.0)


def test_overlap_unit_monotone_under_extension():
    rng = random.Random(12)
    alphabet = "abc现金"
    for _ in range(30):
        u = "".join(rng.choices(alphabet, k=rng.randint(0, 5)))
        ann = ["".join(rng.choices(alphabet, k=rng.randint(1, 4))) for _ in range(2)]
        extended = u + rng.choice(alphabet)
        assert overlap_unit(extended, ann) >= overlap_unit(u, ann)


def test_overlap_query_full_recall():
    original = unitize_original(Q3)
    ann = annotation_units(Q3, ANN3)
    exact = reform("q", ReformulationType.KEYWORD, ["盗窃现金", "抢夺手机", "故意伤害"])
    assert overlap_query(unitize_reformulated(exact), original, ann) == pytest.approx(1.0, abs=1e-9)


def test_overlap_query_half_recall():
    query = QueryCase("q", "甲盗窃现金若干。乙抢夺手机一部。")
    ann = SalienceAnnotation("q", ((1, 5), (9, 13)))
    original = unitize_original(query)
    a_units = annotation_units(query, ann)
    one = reform("q", ReformulationType.KEYWORD, ["盗窃现金"])
    assert overlap_query(unitize_reformulated(one), original, a_units) == pytest.approx(0.5)


def test_overlap_query_duplicates_can_exceed_normalized_bound():
    query = QueryCase("q", "甲盗窃现金若干。乙抢夺手机一部。")
    ann = SalienceAnnotation("q", ((1, 5), (9, 13)))
    original = unitize_original(query)
    a_units = annotation_units(query, ann)
    dup = reform("q", ReformulationType.KEYWORD, ["盗窃现金"] * 4)
    raw = overlap_query(unitize_reformulated(dup), original, a_units, normalize=False)
    assert raw == pytest.approx(4.0)
    assert overlap_query(unitize_reformulated(dup), original, a_units) == pytest.approx(2.0)


def test_overlap_query_zero_annotation_units_errors():
    query = QueryCase("q", "abcd;efgh")
    original = unitize_original(query)
    from caselab.overlap import AnnotationUnits

    with pytest.raises(ValidationError):
        overlap_query(original, original, AnnotationUnits(query_id="q"))


def test_info_ratio_as_written_formula():
    # overlap 1, |Q| = 100, |A| = 20 -> 5.0
    text = "x" * 100
    query = QueryCase("q", text)
    ann = SalienceAnnotation("q", ((10, 30),))
    original = unitize_original(query)
    a_units = annotation_units(query, ann)
    u = reform("q", ReformulationType.SUMMARY, [text[10:30]], assembled=text[10:30])
    ratio = info_ratio(original, unitize_reformulated(u), a_units)
    assert ratio.as_written == pytest.approx(5.0, abs=1e-9)
    assert ratio.headline == ratio.as_written


def test_info_ratio_density_identity():
    original = unitize_original(Q3)
    a_units = annotation_units(Q3, ANN3)
    ratio = info_ratio(original, original, a_units, variant="density")
    assert ratio.density == 1.0  # exact
    assert ratio.headline == 1.0


def test_info_ratio_zero_lengths_error():
    original = unitize_original(Q3)
    a_units = annotation_units(Q3, ANN3)
    empty = unitize_original(QueryCase("q", "x"))
    empty.text = ""
    empty.units = []
    with pytest.raises(ValidationError):
        info_ratio(original, empty, a_units)
    from caselab.overlap import AnnotationUnits

    with pytest.raises(ValidationError):
        info_ratio(original, original, AnnotationUnits(query_id="q"))


def test_summarize_single_query_row_equals_values():
    queries = {"q": Q3}
    annotations = {"q": ANN3}
    exact = reform("q", ReformulationType.KEYWORD, ["盗窃现金", "抢夺手机", "故意伤害"])
    summary = summarize_reformulations(queries, [exact], annotations)
    row = summary.rows["keyword"]
    assert row["avg_overlap_pct"] == pytest.approx(100.0, abs=1e-9)
    assert row["avg_length"] == len(exact.assembled_text)
    assert row["n_queries"] == 1


def test_summarize_averages_per_query_then_across():
    # hand spreadsheet: q1 overlap 1, len 4, InfoR 9/2; q2 overlap 0.5, len 2, InfoR 0.5*9/4
    q1 = QueryCase("q1", "abcd;efgh")
    q2 = QueryCase("q2", "mnop;qrst")
    queries = {"q1": q1, "q2": q2}
    annotations = {
        "q1": SalienceAnnotation("q1", ((0, 2),)),
        "q2": SalienceAnnotation("q2", ((5, 9),)),
    }
    reforms = [
        reform("q1", ReformulationType.SUMMARY, ["abXY"], assembled="abXY"),
        reform("q2", ReformulationType.SUMMARY, ["qr"], assembled="qr"),
    ]
    summary = summarize_reformulations(queries, reforms, annotations)
    row = summary.rows["summary"]
    assert row["avg_overlap_pct"] == pytest.approx((100.0 + 50.0) / 2, abs=1e-9)
    assert row["avg_length"] == pytest.approx(3.0)
    assert row["avg_info_ratio"] == pytest.approx((1.0 * 9 / 2 + 0.5 * 9 / 4) / 2, abs=1e-9)


def test_summarize_mean_of_two_inforatios():
    # density InfoR 1.0 (U = Q) and 2.0 (half-length U with full overlap)
    q1 = QueryCase("q1", "甲盗窃现金若干。乙抢夺手机一部。")
    ann1 = SalienceAnnotation("q1", ((1, 5),))
    u_half = Q3.text[:8]  # "甲盗窃现金若干。" -> unit is the first sentence
    reforms = [
        reform("q1", ReformulationType.SUMMARY, [q1.text], assembled=q1.text),
        reform(
            "q2",
            ReformulationType.SUMMARY,
            ["甲盗窃现金若干"],
            assembled="甲盗窃现金若干。",
        ),
    ]
    q2 = QueryCase("q2", "甲盗窃现金若干。乙抢夺手机一部。")
    ann2 = SalienceAnnotation("q2", ((1, 5),))
    summary = summarize_reformulations(
        {"q1": q1, "q2": q2}, reforms, {"q1": ann1, "q2": ann2}, variant="density"
    )
    # q1: overlap 1, |U| = |Q| = 16 -> 1.0; q2: overlap 1, |U| = 8 -> 16/8 = 2.0
    assert summary.rows["summary"]["avg_info_ratio"] == pytest.approx(1.5, abs=1e-9)


def test_summarize_flags_missing_and_unknown():
    queries = {"q1": Q3}
    annotations = {"q1": ANN3}
    with pytest.raises(ValidationError):
        summarize_reformulations(
            queries, [reform("ghost", ReformulationType.KEYWORD, ["x"])], annotations
        )
    flagged_reform = reform("q1", ReformulationType.KEYWORD, [])
    flagged_reform.flagged = True
    summary = summarize_reformulations(queries, [flagged_reform], annotations)
    assert summary.flagged["keyword"] == ["q1"]
    assert "keyword" not in summary.rows


def test_summarize_flags_queries_without_reformulation():
    q2 = QueryCase("q2", "乙抢夺手机一部。")
    queries = {"q": Q3, "q2": q2}
    annotations = {"q": ANN3, "q2": SalienceAnnotation("q2", ((1, 5),))}
    exact = reform("q", ReformulationType.KEYWORD, ["盗窃现金"])
    summary = summarize_reformulations(queries, [exact], annotations)
    assert summary.flagged["keyword"] == ["q2"]


def test_format_overlap_table_columns():
    queries = {"q": Q3}
    annotations = {"q": ANN3}
    exact = reform("q", ReformulationType.KEYWORD, ["盗窃现金"])
    table = format_overlap_table(summarize_reformulations(queries, [exact], annotations))
    header = table.splitlines()[0]
    assert "Query type" in header and "Avg. overlap" in header and "Avg. InfoR" in header
    assert "keyword" in table
