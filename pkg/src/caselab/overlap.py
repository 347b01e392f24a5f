"""Reformulated-query statistics: unit matching, annotation overlap, info ratio.

Overlap is a recall-style measure of how much annotated salient content a
reformulated query preserves; the info ratio compares how condensed that
content is relative to the original query. Units are matched to original
sentences by character-level edit distance.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .corpus import QueryCase, SalienceAnnotation
from .distance import nearest_unit
from .errors import ConfigError, ValidationError
from .reformulate import ReformulatedQuery, ReformulationType
from .tokenization import SentenceSpan, split_sentences

INTERSECTIONS = ("multiset", "set")
INFOR_VARIANTS = ("as-written", "density")


@dataclass
class UnitizedText:
    """A text split into the linguistic units the overlap math operates on."""

    source_id: str
    text: str
    units: list[str]
    kind: str  # "word" or "sentence"
    spans: list[SentenceSpan] | None = None


def unitize_original(query: QueryCase) -> UnitizedText:
    spans = split_sentences(query.text)
    return UnitizedText(
        source_id=query.query_id,
        text=query.text,
        units=[s.slice(query.text) for s in spans],
        kind="sentence",
        spans=spans,
    )


def unitize_reformulated(reformulated: ReformulatedQuery) -> UnitizedText:
    """Keyword queries keep their comma units; every other type re-splits the
    assembled text into sentences."""
    if reformulated.type is ReformulationType.KEYWORD:
        return UnitizedText(
            source_id=reformulated.query_id,
            text=reformulated.assembled_text,
            units=list(reformulated.units),
            kind="word",
        )
    text = reformulated.assembled_text
    return UnitizedText(
        source_id=reformulated.query_id,
        text=text,
        units=[s.slice(text) for s in split_sentences(text)],
        kind="sentence",
    )


@dataclass
class AnnotationUnits:
    """Annotation spans clipped to each original sentence.

    by_sentence maps a sentence index to the annotation unit strings lying
    inside that sentence.
    """

    query_id: str
    by_sentence: dict[int, list[str]] = field(default_factory=dict)

    def units_in(self, sentence_index: int) -> list[str]:
        return self.by_sentence.get(sentence_index, [])

    def total_units(self) -> int:
        return sum(len(u) for u in self.by_sentence.values())

    def total_chars(self) -> int:
        return sum(len(a) for units in self.by_sentence.values() for a in units)


def annotation_units(
    query: QueryCase, ann: SalienceAnnotation, sentences: Sequence[SentenceSpan] | None = None
) -> AnnotationUnits:
    """Clip annotation spans to sentence boundaries, one unit list per sentence."""
    if sentences is None:
        sentences = split_sentences(query.text)
    result = AnnotationUnits(query_id=query.query_id)
    for sent in sentences:
        for start, end in ann.spans:
            lo, hi = max(start, sent.char_start), min(end, sent.char_end)
            if lo < hi:
                result.by_sentence.setdefault(sent.index, []).append(query.text[lo:hi])
    return result


def match_unit(unit: str, original_units: Sequence[str]) -> int:
    """Index of the original unit with minimum edit distance (ties: smallest index)."""
    if not original_units:
        raise ValidationError("no original units to match against")
    return nearest_unit(unit, original_units)


def _char_intersection(a: str, b: str, intersection: str) -> int:
    if intersection == "multiset":
        return sum((Counter(a) & Counter(b)).values())
    if intersection == "set":
        return len(set(a) & set(b))
    raise ConfigError(f"unknown intersection {intersection!r}; expected one of {INTERSECTIONS}")


def overlap_unit(unit: str, ann_units: Sequence[str], intersection: str = "multiset") -> float:
    """Sum over the sentence's annotation units of |unit ∩ a| / |a|."""
    total = 0.0
    for a in ann_units:
        if a:
            total += _char_intersection(unit, a, intersection) / len(a)
    return total


def overlap_query(
    reformulated: UnitizedText,
    original: UnitizedText,
    ann: AnnotationUnits,
    normalize: bool = True,
    intersection: str = "multiset",
) -> float:
    """Total overlap of the reformulated units with the matched sentences' annotation.

    The normalized form divides by the total annotation-unit count, giving
    the percentage-style statistic; the raw sum can exceed that bound when
    units double-cover the same annotation.
    """
    total_units = ann.total_units()
    if total_units == 0:
        raise ValidationError("no annotation units; overlap undefined", [original.source_id])
    if not original.units:
        raise ValidationError("original has no units", [original.source_id])
    raw = 0.0
    for unit in reformulated.units:
        j = match_unit(unit, original.units)
        raw += overlap_unit(unit, ann.units_in(j), intersection)
    return raw / total_units if normalize else raw


@dataclass(frozen=True)
class InfoRatio:
    """Both info-ratio readings; ``variant`` names the headline one.

    as_written uses the annotation length as denominator; density uses the
    reformulated length (1.0 when the reformulation is the original query).
    """

    as_written: float
    density: float
    variant: str = "as-written"

    @property
    def headline(self) -> float:
        return self.as_written if self.variant == "as-written" else self.density


def info_ratio(
    original: UnitizedText,
    reformulated: UnitizedText,
    ann: AnnotationUnits,
    variant: str = "as-written",
    intersection: str = "multiset",
) -> InfoRatio:
    """Normalized overlap scaled by character-length ratios (see InfoRatio)."""
    if variant not in INFOR_VARIANTS:
        raise ConfigError(f"unknown info-ratio variant {variant!r}; expected one of {INFOR_VARIANTS}")
    ann_len = ann.total_chars()
    if ann_len == 0:
        raise ValidationError("zero-length annotation", [original.source_id])
    if len(reformulated.text) == 0:
        raise ValidationError("zero-length reformulated query", [original.source_id])
    overlap = overlap_query(reformulated, original, ann, normalize=True, intersection=intersection)
    q_len = len(original.text)
    return InfoRatio(
        as_written=overlap * q_len / ann_len,
        density=overlap * q_len / len(reformulated.text),
        variant=variant,
    )


@dataclass
class OverlapSummary:
    """Per-type averages of overlap, length, and info ratio across queries."""

    variant: str
    intersection: str
    rows: dict[str, dict[str, float]] = field(default_factory=dict)
    flagged: dict[str, list[str]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "intersection": self.intersection,
            "rows": self.rows,
            "flagged": self.flagged,
        }


def summarize_reformulations(
    queries: Mapping[str, QueryCase],
    reformulations: Iterable[ReformulatedQuery],
    annotations: Mapping[str, SalienceAnnotation],
    variant: str = "as-written",
    intersection: str = "multiset",
) -> OverlapSummary:
    """Per reformulation type: average overlap (%), length (chars), info ratio.

    Averages are per query first, then across queries. Queries lacking a
    usable reformulation or annotation are excluded and flagged.
    """
    reformulations = list(reformulations)
    unknown = sorted({r.query_id for r in reformulations if r.query_id not in queries})
    if unknown:
        raise ValidationError("reformulations reference unknown query ids", unknown)
    summary = OverlapSummary(variant=variant, intersection=intersection)
    by_type: dict[str, list[tuple[float, float, float]]] = {}
    seen: dict[str, set[str]] = {}
    for r in sorted(reformulations, key=lambda r: (r.type.value, r.query_id)):
        label = r.type.value
        seen.setdefault(label, set()).add(r.query_id)
        if r.flagged or not r.units:
            summary.flagged.setdefault(label, []).append(r.query_id)
            continue
        query = queries[r.query_id]
        ann = annotations.get(r.query_id)
        original = unitize_original(query)
        a_units = annotation_units(query, ann, original.spans) if ann is not None else None
        if a_units is None or a_units.total_units() == 0:
            summary.flagged.setdefault(label, []).append(r.query_id)
            continue
        unitized = unitize_reformulated(r)
        overlap = overlap_query(unitized, original, a_units, normalize=True, intersection=intersection)
        ratio = info_ratio(original, unitized, a_units, variant=variant, intersection=intersection)
        by_type.setdefault(label, []).append(
            (overlap, float(len(unitized.text)), ratio.headline)
        )
    annotated = {q for q in annotations if q in queries}
    for label, covered in seen.items():
        missing = sorted(annotated - covered)
        if missing:
            summary.flagged.setdefault(label, []).extend(missing)
    for label, rows in sorted(by_type.items()):
        n = len(rows)
        summary.rows[label] = {
            "avg_overlap_pct": 100.0 * sum(r[0] for r in rows) / n,
            "avg_length": sum(r[1] for r in rows) / n,
            "avg_info_ratio": sum(r[2] for r in rows) / n,
            "n_queries": n,
        }
    return summary


def format_overlap_table(summary: OverlapSummary) -> str:
    headers = ["Query type", "Avg. overlap(%)", "Avg. length", "Avg. InfoR"]
    rows = [
        [
            label,
            f"{row['avg_overlap_pct']:.2f}",
            f"{row['avg_length']:.2f}",
            f"{row['avg_info_ratio']:.2f}",
        ]
        for label, row in summary.rows.items()
    ]
    widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.extend("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows)
    return "\n".join(lines)
