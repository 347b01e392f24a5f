"""Graded-relevance ranking metrics, k-fold protocol, and report tables."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import RelevanceJudgments
from .errors import ConfigError, ValidationError
from .rank import RankedRun

GAINS = ("exponential", "linear")


@dataclass(frozen=True)
class MetricConfig:
    """Cutoffs, the binary-relevance threshold, and the NDCG gain shape."""

    precision_cutoffs: tuple[int, ...] = (5, 10)
    ndcg_cutoffs: tuple[int, ...] = (10, 20, 30)
    relevance_threshold: int = 2
    gain: str = "exponential"

    def __post_init__(self):
        if any(k <= 0 for k in self.precision_cutoffs + self.ndcg_cutoffs):
            raise ConfigError("metric cutoffs must be positive")
        if self.relevance_threshold not in (1, 2, 3):
            raise ConfigError(f"relevance threshold must be 1-3, got {self.relevance_threshold}")
        if self.gain not in GAINS:
            raise ConfigError(f"unknown gain {self.gain!r}; expected one of {GAINS}")

    def metric_names(self) -> list[str]:
        return [f"P@{k}" for k in self.precision_cutoffs] + ["MAP"] + [
            f"NDCG@{k}" for k in self.ndcg_cutoffs
        ]


def _gain(grade: int, kind: str) -> float:
    return float(2**grade - 1) if kind == "exponential" else float(grade)


def precision_at_k(run: RankedRun, qrels: RelevanceJudgments, k: int, threshold: int = 2) -> float:
    """Fraction of the top k that is relevant; short runs keep denominator k."""
    hits = sum(
        1 for doc_id, _ in run.ranking[:k] if qrels.grade(run.query_id, doc_id) >= threshold
    )
    return hits / k


def average_precision(run: RankedRun, qrels: RelevanceJudgments, threshold: int = 2) -> float:
    """AP over the retrieved ranking, normalized by the pool's relevant count.

    Queries whose pool holds no relevant doc score 0 (callers flag them).
    """
    pool = qrels.pool(run.query_id)
    total_relevant = sum(1 for d in pool if qrels.grade(run.query_id, d) >= threshold)
    if total_relevant == 0:
        return 0.0
    hits = 0
    precision_sum = 0.0
    for rank, (doc_id, _) in enumerate(run.ranking, start=1):
        if qrels.grade(run.query_id, doc_id) >= threshold:
            hits += 1
            precision_sum += hits / rank
    return precision_sum / total_relevant


def mean_average_precision(
    runs: Mapping[str, RankedRun], qrels: RelevanceJudgments, threshold: int = 2
) -> float:
    if not runs:
        raise ValidationError("no runs to average")
    return sum(average_precision(run, qrels, threshold) for run in runs.values()) / len(runs)


def ndcg_at_k(run: RankedRun, qrels: RelevanceJudgments, k: int, gain: str = "exponential") -> float:
    """DCG over the top k divided by the ideal DCG of the pool's grade multiset."""
    dcg = 0.0
    for rank, (doc_id, _) in enumerate(run.ranking[:k], start=1):
        dcg += _gain(qrels.grade(run.query_id, doc_id), gain) / math.log2(rank + 1)
    ideal_grades = sorted(
        (qrels.grade(run.query_id, d) for d in qrels.pool(run.query_id)), reverse=True
    )
    idcg = 0.0
    for rank, grade in enumerate(ideal_grades[:k], start=1):
        idcg += _gain(grade, gain) / math.log2(rank + 1)
    return dcg / idcg if idcg > 0 else 0.0


@dataclass
class FoldPlan:
    n_folds: int
    seed: int
    folds: list[list[str]]

    def fold_of(self, query_id: str) -> int:
        for i, fold in enumerate(self.folds):
            if query_id in fold:
                return i
        raise ValidationError("query not in any fold", [query_id])


def kfold_splits(query_ids: Sequence[str], n_folds: int = 5, seed: int = 42) -> FoldPlan:
    """Seeded shuffle then round-robin assignment; sizes differ by at most 1."""
    ids = sorted(query_ids)
    if n_folds > len(ids):
        raise ConfigError(f"{n_folds} folds for only {len(ids)} queries")
    rng = random.Random(seed)
    rng.shuffle(ids)
    return FoldPlan(n_folds=n_folds, seed=seed, folds=[ids[i::n_folds] for i in range(n_folds)])


def _zero_run(query_id: str) -> RankedRun:
    return RankedRun(query_id=query_id, ranking=[], model="missing", params="")


def query_metrics(run: RankedRun, qrels: RelevanceJudgments, config: MetricConfig) -> dict[str, float]:
    out = {}
    for k in config.precision_cutoffs:
        out[f"P@{k}"] = precision_at_k(run, qrels, k, config.relevance_threshold)
    out["MAP"] = average_precision(run, qrels, config.relevance_threshold)
    for k in config.ndcg_cutoffs:
        out[f"NDCG@{k}"] = ndcg_at_k(run, qrels, k, config.gain)
    return out


@dataclass
class EvalReport:
    """Macro-averaged metrics per run (in percent), with optional fold protocol.

    increments hold differences against the named baseline run; flagged
    lists queries evaluated as all-zero because a run did not cover them.
    """

    metrics: list[str]
    rows: dict[str, dict[str, float]]
    baseline: str | None = None
    increments: dict[str, dict[str, float]] = field(default_factory=dict)
    flagged: dict[str, list[str]] = field(default_factory=dict)
    per_fold: dict[str, list[dict[str, float]]] = field(default_factory=dict)
    zero_relevant: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {"metrics": self.metrics, "rows": self.rows}
        if self.baseline is not None:
            out["baseline"] = self.baseline
            out["increments"] = self.increments
        if self.flagged:
            out["flagged"] = self.flagged
        if self.per_fold:
            out["per_fold"] = self.per_fold
        if self.zero_relevant:
            out["zero_relevant"] = self.zero_relevant
        return out


def evaluate_runs(
    runs_by_name: Mapping[str, Mapping[str, RankedRun]],
    qrels: RelevanceJudgments,
    config: MetricConfig = MetricConfig(),
    fold_plan: FoldPlan | None = None,
    baseline: str | None = None,
    query_ids: Sequence[str] | None = None,
) -> EvalReport:
    """Macro-average every metric per run, optionally fold-wise, as percentages.

    The evaluated query set defaults to the union of queries covered by the
    runs (or the fold plan when given). Queries missing from a run count as
    all-zero and are flagged.
    """
    if baseline is not None and baseline not in runs_by_name:
        raise ConfigError(f"baseline run {baseline!r} not among runs")
    if query_ids is not None:
        evaluated = sorted(query_ids)
    elif fold_plan is not None:
        evaluated = sorted(q for fold in fold_plan.folds for q in fold)
    else:
        evaluated = sorted({q for runs in runs_by_name.values() for q in runs})
    if not evaluated:
        raise ValidationError("no queries to evaluate")

    report = EvalReport(metrics=config.metric_names(), rows={}, baseline=baseline)
    report.zero_relevant = [
        qid
        for qid in evaluated
        if not any(
            qrels.grade(qid, d) >= config.relevance_threshold for d in qrels.pool(qid)
        )
    ]
    for name, runs in runs_by_name.items():
        per_query: dict[str, dict[str, float]] = {}
        for qid in evaluated:
            run = runs.get(qid)
            if run is None:
                report.flagged.setdefault(name, []).append(qid)
                run = _zero_run(qid)
            per_query[qid] = query_metrics(run, qrels, config)

        if fold_plan is not None:
            fold_means = []
            for fold in fold_plan.folds:
                members = [q for q in fold if q in per_query]
                if not members:
                    continue
                fold_means.append(
                    {
                        m: 100.0 * sum(per_query[q][m] for q in members) / len(members)
                        for m in report.metrics
                    }
                )
            report.per_fold[name] = fold_means
            row = {
                m: sum(fm[m] for fm in fold_means) / len(fold_means) for m in report.metrics
            }
        else:
            row = {
                m: 100.0 * sum(per_query[q][m] for q in evaluated) / len(evaluated)
                for m in report.metrics
            }
        report.rows[name] = row

    if baseline is not None:
        base_row = report.rows[baseline]
        for name, row in report.rows.items():
            if name != baseline:
                report.increments[name] = {m: row[m] - base_row[m] for m in report.metrics}
    return report


def format_report(report: EvalReport) -> str:
    """Aligned-text table, values in percent with increments in brackets."""
    headers = ["Run"] + [f"{m}(%)" for m in report.metrics]
    rows = []
    for name, row in report.rows.items():
        cells = [name]
        for metric in report.metrics:
            cell = f"{row[metric]:.2f}"
            if name in report.increments:
                cell += f"({report.increments[name][metric]:.2f})"
            cells.append(cell)
        rows.append(cells)
    widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.extend("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in rows)
    return "\n".join(lines)
