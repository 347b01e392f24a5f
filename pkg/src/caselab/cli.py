"""Single entry point exposing the pipeline as subcommands.

Exit codes: 0 success, 2 usage/config error, 3 IO error, 4 upstream LLM
failure. Every artifact-producing command writes a sidecar manifest
(<out>.manifest.json) recording the command line, config and dataset
fingerprints, tool version, and timestamp.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import sys
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .corpus import (
    FILES,
    GRADES,
    RelevanceJudgments,
    SalienceAnnotation,
    _load_documents,
    _load_queries,
    annotation_stats,
    load_dataset,
)
from .errors import (
    CaselabError,
    ConfigError,
    IndexFormatError,
    IngestionError,
    LlmError,
    ValidationError,
)
from .evaluation import MetricConfig, evaluate_runs, format_report, kfold_splits
from .index import attach_query_stats, build_index, load_index, save_index
from .jsonl import fingerprint, fingerprint_paths, read_jsonl, write_text_atomic
from .overlap import format_overlap_table, summarize_reformulations
from .rank import Bm25Params, QlParams, RankedRun, load_runs, retrieve, save_runs
from .reformulate import (
    DEFAULT_TEMPLATES,
    LlmConfig,
    ReformulationType,
    ResponseCache,
    annotation_to_query,
    load_reformulations,
    load_templates,
    reformulate_many,
    save_reformulations,
)
from .salience import (
    aggregate_attention,
    bm25_word_importance,
    covered_words,
    interval_precision_recall,
    joint_rank_distribution,
    load_attention_exports,
    restrict_ranking,
    tf_idf_by_interval,
)
from .tokenization import TokenizerConfig, load_wordlist, mark_salient_words, tokenize

DEFAULT_SEED = 42


@dataclass
class RunManifest:
    command_line: list[str]
    config_fingerprint: str
    dataset_fingerprint: str
    tool_version: str
    timestamp: str
    outputs: list[str]

    def write(self, primary_output: str | Path) -> None:
        path = Path(str(primary_output) + ".manifest.json")
        write_text_atomic(path, json.dumps(vars(self), ensure_ascii=False, indent=2, sort_keys=True))


def _manifest(args: argparse.Namespace, inputs: list[str | Path], outputs: list[str | Path]) -> RunManifest:
    existing = [p for p in inputs if p and Path(p).is_file()]
    resolved = {k: str(v) for k, v in vars(args).items() if k != "func"}
    return RunManifest(
        command_line=sys.argv,
        config_fingerprint=fingerprint(resolved),
        dataset_fingerprint=fingerprint_paths(existing) if existing else "",
        tool_version=__version__,
        timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(),
        outputs=[str(o) for o in outputs],
    )


def _load_toml(path: str | Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise IngestionError("config file not found", path=str(path)) from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad TOML in {path}: {exc}") from exc


def _apply_config_file(args: argparse.Namespace, command: str) -> None:
    """Fill unset (None) args from the TOML config: [command] section wins
    over top-level keys; explicit flags always win over the file."""
    if not getattr(args, "config", None):
        return
    data = _load_toml(args.config)
    merged = {k: v for k, v in data.items() if not isinstance(v, dict)}
    merged.update(data.get(command, {}))
    for key, value in merged.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and getattr(args, attr) is None:
            setattr(args, attr, value)


def _tokenizer_config(args: argparse.Namespace) -> TokenizerConfig:
    lexicon = tuple(load_wordlist(args.lexicon)) if getattr(args, "lexicon", None) else ()
    stopwords = frozenset(load_wordlist(args.stopwords)) if getattr(args, "stopwords", None) else frozenset()
    return TokenizerConfig(name=args.tokenizer or "whitespace", lexicon=lexicon, stopwords=stopwords)


def _documents_path(corpus: str) -> Path:
    path = Path(corpus)
    if path.is_dir():
        return path / FILES["documents"]
    return path


def _queries_path(queries: str) -> Path:
    path = Path(queries)
    if path.is_dir():
        return path / FILES["queries"]
    return path


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [n for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise ConfigError(f"missing required option(s): {flags}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_index(args: argparse.Namespace) -> int:
    _require(args, "corpus", "out")
    config = _tokenizer_config(args)
    docs_path = _documents_path(args.corpus)
    docs = _load_documents(docs_path)
    queries = None
    inputs = [docs_path, args.lexicon, args.stopwords]
    if args.queries:
        qpath = _queries_path(args.queries)
        queries = list(_load_queries(qpath).values())
        inputs.append(qpath)
    index = build_index(
        docs.values(),
        config,
        queries=queries,
        count_stopwords_in_doc_len=bool(args.count_stopwords_in_doc_len),
    )
    save_index(index, args.out)
    _manifest(args, inputs, [args.out]).write(args.out)
    stats = index.stats
    print(
        f"indexed {stats.n_docs} docs, vocab {index.vocab_size}, "
        f"avg doc len {stats.avg_doc_len:.2f}"
        + (f", avg query len {stats.avg_query_len:.2f}" if stats.avg_query_len else "")
    )
    return 0


def _parse_kv_params(model: str, text: str | None):
    if not text:
        return None
    values: dict[str, str] = {}
    for part in text.split(","):
        if not part.strip():
            continue
        if "=" not in part:
            raise ConfigError(f"bad --params entry {part!r}; expected key=value")
        key, _, value = part.partition("=")
        values[key.strip()] = value.strip()
    try:
        if model == "bm25":
            return Bm25Params(
                k=float(values.pop("k", 1.4)), b=float(values.pop("b", 0.6))
            ) if not values else _unknown_param(values)
        if model == "ql":
            params = QlParams(
                smoothing=values.pop("smoothing", "jelinek-mercer"),
                lam=float(values.pop("lambda", 0.1)),
                mu=float(values.pop("mu", 2000.0)),
            )
            return params if not values else _unknown_param(values)
    except ValueError as exc:
        raise ConfigError(f"bad --params value: {exc}") from exc
    if values:
        _unknown_param(values)
    return None


def _unknown_param(values: dict):
    raise ConfigError(f"unknown --params keys: {sorted(values)}")


def cmd_retrieve(args: argparse.Namespace) -> int:
    _require(args, "index", "queries", "out")
    model = args.model or "bm25"
    pool_mode = args.pool or "pools"
    if pool_mode not in ("pools", "corpus"):
        raise ConfigError(f"--pool must be 'pools' or 'corpus', got {pool_mode!r}")
    k = 0 if args.k is None else int(args.k)
    index = load_index(args.index)
    qpath = _queries_path(args.queries)
    queries = _load_queries(qpath)
    params = _parse_kv_params(model, args.params)
    inputs = [args.index, qpath]
    pools: dict[str, list[str]] | None = None
    if pool_mode == "pools":
        _require(args, "pools")
        pools = {}
        for _, rec in read_jsonl(args.pools, required_keys=("query_id", "doc_ids")):
            pools[str(rec["query_id"])] = [str(d) for d in rec["doc_ids"]]
        missing = sorted(q for q in queries if q not in pools)
        if missing:
            raise ValidationError("queries without a candidate pool", missing)
        inputs.append(args.pools)
    runs = []
    for qid in sorted(queries):
        pool = pools[qid] if pools is not None else None
        runs.append(retrieve(queries[qid], index, model=model, params=params, pool=pool, k=k))
    save_runs(runs, args.out)
    _manifest(args, inputs, [args.out]).write(args.out)
    print(f"wrote {sum(len(r.ranking) for r in runs)} scored pairs for {len(runs)} queries to {args.out}")
    return 0


def cmd_reformulate(args: argparse.Namespace) -> int:
    _require(args, "queries", "type", "out")
    rtype = ReformulationType.parse(args.type)
    qpath = _queries_path(args.queries)
    queries = _load_queries(qpath)
    inputs: list = [qpath]
    if rtype is ReformulationType.ANNOTATION:
        if not args.annotations:
            raise ConfigError("annotation type requires --annotations")
        bundle_annotations = {}
        for _, rec in read_jsonl(args.annotations, required_keys=("query_id", "spans")):
            qid = str(rec["query_id"])
            if qid not in queries:
                raise ValidationError("annotations reference unknown query ids", [qid])
            bundle_annotations[qid] = SalienceAnnotation.from_raw(
                qid, rec["spans"], len(queries[qid].text)
            )
        inputs.append(args.annotations)
        results = [
            annotation_to_query(queries[qid], ann) for qid, ann in sorted(bundle_annotations.items())
        ]
    else:
        if not args.llm:
            raise ConfigError(f"{rtype.value} type requires --llm config")
        if not args.cache:
            raise ConfigError(f"{rtype.value} type requires --cache directory")
        llm_data = _load_toml(args.llm)
        llm = LlmConfig.from_dict(llm_data.get("llm", llm_data))
        templates = load_templates(args.templates) if args.templates else DEFAULT_TEMPLATES
        results = reformulate_many(
            list(queries.values()), rtype, llm, ResponseCache(args.cache), templates=templates
        )
        inputs.append(args.llm)
        if args.templates:
            inputs.append(args.templates)
    save_reformulations(results, args.out)
    _manifest(args, inputs, [args.out]).write(args.out)
    flagged = sum(1 for r in results if r.flagged)
    print(f"wrote {len(results)} {rtype.value} reformulations to {args.out}" + (f" ({flagged} flagged)" if flagged else ""))
    return 0


def _metric_config(args: argparse.Namespace) -> MetricConfig:
    threshold = 2 if args.threshold is None else int(args.threshold)
    gain = args.gain or "exponential"
    if not args.metrics:
        return MetricConfig(relevance_threshold=threshold, gain=gain)
    p_cuts, n_cuts = [], []
    for name in str(args.metrics).split(","):
        name = name.strip()
        if not name:
            continue
        upper = name.upper()
        if upper.startswith("P@"):
            p_cuts.append(int(upper[2:]))
        elif upper.startswith("NDCG@"):
            n_cuts.append(int(upper[5:]))
        elif upper == "MAP":
            pass  # always included
        else:
            raise ConfigError(f"unknown metric {name!r}; expected P@k, NDCG@k, MAP")
    return MetricConfig(
        precision_cutoffs=tuple(p_cuts) or (5, 10),
        ndcg_cutoffs=tuple(n_cuts) or (10, 20, 30),
        relevance_threshold=threshold,
        gain=gain,
    )


def _qrels_from_files(qrels_path: str, pools_path: str | None) -> RelevanceJudgments:
    qrels = RelevanceJudgments()
    for lineno, rec in read_jsonl(qrels_path, required_keys=("query_id", "doc_id", "grade")):
        grade = rec["grade"]
        if not isinstance(grade, int) or grade not in GRADES:
            raise ValidationError(
                f"grade {grade!r} outside 0-3", [f"{rec['query_id']}/{rec['doc_id']}"]
            )
        qrels.grades.setdefault(str(rec["query_id"]), {})[str(rec["doc_id"])] = grade
    if pools_path:
        for _, rec in read_jsonl(pools_path, required_keys=("query_id", "doc_ids")):
            qrels.pools[str(rec["query_id"])] = [str(d) for d in rec["doc_ids"]]
    else:
        # Unjudged pool docs carry grade 0 and change no metric, so judged
        # docs alone reproduce every pool-dependent quantity.
        qrels.pools = {qid: sorted(docs) for qid, docs in qrels.grades.items()}
    return qrels


def cmd_evaluate(args: argparse.Namespace) -> int:
    _require(args, "run", "qrels")
    qrels = _qrels_from_files(args.qrels, args.pools)
    runs_by_name: dict[str, dict[str, RankedRun]] = {}
    names_in_order = []
    for run_path in args.run:
        name = Path(run_path).stem
        if name in runs_by_name:
            raise ConfigError(f"duplicate run name {name!r}; rename the files")
        runs_by_name[name] = load_runs(run_path)
        names_in_order.append(name)
    baseline_name = None
    if args.baseline:
        baseline_name = Path(args.baseline).stem
        if baseline_name not in runs_by_name:
            runs_by_name[baseline_name] = load_runs(args.baseline)
    config = _metric_config(args)
    fold_plan = None
    if args.folds:
        seed = DEFAULT_SEED if args.seed is None else int(args.seed)
        evaluated = sorted({q for runs in runs_by_name.values() for q in runs})
        fold_plan = kfold_splits(evaluated, n_folds=int(args.folds), seed=seed)
    report = evaluate_runs(
        runs_by_name, qrels, config=config, fold_plan=fold_plan, baseline=baseline_name
    )
    table = format_report(report)
    print(table)
    if args.out:
        write_text_atomic(args.out, json.dumps(report.to_dict(), ensure_ascii=False, indent=2, sort_keys=True))
        inputs = [*args.run, args.qrels] + ([args.baseline] if args.baseline else [])
        _manifest(args, inputs, [args.out]).write(args.out)
    return 0


def _interval_csv(path: Path, report_dict: dict) -> None:
    keys = [k for k in ("precision", "recall", "precision_binned", "avg_tf", "avg_idf") if k in report_dict]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["interval_pct"] + keys)
        for i, pct in enumerate(report_dict["boundaries_pct"]):
            writer.writerow([pct] + [report_dict[k][i] for k in keys])


def cmd_salience(args: argparse.Namespace) -> int:
    _require(args, "queries", "annotations", "index", "out")
    index = load_index(args.index)
    qpath = _queries_path(args.queries)
    queries = _load_queries(qpath)
    attach_query_stats(index, queries.values())
    annotations = {}
    for _, rec in read_jsonl(args.annotations, required_keys=("query_id", "spans")):
        qid = str(rec["query_id"])
        if qid not in queries:
            raise ValidationError("annotations reference unknown query ids", [qid])
        annotations[qid] = SalienceAnnotation.from_raw(qid, rec["spans"], len(queries[qid].text))

    exports_by_query: dict[str, list] = {}
    if args.attention:
        for export in load_attention_exports(args.attention):
            export.validate(queries[export.query_id].text if export.query_id in queries else None)
            exports_by_query.setdefault(export.query_id, []).append(export)

    n_intervals = 10 if args.intervals is None else int(args.intervals)
    bm25_imp, attn_imp, salient = {}, {}, {}
    joint_a, joint_b = {}, {}
    skipped = []
    for qid in sorted(annotations):
        tok = tokenize(queries[qid].text, index.tokenizer_config, source_ref=qid)
        flags = mark_salient_words(tok, annotations[qid].spans)
        salient[qid] = {
            t.surface
            for t, flag, masked in zip(tok.tokens, flags, tok.stopword_mask)
            if flag and not masked
        }
        bm25_imp[qid] = bm25_word_importance(tok, index.stats)
        exports = [e for e in exports_by_query.get(qid, []) if e.doc_grade == 3]
        if args.attention and not exports:
            skipped.append(qid)
            print(f"warning: no grade-3 attention export for query {qid}; skipped", file=sys.stderr)
            continue
        if exports:
            attn_imp[qid] = aggregate_attention(exports, tok)
            covered = set()
            for export in exports:
                covered |= covered_words(tok, export)
            joint_a[qid] = restrict_ranking(bm25_imp[qid], covered)
            joint_b[qid] = restrict_ranking(attn_imp[qid], covered)

    result = {
        "n_intervals": n_intervals,
        "corpus_size": index.stats.n_docs,
        "n_queries": len(bm25_imp),
        "skipped_no_attention": skipped,
        "metadata": {
            "word_scoring": "types (query-frequency aware); attention averages occurrences",
            "pr_mode": "cumulative headline, binned precision also emitted",
            "attention_aggregation": "mean over grade-3 exports",
        },
        "bm25": {
            "interval_pr": interval_precision_recall(bm25_imp, salient, n_intervals).to_dict(),
            "tf_idf": tf_idf_by_interval(bm25_imp, salient, index.stats, n_intervals).to_dict(),
        },
    }
    if attn_imp:
        result["attention"] = {
            "interval_pr": interval_precision_recall(attn_imp, salient, n_intervals).to_dict(),
            "tf_idf": tf_idf_by_interval(attn_imp, salient, index.stats, n_intervals).to_dict(),
        }
        result["joint_matrix_pct"] = joint_rank_distribution(joint_a, joint_b, salient, n_intervals)
    write_text_atomic(args.out, json.dumps(result, ensure_ascii=False, indent=2, sort_keys=True))
    if args.csv_dir:
        csv_dir = Path(args.csv_dir)
        csv_dir.mkdir(parents=True, exist_ok=True)
        _interval_csv(csv_dir / "bm25_interval_pr.csv", result["bm25"]["interval_pr"])
        _interval_csv(csv_dir / "bm25_tf_idf.csv", result["bm25"]["tf_idf"])
        if attn_imp:
            _interval_csv(csv_dir / "attention_interval_pr.csv", result["attention"]["interval_pr"])
            _interval_csv(csv_dir / "attention_tf_idf.csv", result["attention"]["tf_idf"])
            with open(csv_dir / "joint_matrix.csv", "w", newline="", encoding="utf-8") as fh:
                csv.writer(fh).writerows(result["joint_matrix_pct"])
    inputs = [qpath, args.annotations, args.index] + ([args.attention] if args.attention else [])
    _manifest(args, inputs, [args.out]).write(args.out)
    print(f"salience report for {len(bm25_imp)} queries written to {args.out}")
    return 0


def cmd_overlap(args: argparse.Namespace) -> int:
    _require(args, "queries", "reformulated", "annotations", "out")
    qpath = _queries_path(args.queries)
    queries = _load_queries(qpath)
    reformulations = load_reformulations(args.reformulated)
    annotations = {}
    for _, rec in read_jsonl(args.annotations, required_keys=("query_id", "spans")):
        qid = str(rec["query_id"])
        if qid not in queries:
            raise ValidationError("annotations reference unknown query ids", [qid])
        annotations[qid] = SalienceAnnotation.from_raw(qid, rec["spans"], len(queries[qid].text))
    summary = summarize_reformulations(
        queries,
        reformulations,
        annotations,
        variant=args.variant or "as-written",
        intersection=args.intersection or "multiset",
    )
    print(format_overlap_table(summary))
    write_text_atomic(args.out, json.dumps(summary.to_dict(), ensure_ascii=False, indent=2, sort_keys=True))
    _manifest(args, [qpath, args.reformulated, args.annotations], [args.out]).write(args.out)
    return 0


def cmd_dataset_stats(args: argparse.Namespace) -> int:
    _require(args, "root")
    bundle = load_dataset(args.root)
    stopwords = set(load_wordlist(args.stopwords)) if args.stopwords else None
    stats = annotation_stats(bundle, stopword_list=stopwords)
    print(json.dumps(stats.to_dict(), ensure_ascii=False, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="caselab",
        description="Legal-case retrieval lab: indexing, sparse ranking, salience analysis, "
        "LLM query content selection, graded-relevance evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"caselab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build and persist an inverted index")
    p.add_argument("--corpus", help="dataset root or documents JSONL file")
    p.add_argument("--out", help="index output path")
    p.add_argument("--tokenizer", choices=["whitespace", "dictionary"], default=None)
    p.add_argument("--lexicon", help="lexicon file (one word per line) for the dictionary tokenizer")
    p.add_argument("--stopwords", help="stopword file, one word per line")
    p.add_argument("--queries", help="queries JSONL; fills avg query length for salience analyses")
    p.add_argument("--count-stopwords-in-doc-len", action="store_true", dest="count_stopwords_in_doc_len")
    p.add_argument("--config", help="TOML config file")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("retrieve", help="rank candidate pools or the corpus")
    p.add_argument("--index")
    p.add_argument("--queries")
    p.add_argument("--model", choices=["tfidf", "bm25", "ql"], default=None)
    p.add_argument("--params", help='key=value list, e.g. "k=1.4,b=0.6" or "smoothing=dirichlet,mu=2000"')
    p.add_argument("--pool", choices=["pools", "corpus"], default=None)
    p.add_argument("--pools", help="pools JSONL (required with --pool pools)")
    p.add_argument("--k", type=int, default=None, help="cutoff; 0 or unset ranks the full pool")
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("reformulate", help="produce reformulated queries")
    p.add_argument("--queries")
    p.add_argument("--type", choices=[t.value for t in ReformulationType])
    p.add_argument("--llm", help="TOML config with endpoint/model (LLM types)")
    p.add_argument("--cache", help="response cache directory (LLM types)")
    p.add_argument("--templates", help="TOML prompt-template overrides (LLM types)")
    p.add_argument("--annotations", help="annotations JSONL (annotation type)")
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(func=cmd_reformulate)

    p = sub.add_parser("evaluate", help="compute metric tables over run files")
    p.add_argument("--run", action="append", default=None, help="run file (repeatable)")
    p.add_argument("--qrels")
    p.add_argument("--pools", help="optional pools JSONL; defaults to judged docs per query")
    p.add_argument("--baseline", help="baseline run file for increment brackets")
    p.add_argument("--metrics", help="comma list, e.g. P@5,P@10,MAP,NDCG@10")
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help=f"fold-shuffle seed (default {DEFAULT_SEED})")
    p.add_argument("--threshold", type=int, default=None, help="binary relevance grade threshold (default 2)")
    p.add_argument("--gain", choices=["exponential", "linear"], default=None)
    p.add_argument("--out", help="optional JSON report path")
    p.add_argument("--config")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("salience", help="word-importance vs human-annotation analyses")
    p.add_argument("--queries")
    p.add_argument("--annotations")
    p.add_argument("--index")
    p.add_argument("--attention", help="attention export JSONL (optional; omit for BM25-only report)")
    p.add_argument("--intervals", type=int, default=None, help="rank-percentile buckets (default 10)")
    p.add_argument("--out")
    p.add_argument("--csv-dir", dest="csv_dir", help="also emit CSV tables for plotting")
    p.add_argument("--config")
    p.set_defaults(func=cmd_salience)

    p = sub.add_parser("overlap", help="reformulated-query overlap / info-ratio statistics")
    p.add_argument("--queries")
    p.add_argument("--reformulated")
    p.add_argument("--annotations")
    p.add_argument("--variant", choices=["as-written", "density"], default=None)
    p.add_argument("--intersection", choices=["multiset", "set"], default=None)
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("dataset-stats", help="annotation statistics of a dataset bundle")
    p.add_argument("--root", help="dataset bundle directory")
    p.add_argument("--stopwords")
    p.add_argument("--config")
    p.set_defaults(func=cmd_dataset_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args, args.command)
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IngestionError, IndexFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except LlmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except CaselabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
