"""Command-line entry point mirroring the ExportJob fields."""

from __future__ import annotations

import argparse
import sys

from .export import ExportJob, export_attention, load_pairs, load_texts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attnexport",
        description="Export per-query-token CLS attention of a cross-encoder to JSONL.",
    )
    parser.add_argument("--encoder", required=True, help="model name or checkpoint directory")
    parser.add_argument("--queries", required=True, help='JSONL with {"query_id", "text"}')
    parser.add_argument("--documents", required=True, help='JSONL with {"doc_id", "text"}')
    parser.add_argument("--pairs", required=True, help='JSONL with {"query_id", "doc_id", "grade"}')
    parser.add_argument("--out", required=True, help="output JSONL path")
    parser.add_argument("--grade", type=int, default=None, help="keep only pairs of this grade")
    parser.add_argument("--query-len", type=int, default=256, help="query token budget")
    parser.add_argument("--doc-len", type=int, default=256, help="document token budget")
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--device", default="cpu")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        queries = load_texts(args.queries, "query_id")
        documents = load_texts(args.documents, "doc_id")
        pairs = load_pairs(args.pairs)
    except (OSError, KeyError, ValueError) as exc:
        print(f"error reading inputs: {exc}", file=sys.stderr)
        return 3
    job = ExportJob(
        encoder=args.encoder,
        pairs=pairs,
        output_path=args.out,
        query_max_tokens=args.query_len,
        doc_max_tokens=args.doc_len,
        grade_filter=args.grade,
        batch_size=args.batch_size,
        device=args.device,
    )
    try:
        stats = export_attention(job, queries, documents)
    except Exception as exc:  # encoder load/inference failure must exit nonzero
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"wrote {stats.written} exports to {args.out}"
        + (f" ({len(stats.skipped)} pairs skipped)" if stats.skipped else "")
        + (f" ({stats.filtered} filtered by grade)" if stats.filtered else "")
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
