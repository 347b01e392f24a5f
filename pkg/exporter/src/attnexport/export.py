"""Run a transformer cross-encoder over (query, doc) pairs and dump CLS attention.

Inputs are paired as [CLS] query [SEP] doc [SEP], each side truncated to its
token budget. For every query token the average last-layer attention from
the [CLS] position (over heads) is emitted raw, together with the token's
character offsets into the original, untruncated query text. Normalization
is deliberately left to the consumer.

Output schema, one JSON object per line:
  {"query_id", "doc_id", "doc_grade",
   "tokens": [{"text", "char_start", "char_end"}], "cls_weights": [float]}
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import torch
from transformers import AutoModel, AutoTokenizer


@dataclass
class ExportJob:
    """What to export: encoder checkpoint, pair list, truncation budgets."""

    encoder: str
    pairs: list[tuple[str, str, int]]
    output_path: str | Path
    query_max_tokens: int = 256
    doc_max_tokens: int = 256
    grade_filter: int | None = None
    batch_size: int = 8
    device: str = "cpu"

    def __post_init__(self):
        if self.query_max_tokens <= 0 or self.doc_max_tokens <= 0:
            raise ValueError("truncation lengths must be positive")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")


@dataclass
class ExportStats:
    written: int = 0
    skipped: list[str] = field(default_factory=list)
    filtered: int = 0


def load_texts(path: str | Path, id_key: str) -> dict[str, str]:
    """Read {"<id_key>", "text"} JSONL into an id -> text map."""
    texts: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            texts[str(rec[id_key])] = rec["text"]
    return texts


def load_pairs(path: str | Path) -> list[tuple[str, str, int]]:
    """Read qrels-shaped JSONL {"query_id", "doc_id", "grade"} into pair tuples."""
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            pairs.append((str(rec["query_id"]), str(rec["doc_id"]), int(rec["grade"])))
    return pairs


def _load_encoder(name: str, device: str):
    tokenizer = AutoTokenizer.from_pretrained(name)
    if not tokenizer.is_fast:
        raise ValueError(f"encoder {name!r} has no fast tokenizer; offsets need one")
    model = AutoModel.from_pretrained(name, attn_implementation="eager")
    model.to(device)
    model.eval()
    return tokenizer, model


def _encode_pair(tokenizer, query_text, doc_text, q_max, d_max):
    q = tokenizer(
        query_text,
        truncation=True,
        max_length=q_max,
        add_special_tokens=False,
        return_offsets_mapping=True,
    )
    d = tokenizer(doc_text, truncation=True, max_length=d_max, add_special_tokens=False)
    input_ids = (
        [tokenizer.cls_token_id]
        + q["input_ids"]
        + [tokenizer.sep_token_id]
        + d["input_ids"]
        + [tokenizer.sep_token_id]
    )
    token_type_ids = [0] * (len(q["input_ids"]) + 2) + [1] * (len(d["input_ids"]) + 1)
    return input_ids, token_type_ids, q["offset_mapping"]


def _cls_weights(model, batch, device):
    pad_id = 0
    max_len = max(len(ids) for ids, _, _ in batch)
    input_ids, token_type_ids, attention_mask = [], [], []
    for ids, types, _ in batch:
        pad = max_len - len(ids)
        input_ids.append(ids + [pad_id] * pad)
        token_type_ids.append(types + [0] * pad)
        attention_mask.append([1] * len(ids) + [0] * pad)
    with torch.no_grad():
        out = model(
            input_ids=torch.tensor(input_ids, device=device),
            token_type_ids=torch.tensor(token_type_ids, device=device),
            attention_mask=torch.tensor(attention_mask, device=device),
            output_attentions=True,
        )
    # last layer, attention from the [CLS] position, averaged over heads
    return out.attentions[-1][:, :, 0, :].mean(dim=1)


def export_attention(
    job: ExportJob, queries: dict[str, str], documents: dict[str, str]
) -> ExportStats:
    """Emit one JSONL line per usable pair; see module docstring for the schema.

    Pairs referencing missing texts are skipped with a warning; a grade
    filter drops non-matching pairs silently (they are counted).
    """
    tokenizer, model = _load_encoder(job.encoder, job.device)
    stats = ExportStats()
    usable: list[tuple[str, str, int]] = []
    for query_id, doc_id, grade in job.pairs:
        if job.grade_filter is not None and grade != job.grade_filter:
            stats.filtered += 1
            continue
        if query_id not in queries or doc_id not in documents:
            stats.skipped.append(f"{query_id}/{doc_id}")
            print(f"warning: missing text for pair {query_id}/{doc_id}; skipped", file=sys.stderr)
            continue
        usable.append((query_id, doc_id, grade))

    out_path = Path(job.output_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as out:
        for start in range(0, len(usable), job.batch_size):
            chunk = usable[start : start + job.batch_size]
            encoded = [
                _encode_pair(
                    tokenizer,
                    queries[qid],
                    documents[did],
                    job.query_max_tokens,
                    job.doc_max_tokens,
                )
                for qid, did, _ in chunk
            ]
            weights = _cls_weights(model, encoded, job.device)
            for (qid, did, grade), (ids, _, offsets), row in zip(chunk, encoded, weights):
                query_text = queries[qid]
                tokens, cls_weights = [], []
                # query tokens sit at positions 1 .. len(offsets) (after [CLS])
                for pos, (lo, hi) in enumerate(offsets, start=1):
                    if hi <= lo:
                        continue  # zero-width artifacts carry no query characters
                    tokens.append(
                        {"text": query_text[lo:hi], "char_start": lo, "char_end": hi}
                    )
                    cls_weights.append(float(row[pos]))
                record = {
                    "query_id": qid,
                    "doc_id": did,
                    "doc_grade": grade,
                    "tokens": tokens,
                    "cls_weights": cls_weights,
                }
                out.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
                stats.written += 1
    return stats
