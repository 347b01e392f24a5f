from __future__ import annotations

import json
from pathlib import Path

import pytest
import torch
from tokenizers import Tokenizer
from tokenizers.models import WordPiece
from tokenizers.normalizers import BertNormalizer
from tokenizers.pre_tokenizers import BertPreTokenizer
from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

CHARS = sorted(set("被告人盗窃现金随后逃离现场案发自首甲乙丙丁某地财物手机abcdef"))


def build_tiny_encoder(path: Path, seed: int = 0) -> Path:
    """Randomly initialized char-level BERT, deterministic for a seed."""
    vocab = {w: i for i, w in enumerate(["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + CHARS)}
    backend = Tokenizer(WordPiece(vocab=vocab, unk_token="[UNK]"))
    backend.normalizer = BertNormalizer(handle_chinese_chars=True, lowercase=True)
    backend.pre_tokenizer = BertPreTokenizer()
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=backend,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
    )
    torch.manual_seed(seed)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=37,
        max_position_embeddings=128,
    )
    model = BertModel(config)
    path.mkdir(parents=True, exist_ok=True)
    model.save_pretrained(path)
    tokenizer.save_pretrained(path)
    return path


@pytest.fixture(scope="session")
def tiny_encoder(tmp_path_factory) -> Path:
    return build_tiny_encoder(tmp_path_factory.mktemp("encoder") / "tiny", seed=0)


def write_jsonl(path: Path, records) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return path


@pytest.fixture
def pair_files(tmp_path) -> dict[str, Path]:
    queries = write_jsonl(
        tmp_path / "queries.jsonl",
        [
            {"query_id": "q1", "text": "被告人盗窃现金。随后逃离现场。案发后自首。"},
            {"query_id": "q2", "text": "甲某抢走乙某手机financial。"},
        ],
    )
    documents = write_jsonl(
        tmp_path / "documents.jsonl",
        [
            {"doc_id": "d1", "text": "盗窃财物现金若干"},
            {"doc_id": "d2", "text": "手机一部被抢"},
        ],
    )
    pairs = write_jsonl(
        tmp_path / "pairs.jsonl",
        [
            {"query_id": "q1", "doc_id": "d1", "grade": 3},
            {"query_id": "q1", "doc_id": "d2", "grade": 2},
            {"query_id": "q2", "doc_id": "d2", "grade": 3},
            {"query_id": "ghost", "doc_id": "d1", "grade": 3},
        ],
    )
    return {"queries": queries, "documents": documents, "pairs": pairs, "root": tmp_path}
