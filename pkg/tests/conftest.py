from __future__ import annotations

import json
from pathlib import Path

import pytest

from caselab.corpus import FILES


def write_jsonl(path: Path, records) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return path


def write_bundle(root: Path, documents=(), queries=(), qrels=(), pools=(), annotations=()) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    write_jsonl(root / FILES["documents"], documents)
    write_jsonl(root / FILES["queries"], queries)
    write_jsonl(root / FILES["qrels"], qrels)
    write_jsonl(root / FILES["pools"], pools)
    write_jsonl(root / FILES["annotations"], annotations)
    return root


@pytest.fixture
def bundle_dir(tmp_path: Path) -> Path:
    """A small self-consistent dataset bundle on disk."""
    documents = [
        {"doc_id": "d1", "text": "盗窃罪 现金 财物 判处", "charges": ["盗窃罪"]},
        {"doc_id": "d2", "text": "抢夺罪 财物 逃逸", "charges": ["抢夺罪"]},
        {"doc_id": "d3", "text": "故意伤害 轻伤 赔偿", "charges": ["故意伤害罪"]},
    ]
    queries = [
        {"query_id": "q1", "text": "被告人 盗窃 现金。逃离 现场。", "charges": ["盗窃罪"]},
        {"query_id": "q2", "text": "发生 口角 故意伤害 他人。", "charges": ["故意伤害罪"]},
    ]
    qrels = [
        {"query_id": "q1", "doc_id": "d1", "grade": 3},
        {"query_id": "q1", "doc_id": "d2", "grade": 1},
        {"query_id": "q2", "doc_id": "d3", "grade": 2},
    ]
    pools = [
        {"query_id": "q1", "doc_ids": ["d1", "d2", "d3"]},
        {"query_id": "q2", "doc_ids": ["d1", "d3"]},
    ]
    annotations = [
        {"query_id": "q1", "spans": [[4, 9]]},
        {"query_id": "q2", "spans": [[6, 10]]},
    ]
    return write_bundle(tmp_path / "bundle", documents, queries, qrels, pools, annotations)
