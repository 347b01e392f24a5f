from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

from attnexport.cli import main as cli_main
from attnexport.export import ExportJob, load_pairs, load_texts

# the consumer-side schema validator is the contract this exporter must satisfy
from caselab.salience import load_attention_exports


def run_export(files, out: Path, encoder: Path, *extra) -> int:
    return cli_main([
        "--encoder", str(encoder),
        "--queries", str(files["queries"]),
        "--documents", str(files["documents"]),
        "--pairs", str(files["pairs"]),
        "--out", str(out),
        *[str(a) for a in extra],
    ])


def test_schema_one_line_per_pair(tiny_encoder, pair_files, tmp_path, capsys):
    out = tmp_path / "attn.jsonl"
    assert run_export(pair_files, out, tiny_encoder) == 0
    lines = [json.loads(l) for l in out.read_text(encoding="utf-8").splitlines()]
    assert len(lines) == 3  # ghost pair skipped
    for rec in lines:
        assert len(rec["tokens"]) == len(rec["cls_weights"])
        assert all(math.isfinite(w) and w >= 0 for w in rec["cls_weights"])
    assert "ghost" in capsys.readouterr().err


def test_every_line_passes_consumer_validator(tiny_encoder, pair_files, tmp_path):
    out = tmp_path / "attn.jsonl"
    assert run_export(pair_files, out, tiny_encoder) == 0
    queries = load_texts(pair_files["queries"], "query_id")
    exports = load_attention_exports(out)
    assert exports, "validator loaded zero lines"
    for export in exports:
        export.validate(queries[export.query_id])  # offsets round-trip to surfaces


def test_offsets_slice_original_query(tiny_encoder, pair_files, tmp_path):
    out = tmp_path / "attn.jsonl"
    assert run_export(pair_files, out, tiny_encoder) == 0
    queries = load_texts(pair_files["queries"], "query_id")
    for line in out.read_text(encoding="utf-8").splitlines():
        rec = json.loads(line)
        text = queries[rec["query_id"]]
        for tok in rec["tokens"]:
            assert text[tok["char_start"] : tok["char_end"]] == tok["text"]


def test_grade_filter_keeps_only_matching(tiny_encoder, pair_files, tmp_path):
    out = tmp_path / "attn3.jsonl"
    assert run_export(pair_files, out, tiny_encoder, "--grade", 3) == 0
    lines = [json.loads(l) for l in out.read_text(encoding="utf-8").splitlines()]
    assert lines and all(rec["doc_grade"] == 3 for rec in lines)
    assert len(lines) == 2


def test_fixed_seed_exports_identical_across_runs(tiny_encoder, pair_files, tmp_path):
    out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert run_export(pair_files, out1, tiny_encoder) == 0
    assert run_export(pair_files, out2, tiny_encoder) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_rebuilt_encoder_same_seed_same_exports(pair_files, tmp_path):
    from conftest import build_tiny_encoder

    enc1 = build_tiny_encoder(tmp_path / "enc1", seed=7)
    enc2 = build_tiny_encoder(tmp_path / "enc2", seed=7)
    out1, out2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert run_export(pair_files, out1, enc1) == 0
    assert run_export(pair_files, out2, enc2) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_truncation_limits_query_tokens(tiny_encoder, pair_files, tmp_path):
    out = tmp_path / "short.jsonl"
    assert run_export(pair_files, out, tiny_encoder, "--query-len", 5) == 0
    queries = load_texts(pair_files["queries"], "query_id")
    for line in out.read_text(encoding="utf-8").splitlines():
        rec = json.loads(line)
        assert len(rec["tokens"]) <= 5
        # truncated region covers a strict prefix of the query characters
        last_end = max(t["char_end"] for t in rec["tokens"])
        assert last_end < len(queries[rec["query_id"]])


def test_batching_matches_single_pair_runs(tiny_encoder, pair_files, tmp_path):
    big, single = tmp_path / "big.jsonl", tmp_path / "single.jsonl"
    assert run_export(pair_files, big, tiny_encoder, "--batch-size", 8) == 0
    assert run_export(pair_files, single, tiny_encoder, "--batch-size", 1) == 0
    rows_big = [json.loads(l) for l in big.read_text(encoding="utf-8").splitlines()]
    rows_single = [json.loads(l) for l in single.read_text(encoding="utf-8").splitlines()]
    for a, b in zip(rows_big, rows_single):
        assert a["tokens"] == b["tokens"]
        assert a["cls_weights"] == pytest.approx(b["cls_weights"], abs=1e-6)


def test_encoder_load_failure_nonzero_exit(pair_files, tmp_path, capsys):
    code = run_export(pair_files, tmp_path / "x.jsonl", tmp_path / "not-a-model")
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_missing_input_file_io_exit(tiny_encoder, pair_files, tmp_path):
    code = cli_main([
        "--encoder", str(tiny_encoder),
        "--queries", str(pair_files["root"] / "nope.jsonl"),
        "--documents", str(pair_files["documents"]),
        "--pairs", str(pair_files["pairs"]),
        "--out", str(tmp_path / "x.jsonl"),
    ])
    assert code == 3


def test_job_validation():
    with pytest.raises(ValueError):
        ExportJob(encoder="x", pairs=[], output_path="o", query_max_tokens=0)
    with pytest.raises(ValueError):
        ExportJob(encoder="x", pairs=[], output_path="o", batch_size=0)


def test_load_pairs_shape(pair_files):
    pairs = load_pairs(pair_files["pairs"])
    assert pairs[0] == ("q1", "d1", 3)
    assert len(pairs) == 4
