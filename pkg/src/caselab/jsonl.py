"""JSONL reading/writing helpers and content fingerprints."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import IngestionError


def read_jsonl(path: str | Path, required_keys: Iterable[str] = ()) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, record) for every non-blank line of a JSONL file.

    Raises IngestionError naming the file when it is missing, and carrying
    the line number when a record is malformed or misses a required key.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError("file not found", path=str(path))
    required = tuple(required_keys)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestionError(f"invalid JSON ({exc.msg})", path=str(path), line=lineno) from exc
            if not isinstance(record, dict):
                raise IngestionError("record is not an object", path=str(path), line=lineno)
            for key in required:
                if key not in record:
                    raise IngestionError(f"missing key {key!r}", path=str(path), line=lineno)
            yield lineno, record


def write_text_atomic(path: str | Path, text: str) -> None:
    """Write text via a temp file + rename so readers never see partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl_atomic(path: str | Path, records: Iterable[dict]) -> None:
    lines = [json.dumps(r, ensure_ascii=False, sort_keys=True) for r in records]
    write_text_atomic(path, "".join(line + "\n" for line in lines))


def fingerprint(obj: Any) -> str:
    """Stable sha256 hex digest of a JSON-serializable object."""
    payload = json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def fingerprint_paths(paths: Iterable[str | Path]) -> str:
    """sha256 over the contents of the given files, order-independent."""
    digests = []
    for p in sorted(str(p) for p in paths):
        h = hashlib.sha256()
        with open(p, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 16), b""):
                h.update(chunk)
        digests.append(h.hexdigest())
    return hashlib.sha256("".join(digests).encode("ascii")).hexdigest()
