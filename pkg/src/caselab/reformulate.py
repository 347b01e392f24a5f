"""Query content selection: LLM prompts, response parsing, realignment, assembly.

Three LLM reformulation types (keyword / key_sentence / summary) plus the
annotation type built directly from human salience spans. All LLM traffic
goes through a file cache keyed by (query, type, model, prompt), so a
warmed cache replays the whole pipeline offline and deterministically.
"""

from __future__ import annotations

import datetime as _dt
import enum
import hashlib
import json
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import requests

from .corpus import QueryCase, SalienceAnnotation
from .distance import nearest_unit
from .errors import ConfigError, LlmError, ValidationError
from .jsonl import read_jsonl, write_jsonl_atomic, write_text_atomic
from .tokenization import SentenceSpan, spans_intersect, split_sentences


class ReformulationType(enum.Enum):
    KEYWORD = "keyword"
    KEY_SENTENCE = "key_sentence"
    SUMMARY = "summary"
    ANNOTATION = "annotation"

    @classmethod
    def parse(cls, value: str) -> "ReformulationType":
        try:
            return cls(value)
        except ValueError:
            raise ConfigError(
                f"unknown reformulation type {value!r}; expected one of "
                f"{[t.value for t in cls]}"
            ) from None


LLM_TYPES = (ReformulationType.KEYWORD, ReformulationType.KEY_SENTENCE, ReformulationType.SUMMARY)


@dataclass(frozen=True)
class PromptTemplate:
    """Four-part zero-shot prompt; rendering concatenates the parts in order
    and appends the query text."""

    role_preamble: str
    task_explanation: str
    requirements: str
    details: str

    def render(self, query_text: str) -> str:
        parts = [self.role_preamble, self.task_explanation, self.requirements, self.details]
        header = " ".join(p for p in parts if p)
        return f"{header}\n\n{query_text}"

    def fingerprint(self) -> str:
        payload = "\x1f".join(
            (self.role_preamble, self.task_explanation, self.requirements, self.details)
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


_ROLE = "You are a legal expert with knowledge of the law."
_FOCUS = "Pay attention to the key statement that plays a crucial role in the case judgement."

DEFAULT_TEMPLATES: dict[ReformulationType, PromptTemplate] = {
    ReformulationType.KEYWORD: PromptTemplate(
        role_preamble=_ROLE,
        task_explanation="You need to do the keyword extraction task of the law for keyword extraction.",
        requirements=_FOCUS,
        details="Please separate each word using comma.",
    ),
    ReformulationType.KEY_SENTENCE: PromptTemplate(
        role_preamble=_ROLE,
        task_explanation="You need to do the legal key content extraction task for key sentence extraction.",
        requirements=_FOCUS,
        details="Please list the key sentence.",
    ),
    ReformulationType.SUMMARY: PromptTemplate(
        role_preamble=_ROLE,
        task_explanation="You need to make a summary of the above legal documents.",
        requirements=_FOCUS,
        details="",
    ),
}


def render_prompt(
    rtype: ReformulationType,
    query: QueryCase,
    templates: Mapping[ReformulationType, PromptTemplate] = DEFAULT_TEMPLATES,
) -> str:
    if rtype not in LLM_TYPES:
        raise ConfigError(f"{rtype.value} is not an LLM reformulation type")
    return templates[rtype].render(query.text)


def load_templates(path: str | Path) -> dict[ReformulationType, PromptTemplate]:
    """Read prompt templates from a TOML file, one section per LLM type.

    Each section may set role_preamble / task_explanation / requirements /
    details; omitted sections keep the built-in template, omitted keys keep
    that template's part. Edited templates change the prompt fingerprint and
    therefore invalidate cached generations.
    """
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"template file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad TOML in {path}: {exc}") from exc
    templates = dict(DEFAULT_TEMPLATES)
    for rtype in LLM_TYPES:
        section = data.get(rtype.value)
        if section is None:
            continue
        unknown = set(section) - {"role_preamble", "task_explanation", "requirements", "details"}
        if unknown:
            raise ConfigError(f"unknown template keys in [{rtype.value}]: {sorted(unknown)}")
        base = DEFAULT_TEMPLATES[rtype]
        templates[rtype] = PromptTemplate(
            role_preamble=section.get("role_preamble", base.role_preamble),
            task_explanation=section.get("task_explanation", base.task_explanation),
            requirements=section.get("requirements", base.requirements),
            details=section.get("details", base.details),
        )
    return templates


@dataclass(frozen=True)
class LlmConfig:
    """Chat-completions endpoint settings; the API key only ever comes from
    the environment variable named by api_key_env."""

    endpoint: str
    model: str
    timeout: float = 30.0
    max_retries: int = 3
    concurrency: int = 1
    generation: tuple[tuple[str, object], ...] = ()
    api_key_env: str = "CASELAB_LLM_API_KEY"
    retry_backoff: float = 0.5

    def __post_init__(self):
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")

    @classmethod
    def from_dict(cls, data: Mapping) -> "LlmConfig":
        known = {f for f in cls.__dataclass_fields__}
        kwargs = {k: v for k, v in data.items() if k in known}
        if "generation" in kwargs and isinstance(kwargs["generation"], dict):
            kwargs["generation"] = tuple(sorted(kwargs["generation"].items()))
        missing = {"endpoint", "model"} - set(kwargs)
        if missing:
            raise ConfigError(f"llm config missing keys: {sorted(missing)}")
        return cls(**kwargs)


class LlmClient:
    """Minimal chat-completions POST client with bounded retries."""

    def __init__(self, config: LlmConfig, session: requests.Session | None = None):
        self.config = config
        self.session = session or requests.Session()

    def chat(self, prompt: str) -> str:
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
        }
        payload.update(dict(self.config.generation))
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.config.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                resp = self.session.post(
                    self.config.endpoint, json=payload, headers=headers, timeout=self.config.timeout
                )
                if resp.status_code >= 500 or resp.status_code == 429:
                    raise requests.HTTPError(f"server returned {resp.status_code}")
                resp.raise_for_status()
                data = resp.json()
                return data["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_error = exc
                if attempt < self.config.max_retries:
                    time.sleep(self.config.retry_backoff * (2**attempt))
        raise LlmError(f"chat request failed after {self.config.max_retries + 1} attempts: {last_error}")


class ResponseCache:
    """One file per (query, type, model, prompt) key under a cache directory."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(query_id: str, rtype: ReformulationType, model: str, prompt_fingerprint: str) -> str:
        raw = "\x1f".join((query_id, rtype.value, model, prompt_fingerprint))
        return hashlib.sha256(raw.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> dict | None:
        path = self._path(key)
        if not path.is_file():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def put(self, key: str, record: dict) -> None:
        write_text_atomic(self._path(key), json.dumps(record, ensure_ascii=False, sort_keys=True))


@dataclass
class ReformulatedQuery:
    """Typed content-selection output plus its canonical reassembled text."""

    query_id: str
    type: ReformulationType
    raw_response: str
    units: list[str]
    assembled_text: str
    provenance: dict
    flagged: bool = False


_LIST_MARKER = re.compile(r"^\s*(?:\(?\d+[.、。):]\s*|[-*•]\s*)")
_KEYWORD_LABEL = re.compile(r"^\s*(?:keywords?|关键词)\s*[:：]\s*", re.IGNORECASE)


def parse_response(raw: str, rtype: ReformulationType) -> list[str]:
    """Split an LLM response into units; lenient about list markers, labels,
    and full/half-width separators. An empty list is legal (flagged upstream)."""
    text = raw.strip()
    if not text:
        return []
    if rtype is ReformulationType.KEYWORD:
        text = _KEYWORD_LABEL.sub("", text)
        return [u.strip() for u in re.split(r"[,，、]", text) if u.strip()]
    if rtype is ReformulationType.KEY_SENTENCE:
        units = []
        for line in text.splitlines():
            cleaned = _LIST_MARKER.sub("", line).strip()
            if cleaned:
                units.append(cleaned)
        return units
    if rtype is ReformulationType.SUMMARY:
        return [text]
    raise ConfigError(f"{rtype.value} responses are not parseable LLM output")


def realign_key_sentences(units: Sequence[str], original: QueryCase) -> list[str]:
    """Reorder units to follow the original sentence order.

    Each unit maps to the original sentence minimizing edit distance (ties
    to the earliest sentence); duplicates keep their relative order.
    """
    sentences = [s.slice(original.text) for s in split_sentences(original.text)]
    if not sentences or not units:
        return list(units)
    matched = [nearest_unit(u, sentences) for u in units]
    order = sorted(range(len(units)), key=lambda i: (matched[i], i))
    return [units[i] for i in order]


def assemble_query_text(
    units: Sequence[str], rtype: ReformulationType, annotation_joiner: str = "。"
) -> str:
    """Canonical retrieval-query text for a unit list (no model input markers)."""
    if not units:
        raise ValidationError(f"cannot assemble empty {rtype.value} units")
    if rtype is ReformulationType.KEYWORD:
        return "Keywords: " + ",".join(units)
    if rtype is ReformulationType.KEY_SENTENCE:
        return "\n".join(units)
    if rtype is ReformulationType.SUMMARY:
        return "\n".join(units)
    return annotation_joiner.join(units)


def annotation_to_query(
    query: QueryCase,
    ann: SalienceAnnotation,
    sentences: Sequence[SentenceSpan] | None = None,
    joiner: str = "。",
) -> ReformulatedQuery:
    """Connect the short sentences containing annotated content, in order."""
    if sentences is None:
        sentences = split_sentences(query.text)
    selected: list[SentenceSpan] = []
    for sent in sentences:
        if any(spans_intersect((sent.char_start, sent.char_end), span) for span in ann.spans):
            selected.append(sent)
    if not selected:
        raise ValidationError("annotation intersects no sentence", [query.query_id])
    units = [s.slice(query.text) for s in selected]
    return ReformulatedQuery(
        query_id=query.query_id,
        type=ReformulationType.ANNOTATION,
        raw_response="",
        units=units,
        assembled_text=assemble_query_text(units, ReformulationType.ANNOTATION, joiner),
        provenance={"model": "annotation", "prompt_fingerprint": "", "timestamp": ""},
    )


def reformulate_query(
    query: QueryCase,
    rtype: ReformulationType,
    llm: LlmConfig,
    cache: ResponseCache,
    client: LlmClient | None = None,
    templates: Mapping[ReformulationType, PromptTemplate] = DEFAULT_TEMPLATES,
) -> ReformulatedQuery:
    """Fetch (or replay from cache) one reformulation and post-process it.

    The response is persisted to the cache before parsing, so a transport
    failure later in a batch never loses completed generations.
    """
    if rtype not in LLM_TYPES:
        raise ConfigError(f"{rtype.value} is not an LLM reformulation type")
    template = templates[rtype]
    prompt = template.render(query.text)
    key = ResponseCache.key(query.query_id, rtype, llm.model, template.fingerprint())
    record = cache.get(key)
    if record is None:
        raw = (client or LlmClient(llm)).chat(prompt)
        record = {
            "query_id": query.query_id,
            "type": rtype.value,
            "model": llm.model,
            "prompt_fingerprint": template.fingerprint(),
            "raw_response": raw,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }
        cache.put(key, record)
    units = parse_response(record["raw_response"], rtype)
    if rtype is ReformulationType.KEY_SENTENCE and units:
        units = realign_key_sentences(units, query)
    flagged = not units
    return ReformulatedQuery(
        query_id=query.query_id,
        type=rtype,
        raw_response=record["raw_response"],
        units=units,
        assembled_text=assemble_query_text(units, rtype) if units else "",
        provenance={
            "model": record["model"],
            "prompt_fingerprint": record["prompt_fingerprint"],
            "timestamp": record["timestamp"],
        },
        flagged=flagged,
    )


def reformulate_many(
    queries: Sequence[QueryCase],
    rtype: ReformulationType,
    llm: LlmConfig,
    cache: ResponseCache,
    client: LlmClient | None = None,
    templates: Mapping[ReformulationType, PromptTemplate] = DEFAULT_TEMPLATES,
) -> list[ReformulatedQuery]:
    """Reformulate a batch, up to the configured concurrency, in query_id order."""
    client = client or LlmClient(llm)
    ordered = sorted(queries, key=lambda q: q.query_id)
    if llm.concurrency == 1 or len(ordered) <= 1:
        return [reformulate_query(q, rtype, llm, cache, client, templates) for q in ordered]
    with ThreadPoolExecutor(max_workers=llm.concurrency) as pool:
        futures = [
            pool.submit(reformulate_query, q, rtype, llm, cache, client, templates)
            for q in ordered
        ]
        return [f.result() for f in futures]


def save_reformulations(items: Iterable[ReformulatedQuery], path: str | Path) -> None:
    write_jsonl_atomic(
        path,
        (
            {
                "query_id": r.query_id,
                "type": r.type.value,
                "units": r.units,
                "assembled_text": r.assembled_text,
                "provenance": r.provenance,
                "flagged": r.flagged,
            }
            for r in items
        ),
    )


def load_reformulations(path: str | Path) -> list[ReformulatedQuery]:
    items = []
    keys = ("query_id", "type", "units", "assembled_text")
    for lineno, rec in read_jsonl(path, required_keys=keys):
        items.append(
            ReformulatedQuery(
                query_id=str(rec["query_id"]),
                type=ReformulationType.parse(rec["type"]),
                raw_response=rec.get("raw_response", ""),
                units=[str(u) for u in rec["units"]],
                assembled_text=str(rec["assembled_text"]),
                provenance=dict(rec.get("provenance", {})),
                flagged=bool(rec.get("flagged", False)),
            )
        )
    return items
