"""Word/sentence segmentation with character offsets, stopword masks, salience marking.

Offsets are always character offsets into the original string (half-open),
never byte offsets; the downstream word/token alignment and overlap math
count characters.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, ValidationError

# Sentence terminators; the terminator itself is excluded from the span.
SENTENCE_TERMINATORS = frozenset("。！？；!?;\n")


@dataclass(frozen=True)
class Token:
    surface: str
    char_start: int
    char_end: int

    def __post_init__(self):
        if not (self.char_start < self.char_end):
            raise ValidationError(f"empty token span ({self.char_start}, {self.char_end})")

    def span(self) -> tuple[int, int]:
        return (self.char_start, self.char_end)


@dataclass
class TokenizedText:
    """Tokens of one text, ordered by offset, with a per-token stopword mask."""

    source_ref: str
    text: str
    tokens: list[Token]
    stopword_mask: list[bool]

    def content_words(self) -> list[str]:
        """Surfaces of non-stopword tokens, in text order."""
        return [t.surface for t, masked in zip(self.tokens, self.stopword_mask) if not masked]

    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]


@dataclass(frozen=True)
class SentenceSpan:
    index: int
    char_start: int
    char_end: int

    def slice(self, text: str) -> str:
        return text[self.char_start : self.char_end]


@dataclass(frozen=True)
class TokenizerConfig:
    """Pluggable tokenizer choice plus word lists.

    name: "whitespace" for pre-segmented/Latin text, or "dictionary" for
    greedy longest-match segmentation with single-character fallback.
    """

    name: str = "whitespace"
    lexicon: tuple[str, ...] = ()
    stopwords: frozenset[str] = frozenset()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lexicon": sorted(self.lexicon),
            "stopwords": sorted(self.stopwords),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TokenizerConfig":
        return cls(
            name=data["name"],
            lexicon=tuple(data.get("lexicon", ())),
            stopwords=frozenset(data.get("stopwords", ())),
        )


def load_wordlist(path: str | Path) -> list[str]:
    """One word per line, UTF-8; blank lines ignored."""
    words = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        word = line.strip()
        if word:
            words.append(word)
    return words


class WhitespaceTokenizer:
    """Splits on runs of whitespace; everything else is a token."""

    def __call__(self, text: str) -> list[Token]:
        tokens = []
        start = None
        for i, ch in enumerate(text):
            if ch.isspace():
                if start is not None:
                    tokens.append(Token(text[start:i], start, i))
                    start = None
            elif start is None:
                start = i
        if start is not None:
            tokens.append(Token(text[start:], start, len(text)))
        return tokens


class DictionaryTokenizer:
    """Greedy longest-match segmentation against a lexicon.

    At each position the longest lexicon word wins; positions not covered
    by any word become single-character tokens. Whitespace produces no
    tokens.
    """

    def __init__(self, lexicon: Iterable[str]):
        self.words = {w for w in lexicon if w}
        self.max_len = max((len(w) for w in self.words), default=1)

    def __call__(self, text: str) -> list[Token]:
        tokens = []
        i, n = 0, len(text)
        while i < n:
            if text[i].isspace():
                i += 1
                continue
            match_len = 1
            for length in range(min(self.max_len, n - i), 1, -1):
                if text[i : i + length] in self.words:
                    match_len = length
                    break
            tokens.append(Token(text[i : i + match_len], i, i + match_len))
            i += match_len
        return tokens


_TOKENIZERS = {
    "whitespace": lambda cfg: WhitespaceTokenizer(),
    "dictionary": lambda cfg: DictionaryTokenizer(cfg.lexicon),
}


def tokenize(text: str, config: TokenizerConfig, source_ref: str = "") -> TokenizedText:
    """Segment text per config and attach the stopword mask.

    Raises ConfigError for an unregistered tokenizer name.
    """
    try:
        factory = _TOKENIZERS[config.name]
    except KeyError:
        raise ConfigError(
            f"unknown tokenizer {config.name!r}; registered: {sorted(_TOKENIZERS)}"
        ) from None
    tokens = factory(config)(text)
    mask = [t.surface in config.stopwords for t in tokens]
    return TokenizedText(source_ref=source_ref, text=text, tokens=tokens, stopword_mask=mask)


def split_sentences(text: str, terminators: frozenset[str] = SENTENCE_TERMINATORS) -> list[SentenceSpan]:
    """Split at terminator characters; spans exclude terminators, empties dropped."""
    spans = []
    start = 0
    for i, ch in enumerate(text):
        if ch in terminators:
            if i > start:
                spans.append(SentenceSpan(len(spans), start, i))
            start = i + 1
    if len(text) > start:
        spans.append(SentenceSpan(len(spans), start, len(text)))
    return spans


def spans_intersect(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] < b[1] and b[0] < a[1]


def mark_salient_words(tok: TokenizedText, spans: Sequence[tuple[int, int]]) -> list[bool]:
    """Per-token flags: a token is salient iff its span intersects any annotation span.

    Spans are half-open character intervals over the same text the tokens
    were cut from; out-of-bounds spans are rejected.
    """
    n = len(tok.text)
    for start, end in spans:
        if not (0 <= start < end <= n):
            raise ValidationError(f"annotation span ({start}, {end}) outside text of length {n}")
    return [any(spans_intersect(t.span(), s) for s in spans) for t in tok.tokens]


def strip_words(text: str, words: frozenset[str] | set[str]) -> str:
    """Remove every longest-match occurrence of the given words from text.

    Used for the with/without-stopword dataset statistics; matching is the
    same greedy longest-match walk the dictionary tokenizer performs.
    """
    if not words:
        return text
    max_len = max(len(w) for w in words)
    out = []
    i, n = 0, len(text)
    while i < n:
        matched = 0
        for length in range(min(max_len, n - i), 0, -1):
            if text[i : i + length] in words:
                matched = length
                break
        if matched:
            i += matched
        else:
            out.append(text[i])
            i += 1
    return "".join(out)
