"""Frame-annotated corpus ingestion.

A corpus is a UTF-8 file with one JSON record per line::

    {"doc_id": "...",
     "tokens": ["She", "said", ...],
     "annotations": [{"parser": "fn_a",
                      "trigger": [3, 5],
                      "frame": "Attempt",
                      "roles": [{"role": "Agent", "filler": [2, 3]}]}]}

Spans are half-open ``[start, end)`` token intervals.  ``parser`` is one of
``fn_a``/``fn_b`` (the two FrameNet-style analyzers) or ``pb`` (PropBank).
See ``docs/corpus-format.md`` for the full schema with worked examples.

Malformed lines are skipped and counted, never fatal: large automatically
annotated corpora are dirty and one bad record should not kill a pipeline.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

log = logging.getLogger(__name__)

PARSERS = ("fn_a", "fn_b", "pb")

# Placeholder labels for parser slots that assert nothing on a record.
NO_FRAME = "⟨NO_FRAME⟩"
NO_ROLE = "⟨NO_ROLE⟩"
_RESERVED_LABELS = frozenset({NO_FRAME, NO_ROLE})

Span = tuple[int, int]


class CorpusFormatError(ValueError):
    """A line that does not follow the corpus record schema."""


@dataclass(frozen=True)
class FrameAnnotation:
    """One parser's frame assertion: trigger span, frame label, role fillers."""

    parser: str
    trigger: Span
    frame: str
    roles: tuple[tuple[str, Span], ...]


@dataclass(frozen=True)
class AnnotatedSentence:
    doc_id: str
    tokens: tuple[str, ...]
    annotations: tuple[FrameAnnotation, ...] = ()


@dataclass
class ReadStats:
    """Counters surfaced by :func:`read_corpus`."""

    lines: int = 0
    sentences: int = 0
    malformed: int = 0


def head_token(span: Span) -> int:
    """Representative token index for a span: its final token.

    Multi-word triggers ("would try") are indexed by their last token; no
    syntactic head information is assumed to be available.
    """
    start, end = span
    if end <= start:
        raise ValueError(f"empty span {span!r}")
    return end - 1


def _parse_span(obj, n_tokens: int, what: str) -> Span:
    if (
        not isinstance(obj, (list, tuple))
        or len(obj) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in obj)
    ):
        raise CorpusFormatError(f"{what} is not a [start, end) integer pair: {obj!r}")
    start, end = obj
    if not (0 <= start < end <= n_tokens):
        raise CorpusFormatError(f"{what} {obj!r} out of bounds for {n_tokens} tokens")
    return (start, end)


def _parse_label(obj, what: str) -> str:
    if not isinstance(obj, str) or not obj:
        raise CorpusFormatError(f"{what} is not a nonempty string: {obj!r}")
    if obj in _RESERVED_LABELS:
        raise CorpusFormatError(f"{what} uses the reserved label {obj!r}")
    return obj


def parse_record(text: str) -> AnnotatedSentence:
    """Parse one corpus line; raises CorpusFormatError on any schema violation."""
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"invalid JSON: {exc}") from None
    if not isinstance(rec, dict):
        raise CorpusFormatError("record is not an object")
    doc_id = rec.get("doc_id")
    if not isinstance(doc_id, str):
        raise CorpusFormatError("missing or non-string doc_id")
    tokens = rec.get("tokens")
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise CorpusFormatError("tokens is not an array of strings")
    annotations = []
    for ann in rec.get("annotations", []):
        if not isinstance(ann, dict):
            raise CorpusFormatError("annotation is not an object")
        parser = ann.get("parser")
        if parser not in PARSERS:
            raise CorpusFormatError(f"unknown parser {parser!r}")
        trigger = _parse_span(ann.get("trigger"), len(tokens), "trigger span")
        frame = _parse_label(ann.get("frame"), "frame label")
        roles = []
        raw_roles = ann.get("roles", [])
        if not isinstance(raw_roles, list):
            raise CorpusFormatError("roles is not an array")
        for role in raw_roles:
            if not isinstance(role, dict):
                raise CorpusFormatError("role entry is not an object")
            label = _parse_label(role.get("role"), "role label")
            filler = _parse_span(role.get("filler"), len(tokens), "filler span")
            roles.append((label, filler))
        annotations.append(
            FrameAnnotation(parser=parser, trigger=trigger, frame=frame, roles=tuple(roles))
        )
    return AnnotatedSentence(doc_id=doc_id, tokens=tuple(tokens), annotations=tuple(annotations))


def read_corpus(path, stats: ReadStats | None = None) -> Iterator[AnnotatedSentence]:
    """Yield sentences from a line-delimited corpus file, in file order.

    An unreadable file raises; a malformed line is counted in ``stats`` (and
    logged) and skipped.
    """
    if stats is None:
        stats = ReadStats()
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            line = line.rstrip("\n")
            stats.lines += 1
            try:
                sentence = parse_record(line)
            except CorpusFormatError as exc:
                stats.malformed += 1
                if stats.malformed <= 5:
                    log.warning("%s:%d: skipping malformed line (%s)", path, lineno, exc)
                continue
            stats.sentences += 1
            yield sentence
    if stats.malformed:
        log.info(
            "%s: read %d sentences, skipped %d malformed lines",
            path,
            stats.sentences,
            stats.malformed,
        )


class Vocabulary:
    """Dense string-to-id mapping with occurrence counts and a threshold.

    Entry order is the id order: descending count, ties broken
    lexicographically.  Vocabularies loaded from files keep whatever order
    the file records.
    """

    __slots__ = ("entries", "counts", "threshold", "_index")

    def __init__(
        self,
        entries: Iterable[str],
        counts: Iterable[int] | None = None,
        threshold: int | None = None,
    ):
        self.entries = tuple(entries)
        self.counts = None if counts is None else tuple(counts)
        self.threshold = threshold
        if self.counts is not None and len(self.counts) != len(self.entries):
            raise ValueError("counts and entries length mismatch")
        self._index = {label: i for i, label in enumerate(self.entries)}
        if len(self._index) != len(self.entries):
            raise ValueError("duplicate vocabulary entries")

    @classmethod
    def from_counts(cls, counts: Counter | dict, threshold: int) -> "Vocabulary":
        if threshold < 1:
            raise ValueError("threshold must be >= 1")
        kept = sorted(
            ((label, n) for label, n in counts.items() if n >= threshold),
            key=lambda kv: (-kv[1], kv[0]),
        )
        return cls(
            entries=(label for label, _ in kept),
            counts=(n for _, n in kept),
            threshold=threshold,
        )

    @classmethod
    def from_entries(cls, entries: Iterable[str]) -> "Vocabulary":
        return cls(entries)

    def id(self, label: str) -> int:
        return self._index[label]

    def get(self, label: str) -> int | None:
        return self._index.get(label)

    def lookup(self, idx: int) -> str:
        return self.entries[idx]

    def __contains__(self, label: str) -> bool:
        return label in self._index

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return (
            self.entries == other.entries
            and self.counts == other.counts
            and self.threshold == other.threshold
        )

    def __hash__(self):
        return hash((self.entries, self.counts, self.threshold))

    def __repr__(self):
        return f"Vocabulary({len(self)} entries, threshold={self.threshold})"


def iter_tokens(sentence: AnnotatedSentence) -> Iterator[str]:
    """Selector counting every surface token."""
    return iter(sentence.tokens)


def iter_trigger_heads(sentence: AnnotatedSentence) -> Iterator[str]:
    """Selector counting trigger head tokens of annotations with >= 1 role."""
    for ann in sentence.annotations:
        if ann.roles:
            yield sentence.tokens[head_token(ann.trigger)]


def build_vocab(
    sentences: Iterable[AnnotatedSentence],
    selector: Callable[[AnnotatedSentence], Iterable[str]],
    threshold: int,
) -> Vocabulary:
    """Count ``selector`` outputs over ``sentences`` and keep labels seen >= threshold times."""
    counts: Counter = Counter()
    for sentence in sentences:
        counts.update(selector(sentence))
    return Vocabulary.from_counts(counts, threshold)
