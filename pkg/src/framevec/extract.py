"""Cooccurrence record extraction: sliding windows and frame structures.

Both extractors accumulate label-level counts first and only then assign
integer ids, so partial results from a parallel map over sentences can be
merged associatively before the (order-sensitive) vocabulary build.  Mode
vocabularies derived from the records themselves (offsets, frame labels,
filler words) use threshold 1: only the trigger/target side is frequency
thresholded.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .corpus import (
    NO_FRAME,
    NO_ROLE,
    PARSERS,
    AnnotatedSentence,
    Vocabulary,
    head_token,
)
from .tensor import FRAME_MODES, Mode, ModeRole, ModeSchema, SparseCountTensor

log = logging.getLogger(__name__)


def _offset_label(offset: int) -> str:
    return f"{offset:+d}"


def _derived_vocab(counts: Counter) -> Vocabulary:
    return Vocabulary.from_counts(counts, threshold=1)


def extract_windowed(
    sentences: Iterable[AnnotatedSentence],
    vocab: Vocabulary,
    window: int = 2,
    signed: bool = False,
) -> SparseCountTensor:
    """Count (target, context) pairs within a symmetric token window.

    For each in-vocab token at position j and each in-vocab token at position
    i with 1 <= |i - j| <= window, the pair counts once.  With ``signed``,
    a third mode records the raw offset i - j as a label like "-2" or "+1".
    Window positions past the sentence edge contribute nothing.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    pair_counts: Counter = Counter()
    offset_counts: Counter = Counter()
    for sentence in sentences:
        tokens = sentence.tokens
        ids = [vocab.get(tok) for tok in tokens]
        for j, tid in enumerate(ids):
            if tid is None:
                continue
            lo = max(0, j - window)
            hi = min(len(tokens), j + window + 1)
            for i in range(lo, hi):
                if i == j or ids[i] is None:
                    continue
                if signed:
                    off = _offset_label(i - j)
                    pair_counts[(tid, ids[i], off)] += 1
                    offset_counts[off] += 1
                else:
                    pair_counts[(tid, ids[i])] += 1

    modes = [
        Mode("target", ModeRole.TARGET, vocab),
        Mode("context", ModeRole.CONTEXT, vocab),
    ]
    if signed:
        offset_vocab = _derived_vocab(offset_counts)
        modes.append(Mode("offset", ModeRole.FEATURE, offset_vocab))
        cells = {
            (t, c, offset_vocab.id(off)): float(n)
            for (t, c, off), n in pair_counts.items()
        }
    else:
        cells = {(t, c): float(n) for (t, c), n in pair_counts.items()}
    return SparseCountTensor(ModeSchema(modes), cells)


@dataclass
class ExtractStats:
    """Counters surfaced by extract_frames."""

    sentences: int = 0
    annotations: int = 0
    roleless_annotations: int = 0
    records: int = 0
    skipped_oov_trigger: int = 0
    parser_records: Counter = field(default_factory=Counter)


def extract_frames(
    sentences: Iterable[AnnotatedSentence],
    trigger_vocab: Vocabulary,
    stats: ExtractStats | None = None,
) -> SparseCountTensor:
    """Build the 9-mode frame cooccurrence tensor.

    One record per (annotation, role, filler token) triple: the annotation's
    trigger head word, one word of the role's filler span, their signed token
    separation, and a (frame, role) label pair per analyzer.  The emitting
    analyzer's pair comes from the triple itself; every other analyzer
    contributes its first asserted pair at the same (trigger head, filler
    token) position pair, or the placeholder labels if it asserted nothing
    there.  Identical records merge additively, so two analyzers emitting the
    same merged record yield one cell of count 2 and total tensor mass always
    equals the number of extracted triples.

    Annotations with no filled roles are dropped; annotations whose trigger
    head word is not in ``trigger_vocab`` are skipped and counted.
    """
    if stats is None:
        stats = ExtractStats()
    label_counts: Counter = Counter()
    sep_counts: Counter = Counter()
    filler_counts: Counter = Counter()

    for sentence in sentences:
        stats.sentences += 1
        tokens = sentence.tokens
        active = [ann for ann in sentence.annotations if ann.roles]
        stats.annotations += len(sentence.annotations)
        stats.roleless_annotations += len(sentence.annotations) - len(active)

        # First asserted (frame, role) of each parser at a (head, position)
        # pair; annotation order then role order makes "first" deterministic.
        first_label: dict[tuple[str, int, int], tuple[str, str]] = {}
        for ann in active:
            h = head_token(ann.trigger)
            for role, filler in ann.roles:
                for p in range(*filler):
                    first_label.setdefault((ann.parser, h, p), (ann.frame, role))

        for ann in active:
            h = head_token(ann.trigger)
            trigger_word = tokens[h]
            if trigger_word not in trigger_vocab:
                stats.skipped_oov_trigger += sum(
                    end - start for _, (start, end) in ann.roles
                )
                continue
            for role, filler in ann.roles:
                for p in range(*filler):
                    slots = []
                    for parser in PARSERS:
                        if parser == ann.parser:
                            slots.append((ann.frame, role))
                        else:
                            slots.append(
                                first_label.get((parser, h, p), (NO_FRAME, NO_ROLE))
                            )
                    sep = _offset_label(p - h)
                    record = (
                        trigger_word,
                        tokens[p],
                        sep,
                        slots[0][0],
                        slots[0][1],
                        slots[1][0],
                        slots[1][1],
                        slots[2][0],
                        slots[2][1],
                    )
                    label_counts[record] += 1
                    sep_counts[sep] += 1
                    filler_counts[tokens[p]] += 1
                    stats.records += 1
                    stats.parser_records[ann.parser] += 1

    sep_vocab = _derived_vocab(sep_counts)
    filler_vocab = _derived_vocab(filler_counts)
    slot_vocabs = []
    for slot in range(6):
        counts: Counter = Counter()
        for record, n in label_counts.items():
            counts[record[3 + slot]] += n
        slot_vocabs.append(_derived_vocab(counts))

    schema = ModeSchema(
        [
            Mode("trigger", ModeRole.TARGET, trigger_vocab),
            Mode("filler", ModeRole.CONTEXT, filler_vocab),
            Mode("separation", ModeRole.FEATURE, sep_vocab),
            Mode("fn_a_frame", ModeRole.FEATURE, slot_vocabs[0]),
            Mode("fn_a_role", ModeRole.FEATURE, slot_vocabs[1]),
            Mode("fn_b_frame", ModeRole.FEATURE, slot_vocabs[2]),
            Mode("fn_b_role", ModeRole.FEATURE, slot_vocabs[3]),
            Mode("pb_frame", ModeRole.FEATURE, slot_vocabs[4]),
            Mode("pb_role", ModeRole.FEATURE, slot_vocabs[5]),
        ]
    )
    assert schema.names == FRAME_MODES
    cells: dict[tuple[int, ...], float] = {}
    for record, n in label_counts.items():
        trigger_word, filler_word, sep = record[0], record[1], record[2]
        idx = (
            trigger_vocab.id(trigger_word),
            filler_vocab.id(filler_word),
            sep_vocab.id(sep),
            slot_vocabs[0].id(record[3]),
            slot_vocabs[1].id(record[4]),
            slot_vocabs[2].id(record[5]),
            slot_vocabs[3].id(record[6]),
            slot_vocabs[4].id(record[7]),
            slot_vocabs[5].id(record[8]),
        )
        cells[idx] = float(n)
    if stats.skipped_oov_trigger:
        log.info(
            "extract_frames: skipped %d records for out-of-vocabulary triggers",
            stats.skipped_oov_trigger,
        )
    return SparseCountTensor(schema, cells)
