"""Sparse cooccurrence count tensors over named, role-tagged modes.

A tensor couples a :class:`ModeSchema` (ordered modes, each with a name, a
role, and a vocabulary) with a sparse cell map ``(id, id, ...) -> count``.
Exactly one mode is the TARGET (the words being embedded) and exactly one is
the CONTEXT (the SGNS noise/contrast mode); any further modes are FEATURE
modes that condition the target-context association.

The text serialization is canonical: modes in schema order, vocabulary in id
order, cells sorted by index tuple, floats via ``repr``.  Writing the same
tensor twice yields byte-identical files.
"""

from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .corpus import NO_FRAME, NO_ROLE, Vocabulary

log = logging.getLogger(__name__)

FORMAT_LINE = "framevec-tensor 1"

_MODE_NAME_RE = re.compile(r"^[A-Za-z0-9_]+$")


class SchemaError(ValueError):
    """Invalid mode schema or a tensor/schema mismatch."""


class TensorFormatError(ValueError):
    """Unreadable or version-incompatible tensor file."""


class ModeRole(enum.Enum):
    TARGET = "TARGET"
    CONTEXT = "CONTEXT"
    FEATURE = "FEATURE"


@dataclass(frozen=True)
class Mode:
    name: str
    role: ModeRole
    vocab: Vocabulary

    def __post_init__(self):
        if not _MODE_NAME_RE.match(self.name):
            raise SchemaError(f"invalid mode name {self.name!r}")


class ModeSchema:
    """Ordered collection of modes with exactly one TARGET and one CONTEXT."""

    __slots__ = ("modes", "_by_name", "target_index", "context_index")

    def __init__(self, modes: Iterable[Mode]):
        self.modes = tuple(modes)
        if not self.modes:
            raise SchemaError("schema needs at least one mode")
        self._by_name = {m.name: i for i, m in enumerate(self.modes)}
        if len(self._by_name) != len(self.modes):
            raise SchemaError("duplicate mode names")
        targets = [i for i, m in enumerate(self.modes) if m.role is ModeRole.TARGET]
        contexts = [i for i, m in enumerate(self.modes) if m.role is ModeRole.CONTEXT]
        if len(targets) != 1 or len(contexts) != 1:
            raise SchemaError(
                f"schema needs exactly one TARGET and one CONTEXT mode, "
                f"got {len(targets)} and {len(contexts)}"
            )
        self.target_index = targets[0]
        self.context_index = contexts[0]

    def index(self, name: str) -> int:
        try:
            return self._by_name[name]
        except KeyError:
            raise SchemaError(f"no mode named {name!r}") from None

    def __getitem__(self, name: str) -> Mode:
        return self.modes[self.index(name)]

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __len__(self) -> int:
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModeSchema):
            return NotImplemented
        return self.modes == other.modes

    def __hash__(self):
        return hash(self.modes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.modes)

    def feature_indices(self) -> tuple[int, ...]:
        return tuple(
            i for i, m in enumerate(self.modes) if m.role is ModeRole.FEATURE
        )

    def with_roles(self, target: str, context: str) -> "ModeSchema":
        """Same modes, roles reassigned: ``target``/``context`` named, rest FEATURE."""
        if target == context:
            raise SchemaError("target and context must differ")
        self.index(target)
        self.index(context)
        out = []
        for m in self.modes:
            if m.name == target:
                role = ModeRole.TARGET
            elif m.name == context:
                role = ModeRole.CONTEXT
            else:
                role = ModeRole.FEATURE
            out.append(Mode(m.name, role, m.vocab))
        return ModeSchema(out)


class SparseCountTensor:
    """Nonnegative sparse count tensor addressed by per-mode integer ids."""

    __slots__ = ("schema", "cells")

    def __init__(self, schema: ModeSchema, cells: Mapping[tuple[int, ...], float]):
        self.schema = schema
        sizes = tuple(len(m.vocab) for m in schema.modes)
        checked: dict[tuple[int, ...], float] = {}
        for idx, count in cells.items():
            idx = tuple(idx)
            if len(idx) != len(sizes):
                raise SchemaError(f"cell {idx!r} has wrong arity for {len(sizes)} modes")
            for axis, (v, size) in enumerate(zip(idx, sizes)):
                if not (0 <= v < size):
                    raise SchemaError(
                        f"cell {idx!r} id {v} out of range for mode "
                        f"{schema.modes[axis].name!r} (size {size})"
                    )
            count = float(count)
            if not count > 0.0:
                raise ValueError(f"cell {idx!r} has non-positive count {count!r}")
            checked[idx] = count
        self.cells = checked

    def __len__(self) -> int:
        return len(self.cells)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseCountTensor):
            return NotImplemented
        return self.schema == other.schema and self.cells == other.cells

    def total_mass(self) -> float:
        return sum(self.cells.values())

    def marginal(self, name: str) -> dict[int, float]:
        """Summed count per id of the named mode."""
        axis = self.schema.index(name)
        out: dict[int, float] = {}
        for idx, count in self.cells.items():
            v = idx[axis]
            out[v] = out.get(v, 0.0) + count
        return out

    def marginalize(self, drop: Iterable[str]) -> "SparseCountTensor":
        """Sum out the named modes (FEATURE modes only), preserving mode order."""
        drop = tuple(drop)
        if not drop:
            return self
        drop_idx = set()
        for name in drop:
            i = self.schema.index(name)
            if self.schema.modes[i].role is not ModeRole.FEATURE:
                raise SchemaError(f"cannot marginalize out {name!r}: not a FEATURE mode")
            drop_idx.add(i)
        keep = [i for i in range(len(self.schema)) if i not in drop_idx]
        new_schema = ModeSchema(self.schema.modes[i] for i in keep)
        merged: dict[tuple[int, ...], float] = {}
        for idx, count in self.cells.items():
            key = tuple(idx[i] for i in keep)
            merged[key] = merged.get(key, 0.0) + count
        return SparseCountTensor(new_schema, merged)


# Mode layout of the full frame extraction: trigger head word (TARGET),
# role-filler word (CONTEXT), their signed separation, then one (frame, role)
# label pair per analyzer.
FRAME_MODES = (
    "trigger",
    "filler",
    "separation",
    "fn_a_frame",
    "fn_a_role",
    "fn_b_frame",
    "fn_b_role",
    "pb_frame",
    "pb_role",
)

# After collapsing the two FrameNet-style analyzers into shared frame/role
# modes and fusing the PropBank frame+role pair into one label.
COLLAPSED_MODES = (
    "trigger",
    "filler",
    "separation",
    "pb_frame_role",
    "fn_frame",
    "fn_role",
)


@dataclass
class CollapseStats:
    """Bookkeeping for collapse_frames; dual assertions double cell mass."""

    cells_in: int = 0
    cells_out: int = 0
    dual_assert_cells: int = 0
    dual_assert_mass: float = 0.0


def collapse_frames(
    tensor: SparseCountTensor, stats: CollapseStats | None = None
) -> SparseCountTensor:
    """Fold the 9-mode frame tensor into the 6-mode form.

    The two FrameNet-style analyzers share one frame mode and one role mode,
    additively: a cell where both assert a (frame, role) pair contributes two
    collapsed records, one per analyzer, each carrying the cell's full count;
    a cell where one side is the placeholder pair contributes only the
    asserting side; a cell where both sides are placeholders contributes one
    placeholder record.  PropBank frame and role fuse into a single
    "frame/role" label (placeholders included).
    """
    if tensor.schema.names != FRAME_MODES:
        raise SchemaError(
            f"expected modes {FRAME_MODES!r}, got {tensor.schema.names!r}"
        )
    if stats is None:
        stats = CollapseStats()
    modes = {m.name: m for m in tensor.schema.modes}
    ax = {name: tensor.schema.index(name) for name in FRAME_MODES}
    label = {name: modes[name].vocab.lookup for name in FRAME_MODES}

    fn_frame_counts: dict[str, float] = {}
    fn_role_counts: dict[str, float] = {}
    pb_fr_counts: dict[str, float] = {}
    raw: list[tuple[float, tuple[int, int, int], str, str, str]] = []
    for idx, count in tensor.cells.items():
        stats.cells_in += 1
        kept = (idx[ax["trigger"]], idx[ax["filler"]], idx[ax["separation"]])
        a_frame = label["fn_a_frame"](idx[ax["fn_a_frame"]])
        a_role = label["fn_a_role"](idx[ax["fn_a_role"]])
        b_frame = label["fn_b_frame"](idx[ax["fn_b_frame"]])
        b_role = label["fn_b_role"](idx[ax["fn_b_role"]])
        pb_fused = "{}/{}".format(
            label["pb_frame"](idx[ax["pb_frame"]]),
            label["pb_role"](idx[ax["pb_role"]]),
        )

        pairs: list[tuple[str, str]] = []
        if a_frame != NO_FRAME or a_role != NO_ROLE:
            pairs.append((a_frame, a_role))
        if b_frame != NO_FRAME or b_role != NO_ROLE:
            pairs.append((b_frame, b_role))
        if len(pairs) == 2:
            stats.dual_assert_cells += 1
            stats.dual_assert_mass += count
        if not pairs:
            pairs.append((NO_FRAME, NO_ROLE))

        for frame, role in pairs:
            fn_frame_counts[frame] = fn_frame_counts.get(frame, 0.0) + count
            fn_role_counts[role] = fn_role_counts.get(role, 0.0) + count
            pb_fr_counts[pb_fused] = pb_fr_counts.get(pb_fused, 0.0) + count
            raw.append((count, kept, pb_fused, frame, role))

    def feature_vocab(counts: dict[str, float]) -> Vocabulary:
        kept_entries = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return Vocabulary(
            entries=(k for k, _ in kept_entries),
            counts=(int(v) if float(v).is_integer() else v for _, v in kept_entries),
            threshold=1,
        )

    pb_fr_vocab = feature_vocab(pb_fr_counts)
    fn_frame_vocab = feature_vocab(fn_frame_counts)
    fn_role_vocab = feature_vocab(fn_role_counts)

    schema = ModeSchema(
        [
            Mode("trigger", ModeRole.TARGET, modes["trigger"].vocab),
            Mode("filler", ModeRole.CONTEXT, modes["filler"].vocab),
            Mode("separation", ModeRole.FEATURE, modes["separation"].vocab),
            Mode("pb_frame_role", ModeRole.FEATURE, pb_fr_vocab),
            Mode("fn_frame", ModeRole.FEATURE, fn_frame_vocab),
            Mode("fn_role", ModeRole.FEATURE, fn_role_vocab),
        ]
    )
    cells: dict[tuple[int, ...], float] = {}
    for count, kept, pb_fused, frame, role in raw:
        key = (
            *kept,
            pb_fr_vocab.id(pb_fused),
            fn_frame_vocab.id(frame),
            fn_role_vocab.id(role),
        )
        cells[key] = cells.get(key, 0.0) + count
    stats.cells_out = len(cells)
    if stats.dual_assert_cells:
        log.info(
            "collapse: %d/%d cells carried dual frame assertions (mass %.0f doubled)",
            stats.dual_assert_cells,
            stats.cells_in,
            stats.dual_assert_mass,
        )
    return SparseCountTensor(schema, cells)


def _format_count(count: float) -> str:
    # Integers are the common case; keep them short but round-trippable.
    if float(count).is_integer():
        return repr(int(count))
    return repr(count)


def save_tensor(tensor: SparseCountTensor, path) -> None:
    """Write the canonical text form (stable bytes for identical tensors)."""
    lines = [FORMAT_LINE, f"modes {len(tensor.schema)}"]
    for mode in tensor.schema:
        threshold = mode.vocab.threshold if mode.vocab.threshold is not None else 0
        lines.append(f"mode {mode.name} {mode.role.value} {len(mode.vocab)} {threshold}")
        counts = mode.vocab.counts
        for i, entry in enumerate(mode.vocab.entries):
            n = counts[i] if counts is not None else 0
            lines.append(f"{json.dumps(entry, ensure_ascii=False)}\t{_format_count(n)}")
    lines.append(f"cells {len(tensor.cells)}")
    for idx in sorted(tensor.cells):
        count = tensor.cells[idx]
        lines.append("\t".join([*(str(v) for v in idx), _format_count(count)]))
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")


def load_tensor(path) -> SparseCountTensor:
    with open(path, encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    pos = 0

    def next_line(what: str) -> str:
        nonlocal pos
        if pos >= len(lines):
            raise TensorFormatError(f"truncated file: expected {what}")
        line = lines[pos]
        pos += 1
        return line

    header = next_line("format line")
    if header != FORMAT_LINE:
        raise TensorFormatError(f"unsupported format line {header!r}")
    modes_line = next_line("mode count")
    if not modes_line.startswith("modes "):
        raise TensorFormatError(f"expected 'modes N', got {modes_line!r}")
    n_modes = int(modes_line.split(" ", 1)[1])

    modes = []
    for _ in range(n_modes):
        parts = next_line("mode header").split(" ")
        if len(parts) != 5 or parts[0] != "mode":
            raise TensorFormatError(f"bad mode header {parts!r}")
        _, name, role_name, size_s, threshold_s = parts
        try:
            role = ModeRole(role_name)
        except ValueError:
            raise TensorFormatError(f"unknown mode role {role_name!r}") from None
        size = int(size_s)
        threshold = int(threshold_s)
        entries = []
        counts = []
        for _ in range(size):
            row = next_line("vocab entry")
            try:
                label_json, count_s = row.split("\t")
            except ValueError:
                raise TensorFormatError(f"bad vocab row {row!r}") from None
            entries.append(json.loads(label_json))
            counts.append(float(count_s))
        # all-zero counts mean the writer had none; real counts are never 0
        vocab = Vocabulary(
            entries,
            counts=None if not any(counts) else (
                int(c) if c.is_integer() else c for c in counts
            ),
            threshold=threshold if threshold > 0 else None,
        )
        modes.append(Mode(name, role, vocab))
    schema = ModeSchema(modes)

    cells_line = next_line("cell count")
    if not cells_line.startswith("cells "):
        raise TensorFormatError(f"expected 'cells N', got {cells_line!r}")
    n_cells = int(cells_line.split(" ", 1)[1])
    cells: dict[tuple[int, ...], float] = {}
    for _ in range(n_cells):
        row = next_line("cell").split("\t")
        if len(row) != n_modes + 1:
            raise TensorFormatError(f"cell row has {len(row)} fields, expected {n_modes + 1}")
        idx = tuple(int(v) for v in row[:-1])
        cells[idx] = float(row[-1])
    if pos != len(lines):
        raise TensorFormatError(f"{len(lines) - pos} trailing lines after cells")
    return SparseCountTensor(schema, cells)
