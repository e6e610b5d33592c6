"""Semantic proto-role judgments and per-predicate oracle vectors.

A judgment grades one (predicate, argument) pair on one proto-role property
(volition, awareness, ...) under one grammatical relation, on a 1-5 scale,
with a flag saying whether the property applies at all.  Oracle vectors sum
the likelihoods of applicable judgments into 80 components (20 properties x
4 relations) and L1-normalize, so each vector is a distribution over
property-relation combinations.  Predicates whose raw vector is all zero
carry no signal and are excluded (and counted).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

RELATIONS = ("nsubj", "dobj", "iobj", "nsubjpass")

PROPERTIES = (
    "awareness",
    "change_of_location",
    "change_of_possession",
    "change_of_state",
    "change_of_state_continuous",
    "created",
    "destroyed",
    "existed_after",
    "existed_before",
    "existed_during",
    "exists_as_physical",
    "instigation",
    "location_of_event",
    "partitive",
    "physical_contact",
    "sentient",
    "stationary",
    "volition",
    "was_for_benefit",
    "was_used",
)

# Fixed component order: property-major, then relation.
COMPONENTS = tuple(f"{p}:{r}" for p in PROPERTIES for r in RELATIONS)
N_COMPONENTS = len(COMPONENTS)

_COMPONENT_INDEX = {name: i for i, name in enumerate(COMPONENTS)}

_HEADER = ("predicate", "argument", "relation", "property", "applicable", "likelihood")


class SprFormatError(ValueError):
    """Unreadable judgment or oracle file."""


@dataclass(frozen=True)
class SprJudgment:
    predicate: str
    argument: str
    relation: str
    property: str
    applicable: bool
    likelihood: float


@dataclass
class SprReadStats:
    lines: int = 0
    judgments: int = 0
    malformed: int = 0


def _parse_row(fields: list[str]) -> SprJudgment:
    if len(fields) != 6:
        raise SprFormatError(f"expected 6 fields, got {len(fields)}")
    predicate, argument, relation, prop, applicable_s, likelihood_s = fields
    if not predicate:
        raise SprFormatError("empty predicate")
    if relation not in RELATIONS:
        raise SprFormatError(f"unknown relation {relation!r}")
    if prop not in PROPERTIES:
        raise SprFormatError(f"unknown property {prop!r}")
    if applicable_s == "true":
        applicable = True
    elif applicable_s == "false":
        applicable = False
    else:
        raise SprFormatError(f"applicable must be true/false, got {applicable_s!r}")
    try:
        likelihood = float(likelihood_s)
    except ValueError:
        raise SprFormatError(f"bad likelihood {likelihood_s!r}") from None
    if not (1.0 <= likelihood <= 5.0):
        raise SprFormatError(f"likelihood {likelihood} outside [1, 5]")
    return SprJudgment(predicate, argument, relation, prop, applicable, likelihood)


def read_spr_tsv(path, stats: SprReadStats | None = None) -> list[SprJudgment]:
    """Read tab-separated judgments; malformed rows are skipped and counted."""
    if stats is None:
        stats = SprReadStats()
    judgments: list[SprJudgment] = []
    with open(path, encoding="utf-8") as handle:
        header = handle.readline().rstrip("\n")
        if tuple(header.split("\t")) != _HEADER:
            expected = "\t".join(_HEADER)
            raise SprFormatError(
                f"{path}: expected header {expected!r}, got {header!r}"
            )
        for lineno, line in enumerate(handle, 2):
            stats.lines += 1
            try:
                judgments.append(_parse_row(line.rstrip("\n").split("\t")))
            except SprFormatError as exc:
                stats.malformed += 1
                if stats.malformed <= 5:
                    log.warning("%s:%d: skipping bad judgment (%s)", path, lineno, exc)
                continue
            stats.judgments += 1
    return judgments


@dataclass
class OracleBuildStats:
    predicates_seen: int = 0
    predicates_kept: int = 0
    all_zero_excluded: int = 0


class OracleTable:
    """word -> 80-component L1-normalized proto-role vector."""

    __slots__ = ("vectors",)

    def __init__(self, vectors: dict[str, np.ndarray]):
        checked = {}
        for word, vec in vectors.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (N_COMPONENTS,):
                raise ValueError(
                    f"oracle vector for {word!r} has shape {vec.shape}, "
                    f"expected ({N_COMPONENTS},)"
                )
            if (vec < 0).any():
                raise ValueError(f"oracle vector for {word!r} has negative components")
            checked[word] = vec
        self.vectors = checked

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, word: str) -> bool:
        return word in self.vectors

    def __getitem__(self, word: str) -> np.ndarray:
        return self.vectors[word]

    def words(self) -> list[str]:
        return sorted(self.vectors)

    def matrix(self, words) -> np.ndarray:
        """Row-aligned oracle matrix for the given words."""
        return np.stack([self.vectors[w] for w in words])

    def save(self, path) -> None:
        lines = ["\t".join(("word",) + COMPONENTS)]
        for word in self.words():
            vec = self.vectors[word]
            lines.append("\t".join([word, *(repr(float(x)) for x in vec)]))
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "OracleTable":
        with open(path, encoding="utf-8") as handle:
            header = handle.readline().rstrip("\n")
            if tuple(header.split("\t")) != ("word",) + COMPONENTS:
                raise SprFormatError(f"{path}: unexpected oracle header")
            vectors = {}
            for lineno, line in enumerate(handle, 2):
                fields = line.rstrip("\n").split("\t")
                if len(fields) != N_COMPONENTS + 1:
                    raise SprFormatError(f"{path}:{lineno}: wrong field count")
                vectors[fields[0]] = np.array([float(x) for x in fields[1:]])
        return cls(vectors)


def build_oracle(
    judgments, stats: OracleBuildStats | None = None
) -> OracleTable:
    """Sum applicable likelihoods per (property, relation), L1-normalize.

    Non-applicable judgments contribute zero.  Predicates whose summed
    vector is all zero are excluded and counted in ``stats``.
    """
    if stats is None:
        stats = OracleBuildStats()
    raw: dict[str, np.ndarray] = {}
    for j in judgments:
        vec = raw.get(j.predicate)
        if vec is None:
            vec = raw[j.predicate] = np.zeros(N_COMPONENTS)
        if j.applicable:
            vec[_COMPONENT_INDEX[f"{j.property}:{j.relation}"]] += j.likelihood
    vectors = {}
    for predicate, vec in raw.items():
        stats.predicates_seen += 1
        total = float(vec.sum())
        if total == 0.0:
            stats.all_zero_excluded += 1
            continue
        vectors[predicate] = vec / total
        stats.predicates_kept += 1
    if stats.all_zero_excluded:
        log.info(
            "oracle: excluded %d all-zero predicates (%d kept)",
            stats.all_zero_excluded,
            stats.predicates_kept,
        )
    return OracleTable(vectors)
