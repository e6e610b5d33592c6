"""Embedding persistence: one text file per mode plus a JSON manifest.

Vector file format: first line "N d", then one line per vocabulary entry in
id order: the label, a space, and d decimal floats separated by single
spaces.  Floats are written with repr so a load/save round trip is exact.
Labels are written raw; they are recovered by splitting off the final d
fields, so labels containing spaces survive.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from ..corpus import Vocabulary
from ..tensor import Mode, ModeRole, ModeSchema
from .model import EmbeddingSet, TrainConfig

FORMAT = "framevec-embeddings 1"
MANIFEST_NAME = "manifest.json"


class EmbeddingFormatError(ValueError):
    """Unreadable or inconsistent embedding files."""


def save_embeddings(
    embeddings: EmbeddingSet,
    outdir,
    config: TrainConfig | None = None,
    model_id: str = "model",
    extra: dict | None = None,
) -> str:
    """Write one .vec file per mode plus a manifest; returns the manifest path."""
    os.makedirs(outdir, exist_ok=True)
    modes_meta = []
    for mode in embeddings.schema:
        filename = f"{mode.name}.vec"
        matrix = embeddings[mode.name]
        lines = [f"{matrix.shape[0]} {matrix.shape[1]}"]
        for i, label in enumerate(mode.vocab.entries):
            lines.append(label + " " + " ".join(repr(float(x)) for x in matrix[i]))
        body = "\n".join(lines) + "\n"
        with open(os.path.join(outdir, filename), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(body)
        modes_meta.append(
            {
                "name": mode.name,
                "role": mode.role.value,
                "size": int(matrix.shape[0]),
                "file": filename,
                "sha256": hashlib.sha256(body.encode("utf-8")).hexdigest(),
            }
        )
    manifest = {
        "format": FORMAT,
        "model_id": model_id,
        "d": int(embeddings.d),
        "modes": modes_meta,
    }
    if config is not None:
        manifest["config"] = config.to_dict()
    if extra:
        manifest.update(extra)
    manifest_path = os.path.join(outdir, MANIFEST_NAME)
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(manifest, ensure_ascii=False, indent=2, sort_keys=True) + "\n")
    return manifest_path


def _read_vec_file(path, expected_size: int) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        try:
            n_s, d_s = header.split(" ")
            n, d = int(n_s), int(d_s)
        except ValueError:
            raise EmbeddingFormatError(f"{path}: bad header {header!r}") from None
        if n != expected_size:
            raise EmbeddingFormatError(
                f"{path}: header says {n} rows, manifest says {expected_size}"
            )
        labels = []
        matrix = np.empty((n, d), dtype=np.float64)
        for i in range(n):
            line = fh.readline()
            if not line:
                raise EmbeddingFormatError(f"{path}: truncated at row {i}")
            parts = line.rstrip("\n").rsplit(" ", d)
            if len(parts) != d + 1:
                raise EmbeddingFormatError(f"{path}: row {i} has too few fields")
            labels.append(parts[0])
            matrix[i] = [float(x) for x in parts[1:]]
        if fh.readline():
            raise EmbeddingFormatError(f"{path}: trailing data after {n} rows")
    return labels, matrix


def load_embeddings(directory) -> tuple[EmbeddingSet, dict]:
    """Load an embedding set written by save_embeddings; returns (set, manifest)."""
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise EmbeddingFormatError(f"no {MANIFEST_NAME} in {directory}") from None
    except json.JSONDecodeError as exc:
        raise EmbeddingFormatError(f"{manifest_path}: invalid JSON ({exc})") from None
    if manifest.get("format") != FORMAT:
        raise EmbeddingFormatError(
            f"{manifest_path}: unsupported format {manifest.get('format')!r}"
        )
    modes = []
    matrices = {}
    for meta in manifest["modes"]:
        labels, matrix = _read_vec_file(
            os.path.join(directory, meta["file"]), meta["size"]
        )
        vocab = Vocabulary.from_entries(labels)
        modes.append(Mode(meta["name"], ModeRole(meta["role"]), vocab))
        matrices[meta["name"]] = matrix
    return EmbeddingSet(ModeSchema(modes), matrices), manifest
