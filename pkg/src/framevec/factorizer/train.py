"""SGD training orchestration over sparse count tensors.

Every pass visits each surviving nonzero cell once in a seeded shuffled
order, applying a count-weighted negative-sampling update with a step size
decaying linearly from eta0 to eta0/100 over all visits.  Single-threaded
runs are bitwise reproducible for a given seed and backend; multi-worker
runs (compiled kernel only) tolerate lost updates and promise statistical
quality, not identical bits.
"""

from __future__ import annotations

import logging
import os
import threading

import numpy as np

from ..rng import TapeRng, uniforms_at
from ..tensor import ModeRole, SparseCountTensor
from . import _sgd_numpy
from .model import EmbeddingSet, NoiseSampler, TrainConfig

try:
    from . import _sgd_fast
except ImportError:
    _sgd_fast = None

if os.environ.get("FRAMEVEC_PURE_PYTHON"):
    # forced fallback, for testing and benchmarking the numpy kernel
    _sgd_fast = None

COMPILED = _sgd_fast is not None

log = logging.getLogger(__name__)

# Tape positions are sharded per worker; 2^40 draws of headroom each.
WORKER_COUNTER_STRIDE = 1 << 40


class TrainDivergedError(RuntimeError):
    """Raised when a training step produces a non-finite loss or parameters."""


def resolve_backend(name: str):
    """Map a backend name to a kernel module ('auto' prefers the compiled one)."""
    if name == "numpy":
        return _sgd_numpy
    if name == "fast":
        if _sgd_fast is None:
            raise ValueError(
                "backend 'fast' requested but the compiled kernel is not available"
            )
        return _sgd_fast
    if name == "auto":
        return _sgd_fast if _sgd_fast is not None else _sgd_numpy
    raise ValueError(f"unknown backend {name!r}")


def _pack(schema, d: int, tape: TapeRng) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Allocate and initialize all mode matrices in one flat buffer.

    Target and context rows start uniform in (-0.5/d, +0.5/d); feature rows
    start near all-ones so the model begins as plain skip-gram instead of
    being killed by a near-zero elementwise product chain.
    """
    sizes = np.array([len(m.vocab) for m in schema.modes], dtype=np.int64)
    offsets = np.zeros(len(sizes), dtype=np.int64)
    total = 0
    for m, size in enumerate(sizes):
        offsets[m] = total
        total += int(size) * d
    data = np.empty(total, dtype=np.float64)
    for m, mode in enumerate(schema.modes):
        n = int(sizes[m]) * d
        u = tape.uniforms(n)
        if mode.role is ModeRole.FEATURE:
            block = 1.0 + (u - 0.5) * 0.02
        else:
            block = (u - 0.5) / d
        data[offsets[m] : offsets[m] + n] = block
    return data, offsets, sizes


def _unpack(schema, data, offsets, sizes, d) -> dict[str, np.ndarray]:
    return {
        mode.name: data[offsets[m] : offsets[m] + int(sizes[m]) * d]
        .reshape(int(sizes[m]), d)
        .copy()
        for m, mode in enumerate(schema.modes)
    }


def _diagnose(schema, data, offsets, sizes, d, step: int, cell: tuple) -> str:
    parts = []
    for m, mode in enumerate(schema.modes):
        row = data[offsets[m] + cell[m] * d : offsets[m] + (cell[m] + 1) * d]
        parts.append(f"{mode.name}[{cell[m]}] norm={float(np.linalg.norm(row)):.3e}")
    return (
        f"training diverged at step {step} on cell {cell}: " + ", ".join(parts)
    )


def sgd_train(
    tensor: SparseCountTensor,
    config: TrainConfig,
    history: list | None = None,
) -> EmbeddingSet:
    """Factorize ``tensor`` into per-mode embeddings.

    ``history``, if given, collects one (loss_sum, visits) pair per epoch.
    Raises TrainDivergedError with step/cell/norm diagnostics if any update
    goes non-finite.
    """
    schema = tensor.schema
    if not tensor.cells:
        raise ValueError("cannot train on an empty tensor")
    kernel = resolve_backend(config.backend)
    if config.workers > 1 and kernel is _sgd_numpy:
        raise ValueError("workers > 1 requires the compiled kernel")

    tpos = schema.target_index
    cpos = schema.context_index
    target_name = schema.modes[tpos].name

    # train-time frequency floor on the target side; vocabularies are kept
    # intact, the filtered rows simply never leave their initialization
    marginal = tensor.marginal(target_name)
    cells = {
        idx: count
        for idx, count in tensor.cells.items()
        if marginal[idx[tpos]] >= config.min_count
    }
    dropped = len(tensor.cells) - len(cells)
    if not cells:
        raise ValueError(
            f"no cells left after the min_count={config.min_count} filter; "
            "lower min_count for small tensors"
        )
    if dropped:
        log.info(
            "min_count=%d dropped %d/%d cells before training",
            config.min_count,
            dropped,
            len(tensor.cells),
        )

    keys = sorted(cells)
    idx = np.array(keys, dtype=np.int64)
    cnt = np.array([cells[k] for k in keys], dtype=np.float64)
    n_cells = len(keys)

    # noise distribution over the context marginal of the surviving cells
    n_ctx = len(schema.modes[cpos].vocab)
    ctx_counts = np.zeros(n_ctx, dtype=np.float64)
    np.add.at(ctx_counts, idx[:, cpos], cnt)
    sampler = NoiseSampler(ctx_counts, config.gamma)
    if sampler.n_positive < 2:
        raise ValueError(
            "negative sampling needs at least 2 context ids with training mass"
        )

    d = config.d
    tape = TapeRng(config.seed)
    data, offsets, sizes = _pack(schema, d, tape)
    counter = tape.counter
    fmodes = np.array(schema.feature_indices(), dtype=np.int64)
    lr0 = config.eta0
    lr_end = config.eta0 / 100.0
    t_total = config.epochs * n_cells
    backend_name = "fast" if kernel is _sgd_fast else "numpy"
    log.info(
        "training: %d cells, %d modes, d=%d, %d epochs, backend=%s, workers=%d",
        n_cells,
        len(schema),
        d,
        config.epochs,
        backend_name,
        config.workers,
    )

    t0 = 0
    for epoch in range(config.epochs):
        shuffle_keys = uniforms_at(config.seed, counter, n_cells)
        counter += n_cells
        order = np.argsort(shuffle_keys, kind="stable").astype(np.int64)

        if config.workers == 1:
            loss_sum, done, counter, err = kernel.run_epoch(
                data, offsets, sizes, d, idx, cnt, order,
                tpos, cpos, fmodes, sampler.cum, config.negatives,
                lr0, lr_end, t0, t_total, config.seed, counter,
            )
            if err != -1:
                cell = keys[int(order[err])]
                raise TrainDivergedError(
                    _diagnose(schema, data, offsets, sizes, d, t0 + err, cell)
                )
        else:
            bounds = np.linspace(0, n_cells, config.workers + 1).astype(np.int64)
            base = counter
            results: list = [None] * config.workers
            threads = []
            for i in range(config.workers):
                shard = order[bounds[i] : bounds[i + 1]]
                shard_t0 = t0 + int(bounds[i])
                shard_counter = base + i * WORKER_COUNTER_STRIDE

                def _work(slot, shard, shard_t0, shard_counter):
                    results[slot] = kernel.run_epoch(
                        data, offsets, sizes, d, idx, cnt, shard,
                        tpos, cpos, fmodes, sampler.cum, config.negatives,
                        lr0, lr_end, shard_t0, t_total, config.seed, shard_counter,
                    )

                t = threading.Thread(
                    target=_work, args=(i, shard, shard_t0, shard_counter)
                )
                threads.append(t)
                t.start()
            for t in threads:
                t.join()
            loss_sum = 0.0
            for i, res in enumerate(results):
                part_loss, done, _, err = res
                if err != -1:
                    visit = int(bounds[i]) + err
                    cell = keys[int(order[visit])]
                    raise TrainDivergedError(
                        _diagnose(schema, data, offsets, sizes, d, t0 + visit, cell)
                    )
                loss_sum += part_loss
            counter = base + config.workers * WORKER_COUNTER_STRIDE

        t0 += n_cells
        if not np.isfinite(data).all():
            raise TrainDivergedError(
                f"non-finite parameters after epoch {epoch + 1}"
            )
        if history is not None:
            history.append((loss_sum, n_cells))
        log.info(
            "epoch %d/%d: mean per-visit loss %.6f",
            epoch + 1,
            config.epochs,
            loss_sum / n_cells,
        )

    return EmbeddingSet(schema, _unpack(schema, data, offsets, sizes, d))
