"""Timing comparison of the two SGD kernels on a synthetic tensor.

Builds a random sparse count tensor, trains it once per backend with the
same seed, and prints a small table.  Single-threaded runs of the two
kernels walk the same update sequence, so their final losses must agree
to rounding; the table includes the loss as a sanity column.

Usage:
    python benchmarks/bench_train.py
    python benchmarks/bench_train.py --records 500000 --d 200 --workers 1,4
"""

import argparse
import logging
import time

import numpy as np

from framevec.corpus import Vocabulary
from framevec.factorizer import TrainConfig, sgd_train
from framevec.factorizer.train import COMPILED
from framevec.tensor import Mode, ModeRole, ModeSchema, SparseCountTensor

log = logging.getLogger("bench_train")


def build_tensor(n_targets: int, n_contexts: int, n_features: int,
                 n_cells: int, seed: int) -> SparseCountTensor:
    """Random tensor with geometric cell counts (mean ~3, mild skew)."""
    rng = np.random.default_rng(seed)
    modes = [
        Mode("target", ModeRole.TARGET,
             Vocabulary.from_entries([f"t{i}" for i in range(n_targets)])),
        Mode("context", ModeRole.CONTEXT,
             Vocabulary.from_entries([f"c{i}" for i in range(n_contexts)])),
    ]
    if n_features:
        modes.append(
            Mode("feature", ModeRole.FEATURE,
                 Vocabulary.from_entries([f"f{i}" for i in range(n_features)]))
        )
    schema = ModeSchema(modes)
    sizes = [n_targets, n_contexts] + ([n_features] if n_features else [])
    cells: dict = {}
    while len(cells) < n_cells:
        need = n_cells - len(cells)
        draws = np.column_stack(
            [rng.integers(0, s, size=need + need // 4 + 16) for s in sizes]
        )
        counts = rng.geometric(0.3, size=len(draws))
        for row, count in zip(draws, counts):
            if len(cells) >= n_cells:
                break
            cells.setdefault(tuple(int(v) for v in row), float(count))
    return SparseCountTensor(schema, cells)


def time_backend(tensor: SparseCountTensor, backend: str, workers: int,
                 args: argparse.Namespace) -> tuple[float, float]:
    config = TrainConfig(
        d=args.d,
        negatives=args.negatives,
        epochs=args.epochs,
        eta0=args.eta0,
        seed=args.seed,
        min_count=1,
        backend=backend,
        workers=workers,
    )
    history: list = []
    start = time.perf_counter()
    sgd_train(tensor, config, history)
    elapsed = time.perf_counter() - start
    loss_sum, visits = history[-1]
    return elapsed, loss_sum / visits


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--targets", type=int, default=2000)
    parser.add_argument("--contexts", type=int, default=2000)
    parser.add_argument("--features", type=int, default=16,
                        help="size of the one feature mode; 0 for plain skip-gram")
    parser.add_argument("--records", type=int, default=100_000,
                        help="number of nonzero cells")
    parser.add_argument("--d", type=int, default=100)
    parser.add_argument("--negatives", type=int, default=15)
    parser.add_argument("--epochs", type=int, default=3)
    parser.add_argument("--eta0", type=float, default=0.01)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--workers", default="1",
                        help="comma-separated worker counts for the compiled kernel")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    tensor = build_tensor(args.targets, args.contexts, args.features,
                          args.records, args.seed)
    visits = len(tensor.cells) * args.epochs
    print(f"tensor: {len(tensor.cells)} cells, mass {tensor.total_mass():.0f}, "
          f"d={args.d}, {args.epochs} epochs, {args.negatives} negatives")

    rows = []
    numpy_time, loss = time_backend(tensor, "numpy", 1, args)
    rows.append(("numpy", 1, numpy_time, loss))
    if COMPILED:
        for workers in [int(w) for w in args.workers.split(",") if w]:
            fast_time, loss = time_backend(tensor, "fast", workers, args)
            rows.append(("fast", workers, fast_time, loss))
    else:
        print("compiled kernel not available; timing the numpy fallback only")

    print(f"{'backend':<8} {'workers':>7} {'seconds':>9} {'visits/s':>10} "
          f"{'mean loss':>10}")
    for backend, workers, elapsed, loss in rows:
        print(f"{backend:<8} {workers:>7} {elapsed:>9.2f} "
              f"{visits / elapsed:>10.0f} {loss:>10.4f}")
    if COMPILED and len(rows) > 1:
        print(f"speedup (fast, 1 worker vs numpy): {numpy_time / rows[1][2]:.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
