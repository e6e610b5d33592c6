"""Command-line pipeline: extract, train, eval, knn, report.

Options resolve in three layers: built-in defaults, then a flat key=value
config file (--config), then explicit command-line flags.  Every run writes
the fully resolved options back into its output directory as ``run.cfg``,
which is itself a valid config file, so any run can be replayed from its
outputs.  Outputs contain no timestamps: rerunning a subcommand with the
same inputs and seed produces byte-identical files.

Failures print a single machine-parseable line to stderr:
``framevec: error: category=<category>: <message>`` and exit nonzero
(2 for usage errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .corpus import (
    CorpusFormatError,
    ReadStats,
    build_vocab,
    iter_tokens,
    iter_trigger_heads,
    read_corpus,
)
from .extract import ExtractStats, extract_frames, extract_windowed
from .factorizer import (
    EmbeddingFormatError,
    TrainConfig,
    TrainDivergedError,
    load_embeddings,
    save_embeddings,
    sgd_train,
)
from .factorizer import train as _train_mod
from .neighbors import knn
from .qvec import RIDGE, qvec_cca
from .report import (
    REPORT_COLUMNS,
    format_plot_csv,
    format_report_row,
    parse_report,
    relative_change,
    report_header,
)
from .spr import OracleBuildStats, SprFormatError, SprReadStats, build_oracle, read_spr_tsv
from .tensor import (
    CollapseStats,
    ModeRole,
    SchemaError,
    SparseCountTensor,
    TensorFormatError,
    collapse_frames,
    load_tensor,
    save_tensor,
)

log = logging.getLogger(__name__)

EXTRACT_KINDS = ("window", "window_signed", "frames")
PREDICT_TARGETS = ("filler", "pb")
BACKENDS = ("auto", "fast", "numpy")

# canonical ordering of ablation keys; ids join kept keys with "+"
ABLATION_KEYS = ("sep", "fn-frame", "fn-role", "pb", "filler")

_REQUIRED = object()


class UsageError(Exception):
    """Bad flags, bad config keys, or inconsistent option combinations."""


# ---------------------------------------------------------------- options

def _conv_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"expected an integer, got {text!r}") from None


def _conv_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"expected a number, got {text!r}") from None


def _conv_bool(text: str) -> bool:
    if text in ("true", "1", "yes"):
        return True
    if text in ("false", "0", "no"):
        return False
    raise UsageError(f"expected true/false, got {text!r}")


def _conv_list(text: str) -> list[str]:
    return [part for part in text.split(",") if part]


def _conv_choice(allowed: tuple[str, ...]):
    def conv(text: str) -> str:
        if text not in allowed:
            raise UsageError(f"expected one of {', '.join(allowed)}; got {text!r}")
        return text

    return conv


def _read_config_file(path) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


_SPECS: dict[str, dict] = {
    "extract": {
        "corpus": (_conv_list, _REQUIRED),
        "kind": (_conv_choice(EXTRACT_KINDS), "window"),
        "threshold": (_conv_int, 1),
        "window": (_conv_int, 2),
        "collapse": (_conv_bool, False),
        "out": (str, _REQUIRED),
    },
    "train": {
        "tensor": (str, _REQUIRED),
        "out": (str, _REQUIRED),
        "predict": (_conv_choice(PREDICT_TARGETS), "filler"),
        "ablate": (str, "none"),
        "model_id": (str, None),
        "d": (_conv_int, 100),
        "negatives": (_conv_int, 15),
        "epochs": (_conv_int, 5),
        "eta0": (_conv_float, 0.025),
        "gamma": (_conv_float, 0.75),
        "seed": (_conv_int, 1),
        "min_count": (_conv_int, 100),
        "backend": (_conv_choice(BACKENDS), "auto"),
        "workers": (_conv_int, 1),
    },
    "eval": {
        "model": (str, _REQUIRED),
        "spr": (str, _REQUIRED),
        "out": (str, _REQUIRED),
        "baseline_w2v": (str, None),
        "baseline_3tensor": (str, None),
    },
    "knn": {
        "model": (str, _REQUIRED),
        "words": (_conv_list, _REQUIRED),
        "k": (_conv_int, 10),
        "out": (str, None),
    },
    "report": {
        "inputs": (_conv_list, _REQUIRED),
        "out": (str, None),
    },
}


def _resolve_options(command: str, args: argparse.Namespace, file_cfg: dict) -> dict:
    table = _SPECS[command]
    allowed = set(table) | {"command"}
    unknown = sorted(k for k in file_cfg if k not in allowed)
    if unknown:
        raise UsageError(
            f"unknown config keys for {command}: {', '.join(unknown)}"
        )
    if "command" in file_cfg and file_cfg["command"] != command:
        raise UsageError(
            f"config file is for {file_cfg['command']!r}, not {command!r}"
        )
    resolved = {}
    for key, (conv, default) in table.items():
        cli_value = getattr(args, key, None)
        if cli_value is not None and cli_value != []:
            resolved[key] = cli_value
        elif key in file_cfg:
            resolved[key] = conv(file_cfg[key])
        elif default is _REQUIRED:
            raise UsageError(f"{command}: missing required option --{key.replace('_', '-')}")
        else:
            resolved[key] = default
    return resolved


def _cfg_text(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_cfg(outdir, command: str, options: dict) -> None:
    lines = [f"command={command}"]
    for key in sorted(options):
        if options[key] is None:
            continue
        lines.append(f"{key}={_cfg_text(options[key])}")
    with open(os.path.join(outdir, "run.cfg"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt_stat(value) -> str:
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_stats(outdir, rows: list[tuple[str, str, object]]) -> None:
    lines = ["\t".join((kind, name, _fmt_stat(value))) for kind, name, value in rows]
    with open(os.path.join(outdir, "stats.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_json(path, payload: dict) -> None:
    _write_text(path, json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- extract

def cmd_extract(args: argparse.Namespace, file_cfg: dict) -> int:
    opts = _resolve_options("extract", args, file_cfg)
    if opts["threshold"] < 1:
        raise UsageError("threshold must be >= 1")
    if opts["window"] < 1:
        raise UsageError("window must be >= 1")
    if opts["collapse"] and opts["kind"] != "frames":
        raise UsageError("collapse only applies to kind=frames")
    outdir = opts["out"]
    os.makedirs(outdir, exist_ok=True)

    read_stats = ReadStats()
    sentences = []
    for path in opts["corpus"]:
        sentences.extend(read_corpus(path, read_stats))

    rows: list[tuple[str, str, object]] = [
        ("corpus", "lines", read_stats.lines),
        ("corpus", "sentences", read_stats.sentences),
        ("corpus", "malformed_lines", read_stats.malformed),
    ]
    if opts["kind"] in ("window", "window_signed"):
        vocab = build_vocab(sentences, iter_tokens, opts["threshold"])
        tensor = extract_windowed(
            sentences, vocab, window=opts["window"], signed=opts["kind"] == "window_signed"
        )
    else:
        trigger_vocab = build_vocab(sentences, iter_trigger_heads, opts["threshold"])
        extract_stats = ExtractStats()
        tensor = extract_frames(sentences, trigger_vocab, extract_stats)
        rows += [
            ("extract", "annotations", extract_stats.annotations),
            ("extract", "roleless_annotations", extract_stats.roleless_annotations),
            ("extract", "records", extract_stats.records),
            ("extract", "skipped_oov_trigger", extract_stats.skipped_oov_trigger),
        ]
        for parser_id in sorted(extract_stats.parser_records):
            rows.append(
                ("extract_parser", parser_id, extract_stats.parser_records[parser_id])
            )
        if opts["collapse"]:
            collapse_stats = CollapseStats()
            tensor = collapse_frames(tensor, collapse_stats)
            rows += [
                ("collapse", "cells_in", collapse_stats.cells_in),
                ("collapse", "cells_out", collapse_stats.cells_out),
                ("collapse", "dual_assert_cells", collapse_stats.dual_assert_cells),
                ("collapse", "dual_assert_mass", collapse_stats.dual_assert_mass),
            ]

    if not tensor.cells:
        log.warning("extraction produced an empty tensor")
    for mode in tensor.schema:
        rows.append(("mode_size", mode.name, len(mode.vocab)))
    rows.append(("tensor", "cells", len(tensor.cells)))
    rows.append(("tensor", "total_mass", tensor.total_mass()))

    save_tensor(tensor, os.path.join(outdir, "tensor.txt"))
    _write_stats(outdir, rows)
    _write_cfg(outdir, "extract", opts)
    log.info(
        "extracted %d cells (mass %.0f) into %s",
        len(tensor.cells),
        tensor.total_mass(),
        outdir,
    )
    return 0


# ---------------------------------------------------------------- train

_ABLATION_FIXED_MODES = {
    "fn-frame": "fn_frame",
    "fn-role": "fn_role",
    "pb": "pb_frame_role",
    "filler": "filler",
}


def _parse_ablation(raw: str) -> list[str]:
    text = raw.strip()
    if text in ("", "none"):
        return []
    keys = [k.strip() for k in text.split(",") if k.strip()]
    for key in keys:
        if key not in ABLATION_KEYS:
            raise UsageError(
                f"unknown ablation key {key!r}; valid keys: {', '.join(ABLATION_KEYS)} or none"
            )
    if len(set(keys)) != len(keys):
        raise UsageError("duplicate ablation keys")
    return [k for k in ABLATION_KEYS if k in keys]


def _ablation_id(keys: list[str]) -> str:
    return "+".join(keys) if keys else "none"


def _map_ablation_modes(keys: list[str], schema) -> list[str]:
    feature_names = [schema.modes[i].name for i in schema.feature_indices()]
    available = set(feature_names)
    kept = []
    for key in keys:
        if key == "sep":
            name = "separation" if "separation" in available else "offset"
        else:
            name = _ABLATION_FIXED_MODES[key]
        if name not in available:
            raise UsageError(
                f"ablation key {key!r} needs feature mode {name!r}; "
                f"available feature modes: {', '.join(feature_names) or '(none)'}"
            )
        kept.append(name)
    return kept


def cmd_train(args: argparse.Namespace, file_cfg: dict) -> int:
    opts = _resolve_options("train", args, file_cfg)
    outdir = opts["out"]
    tensor = load_tensor(opts["tensor"])
    predict = opts["predict"]
    keys = _parse_ablation(opts["ablate"])
    if predict == "filler" and "filler" in keys:
        raise UsageError("predict=filler: the filler is the prediction target, not a feature")
    if predict == "pb" and "pb" in keys:
        raise UsageError("predict=pb: pb_frame_role is the prediction target, not a feature")

    if predict == "pb":
        if "pb_frame_role" not in tensor.schema:
            raise UsageError(
                "predict=pb needs a collapsed frame tensor with a pb_frame_role mode"
            )
        schema = tensor.schema.with_roles(
            tensor.schema.modes[tensor.schema.target_index].name, "pb_frame_role"
        )
        tensor = SparseCountTensor(schema, tensor.cells)

    kept_modes = _map_ablation_modes(keys, tensor.schema)
    drop = [
        tensor.schema.modes[i].name
        for i in tensor.schema.feature_indices()
        if tensor.schema.modes[i].name not in kept_modes
    ]
    tensor = tensor.marginalize(drop)

    config = TrainConfig(
        d=opts["d"],
        negatives=opts["negatives"],
        epochs=opts["epochs"],
        eta0=opts["eta0"],
        gamma=opts["gamma"],
        seed=opts["seed"],
        min_count=opts["min_count"],
        backend=opts["backend"],
        workers=opts["workers"],
    )
    history: list = []
    embeddings = sgd_train(tensor, config, history)

    ablation = _ablation_id(keys)
    model_id = opts["model_id"] or f"{predict}:{ablation}"
    kernel = _train_mod.resolve_backend(config.backend)
    backend_used = "fast" if kernel is not _train_mod._sgd_numpy else "numpy"
    os.makedirs(outdir, exist_ok=True)
    save_embeddings(
        embeddings,
        outdir,
        config=config,
        model_id=model_id,
        extra={
            "ablation": ablation,
            "predict": predict,
            "backend_used": backend_used,
            "epoch_mean_loss": [loss / visits for loss, visits in history],
        },
    )
    _write_cfg(outdir, "train", opts)
    log.info("trained %s (%s) into %s", model_id, backend_used, outdir)
    return 0


# ---------------------------------------------------------------- eval

def _lowered_rows(embeddings) -> dict[str, int]:
    # first id wins for case-colliding labels (ids are ordered by count)
    rows: dict[str, int] = {}
    for i, label in enumerate(embeddings.target_mode.vocab.entries):
        rows.setdefault(label.lower(), i)
    return rows


def cmd_eval(args: argparse.Namespace, file_cfg: dict) -> int:
    opts = _resolve_options("eval", args, file_cfg)
    outdir = opts["out"]
    embeddings, manifest = load_embeddings(opts["model"])

    spr_stats = SprReadStats()
    judgments = read_spr_tsv(opts["spr"], spr_stats)
    oracle_stats = OracleBuildStats()
    oracle = build_oracle(judgments, oracle_stats)

    sets = {"model": embeddings}
    if opts["baseline_w2v"]:
        sets["baseline_w2v"] = load_embeddings(opts["baseline_w2v"])[0]
    if opts["baseline_3tensor"]:
        sets["baseline_3tensor"] = load_embeddings(opts["baseline_3tensor"])[0]

    row_maps = {name: _lowered_rows(emb) for name, emb in sets.items()}
    overlap = set(oracle.vectors)
    for rows in row_maps.values():
        overlap &= set(rows)
    overlap = sorted(overlap)
    if not overlap:
        raise ValueError(
            "no vocabulary overlap between the embeddings and the oracle predicates"
        )

    oracle_matrix = oracle.matrix(overlap)
    scores = {}
    for name, emb in sets.items():
        matrix = emb.target_matrix()[[row_maps[name][w] for w in overlap]]
        scores[name] = qvec_cca(matrix, oracle_matrix)

    model_id = manifest.get("model_id", "model")
    ablation = manifest.get("ablation", "none")
    row = format_report_row(
        model_id,
        scores["model"],
        len(overlap),
        scores.get("baseline_w2v"),
        scores.get("baseline_3tensor"),
    )
    plot_rows = []
    if "baseline_w2v" in scores:
        plot_rows.append(
            (model_id, ablation, "w2v", relative_change(scores["model"], scores["baseline_w2v"]))
        )
    if "baseline_3tensor" in scores:
        plot_rows.append(
            (model_id, ablation, "3tensor", relative_change(scores["model"], scores["baseline_3tensor"]))
        )

    os.makedirs(outdir, exist_ok=True)
    _write_text(
        os.path.join(outdir, "report_row.tsv"), report_header() + "\n" + row + "\n"
    )
    _write_text(os.path.join(outdir, "plot.csv"), format_plot_csv(plot_rows))
    _write_json(
        os.path.join(outdir, "eval_meta.json"),
        {
            "oracle_normalization": "l1",
            "score": "first_canonical_correlation",
            "cca_ridge": RIDGE,
            "overlap_n": len(overlap),
            "spr_judgments": spr_stats.judgments,
            "spr_malformed": spr_stats.malformed,
            "oracle_predicates": oracle_stats.predicates_kept,
            "oracle_all_zero_excluded": oracle_stats.all_zero_excluded,
            "scores": scores,
        },
    )
    _write_cfg(outdir, "eval", opts)
    log.info("qvec=%.6f on %d overlap words", scores["model"], len(overlap))
    return 0


# ---------------------------------------------------------------- knn

def cmd_knn(args: argparse.Namespace, file_cfg: dict) -> int:
    opts = _resolve_options("knn", args, file_cfg)
    embeddings, _ = load_embeddings(opts["model"])
    vocab = embeddings.target_mode.vocab
    matrix = embeddings.target_matrix()
    lines = ["word\tneighbor\tcosine"]
    for word in opts["words"]:
        for neighbor, sim in knn(vocab, matrix, word, opts["k"]):
            lines.append(f"{word}\t{neighbor}\t{sim:.6f}")
    text = "\n".join(lines) + "\n"
    if opts["out"]:
        _write_text(opts["out"], text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- report

def cmd_report(args: argparse.Namespace, file_cfg: dict) -> int:
    opts = _resolve_options("report", args, file_cfg)
    out_rows = []
    for path in opts["inputs"]:
        with open(path, encoding="utf-8") as fh:
            for row in parse_report(fh.read()):
                out_rows.append("\t".join(row[col] for col in REPORT_COLUMNS))
    text = report_header() + "\n" + "".join(r + "\n" for r in out_rows)
    if opts["out"]:
        _write_text(opts["out"], text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- wiring

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="framevec",
        description="Cooccurrence tensor extraction, embedding training, and evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"framevec {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key=value config file; flags override it")
        p.set_defaults(func=func)
        return p

    p = add("extract", cmd_extract, "build a cooccurrence tensor from a corpus")
    p.add_argument("--corpus", action="append", metavar="PATH",
                   help="corpus file; repeat for more")
    p.add_argument("--kind", choices=EXTRACT_KINDS)
    p.add_argument("--threshold", type=int, metavar="T",
                   help="vocabulary occurrence floor (default 1)")
    p.add_argument("--window", type=int, help="window radius for window kinds (default 2)")
    p.add_argument("--collapse", action=argparse.BooleanOptionalAction, default=None,
                   help="collapse the 9-mode frame tensor to 6 modes")
    p.add_argument("--out", metavar="DIR")

    p = add("train", cmd_train, "factorize a tensor into per-mode embeddings")
    p.add_argument("--tensor", metavar="FILE")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--predict", choices=PREDICT_TARGETS,
                   help="context mode to predict (default filler)")
    p.add_argument("--ablate", metavar="KEYS",
                   help="comma-separated feature modes to keep "
                        f"({', '.join(ABLATION_KEYS)}), or none")
    p.add_argument("--model-id", dest="model_id")
    p.add_argument("--d", type=int, help="embedding dimension (default 100)")
    p.add_argument("--negatives", type=int, help="noise samples per update (default 15)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--eta0", type=float, help="initial step size (default 0.025)")
    p.add_argument("--gamma", type=float, help="noise distribution exponent (default 0.75)")
    p.add_argument("--seed", type=int)
    p.add_argument("--min-count", dest="min_count", type=int,
                   help="training floor on target occurrences (default 100)")
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--workers", type=int,
                   help="parallel updates, compiled kernel only (default 1)")

    p = add("eval", cmd_eval, "score target embeddings against proto-role oracles")
    p.add_argument("--model", metavar="DIR")
    p.add_argument("--spr", metavar="FILE", help="proto-role judgment TSV")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--baseline-w2v", dest="baseline_w2v", metavar="DIR")
    p.add_argument("--baseline-3tensor", dest="baseline_3tensor", metavar="DIR")

    p = add("knn", cmd_knn, "print nearest neighbors of target words")
    p.add_argument("--model", metavar="DIR")
    p.add_argument("--words", type=_conv_list, metavar="W1,W2,...")
    p.add_argument("-k", type=int, help="neighbors per word (default 10)")
    p.add_argument("--out", metavar="FILE", help="write table here instead of stdout")

    p = add("report", cmd_report, "concatenate evaluation report rows")
    p.add_argument("inputs", nargs="*", default=None, metavar="ROW_FILE",
                   help="report_row.tsv files from eval runs")
    p.add_argument("--out", metavar="FILE")

    return parser


def _fail(category: str, exc: BaseException, code: int) -> int:
    message = str(exc) or exc.__class__.__name__
    print(f"framevec: error: category={category}: {message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("usage", exc, 2)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        file_cfg = _read_config_file(args.config) if getattr(args, "config", None) else {}
        return args.func(args, file_cfg)
    except UsageError as exc:
        return _fail("usage", exc, 2)
    except (CorpusFormatError, TensorFormatError, EmbeddingFormatError, SprFormatError) as exc:
        return _fail("format", exc, 1)
    except SchemaError as exc:
        return _fail("schema", exc, 1)
    except TrainDivergedError as exc:
        return _fail("train", exc, 1)
    except OSError as exc:
        return _fail("io", exc, 1)
    except (KeyError, ValueError) as exc:
        return _fail("runtime", exc, 1)


if __name__ == "__main__":
    sys.exit(main())
